#pragma once

// MalGAN: a generator trained against a locally fitted substitute of the
// target, where the substitute learns from the target's labels. Unlike the
// query-free GAN every labeling goes through the counted oracle.

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gevd/detectors/blackbox.hpp"
#include "gevd/error.hpp"
#include "gevd/gan/gan.hpp"
#include "gevd/nncore/adam.hpp"
#include "gevd/nncore/checkpoint.hpp"
#include "gevd/nncore/mlp.hpp"
#include "gevd/nncore/tape.hpp"

namespace gevd {

struct MalganConfig {
    std::size_t max_steps = 300;
    std::size_t batch_size = 64;
    AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
    std::uint64_t query_budget = 50000;
    /// Stop once the target's detection rate on the probe batch drops below this.
    double target_detection = 0.05;
    std::size_t probe_every = 10;
    std::size_t probe_size = 64;
    std::uint64_t seed = 1;

    void validate() const {
        if (batch_size == 0 || probe_size == 0 || probe_every == 0) throw ConfigError("malgan config: zero batch/probe size");
        if (!(adam.learning_rate > 0.0)) throw ConfigError("malgan config: learning rate must be positive");
        if (query_budget == 0) throw ConfigError("malgan config: query budget must be positive");
    }
};

struct MalganMeta {
    std::uint64_t seed = 0;
    std::size_t steps = 0;
    std::string stop_reason = "step_cap"; // step_cap | target | budget
    double probe_detection = 1.0;
    bool operator==(const MalganMeta&) const = default;
};

struct MalganModel {
    Mlp generator;
    Mlp substitute; // linear logit; P(malicious) = sigmoid(logit)
    GanPreset preset;
    std::uint64_t query_count = 0;
    MalganMeta meta;
    bool operator==(const MalganModel&) const = default;
};

inline Mlp build_substitute(const GanPreset& p, Rng& rng) { return build_critic(p, rng); }

/// Same post-processing as the GAN attack.
inline Tensor malgan_generate(const MalganModel& model, const Tensor& m, const Tensor& z) {
    return postprocess(model.preset, m, generator_output(model.generator, model.preset, m, z));
}

namespace detail {

inline Tensor labels_tensor(const std::vector<Label>& labels) {
    Tensor t = Tensor::matrix(labels.size(), 1);
    for (std::size_t i = 0; i < labels.size(); ++i) t[i] = labels[i] == Label::malicious ? 1.0 : 0.0;
    return t;
}

inline double malicious_fraction(const std::vector<Label>& labels) {
    double n = 0;
    for (Label l : labels) n += l == Label::malicious;
    return labels.empty() ? 0.0 : n / static_cast<double>(labels.size());
}

} // namespace detail

inline MalganModel train_malgan(const Tensor& malicious, const Tensor& benign, LabelOracle& black_box,
                                const GanPreset& preset, const MalganConfig& cfg) {
    preset.validate();
    cfg.validate();
    if (benign.rows() == 0 || malicious.rows() == 0) throw ContractError("train_malgan: empty benign or malicious set");
    check_features(preset, benign, "train_malgan(benign)");
    check_features(preset, malicious, "train_malgan(malicious)");
    if (black_box.input_dim() != preset.feature_dim) {
        throw DimensionError("train_malgan: black box expects dim " + std::to_string(black_box.input_dim()));
    }

    Rng rng(cfg.seed);
    MalganModel model;
    model.preset = preset;
    model.generator = build_generator(preset, rng);
    model.substitute = build_substitute(preset, rng);
    model.meta.seed = cfg.seed;
    const std::uint64_t start_queries = black_box.query_count();
    auto used = [&] { return black_box.query_count() - start_queries; };

    // Fixed probe: the first probe_size malicious rows with noise drawn once.
    const std::size_t probe_n = std::min(cfg.probe_size, malicious.rows());
    Tensor probe_m = Tensor::matrix(probe_n, preset.feature_dim);
    for (std::size_t r = 0; r < probe_n; ++r) {
        std::copy(malicious.row_span(r).begin(), malicious.row_span(r).end(), probe_m.row_span(r).begin());
    }
    Tensor probe_z = sample_noise(preset.noise_dim, probe_n, rng);
    auto probe = [&]() -> bool {
        if (used() + probe_n > cfg.query_budget) {
            model.meta.stop_reason = "budget";
            return true;
        }
        model.meta.probe_detection =
            detail::malicious_fraction(black_box.query_batch(malgan_generate(model, probe_m, probe_z)));
        if (model.meta.probe_detection < cfg.target_detection) {
            model.meta.stop_reason = "target";
            return true;
        }
        return false;
    };

    AdamState sub_state, gen_state;
    const std::size_t n = cfg.batch_size;
    double last_sub = 0.0, last_gen = 0.0;
    bool stopped = probe();
    for (std::size_t step = 1; !stopped && step <= cfg.max_steps; ++step) {
        if (used() + 2 * n > cfg.query_budget) {
            model.meta.stop_reason = "budget";
            break;
        }
        Tensor b = detail::sample_minibatch(benign, n, rng);
        Tensor m = detail::sample_minibatch(malicious, n, rng);
        Tensor z = sample_noise(preset.noise_dim, n, rng);
        DropoutMasks gen_masks = sample_dropout(model.generator, n, rng);
        DropoutMasks sub_masks = sample_dropout(model.substitute, 2 * n, rng);
        DropoutMasks sub_masks_fake = sample_dropout(model.substitute, n, rng);

        try {
            // (a) fit the substitute to the target's labels on real + fake rows
            Tensor fake = malgan_generate(model, m, z);
            Tensor rows = Tensor::matrix(2 * n, preset.feature_dim);
            for (std::size_t r = 0; r < n; ++r) {
                std::copy(b.row_span(r).begin(), b.row_span(r).end(), rows.row_span(r).begin());
                std::copy(fake.row_span(r).begin(), fake.row_span(r).end(), rows.row_span(n + r).begin());
            }
            Tensor y = detail::labels_tensor(black_box.query_batch(rows));
            {
                Tape tape;
                BoundMlp subst = bind(tape, model.substitute, true);
                Var logit = forward(subst, tape.constant(rows), &sub_masks);
                Var loss = mean_all(sub(softplus(logit), mul(tape.constant(y), logit)));
                std::vector<Tensor> grads = detail::values_of(tape.grad(loss, subst.parameters()));
                auto refs = model.substitute.parameters();
                adam_step(refs, grads, sub_state, cfg.adam);
                last_sub = loss.value()[0];
            }
            // (b) push the substitute's malicious probability on fakes down
            {
                Tape tape;
                BoundMlp gen = bind(tape, model.generator, true);
                BoundMlp subst = bind(tape, model.substitute, false);
                Var adv = detail::generator_path(preset, gen, tape, m, z, &gen_masks);
                Var logit = forward(subst, adv, &sub_masks_fake);
                // log P(malicious) = -softplus(-logit)
                Var loss = scale(mean_all(softplus(scale(logit, -1.0))), -1.0);
                std::vector<Tensor> grads = detail::values_of(tape.grad(loss, gen.parameters()));
                auto refs = model.generator.parameters();
                adam_step(refs, grads, gen_state, cfg.adam);
                last_gen = loss.value()[0];
            }
        } catch (const NumericError& e) {
            std::ostringstream os;
            os << "malgan training diverged at step " << step << " (substitute=" << last_sub
               << ", generator=" << last_gen << "): " << e.what();
            throw TrainingError(os.str(), step, last_sub, last_gen);
        }
        model.meta.steps = step;
        if (step % cfg.probe_every == 0 || step == cfg.max_steps) stopped = probe();
    }
    model.query_count = used();
    return model;
}

// ---------------------------------------------------------------------------

inline std::vector<std::uint8_t> encode_malgan(const MalganModel& model) {
    Checkpoint ckpt;
    ckpt.meta = nlohmann::json{{"type", "malgan"},
                               {"preset", preset_to_json(model.preset)},
                               {"query_count", model.query_count},
                               {"training", {{"seed", model.meta.seed},
                                             {"steps", model.meta.steps},
                                             {"stop_reason", model.meta.stop_reason},
                                             {"probe_detection", model.meta.probe_detection}}}}
                    .dump();
    ckpt.nets = {model.generator, model.substitute};
    return encode_checkpoint(ckpt);
}

inline MalganModel decode_malgan(const std::vector<std::uint8_t>& bytes) {
    Checkpoint ckpt = decode_checkpoint(bytes);
    auto meta = nlohmann::json::parse(ckpt.meta);
    if (meta.value("type", "") != "malgan" || ckpt.nets.size() != 2) throw FormatError("checkpoint is not a MalGAN model");
    MalganModel m;
    m.preset = preset_from_json(meta.at("preset"));
    m.query_count = meta.at("query_count").get<std::uint64_t>();
    const auto& t = meta.at("training");
    m.meta = {t.at("seed").get<std::uint64_t>(), t.at("steps").get<std::size_t>(),
              t.at("stop_reason").get<std::string>(), t.at("probe_detection").get<double>()};
    m.generator = std::move(ckpt.nets[0]);
    m.substitute = std::move(ckpt.nets[1]);
    if (m.generator.in_dim() != m.preset.feature_dim + m.preset.noise_dim || m.substitute.in_dim() != m.preset.feature_dim) {
        throw FormatError("MalGAN checkpoint networks do not match their preset");
    }
    return m;
}

} // namespace gevd
