#pragma once

// Conditional WGAN-GP over static feature vectors.
//
// The generator sees [m | z] (malicious features and uniform noise) and
// emits a candidate feature vector; the critic scores "benignness" with a
// linear head. Binary feature families only ever gain features: the
// adversarial vector is m OR (o > 0.5), and training uses max(m, o) so
// gradients flow through the OR.

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gevd/error.hpp"
#include "gevd/gan/preset.hpp"
#include "gevd/nncore/adam.hpp"
#include "gevd/nncore/checkpoint.hpp"
#include "gevd/nncore/mlp.hpp"
#include "gevd/nncore/rng.hpp"
#include "gevd/nncore/tape.hpp"

namespace gevd {

struct TrainingMeta {
    std::uint64_t seed = 0;
    std::size_t steps = 0;
    std::size_t generator_updates = 0;
    bool early_stopped = false;
    bool operator==(const TrainingMeta&) const = default;
};

struct GanModel {
    Mlp generator;
    Mlp critic;
    GanPreset preset;
    TrainingMeta meta;

    bool operator==(const GanModel&) const = default;
};

struct TrainingConfig {
    double lambda_gp = 10.0;
    std::size_t n_generator = 5;
    std::size_t batch_size = 64;
    std::size_t num_epochs = 100;
    /// Overrides |B| * num_epochs / batch_size when nonzero.
    std::size_t max_steps = 0;
    AdamConfig adam{1e-4, 0.0, 0.9, 1e-8};
    std::uint64_t seed = 1;
    bool early_stop = true;
    std::size_t early_stop_window = 100;
    double early_stop_tolerance = 1e-4;
    std::size_t early_stop_patience = 10;

    void validate() const {
        if (!(lambda_gp > 0.0)) throw ConfigError("training config: lambda_gp must be positive");
        if (n_generator < 1) throw ConfigError("training config: n_generator must be >= 1");
        if (batch_size < 1) throw ConfigError("training config: batch_size must be >= 1");
        if (!(adam.learning_rate > 0.0)) throw ConfigError("training config: learning rate must be positive");
    }

    [[nodiscard]] std::size_t total_steps(std::size_t benign_count) const {
        if (max_steps > 0) return max_steps;
        return std::max<std::size_t>(1, benign_count * num_epochs / batch_size);
    }
};

/// One row of the training-metric stream.
struct TrainingMetrics {
    std::size_t step = 0;
    double critic_loss = 0.0;
    double generator_loss = 0.0; // last computed value
    double gradient_penalty = 0.0;
};

using MetricsSink = std::function<void(const TrainingMetrics&)>;

/// Raised when a loss turns non-finite; carries the step and last losses.
class TrainingError : public Error {
public:
    TrainingError(const std::string& what, std::size_t step, double critic_loss, double generator_loss)
        : Error(what), step(step), critic_loss(critic_loss), generator_loss(generator_loss) {}
    std::size_t step;
    double critic_loss;
    double generator_loss;
};

// ---------------------------------------------------------------------------

/// count x Z noise, i.i.d. uniform on [0,1).
inline Tensor sample_noise(std::size_t noise_dim, std::size_t count, Rng& rng) {
    if (noise_dim == 0) throw ContractError("sample_noise: Z must be positive");
    Tensor z = Tensor::matrix(count, noise_dim);
    for (double& v : z.values()) v = unit_uniform(rng);
    return z;
}

inline Tensor as_batch(const Tensor& t) { return t.shape().size() == 1 ? t.reshaped({1, t.cols()}) : t; }

/// max(m, o) for binary m: o where m is 0, exactly 1 where m is 1.
inline Var smooth_g(const Var& o, const Tensor& m) {
    if (!o.value().same_shape(m)) throw DimensionError("smooth_g: m and o shapes differ");
    auto keep = std::make_shared<const Tensor>(detail::map_values(m, [](double v) { return v > 0.5 ? 0.0 : 1.0; }));
    return add_const(mask_mul(o, keep), detail::map_values(m, [](double v) { return v > 0.5 ? 1.0 : 0.0; }));
}

inline Tensor smooth_g(const Tensor& m, const Tensor& o) {
    if (!m.same_shape(o)) throw DimensionError("smooth_g: m and o shapes differ");
    Tensor out(o.shape());
    for (std::size_t i = 0; i < o.size(); ++i) out[i] = std::max(m[i], o[i]);
    return out;
}

inline void check_features(const GanPreset& preset, const Tensor& m, const char* where) {
    if (m.cols() != preset.feature_dim) {
        throw DimensionError(std::string(where) + ": feature vectors have " + std::to_string(m.cols()) +
                             " entries, preset " + to_string(preset.kind) + " expects " +
                             std::to_string(preset.feature_dim));
    }
}

/// Generator output o (softmax or sigmoid) in eval mode.
inline Tensor generator_output(const Mlp& generator, const GanPreset& preset, const Tensor& m, const Tensor& z) {
    Tensor mb = as_batch(m), zb = as_batch(z);
    check_features(preset, mb, "generate");
    if (zb.cols() != preset.noise_dim || zb.rows() != mb.rows()) {
        throw DimensionError("generate: noise batch " + zb.shape_string() + " does not fit features " +
                             mb.shape_string());
    }
    return forward(generator, concat_cols(mb, zb));
}

/// Turns raw generator output into the adversarial feature vector.
/// Byte histograms pass through; binary families become m OR (o > 0.5).
inline Tensor postprocess(const GanPreset& preset, const Tensor& m, const Tensor& o) {
    if (!preset.binary()) return o;
    Tensor mb = as_batch(m);
    Tensor out(o.shape());
    for (std::size_t i = 0; i < o.size(); ++i) out[i] = (mb[i] > 0.5 || o[i] > 0.5) ? 1.0 : 0.0;
    return out;
}

inline Tensor generate(const GanModel& model, const Tensor& m, const Tensor& z) {
    Tensor o = generator_output(model.generator, model.preset, m, z);
    return postprocess(model.preset, m, o);
}

// ---------------------------------------------------------------------------
// Losses

struct CriticLossTerms {
    Var total;
    Var wasserstein; // mean f(fake) - mean f(real)
    Var penalty;     // mean (||grad f(x_hat)|| - 1)^2, unweighted
};

/// L_D with explicit interpolation weights `eps` (n x 1).
inline CriticLossTerms critic_loss(Tape& tape, const BoundMlp& critic, const Var& real, const Var& fake,
                                   double lambda, const Tensor& eps, const DropoutMasks* masks = nullptr) {
    const Tensor& rv = real.value();
    const Tensor& fv = fake.value();
    if (rv.rows() == 0) throw ContractError("critic_loss: empty batch");
    if (!rv.same_shape(fv)) {
        throw DimensionError("critic_loss: real " + rv.shape_string() + " vs fake " + fv.shape_string());
    }
    if (eps.rows() != rv.rows() || eps.cols() != 1) throw DimensionError("critic_loss: eps must be (n x 1)");

    Tensor mixed(fv.shape());
    for (std::size_t r = 0; r < rv.rows(); ++r) {
        for (std::size_t c = 0; c < rv.cols(); ++c) {
            mixed.at(r, c) = eps[r] * rv.at(r, c) + (1.0 - eps[r]) * fv.at(r, c);
        }
    }
    Var x_hat = tape.variable(std::move(mixed));
    Var score_hat = sum_all(forward(critic, x_hat, masks));
    Var grad_hat = tape.grad(score_hat, x_hat);
    Var dev = add_scalar(sqrt(row_sq_norm(grad_hat)), -1.0);
    Var penalty = mean_all(mul(dev, dev));

    Var wasserstein = sub(mean_all(forward(critic, fake, masks)), mean_all(forward(critic, real, masks)));
    return {add(wasserstein, scale(penalty, lambda)), wasserstein, penalty};
}

/// L_D with per-sample eps ~ U[0,1) drawn from `rng`.
inline CriticLossTerms critic_loss(Tape& tape, const BoundMlp& critic, const Var& real, const Var& fake,
                                   double lambda, Rng& rng, const DropoutMasks* masks = nullptr) {
    Tensor eps = Tensor::matrix(real.value().rows(), 1);
    for (double& e : eps.values()) e = unit_uniform(rng);
    return critic_loss(tape, critic, real, fake, lambda, eps, masks);
}

/// L_G = mean critic score on the fakes.
inline Var generator_loss(const BoundMlp& critic, const Var& fake, const DropoutMasks* masks = nullptr) {
    if (fake.value().rows() == 0) throw ContractError("generator_loss: empty batch");
    return mean_all(forward(critic, fake, masks));
}

// ---------------------------------------------------------------------------
// Training

namespace detail {

inline Tensor sample_minibatch(const Tensor& set, std::size_t batch, Rng& rng) {
    Tensor out = Tensor::matrix(batch, set.cols());
    for (std::size_t i = 0; i < batch; ++i) {
        auto src = set.row_span(uniform_index(rng, set.rows()));
        std::copy(src.begin(), src.end(), out.row_span(i).begin());
    }
    return out;
}

/// Generator path used during training: raw output for byte histograms,
/// smooth_g for binary families.
inline Var generator_path(const GanPreset& preset, const BoundMlp& gen, Tape& tape, const Tensor& m,
                          const Tensor& z, const DropoutMasks* masks) {
    Var o = forward(gen, tape.constant(concat_cols(m, z)), masks);
    return preset.binary() ? smooth_g(o, m) : o;
}

/// Moving-average plateau detector on |L_D|.
class PlateauDetector {
public:
    PlateauDetector(std::size_t window, double tolerance, std::size_t patience)
        : window_(window), tolerance_(tolerance), patience_(patience) {}

    bool push(double critic_loss) {
        sum_ += std::abs(critic_loss);
        if (++count_ < window_) return false;
        double avg = sum_ / static_cast<double>(window_);
        sum_ = 0.0;
        count_ = 0;
        if (has_previous_ && std::abs(avg - previous_) < tolerance_) {
            ++flat_;
        } else {
            flat_ = 0;
        }
        previous_ = avg;
        has_previous_ = true;
        return flat_ >= patience_;
    }

private:
    std::size_t window_;
    double tolerance_;
    std::size_t patience_;
    double sum_ = 0.0;
    std::size_t count_ = 0;
    std::size_t flat_ = 0;
    double previous_ = 0.0;
    bool has_previous_ = false;
};

inline std::vector<Tensor> values_of(const std::vector<Var>& vars) {
    std::vector<Tensor> out;
    out.reserve(vars.size());
    for (const Var& v : vars) out.push_back(v.value());
    return out;
}

} // namespace detail

/// Freshly initialized networks, drawn from the training seed exactly as
/// train() draws them.
inline GanModel init_model(const GanPreset& preset, Rng& rng) {
    GanModel model;
    model.preset = preset;
    model.generator = build_generator(preset, rng);
    model.critic = build_critic(preset, rng);
    return model;
}

/// Trains a generator/critic pair. Benign rows are the critic's "real"
/// samples; malicious rows condition the generator. The target detector
/// is never consulted.
inline GanModel train(const Tensor& benign, const Tensor& malicious, const GanPreset& preset,
                      const TrainingConfig& cfg, const MetricsSink& sink = {}) {
    preset.validate();
    cfg.validate();
    if (benign.rows() == 0 || malicious.rows() == 0) throw ContractError("train: empty benign or malicious set");
    check_features(preset, benign, "train(benign)");
    check_features(preset, malicious, "train(malicious)");

    Rng rng(cfg.seed);
    GanModel model = init_model(preset, rng);
    model.meta.seed = cfg.seed;

    AdamState critic_state, generator_state;
    detail::PlateauDetector plateau(cfg.early_stop_window, cfg.early_stop_tolerance, cfg.early_stop_patience);
    std::size_t max_steps = cfg.total_steps(benign.rows());
    double last_critic = 0.0, last_generator = 0.0;

    for (std::size_t step = 1; step <= max_steps; ++step) {
        Tensor b = detail::sample_minibatch(benign, cfg.batch_size, rng);
        Tensor m = detail::sample_minibatch(malicious, cfg.batch_size, rng);
        Tensor z = sample_noise(preset.noise_dim, cfg.batch_size, rng);
        DropoutMasks gen_masks = sample_dropout(model.generator, cfg.batch_size, rng);
        DropoutMasks critic_masks = sample_dropout(model.critic, cfg.batch_size, rng);
        double penalty_value = 0.0;

        try {
            {
                Tape tape;
                BoundMlp gen = bind(tape, model.generator, false);
                BoundMlp critic = bind(tape, model.critic, true);
                Var fake = detail::generator_path(preset, gen, tape, m, z, &gen_masks);
                CriticLossTerms terms =
                    critic_loss(tape, critic, tape.constant(b), fake, cfg.lambda_gp, rng, &critic_masks);
                std::vector<Var> params = critic.parameters();
                std::vector<Tensor> grads = detail::values_of(tape.grad(terms.total, params));
                auto refs = model.critic.parameters();
                adam_step(refs, grads, critic_state, cfg.adam);
                last_critic = terms.total.value()[0];
                penalty_value = terms.penalty.value()[0];
            }
            if (step % cfg.n_generator == 0) {
                Tape tape;
                BoundMlp gen = bind(tape, model.generator, true);
                BoundMlp critic = bind(tape, model.critic, false);
                Var fake = detail::generator_path(preset, gen, tape, m, z, &gen_masks);
                Var lg = generator_loss(critic, fake, &critic_masks);
                // the generator climbs the critic's benignness score
                std::vector<Var> params = gen.parameters();
                std::vector<Tensor> grads = detail::values_of(tape.grad(scale(lg, -1.0), params));
                auto refs = model.generator.parameters();
                adam_step(refs, grads, generator_state, cfg.adam);
                last_generator = lg.value()[0];
                ++model.meta.generator_updates;
            }
        } catch (const NumericError& e) {
            std::ostringstream os;
            os << "training diverged at step " << step << " (L_D=" << last_critic << ", L_G=" << last_generator
               << "): " << e.what();
            throw TrainingError(os.str(), step, last_critic, last_generator);
        }

        model.meta.steps = step;
        if (sink) sink({step, last_critic, last_generator, penalty_value});
        if (cfg.early_stop && plateau.push(last_critic)) {
            model.meta.early_stopped = true;
            break;
        }
    }
    return model;
}

/// Mean critic score (eval mode) over a batch.
inline double mean_critic_score(const Mlp& critic, const Tensor& batch) {
    Tensor s = forward(critic, as_batch(batch));
    return s.sum() / static_cast<double>(s.size());
}

// ---------------------------------------------------------------------------
// Persistence: the GEVD1 container with the preset in the metadata blob.

inline std::vector<std::uint8_t> encode_gan(const GanModel& model) {
    nlohmann::json meta = {{"type", "gan"},
                           {"preset", preset_to_json(model.preset)},
                           {"training", {{"seed", model.meta.seed},
                                         {"steps", model.meta.steps},
                                         {"generator_updates", model.meta.generator_updates},
                                         {"early_stopped", model.meta.early_stopped}}}};
    Checkpoint ckpt;
    ckpt.meta = meta.dump();
    ckpt.nets = {model.generator, model.critic};
    return encode_checkpoint(ckpt);
}

inline GanModel decode_gan(const std::vector<std::uint8_t>& bytes) {
    Checkpoint ckpt = decode_checkpoint(bytes);
    nlohmann::json meta = nlohmann::json::parse(ckpt.meta);
    if (meta.value("type", "") != "gan" || ckpt.nets.size() != 2) throw FormatError("checkpoint is not a GAN model");
    GanModel model;
    model.preset = preset_from_json(meta.at("preset"));
    const auto& t = meta.at("training");
    model.meta.seed = t.at("seed").get<std::uint64_t>();
    model.meta.steps = t.at("steps").get<std::size_t>();
    model.meta.generator_updates = t.at("generator_updates").get<std::size_t>();
    model.meta.early_stopped = t.at("early_stopped").get<bool>();
    model.generator = std::move(ckpt.nets[0]);
    model.critic = std::move(ckpt.nets[1]);
    if (model.generator.in_dim() != model.preset.feature_dim + model.preset.noise_dim ||
        model.critic.in_dim() != model.preset.feature_dim || model.critic.layers.back().activation != Activation::linear) {
        throw FormatError("GAN checkpoint networks do not match their preset");
    }
    return model;
}

} // namespace gevd
