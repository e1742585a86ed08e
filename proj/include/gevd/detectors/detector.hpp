#pragma once

// Surrogate static detectors: logistic regression (plain SGD) and a
// one-hidden-layer MLP (Adam), both on standardized inputs. Scores are
// P(malicious); a score at or above the threshold labels a sample malicious.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gevd/detectors/blackbox.hpp"
#include "gevd/error.hpp"
#include "gevd/features/matrix_io.hpp"
#include "gevd/features/spec.hpp"
#include "gevd/nncore/adam.hpp"
#include "gevd/nncore/checkpoint.hpp"
#include "gevd/nncore/mlp.hpp"
#include "gevd/nncore/tape.hpp"

namespace gevd {

enum class DetectorKind { logreg, mlp };

inline std::string to_string(DetectorKind k) { return k == DetectorKind::logreg ? "logreg" : "mlp"; }
inline DetectorKind detector_kind_from_string(const std::string& s) {
    if (s == "logreg") return DetectorKind::logreg;
    if (s == "mlp") return DetectorKind::mlp;
    throw ConfigError("unknown detector kind '" + s + "'");
}

struct DetectorHyperparams {
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double learning_rate = 0.0; // 0: 0.05 for logreg SGD, 1e-3 for mlp Adam
    double l2 = 1e-4;
    std::size_t hidden = 64;
    double threshold = 0.5;
    bool standardize = true;

    [[nodiscard]] double lr_for(DetectorKind k) const {
        if (learning_rate > 0) return learning_rate;
        return k == DetectorKind::logreg ? 0.05 : 1e-3;
    }
};

struct Scaler {
    std::vector<double> mean;
    std::vector<double> scale;

    static Scaler fit(const Tensor& x) {
        Scaler s;
        const std::size_t n = x.rows(), d = x.cols();
        s.mean.assign(d, 0.0);
        s.scale.assign(d, 0.0);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < d; ++c) s.mean[c] += x.at(r, c) / static_cast<double>(n);
        }
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < d; ++c) {
                double dv = x.at(r, c) - s.mean[c];
                s.scale[c] += dv * dv / static_cast<double>(n);
            }
        }
        for (auto& v : s.scale) v = v > 1e-12 ? std::sqrt(v) : 1.0;
        return s;
    }

    static Scaler identity(std::size_t d) { return {std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)}; }

    [[nodiscard]] Tensor apply(const Tensor& x) const {
        Tensor out = x.shape().size() == 1 ? x.reshaped({1, x.cols()}) : x;
        for (std::size_t r = 0; r < out.rows(); ++r) {
            auto row = out.row_span(r);
            for (std::size_t c = 0; c < row.size(); ++c) row[c] = (row[c] - mean[c]) / scale[c];
        }
        return out;
    }

    bool operator==(const Scaler&) const = default;
};

struct DetectorModel {
    DetectorKind kind = DetectorKind::logreg;
    FeatureSpec spec;
    Scaler scaler;
    Mlp net; // final layer linear: outputs the logit
    double threshold = 0.5;
    nlohmann::json training_meta = nlohmann::json::object();

    [[nodiscard]] std::size_t input_dim() const { return net.in_dim(); }

    /// P(malicious) per row.
    [[nodiscard]] std::vector<double> scores(const Tensor& x) const {
        if (x.cols() != input_dim()) {
            throw DimensionError("detector '" + spec.name + "' expects dim " + std::to_string(input_dim()) + ", got " +
                                 std::to_string(x.cols()));
        }
        Tensor logits = forward(net, scaler.apply(x));
        std::vector<double> out;
        for (double z : logits.values()) out.push_back(1.0 / (1.0 + std::exp(-z)));
        return out;
    }

    [[nodiscard]] double score(std::span<const double> x) const {
        return scores(Tensor::row(std::vector<double>(x.begin(), x.end())))[0];
    }

    bool operator==(const DetectorModel& o) const {
        return kind == o.kind && spec == o.spec && scaler == o.scaler && net == o.net && threshold == o.threshold;
    }
};

inline Label predict_label(const DetectorModel& model, std::span<const double> x) {
    return model.score(x) >= model.threshold ? Label::malicious : Label::benign;
}

inline std::vector<Label> predict_labels(const DetectorModel& model, const Tensor& x) {
    std::vector<Label> out;
    for (double s : model.scores(x)) out.push_back(s >= model.threshold ? Label::malicious : Label::benign);
    return out;
}

/// Fraction of rows labeled malicious.
inline double detection_rate(const DetectorModel& model, const Tensor& malicious) {
    if (malicious.rows() == 0) throw ContractError("detection_rate: empty set");
    auto labels = predict_labels(model, malicious);
    return static_cast<double>(std::count(labels.begin(), labels.end(), Label::malicious)) /
           static_cast<double>(labels.size());
}

/// Black-box wrapper: attacks receive this and nothing else.
inline LabelOracle make_oracle(const DetectorModel& model) {
    return LabelOracle([&model](std::span<const double> x) { return predict_label(model, x); }, model.input_dim());
}

// ---------------------------------------------------------------------------

namespace detail {

inline void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, double lr) {
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * grads[k][i];
    }
}

} // namespace detail

/// Trains on benign (label 0) and malicious (label 1) rows.
inline DetectorModel train_detector(DetectorKind kind, const FeatureSpec& spec, const Tensor& benign,
                                    const Tensor& malicious, const DetectorHyperparams& hp, std::uint64_t seed) {
    if (benign.rows() == 0 || malicious.rows() == 0) {
        throw ContractError("train_detector: both classes need at least one sample");
    }
    if (benign.cols() != malicious.cols() || benign.cols() != spec.dim()) {
        throw DimensionError("train_detector: feature dims do not match spec '" + spec.name + "' (" +
                             std::to_string(spec.dim()) + ")");
    }
    const std::size_t d = benign.cols();
    const std::size_t n = benign.rows() + malicious.rows();
    Tensor x = Tensor::matrix(n, d);
    std::vector<double> y(n);
    for (std::size_t r = 0; r < benign.rows(); ++r) std::copy(benign.row_span(r).begin(), benign.row_span(r).end(), x.row_span(r).begin());
    for (std::size_t r = 0; r < malicious.rows(); ++r) {
        std::copy(malicious.row_span(r).begin(), malicious.row_span(r).end(), x.row_span(benign.rows() + r).begin());
        y[benign.rows() + r] = 1.0;
    }

    Rng rng(seed);
    DetectorModel model;
    model.kind = kind;
    model.spec = spec;
    model.threshold = hp.threshold;
    model.scaler = hp.standardize ? Scaler::fit(x) : Scaler::identity(d);
    Tensor xs = model.scaler.apply(x);

    std::vector<LayerSpec> layers;
    if (kind == DetectorKind::mlp) layers.push_back({hp.hidden, Activation::relu});
    layers.push_back({1, Activation::linear});
    model.net = make_mlp(d, layers, 0.0, 0.0, rng);

    const double lr = hp.lr_for(kind);
    const std::size_t batch = std::min(hp.batch_size, n);
    AdamState adam;
    AdamConfig adam_cfg{lr, 0.9, 0.999, 1e-8};
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    double last_loss = 0;
    std::size_t updates = 0;

    for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
        shuffle_in_place(order, rng);
        double epoch_loss = 0;
        for (std::size_t start = 0; start < n; start += batch) {
            std::size_t end = std::min(n, start + batch);
            Tensor xb = Tensor::matrix(end - start, d);
            Tensor yb = Tensor::matrix(end - start, 1);
            for (std::size_t i = start; i < end; ++i) {
                std::copy(xs.row_span(order[i]).begin(), xs.row_span(order[i]).end(), xb.row_span(i - start).begin());
                yb[i - start] = y[order[i]];
            }
            // SGD decays the step as 1/sqrt(epoch) for logreg
            double step_lr = kind == DetectorKind::logreg ? lr / std::sqrt(1.0 + static_cast<double>(epoch)) : lr;

            Tape tape;
            BoundMlp bound = bind(tape, model.net, true);
            Var z = forward(bound, tape.constant(xb), nullptr);
            // logistic loss: softplus(z) - y z
            Var loss = mean_all(sub(softplus(z), mul(tape.constant(yb), z)));
            if (hp.l2 > 0) {
                for (const Var& w : bound.weights) loss = add(loss, scale(sum_all(mul(w, w)), 0.5 * hp.l2));
            }
            std::vector<Var> params = bound.parameters();
            std::vector<Tensor> grads;
            for (const Var& g : tape.grad(loss, params)) grads.push_back(g.value());
            auto refs = model.net.parameters();
            if (kind == DetectorKind::logreg) {
                detail::sgd_step(refs, grads, step_lr);
            } else {
                adam_step(refs, grads, adam, adam_cfg);
            }
            epoch_loss += loss.value()[0] * static_cast<double>(end - start);
            ++updates;
        }
        last_loss = epoch_loss / static_cast<double>(n);
    }
    model.training_meta = {{"seed", seed},
                           {"epochs", hp.epochs},
                           {"batch_size", batch},
                           {"learning_rate", lr},
                           {"l2", hp.l2},
                           {"updates", updates},
                           {"final_loss", last_loss},
                           {"benign", benign.rows()},
                           {"malicious", malicious.rows()}};
    return model;
}

// ---------------------------------------------------------------------------

struct EvalResult {
    double detection_rate = 0;       // on malicious rows
    double false_positive_rate = 0;  // on benign rows (0 when none given)
    std::vector<std::string> ids;
    std::vector<double> scores;
    std::vector<Label> labels;
    std::vector<int> truth;

    [[nodiscard]] nlohmann::json to_json() const {
        nlohmann::json samples = nlohmann::json::array();
        for (std::size_t i = 0; i < ids.size(); ++i) {
            samples.push_back({{"id", ids[i]}, {"truth", truth[i]}, {"score", scores[i]},
                               {"label", labels[i] == Label::malicious ? "malicious" : "benign"}});
        }
        return {{"detection_rate", detection_rate}, {"false_positive_rate", false_positive_rate}, {"samples", samples}};
    }

    [[nodiscard]] std::string to_csv() const {
        std::ostringstream os;
        os << "id,truth,score,label\n";
        for (std::size_t i = 0; i < ids.size(); ++i) {
            os << csv::quote(ids[i]) << ',' << truth[i] << ',' << csv::format_double(scores[i]) << ','
               << (labels[i] == Label::malicious ? "malicious" : "benign") << '\n';
        }
        return os.str();
    }
};

/// Evaluates a feature matrix whose labels give the ground truth.
inline EvalResult evaluate(const DetectorModel& model, const FeatureMatrix& m) {
    m.validate();
    EvalResult r;
    r.ids = m.ids;
    r.truth = m.labels;
    r.scores = m.rows() ? model.scores(m.values) : std::vector<double>{};
    std::size_t mal = 0, ben = 0, detected = 0, fp = 0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        Label l = r.scores[i] >= model.threshold ? Label::malicious : Label::benign;
        r.labels.push_back(l);
        if (m.labels[i] == 1) {
            ++mal;
            detected += l == Label::malicious;
        } else {
            ++ben;
            fp += l == Label::malicious;
        }
    }
    if (mal == 0) throw ContractError("evaluate: no malicious samples");
    r.detection_rate = static_cast<double>(detected) / static_cast<double>(mal);
    r.false_positive_rate = ben ? static_cast<double>(fp) / static_cast<double>(ben) : 0.0;
    return r;
}

// ---------------------------------------------------------------------------
// Persistence (GEVD1 container)

inline std::vector<std::uint8_t> encode_detector(const DetectorModel& model) {
    Checkpoint ckpt;
    ckpt.meta = nlohmann::json{{"type", "detector"},
                               {"kind", to_string(model.kind)},
                               {"spec", spec_to_json(model.spec)},
                               {"threshold", model.threshold},
                               {"training", model.training_meta}}
                    .dump();
    ckpt.nets = {model.net};
    ckpt.arrays = {{"scaler_mean", model.scaler.mean}, {"scaler_scale", model.scaler.scale}};
    return encode_checkpoint(ckpt);
}

inline DetectorModel decode_detector(const std::vector<std::uint8_t>& bytes) {
    Checkpoint ckpt = decode_checkpoint(bytes);
    auto meta = nlohmann::json::parse(ckpt.meta);
    if (meta.value("type", "") != "detector" || ckpt.nets.size() != 1) throw FormatError("checkpoint is not a detector");
    DetectorModel m;
    m.kind = detector_kind_from_string(meta.at("kind").get<std::string>());
    m.spec = spec_from_json(meta.at("spec"));
    m.threshold = meta.at("threshold").get<double>();
    m.training_meta = meta.at("training");
    m.net = std::move(ckpt.nets[0]);
    const auto* mean = ckpt.find_array("scaler_mean");
    const auto* scale = ckpt.find_array("scaler_scale");
    if (!mean || !scale) throw FormatError("detector checkpoint lacks scaler arrays");
    m.scaler = {mean->values, scale->values};
    if (m.net.in_dim() != m.spec.dim() || m.scaler.mean.size() != m.spec.dim() || m.net.out_dim() != 1) {
        throw FormatError("detector checkpoint shapes do not match its feature spec");
    }
    return m;
}

} // namespace gevd
