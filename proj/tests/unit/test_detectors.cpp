#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <regex>
#include <string>
#include <vector>

#include "gevd/detectors/blackbox.hpp"
#include "gevd/detectors/detector.hpp"
#include "gevd/features/spec.hpp"
#include "gevd/petk/synth.hpp"

using namespace gevd;

namespace {

FeatureSpec toy_spec(std::size_t d) { return {"toy", {{Family::api, Representation::raw, d}}}; }

// Two Gaussian blobs in d dims, class means at -sep and +sep on every axis.
std::pair<Tensor, Tensor> blobs(std::size_t n, std::size_t d, double sep, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    Tensor b = Tensor::matrix(n, d), m = Tensor::matrix(n, d);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            b.row_span(r)[c] = -sep + noise(rng);
            m.row_span(r)[c] = sep + noise(rng);
        }
    }
    return {b, m};
}

double accuracy(const DetectorModel& model, const Tensor& b, const Tensor& m) {
    double ok = 0;
    for (auto l : predict_labels(model, b)) ok += l == Label::benign;
    for (auto l : predict_labels(model, m)) ok += l == Label::malicious;
    return ok / static_cast<double>(b.rows() + m.rows());
}

// Hand-built 1-D logistic model: score = sigmoid(w * x + bias).
DetectorModel manual_model(double w, double bias) {
    DetectorModel model;
    model.spec = toy_spec(1);
    model.scaler = Scaler::identity(1);
    Rng rng(1);
    model.net = make_mlp(1, {{1, Activation::linear}}, 0.0, 0.0, rng);
    model.net.layers[0].weights[0] = w;
    model.net.layers[0].biases[0] = bias;
    return model;
}

} // namespace

TEST(Detector, SeparableToyReachesHighTrainAccuracy) {
    auto [b, m] = blobs(100, 2, 3.0, 7);
    for (auto kind : {DetectorKind::logreg, DetectorKind::mlp}) {
        auto model = train_detector(kind, toy_spec(2), b, m, {}, 11);
        EXPECT_GE(accuracy(model, b, m), 0.99) << to_string(kind);
    }
}

TEST(Detector, ShuffledLabelsStayNearChance) {
    // Same distribution for both classes: any held-out accuracy is chance.
    auto [x1, x2] = blobs(1000, 4, 0.0, 3);
    auto [t1, t2] = blobs(1000, 4, 0.0, 4);
    auto model = train_detector(DetectorKind::logreg, toy_spec(4), x1, x2, {}, 5);
    EXPECT_NEAR(accuracy(model, t1, t2), 0.5, 0.05);
}

TEST(Detector, PlantedSignalGeneralizes) {
    // Signal on a handful of coordinates, noise elsewhere.
    const std::size_t d = 40;
    auto make = [&](std::uint64_t seed) {
        Rng rng(seed);
        std::normal_distribution<double> noise(0.0, 1.0);
        Tensor b = Tensor::matrix(300, d), m = Tensor::matrix(300, d);
        for (std::size_t r = 0; r < 300; ++r) {
            for (std::size_t c = 0; c < d; ++c) {
                double shift = c < 5 ? 0.8 : 0.0;
                b.row_span(r)[c] = noise(rng) - shift;
                m.row_span(r)[c] = noise(rng) + shift;
            }
        }
        return std::pair{b, m};
    };
    auto [b, m] = make(21);
    auto [tb, tm] = make(22);
    for (auto kind : {DetectorKind::logreg, DetectorKind::mlp}) {
        auto model = train_detector(kind, toy_spec(d), b, m, {}, 2);
        EXPECT_GE(accuracy(model, tb, tm), 0.9) << to_string(kind);
    }
}

TEST(Detector, DeterministicUnderSeed) {
    auto [b, m] = blobs(50, 3, 1.0, 9);
    for (auto kind : {DetectorKind::logreg, DetectorKind::mlp}) {
        auto a1 = train_detector(kind, toy_spec(3), b, m, {}, 42);
        auto a2 = train_detector(kind, toy_spec(3), b, m, {}, 42);
        EXPECT_TRUE(a1 == a2);
        EXPECT_EQ(a1.training_meta.dump(), a2.training_meta.dump());
    }
}

TEST(Detector, MlpHiddenWidthConfigurable) {
    auto [b, m] = blobs(20, 3, 2.0, 1);
    auto model = train_detector(DetectorKind::mlp, toy_spec(3), b, m, {}, 1);
    ASSERT_EQ(model.net.layers.size(), 2u);
    EXPECT_EQ(model.net.layers[0].out_dim(), 64u);
    EXPECT_EQ(model.net.layers[0].activation, Activation::relu);
    DetectorHyperparams hp;
    hp.hidden = 8;
    EXPECT_EQ(train_detector(DetectorKind::mlp, toy_spec(3), b, m, hp, 1).net.layers[0].out_dim(), 8u);
    EXPECT_EQ(train_detector(DetectorKind::logreg, toy_spec(3), b, m, hp, 1).net.layers.size(), 1u);
}

TEST(Detector, RejectsDegenerateInput) {
    auto [b, m] = blobs(10, 2, 1.0, 1);
    Tensor empty = Tensor::matrix(0, 2);
    EXPECT_THROW(train_detector(DetectorKind::logreg, toy_spec(2), b, empty, {}, 1), ContractError);
    EXPECT_THROW(train_detector(DetectorKind::logreg, toy_spec(2), empty, m, {}, 1), ContractError);
    EXPECT_THROW(train_detector(DetectorKind::logreg, toy_spec(3), b, m, {}, 1), DimensionError);
}

TEST(PredictLabel, ThresholdBoundaryIsMalicious) {
    // w=1, bias=0: x=0 scores exactly 0.5 which is at the threshold.
    auto model = manual_model(1.0, 0.0);
    std::vector<double> zero{0.0};
    EXPECT_DOUBLE_EQ(model.score(zero), 0.5);
    EXPECT_EQ(predict_label(model, zero), Label::malicious);
    std::vector<double> below{-1e-9};
    EXPECT_EQ(predict_label(model, below), Label::benign);
}

TEST(PredictLabel, AllZerosInputUsesBias) {
    auto model = manual_model(5.0, -2.0);
    std::vector<double> zero{0.0};
    EXPECT_EQ(predict_label(model, zero), Label::benign);
    model.net.layers[0].biases[0] = 2.0;
    EXPECT_EQ(predict_label(model, zero), Label::malicious);
}

TEST(PredictLabel, FixtureScoreByHand) {
    // sigmoid(2 * 0.75 - 1) = sigmoid(0.5) = 0.6224593312018546
    auto model = manual_model(2.0, -1.0);
    std::vector<double> x{0.75};
    EXPECT_NEAR(model.score(x), 0.6224593312018546, 1e-15);
    EXPECT_EQ(predict_label(model, x), Label::malicious);
    model.threshold = 0.63;
    EXPECT_EQ(predict_label(model, x), Label::benign);
}

TEST(PredictLabel, DimensionMismatchThrows) {
    auto model = manual_model(1.0, 0.0);
    std::vector<double> x{1.0, 2.0};
    EXPECT_THROW((void)predict_label(model, x), DimensionError);
}

TEST(DetectionRate, ConstantModels) {
    Tensor x = Tensor::matrix(5, 1, 0.3);
    EXPECT_DOUBLE_EQ(detection_rate(manual_model(0.0, 10.0), x), 1.0);
    EXPECT_DOUBLE_EQ(detection_rate(manual_model(0.0, -10.0), x), 0.0);
    EXPECT_THROW(detection_rate(manual_model(0.0, 1.0), Tensor::matrix(0, 1)), ContractError);
}

TEST(DetectionRate, MixedFixtureOfTen) {
    // Model labels x >= 0 malicious; seven of these ten are non-negative.
    auto model = manual_model(1.0, 0.0);
    Tensor x = Tensor::matrix(10, 1);
    std::vector<double> v{-3, 0, 1, 2, -1, 5, 0.5, -0.5, 7, 4};
    for (std::size_t i = 0; i < v.size(); ++i) x[i] = v[i];
    EXPECT_DOUBLE_EQ(detection_rate(model, x), 0.7);
}

TEST(DetectionRate, MonotoneInThreshold) {
    auto [b, m] = blobs(200, 3, 0.5, 17);
    auto model = train_detector(DetectorKind::logreg, toy_spec(3), b, m, {}, 3);
    double prev = 1.0;
    for (double t = 0.0; t <= 1.0; t += 0.05) {
        model.threshold = t;
        double rate = detection_rate(model, m);
        EXPECT_LE(rate, prev);
        prev = rate;
    }
}

TEST(Evaluate, RatesAndOutputs) {
    auto model = manual_model(1.0, 0.0);
    FeatureMatrix fm;
    fm.columns = {"x"};
    fm.ids = {"a", "b", "c", "d"};
    fm.labels = {1, 1, 0, 0};
    fm.values = Tensor::matrix(4, 1);
    fm.values[0] = 1;
    fm.values[1] = -1;
    fm.values[2] = 2;
    fm.values[3] = -2;
    auto r = evaluate(model, fm);
    EXPECT_DOUBLE_EQ(r.detection_rate, 0.5);
    EXPECT_DOUBLE_EQ(r.false_positive_rate, 0.5);
    auto j = r.to_json();
    EXPECT_EQ(j["samples"].size(), 4u);
    EXPECT_EQ(j["samples"][0]["label"], "malicious");
    auto csv_text = r.to_csv();
    EXPECT_EQ(csv_text.substr(0, csv_text.find('\n')), "id,truth,score,label");
    EXPECT_EQ(std::count(csv_text.begin(), csv_text.end(), '\n'), 5);
}

TEST(Detector, CheckpointRoundTrip) {
    auto [b, m] = blobs(30, 4, 1.0, 2);
    auto model = train_detector(DetectorKind::mlp, toy_spec(4), b, m, {}, 8);
    auto bytes = encode_detector(model);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 5), "GEVD1");
    auto back = decode_detector(bytes);
    EXPECT_TRUE(back == model);
    EXPECT_EQ(back.scores(m), model.scores(m));
    EXPECT_EQ(back.training_meta["seed"], 8);
}

TEST(Detector, CheckpointRejectsOtherContainers) {
    Checkpoint c;
    c.meta = R"({"type":"gan"})";
    EXPECT_THROW(decode_detector(encode_checkpoint(c)), FormatError);
}

TEST(BlackBox, CountsEveryQuery) {
    auto model = manual_model(1.0, 0.0);
    LabelOracle oracle = make_oracle(model);
    std::vector<double> x{1.0};
    EXPECT_EQ(oracle.query(x), Label::malicious);
    Tensor rows = Tensor::matrix(6, 1, -1.0);
    auto labels = oracle.query_batch(rows);
    EXPECT_EQ(labels.size(), 6u);
    EXPECT_EQ(oracle.query_count(), 7u);
    std::vector<double> bad{1.0, 2.0};
    EXPECT_THROW(oracle.query(bad), DimensionError);
    EXPECT_EQ(oracle.query_count(), 7u);
}

TEST(BlackBox, LabelInvariantWhenFeaturesUnchanged) {
    // An edit that leaves the feature vector unchanged cannot change the label.
    auto model = manual_model(3.0, -0.1);
    pe::SynthSpec spec;
    spec.seed = 4;
    auto image = pe::parse(pe::synth_pe(spec), pe::ParseMode::strict);
    auto f1 = extract_all(image);
    VocabularySet vocabs;
    auto x1 = featurize(specs::bytes(), f1, vocabs);
    auto x2 = featurize(specs::bytes(), extract_all(pe::parse(image.serialize(), pe::ParseMode::strict)), vocabs);
    EXPECT_EQ(x1, x2);
    std::vector<double> a{x1[0]}, b2{x2[0]};
    EXPECT_EQ(predict_label(model, a), predict_label(model, b2));
}

TEST(FeatureSpec, MultimodalConcatenatesInDeclaredOrder) {
    pe::SynthSpec s;
    s.imports = pe::group_tokens({"kernel32.dll!exitprocess", "kernel32.dll!gettickcount"});
    s.strings = {"hello world", "another string"};
    auto image = pe::parse(pe::synth_pe(s), pe::ParseMode::strict);
    auto f = extract_all(image);
    VocabularySet vocabs;
    auto v1 = featurize(specs::multimodal_v1(), f, vocabs);
    auto v2 = featurize(specs::multimodal_v2(), f, vocabs);
    ASSERT_EQ(v1.size(), 256 + kDefaultApiHashDim);
    ASSERT_EQ(v2.size(), 256 + kDefaultApiHashDim + kDefaultStringHashDim);
    auto bytes = featurize(specs::bytes(), f, vocabs);
    auto api = featurize(specs::api_hashed(), f, vocabs);
    auto str = featurize(specs::strings_hashed(), f, vocabs);
    EXPECT_TRUE(std::equal(bytes.begin(), bytes.end(), v2.begin()));
    EXPECT_TRUE(std::equal(api.begin(), api.end(), v2.begin() + 256));
    EXPECT_TRUE(std::equal(str.begin(), str.end(), v2.begin() + 256 + kDefaultApiHashDim));
    EXPECT_TRUE(std::equal(v1.begin(), v1.end(), v2.begin()));
}

TEST(FeatureSpec, TopKNeedsMatchingVocabulary) {
    auto image = pe::parse(pe::synth_pe(pe::spec_with_imports({"kernel32.dll!exitprocess"}, 1)), pe::ParseMode::strict);
    auto f = extract_all(image);
    VocabularySet vocabs;
    vocabs.api = Vocabulary(VocabKind::api, {"kernel32.dll!exitprocess", "user32.dll!messageboxa"}, "test");
    auto v = featurize(specs::api_topk(2), f, vocabs);
    EXPECT_EQ(v, (std::vector<double>{1.0, 0.0}));
    EXPECT_THROW(featurize(specs::api_topk(3), f, vocabs), DimensionError);
}

TEST(FeatureSpec, JsonRoundTrip) {
    auto s = specs::multimodal_v2();
    EXPECT_EQ(spec_from_json(spec_to_json(s)), s);
    EXPECT_THROW(spec_from_json(nlohmann::json{{"name", "x"}, {"blocks", nlohmann::json::array()}}), ConfigError);
}

TEST(Layering, AttackModulesNeverSeeDetectorInternals) {
    namespace fs = std::filesystem;
    const fs::path root = fs::path(GEVD_SOURCE_DIR) / "include" / "gevd";
    const std::regex forbidden(R"(#include\s*["<]gevd/detectors/detector\.hpp[">])");
    std::size_t scanned = 0;
    for (const char* dir : {"gan", "baselines"}) {
        if (!fs::exists(root / dir)) continue;
        for (const auto& entry : fs::recursive_directory_iterator(root / dir)) {
            if (!entry.is_regular_file()) continue;
            std::ifstream in(entry.path());
            std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
            EXPECT_FALSE(std::regex_search(text, forbidden)) << entry.path();
            ++scanned;
        }
    }
    EXPECT_GT(scanned, 0u);
}
