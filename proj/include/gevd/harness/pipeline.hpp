#pragma once

// End-to-end experiment: corpus -> features -> detectors -> attacks ->
// rewritten files -> re-extraction -> evaluation. Stages run in order on one
// thread; every random draw comes from a seed derived from the config seed.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "gevd/baselines/injection.hpp"
#include "gevd/baselines/malgan.hpp"
#include "gevd/detectors/detector.hpp"
#include "gevd/features/spec.hpp"
#include "gevd/gan/gan.hpp"
#include "gevd/harness/config.hpp"
#include "gevd/harness/corpus.hpp"
#include "gevd/harness/realize.hpp"
#include "gevd/harness/report.hpp"
#include "gevd/harness/split.hpp"
#include "gevd/padopt/padopt.hpp"

namespace gevd {

class StageError : public Error {
public:
    StageError(std::string stage, const std::string& message)
        : Error("stage '" + stage + "' failed: " + message), stage(std::move(stage)) {}
    std::string stage;
};

using PipelineLog = std::function<void(const std::string&)>;

inline constexpr const char* kCacheEnvVar = "GEVD_CACHE_DIR";

// Seed streams, one per consumer.
namespace seeds {
inline constexpr std::uint64_t corpus = 1;
inline constexpr std::uint64_t split = 2;
inline constexpr std::uint64_t detector = 100;
inline constexpr std::uint64_t attack_train = 1000;
inline constexpr std::uint64_t attack_noise = 2000;
inline constexpr std::uint64_t injection = 3000;
} // namespace seeds

/// Everything derived from the corpus before any model is trained.
struct PreparedData {
    Corpus corpus;
    std::vector<pe::PeImage> images;
    std::vector<FileFeatures> features;
    std::vector<int> labels;
    pe::ParseMode parse_mode = pe::ParseMode::strict;
    SplitIndices split;
    VocabularySet vocabs;
    FeatureSettings settings; // K values shrunk to the vocabulary actually available
    std::vector<std::string> warnings;

    [[nodiscard]] std::vector<std::size_t> subset(Subset s, int label) const {
        std::vector<std::size_t> out;
        for (std::size_t i : split.of(s)) {
            if (labels[i] == label) out.push_back(i);
        }
        return out;
    }
};

namespace detail {

template <typename F>
auto run_stage(const std::string& stage, const PipelineLog& log, F&& body) -> decltype(body()) {
    if (log) log("[" + stage + "]");
    try {
        return body();
    } catch (const ConfigError&) {
        throw;
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

inline Corpus cached_corpus(const ExperimentConfig& cfg, const PipelineLog& log) {
    namespace fs = std::filesystem;
    const std::uint64_t corpus_seed = derive_seed(cfg.seed, seeds::corpus);
    CorpusSpec spec = corpus_spec_of(cfg.corpus);
    const char* cache_root = std::getenv(kCacheEnvVar);
    if (cache_root == nullptr || *cache_root == '\0') return gen_corpus(spec, corpus_seed);

    nlohmann::json key = {{"corpus", config_to_json(cfg).at("corpus")}, {"seed", corpus_seed}, {"version", tool_version()}};
    fs::path dir = fs::path(cache_root) / ("corpus-" + hex64(fnv1a64(key.dump())));
    if (fs::exists(dir / "manifest.json")) {
        if (log) log("corpus cache hit: " + dir.string());
        Corpus c = read_corpus(dir);
        if (spec.degenerate()) c.warnings.push_back("class profiles are identical: the corpus carries no class signal");
        return c;
    }
    Corpus c = gen_corpus(spec, corpus_seed);
    fs::path tmp = dir;
    tmp += ".tmp";
    fs::remove_all(tmp);
    write_corpus(c, tmp, {{"key", key}});
    std::error_code ec;
    fs::rename(tmp, dir, ec); // a concurrent writer may have won; either copy is identical
    if (ec) fs::remove_all(tmp);
    if (log) log("corpus cached: " + dir.string());
    return c;
}

inline Tensor rows_of(const std::vector<std::vector<double>>& rows, std::size_t dim) {
    if (rows.empty()) return Tensor::matrix(0, dim);
    return stack_rows(rows);
}

inline Tensor featurize_rows(const FeatureSpec& spec, const std::vector<const FileFeatures*>& files,
                             const VocabularySet& vocabs) {
    std::vector<std::vector<double>> rows;
    rows.reserve(files.size());
    for (const auto* f : files) rows.push_back(featurize(spec, *f, vocabs));
    return rows_of(rows, spec.dim());
}

inline double mean_of(double sum, std::size_t n) { return n == 0 ? 0.0 : sum / static_cast<double>(n); }

inline bool dominates(std::span<const double> adv, std::span<const double> orig) {
    for (std::size_t i = 0; i < adv.size(); ++i) {
        if (adv[i] < orig[i]) return false;
    }
    return true;
}

inline bool includes_all(const std::set<std::string>& big, const std::set<std::string>& small) {
    return std::includes(big.begin(), big.end(), small.begin(), small.end());
}

} // namespace detail

// ---------------------------------------------------------------------------
// Stages

inline Corpus load_corpus(const ExperimentConfig& cfg, const PipelineLog& log = {}) {
    if (cfg.corpus.kind == "directory") return ingest_directories(cfg.corpus.benign_dir, cfg.corpus.malicious_dir);
    return detail::cached_corpus(cfg, log);
}

inline PreparedData prepare_data(const ExperimentConfig& cfg, const PipelineLog& log = {}) {
    PreparedData d;
    d.corpus = detail::run_stage("corpus", log, [&] { return load_corpus(cfg, log); });
    d.warnings = d.corpus.warnings;
    d.parse_mode = cfg.corpus.kind == "directory" ? pe::ParseMode::lenient : pe::ParseMode::strict;

    detail::run_stage("extract", log, [&] {
        d.images.reserve(d.corpus.files.size());
        d.features.reserve(d.corpus.files.size());
        for (const auto& f : d.corpus.files) {
            d.images.push_back(pe::parse(f.bytes, d.parse_mode));
            d.features.push_back(extract_all(d.images.back()));
            d.labels.push_back(f.label);
        }
    });

    detail::run_stage("split", log, [&] {
        d.split = stratified_split(d.labels, cfg.split.train, cfg.split.val, derive_seed(cfg.seed, seeds::split));
        for (int label : {0, 1}) {
            if (d.subset(Subset::train, label).empty() || d.subset(Subset::test, label).empty()) {
                throw ContractError("split leaves a class without training or test files");
            }
        }
    });

    detail::run_stage("vocabulary", log, [&] {
        std::vector<std::set<std::string>> api_docs, string_docs;
        for (std::size_t i : d.subset(Subset::train, 0)) {
            api_docs.push_back(d.features[i].imports);
            string_docs.push_back(d.features[i].strings);
        }
        d.settings = cfg.features;
        d.vocabs.api = select_topk(api_docs, cfg.features.api_k, VocabKind::api);
        d.vocabs.strings = select_topk(string_docs, cfg.features.string_k, VocabKind::string);
        if (d.vocabs.api.size() == 0 || d.vocabs.strings.size() == 0) {
            throw ContractError("benign training files carry no imports or no strings");
        }
        if (d.vocabs.api.size() < cfg.features.api_k) {
            d.warnings.push_back("api vocabulary has only " + std::to_string(d.vocabs.api.size()) + " tokens");
            d.settings.api_k = d.vocabs.api.size();
        }
        if (d.vocabs.strings.size() < cfg.features.string_k) {
            d.warnings.push_back("string vocabulary has only " + std::to_string(d.vocabs.strings.size()) + " tokens");
            d.settings.string_k = d.vocabs.strings.size();
        }
    });
    return d;
}

/// Feature matrices over a fixed list of files, memoized per feature set.
class FeatureCache {
public:
    FeatureCache(const PreparedData& data) : data_(data) {}

    const Tensor& all(const FeatureSpec& spec) {
        auto it = cache_.find(spec.name);
        if (it != cache_.end()) return it->second;
        std::vector<const FileFeatures*> ptrs;
        for (const auto& f : data_.features) ptrs.push_back(&f);
        return cache_.emplace(spec.name, detail::featurize_rows(spec, ptrs, data_.vocabs)).first->second;
    }

    Tensor rows(const FeatureSpec& spec, const std::vector<std::size_t>& idx) {
        const Tensor& m = all(spec);
        Tensor out = Tensor::matrix(idx.size(), m.cols());
        for (std::size_t r = 0; r < idx.size(); ++r) {
            auto src = m.row_span(idx[r]);
            std::copy(src.begin(), src.end(), out.row_span(r).begin());
        }
        return out;
    }

private:
    const PreparedData& data_;
    std::map<std::string, Tensor> cache_;
};

struct TrainedDetector {
    DetectorEntry entry;
    DetectorModel model;
};

inline std::vector<TrainedDetector> train_detectors(const ExperimentConfig& cfg, const PreparedData& d,
                                                    FeatureCache& cache, ExperimentReport& report,
                                                    const PipelineLog& log = {}) {
    return detail::run_stage("detectors", log, [&] {
        std::vector<TrainedDetector> out;
        auto train_b = d.subset(Subset::train, 0), train_m = d.subset(Subset::train, 1);
        auto val_b = d.subset(Subset::val, 0), val_m = d.subset(Subset::val, 1);
        auto test_b = d.subset(Subset::test, 0), test_m = d.subset(Subset::test, 1);
        for (std::size_t i = 0; i < cfg.detectors.size(); ++i) {
            const auto& e = cfg.detectors[i];
            FeatureSpec spec = resolve_features(e.features, d.settings);
            DetectorModel model = train_detector(e.kind, spec, cache.rows(spec, train_b), cache.rows(spec, train_m),
                                                 cfg.detector, derive_seed(cfg.seed, seeds::detector + i));
            DetectorRow row{e.name, to_string(e.kind), e.features, spec.dim(), 0.0, 0.0, 0.0};
            if (!val_b.empty() || !val_m.empty()) {
                double correct = 0;
                if (!val_m.empty()) correct += detection_rate(model, cache.rows(spec, val_m)) * static_cast<double>(val_m.size());
                if (!val_b.empty()) {
                    correct += (1.0 - detection_rate(model, cache.rows(spec, val_b))) * static_cast<double>(val_b.size());
                }
                row.val_accuracy = correct / static_cast<double>(val_b.size() + val_m.size());
            }
            row.detection_rate = detection_rate(model, cache.rows(spec, test_m));
            row.false_positive_rate = detection_rate(model, cache.rows(spec, test_b));
            if (log) {
                log("  " + e.name + ": detection " + detail::fixed(row.detection_rate, 4) + ", fpr " +
                    detail::fixed(row.false_positive_rate, 4));
            }
            report.detectors.push_back(row);
            out.push_back({e, std::move(model)});
        }
        return out;
    });
}

inline GanPreset preset_for(Family f, const FeatureSettings& s) {
    switch (f) {
    case Family::bytes: return byte_preset();
    case Family::api: return api_preset(s.api_k);
    case Family::strings: return strings_preset(s.string_k);
    }
    throw ConfigError("unknown family");
}

/// Rewritten test files for one attack, already re-extracted.
struct AttackOutcome {
    AttackRow row;
    std::vector<FileFeatures> features;
    std::vector<std::vector<std::uint8_t>> files; // kept only when artifacts are written
};

namespace detail {

// Realizes one adversarial vector per test-malicious file.
inline Realized realize_vector(const ExperimentConfig& cfg, const PreparedData& d, Family family,
                               std::size_t file, std::span<const double> v, double gap) {
    const auto& id = d.corpus.files[file].id;
    switch (family) {
    case Family::bytes: return realize_bytes(d.images[file], v, gap, cfg.gap_units, cfg.max_padding_bytes, id);
    case Family::api:
        return realize_imports(d.images[file], tokens_of({v.begin(), v.end()}, d.vocabs.api), d.features[file].imports,
                               cfg.max_new_imports, id);
    case Family::strings:
        return realize_strings(d.images[file], tokens_of({v.begin(), v.end()}, d.vocabs.strings),
                               d.features[file].strings, cfg.max_new_strings, id);
    }
    throw ConfigError("unknown family");
}

inline bool file_superset(Family family, const pe::PeImage& orig, const FileFeatures& of, const pe::PeImage& adv,
                          const FileFeatures& af) {
    switch (family) {
    case Family::bytes:
        return adv.size() >= orig.size() && std::equal(orig.bytes().begin(), orig.bytes().end(), adv.bytes().begin());
    case Family::api: return includes_all(af.imports, of.imports);
    case Family::strings: return includes_all(af.strings, of.strings);
    }
    return false;
}

// Shared tail of every attack: re-extract, evaluate, record.
inline void finish_file(AttackOutcome& out, const ExperimentConfig& cfg, const PreparedData& d, Family family,
                        std::size_t file, Realized r) {
    pe::PeImage reparsed = pe::parse(r.image.serialize(), d.parse_mode);
    FileFeatures f = extract_all(reparsed);
    out.row.files += 1;
    out.row.files_modified += r.modified;
    out.row.mean_size += static_cast<double>(reparsed.size());
    out.row.mean_added += static_cast<double>(r.added);
    out.row.superset.files_checked += 1;
    out.row.superset.files_superset += file_superset(family, d.images[file], d.features[file], reparsed, f);
    out.row.warnings.insert(out.row.warnings.end(), r.warnings.begin(), r.warnings.end());
    out.features.push_back(std::move(f));
    if (cfg.write_adversarial) out.files.push_back(reparsed.serialize());
}

inline void score_outcome(AttackOutcome& out, const std::vector<TrainedDetector>& detectors, const VocabularySet& vocabs) {
    out.row.mean_size = mean_of(out.row.mean_size, out.row.files);
    out.row.mean_added = mean_of(out.row.mean_added, out.row.files);
    std::vector<const FileFeatures*> ptrs;
    for (const auto& f : out.features) ptrs.push_back(&f);
    for (const auto& det : detectors) {
        out.row.detection[det.entry.name] =
            ptrs.empty() ? 0.0 : detection_rate(det.model, featurize_rows(det.model.spec, ptrs, vocabs));
    }
}

inline void count_vector_superset(AttackOutcome& out, const GanPreset& preset, const Tensor& orig, const Tensor& adv) {
    if (!preset.binary()) return;
    for (std::size_t r = 0; r < orig.rows(); ++r) {
        out.row.superset.vectors_checked += 1;
        out.row.superset.vectors_superset += dominates(adv.row_span(r), orig.row_span(r));
    }
}

} // namespace detail

/// Artifacts written next to the report, if an output directory is given.
struct ArtifactSink {
    std::filesystem::path dir;

    [[nodiscard]] bool enabled() const { return !dir.empty(); }

    void write(const std::filesystem::path& rel, const std::vector<std::uint8_t>& bytes) const {
        if (!enabled()) return;
        std::filesystem::create_directories((dir / rel).parent_path());
        binio::write_file((dir / rel).string(), bytes);
    }
};

struct GapSweepInput {
    std::vector<std::size_t> files; // corpus indices
    Tensor targets;                 // target histograms, one row per file
};

inline AttackOutcome run_attack(const ExperimentConfig& cfg, std::size_t index, const PreparedData& d,
                                FeatureCache& cache, const std::vector<TrainedDetector>& detectors,
                                const ArtifactSink& artifacts, std::optional<GapSweepInput>* sweep_input,
                                const PipelineLog& log = {}) {
    const AttackEntry& a = cfg.attacks[index];
    return detail::run_stage("attack:" + a.name, log, [&] {
        AttackOutcome out;
        out.row.name = a.name;
        out.row.method = a.method;
        out.row.family = to_string(a.family);
        out.row.target = a.target;
        auto test_m = d.subset(Subset::test, 1);

        if (a.method == "benign_injection") {
            std::vector<std::vector<std::uint8_t>> pool;
            for (std::size_t i : d.subset(Subset::train, 0)) pool.push_back(d.images[i].serialize());
            Rng rng(derive_seed(cfg.seed, seeds::injection + index));
            for (std::size_t file : test_m) {
                auto inj = benign_injection_traced(d.images[file], pool, rng);
                Realized r{std::move(inj.image), pool[inj.donor].size(), !pool[inj.donor].empty(), {}};
                detail::finish_file(out, cfg, d, Family::bytes, file, std::move(r));
            }
        } else {
            FeatureSpec space = resolve_features(attack_space(a.family), d.settings);
            GanPreset preset = preset_for(a.family, d.settings);
            Tensor train_b = cache.rows(space, d.subset(Subset::train, 0));
            Tensor train_m = cache.rows(space, d.subset(Subset::train, 1));
            Tensor orig = cache.rows(space, test_m);
            Rng noise_rng(derive_seed(cfg.seed, seeds::attack_noise + index));
            Tensor z = sample_noise(preset.noise_dim, orig.rows(), noise_rng);
            Tensor adv;
            if (a.method == "gan") {
                TrainingConfig tc = cfg.gan.at(a.family);
                tc.seed = derive_seed(cfg.seed, seeds::attack_train + index);
                GanModel model = train(train_b, train_m, preset, tc);
                if (log) log("  gan trained for " + std::to_string(model.meta.steps) + " steps");
                adv = generate(model, orig, z);
                artifacts.write(std::filesystem::path("attacks") / (a.name + ".gevd"), encode_gan(model));
                out.row.query_count = 0; // the target detector is never consulted
            } else {
                auto it = std::find_if(detectors.begin(), detectors.end(),
                                       [&](const TrainedDetector& t) { return t.entry.name == a.target; });
                if (it == detectors.end()) throw ConfigError("attack '" + a.name + "': target detector not trained");
                LabelOracle oracle = make_oracle(it->model);
                MalganConfig mc = cfg.malgan;
                mc.seed = derive_seed(cfg.seed, seeds::attack_train + index);
                MalganModel model = train_malgan(train_m, train_b, oracle, preset, mc);
                if (log) {
                    log("  malgan stopped (" + model.meta.stop_reason + ") after " + std::to_string(model.meta.steps) +
                        " steps, " + std::to_string(model.query_count) + " queries");
                }
                adv = malgan_generate(model, orig, z);
                artifacts.write(std::filesystem::path("attacks") / (a.name + ".gevd"), encode_malgan(model));
                out.row.query_count = model.query_count;
            }
            detail::count_vector_superset(out, preset, orig, adv);
            for (std::size_t k = 0; k < test_m.size(); ++k) {
                detail::finish_file(out, cfg, d, a.family, test_m[k],
                                    detail::realize_vector(cfg, d, a.family, test_m[k], adv.row_span(k), cfg.gap));
            }
            if (a.method == "gan" && a.family == Family::bytes && sweep_input != nullptr && !sweep_input->has_value()) {
                *sweep_input = GapSweepInput{test_m, adv};
            }
        }
        detail::score_outcome(out, detectors, d.vocabs);
        if (cfg.write_adversarial) {
            for (std::size_t k = 0; k < out.files.size(); ++k) {
                artifacts.write(std::filesystem::path("adversarial") / a.name / (d.corpus.files[test_m[k]].id + ".exe"),
                                out.files[k]);
            }
        }
        return out;
    });
}

/// Files drawn for the gap sweep: at most `limit`, chosen with an explicit seed.
inline std::vector<std::size_t> sweep_subsample(std::size_t n, std::size_t limit, std::uint64_t seed) {
    std::vector<std::size_t> pos(n);
    for (std::size_t i = 0; i < n; ++i) pos[i] = i;
    if (n <= limit) return pos;
    Rng rng(seed);
    shuffle_in_place(pos, rng);
    pos.resize(limit);
    std::sort(pos.begin(), pos.end());
    return pos;
}

inline void run_gap_sweep(const ExperimentConfig& cfg, const PreparedData& d, const GapSweepInput& in,
                          const std::vector<TrainedDetector>& detectors, ExperimentReport& report,
                          const PipelineLog& log = {}) {
    detail::run_stage("gap_sweep", log, [&] {
        auto pos = sweep_subsample(in.files.size(), cfg.gap_subsample, cfg.subsample_seed);
        for (double gap : cfg.gap_sweep) {
            AttackOutcome out;
            for (std::size_t p : pos) {
                detail::finish_file(out, cfg, d, Family::bytes, in.files[p],
                                    detail::realize_vector(cfg, d, Family::bytes, in.files[p], in.targets.row_span(p), gap));
            }
            detail::score_outcome(out, detectors, d.vocabs);
            report.gap_sweep.push_back({gap, out.row.files, out.row.mean_size, out.row.mean_added, out.row.detection});
            for (const auto& w : out.row.warnings) report.warnings.push_back("gap " + detail::gap_label(gap) + ": " + w);
            if (log) log("  g=" + detail::gap_label(gap) + " mean size " + detail::fixed(out.row.mean_size, 0));
        }
    });
}

/// Relaxed vs exact padding on the sweep files at the configured gap. Exact
/// plans are compared as real-valued solutions; their files would be too
/// large to materialize.
inline void run_exact_comparison(const ExperimentConfig& cfg, const PreparedData& d, const GapSweepInput& in,
                                 ExperimentReport& report, const PipelineLog& log = {}) {
    detail::run_stage("exact_comparison", log, [&] {
        auto pos = sweep_subsample(in.files.size(), cfg.gap_subsample, cfg.subsample_seed);
        ExactComparison ex;
        ex.gap = cfg.gap;
        double relaxed = 0, exact = 0;
        for (std::size_t p : pos) {
            std::size_t file = in.files[p];
            auto row = in.targets.row_span(p);
            PaddingRequest req = byte_request(d.images[file], {row.begin(), row.end()}, cfg.gap);
            req.units = cfg.gap_units;
            try {
                double r = static_cast<double>(plan_padding(req).total_appended);
                req.mode = PadMode::exact;
                double e = solve(req).objective;
                relaxed += r;
                exact += e;
                ex.files += 1;
            } catch (const InfeasibleError&) {
                ex.infeasible_exact += 1;
            } catch (const RoundingError&) {
                ex.infeasible_exact += 1;
            }
        }
        ex.mean_appended_relaxed = detail::mean_of(relaxed, ex.files);
        ex.mean_appended_exact = detail::mean_of(exact, ex.files);
        report.exact = ex;
    });
}

/// Runs the configured experiment. With a non-empty `out_dir` the report and
/// all models are written there as they are produced.
inline ExperimentReport run_pipeline(const ExperimentConfig& cfg, const std::filesystem::path& out_dir = {},
                                     const PipelineLog& log = {}) {
    validate(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    ArtifactSink artifacts{out_dir};
    if (artifacts.enabled()) std::filesystem::create_directories(out_dir);

    ExperimentReport report;
    report.tool_version = tool_version();
    report.config_hash = config_hash(cfg);
    report.seed = cfg.seed;
    report.config = config_to_json(cfg);

    auto seconds_since = [](std::chrono::steady_clock::time_point t) {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
    };
    auto timed = [&](const std::string& stage, auto&& body) {
        auto start = std::chrono::steady_clock::now();
        body();
        report.runtime.stages[stage] += seconds_since(start);
    };

    PreparedData d;
    timed("prepare", [&] { d = prepare_data(cfg, log); });
    if (artifacts.enabled()) {
        save_vocabulary((out_dir / "vocab_api.txt").string(), d.vocabs.api);
        save_vocabulary((out_dir / "vocab_strings.txt").string(), d.vocabs.strings);
        if (cfg.write_corpus) write_corpus(d.corpus, out_dir / "corpus");
    }
    nlohmann::json split = nlohmann::json::object();
    for (auto [name, s] : {std::pair{"train", Subset::train}, {"val", Subset::val}, {"test", Subset::test}}) {
        split[name] = {{"benign", d.subset(s, 0).size()}, {"malicious", d.subset(s, 1).size()}};
    }
    report.corpus = {{"source", cfg.corpus.kind},
                     {"files", d.corpus.files.size()},
                     {"split", split},
                     {"api_vocabulary", d.vocabs.api.size()},
                     {"string_vocabulary", d.vocabs.strings.size()}};
    report.warnings = d.warnings;

    FeatureCache cache(d);
    std::vector<TrainedDetector> detectors;
    timed("detectors", [&] { detectors = train_detectors(cfg, d, cache, report, log); });
    for (const auto& t : detectors) {
        artifacts.write(std::filesystem::path("detectors") / (t.entry.name + ".gevd"), encode_detector(t.model));
    }

    std::optional<GapSweepInput> sweep;
    for (std::size_t i = 0; i < cfg.attacks.size(); ++i) {
        timed("attack:" + cfg.attacks[i].name, [&] {
            AttackOutcome out = run_attack(cfg, i, d, cache, detectors, artifacts, &sweep, log);
            report.attacks.push_back(std::move(out.row));
        });
    }
    if (sweep && !cfg.gap_sweep.empty()) timed("gap_sweep", [&] { run_gap_sweep(cfg, d, *sweep, detectors, report, log); });
    if (sweep && cfg.exact_comparison) timed("exact_comparison", [&] { run_exact_comparison(cfg, d, *sweep, report, log); });

    report.runtime.total_seconds = seconds_since(t0);
    if (artifacts.enabled()) {
        detail::run_stage("report", log, [&] {
            report_render(report, ReportFormat::json, out_dir);
            report_render(report, ReportFormat::csv, out_dir);
            report_render(report, ReportFormat::markdown, out_dir);
        });
    }
    return report;
}

} // namespace gevd
