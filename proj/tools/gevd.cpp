// gevd command-line tool. Exit codes: 0 ok, 2 configuration/usage error,
// 3 stage failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "gevd/harness/pipeline.hpp"

namespace fs = std::filesystem;
using namespace gevd;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

void log_line(const std::string& s) { std::cerr << s << '\n'; }

nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw ConfigError("cannot open " + p.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
}

void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    out << text;
}

fs::path spec_sidecar(const fs::path& features) { return fs::path(features.string() + ".spec.json"); }

ExperimentConfig config_or_default(const std::string& path) {
    return path.empty() ? default_experiment() : load_config(path);
}

// Corpus from a manifest directory, or from raw benign/malicious directories.
Corpus corpus_from(const std::string& corpus_dir, const std::string& benign_dir, const std::string& malicious_dir) {
    if (!corpus_dir.empty()) return read_corpus(corpus_dir);
    if (benign_dir.empty() || malicious_dir.empty()) {
        throw ConfigError("give --corpus, or both --benign-dir and --malicious-dir");
    }
    return ingest_directories(benign_dir, malicious_dir);
}

VocabularySet vocabularies_for(const Corpus& corpus, const std::vector<FileFeatures>& features,
                               const std::string& vocab_dir, const FeatureSettings& settings) {
    VocabularySet v;
    fs::path dir(vocab_dir);
    if (!vocab_dir.empty() && fs::exists(dir / "vocab_api.txt") && fs::exists(dir / "vocab_strings.txt")) {
        v.api = load_vocabulary((dir / "vocab_api.txt").string());
        v.strings = load_vocabulary((dir / "vocab_strings.txt").string());
        return v;
    }
    std::vector<std::set<std::string>> api, strings;
    for (std::size_t i = 0; i < corpus.files.size(); ++i) {
        if (corpus.files[i].label == 0) {
            api.push_back(features[i].imports);
            strings.push_back(features[i].strings);
        }
    }
    if (api.empty()) throw ConfigError("no benign files to build vocabularies from");
    v.api = select_topk(api, settings.api_k, VocabKind::api);
    v.strings = select_topk(strings, settings.string_k, VocabKind::string);
    if (!vocab_dir.empty()) {
        fs::create_directories(dir);
        save_vocabulary((dir / "vocab_api.txt").string(), v.api);
        save_vocabulary((dir / "vocab_strings.txt").string(), v.strings);
    }
    return v;
}

FeatureSettings settings_for(const VocabularySet& v, FeatureSettings s) {
    s.api_k = v.api.size();
    s.string_k = v.strings.size();
    return s;
}

struct LoadedFeatures {
    FeatureMatrix matrix;
    FeatureSpec spec;
};

LoadedFeatures load_with_spec(const std::string& path) {
    LoadedFeatures f{load_features(path), spec_from_json(read_json(spec_sidecar(path)))};
    f.matrix.validate();
    if (f.matrix.rows() > 0 && f.matrix.values.cols() != f.spec.dim()) {
        throw ConfigError(path + ": feature columns do not match the recorded feature spec");
    }
    return f;
}

Tensor rows_with_label(const FeatureMatrix& m, int label) {
    std::vector<std::vector<double>> rows;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        if (m.labels[r] == label) {
            auto s = m.values.row_span(r);
            rows.emplace_back(s.begin(), s.end());
        }
    }
    if (rows.empty()) return Tensor::matrix(0, m.columns.size());
    return stack_rows(rows);
}

// ---------------------------------------------------------------------------

struct Args {
    std::string config, out, corpus, benign_dir, malicious_dir, vocab_dir, features, train, model, in, format = "markdown";
    std::string kind = "logreg", family = "bytes";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> benign_n, malicious_n, steps;
    std::optional<double> lr, gap;
    bool write_default_config = false;
};

int cmd_gen_corpus(const Args& a) {
    auto cfg = config_or_default(a.config);
    if (a.benign_n) cfg.corpus.benign = *a.benign_n;
    if (a.malicious_n) cfg.corpus.malicious = *a.malicious_n;
    std::uint64_t seed = a.seed.value_or(derive_seed(cfg.seed, seeds::corpus));
    Corpus c = gen_corpus(corpus_spec_of(cfg.corpus), seed);
    write_corpus(c, a.out, {{"seed", seed}, {"tool_version", tool_version()}});
    for (const auto& w : c.warnings) log_line("warning: " + w);
    log_line("wrote " + std::to_string(c.files.size()) + " files to " + a.out);
    return 0;
}

int cmd_extract(const Args& a) {
    auto cfg = config_or_default(a.config);
    Corpus c = corpus_from(a.corpus, a.benign_dir, a.malicious_dir);
    auto mode = a.corpus.empty() ? pe::ParseMode::lenient : pe::ParseMode::strict;
    std::vector<FileFeatures> ff;
    for (const auto& f : c.files) ff.push_back(extract_all(pe::parse(f.bytes, mode)));
    VocabularySet v = vocabularies_for(c, ff, a.vocab_dir, cfg.features);
    FeatureSpec spec = resolve_features(a.features, settings_for(v, cfg.features));

    FeatureMatrix m;
    for (std::size_t i = 0; i < spec.dim(); ++i) m.columns.push_back(spec.name + "_" + std::to_string(i));
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < c.files.size(); ++i) {
        m.ids.push_back(c.files[i].id);
        m.labels.push_back(c.files[i].label);
        rows.push_back(featurize(spec, ff[i], v));
    }
    m.values = rows.empty() ? Tensor::matrix(0, spec.dim()) : stack_rows(rows);
    save_features(a.out, m);
    write_text(spec_sidecar(a.out), spec_to_json(spec).dump(2) + "\n");
    log_line("extracted " + std::to_string(m.rows()) + " x " + std::to_string(spec.dim()) + " (" + spec.name + ")");
    return 0;
}

int cmd_train_detector(const Args& a) {
    auto cfg = config_or_default(a.config);
    auto f = load_with_spec(a.train);
    DetectorModel model = train_detector(detector_kind_from_string(a.kind), f.spec, rows_with_label(f.matrix, 0),
                                         rows_with_label(f.matrix, 1), cfg.detector, a.seed.value_or(cfg.seed));
    binio::write_file(a.out, encode_detector(model));
    log_line("trained " + a.kind + " detector on " + std::to_string(f.matrix.rows()) + " rows");
    return 0;
}

int cmd_evaluate(const Args& a) {
    DetectorModel model = decode_detector(binio::read_file(a.model));
    auto f = load_with_spec(a.features);
    if (f.spec != model.spec) throw ConfigError("features were extracted for '" + f.spec.name + "', model expects '" + model.spec.name + "'");
    EvalResult r = evaluate(model, f.matrix);
    if (!a.out.empty()) {
        bool csv = a.out.size() >= 4 && a.out.compare(a.out.size() - 4, 4, ".csv") == 0;
        write_text(a.out, csv ? r.to_csv() : r.to_json().dump(2) + "\n");
    }
    std::cout << nlohmann::json{{"detection_rate", r.detection_rate}, {"false_positive_rate", r.false_positive_rate}}.dump()
              << '\n';
    return 0;
}

int cmd_train_gan(const Args& a) {
    auto cfg = config_or_default(a.config);
    Family family = family_from_string(a.family);
    auto f = load_with_spec(a.train);
    if (f.spec.name != attack_space(family)) {
        throw ConfigError("the " + a.family + " attack trains on " + attack_space(family) + " features, got " + f.spec.name);
    }
    FeatureSettings s = cfg.features;
    s.api_k = s.string_k = f.spec.dim();
    TrainingConfig tc = cfg.gan.at(family);
    if (a.steps) tc.max_steps = *a.steps;
    if (a.lr) tc.adam.learning_rate = *a.lr;
    tc.seed = a.seed.value_or(tc.seed);
    GanModel model = train(rows_with_label(f.matrix, 0), rows_with_label(f.matrix, 1), preset_for(family, s), tc,
                           [](const TrainingMetrics& m) {
                               if (m.step % 100 == 0) {
                                   log_line("step " + std::to_string(m.step) + " critic " + std::to_string(m.critic_loss));
                               }
                           });
    binio::write_file(a.out, encode_gan(model));
    log_line("trained " + a.family + " GAN for " + std::to_string(model.meta.steps) + " steps");
    return 0;
}

// Generates adversarial versions of every malicious file in a corpus.
int cmd_attack(const Args& a) {
    auto cfg = config_or_default(a.config);
    GanModel model = decode_gan(binio::read_file(a.model));
    Family family = model.preset.kind == FeatureKind::byte_histogram ? Family::bytes
                    : model.preset.kind == FeatureKind::api          ? Family::api
                                                                     : Family::strings;
    Corpus c = corpus_from(a.corpus, a.benign_dir, a.malicious_dir);
    auto mode = a.corpus.empty() ? pe::ParseMode::lenient : pe::ParseMode::strict;
    std::vector<pe::PeImage> images;
    std::vector<FileFeatures> ff;
    for (const auto& f : c.files) {
        images.push_back(pe::parse(f.bytes, mode));
        ff.push_back(extract_all(images.back()));
    }
    VocabularySet v = vocabularies_for(c, ff, a.vocab_dir, cfg.features);
    FeatureSpec space = resolve_features(attack_space(family), settings_for(v, cfg.features));
    if (space.dim() != model.preset.feature_dim) throw ConfigError("vocabulary size does not match the GAN's feature dimension");

    Rng rng(a.seed.value_or(cfg.seed));
    Corpus out;
    const double gap = a.gap.value_or(cfg.gap);
    for (std::size_t i = 0; i < c.files.size(); ++i) {
        if (c.files[i].label != 1) continue;
        Tensor m = Tensor::row(featurize(space, ff[i], v));
        Tensor adv = generate(model, m, sample_noise(model.preset.noise_dim, 1, rng));
        auto row = adv.row_span(0);
        const auto& id = c.files[i].id;
        Realized r = family == Family::bytes
                         ? realize_bytes(images[i], row, gap, cfg.gap_units, cfg.max_padding_bytes, id)
                     : family == Family::api
                         ? realize_imports(images[i], tokens_of({row.begin(), row.end()}, v.api), ff[i].imports, cfg.max_new_imports, id)
                         : realize_strings(images[i], tokens_of({row.begin(), row.end()}, v.strings), ff[i].strings, cfg.max_new_strings, id);
        for (const auto& w : r.warnings) log_line("warning: " + w);
        out.files.push_back(CorpusFile{id, 1, r.image.serialize()});
    }
    write_corpus(out, a.out, {{"attack", to_string(family)}, {"gap", gap}});
    log_line("wrote " + std::to_string(out.files.size()) + " adversarial files to " + a.out);
    return 0;
}

int cmd_report(const Args& a) {
    ExperimentReport r = load_report(a.in);
    for (const auto& p : report_render(r, report_format_from_string(a.format), a.out)) log_line("wrote " + p.string());
    return 0;
}

int cmd_pipeline(const Args& a) {
    if (a.write_default_config) {
        std::cout << config_to_json(default_experiment()).dump(2) << '\n';
        return 0;
    }
    auto cfg = config_or_default(a.config);
    if (a.seed) cfg.seed = *a.seed;
    if (a.out.empty()) throw ConfigError("pipeline needs --out");
    ExperimentReport r = run_pipeline(cfg, a.out, log_line);
    std::cout << render_markdown(r);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"gevd: query-free evasion experiments on PE malware detectors"};
    app.set_version_flag("--version", tool_version());
    app.require_subcommand(1);
    Args a;

    auto* gen = app.add_subcommand("gen-corpus", "Generate a synthetic labeled PE corpus");
    gen->add_option("--config", a.config, "Experiment config (corpus section is used)");
    gen->add_option("--benign", a.benign_n, "Benign file count");
    gen->add_option("--malicious", a.malicious_n, "Malicious file count");
    gen->add_option("--seed", a.seed, "Corpus seed");
    gen->add_option("--out", a.out, "Output directory")->required();

    auto* ext = app.add_subcommand("extract", "Extract a feature matrix from a corpus");
    ext->add_option("--config", a.config, "Experiment config (feature settings)");
    ext->add_option("--corpus", a.corpus, "Corpus directory with manifest.json");
    ext->add_option("--benign-dir", a.benign_dir, "Directory of benign PE files");
    ext->add_option("--malicious-dir", a.malicious_dir, "Directory of malicious PE files");
    ext->add_option("--features", a.features, "Feature set (bytes, api_topk, api_hashed, ...)")->required();
    ext->add_option("--vocab-dir", a.vocab_dir, "Load vocabularies from here, or save the ones built");
    ext->add_option("--out", a.out, "Output .csv or .gevf")->required();

    auto* tgan = app.add_subcommand("train-gan", "Train the query-free GAN attack");
    tgan->add_option("--config", a.config, "Experiment config (gan schedules)");
    tgan->add_option("--train", a.train, "Training features from extract")->required();
    tgan->add_option("--family", a.family, "bytes | api | strings")->required();
    tgan->add_option("--steps", a.steps, "Step cap");
    tgan->add_option("--lr", a.lr, "Adam learning rate");
    tgan->add_option("--seed", a.seed, "Training seed");
    tgan->add_option("--out", a.out, "Output checkpoint")->required();

    auto* tdet = app.add_subcommand("train-detector", "Train a surrogate detector");
    tdet->add_option("--config", a.config, "Experiment config (detector hyperparameters)");
    tdet->add_option("--train", a.train, "Training features from extract")->required();
    tdet->add_option("--kind", a.kind, "logreg | mlp");
    tdet->add_option("--seed", a.seed, "Training seed");
    tdet->add_option("--out", a.out, "Output checkpoint")->required();

    auto* atk = app.add_subcommand("attack", "Rewrite every malicious file of a corpus with a trained GAN");
    atk->add_option("--config", a.config, "Experiment config (gap, caps)");
    atk->add_option("--gan", a.model, "GAN checkpoint")->required();
    atk->add_option("--corpus", a.corpus, "Corpus directory with manifest.json");
    atk->add_option("--benign-dir", a.benign_dir, "Directory of benign PE files");
    atk->add_option("--malicious-dir", a.malicious_dir, "Directory of malicious PE files");
    atk->add_option("--vocab-dir", a.vocab_dir, "Vocabularies used when the GAN was trained");
    atk->add_option("--gap", a.gap, "Padding gap for byte attacks");
    atk->add_option("--seed", a.seed, "Noise seed");
    atk->add_option("--out", a.out, "Output corpus directory")->required();

    auto* ev = app.add_subcommand("evaluate", "Score a feature matrix with a detector");
    ev->add_option("--model", a.model, "Detector checkpoint")->required();
    ev->add_option("--features", a.features, "Features from extract")->required();
    ev->add_option("--out", a.out, "Per-sample results (.json or .csv)");

    auto* rep = app.add_subcommand("report", "Render a report.json");
    rep->add_option("--in", a.in, "report.json")->required();
    rep->add_option("--format", a.format, "json | csv | markdown");
    rep->add_option("--out", a.out, "Output directory")->required();

    auto* pipe = app.add_subcommand("pipeline", "Run a full experiment");
    pipe->add_option("--config", a.config, "Experiment config (defaults when omitted)");
    pipe->add_option("--seed", a.seed, "Override the global seed");
    pipe->add_option("--out", a.out, "Output directory for report and artifacts");
    pipe->add_flag("--print-default-config", a.write_default_config, "Print the default config and exit");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (*gen) return cmd_gen_corpus(a);
        if (*ext) return cmd_extract(a);
        if (*tgan) return cmd_train_gan(a);
        if (*tdet) return cmd_train_detector(a);
        if (*atk) return cmd_attack(a);
        if (*ev) return cmd_evaluate(a);
        if (*rep) return cmd_report(a);
        if (*pipe) return cmd_pipeline(a);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitStage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitStage;
    }
    return kExitConfig;
}
