#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "gevd/harness/pipeline.hpp"

using namespace gevd;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("gevd_harness_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// Small but complete: every detector and attack kind, short schedules.
ExperimentConfig small_config(std::size_t per_class = 40) {
    ExperimentConfig c = default_experiment();
    c.corpus.benign = per_class;
    c.corpus.malicious = per_class;
    c.corpus.text_min = 1024;
    c.corpus.text_max = 2048;
    c.features.api_k = 32;
    c.features.string_k = 32;
    c.features.api_hash_dim = 64;
    c.features.string_hash_dim = 64;
    for (auto& [f, t] : c.gan) {
        t.max_steps = f == Family::bytes ? 30 : 3;
        t.early_stop = false;
    }
    c.malgan.max_steps = 4;
    c.malgan.probe_size = 8;
    c.malgan.batch_size = 16;
    c.detector.epochs = 5;
    return c;
}

// Hand-built report used for rendering fixtures.
ExperimentReport fixture_report() {
    ExperimentReport r;
    r.tool_version = "0.1.0";
    r.config_hash = "00000000deadbeef";
    r.seed = 7;
    r.config = {{"seed", 7}};
    r.corpus = {{"files", 20}};
    r.detectors = {{"bytes_logreg", "logreg", "bytes", 256, 0.95, 0.9, 0.05},
                   {"api_topk_logreg", "logreg", "api_topk", 128, 1.0, 0.875, 0.0}};
    AttackRow gan;
    gan.name = "gan_bytes";
    gan.method = "gan";
    gan.family = "bytes";
    gan.files = 8;
    gan.files_modified = 8;
    gan.mean_size = 4096;
    gan.mean_added = 1024;
    gan.detection = {{"bytes_logreg", 0.125}, {"api_topk_logreg", 0.875}};
    gan.superset = {0, 0, 8, 8};
    AttackRow mg;
    mg.name = "malgan_api";
    mg.method = "malgan";
    mg.family = "api";
    mg.target = "api_topk_logreg";
    mg.query_count = 320;
    mg.files = 8;
    mg.files_modified = 6;
    mg.mean_size = 5000.5;
    mg.mean_added = 3.25;
    mg.detection = {{"api_topk_logreg", 0.25}};
    mg.superset = {8, 8, 8, 8};
    mg.warnings = {"mal00003: 3000 new imports exceed the per-file cap of 2048; truncated"};
    r.attacks = {gan, mg};
    r.gap_sweep = {{0.01, 8, 4200, 100, {{"bytes_logreg", 0.75}, {"api_topk_logreg", 0.875}}},
                   {0.001, 8, 9000, 4900, {{"bytes_logreg", 0.0}, {"api_topk_logreg", 0.875}}}};
    r.exact = ExactComparison{0.001, 8, 4900, 123456789.5, 0};
    r.warnings = {"string vocabulary has only 100 tokens"};
    r.runtime = {12.5, {{"detectors", 2.5}}};
    return r;
}

} // namespace

// ---------------------------------------------------------------------------
// Config

TEST(Config, DefaultsValidate) {
    auto c = default_experiment();
    EXPECT_NO_THROW(validate(c));
    EXPECT_DOUBLE_EQ(c.split.train + c.split.val + c.split.test, 1.0);
    EXPECT_EQ(c.gap_sweep, (std::vector<double>{0.01, 0.008, 0.005, 0.003, 0.001, 0.0008, 0.0005, 0.0003, 0.0001}));
    EXPECT_EQ(c.max_new_strings, 4096u);
    EXPECT_EQ(c.max_new_imports, 2048u);
}

TEST(Config, JsonRoundTrip) {
    auto c = small_config();
    c.seed = 99;
    c.gap_units = GapUnits::count;
    c.corpus.profiles = nlohmann::json{{"benign", profile_to_json(default_corpus_spec(1, 1).benign_profile)},
                                       {"malicious", profile_to_json(default_corpus_spec(1, 1).malicious_profile)}};
    auto j = config_to_json(c);
    auto back = config_from_json(j);
    EXPECT_EQ(config_to_json(back), j);
    EXPECT_EQ(config_hash(back), config_hash(c));
}

TEST(Config, MissingSectionsTakeDefaults) {
    auto c = config_from_json({{"schema", kConfigSchema}, {"seed", 5}});
    EXPECT_EQ(c.seed, 5u);
    auto d = default_experiment();
    d.seed = 5;
    EXPECT_EQ(config_to_json(c), config_to_json(d));
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    auto base = config_to_json(default_experiment());
    auto typo = base;
    typo["sede"] = 1;
    EXPECT_THROW(config_from_json(typo), ConfigError);
    auto nested = base;
    nested["split"]["trian"] = 0.5;
    EXPECT_THROW(config_from_json(nested), ConfigError);
    auto bad_split = base;
    bad_split["split"] = {{"train", 0.8}, {"val", 0.1}, {"test", 0.2}};
    EXPECT_THROW(config_from_json(bad_split), ConfigError);
    auto bad_schema = base;
    bad_schema["schema"] = "gevd-experiment/0";
    EXPECT_THROW(config_from_json(bad_schema), ConfigError);
    auto wrong_type = base;
    wrong_type["seed"] = "one";
    EXPECT_THROW(config_from_json(wrong_type), ConfigError);
    auto bad_gap = base;
    bad_gap["gap_sweep"] = {0.01, -1.0};
    EXPECT_THROW(config_from_json(bad_gap), ConfigError);
}

TEST(Config, RejectsInconsistentRosters) {
    auto c = default_experiment();
    c.attacks.push_back({"x", "malgan", Family::api, "bytes_logreg"});
    EXPECT_THROW(validate(c), ConfigError); // target consumes bytes, attack edits imports
    c = default_experiment();
    c.attacks.push_back({"y", "malgan", Family::bytes, "nope"});
    EXPECT_THROW(validate(c), ConfigError);
    c = default_experiment();
    c.detectors.push_back(c.detectors.front());
    EXPECT_THROW(validate(c), ConfigError);
    c = default_experiment();
    c.attacks.push_back({"z", "pgd", Family::bytes, ""});
    EXPECT_THROW(validate(c), ConfigError);
}

TEST(Config, HashTracksContent) {
    auto a = default_experiment(), b = default_experiment();
    EXPECT_EQ(config_hash(a), config_hash(b));
    b.seed = 2;
    EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, LoadFromFile) {
    auto dir = scratch_dir("cfg");
    std::ofstream(dir / "c.json") << config_to_json(small_config()).dump(2);
    EXPECT_EQ(config_to_json(load_config((dir / "c.json").string())), config_to_json(small_config()));
    EXPECT_THROW(load_config((dir / "missing.json").string()), ConfigError);
    std::ofstream(dir / "broken.json") << "{ not json";
    EXPECT_THROW(load_config((dir / "broken.json").string()), ConfigError);
}

// ---------------------------------------------------------------------------
// Corpus

TEST(Corpus, TenPerClassStrictParse) {
    auto c = gen_corpus(default_corpus_spec(10, 10), 3);
    ASSERT_EQ(c.files.size(), 20u);
    int mal = 0;
    std::set<std::string> ids;
    for (const auto& f : c.files) {
        EXPECT_NO_THROW(pe::parse(f.bytes, pe::ParseMode::strict)) << f.id;
        mal += f.label;
        ids.insert(f.id);
    }
    EXPECT_EQ(mal, 10);
    EXPECT_EQ(ids.size(), 20u);
    EXPECT_TRUE(c.warnings.empty());
}

TEST(Corpus, SameSeedByteIdentical) {
    auto a = gen_corpus(default_corpus_spec(5, 5), 11);
    auto b = gen_corpus(default_corpus_spec(5, 5), 11);
    auto c = gen_corpus(default_corpus_spec(5, 5), 12);
    ASSERT_EQ(a.files.size(), b.files.size());
    bool any_diff = false;
    for (std::size_t i = 0; i < a.files.size(); ++i) {
        EXPECT_EQ(a.files[i].bytes, b.files[i].bytes);
        any_diff |= a.files[i].bytes != c.files[i].bytes;
    }
    EXPECT_TRUE(any_diff);
}

TEST(Corpus, DegenerateSpecWarns) {
    auto spec = default_corpus_spec(3, 3);
    spec.malicious_profile = spec.benign_profile;
    Corpus c;
    ASSERT_NO_THROW(c = gen_corpus(spec, 1));
    EXPECT_EQ(c.files.size(), 6u);
    EXPECT_EQ(c.warnings.size(), 1u);
}

TEST(Corpus, PlantedSignalIsLearnable) {
    // A byte-histogram logistic regression separates the default classes.
    auto c = gen_corpus(default_corpus_spec(1000, 1000), 1);
    std::vector<int> labels;
    std::vector<std::vector<double>> hist;
    for (const auto& f : c.files) {
        labels.push_back(f.label);
        hist.push_back(byte_histogram(f.bytes).as_vector());
    }
    auto s = stratified_split(labels, 0.8, 0.1, 5);
    auto pick = [&](const std::vector<std::size_t>& idx, int label) {
        std::vector<std::vector<double>> rows;
        for (std::size_t i : idx) {
            if (labels[i] == label) rows.push_back(hist[i]);
        }
        return stack_rows(rows);
    };
    auto model = train_detector(DetectorKind::logreg, specs::bytes(), pick(s.train, 0), pick(s.train, 1), {}, 1);
    double tpr = detection_rate(model, pick(s.test, 1));
    double fpr = detection_rate(model, pick(s.test, 0));
    EXPECT_GE(0.5 * (tpr + 1.0 - fpr), 0.9);
}

TEST(Corpus, DiskRoundTrip) {
    auto dir = scratch_dir("corpus");
    auto c = gen_corpus(default_corpus_spec(3, 2), 4);
    auto manifest = write_corpus(c, dir, {{"seed", 4}});
    EXPECT_EQ(manifest.at("schema"), kManifestSchema);
    auto back = read_corpus(dir);
    ASSERT_EQ(back.files.size(), c.files.size());
    for (std::size_t i = 0; i < c.files.size(); ++i) {
        EXPECT_EQ(back.files[i].id, c.files[i].id);
        EXPECT_EQ(back.files[i].label, c.files[i].label);
        EXPECT_EQ(back.files[i].bytes, c.files[i].bytes);
    }
}

TEST(Corpus, IngestSkipsUnparseableFiles) {
    auto dir = scratch_dir("ingest");
    auto c = gen_corpus(default_corpus_spec(2, 2), 4);
    write_corpus(c, dir);
    binio::write_file((dir / "malicious" / "junk.bin").string(), std::vector<std::uint8_t>(64, 0x41));
    auto in = ingest_directories(dir / "benign", dir / "malicious");
    EXPECT_EQ(in.files.size(), 4u);
    ASSERT_EQ(in.warnings.size(), 1u);
    EXPECT_NE(in.warnings[0].find("junk.bin"), std::string::npos);
    EXPECT_THROW(ingest_directories(dir / "nope", dir / "malicious"), ConfigError);
}

// ---------------------------------------------------------------------------
// Split

TEST(Split, StratifiedAndExhaustive) {
    std::vector<int> labels;
    for (int i = 0; i < 130; ++i) labels.push_back(i < 100 ? 0 : 1);
    auto s = stratified_split(labels, 0.8, 0.1, 3);
    auto count = [&](const std::vector<std::size_t>& v, int label) {
        return std::count_if(v.begin(), v.end(), [&](std::size_t i) { return labels[i] == label; });
    };
    EXPECT_EQ(count(s.train, 0), 80);
    EXPECT_EQ(count(s.val, 0), 10);
    EXPECT_EQ(count(s.test, 0), 10);
    EXPECT_EQ(count(s.train, 1), 24);
    EXPECT_EQ(count(s.val, 1), 3);
    EXPECT_EQ(count(s.test, 1), 3);
    std::set<std::size_t> all;
    for (const auto* v : {&s.train, &s.val, &s.test}) all.insert(v->begin(), v->end());
    EXPECT_EQ(all.size(), labels.size());
}

TEST(Split, SeededAndSeedSensitive) {
    std::vector<int> labels(200);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 2);
    auto a = stratified_split(labels, 0.8, 0.1, 9);
    auto b = stratified_split(labels, 0.8, 0.1, 9);
    auto c = stratified_split(labels, 0.8, 0.1, 10);
    EXPECT_EQ(a.test, b.test);
    EXPECT_NE(a.test, c.test);
}

TEST(Split, GapSubsampleIsSeededAndBounded) {
    auto a = sweep_subsample(500, 200, 200);
    EXPECT_EQ(a.size(), 200u);
    EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
    EXPECT_EQ(a, sweep_subsample(500, 200, 200));
    EXPECT_NE(a, sweep_subsample(500, 200, 201));
    EXPECT_EQ(sweep_subsample(50, 200, 200).size(), 50u);
}

// ---------------------------------------------------------------------------
// Realization

TEST(Realize, BytePaddingMeetsGap) {
    auto image = pe::parse(gen_corpus(default_corpus_spec(1, 1), 2).files[1].bytes, pe::ParseMode::strict);
    std::vector<double> target(256, 1.0 / 256);
    auto r = realize_bytes(image, target, 0.001, GapUnits::ratio, 1ull << 30);
    ASSERT_TRUE(r.modified);
    EXPECT_TRUE(r.warnings.empty());
    auto h = byte_histogram(r.image.bytes());
    const double T = static_cast<double>(r.image.size());
    for (int i = 0; i < 256; ++i) {
        // certificate bound: count within g*T plus the integer-rounding slack
        EXPECT_LE(std::abs(static_cast<double>(h.counts[i]) - target[i] * T), 0.001 * T + kRoundingSlack + 1e-9);
    }
    EXPECT_EQ(r.image.size(), image.size() + r.added);
}

TEST(Realize, OversizedPlanKeepsOriginal) {
    auto image = pe::parse(gen_corpus(default_corpus_spec(1, 1), 2).files[1].bytes, pe::ParseMode::strict);
    std::vector<double> target(256, 1.0 / 256);
    auto r = realize_bytes(image, target, 0.0001, GapUnits::ratio, 1000, "f");
    EXPECT_FALSE(r.modified);
    EXPECT_EQ(r.image.bytes(), image.bytes());
    ASSERT_EQ(r.warnings.size(), 1u);
}

TEST(Realize, ImportCapTruncatesWithWarning) {
    auto image = pe::parse(gen_corpus(default_corpus_spec(1, 1), 2).files[1].bytes, pe::ParseMode::strict);
    auto existing = extract_imports(image);
    std::vector<std::string> wanted(existing.begin(), existing.end());
    for (int i = 0; i < 10; ++i) wanted.push_back("extra.dll!Fn" + std::to_string(i));
    auto r = realize_imports(image, wanted, existing, 4, "f");
    EXPECT_EQ(r.added, 4u);
    EXPECT_EQ(r.warnings.size(), 1u);
    auto after = extract_imports(pe::parse(r.image.serialize(), pe::ParseMode::strict));
    EXPECT_TRUE(std::includes(after.begin(), after.end(), existing.begin(), existing.end()));
    EXPECT_EQ(after.size(), existing.size() + 4);

    auto none = realize_imports(image, {existing.begin(), existing.end()}, existing, 4);
    EXPECT_FALSE(none.modified);
    EXPECT_TRUE(none.warnings.empty());
}

TEST(Realize, StringsAreRecoveredByExtraction) {
    auto image = pe::parse(gen_corpus(default_corpus_spec(1, 1), 2).files[0].bytes, pe::ParseMode::strict);
    auto existing = string_set(image.bytes());
    std::vector<std::string> wanted{"injected_marker_one", "injected_marker_two"};
    auto r = realize_strings(image, wanted, existing, 4096);
    ASSERT_TRUE(r.modified);
    auto after = string_set(pe::parse(r.image.serialize(), pe::ParseMode::strict).bytes());
    for (const auto& s : wanted) EXPECT_TRUE(after.count(s)) << s;
    EXPECT_TRUE(std::includes(after.begin(), after.end(), existing.begin(), existing.end()));
}

// ---------------------------------------------------------------------------
// Report

TEST(Report, JsonIsLossless) {
    auto r = fixture_report();
    auto back = report_from_json(nlohmann::json::parse(report_to_json(r).dump()));
    EXPECT_TRUE(back == r);
    ExperimentReport empty;
    EXPECT_TRUE(report_from_json(report_to_json(empty)) == empty);
    EXPECT_THROW(report_from_json({{"schema", "other"}}), FormatError);
}

TEST(Report, DeterministicDumpIgnoresRuntime) {
    auto a = fixture_report(), b = fixture_report();
    b.runtime.total_seconds = 99.0;
    b.runtime.stages["extra"] = 1.0;
    EXPECT_EQ(deterministic_dump(a), deterministic_dump(b));
    b.seed = 8;
    EXPECT_NE(deterministic_dump(a), deterministic_dump(b));
}

TEST(Report, GoldenRenderings) {
    const fs::path golden = fs::path(GEVD_SOURCE_DIR) / "tests" / "golden";
    auto r = fixture_report();
    EXPECT_EQ(render_markdown(r), read_text(golden / "report.md"));
    EXPECT_EQ(render_detection_csv(r), read_text(golden / "detection.csv"));
    EXPECT_EQ(render_gap_csv(r), read_text(golden / "gap_sweep.csv"));
    EXPECT_EQ(render_queries_csv(r), read_text(golden / "queries.csv"));
}

TEST(Report, EmptyAndSingleCell) {
    ExperimentReport empty;
    EXPECT_EQ(render_detection_csv(empty), "detector,original\n");
    EXPECT_EQ(render_gap_csv(empty), "gap,files,mean_size,mean_appended\n");
    EXPECT_NE(render_markdown(empty).find("_No detectors._"), std::string::npos);

    ExperimentReport one;
    one.detectors = {{"d", "logreg", "bytes", 256, 1.0, 0.5, 0.0}};
    EXPECT_EQ(render_detection_csv(one), "detector,original\nd,0.5\n");
    EXPECT_NE(render_markdown(one).find("| d | 50.00% |"), std::string::npos);
}

TEST(Report, RenderWritesFiles) {
    auto dir = scratch_dir("render");
    auto r = fixture_report();
    EXPECT_EQ(report_render(r, ReportFormat::csv, dir).size(), 3u);
    EXPECT_EQ(report_render(r, ReportFormat::markdown, dir).size(), 1u);
    report_render(r, ReportFormat::json, dir);
    EXPECT_TRUE(load_report((dir / "report.json").string()) == r);
    EXPECT_THROW(report_format_from_string("xml"), ConfigError);
}

// ---------------------------------------------------------------------------
// Pipeline

TEST(Pipeline, EmptyAttackRosterReportsOriginalsOnly) {
    auto cfg = small_config(30);
    cfg.attacks.clear();
    auto r = run_pipeline(cfg);
    EXPECT_EQ(r.detectors.size(), cfg.detectors.size());
    EXPECT_TRUE(r.attacks.empty());
    EXPECT_TRUE(r.gap_sweep.empty());
    EXPECT_FALSE(r.exact.has_value());
    for (const auto& d : r.detectors) {
        EXPECT_GE(d.detection_rate, 0.0);
        EXPECT_LE(d.detection_rate, 1.0);
    }
    std::istringstream csv(render_detection_csv(r));
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header, "detector,original");
}

TEST(Pipeline, SmallRunCoversEveryStage) {
    auto dir = scratch_dir("pipeline");
    auto cfg = small_config();
    cfg.write_adversarial = true;
    auto r = run_pipeline(cfg, dir);

    ASSERT_EQ(r.gap_sweep.size(), 9u);
    for (std::size_t i = 0; i < r.gap_sweep.size(); ++i) {
        EXPECT_EQ(r.gap_sweep[i].gap, cfg.gap_sweep[i]);
        EXPECT_EQ(r.gap_sweep[i].detection.size(), cfg.detectors.size());
    }
    ASSERT_TRUE(r.exact.has_value());
    EXPECT_GT(r.exact->files, 0u);
    ASSERT_EQ(r.attacks.size(), cfg.attacks.size());
    for (const auto& a : r.attacks) {
        EXPECT_EQ(a.files, 4u) << a.name; // 10% of 40 malicious
        EXPECT_EQ(a.detection.size(), cfg.detectors.size());
        if (a.method == "gan") {
            EXPECT_EQ(a.query_count, 0u) << a.name;
        }
        if (a.method == "malgan") {
            EXPECT_GT(a.query_count, 0u) << a.name;
        }
        EXPECT_EQ(a.superset.files_superset, a.superset.files_checked) << a.name;
        EXPECT_EQ(a.superset.vectors_superset, a.superset.vectors_checked) << a.name;
    }
    EXPECT_EQ(r.config_hash, config_hash(cfg));
    EXPECT_EQ(r.corpus.at("split").at("test").at("malicious"), 4);

    for (const char* f : {"report.json", "report.md", "detection.csv", "gap_sweep.csv", "queries.csv", "vocab_api.txt",
                          "vocab_strings.txt", "detectors/bytes_logreg.gevd", "attacks/gan_bytes.gevd",
                          "attacks/malgan_api.gevd"}) {
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    }
    EXPECT_TRUE(load_report((dir / "report.json").string()) == r);
    auto det = decode_detector(binio::read_file((dir / "detectors/bytes_logreg.gevd").string()));
    EXPECT_EQ(det.spec, specs::bytes());
    std::size_t written = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir / "adversarial")) {
        if (e.is_regular_file()) {
            EXPECT_NO_THROW(pe::parse(binio::read_file(e.path().string()), pe::ParseMode::strict));
            ++written;
        }
    }
    EXPECT_EQ(written, 4u * cfg.attacks.size());
}

TEST(Pipeline, CorpusCacheIsTransparent) {
    auto cache = scratch_dir("cache");
    auto cfg = small_config(10);
    auto direct = prepare_data(cfg);
    ::setenv(kCacheEnvVar, cache.c_str(), 1);
    auto first = prepare_data(cfg);
    auto second = prepare_data(cfg);
    ::unsetenv(kCacheEnvVar);
    std::size_t entries = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(cache)) ++entries;
    EXPECT_EQ(entries, 1u);
    ASSERT_EQ(second.corpus.files.size(), direct.corpus.files.size());
    for (std::size_t i = 0; i < direct.corpus.files.size(); ++i) {
        EXPECT_EQ(first.corpus.files[i].bytes, direct.corpus.files[i].bytes);
        EXPECT_EQ(second.corpus.files[i].bytes, direct.corpus.files[i].bytes);
    }
    EXPECT_EQ(second.split.test, direct.split.test);
}

TEST(Pipeline, StageFailureNamesTheStage) {
    auto dir = scratch_dir("stagefail");
    fs::create_directories(dir / "b");
    fs::create_directories(dir / "m");
    binio::write_file((dir / "b" / "x.bin").string(), std::vector<std::uint8_t>(10, 1));
    auto mal = gen_corpus(default_corpus_spec(1, 3), 1);
    for (const auto& f : mal.files) binio::write_file((dir / "m" / (f.id + ".exe")).string(), f.bytes);
    auto cfg = small_config();
    cfg.corpus.kind = "directory";
    cfg.corpus.benign_dir = (dir / "b").string();
    cfg.corpus.malicious_dir = (dir / "m").string();
    try {
        run_pipeline(cfg);
        FAIL() << "expected a stage failure";
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage, "split");
    }
    cfg.corpus.benign_dir = (dir / "missing").string();
    EXPECT_THROW(run_pipeline(cfg), ConfigError);
}
