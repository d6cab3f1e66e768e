#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "json.hpp"
#include "numanchor/cli_pipeline.hpp"
#include "numanchor/errors.hpp"
#include "numanchor/numeral_parser.hpp"
#include "numanchor/text_util.hpp"

using namespace numanchor;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("numanchor_test_" + tag + "_" + std::to_string(std::random_device{}()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

PipelineConfig small_config(const fs::path& out) {
    auto c = parse_config(R"(
[corpus]
sentences = 300

[anchors]
k = 6

[encoder]
hidden = 16
heads = 2
ffn = 32
max_seq_len = 32
epochs = 1
batch_size = 32

[probe]
tasks = decoding,addition,list_min
ranges = 1k-10k,all
decoding_samples = 40
addition_samples = 40
list_samples = 40
list_epochs = 1
gbt_trees = 5
heatmap_max = 20

[run]
seed = 11
deterministic = true
)");
    c.out = out;
    return c;
}

std::string manifest_of(const fs::path& out) { return read_file(out / kManifestFile); }

}  // namespace

TEST_CASE("minimal config is filled with the desk defaults") {
    const auto c = parse_config("[run]\nseed = 1\n");
    const auto text = format_config(c);
    for (const char* line : {"layers = 4", "hidden = 128", "heads = 4", "ffn = 512", "max_seq_len = 128", "epochs = 6",
                             "batch_size = 32", "learning_rate = 1e-04", "warmup_fraction = 0.1", "strategy = ln_anchors_dir",
                             "decoding_samples = 1000", "gbt_trees = 200", "list_epochs = 50", "sentences = 20000",
                             "oov = neighbour_mean", "seed = 1"}) {
        CHECK_MESSAGE(text.find(std::string(line) + "\n") != std::string::npos, std::string(line));
    }
    // the echo parses back to itself
    CHECK(format_config(parse_config(text)) == text);
}

TEST_CASE("config validation") {
    CHECK_THROWS_AS(parse_config("[encoder]\nhiden = 3\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[nope]\nx = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[encoder]\nlayers = many\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[augment]\nstrategy = sideways\n"), ConfigError);

    auto c = parse_config("[augment]\nstrategy = ln_anchors\n[anchors]\nspace = linear\n[run]\nseed = 1\n");
    CHECK_THROWS_AS(validate_config(c), ConfigError);
    c.space = Space::Log;
    CHECK_NOTHROW(validate_config(c));

    auto d = parse_config("[run]\ndeterministic = true\n");
    CHECK_THROWS_AS(validate_config(d), ConfigError);
    d.seed = 4;
    CHECK_NOTHROW(validate_config(d));

    auto e = parse_config("[corpus]\nsource = file\npath = /definitely/not/here.txt\n[run]\nseed = 1\n");
    CHECK_THROWS_AS(validate_config(e), ConfigError);

    auto f = parse_config("[encoder]\nlayers = 3\n[run]\nseed = 1\n");
    CHECK_THROWS_AS(validate_config(f), ConfigError);

    auto g = parse_config("[augment]\nstrategy = none\n[encoder]\nmasking = anchor\n[run]\nseed = 1\n");
    CHECK_THROWS_AS(validate_config(g), ConfigError);
    CHECK(parse_config("[augment]\nstrategy = none\n").effective_masking() == MaskingMode::Random);
}

TEST_CASE("a linear anchor table cannot feed a log strategy") {
    TempDir dir("table");
    GmmModel m;
    m.components = {{0.5, 10.0, 1.0}, {0.5, 50.0, 1.0}};
    m.space = Space::Linear;
    const auto table_path = dir.path / "linear.tsv";
    write_file_atomic(table_path, serialize_anchor_table(induce_anchors(m)));
    const auto cfg_path = dir.path / "cfg.ini";
    write_file_atomic(cfg_path, "[augment]\nstrategy = ln_anchors\n[anchors]\ntable = linear.tsv\n[run]\nseed = 2\n");
    CHECK_THROWS_AS(load_config(cfg_path), ConfigError);
    write_file_atomic(cfg_path, "[augment]\nstrategy = anchors\n[anchors]\ntable = linear.tsv\n[run]\nseed = 2\n");
    CHECK(load_config(cfg_path).anchor_table == table_path);
}

TEST_CASE("load_config resolves paths and applies flag overrides") {
    TempDir dir("load");
    const auto cfg_path = dir.path / "cfg.ini";
    write_file_atomic(cfg_path, "[run]\nseed = 2\nout = results\n");
    auto c = load_config(cfg_path);
    CHECK(c.out == dir.path / "results");
    CHECK(*c.seed == 2);
    ConfigOverrides o;
    o.seed = 9;
    o.out = dir.path / "elsewhere";
    o.deterministic = true;
    c = load_config(cfg_path, o);
    CHECK(*c.seed == 9);
    CHECK(c.deterministic);
    CHECK(c.out == dir.path / "elsewhere");
    CHECK_THROWS_AS(load_config(dir.path / "missing.ini"), ConfigError);
    write_file_atomic(cfg_path, "[run]\n");
    CHECK(load_config(cfg_path).seed.has_value());  // a fresh seed is drawn and recorded
}

TEST_CASE("stage dependencies and exit codes") {
    TempDir dir("deps");
    const auto c = small_config(dir.path / "out");
    try {
        run_stage(c, Stage::Augment);
        FAIL("expected a dependency error");
    } catch (const DependencyError& e) {
        CHECK(std::string(e.what()).find("anchors") != std::string::npos);
        CHECK(exit_code_for(e) == 3);
    }
    CHECK(exit_code_for(ConfigError("x")) == 2);
    CHECK(exit_code_for(StalenessError("x")) == 3);
    CHECK(exit_code_for(TrainingDivergedError("x")) == 4);
    CHECK(exit_code_for(std::runtime_error("x")) == 4);
}

TEST_CASE("stages are idempotent and detect stale inputs") {
    TempDir dir("stale");
    const auto out = dir.path / "out";
    auto c = small_config(out);
    CHECK_FALSE(run_stage(c, Stage::Extract).skipped);
    CHECK_FALSE(run_stage(c, Stage::Anchors).skipped);
    const auto before = manifest_of(out);
    const auto table_time = fs::last_write_time(out / "anchors/anchor_table.tsv");
    CHECK(run_stage(c, Stage::Anchors).skipped);
    CHECK(manifest_of(out) == before);
    CHECK(fs::last_write_time(out / "anchors/anchor_table.tsv") == table_time);
    CHECK(read_file(out / kNormalizedConfigFile) == format_config(c));

    // tampered upstream artifact
    const auto occ = read_file(out / "extract/occurrences.tsv");
    write_file_atomic(out / "extract/occurrences.tsv", occ + "0\t0\t7\t7\n");
    CHECK_THROWS_AS(run_stage(c, Stage::Augment), StalenessError);
    write_file_atomic(out / "extract/occurrences.tsv", occ);
    CHECK_NOTHROW(run_stage(c, Stage::Augment));

    // upstream configuration changed but not re-run
    auto changed = c;
    changed.k = 5;
    CHECK_THROWS_AS(run_stage(changed, Stage::Augment), StalenessError);
    CHECK_FALSE(run_stage(changed, Stage::Anchors).skipped);
    // augment is now older than the new anchor table
    CHECK_THROWS_AS(run_stage(changed, Stage::Train), StalenessError);
    CHECK_FALSE(run_stage(changed, Stage::Augment).skipped);

    // a deleted upstream artifact is a missing dependency
    fs::remove(out / "augment/augmented.txt");
    CHECK_THROWS_AS(run_stage(changed, Stage::Train), DependencyError);
}

TEST_CASE("a failed stage leaves no artifact behind") {
    TempDir dir("diverge");
    const auto out = dir.path / "out";
    auto c = small_config(out);
    c.encoder.learning_rate = 1e36;
    c.encoder.grad_clip = 0.0;
    c.encoder.warmup_fraction = 0.0;
    for (auto s : {Stage::Extract, Stage::Anchors, Stage::Augment}) run_stage(c, s);
    try {
        run_stage(c, Stage::Train);
        FAIL("expected divergence");
    } catch (const TrainingDivergedError& e) {
        CHECK(exit_code_for(e) == 4);
    }
    CHECK_FALSE(fs::exists(out / "train"));
    CHECK_FALSE(nlohmann::json::parse(manifest_of(out))["stages"].contains("train"));
    for (const auto& entry : fs::recursive_directory_iterator(out)) {
        CHECK(entry.path().filename().string().find(".tmp") == std::string::npos);
    }
}

TEST_CASE("sweep over {1,2,4,8} on two clusters records K = 2") {
    TempDir dir("sweep");
    std::mt19937_64 rng(21);
    std::normal_distribution<double> n(0.0, 0.15);
    std::string corpus;
    std::vector<double> values;
    for (int i = 0; i < 600; ++i) {
        const double v = (i % 2 ? 20.0 : 50000.0) * std::exp(n(rng));
        const auto surface = format_fixed(v, 3);
        values.push_back(parse_numeral(surface));
        corpus += "we counted " + surface + " items .\n";
    }
    write_file_atomic(dir.path / "corpus.txt", corpus);
    write_file_atomic(dir.path / "cfg.ini",
                      "[corpus]\nsource = file\npath = corpus.txt\n[anchors]\nk = auto\nsweep = 1,2,4,8\n[run]\nseed = 5\n");
    auto c = load_config(dir.path / "cfg.ini", {.out = dir.path / "out"});
    run_stage(c, Stage::Extract);
    run_stage(c, Stage::Anchors);
    const auto manifest = nlohmann::json::parse(manifest_of(c.out));
    const std::size_t recorded = manifest["stages"]["anchors"]["details"]["chosen_k"];

    GmmOptions go;
    go.seed = 5;
    go.space = Space::Log;
    const auto oracle = sweep_k(to_fit_space(values, Space::Log), {1, 2, 4, 8}, c.restarts, go);
    CHECK(oracle.chosen_k == 2);
    CHECK(recorded == oracle.chosen_k);
    CHECK(fs::exists(c.out / "anchors/sweep.tsv"));
}

TEST_CASE("full pipeline: report matches the harness and reruns are byte-identical") {
    TempDir dir("full");
    const auto a = small_config(dir.path / "a");
    const auto b = small_config(dir.path / "b");
    run_all(a);
    run_all(b);
    for (const char* rel : {"report/metric_grid.tsv", "report/heatmap.tsv", "report/scatter.csv",
                            "probe/probe_report.tsv", "train/checkpoint.bin", "train/training_log.tsv", "augment/augmented.txt",
                            "anchors/anchor_table.tsv", kManifestFile}) {
        CHECK_MESSAGE(read_file(a.out / rel) == read_file(b.out / rel), rel);
    }
    for (const auto& s : run_all(a)) CHECK(s.skipped);

    // oracle: the harness run directly on the stored checkpoint
    const auto ckpt = load_checkpoint(a.out / "train/checkpoint.bin");
    std::vector<double> values;
    for (const auto& o : parse_occurrences(read_file(a.out / "extract/occurrences.tsv"))) values.push_back(o.value);
    auto plan = a.probe;
    plan.seed = *a.seed;
    for (int v = 1; v <= 20; ++v) plan.heatmap_values.push_back(v);
    const auto direct = run_probe_plan(plan, NumeralEmbedder(ckpt, a.oov), values);
    CHECK(read_file(a.out / "report/metric_grid.tsv") == format_metric_grid(direct));
    CHECK(read_file(a.out / "report/heatmap.tsv") == format_heatmap(direct.heatmap_values, direct.heatmap));
    CHECK(read_file(a.out / "report/scatter.csv") == format_scatter_csv(direct.scatter));
    const auto grid = read_file(a.out / "report/metric_grid.tsv");
    CHECK(grid.find("addition/ood") != std::string::npos);
    CHECK(grid.find("n/a") != std::string::npos);  // OOD over ALL is not admissible
    CHECK_FALSE(fs::exists(a.out / "report/heatmap_bands.tsv"));  // 20 values cannot hold the far band
}

TEST_CASE("control pipeline trains with random masking") {
    TempDir dir("control");
    auto c = small_config(dir.path / "out");
    c.strategy.reset();
    run_all(c);
    const auto manifest = nlohmann::json::parse(manifest_of(c.out));
    CHECK(manifest["stages"]["train"]["params"]["masking"] == "random");
    CHECK(manifest["stages"]["augment"]["details"]["strategy"] == "none");
    CHECK(read_file(c.out / "augment/augmented.txt") == read_file(c.out / "extract/tokens.txt"));
}
