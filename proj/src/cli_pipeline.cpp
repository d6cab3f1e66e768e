#include "numanchor/cli_pipeline.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "numanchor/errors.hpp"
#include "numanchor/numeral_parser.hpp"
#include "numanchor/text_util.hpp"
#include "numanchor/vocab.hpp"

namespace numanchor {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Stage stage) noexcept {
    switch (stage) {
        case Stage::Extract: return "extract";
        case Stage::Anchors: return "anchors";
        case Stage::Augment: return "augment";
        case Stage::Train: return "train";
        case Stage::Probe: return "probe";
        case Stage::Report: return "report";
    }
    return "?";
}

Stage parse_stage(std::string_view text) {
    for (auto s : all_stages())
        if (to_string(s) == text) return s;
    throw ConfigError("unknown stage '" + std::string(text) + "'");
}

const std::vector<Stage>& all_stages() {
    static const std::vector<Stage> stages{Stage::Extract, Stage::Anchors, Stage::Augment,
                                           Stage::Train,   Stage::Probe,   Stage::Report};
    return stages;
}

std::vector<Stage> upstream_of(Stage stage) {
    switch (stage) {
        case Stage::Extract: return {};
        case Stage::Anchors: return {Stage::Extract};
        case Stage::Augment: return {Stage::Extract, Stage::Anchors};
        case Stage::Train: return {Stage::Augment};
        case Stage::Probe: return {Stage::Extract, Stage::Train};
        case Stage::Report: return {Stage::Probe};
    }
    return {};
}

Space PipelineConfig::effective_space() const {
    if (strategy) return strategy_space(*strategy);
    return space.value_or(Space::Log);
}

MaskingMode PipelineConfig::effective_masking() const {
    if (masking_auto) return strategy ? MaskingMode::Anchor : MaskingMode::Random;
    return encoder.masking;
}

// ---------------------------------------------------------------------------
// Config keys. One table drives parsing and the normalized echo.

namespace {

std::string path_string(const fs::path& p) { return p.empty() ? std::string() : p.generic_string(); }

fs::path resolve(std::string_view text, const fs::path& base) {
    if (text.empty()) return {};
    fs::path p{std::string(text)};
    if (p.is_relative() && !base.empty()) p = base / p;
    return p.lexically_normal();
}

bool parse_bool(std::string_view text) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw ConfigError("expected a boolean, got '" + std::string(text) + "'");
}

template <typename T, typename F>
std::vector<T> parse_list(std::string_view text, F&& parse_one) {
    std::vector<T> out;
    for (auto part : split(text, ',')) {
        const auto t = trim(part);
        if (!t.empty()) out.push_back(parse_one(t));
    }
    return out;
}

template <typename T, typename F>
std::string format_list(const std::vector<T>& items, F&& fmt) {
    std::vector<std::string> parts;
    for (const auto& v : items) parts.push_back(std::string(fmt(v)));
    return join(parts, ",");
}

std::string strategy_name(const std::optional<Strategy>& s) { return s ? std::string(to_string(*s)) : "none"; }

std::string_view masking_name(MaskingMode m) { return m == MaskingMode::Anchor ? "anchor" : "random"; }

struct Field {
    const char* section;
    const char* key;
    std::function<void(PipelineConfig&, std::string_view, const fs::path&)> set;
    std::function<std::string(const PipelineConfig&)> get;
};

#define NA_SIZE(sec, name, member)                                                                              \
    Field {                                                                                                     \
        sec, name, [](PipelineConfig& c, std::string_view v, const fs::path&) { c.member = parse_size(v); },     \
            [](const PipelineConfig& c) { return std::to_string(c.member); }                                    \
    }
#define NA_DOUBLE(sec, name, member)                                                                            \
    Field {                                                                                                     \
        sec, name, [](PipelineConfig& c, std::string_view v, const fs::path&) { c.member = parse_double(v); },   \
            [](const PipelineConfig& c) { return format_double(c.member); }                                     \
    }

const std::vector<Field>& fields() {
    static const std::vector<Field> table{
        {"corpus", "source",
         [](PipelineConfig& c, std::string_view v, const fs::path&) {
             if (v == "synthetic") c.corpus_source = CorpusSource::Synthetic;
             else if (v == "file") c.corpus_source = CorpusSource::File;
             else throw ConfigError("corpus.source must be synthetic or file, got '" + std::string(v) + "'");
         },
         [](const PipelineConfig& c) { return std::string(c.corpus_source == CorpusSource::File ? "file" : "synthetic"); }},
        {"corpus", "path", [](PipelineConfig& c, std::string_view v, const fs::path& b) { c.corpus_path = resolve(v, b); },
         [](const PipelineConfig& c) { return path_string(c.corpus_path); }},
        NA_SIZE("corpus", "sentences", synthetic.sentences),
        NA_DOUBLE("corpus", "min_value", synthetic.min_value),
        NA_DOUBLE("corpus", "max_value", synthetic.max_value),
        {"corpus", "significant_digits",
         [](PipelineConfig& c, std::string_view v, const fs::path&) { c.synthetic.significant_digits = static_cast<int>(parse_size(v)); },
         [](const PipelineConfig& c) { return std::to_string(c.synthetic.significant_digits); }},
        NA_DOUBLE("corpus", "cue_accuracy", synthetic.cue_accuracy),
        NA_DOUBLE("corpus", "comma_rate", synthetic.comma_rate),
        NA_DOUBLE("corpus", "probe_frame_rate", synthetic.probe_frame_rate),

        {"augment", "strategy",
         [](PipelineConfig& c, std::string_view v, const fs::path&) {
             if (v == "none") c.strategy.reset();
             else c.strategy = parse_strategy(v);
         },
         [](const PipelineConfig& c) { return strategy_name(c.strategy); }},
        {"augment", "log_rendering",
         [](PipelineConfig& c, std::string_view v, const fs::path&) {
             if (v == "log_value") c.log_rendering = LogRendering::LogValue;
             else if (v == "magnitude") c.log_rendering = LogRendering::Magnitude;
             else throw ConfigError("augment.log_rendering must be log_value or magnitude");
         },
         [](const PipelineConfig& c) {
             return std::string(c.log_rendering == LogRendering::LogValue ? "log_value" : "magnitude");
         }},

        {"anchors", "k",
         [](PipelineConfig& c, std::string_view v, const fs::path&) {
             if (v == "auto") c.k.reset();
             else c.k = parse_size(v);
         },
         [](const PipelineConfig& c) { return c.k ? std::to_string(*c.k) : std::string("auto"); }},
        {"anchors", "sweep",
         [](PipelineConfig& c, std::string_view v, const fs::path&) {
             c.sweep = parse_list<std::size_t>(v, [](std::string_view t) { return parse_size(t); });
         },
         [](const PipelineConfig& c) { return format_list(c.sweep, [](std::size_t k) { return std::to_string(k); }); }},
        {"anchors", "space",
         [](PipelineConfig& c, std::string_view v, const fs::path&) {
             if (v == "auto") c.space.reset();
             else c.space = parse_space(v);
         },
         [](const PipelineConfig& c) { return c.space ? std::string(to_string(*c.space)) : std::string("auto"); }},
        {"anchors", "table", [](PipelineConfig& c, std::string_view v, const fs::path& b) { c.anchor_table = resolve(v, b); },
         [](const PipelineConfig& c) { return path_string(c.anchor_table); }},
        NA_SIZE("anchors", "restarts", restarts),
        NA_DOUBLE("anchors", "tolerance", tolerance),
        NA_SIZE("anchors", "max_iters", max_iters),

        NA_SIZE("encoder", "layers", encoder.layers),
        NA_SIZE("encoder", "hidden", encoder.hidden),
        NA_SIZE("encoder", "heads", encoder.heads),
        NA_SIZE("encoder", "ffn", encoder.ffn),
        NA_SIZE("encoder", "max_seq_len", encoder.max_seq_len),
        NA_DOUBLE("encoder", "dropout", encoder.dropout),
        NA_SIZE("encoder", "epochs", encoder.epochs),
        NA_SIZE("encoder", "batch_size", encoder.batch_size),
        NA_DOUBLE("encoder", "learning_rate", encoder.learning_rate),
        NA_DOUBLE("encoder", "warmup_fraction", encoder.warmup_fraction),
        NA_DOUBLE("encoder", "grad_clip", encoder.grad_clip),
        {"encoder", "masking",
         [](PipelineConfig& c, std::string_view v, const fs::path&) {
             c.masking_auto = v == "auto";
             if (v == "anchor") c.encoder.masking = MaskingMode::Anchor;
             else if (v == "random") c.encoder.masking = MaskingMode::Random;
             else if (!c.masking_auto) throw ConfigError("encoder.masking must be auto, anchor or random");
         },
         [](const PipelineConfig& c) { return c.masking_auto ? std::string("auto") : std::string(masking_name(c.encoder.masking)); }},
        NA_DOUBLE("encoder", "random_mask_rate", encoder.random_mask_rate),
        NA_SIZE("encoder", "min_frequency", min_frequency),

        {"probe", "tasks",
         [](PipelineConfig& c, std::string_view v, const fs::path&) {
             c.probe.tasks = parse_list<ProbeTask>(v, [](std::string_view t) { return parse_probe_task(t); });
         },
         [](const PipelineConfig& c) { return format_list(c.probe.tasks, [](ProbeTask t) { return to_string(t); }); }},
        {"probe", "ranges",
         [](PipelineConfig& c, std::string_view v, const fs::path&) {
             c.probe.ranges = parse_list<RangeLabel>(v, [](std::string_view t) { return parse_range_label(t); });
         },
         [](const PipelineConfig& c) { return format_list(c.probe.ranges, [](RangeLabel r) { return to_string(r); }); }},
        {"probe", "splits",
         [](PipelineConfig& c, std::string_view v, const fs::path&) {
             c.probe.splits = parse_list<Split>(v, [](std::string_view t) { return parse_split(t); });
         },
         [](const PipelineConfig& c) { return format_list(c.probe.splits, [](Split s) { return to_string(s); }); }},
        NA_SIZE("probe", "decoding_samples", probe.decoding_samples),
        NA_SIZE("probe", "addition_samples", probe.addition_samples),
        NA_SIZE("probe", "list_samples", probe.list_samples),
        NA_SIZE("probe", "gbt_trees", probe.gbt.trees),
        NA_SIZE("probe", "gbt_depth", probe.gbt.max_depth),
        NA_DOUBLE("probe", "gbt_learning_rate", probe.gbt.learning_rate),
        NA_SIZE("probe", "gbt_min_leaf", probe.gbt.min_samples_leaf),
        NA_SIZE("probe", "list_layers", probe.classifier.layers),
        NA_SIZE("probe", "list_hidden", probe.classifier.hidden),
        NA_SIZE("probe", "list_epochs", probe.classifier.epochs),
        NA_DOUBLE("probe", "list_learning_rate", probe.classifier.learning_rate),
        {"probe", "oov",
         [](PipelineConfig& c, std::string_view v, const fs::path&) {
             if (v == "neighbour_mean") c.oov = OovPolicy::NeighbourMean;
             else if (v == "raw_unk") c.oov = OovPolicy::RawUnk;
             else throw ConfigError("probe.oov must be neighbour_mean or raw_unk");
         },
         [](const PipelineConfig& c) { return std::string(c.oov == OovPolicy::NeighbourMean ? "neighbour_mean" : "raw_unk"); }},
        NA_SIZE("probe", "heatmap_min", heatmap_min),
        NA_SIZE("probe", "heatmap_max", heatmap_max),

        {"run", "out", [](PipelineConfig& c, std::string_view v, const fs::path& b) { c.out = resolve(v, b); },
         [](const PipelineConfig& c) { return path_string(c.out); }},
        {"run", "seed",
         [](PipelineConfig& c, std::string_view v, const fs::path&) {
             if (v.empty()) c.seed.reset();
             else c.seed = parse_size(v);
         },
         [](const PipelineConfig& c) { return c.seed ? std::to_string(*c.seed) : std::string(); }},
        {"run", "deterministic",
         [](PipelineConfig& c, std::string_view v, const fs::path&) { c.deterministic = parse_bool(v); },
         [](const PipelineConfig& c) { return std::string(c.deterministic ? "true" : "false"); }},
    };
    return table;
}

#undef NA_SIZE
#undef NA_DOUBLE

}  // namespace

PipelineConfig parse_config(std::string_view text, const fs::path& base_dir) {
    boost::property_tree::ptree tree;
    std::istringstream in{std::string(text)};
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError("config: " + std::string(e.what()));
    }
    std::map<std::string, const Field*> by_name;
    for (const auto& f : fields()) by_name[std::string(f.section) + "." + f.key] = &f;

    PipelineConfig config;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            throw ConfigError("config: key '" + section + "' is outside any section");
        }
        for (const auto& [key, node] : body) {
            const std::string name = section + "." + key;
            const auto it = by_name.find(name);
            if (it == by_name.end()) throw ConfigError("config: unknown key '" + name + "'");
            try {
                it->second->set(config, trim(node.data()), base_dir);
            } catch (const ConfigError&) {
                throw;
            } catch (const Error& e) {
                throw ConfigError("config: bad value for '" + name + "': " + e.what());
            }
        }
    }
    return config;
}

std::string format_config(const PipelineConfig& config) {
    std::string out;
    std::string section;
    for (const auto& f : fields()) {
        if (section != f.section) {
            if (!section.empty()) out += '\n';
            section = f.section;
            out += "[" + section + "]\n";
        }
        out += std::string(f.key) + " = " + f.get(config) + '\n';
    }
    return out;
}

void validate_config(const PipelineConfig& c) {
    if (c.corpus_source == CorpusSource::File) {
        if (c.corpus_path.empty()) throw ConfigError("corpus.source = file needs corpus.path");
        if (!fs::is_regular_file(c.corpus_path)) {
            throw ConfigError("corpus file " + c.corpus_path.string() + " does not exist");
        }
    } else {
        const auto& s = c.synthetic;
        if (s.sentences == 0) throw ConfigError("corpus.sentences must be positive");
        if (!(s.min_value >= 1.0 && s.max_value > s.min_value)) throw ConfigError("corpus needs 1 <= min_value < max_value");
        if (s.significant_digits < 1) throw ConfigError("corpus.significant_digits must be positive");
        for (double r : {s.cue_accuracy, s.comma_rate, s.probe_frame_rate})
            if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("corpus rates must lie in [0, 1]");
    }

    if (c.strategy && c.space && *c.space != strategy_space(*c.strategy)) {
        throw ConfigError("strategy " + strategy_name(c.strategy) + " needs " +
                          std::string(to_string(strategy_space(*c.strategy))) + "-space anchors, but anchors.space is " +
                          std::string(to_string(*c.space)));
    }
    if (!c.anchor_table.empty()) {
        if (!fs::is_regular_file(c.anchor_table)) {
            throw ConfigError("anchor table " + c.anchor_table.string() + " does not exist");
        }
        const auto table = parse_anchor_table(read_file(c.anchor_table));
        if (table.space != c.effective_space()) {
            throw ConfigError("strategy " + strategy_name(c.strategy) + " needs a " +
                              std::string(to_string(c.effective_space())) + "-space anchor table, but " +
                              c.anchor_table.string() + " is " + std::string(to_string(table.space)));
        }
    }
    if (c.k && *c.k == 0) throw ConfigError("anchors.k must be positive or auto");
    if (!c.k) {
        if (c.sweep.empty()) throw ConfigError("anchors.k = auto needs a non-empty anchors.sweep");
        for (auto k : c.sweep)
            if (k == 0) throw ConfigError("anchors.sweep entries must be positive");
    }
    if (c.restarts == 0) throw ConfigError("anchors.restarts must be positive");
    if (!(c.tolerance > 0.0)) throw ConfigError("anchors.tolerance must be positive");
    if (c.max_iters == 0) throw ConfigError("anchors.max_iters must be positive");

    c.encoder.validate();
    if (!c.strategy && !c.masking_auto && c.encoder.masking == MaskingMode::Anchor) {
        throw ConfigError("encoder.masking = anchor needs an anchored strategy; the control has nothing to mask");
    }
    if (c.min_frequency == 0) throw ConfigError("encoder.min_frequency must be positive");

    if (c.probe.tasks.empty() || c.probe.ranges.empty() || c.probe.splits.empty()) {
        throw ConfigError("probe.tasks, probe.ranges and probe.splits must be non-empty");
    }
    for (auto n : {c.probe.decoding_samples, c.probe.addition_samples, c.probe.list_samples})
        if (n < 10) throw ConfigError("probe sample counts must be at least 10");
    if (c.probe.gbt.max_depth == 0 || c.probe.gbt.min_samples_leaf == 0) {
        throw ConfigError("probe.gbt_depth and probe.gbt_min_leaf must be positive");
    }
    if (!(c.probe.gbt.learning_rate > 0.0)) throw ConfigError("probe.gbt_learning_rate must be positive");
    if (c.probe.classifier.layers == 0 || c.probe.classifier.hidden == 0) {
        throw ConfigError("probe.list_layers and probe.list_hidden must be positive");
    }
    if (!(c.probe.classifier.learning_rate > 0.0)) throw ConfigError("probe.list_learning_rate must be positive");
    if (c.heatmap_min == 0 || c.heatmap_max < c.heatmap_min) {
        throw ConfigError("probe needs 1 <= heatmap_min <= heatmap_max");
    }

    if (c.out.empty()) throw ConfigError("run.out must be set");
    if (c.deterministic && !c.seed) throw ConfigError("run.deterministic = true needs run.seed");
}

PipelineConfig load_config(const fs::path& path, const ConfigOverrides& overrides) {
    if (!fs::is_regular_file(path)) throw ConfigError("config file " + path.string() + " does not exist");
    auto config = parse_config(read_file(path), path.parent_path());
    if (overrides.out) config.out = *overrides.out;
    if (overrides.seed) config.seed = *overrides.seed;
    if (overrides.deterministic) config.deterministic = true;
    if (!config.seed && !config.deterministic) config.seed = std::random_device{}();
    validate_config(config);
    return config;
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

struct Artifacts {
    std::map<std::string, std::string> files;  // relative path -> contents
    json details = json::object();
};

json stage_params(const PipelineConfig& c, Stage stage) {
    json p;
    const auto seed = c.seed.value_or(0);
    switch (stage) {
        case Stage::Extract:
            p["source"] = c.corpus_source == CorpusSource::File ? "file" : "synthetic";
            if (c.corpus_source == CorpusSource::File) {
                p["path"] = path_string(c.corpus_path);
            } else {
                p["sentences"] = c.synthetic.sentences;
                p["min_value"] = c.synthetic.min_value;
                p["max_value"] = c.synthetic.max_value;
                p["significant_digits"] = c.synthetic.significant_digits;
                p["cue_accuracy"] = c.synthetic.cue_accuracy;
                p["comma_rate"] = c.synthetic.comma_rate;
                p["probe_frame_rate"] = c.synthetic.probe_frame_rate;
                p["seed"] = seed;
            }
            break;
        case Stage::Anchors:
            p["space"] = to_string(c.effective_space());
            if (!c.anchor_table.empty()) {
                p["table"] = path_string(c.anchor_table);
                break;
            }
            p["k"] = c.k ? json(*c.k) : json("auto");
            if (!c.k) p["sweep"] = c.sweep;
            p["restarts"] = c.restarts;
            p["tolerance"] = c.tolerance;
            p["max_iters"] = c.max_iters;
            p["seed"] = seed;
            break;
        case Stage::Augment:
            p["strategy"] = strategy_name(c.strategy);
            p["log_rendering"] = c.log_rendering == LogRendering::LogValue ? "log_value" : "magnitude";
            break;
        case Stage::Train: {
            const auto& e = c.encoder;
            p = {{"layers", e.layers},           {"hidden", e.hidden},
                 {"heads", e.heads},             {"ffn", e.ffn},
                 {"max_seq_len", e.max_seq_len}, {"dropout", e.dropout},
                 {"epochs", e.epochs},           {"batch_size", e.batch_size},
                 {"learning_rate", e.learning_rate}, {"warmup_fraction", e.warmup_fraction},
                 {"grad_clip", e.grad_clip},     {"masking", masking_name(c.effective_masking())},
                 {"random_mask_rate", e.random_mask_rate}, {"min_frequency", c.min_frequency},
                 {"seed", seed}};
            break;
        }
        case Stage::Probe: {
            const auto& pl = c.probe;
            p["tasks"] = json::array();
            for (auto t : pl.tasks) p["tasks"].push_back(to_string(t));
            p["ranges"] = json::array();
            for (auto r : pl.ranges) p["ranges"].push_back(to_string(r));
            p["splits"] = json::array();
            for (auto s : pl.splits) p["splits"].push_back(to_string(s));
            p["decoding_samples"] = pl.decoding_samples;
            p["addition_samples"] = pl.addition_samples;
            p["list_samples"] = pl.list_samples;
            p["gbt"] = {{"trees", pl.gbt.trees},
                        {"depth", pl.gbt.max_depth},
                        {"learning_rate", pl.gbt.learning_rate},
                        {"min_leaf", pl.gbt.min_samples_leaf}};
            p["classifier"] = {{"layers", pl.classifier.layers},
                               {"hidden", pl.classifier.hidden},
                               {"epochs", pl.classifier.epochs},
                               {"learning_rate", pl.classifier.learning_rate}};
            p["oov"] = c.oov == OovPolicy::NeighbourMean ? "neighbour_mean" : "raw_unk";
            p["heatmap"] = {c.heatmap_min, c.heatmap_max};
            p["seed"] = seed;
            break;
        }
        case Stage::Report: p = json::object(); break;
    }
    return p;
}

std::string config_hash(const json& params) { return sha256_hex(params.dump()).substr(0, 16); }

json load_manifest(const fs::path& out) {
    const auto path = out / kManifestFile;
    if (!fs::exists(path)) return json{{"stages", json::object()}};
    try {
        auto m = json::parse(read_file(path));
        if (!m.contains("stages") || !m["stages"].is_object()) throw CorruptionError("manifest has no stages object");
        return m;
    } catch (const json::exception& e) {
        throw CorruptionError("manifest " + path.string() + " is not valid JSON: " + e.what());
    }
}

void save_manifest(const fs::path& out, json manifest) {
    manifest["tool_version"] = NUMANCHOR_VERSION;
    write_file_atomic(out / kManifestFile, manifest.dump(2) + "\n");
}

// Current checksums of the files a stage reads.
std::map<std::string, std::string> current_inputs(const PipelineConfig& c, const json& manifest, Stage stage) {
    std::map<std::string, std::string> inputs;
    for (auto u : upstream_of(stage)) {
        const auto& entry = manifest["stages"][std::string(to_string(u))];
        for (const auto& [rel, _] : entry["outputs"].items()) {
            const auto p = c.out / rel;
            inputs[rel] = fs::exists(p) ? sha256_file(p) : std::string("missing");
        }
    }
    if (stage == Stage::Extract && c.corpus_source == CorpusSource::File) {
        inputs["corpus:" + path_string(c.corpus_path)] = sha256_file(c.corpus_path);
    }
    if (stage == Stage::Anchors && !c.anchor_table.empty()) {
        inputs["table:" + path_string(c.anchor_table)] = sha256_file(c.anchor_table);
    }
    return inputs;
}

bool outputs_intact(const PipelineConfig& c, const json& entry, std::string* problem = nullptr) {
    for (const auto& [rel, sum] : entry["outputs"].items()) {
        const auto p = c.out / rel;
        if (!fs::exists(p)) {
            if (problem) *problem = "artifact " + rel + " is missing";
            return false;
        }
        if (sha256_file(p) != sum.get<std::string>()) {
            if (problem) *problem = "artifact " + rel + " does not match its recorded checksum";
            return false;
        }
    }
    return true;
}

void collect_ancestors(Stage s, std::set<Stage>& seen) {
    for (auto u : upstream_of(s))
        if (seen.insert(u).second) collect_ancestors(u, seen);
}

void check_upstream(const PipelineConfig& c, const json& manifest, Stage stage) {
    std::set<Stage> ancestors;
    collect_ancestors(stage, ancestors);
    std::vector<std::string> missing;
    for (auto u : all_stages()) {
        if (!ancestors.count(u)) continue;
        if (!manifest["stages"].contains(std::string(to_string(u)))) missing.emplace_back(to_string(u));
    }
    if (!missing.empty()) {
        throw DependencyError("stage " + std::string(to_string(stage)) + " needs upstream stage(s) that have not run: " +
                              join(missing, ", "));
    }
    for (auto u : all_stages()) {
        if (!ancestors.count(u)) continue;
        const std::string name(to_string(u));
        const auto& entry = manifest["stages"][name];
        std::string problem;
        if (!outputs_intact(c, entry, &problem)) {
            if (problem.find("missing") != std::string::npos) {
                throw DependencyError("stage " + name + ": " + problem + "; re-run " + name);
            }
            throw StalenessError("stage " + name + ": " + problem + "; re-run " + name);
        }
        if (entry["config_hash"] != config_hash(stage_params(c, u))) {
            throw StalenessError("stage " + name + " was run with a different configuration; re-run " + name);
        }
        const auto inputs = current_inputs(c, manifest, u);
        if (json(inputs) != entry["inputs"]) {
            throw StalenessError("stage " + name + " is older than its inputs; re-run " + name);
        }
    }
}

// ---------------------------------------------------------------------------
// Stage bodies

std::vector<std::vector<std::string>> read_token_lines(const fs::path& path) {
    const auto text = read_file(path);
    std::vector<std::vector<std::string>> docs;
    for (auto line : split_lines(text)) docs.push_back(split_whitespace(line));
    return docs;
}

std::string write_token_lines(const std::vector<std::vector<std::string>>& docs) {
    std::string out;
    for (const auto& d : docs) out += join(d, " ") + '\n';
    return out;
}

std::vector<double> occurrence_values(const std::vector<NumeralOccurrence>& occ) {
    std::vector<double> v;
    v.reserve(occ.size());
    for (const auto& o : occ) v.push_back(o.value);
    return v;
}

Artifacts do_extract(const PipelineConfig& c, const PipelineLog& log) {
    std::vector<std::string> docs;
    if (c.corpus_source == CorpusSource::File) {
        const auto text = read_file(c.corpus_path);
        for (auto line : split_lines(text)) docs.emplace_back(line);
    } else {
        auto opts = c.synthetic;
        opts.seed = c.seed.value_or(0);
        docs = generate_synthetic_corpus(opts);
    }
    const auto scanned = scan_corpus(docs);
    std::vector<std::vector<std::string>> tokens;
    std::vector<NumeralOccurrence> occ;
    for (const auto& d : scanned) {
        tokens.push_back(d.tokens);
        occ.insert(occ.end(), d.numerals.begin(), d.numerals.end());
    }
    if (occ.empty()) throw DegenerateDataError("corpus contains no numerals");
    const auto stats = corpus_numeral_stats(scanned);
    json s{{"documents", docs.size()},
           {"total_tokens", stats.total_tokens},
           {"numeral_tokens", stats.numeral_tokens},
           {"numeral_fraction", stats.numeral_fraction}};
    for (const auto& [digits, count] : stats.digit_length_histogram) s["digit_length_histogram"][std::to_string(digits)] = count;
    if (log) log(std::to_string(docs.size()) + " documents, " + std::to_string(occ.size()) + " numerals");

    Artifacts a;
    a.files["extract/tokens.txt"] = write_token_lines(tokens);
    a.files["extract/occurrences.tsv"] = format_occurrences(occ);
    a.files["extract/stats.json"] = s.dump(2) + "\n";
    a.details = s;
    return a;
}

Artifacts do_anchors(const PipelineConfig& c, const PipelineLog& log) {
    const auto values = occurrence_values(parse_occurrences(read_file(c.out / "extract/occurrences.tsv")));
    Artifacts a;
    AnchorTable table;
    if (!c.anchor_table.empty()) {
        table = parse_anchor_table(read_file(c.anchor_table));
        a.details["source"] = path_string(c.anchor_table);
    } else {
        GmmOptions go;
        go.seed = c.seed.value_or(0);
        go.tolerance = c.tolerance;
        go.max_iters = c.max_iters;
        go.space = c.effective_space();
        const auto fit_values = to_fit_space(values, go.space);
        GmmModel model;
        if (c.k) {
            go.k = *c.k;
            model = fit_gmm_best_of(fit_values, go, c.restarts);
        } else {
            const auto sweep = sweep_k(fit_values, c.sweep, c.restarts, go);
            std::string rows = "k\tlog_likelihood\taic\tbic\n";
            for (const auto& r : sweep.table) {
                rows += std::to_string(r.k) + '\t' + format_double(r.log_likelihood) + '\t' + format_double(r.aic) + '\t' +
                        format_double(r.bic) + '\n';
            }
            a.files["anchors/sweep.tsv"] = rows;
            model = sweep.chosen_model;
        }
        table = induce_anchors(model);
    }
    const auto text = serialize_anchor_table(table);
    a.files["anchors/anchor_table.tsv"] = text;
    a.details["chosen_k"] = table.anchors.size();
    a.details["space"] = to_string(table.space);
    a.details["anchor_table_id"] = sha256_hex(text).substr(0, 16);
    if (log) log("K = " + std::to_string(table.anchors.size()) + " in " + std::string(to_string(table.space)) + " space");
    return a;
}

Artifacts do_augment(const PipelineConfig& c, const PipelineLog& log) {
    const auto token_text = read_file(c.out / "extract/tokens.txt");
    std::vector<std::vector<std::string>> docs;
    for (auto line : split_lines(token_text)) docs.push_back(split_whitespace(line));
    const auto occ = parse_occurrences(read_file(c.out / "extract/occurrences.tsv"));
    const auto table_text = read_file(c.out / "anchors/anchor_table.tsv");

    std::vector<std::vector<NumeralOccurrence>> by_doc(docs.size());
    for (const auto& o : occ) {
        if (o.doc_id >= docs.size()) throw CorruptionError("occurrence refers to document " + std::to_string(o.doc_id));
        by_doc[o.doc_id].push_back(o);
    }
    std::size_t warnings = 0;
    std::vector<std::vector<std::string>> out;
    out.reserve(docs.size());
    if (c.strategy) {
        const auto table = parse_anchor_table(table_text);
        AugmentOptions ao;
        ao.log_rendering = c.log_rendering;
        for (std::size_t d = 0; d < docs.size(); ++d) {
            auto r = augment_document(docs[d], by_doc[d], table, *c.strategy, ao);
            warnings += r.warnings.size();
            out.push_back(std::move(r.tokens));
        }
    } else {
        out = docs;
    }
    json sidecar{{"strategy", strategy_name(c.strategy)},
                 {"anchor_table_id", c.strategy ? json(sha256_hex(table_text).substr(0, 16)) : json(nullptr)},
                 {"source_checksum", sha256_hex(token_text)},
                 {"warnings", warnings}};
    if (log) log(strategy_name(c.strategy) + ", " + std::to_string(warnings) + " warnings");
    Artifacts a;
    a.files["augment/augmented.txt"] = write_token_lines(out);
    a.files["augment/sidecar.json"] = sidecar.dump(2) + "\n";
    a.details = sidecar;
    return a;
}

Artifacts do_train(const PipelineConfig& c, const PipelineLog& log) {
    const auto docs = read_token_lines(c.out / "augment/augmented.txt");
    const auto vocab = build_vocab(docs, c.min_frequency);
    auto ec = c.encoder;
    ec.seed = c.seed.value_or(0);
    ec.masking = c.effective_masking();
    std::size_t last_epoch = 0;
    double epoch_sum = 0.0;
    std::size_t epoch_steps = 0;
    const auto progress = [&](const TrainingLogEntry& e) {
        if (e.epoch != last_epoch) {
            if (last_epoch && log) log("epoch " + std::to_string(last_epoch) + " mean loss " + format_fixed(epoch_sum / epoch_steps, 4));
            last_epoch = e.epoch;
            epoch_sum = 0.0;
            epoch_steps = 0;
        }
        epoch_sum += e.loss;
        ++epoch_steps;
    };
    const auto ckpt = train_mlm(ec, docs, vocab, progress);
    if (last_epoch && log) log("epoch " + std::to_string(last_epoch) + " mean loss " + format_fixed(epoch_sum / epoch_steps, 4));

    json summary{{"checkpoint_id", ckpt.id()},
                 {"vocab_size", vocab.size()},
                 {"epoch_losses", ckpt.epoch_losses},
                 {"initial_eval_loss", ckpt.initial_eval_loss},
                 {"final_eval_loss", ckpt.final_eval_loss},
                 {"training_sequences", ckpt.training_sequences},
                 {"skipped_sequences", ckpt.skipped_sequences}};
    if (log) log("eval loss " + format_fixed(ckpt.initial_eval_loss, 4) + " -> " + format_fixed(ckpt.final_eval_loss, 4));
    Artifacts a;
    a.files["train/checkpoint.bin"] = serialize_checkpoint(ckpt);
    a.files["train/vocab.tsv"] = vocab.to_tsv();
    a.files["train/training_log.tsv"] = format_training_log(ckpt.log);
    a.files["train/summary.json"] = summary.dump(2) + "\n";
    a.details = summary;
    return a;
}

Artifacts do_probe(const PipelineConfig& c, const PipelineLog& log) {
    const auto ckpt = load_checkpoint(c.out / "train/checkpoint.bin");
    const auto values = occurrence_values(parse_occurrences(read_file(c.out / "extract/occurrences.tsv")));
    const NumeralEmbedder embedder(ckpt, c.oov);
    auto plan = c.probe;
    plan.seed = c.seed.value_or(0);
    plan.heatmap_values.clear();
    for (std::size_t v = c.heatmap_min; v <= c.heatmap_max; ++v) plan.heatmap_values.push_back(static_cast<double>(v));
    const auto report = run_probe_plan(plan, embedder, values);
    std::size_t infeasible = 0;
    for (const auto& cell : report.cells) infeasible += cell.infeasible ? 1 : 0;
    if (log) log(std::to_string(report.cells.size()) + " cells, " + std::to_string(infeasible) + " infeasible");
    Artifacts a;
    a.files["probe/probe_report.tsv"] = format_probe_report(report);
    a.files["probe/heatmap.tsv"] = format_heatmap(report.heatmap_values, report.heatmap);
    a.files["probe/scatter.csv"] = format_scatter_csv(report.scatter);
    a.details = {{"checkpoint_id", ckpt.id()}, {"cells", report.cells.size()}, {"infeasible", infeasible}};
    return a;
}

Artifacts do_report(const PipelineConfig& c, const PipelineLog&) {
    const auto report = parse_probe_report(read_file(c.out / "probe/probe_report.tsv"));
    const auto heatmap_text = read_file(c.out / "probe/heatmap.tsv");
    const auto heatmap = parse_heatmap(heatmap_text);
    Artifacts a;
    a.files["report/metric_grid.tsv"] = format_metric_grid(report);
    a.files["report/heatmap.tsv"] = heatmap_text;
    // the far band needs at least 51 values
    if (heatmap.matrix.size() > 50) {
        const auto bands = heatmap_band_means(heatmap.matrix);
        a.files["report/heatmap_bands.tsv"] = "near\t" + format_fixed(bands.near, 6) + "\nfar\t" + format_fixed(bands.far, 6) + "\n";
        a.details = {{"near", bands.near}, {"far", bands.far}};
    }
    a.files["report/scatter.csv"] = read_file(c.out / "probe/scatter.csv");
    return a;
}

Artifacts run_body(const PipelineConfig& c, Stage stage, const PipelineLog& log) {
    switch (stage) {
        case Stage::Extract: return do_extract(c, log);
        case Stage::Anchors: return do_anchors(c, log);
        case Stage::Augment: return do_augment(c, log);
        case Stage::Train: return do_train(c, log);
        case Stage::Probe: return do_probe(c, log);
        case Stage::Report: return do_report(c, log);
    }
    return {};
}

}  // namespace

StageOutcome run_stage(const PipelineConfig& config, Stage stage, const PipelineLog& log) {
    validate_config(config);
    const std::string name(to_string(stage));
    const auto tagged = [&](const std::string& msg) {
        if (log) log("[" + name + "] " + msg);
    };
    fs::create_directories(config.out);
    write_file_atomic(config.out / kNormalizedConfigFile, format_config(config));

    auto manifest = load_manifest(config.out);
    check_upstream(config, manifest, stage);

    const auto params = stage_params(config, stage);
    const auto hash = config_hash(params);
    const auto inputs = current_inputs(config, manifest, stage);

    StageOutcome outcome;
    outcome.stage = stage;
    if (manifest["stages"].contains(name)) {
        const auto& entry = manifest["stages"][name];
        if (entry["config_hash"] == hash && entry["inputs"] == json(inputs) && outputs_intact(config, entry)) {
            for (const auto& [rel, _] : entry["outputs"].items()) outcome.artifacts.emplace_back(rel);
            outcome.skipped = true;
            tagged("up to date");
            return outcome;
        }
    }

    const auto artifacts = run_body(config, stage, tagged);
    json outputs = json::object();
    for (const auto& [rel, contents] : artifacts.files) {
        write_file_atomic(config.out / rel, contents);
        outputs[rel] = sha256_hex(contents);
        outcome.artifacts.emplace_back(rel);
    }
    // Files left over from an earlier run with different settings are no longer ours.
    if (manifest["stages"].contains(name)) {
        for (const auto& [rel, _] : manifest["stages"][name]["outputs"].items())
            if (!outputs.contains(rel)) fs::remove(config.out / rel);
    }
    manifest["stages"][name] = {{"config_hash", hash},
                                {"params", params},
                                {"inputs", inputs},
                                {"outputs", outputs},
                                {"details", artifacts.details},
                                {"tool_version", NUMANCHOR_VERSION}};
    save_manifest(config.out, manifest);
    tagged("wrote " + std::to_string(artifacts.files.size()) + " artifact(s)");
    return outcome;
}

std::vector<StageOutcome> run_all(const PipelineConfig& config, const PipelineLog& log) {
    std::vector<StageOutcome> out;
    for (auto s : all_stages()) out.push_back(run_stage(config, s, log));
    return out;
}

int exit_code_for(const std::exception& e) noexcept {
    if (dynamic_cast<const DependencyError*>(&e) || dynamic_cast<const StalenessError*>(&e)) return 3;
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
        dynamic_cast<const DomainError*>(&e) || dynamic_cast<const RangeError*>(&e)) {
        return 2;
    }
    return 4;
}

}  // namespace numanchor
