#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "numanchor/cli_pipeline.hpp"
#include "numanchor/errors.hpp"
#include "numanchor/synthetic_corpus.hpp"
#include "numanchor/text_util.hpp"

namespace fs = std::filesystem;
using namespace numanchor;

int main(int argc, char** argv) {
    CLI::App app{"numanchor: anchor-primed numeral embeddings, end to end"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    bool deterministic = false;
    app.add_option("--config", config_path, "pipeline config (INI)");
    app.add_option("--seed", seed, "run seed; overrides run.seed");
    app.add_option("--out", out, "output directory (synth: output file); overrides run.out");
    app.add_flag("--deterministic", deterministic, "require a seed and record the run as reproducible");

    std::vector<std::pair<CLI::App*, std::optional<Stage>>> commands;
    for (auto stage : all_stages()) {
        const std::string name(to_string(stage));
        commands.emplace_back(app.add_subcommand(name, "run the " + name + " stage"), stage);
    }
    auto* run_all_cmd = app.add_subcommand("run-all", "run every stage in order, skipping those up to date");
    auto* check_cmd = app.add_subcommand("check-config", "validate the config and print it normalized");

    auto* synth_cmd = app.add_subcommand("synth", "write a synthetic corpus, one sentence per line");
    SyntheticCorpusOptions synth;
    synth_cmd->add_option("--sentences", synth.sentences, "number of sentences")->capture_default_str();
    synth_cmd->add_option("--significant-digits", synth.significant_digits, "rounding of values >= 100")->capture_default_str();
    synth_cmd->add_option("--max-value", synth.max_value, "largest value")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const auto log = [](const std::string& line) { std::cerr << line << std::endl; };
    try {
        if (synth_cmd->parsed()) {
            if (!out) throw ConfigError("synth needs --out <file>");
            if (!seed && deterministic) throw ConfigError("--deterministic needs --seed");
            synth.seed = seed.value_or(0);
            std::string text;
            for (const auto& line : generate_synthetic_corpus(synth)) text += line + '\n';
            write_file_atomic(*out, text);
            log("wrote " + std::to_string(synth.sentences) + " sentences to " + *out);
            return 0;
        }
        if (config_path.empty()) throw ConfigError("--config <path> is required");
        ConfigOverrides overrides;
        if (out) overrides.out = fs::path(*out);
        overrides.seed = seed;
        overrides.deterministic = deterministic;
        const auto config = load_config(config_path, overrides);

        if (check_cmd->parsed()) {
            std::cout << format_config(config);
            return 0;
        }
        if (run_all_cmd->parsed()) {
            run_all(config, log);
            return 0;
        }
        for (const auto& [cmd, stage] : commands) {
            if (cmd->parsed()) run_stage(config, *stage, log);
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return exit_code_for(e);
    }
}
