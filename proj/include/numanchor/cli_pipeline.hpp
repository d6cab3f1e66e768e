#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "numanchor/anchor_induction.hpp"
#include "numanchor/corpus_augmentation.hpp"
#include "numanchor/encoder.hpp"
#include "numanchor/mlm_trainer.hpp"
#include "numanchor/probing_harness.hpp"
#include "numanchor/synthetic_corpus.hpp"

namespace numanchor {

enum class Stage { Extract, Anchors, Augment, Train, Probe, Report };

std::string_view to_string(Stage stage) noexcept;
Stage parse_stage(std::string_view text);
const std::vector<Stage>& all_stages();
/// Stages whose artifacts `stage` reads.
std::vector<Stage> upstream_of(Stage stage);

enum class CorpusSource { Synthetic, File };

/// Every setting of a pipeline run. Relative paths are resolved against the
/// config file's directory when loaded from a file.
struct PipelineConfig {
    // [corpus]
    CorpusSource corpus_source = CorpusSource::Synthetic;
    std::filesystem::path corpus_path;  // one document per line, when source = file
    SyntheticCorpusOptions synthetic;   // seed comes from the run seed

    // [augment]
    std::optional<Strategy> strategy = Strategy::LnAnchorsDir;  // nullopt = no augmentation (control)
    LogRendering log_rendering = LogRendering::LogValue;

    // [anchors]
    std::optional<std::size_t> k = 32;  // nullopt = choose by sweep
    std::vector<std::size_t> sweep{1, 2, 4, 8, 16, 32, 64};
    std::optional<Space> space;  // nullopt = follow the strategy
    std::filesystem::path anchor_table;  // precomputed table instead of fitting
    std::size_t restarts = 3;
    double tolerance = 1e-3;
    std::size_t max_iters = 500;

    // [encoder]
    EncoderConfig encoder;  // seed comes from the run seed
    bool masking_auto = true;  // anchor masking when augmented, random for the control
    std::size_t min_frequency = 1;

    // [probe]
    ProbePlan probe;  // seed comes from the run seed
    OovPolicy oov = OovPolicy::NeighbourMean;
    std::size_t heatmap_min = 1;
    std::size_t heatmap_max = 100;

    // [run]
    std::filesystem::path out = "numanchor_out";
    std::optional<std::uint64_t> seed;
    bool deterministic = false;

    /// Anchor space implied by the strategy (log for the control).
    Space effective_space() const;
    MaskingMode effective_masking() const;
};

struct ConfigOverrides {
    std::optional<std::filesystem::path> out;
    std::optional<std::uint64_t> seed;
    bool deterministic = false;
};

/// Parses INI text. Unknown sections or keys are ConfigErrors. Does not validate.
PipelineConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
/// Reads, parses, applies overrides, fills a random seed when none is set and
/// determinism is off, then validates.
PipelineConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});
/// Cross-field checks; throws ConfigError.
void validate_config(const PipelineConfig& config);
/// Every key with its value, in a fixed order. Parses back to the same config.
std::string format_config(const PipelineConfig& config);

struct StageOutcome {
    Stage stage = Stage::Extract;
    bool skipped = false;  // inputs and configuration unchanged since the last run
    std::vector<std::filesystem::path> artifacts;  // relative to the output directory
};

using PipelineLog = std::function<void(const std::string&)>;

/// Runs one stage. Throws DependencyError when an upstream stage has not run
/// and StalenessError when an upstream artifact or its configuration changed.
StageOutcome run_stage(const PipelineConfig& config, Stage stage, const PipelineLog& log = {});
/// All stages in order; each one short-circuits when up to date.
std::vector<StageOutcome> run_all(const PipelineConfig& config, const PipelineLog& log = {});

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kNormalizedConfigFile = "config.normalized.ini";

/// Process exit code for an exception: 2 validation, 3 dependency or staleness, 4 otherwise.
int exit_code_for(const std::exception& error) noexcept;

}  // namespace numanchor
