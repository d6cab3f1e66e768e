#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "numanchor/embedder.hpp"

namespace numanchor {

enum class ProbeTask { Decoding, Addition, ListMax, ListMin };
enum class RangeLabel { R1To100, R100To1k, R1kTo10k, R10kTo1e10, All };
enum class Split { InDomain, OutOfDomain };

std::string_view to_string(ProbeTask task) noexcept;
std::string_view to_string(RangeLabel label) noexcept;
std::string_view to_string(Split split) noexcept;
ProbeTask parse_probe_task(std::string_view text);
RangeLabel parse_range_label(std::string_view text);
Split parse_split(std::string_view text);

/// [lower, upper). The top range and ALL are closed on both ends.
struct RangeSpec {
    double lower = 1.0;
    double upper = 100.0;
    RangeLabel label = RangeLabel::R1To100;

    bool contains(double v) const noexcept;
    /// ALL spans the smallest to the largest corpus numeral.
    static RangeSpec standard(RangeLabel label, std::span<const double> corpus_values);
};

/// Only [1k,10k] and [10k,1e10] may be probed out of domain.
bool ood_admissible(RangeLabel label) noexcept;

/// Draws numerals log-uniformly from a range. In-domain draws snap to the
/// corpus numeral closest in log distance; out-of-domain draws are whole
/// numbers not in the corpus.
class NumeralSampler {
public:
    /// `corpus_values` need not be sorted or unique. Throws InfeasibleSplitError.
    NumeralSampler(const RangeSpec& range, Split split, std::span<const double> corpus_values);

    double draw(std::mt19937_64& rng) const;
    /// `count` distinct numerals; at most pool_size() for in-domain sampling.
    std::vector<double> draw_distinct(std::size_t count, std::mt19937_64& rng) const;
    /// Number of distinct numerals available (in-domain only; 0 for OOD = unbounded).
    std::size_t pool_size() const noexcept { return split_ == Split::InDomain ? pool_.size() : 0; }

private:
    double target(std::mt19937_64& rng) const;
    double draw_ood(std::mt19937_64& rng, const std::vector<double>* exclude) const;

    RangeSpec range_;
    Split split_;
    std::vector<double> pool_;    // in-domain candidates, ascending
    std::vector<double> corpus_;  // all corpus values, ascending and unique
};

inline constexpr std::size_t kListLength = 5;

struct ProbeDataset {
    ProbeTask task = ProbeTask::Decoding;
    RangeSpec range;
    Split split = Split::InDomain;
    std::uint64_t seed = 0;
    std::vector<std::vector<double>> values;    // 1, 2 or 5 numerals per item
    std::vector<double> targets;                // value, sum, or index of the extremum
    std::vector<std::vector<double>> features;  // concatenated embeddings per item
};

/// Decoding uses distinct numerals (capped at the in-domain pool size).
ProbeDataset build_probe_dataset(ProbeTask task, const RangeSpec& range, Split split, std::size_t n_samples,
                                 std::uint64_t seed, const Embedder& embedder,
                                 std::span<const double> corpus_values);

// ---------------------------------------------------------------------------
// Gradient-boosted regression trees, squared error, exact greedy splits.

struct GbtConfig {
    std::size_t trees = 200;
    std::size_t max_depth = 5;
    double learning_rate = 0.1;
    std::size_t min_samples_leaf = 1;

    static GbtConfig full_scale() { return {1000, 5, 0.01, 1}; }
};

class GbtRegressor {
public:
    struct Node {
        int feature = -1;  // -1 for a leaf
        double threshold = 0.0;
        double value = 0.0;
        int left = -1;
        int right = -1;
    };
    using Tree = std::vector<Node>;

    /// Throws ConfigError for fewer than 10 samples or ragged features.
    static GbtRegressor fit(const std::vector<std::vector<double>>& features, std::span<const double> targets,
                            const GbtConfig& config);

    double predict(std::span<const double> x) const;
    double initial_prediction() const noexcept { return initial_; }
    const std::vector<Tree>& trees() const noexcept { return trees_; }

private:
    double initial_ = 0.0;
    double learning_rate_ = 1.0;
    std::vector<Tree> trees_;
};

// ---------------------------------------------------------------------------
// Stacked bidirectional LSTM scoring each list position with a sigmoid head.

struct ListClassifierConfig {
    std::size_t layers = 2;
    std::size_t hidden = 32;
    std::size_t epochs = 50;
    double learning_rate = 1e-4;
    std::uint64_t seed = 0;

    static ListClassifierConfig full_scale() { return {4, 32, 150, 1e-4, 0}; }
};

class ListClassifier {
public:
    using Sequence = std::vector<std::vector<double>>;  // positions x input dim

    ListClassifier(std::size_t input_dim, const ListClassifierConfig& config);

    /// Per-sample Adam over `epochs` shuffled passes. Inputs are standardized
    /// with statistics from the training lists.
    void fit(const std::vector<Sequence>& lists, const std::vector<std::size_t>& labels);

    std::vector<double> scores(const Sequence& list) const;
    std::size_t predict(const Sequence& list) const;

    /// Mean binary cross-entropy of the one-hot target; adds gradients into
    /// `grads` (same layout as parameters()). Operates on raw inputs.
    double loss_and_gradients(const Sequence& list, std::size_t label, std::vector<double>& grads) const;
    double loss(const Sequence& list, std::size_t label) const;

    std::vector<double>& parameters() noexcept { return params_; }
    const std::vector<double>& parameters() const noexcept { return params_; }

private:
    struct Forward;
    Sequence standardize(const Sequence& list) const;
    void forward(const Sequence& x, Forward& f) const;
    std::size_t offset(std::size_t layer, std::size_t dir) const;
    std::size_t layer_input(std::size_t layer) const;

    std::size_t input_dim_;
    ListClassifierConfig config_;
    std::vector<double> params_;
    std::vector<std::size_t> offsets_;
    std::size_t head_offset_ = 0;
    std::vector<double> mean_, inv_std_;
};

// ---------------------------------------------------------------------------
// Metrics and probe runs.

/// sqrt(mean((p - t)^2)) over log-space predictions and targets.
double log_rmse(std::span<const double> predicted_log, std::span<const double> true_log);
/// 1 - SS_res / SS_tot. Throws DegenerateDataError when the truth is constant.
double r_squared(std::span<const double> predicted, std::span<const double> truth);

struct DecodingResult {
    double log_rmse = 0.0;
    double r2 = 0.0;
    std::size_t n_train = 0;
    std::size_t n_eval = 0;
    std::vector<std::pair<double, double>> scatter;  // (true value, decoded value) on held-out items
};

struct ListResult {
    double accuracy = 0.0;
    std::size_t n_train = 0;
    std::size_t n_eval = 0;
};

/// Seeded 80/20 split of item indices: (train, eval).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> train_eval_split(std::size_t n, std::uint64_t seed);

DecodingResult run_decoding(const ProbeDataset& dataset, const GbtConfig& config);
DecodingResult run_addition(const ProbeDataset& dataset, const GbtConfig& config);
ListResult run_list_extremum(const ProbeDataset& dataset, std::size_t embedding_dim,
                             const ListClassifierConfig& config);

/// M[i][j] = cosine(e_i, e_j). Throws UndefinedSimilarityError on a zero embedding.
std::vector<std::vector<double>> cosine_heatmap(const Embedder& embedder, std::span<const double> values);

struct BandMeans {
    double near = 0.0;  // 1 <= |i-j| <= near_width
    double far = 0.0;   // |i-j| >= far_width
};
BandMeans heatmap_band_means(const std::vector<std::vector<double>>& matrix, std::size_t near_width = 5,
                             std::size_t far_width = 50);

/// Memoizes another embedder.
class CachingEmbedder : public Embedder {
public:
    explicit CachingEmbedder(const Embedder& inner) : inner_(inner) {}
    std::size_t dimension() const override { return inner_.dimension(); }
    std::vector<double> embed(double value) const override;

private:
    const Embedder& inner_;
    mutable std::unordered_map<double, std::vector<double>> cache_;
};

// ---------------------------------------------------------------------------
// Probe plan and report.

struct ProbePlan {
    std::vector<ProbeTask> tasks{ProbeTask::Decoding, ProbeTask::Addition, ProbeTask::ListMax, ProbeTask::ListMin};
    std::vector<RangeLabel> ranges{RangeLabel::R1To100, RangeLabel::R100To1k, RangeLabel::R1kTo10k,
                                   RangeLabel::R10kTo1e10, RangeLabel::All};
    std::vector<Split> splits{Split::InDomain, Split::OutOfDomain};
    std::size_t decoding_samples = 1000;
    std::size_t addition_samples = 1000;
    std::size_t list_samples = 1000;  // 200 held out
    std::uint64_t seed = 0;
    GbtConfig gbt;
    ListClassifierConfig classifier;
    std::vector<double> heatmap_values;  // defaults to 1..100 when empty
};

struct ProbeCell {
    ProbeTask task = ProbeTask::Decoding;
    RangeLabel range = RangeLabel::All;
    Split split = Split::InDomain;
    std::string metric;  // log_rmse or accuracy
    double value = 0.0;
    std::size_t n = 0;   // held-out items
    std::optional<double> r2;
    std::optional<std::string> infeasible;  // reason, when the cell cannot be built
};

struct ProbeReport {
    std::vector<ProbeCell> cells;
    std::vector<double> heatmap_values;
    std::vector<std::vector<double>> heatmap;
    std::vector<std::pair<double, double>> scatter;  // decoding on ALL, in-domain

    const ProbeCell* find(ProbeTask task, RangeLabel range, Split split) const;
};

ProbeReport run_probe_plan(const ProbePlan& plan, const Embedder& embedder, std::span<const double> corpus_values);

/// One tab-separated record per cell: task range split metric value n r2.
std::string format_probe_report(const ProbeReport& report);
ProbeReport parse_probe_report(std::string_view text);
/// Dense row-major matrix with a `# values` header.
std::string format_heatmap(const std::vector<double>& values, const std::vector<std::vector<double>>& matrix);
struct ParsedHeatmap {
    std::vector<double> values;
    std::vector<std::vector<double>> matrix;
};
ParsedHeatmap parse_heatmap(std::string_view text);
std::string format_scatter_csv(const std::vector<std::pair<double, double>>& scatter);
/// Table-shaped grid: one row per (task, split), one column per range.
std::string format_metric_grid(const ProbeReport& report);

}  // namespace numanchor
