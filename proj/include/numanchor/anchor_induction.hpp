#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace numanchor {

enum class Space { Linear, Log };

std::string_view to_string(Space space) noexcept;
Space parse_space(std::string_view text);

struct GmmComponent {
    double weight = 0.0;
    double mean = 0.0;
    double variance = 0.0;

    bool operator==(const GmmComponent&) const = default;
};

/// One-dimensional Gaussian mixture p(n) = sum_k w_k N(n; mu_k, var_k).
/// Components live in `space`: for Space::Log the model was fit on ln(values).
struct GmmModel {
    std::vector<GmmComponent> components;
    Space space = Space::Linear;
    std::uint64_t seed = 0;
    double final_log_likelihood = 0.0;  // total, over the fitted values
    std::size_t iterations = 0;
    bool converged = false;
    double tolerance = 1e-3;
    // Total log-likelihood after each EM iteration.
    std::vector<double> log_likelihood_trace;

    std::size_t k() const noexcept { return components.size(); }
    bool operator==(const GmmModel&) const = default;
};

struct GmmOptions {
    std::size_t k = 1;
    std::uint64_t seed = 0;
    double tolerance = 1e-3;  // on the change in mean per-point log-likelihood
    std::size_t max_iters = 500;
    Space space = Space::Linear;  // label only; values are taken as given
};

/// EM fit. Means start at K distinct data values drawn uniformly with the
/// seed; variances start at the data variance and never drop below
/// 1e-6 * data variance. Throws ConfigError when |values| < K and
/// DegenerateDataError when the data cannot support K distinct means.
GmmModel fit_gmm(std::span<const double> values, const GmmOptions& options);

/// Best-likelihood fit over `restarts` seeds derived from options.seed.
GmmModel fit_gmm_best_of(std::span<const double> values, const GmmOptions& options,
                         std::size_t restarts);

/// Values mapped into the fitting space. Log space drops non-positive values.
std::vector<double> to_fit_space(std::span<const double> values, Space space);

double gmm_pdf(const GmmModel& model, double n);
double gmm_log_pdf(const GmmModel& model, double n);
double gmm_log_likelihood(const GmmModel& model, std::span<const double> values);

struct InformationCriteria {
    double aic = 0.0;
    double bic = 0.0;
};

/// p = 3K - 1 free parameters.
InformationCriteria information_criteria(double log_likelihood, std::size_t k, std::size_t n);
InformationCriteria information_criteria(const GmmModel& model, std::span<const double> values);

struct SweepRow {
    std::size_t k = 0;
    double log_likelihood = 0.0;
    double aic = 0.0;
    double bic = 0.0;
};

struct SweepResult {
    std::size_t chosen_k = 0;
    std::vector<SweepRow> table;
    GmmModel chosen_model;
};

/// Fits every K in the grid and picks the smallest K whose BIC lies within
/// 1% of the grid minimum.
SweepResult sweep_k(std::span<const double> values, const std::vector<std::size_t>& k_grid,
                    std::size_t restarts, const GmmOptions& base);

/// Index of the chosen K under the BIC stabilization rule.
std::size_t select_stable_k(const std::vector<SweepRow>& table);

enum class Direction { Left, Right, Exact };

std::string_view to_string(Direction direction) noexcept;

struct AnchorTable {
    std::vector<double> anchors;  // strictly ascending
    Space space = Space::Linear;
    GmmModel source_model;
};

struct AnchorAssignment {
    double numeral_value = 0.0;
    double anchor = 0.0;
    Direction direction = Direction::Exact;
    // Set when a log-space table had to fall back to linear comparison (n <= 0).
    bool linear_fallback = false;
};

AnchorTable induce_anchors(const GmmModel& model);

/// Closest anchor to n (or ln n in log space); ties go to the smaller anchor.
/// Throws DomainError for n <= 0 on a log-space table.
AnchorAssignment nearest_anchor(const AnchorTable& table, double n);

/// As nearest_anchor, but n <= 0 on a log table compares n against the
/// linear magnitudes exp(anchor) instead of throwing.
AnchorAssignment nearest_anchor_with_fallback(const AnchorTable& table, double n);

/// Versioned text record: header lines, then one
/// `anchor_value \t weight \t variance` row per component, ascending by mean.
std::string serialize_anchor_table(const AnchorTable& table);
AnchorTable parse_anchor_table(std::string_view text);

}  // namespace numanchor
