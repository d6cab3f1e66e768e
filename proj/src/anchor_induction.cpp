#include "numanchor/anchor_induction.hpp"

#include <algorithm>
#include <array>
#include <iterator>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "numanchor/errors.hpp"
#include "numanchor/text_util.hpp"

namespace numanchor {

namespace {

constexpr double kVarianceFloorFraction = 1e-6;
constexpr double kMinimumComponentMass = 1e-10;
const double kLogSqrtTwoPi = 0.5 * std::log(2.0 * std::numbers::pi);

double log_normal(double x, double mean, double variance) {
    const double d = x - mean;
    return -kLogSqrtTwoPi - 0.5 * std::log(variance) - 0.5 * d * d / variance;
}

double log_sum_exp(std::span<const double> xs) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : xs) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

struct Moments {
    double mean = 0.0;
    double variance = 0.0;
};

Moments population_moments(std::span<const double> values) {
    Moments m;
    for (double v : values) m.mean += v;
    m.mean /= static_cast<double>(values.size());
    for (double v : values) m.variance += (v - m.mean) * (v - m.mean);
    m.variance /= static_cast<double>(values.size());
    return m;
}

std::uint64_t restart_seed(std::uint64_t seed, std::size_t restart) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(restart)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace

std::string_view to_string(Space space) noexcept {
    return space == Space::Log ? "log" : "linear";
}

Space parse_space(std::string_view text) {
    if (text == "linear") return Space::Linear;
    if (text == "log") return Space::Log;
    throw ConfigError("unknown anchor space '" + std::string(text) + "'");
}

std::string_view to_string(Direction direction) noexcept {
    switch (direction) {
        case Direction::Left: return "left";
        case Direction::Right: return "right";
        case Direction::Exact: return "exact";
    }
    return "exact";
}

std::vector<double> to_fit_space(std::span<const double> values, Space space) {
    std::vector<double> out;
    out.reserve(values.size());
    for (double v : values) {
        if (space == Space::Linear) {
            out.push_back(v);
        } else if (v > 0.0) {
            out.push_back(std::log(v));
        }
    }
    return out;
}

GmmModel fit_gmm(std::span<const double> values, const GmmOptions& options) {
    const std::size_t n = values.size();
    const std::size_t k = options.k;
    if (k == 0) throw ConfigError("K must be positive");
    if (options.tolerance <= 0.0) throw ConfigError("tolerance must be positive");
    if (options.max_iters == 0) throw ConfigError("max_iters must be positive");
    if (n < k) {
        throw ConfigError("cannot fit K=" + std::to_string(k) + " components to " +
                          std::to_string(n) + " values");
    }
    for (double v : values) {
        if (!std::isfinite(v)) throw ConfigError("non-finite value in GMM input");
    }

    const Moments data = population_moments(values);

    std::vector<double> distinct(values.begin(), values.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < k) {
        throw DegenerateDataError("data has " + std::to_string(distinct.size()) +
                                  " distinct values; cannot support K=" + std::to_string(k));
    }
    const double floor = data.variance > 0.0 ? kVarianceFloorFraction * data.variance : 1e-12;

    GmmModel model;
    model.space = options.space;
    model.seed = options.seed;
    model.tolerance = options.tolerance;
    model.components.resize(k);

    // K distinct data values, uniformly at random.
    std::mt19937_64 rng(options.seed);
    std::vector<double> picked;
    std::sample(distinct.begin(), distinct.end(), std::back_inserter(picked),
                static_cast<std::ptrdiff_t>(k), rng);
    std::shuffle(picked.begin(), picked.end(), rng);
    for (std::size_t j = 0; j < k; ++j) {
        model.components[j] = {1.0 / static_cast<double>(k), picked[j], std::max(data.variance, floor)};
    }

    std::vector<double> log_terms(k), log_norm(k), half_precision(k);
    std::vector<double> resp(n * k);
    std::vector<double> mass(k), sum_x(k), sum_xx(k);

    // Fills the responsibilities for the current parameters and returns the
    // total log-likelihood under them.
    const auto e_step = [&]() {
        for (std::size_t j = 0; j < k; ++j) {
            const auto& c = model.components[j];
            log_norm[j] = std::log(c.weight) - kLogSqrtTwoPi - 0.5 * std::log(c.variance);
            half_precision[j] = 0.5 / c.variance;
        }
        std::fill(mass.begin(), mass.end(), 0.0);
        std::fill(sum_x.begin(), sum_x.end(), 0.0);
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double x = values[i];
            double top = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < k; ++j) {
                const double d = x - model.components[j].mean;
                log_terms[j] = log_norm[j] - half_precision[j] * d * d;
                top = std::max(top, log_terms[j]);
            }
            double s = 0.0;
            for (std::size_t j = 0; j < k; ++j) s += std::exp(log_terms[j] - top);
            const double lse = top + std::log(s);
            ll += lse;
            double* r = resp.data() + i * k;
            for (std::size_t j = 0; j < k; ++j) {
                r[j] = std::exp(log_terms[j] - lse);
                mass[j] += r[j];
                sum_x[j] += r[j] * x;
            }
        }
        return ll;
    };

    const auto m_step = [&]() {
        std::vector<double> new_mean(k);
        for (std::size_t j = 0; j < k; ++j) {
            new_mean[j] = mass[j] > kMinimumComponentMass ? sum_x[j] / mass[j] : model.components[j].mean;
        }
        std::fill(sum_xx.begin(), sum_xx.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double x = values[i];
            const double* r = resp.data() + i * k;
            for (std::size_t j = 0; j < k; ++j) {
                const double d = x - new_mean[j];
                sum_xx[j] += r[j] * d * d;
            }
        }
        double total_mass = 0.0;
        for (std::size_t j = 0; j < k; ++j) total_mass += std::max(mass[j], kMinimumComponentMass);
        for (std::size_t j = 0; j < k; ++j) {
            auto& c = model.components[j];
            c.weight = std::max(mass[j], kMinimumComponentMass) / total_mass;
            if (mass[j] > kMinimumComponentMass) {
                c.mean = new_mean[j];
                c.variance = std::max(sum_xx[j] / mass[j], floor);
            }
        }
        double wsum = 0.0;
        for (const auto& c : model.components) wsum += c.weight;
        for (auto& c : model.components) c.weight /= wsum;
    };

    double ll = e_step();
    model.log_likelihood_trace.push_back(ll);
    for (std::size_t iter = 0; iter < options.max_iters; ++iter) {
        m_step();
        const double next = e_step();
        model.log_likelihood_trace.push_back(next);
        model.iterations = iter + 1;
        if (std::abs(next - ll) / static_cast<double>(n) < options.tolerance) {
            model.converged = true;
            break;
        }
        ll = next;
    }
    model.final_log_likelihood = model.log_likelihood_trace.back();
    return model;
}

GmmModel fit_gmm_best_of(std::span<const double> values, const GmmOptions& options,
                         std::size_t restarts) {
    if (restarts == 0) throw ConfigError("restarts must be positive");
    std::optional<GmmModel> best;
    for (std::size_t r = 0; r < restarts; ++r) {
        GmmOptions opts = options;
        opts.seed = r == 0 ? options.seed : restart_seed(options.seed, r);
        GmmModel model = fit_gmm(values, opts);
        if (!best || model.final_log_likelihood > best->final_log_likelihood) best = std::move(model);
    }
    return std::move(*best);
}

double gmm_log_pdf(const GmmModel& model, double n) {
    std::vector<double> terms(model.components.size());
    for (std::size_t j = 0; j < terms.size(); ++j) {
        const auto& c = model.components[j];
        terms[j] = std::log(c.weight) + log_normal(n, c.mean, c.variance);
    }
    return log_sum_exp(terms);
}

double gmm_pdf(const GmmModel& model, double n) {
    double p = 0.0;
    for (const auto& c : model.components) {
        const double d = n - c.mean;
        p += c.weight * std::exp(-0.5 * d * d / c.variance) / std::sqrt(2.0 * std::numbers::pi * c.variance);
    }
    return p;
}

double gmm_log_likelihood(const GmmModel& model, std::span<const double> values) {
    double ll = 0.0;
    for (double v : values) ll += gmm_log_pdf(model, v);
    return ll;
}

InformationCriteria information_criteria(double log_likelihood, std::size_t k, std::size_t n) {
    const double p = 3.0 * static_cast<double>(k) - 1.0;
    return {2.0 * p - 2.0 * log_likelihood,
            p * std::log(static_cast<double>(n)) - 2.0 * log_likelihood};
}

InformationCriteria information_criteria(const GmmModel& model, std::span<const double> values) {
    return information_criteria(gmm_log_likelihood(model, values), model.k(), values.size());
}

std::size_t select_stable_k(const std::vector<SweepRow>& table) {
    if (table.empty()) throw ConfigError("empty sweep table");
    double best = std::numeric_limits<double>::infinity();
    for (const auto& row : table) best = std::min(best, row.bic);
    const double slack = 0.01 * std::abs(best);
    for (std::size_t i = 0; i < table.size(); ++i) {
        if (table[i].bic <= best + slack) return i;
    }
    return table.size() - 1;
}

SweepResult sweep_k(std::span<const double> values, const std::vector<std::size_t>& k_grid,
                    std::size_t restarts, const GmmOptions& base) {
    if (k_grid.empty()) throw ConfigError("K grid is empty");
    if (!std::is_sorted(k_grid.begin(), k_grid.end()) ||
        std::adjacent_find(k_grid.begin(), k_grid.end()) != k_grid.end()) {
        throw ConfigError("K grid must be strictly ascending");
    }
    SweepResult result;
    std::vector<GmmModel> models;
    for (std::size_t k : k_grid) {
        GmmOptions opts = base;
        opts.k = k;
        GmmModel model = fit_gmm_best_of(values, opts, restarts);
        const auto ic = information_criteria(model.final_log_likelihood, k, values.size());
        result.table.push_back({k, model.final_log_likelihood, ic.aic, ic.bic});
        models.push_back(std::move(model));
    }
    const std::size_t idx = select_stable_k(result.table);
    result.chosen_k = k_grid[idx];
    result.chosen_model = std::move(models[idx]);
    return result;
}

AnchorTable induce_anchors(const GmmModel& model) {
    AnchorTable table;
    table.space = model.space;
    table.source_model = model;
    for (const auto& c : model.components) table.anchors.push_back(c.mean);
    std::sort(table.anchors.begin(), table.anchors.end());
    table.anchors.erase(std::unique(table.anchors.begin(), table.anchors.end()), table.anchors.end());
    return table;
}

namespace {

AnchorAssignment nearest_in(std::span<const double> anchors, double n, double c) {
    AnchorAssignment out;
    out.numeral_value = n;
    auto it = std::lower_bound(anchors.begin(), anchors.end(), c);
    std::size_t idx = 0;
    if (it == anchors.end()) {
        idx = anchors.size() - 1;
    } else if (it == anchors.begin()) {
        idx = 0;
    } else {
        const std::size_t hi = static_cast<std::size_t>(it - anchors.begin());
        const std::size_t lo = hi - 1;
        // ties go to the smaller anchor
        idx = (c - anchors[lo]) <= (anchors[hi] - c) ? lo : hi;
    }
    out.anchor = anchors[idx];
    out.direction = out.anchor < c ? Direction::Left : (out.anchor > c ? Direction::Right : Direction::Exact);
    return out;
}

}  // namespace

AnchorAssignment nearest_anchor(const AnchorTable& table, double n) {
    if (table.anchors.empty()) throw ConfigError("anchor table is empty");
    if (table.space == Space::Log && !(n > 0.0)) {
        throw DomainError("log-space anchor lookup needs a positive numeral, got " + format_double(n));
    }
    const double c = table.space == Space::Log ? std::log(n) : n;
    return nearest_in(table.anchors, n, c);
}

AnchorAssignment nearest_anchor_with_fallback(const AnchorTable& table, double n) {
    if (table.space == Space::Linear || n > 0.0) return nearest_anchor(table, n);
    if (table.anchors.empty()) throw ConfigError("anchor table is empty");
    std::vector<double> magnitudes;
    magnitudes.reserve(table.anchors.size());
    for (double a : table.anchors) magnitudes.push_back(std::exp(a));
    AnchorAssignment out = nearest_in(magnitudes, n, n);
    const auto pos = std::find(magnitudes.begin(), magnitudes.end(), out.anchor) - magnitudes.begin();
    out.anchor = table.anchors[static_cast<std::size_t>(pos)];
    out.linear_fallback = true;
    return out;
}

std::string serialize_anchor_table(const AnchorTable& table) {
    const GmmModel& m = table.source_model;
    std::string out = "# numanchor anchor-table v1\n";
    out += "space\t" + std::string(to_string(table.space)) + "\n";
    out += "k\t" + std::to_string(m.k()) + "\n";
    out += "seed\t" + std::to_string(m.seed) + "\n";
    out += "tolerance\t" + format_double(m.tolerance) + "\n";
    out += "log_likelihood\t" + format_double(m.final_log_likelihood) + "\n";
    out += "iterations\t" + std::to_string(m.iterations) + "\n";
    out += "converged\t" + std::string(m.converged ? "1" : "0") + "\n";
    out += "---\n";
    std::vector<GmmComponent> sorted = m.components;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const auto& a, const auto& b) { return a.mean < b.mean; });
    for (const auto& c : sorted) {
        out += format_double(c.mean) + "\t" + format_double(c.weight) + "\t" + format_double(c.variance) + "\n";
    }
    return out;
}

AnchorTable parse_anchor_table(std::string_view text) {
    const auto lines = split_lines(text);
    if (lines.empty() || lines[0] != "# numanchor anchor-table v1") {
        throw ParseError("anchor table: missing or unsupported version header");
    }
    GmmModel model;
    std::size_t declared_k = 0;
    std::size_t i = 1;
    for (; i < lines.size() && lines[i] != "---"; ++i) {
        const auto kv = split(lines[i], '\t');
        if (kv.size() != 2) throw ParseError("anchor table: malformed header line " + std::to_string(i + 1));
        const auto key = kv[0];
        const auto val = kv[1];
        if (key == "space") model.space = parse_space(val);
        else if (key == "k") declared_k = parse_size(val);
        else if (key == "seed") model.seed = parse_size(val);
        else if (key == "tolerance") model.tolerance = parse_double(val);
        else if (key == "log_likelihood") model.final_log_likelihood = parse_double(val);
        else if (key == "iterations") model.iterations = parse_size(val);
        else if (key == "converged") model.converged = val == "1";
        else throw ParseError("anchor table: unknown header key '" + std::string(key) + "'");
    }
    if (i == lines.size()) throw ParseError("anchor table: missing '---' separator");
    for (++i; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto f = split(lines[i], '\t');
        if (f.size() != 3) throw ParseError("anchor table: malformed row " + std::to_string(i + 1));
        model.components.push_back({parse_double(f[1]), parse_double(f[0]), parse_double(f[2])});
    }
    if (model.components.size() != declared_k) {
        throw ParseError("anchor table: header declares K=" + std::to_string(declared_k) + " but has " +
                         std::to_string(model.components.size()) + " rows");
    }
    return induce_anchors(model);
}

}  // namespace numanchor
