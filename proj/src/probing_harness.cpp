#include "numanchor/probing_harness.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "numanchor/errors.hpp"
#include "numanchor/text_util.hpp"

namespace numanchor {

namespace {

std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
}

std::vector<double> sorted_unique(std::span<const double> values) {
    std::vector<double> out;
    out.reserve(values.size());
    for (double v : values) {
        if (v > 0.0 && std::isfinite(v)) out.push_back(v);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

std::string_view to_string(ProbeTask task) noexcept {
    switch (task) {
        case ProbeTask::Decoding: return "decoding";
        case ProbeTask::Addition: return "addition";
        case ProbeTask::ListMax: return "list_max";
        case ProbeTask::ListMin: return "list_min";
    }
    return "?";
}

std::string_view to_string(RangeLabel label) noexcept {
    switch (label) {
        case RangeLabel::R1To100: return "1-100";
        case RangeLabel::R100To1k: return "100-1k";
        case RangeLabel::R1kTo10k: return "1k-10k";
        case RangeLabel::R10kTo1e10: return "10k-1e10";
        case RangeLabel::All: return "all";
    }
    return "?";
}

std::string_view to_string(Split split) noexcept { return split == Split::InDomain ? "in_domain" : "ood"; }

ProbeTask parse_probe_task(std::string_view text) {
    for (auto t : {ProbeTask::Decoding, ProbeTask::Addition, ProbeTask::ListMax, ProbeTask::ListMin}) {
        if (text == to_string(t)) return t;
    }
    throw ConfigError("unknown probe task '" + std::string(text) + "'");
}

RangeLabel parse_range_label(std::string_view text) {
    for (auto r : {RangeLabel::R1To100, RangeLabel::R100To1k, RangeLabel::R1kTo10k, RangeLabel::R10kTo1e10,
                   RangeLabel::All}) {
        if (text == to_string(r)) return r;
    }
    throw ConfigError("unknown numeral range '" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
    if (text == "in_domain") return Split::InDomain;
    if (text == "ood") return Split::OutOfDomain;
    throw ConfigError("unknown split '" + std::string(text) + "'");
}

bool RangeSpec::contains(double v) const noexcept {
    if (label == RangeLabel::R10kTo1e10 || label == RangeLabel::All) return v >= lower && v <= upper;
    return v >= lower && v < upper;
}

RangeSpec RangeSpec::standard(RangeLabel label, std::span<const double> corpus_values) {
    switch (label) {
        case RangeLabel::R1To100: return {1.0, 100.0, label};
        case RangeLabel::R100To1k: return {100.0, 1e3, label};
        case RangeLabel::R1kTo10k: return {1e3, 1e4, label};
        case RangeLabel::R10kTo1e10: return {1e4, 1e10, label};
        case RangeLabel::All: break;
    }
    const auto u = sorted_unique(corpus_values);
    if (u.empty()) throw InfeasibleSplitError("range all: the corpus has no positive numerals");
    return {u.front(), u.back(), RangeLabel::All};
}

bool ood_admissible(RangeLabel label) noexcept {
    return label == RangeLabel::R1kTo10k || label == RangeLabel::R10kTo1e10;
}

// ---------------------------------------------------------------------------

NumeralSampler::NumeralSampler(const RangeSpec& range, Split split, std::span<const double> corpus_values)
    : range_(range), split_(split), corpus_(sorted_unique(corpus_values)) {
    const std::string name(to_string(range.label));
    if (!(range.lower > 0.0 && range.lower <= range.upper)) throw ConfigError("invalid range " + name);
    if (split == Split::InDomain) {
        for (double v : corpus_) {
            if (range.contains(v)) pool_.push_back(v);
        }
        if (pool_.empty()) throw InfeasibleSplitError("range " + name + ": no corpus numerals for in-domain probing");
        return;
    }
    if (!ood_admissible(range.label)) {
        throw InfeasibleSplitError("range " + name + " does not admit out-of-domain probing");
    }
    // Whole numbers in range versus corpus numerals in range.
    const double lo = std::ceil(range.lower);
    double hi = std::floor(range.upper);
    if (!range.contains(hi)) hi -= 1.0;
    const double integers = hi >= lo ? hi - lo + 1.0 : 0.0;
    double taken = 0.0;
    for (double v : corpus_) {
        if (range.contains(v) && v == std::floor(v)) taken += 1.0;
    }
    if (integers - taken < 1.0) {
        throw InfeasibleSplitError("range " + name + ": every numeral in range occurs in the corpus");
    }
}

double NumeralSampler::target(std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> u(std::log(range_.lower), std::log(range_.upper));
    return std::exp(u(rng));
}

double NumeralSampler::draw_ood(std::mt19937_64& rng, const std::vector<double>* exclude) const {
    const double lo = std::ceil(range_.lower);
    double hi = std::floor(range_.upper);
    if (!range_.contains(hi)) hi -= 1.0;
    for (int attempt = 0; attempt < 100000; ++attempt) {
        const double v = std::clamp(std::round(target(rng)), lo, hi);
        if (std::binary_search(corpus_.begin(), corpus_.end(), v)) continue;
        if (exclude && std::binary_search(exclude->begin(), exclude->end(), v)) continue;
        return v;
    }
    throw InfeasibleSplitError("range " + std::string(to_string(range_.label)) +
                               ": could not draw an out-of-domain numeral");
}

double NumeralSampler::draw(std::mt19937_64& rng) const {
    if (split_ == Split::OutOfDomain) return draw_ood(rng, nullptr);
    const double t = std::log(target(rng));
    auto it = std::lower_bound(pool_.begin(), pool_.end(), std::exp(t));
    if (it == pool_.end()) return pool_.back();
    if (it == pool_.begin()) return *it;
    const double above = std::log(*it) - t;
    const double below = t - std::log(*std::prev(it));
    return below <= above ? *std::prev(it) : *it;
}

std::vector<double> NumeralSampler::draw_distinct(std::size_t count, std::mt19937_64& rng) const {
    std::vector<double> out;
    if (split_ == Split::OutOfDomain) {
        std::vector<double> used;
        for (std::size_t i = 0; i < count; ++i) {
            const double v = draw_ood(rng, &used);
            out.push_back(v);
            used.insert(std::lower_bound(used.begin(), used.end(), v), v);
        }
        return out;
    }
    count = std::min(count, pool_.size());
    std::vector<bool> used(pool_.size(), false);
    for (std::size_t i = 0; i < count; ++i) {
        const double t = std::log(target(rng));
        const auto start = static_cast<std::ptrdiff_t>(
            std::lower_bound(pool_.begin(), pool_.end(), std::exp(t)) - pool_.begin());
        // nearest unused candidate in log distance
        std::ptrdiff_t lo = start - 1, hi = start;
        const auto n = static_cast<std::ptrdiff_t>(pool_.size());
        while (lo >= 0 && used[static_cast<std::size_t>(lo)]) --lo;
        while (hi < n && used[static_cast<std::size_t>(hi)]) ++hi;
        std::ptrdiff_t pick;
        if (lo < 0) {
            pick = hi;
        } else if (hi >= n) {
            pick = lo;
        } else {
            pick = t - std::log(pool_[static_cast<std::size_t>(lo)]) <= std::log(pool_[static_cast<std::size_t>(hi)]) - t
                       ? lo
                       : hi;
        }
        used[static_cast<std::size_t>(pick)] = true;
        out.push_back(pool_[static_cast<std::size_t>(pick)]);
    }
    return out;
}

// ---------------------------------------------------------------------------

std::vector<double> CachingEmbedder::embed(double value) const {
    auto it = cache_.find(value);
    if (it == cache_.end()) it = cache_.emplace(value, inner_.embed(value)).first;
    return it->second;
}

ProbeDataset build_probe_dataset(ProbeTask task, const RangeSpec& range, Split split, std::size_t n_samples,
                                 std::uint64_t seed, const Embedder& embedder,
                                 std::span<const double> corpus_values) {
    if (n_samples == 0) throw ConfigError("probe dataset needs at least one sample");
    const NumeralSampler sampler(range, split, corpus_values);
    auto rng = derived_rng(seed, 0);
    ProbeDataset ds;
    ds.task = task;
    ds.range = range;
    ds.split = split;
    ds.seed = seed;
    switch (task) {
        case ProbeTask::Decoding:
            for (double v : sampler.draw_distinct(n_samples, rng)) {
                ds.values.push_back({v});
                ds.targets.push_back(v);
            }
            break;
        case ProbeTask::Addition:
            for (std::size_t i = 0; i < n_samples; ++i) {
                const double a = sampler.draw(rng);
                const double b = sampler.draw(rng);
                ds.values.push_back({a, b});
                ds.targets.push_back(a + b);
            }
            break;
        case ProbeTask::ListMax:
        case ProbeTask::ListMin:
            if (split == Split::InDomain && sampler.pool_size() < kListLength) {
                throw InfeasibleSplitError("range " + std::string(to_string(range.label)) +
                                           ": fewer than 5 distinct numerals for list probing");
            }
            for (std::size_t i = 0; i < n_samples; ++i) {
                auto list = sampler.draw_distinct(kListLength, rng);  // distinct, so the extremum is unique
                const auto it = task == ProbeTask::ListMax ? std::max_element(list.begin(), list.end())
                                                           : std::min_element(list.begin(), list.end());
                ds.targets.push_back(static_cast<double>(it - list.begin()));
                ds.values.push_back(std::move(list));
            }
            break;
    }
    for (const auto& item : ds.values) {
        std::vector<double> f;
        for (double v : item) {
            const auto e = embedder.embed(v);
            f.insert(f.end(), e.begin(), e.end());
        }
        ds.features.push_back(std::move(f));
    }
    return ds;
}

// ---------------------------------------------------------------------------

GbtRegressor GbtRegressor::fit(const std::vector<std::vector<double>>& x, std::span<const double> y,
                               const GbtConfig& config) {
    const std::size_t n = x.size();
    if (n != y.size()) throw ConfigError("feature and target counts differ");
    if (n < 10) throw ConfigError("gradient boosting needs at least 10 samples");
    const std::size_t d = x.front().size();
    for (const auto& row : x) {
        if (row.size() != d) throw ConfigError("ragged feature rows");
    }
    if (config.max_depth == 0 || config.min_samples_leaf == 0) throw ConfigError("max_depth and min_samples_leaf must be positive");

    GbtRegressor model;
    model.learning_rate_ = config.learning_rate;
    model.initial_ = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    std::vector<double> pred(n, model.initial_);

    std::vector<std::vector<std::size_t>> order(d, std::vector<std::size_t>(n));
    for (std::size_t f = 0; f < d; ++f) {
        std::iota(order[f].begin(), order[f].end(), 0);
        std::stable_sort(order[f].begin(), order[f].end(), [&](std::size_t a, std::size_t b) { return x[a][f] < x[b][f]; });
    }

    std::vector<double> residual(n);
    std::vector<int> node_of(n);
    for (std::size_t t = 0; t < config.trees; ++t) {
        for (std::size_t i = 0; i < n; ++i) residual[i] = y[i] - pred[i];
        Tree tree(1);
        std::fill(node_of.begin(), node_of.end(), 0);
        std::vector<int> frontier{0};
        for (std::size_t depth = 0; depth < config.max_depth && !frontier.empty(); ++depth) {
            // slot per frontier node
            std::vector<int> slot(tree.size(), -1);
            for (std::size_t s = 0; s < frontier.size(); ++s) slot[static_cast<std::size_t>(frontier[s])] = static_cast<int>(s);
            const std::size_t m = frontier.size();
            std::vector<double> total(m, 0.0);
            std::vector<std::size_t> count(m, 0);
            for (std::size_t i = 0; i < n; ++i) {
                const int s = slot[static_cast<std::size_t>(node_of[i])];
                if (s < 0) continue;
                total[static_cast<std::size_t>(s)] += residual[i];
                ++count[static_cast<std::size_t>(s)];
            }
            std::vector<double> best_gain(m, 1e-12);
            std::vector<int> best_feature(m, -1);
            std::vector<double> best_threshold(m, 0.0);
            std::vector<double> left_sum(m);
            std::vector<std::size_t> left_count(m);
            std::vector<double> last(m);
            for (std::size_t f = 0; f < d; ++f) {
                std::fill(left_sum.begin(), left_sum.end(), 0.0);
                std::fill(left_count.begin(), left_count.end(), 0);
                for (std::size_t i : order[f]) {
                    const int s_raw = slot[static_cast<std::size_t>(node_of[i])];
                    if (s_raw < 0) continue;
                    const auto s = static_cast<std::size_t>(s_raw);
                    const double v = x[i][f];
                    const std::size_t nl = left_count[s], nr = count[s] - nl;
                    if (nl >= config.min_samples_leaf && nr >= config.min_samples_leaf && v > last[s]) {
                        const double sl = left_sum[s], sr = total[s] - sl;
                        const double gain = sl * sl / static_cast<double>(nl) + sr * sr / static_cast<double>(nr) -
                                            total[s] * total[s] / static_cast<double>(count[s]);
                        if (gain > best_gain[s]) {
                            best_gain[s] = gain;
                            best_feature[s] = static_cast<int>(f);
                            double thr = last[s] + (v - last[s]) / 2.0;
                            if (!(thr < v)) thr = last[s];
                            best_threshold[s] = thr;
                        }
                    }
                    left_sum[s] += residual[i];
                    ++left_count[s];
                    last[s] = v;
                }
            }
            std::vector<int> next;
            std::vector<int> left_child(m, -1), right_child(m, -1);
            for (std::size_t s = 0; s < m; ++s) {
                if (best_feature[s] < 0) continue;
                auto& node = tree[static_cast<std::size_t>(frontier[s])];
                node.feature = best_feature[s];
                node.threshold = best_threshold[s];
                left_child[s] = node.left = static_cast<int>(tree.size());
                tree.emplace_back();
                right_child[s] = static_cast<int>(tree.size());
                tree[static_cast<std::size_t>(frontier[s])].right = right_child[s];
                tree.emplace_back();
                next.push_back(left_child[s]);
                next.push_back(right_child[s]);
            }
            for (std::size_t i = 0; i < n; ++i) {
                const int s = slot[static_cast<std::size_t>(node_of[i])];
                if (s < 0 || best_feature[static_cast<std::size_t>(s)] < 0) continue;
                const auto su = static_cast<std::size_t>(s);
                node_of[i] = x[i][static_cast<std::size_t>(best_feature[su])] <= best_threshold[su] ? left_child[su]
                                                                                                      : right_child[su];
            }
            frontier = std::move(next);
        }
        // leaf values: mean residual of the samples that end there
        std::vector<double> sum(tree.size(), 0.0);
        std::vector<std::size_t> cnt(tree.size(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            sum[static_cast<std::size_t>(node_of[i])] += residual[i];
            ++cnt[static_cast<std::size_t>(node_of[i])];
        }
        for (std::size_t k = 0; k < tree.size(); ++k) {
            if (tree[k].feature < 0 && cnt[k] > 0) tree[k].value = sum[k] / static_cast<double>(cnt[k]);
        }
        for (std::size_t i = 0; i < n; ++i) pred[i] += config.learning_rate * tree[static_cast<std::size_t>(node_of[i])].value;
        model.trees_.push_back(std::move(tree));
    }
    return model;
}

double GbtRegressor::predict(std::span<const double> x) const {
    double out = initial_;
    for (const auto& tree : trees_) {
        std::size_t k = 0;
        while (tree[k].feature >= 0) {
            k = static_cast<std::size_t>(x[static_cast<std::size_t>(tree[k].feature)] <= tree[k].threshold ? tree[k].left
                                                                                                           : tree[k].right);
        }
        out += learning_rate_ * tree[k].value;
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using ConstMap = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

}  // namespace

struct ListClassifier::Forward {
    struct Dir {
        std::vector<Vec> i, f, g, o, c, h;  // indexed by time
    };
    std::vector<std::vector<Vec>> inputs;  // per layer, per time
    std::vector<std::array<Dir, 2>> dirs;  // per layer
    std::vector<Vec> top;                  // last layer output per time
    std::vector<double> logits;
};

ListClassifier::ListClassifier(std::size_t input_dim, const ListClassifierConfig& config)
    : input_dim_(input_dim), config_(config), mean_(input_dim, 0.0), inv_std_(input_dim, 1.0) {
    if (input_dim == 0 || config.layers == 0 || config.hidden == 0) throw ConfigError("list classifier needs positive sizes");
    const std::size_t h = config.hidden;
    std::size_t total = 0;
    for (std::size_t l = 0; l < config.layers; ++l) {
        for (std::size_t dir = 0; dir < 2; ++dir) {
            offsets_.push_back(total);
            total += 4 * h * layer_input(l) + 4 * h * h + 4 * h;
        }
    }
    head_offset_ = total;
    total += 2 * h + 1;
    params_.resize(total);
    std::mt19937_64 rng(config.seed);
    const double k = 1.0 / std::sqrt(static_cast<double>(h));
    std::uniform_real_distribution<double> u(-k, k);
    for (auto& p : params_) p = u(rng);
}

std::size_t ListClassifier::layer_input(std::size_t layer) const { return layer == 0 ? input_dim_ : 2 * config_.hidden; }

std::size_t ListClassifier::offset(std::size_t layer, std::size_t dir) const { return offsets_[layer * 2 + dir]; }

void ListClassifier::forward(const Sequence& x, Forward& fw) const {
    const std::size_t T = x.size();
    const auto h = static_cast<Eigen::Index>(config_.hidden);
    fw.inputs.assign(config_.layers, {});
    fw.dirs.assign(config_.layers, {});
    std::vector<Vec> current(T);
    for (std::size_t t = 0; t < T; ++t) {
        if (x[t].size() != input_dim_) throw UnsupportedShapeError("list item has the wrong width");
        current[t] = Eigen::Map<const Vec>(x[t].data(), static_cast<Eigen::Index>(input_dim_));
    }
    for (std::size_t l = 0; l < config_.layers; ++l) {
        fw.inputs[l] = current;
        const auto in = static_cast<Eigen::Index>(layer_input(l));
        std::vector<Vec> out(T, Vec::Zero(2 * h));
        for (std::size_t dir = 0; dir < 2; ++dir) {
            const double* p = params_.data() + offset(l, dir);
            const ConstMap W(p, 4 * h, in);
            const ConstMap U(p + 4 * h * in, 4 * h, h);
            const Eigen::Map<const Vec> b(p + 4 * h * in + 4 * h * h, 4 * h);
            auto& d = fw.dirs[l][dir];
            d.i.assign(T, Vec());
            d.f = d.g = d.o = d.c = d.h = d.i;
            Vec hprev = Vec::Zero(h), cprev = Vec::Zero(h);
            for (std::size_t step = 0; step < T; ++step) {
                const std::size_t t = dir == 0 ? step : T - 1 - step;
                const Vec a = W * current[t] + U * hprev + b;
                d.i[t] = a.segment(0, h).unaryExpr([](double v) { return sigmoid(v); });
                d.f[t] = a.segment(h, h).unaryExpr([](double v) { return sigmoid(v); });
                d.g[t] = a.segment(2 * h, h).array().tanh();
                d.o[t] = a.segment(3 * h, h).unaryExpr([](double v) { return sigmoid(v); });
                d.c[t] = d.f[t].cwiseProduct(cprev) + d.i[t].cwiseProduct(d.g[t]);
                d.h[t] = d.o[t].cwiseProduct(Vec(d.c[t].array().tanh()));
                hprev = d.h[t];
                cprev = d.c[t];
                out[t].segment(dir * h, h) = d.h[t];
            }
        }
        current = std::move(out);
    }
    fw.top = current;
    const Eigen::Map<const Vec> w(params_.data() + head_offset_, 2 * h);
    const double bias = params_[head_offset_ + 2 * static_cast<std::size_t>(h)];
    fw.logits.resize(T);
    for (std::size_t t = 0; t < T; ++t) fw.logits[t] = w.dot(current[t]) + bias;
}

double ListClassifier::loss(const Sequence& list, std::size_t label) const {
    Forward fw;
    forward(list, fw);
    double total = 0.0;
    for (std::size_t t = 0; t < fw.logits.size(); ++t) total += softplus(fw.logits[t]) - (t == label ? fw.logits[t] : 0.0);
    return total / static_cast<double>(fw.logits.size());
}

double ListClassifier::loss_and_gradients(const Sequence& list, std::size_t label, std::vector<double>& grads) const {
    if (grads.size() != params_.size()) grads.assign(params_.size(), 0.0);
    Forward fw;
    forward(list, fw);
    const std::size_t T = list.size();
    const auto h = static_cast<Eigen::Index>(config_.hidden);
    const double invT = 1.0 / static_cast<double>(T);
    double total = 0.0;

    const Eigen::Map<const Vec> w(params_.data() + head_offset_, 2 * h);
    Eigen::Map<Vec> gw(grads.data() + head_offset_, 2 * h);
    double& gb = grads[head_offset_ + 2 * static_cast<std::size_t>(h)];
    std::vector<Vec> dY(T);
    for (std::size_t t = 0; t < T; ++t) {
        const double s = fw.logits[t];
        const double target = t == label ? 1.0 : 0.0;
        total += softplus(s) - target * s;
        const double ds = (sigmoid(s) - target) * invT;
        gw += ds * fw.top[t];
        gb += ds;
        dY[t] = ds * w;
    }

    for (std::size_t l = config_.layers; l-- > 0;) {
        const auto in = static_cast<Eigen::Index>(layer_input(l));
        std::vector<Vec> dX(T, Vec::Zero(in));
        for (std::size_t dir = 0; dir < 2; ++dir) {
            const double* p = params_.data() + offset(l, dir);
            double* g = grads.data() + offset(l, dir);
            const ConstMap W(p, 4 * h, in);
            const ConstMap U(p + 4 * h * in, 4 * h, h);
            Map gW(g, 4 * h, in);
            Map gU(g + 4 * h * in, 4 * h, h);
            Eigen::Map<Vec> gB(g + 4 * h * in + 4 * h * h, 4 * h);
            const auto& d = fw.dirs[l][dir];
            Vec dh_next = Vec::Zero(h), dc_next = Vec::Zero(h);
            for (std::size_t step = T; step-- > 0;) {
                const std::size_t t = dir == 0 ? step : T - 1 - step;
                const bool first = step == 0;
                const std::size_t prev = dir == 0 ? t - 1 : t + 1;  // only read when !first
                const Vec hprev = first ? Vec::Zero(h) : d.h[prev];
                const Vec cprev = first ? Vec::Zero(h) : d.c[prev];
                const Vec dh = dY[t].segment(static_cast<Eigen::Index>(dir) * h, h) + dh_next;
                const Vec tc = d.c[t].array().tanh();
                const Vec dout = dh.cwiseProduct(tc);
                const Vec dc = dh.cwiseProduct(d.o[t]).cwiseProduct(Vec((1.0 - tc.array().square()))) + dc_next;
                Vec da(4 * h);
                da.segment(0, h) = dc.cwiseProduct(d.g[t]).array() * d.i[t].array() * (1.0 - d.i[t].array());
                da.segment(h, h) = dc.cwiseProduct(cprev).array() * d.f[t].array() * (1.0 - d.f[t].array());
                da.segment(2 * h, h) = dc.cwiseProduct(d.i[t]).array() * (1.0 - d.g[t].array().square());
                da.segment(3 * h, h) = dout.array() * d.o[t].array() * (1.0 - d.o[t].array());
                gW.noalias() += da * fw.inputs[l][t].transpose();
                gU.noalias() += da * hprev.transpose();
                gB += da;
                dX[t].noalias() += W.transpose() * da;
                dh_next = U.transpose() * da;
                dc_next = dc.cwiseProduct(d.f[t]);
            }
        }
        dY = std::move(dX);
    }
    return total * invT;
}

ListClassifier::Sequence ListClassifier::standardize(const Sequence& list) const {
    Sequence out = list;
    for (auto& item : out) {
        if (item.size() != input_dim_) throw UnsupportedShapeError("list item has the wrong width");
        for (std::size_t j = 0; j < input_dim_; ++j) item[j] = (item[j] - mean_[j]) * inv_std_[j];
    }
    return out;
}

void ListClassifier::fit(const std::vector<Sequence>& lists, const std::vector<std::size_t>& labels) {
    if (lists.size() != labels.size() || lists.empty()) throw ConfigError("list classifier needs matching, non-empty data");
    std::vector<double> sum(input_dim_, 0.0), sq(input_dim_, 0.0);
    double count = 0.0;
    for (const auto& list : lists) {
        for (const auto& item : list) {
            if (item.size() != input_dim_) throw UnsupportedShapeError("list item has the wrong width");
            for (std::size_t j = 0; j < input_dim_; ++j) {
                sum[j] += item[j];
                sq[j] += item[j] * item[j];
            }
            count += 1.0;
        }
    }
    for (std::size_t j = 0; j < input_dim_; ++j) {
        mean_[j] = sum[j] / count;
        const double var = std::max(0.0, sq[j] / count - mean_[j] * mean_[j]);
        inv_std_[j] = var > 1e-24 ? 1.0 / std::sqrt(var) : 1.0;
    }
    std::vector<Sequence> data;
    data.reserve(lists.size());
    for (const auto& list : lists) data.push_back(standardize(list));

    std::vector<double> m(params_.size(), 0.0), v(params_.size(), 0.0), g(params_.size(), 0.0);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    auto rng = derived_rng(config_.seed, 7);
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    std::size_t t = 0;
    for (std::size_t epoch = 0; epoch < config_.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t idx : order) {
            std::fill(g.begin(), g.end(), 0.0);
            loss_and_gradients(data[idx], labels[idx], g);
            ++t;
            const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
            const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
            for (std::size_t k = 0; k < params_.size(); ++k) {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                params_[k] -= config_.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
            }
        }
    }
}

std::vector<double> ListClassifier::scores(const Sequence& list) const {
    Forward fw;
    forward(standardize(list), fw);
    std::vector<double> out;
    for (double s : fw.logits) out.push_back(sigmoid(s));
    return out;
}

std::size_t ListClassifier::predict(const Sequence& list) const {
    Forward fw;
    forward(standardize(list), fw);
    return static_cast<std::size_t>(std::max_element(fw.logits.begin(), fw.logits.end()) - fw.logits.begin());
}

// ---------------------------------------------------------------------------

double log_rmse(std::span<const double> predicted_log, std::span<const double> true_log) {
    if (predicted_log.size() != true_log.size() || predicted_log.empty()) {
        throw ConfigError("log_rmse needs equal-length, non-empty inputs");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < true_log.size(); ++i) {
        const double d = predicted_log[i] - true_log[i];
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(true_log.size()));
}

double r_squared(std::span<const double> predicted, std::span<const double> truth) {
    if (predicted.size() != truth.size() || truth.empty()) throw ConfigError("r_squared needs equal-length, non-empty inputs");
    const double mean = std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(truth.size());
    double res = 0.0, tot = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        res += (truth[i] - predicted[i]) * (truth[i] - predicted[i]);
        tot += (truth[i] - mean) * (truth[i] - mean);
    }
    if (tot == 0.0) throw DegenerateDataError("r_squared is undefined for a constant truth");
    return 1.0 - res / tot;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> train_eval_split(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    auto rng = derived_rng(seed, 3);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_eval = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n))));
    if (n_eval >= n) throw ConfigError("too few items for a train/eval split");
    std::vector<std::size_t> eval(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_eval));
    std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_eval), idx.end());
    std::sort(eval.begin(), eval.end());
    std::sort(train.begin(), train.end());
    return {train, eval};
}

namespace {

DecodingResult regress_log_targets(const ProbeDataset& ds, const GbtConfig& config) {
    const auto [train, eval] = train_eval_split(ds.features.size(), ds.seed);
    std::vector<std::vector<double>> x;
    std::vector<double> y;
    for (auto i : train) {
        x.push_back(ds.features[i]);
        y.push_back(std::log(ds.targets[i]));
    }
    const auto model = GbtRegressor::fit(x, y, config);
    std::vector<double> pred, truth;
    DecodingResult out;
    for (auto i : eval) {
        pred.push_back(model.predict(ds.features[i]));
        truth.push_back(std::log(ds.targets[i]));
        out.scatter.emplace_back(ds.targets[i], std::exp(pred.back()));
    }
    out.log_rmse = log_rmse(pred, truth);
    try {
        out.r2 = r_squared(pred, truth);
    } catch (const DegenerateDataError&) {
        out.r2 = out.log_rmse == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
    }
    out.n_train = train.size();
    out.n_eval = eval.size();
    return out;
}

}  // namespace

DecodingResult run_decoding(const ProbeDataset& dataset, const GbtConfig& config) {
    if (dataset.task != ProbeTask::Decoding) throw ConfigError("run_decoding needs a decoding dataset");
    return regress_log_targets(dataset, config);
}

DecodingResult run_addition(const ProbeDataset& dataset, const GbtConfig& config) {
    if (dataset.task != ProbeTask::Addition) throw ConfigError("run_addition needs an addition dataset");
    return regress_log_targets(dataset, config);
}

ListResult run_list_extremum(const ProbeDataset& dataset, std::size_t embedding_dim, const ListClassifierConfig& config) {
    if (dataset.task != ProbeTask::ListMax && dataset.task != ProbeTask::ListMin) {
        throw ConfigError("run_list_extremum needs a list dataset");
    }
    auto to_sequence = [&](std::size_t i) {
        const auto& f = dataset.features[i];
        if (f.size() != embedding_dim * kListLength) throw UnsupportedShapeError("list features have the wrong width");
        ListClassifier::Sequence seq;
        for (std::size_t p = 0; p < kListLength; ++p) {
            seq.emplace_back(f.begin() + static_cast<std::ptrdiff_t>(p * embedding_dim),
                             f.begin() + static_cast<std::ptrdiff_t>((p + 1) * embedding_dim));
        }
        return seq;
    };
    const auto [train, eval] = train_eval_split(dataset.features.size(), dataset.seed);
    std::vector<ListClassifier::Sequence> lists;
    std::vector<std::size_t> labels;
    for (auto i : train) {
        lists.push_back(to_sequence(i));
        labels.push_back(static_cast<std::size_t>(dataset.targets[i]));
    }
    ListClassifierConfig cfg = config;
    cfg.seed = config.seed ^ dataset.seed;
    ListClassifier clf(embedding_dim, cfg);
    clf.fit(lists, labels);
    std::size_t hits = 0;
    for (auto i : eval) {
        if (clf.predict(to_sequence(i)) == static_cast<std::size_t>(dataset.targets[i])) ++hits;
    }
    return {static_cast<double>(hits) / static_cast<double>(eval.size()), train.size(), eval.size()};
}

std::vector<std::vector<double>> cosine_heatmap(const Embedder& embedder, std::span<const double> values) {
    if (values.size() < 2) throw ConfigError("heatmap needs at least 2 values");
    std::vector<Vec> e;
    for (double v : values) {
        const auto raw = embedder.embed(v);
        Vec x = Eigen::Map<const Vec>(raw.data(), static_cast<Eigen::Index>(raw.size()));
        const double norm = x.norm();
        if (norm == 0.0) throw UndefinedSimilarityError("zero-norm embedding for numeral " + format_double(v));
        e.push_back(x / norm);
    }
    const std::size_t n = values.size();
    std::vector<std::vector<double>> m(n, std::vector<double>(n, 1.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) m[i][j] = m[j][i] = e[i].dot(e[j]);
    }
    return m;
}

BandMeans heatmap_band_means(const std::vector<std::vector<double>>& matrix, std::size_t near_width,
                             std::size_t far_width) {
    double near = 0.0, far = 0.0;
    std::size_t nn = 0, nf = 0;
    for (std::size_t i = 0; i < matrix.size(); ++i) {
        for (std::size_t j = 0; j < matrix.size(); ++j) {
            const std::size_t gap = i > j ? i - j : j - i;
            if (gap >= 1 && gap <= near_width) {
                near += matrix[i][j];
                ++nn;
            } else if (gap >= far_width) {
                far += matrix[i][j];
                ++nf;
            }
        }
    }
    if (nn == 0 || nf == 0) throw DomainError("heatmap too small for the requested bands");
    return {near / static_cast<double>(nn), far / static_cast<double>(nf)};
}

// ---------------------------------------------------------------------------

const ProbeCell* ProbeReport::find(ProbeTask task, RangeLabel range, Split split) const {
    for (const auto& c : cells) {
        if (c.task == task && c.range == range && c.split == split) return &c;
    }
    return nullptr;
}

ProbeReport run_probe_plan(const ProbePlan& plan, const Embedder& embedder, std::span<const double> corpus_values) {
    const CachingEmbedder cached(embedder);
    ProbeReport report;
    std::uint64_t cell_index = 0;
    for (auto task : plan.tasks) {
        for (auto range_label : plan.ranges) {
            for (auto split : plan.splits) {
                ++cell_index;
                ProbeCell cell;
                cell.task = task;
                cell.range = range_label;
                cell.split = split;
                cell.metric = task == ProbeTask::Decoding || task == ProbeTask::Addition ? "log_rmse" : "accuracy";
                const std::uint64_t seed = derived_rng(plan.seed, cell_index)();
                try {
                    const auto range = RangeSpec::standard(range_label, corpus_values);
                    const std::size_t n = task == ProbeTask::Decoding   ? plan.decoding_samples
                                          : task == ProbeTask::Addition ? plan.addition_samples
                                                                        : plan.list_samples;
                    const auto ds = build_probe_dataset(task, range, split, n, seed, cached, corpus_values);
                    if (task == ProbeTask::Decoding || task == ProbeTask::Addition) {
                        const auto r = task == ProbeTask::Decoding ? run_decoding(ds, plan.gbt) : run_addition(ds, plan.gbt);
                        cell.value = r.log_rmse;
                        cell.n = r.n_eval;
                        if (task == ProbeTask::Decoding) {
                            cell.r2 = r.r2;
                            if (range_label == RangeLabel::All && split == Split::InDomain) report.scatter = r.scatter;
                        }
                    } else {
                        const auto r = run_list_extremum(ds, cached.dimension(), plan.classifier);
                        cell.value = r.accuracy;
                        cell.n = r.n_eval;
                    }
                } catch (const InfeasibleSplitError& e) {
                    cell.infeasible = e.what();
                }
                report.cells.push_back(std::move(cell));
            }
        }
    }
    report.heatmap_values = plan.heatmap_values;
    if (report.heatmap_values.empty()) {
        for (int v = 1; v <= 100; ++v) report.heatmap_values.push_back(v);
    }
    report.heatmap = cosine_heatmap(cached, report.heatmap_values);
    return report;
}

std::string format_probe_report(const ProbeReport& report) {
    std::string out = "# numanchor probe report v1\ntask\trange\tsplit\tmetric\tvalue\tn\tr2\tnote\n";
    for (const auto& c : report.cells) {
        out += std::string(to_string(c.task)) + '\t' + std::string(to_string(c.range)) + '\t' +
               std::string(to_string(c.split)) + '\t';
        if (c.infeasible) {
            out += "infeasible\t-\t0\t-\t" + *c.infeasible + '\n';
            continue;
        }
        out += c.metric + '\t' + format_double(c.value) + '\t' + std::to_string(c.n) + '\t' +
               (c.r2 ? format_double(*c.r2) : std::string("-")) + "\t-\n";
    }
    return out;
}

ProbeReport parse_probe_report(std::string_view text) {
    ProbeReport report;
    bool header = false;
    for (auto line : split_lines(text)) {
        if (line.empty() || line.front() == '#') continue;
        if (!header) {
            header = true;
            continue;
        }
        const auto f = split(line, '\t');
        if (f.size() != 8) throw ParseError("probe report rows need 8 fields");
        ProbeCell c;
        c.task = parse_probe_task(f[0]);
        c.range = parse_range_label(f[1]);
        c.split = parse_split(f[2]);
        c.metric = std::string(f[3]);
        if (c.metric == "infeasible") {
            c.infeasible = std::string(f[7]);
            c.metric = c.task == ProbeTask::Decoding || c.task == ProbeTask::Addition ? "log_rmse" : "accuracy";
        } else {
            c.value = parse_double(f[4]);
            c.n = parse_size(f[5]);
            if (f[6] != "-") c.r2 = parse_double(f[6]);
        }
        report.cells.push_back(std::move(c));
    }
    return report;
}

std::string format_heatmap(const std::vector<double>& values, const std::vector<std::vector<double>>& matrix) {
    std::vector<std::string> head;
    for (double v : values) head.push_back(format_double(v));
    std::string out = "# values " + join(head, " ") + '\n';
    for (const auto& row : matrix) {
        std::vector<std::string> cells;
        for (double v : row) cells.push_back(format_fixed(v, 6));
        out += join(cells, " ") + '\n';
    }
    return out;
}

ParsedHeatmap parse_heatmap(std::string_view text) {
    const auto lines = split_lines(text);
    if (lines.empty() || !lines[0].starts_with("# values")) throw ParseError("heatmap: missing '# values' header");
    ParsedHeatmap out;
    for (const auto& tok : split_whitespace(lines[0].substr(8))) out.values.push_back(parse_double(tok));
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        std::vector<double> row;
        for (const auto& tok : split_whitespace(lines[i])) row.push_back(parse_double(tok));
        if (row.size() != out.values.size()) throw ParseError("heatmap: row " + std::to_string(i) + " has the wrong width");
        out.matrix.push_back(std::move(row));
    }
    if (out.matrix.size() != out.values.size()) throw ParseError("heatmap: matrix is not square");
    return out;
}

std::string format_scatter_csv(const std::vector<std::pair<double, double>>& scatter) {
    std::string out = "true_value,decoded_value\n";
    for (const auto& [t, d] : scatter) out += format_double(t) + ',' + format_double(d) + '\n';
    return out;
}

std::string format_metric_grid(const ProbeReport& report) {
    const std::vector<RangeLabel> ranges{RangeLabel::R1To100, RangeLabel::R100To1k, RangeLabel::R1kTo10k,
                                         RangeLabel::R10kTo1e10, RangeLabel::All};
    std::string out = "task/split";
    for (auto r : ranges) out += '\t' + std::string(to_string(r));
    out += '\n';
    for (auto task : {ProbeTask::Decoding, ProbeTask::Addition, ProbeTask::ListMax, ProbeTask::ListMin}) {
        for (auto split : {Split::InDomain, Split::OutOfDomain}) {
            bool any = false;
            std::string row = std::string(to_string(task)) + '/' + std::string(to_string(split));
            for (auto r : ranges) {
                const auto* c = report.find(task, r, split);
                row += '\t';
                if (!c) continue;
                any = true;
                if (c->infeasible) {
                    row += "n/a";
                } else if (c->metric == "accuracy") {
                    row += format_fixed(100.0 * c->value, 2) + '%';
                } else {
                    row += format_fixed(c->value, 4);
                }
            }
            if (any) out += row + '\n';
        }
    }
    return out;
}

}  // namespace numanchor
