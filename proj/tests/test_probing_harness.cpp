#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "numanchor/errors.hpp"
#include "numanchor/probing_harness.hpp"

using namespace numanchor;

namespace {

struct LogEmbedder : Embedder {
    std::size_t dimension() const override { return 1; }
    std::vector<double> embed(double v) const override { return {std::log(v)}; }
};

// Never zero, so cosine similarity is defined everywhere.
struct OffsetLogEmbedder : Embedder {
    std::size_t dimension() const override { return 2; }
    std::vector<double> embed(double v) const override { return {std::log(v), 1.0}; }
};

struct ConstantEmbedder : Embedder {
    std::size_t dimension() const override { return 3; }
    std::vector<double> embed(double) const override { return {1.0, 2.0, 3.0}; }
};

// Deterministic pseudo-random vector per value; carries no magnitude information.
struct RandomEmbedder : Embedder {
    std::size_t dimension() const override { return 4; }
    std::vector<double> embed(double v) const override {
        std::mt19937_64 rng(static_cast<std::uint64_t>(v * 7919.0) ^ 0x9e3779b97f4a7c15ULL);
        std::normal_distribution<double> n;
        return {n(rng), n(rng), n(rng), n(rng)};
    }
};

struct TableEmbedder : Embedder {
    std::map<double, std::vector<double>> table;
    std::size_t dimension() const override { return table.begin()->second.size(); }
    std::vector<double> embed(double v) const override { return table.at(v); }
};

std::vector<double> corpus_values() {
    std::vector<double> x;
    for (int v = 1; v <= 100; ++v) x.push_back(v);
    for (int v = 100; v < 1000000; v = static_cast<int>(v * 1.1) + 1) x.push_back(v);
    return x;
}

}  // namespace

TEST_CASE("ranges and OOD admissibility") {
    const auto x = corpus_values();
    const auto r = RangeSpec::standard(RangeLabel::R100To1k, x);
    CHECK(r.contains(100));
    CHECK_FALSE(r.contains(1000));
    CHECK(RangeSpec::standard(RangeLabel::R10kTo1e10, x).contains(1e10));
    const auto all = RangeSpec::standard(RangeLabel::All, x);
    CHECK(all.lower == 1);
    CHECK(all.upper == x.back());
    CHECK(ood_admissible(RangeLabel::R1kTo10k));
    CHECK(ood_admissible(RangeLabel::R10kTo1e10));
    CHECK_FALSE(ood_admissible(RangeLabel::R1To100));
    CHECK_FALSE(ood_admissible(RangeLabel::All));
    CHECK(parse_range_label("1k-10k") == RangeLabel::R1kTo10k);
    CHECK_THROWS_AS(parse_range_label("1-10"), ConfigError);
    CHECK(parse_probe_task("list_min") == ProbeTask::ListMin);
    CHECK(parse_split("ood") == Split::OutOfDomain);
}

TEST_CASE("sampler splits are pure and disjoint") {
    const auto x = corpus_values();
    const std::set<double> in_x(x.begin(), x.end());
    std::mt19937_64 rng(1);
    for (auto label : {RangeLabel::R1kTo10k, RangeLabel::R10kTo1e10}) {
        const auto range = RangeSpec::standard(label, x);
        const NumeralSampler in(range, Split::InDomain, x);
        const NumeralSampler out(range, Split::OutOfDomain, x);
        std::set<double> a, b;
        for (int i = 0; i < 2000; ++i) {
            const double v = in.draw(rng);
            CHECK(in_x.count(v) == 1);
            CHECK(range.contains(v));
            a.insert(v);
            const double w = out.draw(rng);
            CHECK(in_x.count(w) == 0);
            CHECK(range.contains(w));
            CHECK(w == std::floor(w));
            b.insert(w);
        }
        for (double v : a) CHECK(b.count(v) == 0);
    }
}

TEST_CASE("sampling is log-uniform") {
    const NumeralSampler s(RangeSpec::standard(RangeLabel::R10kTo1e10, {}), Split::OutOfDomain, std::vector<double>{});
    std::mt19937_64 rng(4);
    int below = 0;
    for (int i = 0; i < 20000; ++i) below += s.draw(rng) < 1e7 ? 1 : 0;
    CHECK(below / 20000.0 == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("infeasible splits") {
    const auto x = corpus_values();
    CHECK_THROWS_AS(NumeralSampler(RangeSpec::standard(RangeLabel::R1To100, x), Split::OutOfDomain, x),
                    InfeasibleSplitError);
    CHECK_THROWS_AS(NumeralSampler(RangeSpec::standard(RangeLabel::All, x), Split::OutOfDomain, x), InfeasibleSplitError);
    std::vector<double> dense;
    for (int v = 1000; v < 10000; ++v) dense.push_back(v);
    CHECK_THROWS_AS(NumeralSampler(RangeSpec::standard(RangeLabel::R1kTo10k, dense), Split::OutOfDomain, dense),
                    InfeasibleSplitError);
    const std::vector<double> small{3, 7};
    CHECK_THROWS_AS(NumeralSampler(RangeSpec::standard(RangeLabel::R1kTo10k, small), Split::InDomain, small),
                    InfeasibleSplitError);
}

TEST_CASE("distinct draws") {
    const auto x = corpus_values();
    std::mt19937_64 rng(2);
    const NumeralSampler s(RangeSpec::standard(RangeLabel::R1To100, x), Split::InDomain, x);
    const auto all = s.draw_distinct(500, rng);
    CHECK(all.size() == 99);  // pool is capped: 1..99
    CHECK(std::set<double>(all.begin(), all.end()).size() == 99);
}

TEST_CASE("probe dataset contracts") {
    const auto x = corpus_values();
    const LogEmbedder emb;
    const auto r100 = RangeSpec::standard(RangeLabel::R1To100, x);
    const auto dec = build_probe_dataset(ProbeTask::Decoding, r100, Split::InDomain, 3, 7, emb, x);
    REQUIRE(dec.values.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(dec.targets[i] == dec.values[i][0]);
        CHECK(r100.contains(dec.targets[i]));
        CHECK(dec.features[i] == std::vector<double>{std::log(dec.targets[i])});
    }
    const auto add = build_probe_dataset(ProbeTask::Addition, r100, Split::InDomain, 50, 7, emb, x);
    for (std::size_t i = 0; i < 50; ++i) {
        CHECK(add.targets[i] == add.values[i][0] + add.values[i][1]);
        CHECK(add.features[i].size() == 2);
    }
    for (auto task : {ProbeTask::ListMax, ProbeTask::ListMin}) {
        const auto lists = build_probe_dataset(task, r100, Split::InDomain, 200, 7, emb, x);
        for (std::size_t i = 0; i < 200; ++i) {
            const auto& v = lists.values[i];
            REQUIRE(v.size() == 5);
            CHECK(std::set<double>(v.begin(), v.end()).size() == 5);
            const auto idx = static_cast<std::size_t>(lists.targets[i]);
            for (std::size_t k = 0; k < 5; ++k) {
                if (k == idx) continue;
                if (task == ProbeTask::ListMax) CHECK(v[k] < v[idx]);
                else CHECK(v[k] > v[idx]);
            }
        }
    }
    CHECK_THROWS_AS(build_probe_dataset(ProbeTask::Decoding, r100, Split::OutOfDomain, 3, 7, emb, x),
                    InfeasibleSplitError);
}

TEST_CASE("gbt: zero trees predict the target mean") {
    std::vector<std::vector<double>> xs;
    std::vector<double> y;
    for (int i = 0; i < 20; ++i) {
        xs.push_back({static_cast<double>(i)});
        y.push_back(i * 0.5);
    }
    const auto m = GbtRegressor::fit(xs, y, {0, 5, 0.1, 1});
    CHECK(m.predict(std::vector<double>{3.0}) == doctest::Approx(4.75));
    CHECK_THROWS_AS(GbtRegressor::fit({{1}, {2}}, std::vector<double>{1, 2}, {}), ConfigError);
}

TEST_CASE("gbt: one stage at learning rate 1 predicts leaf means") {
    std::vector<std::vector<double>> xs;
    std::vector<double> y;
    for (int i = 0; i < 30; ++i) {
        const double x0 = i < 12 ? 0.0 : 1.0;
        xs.push_back({static_cast<double>(i % 7), x0});
        y.push_back(x0 == 0.0 ? 3.0 + (i % 2) : -2.0 + (i % 3));
    }
    const auto m = GbtRegressor::fit(xs, y, {1, 1, 1.0, 1});
    // oracle: best single split by brute force over all features and thresholds
    double best = -1;
    std::size_t best_f = 0;
    double best_t = 0;
    for (std::size_t f = 0; f < 2; ++f) {
        std::set<double> vals;
        for (auto& r : xs) vals.insert(r[f]);
        for (auto it = vals.begin(); std::next(it) != vals.end(); ++it) {
            const double t = (*it + *std::next(it)) / 2;
            double sl = 0, sr = 0, nl = 0, nr = 0;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                if (xs[i][f] <= t) sl += y[i], nl += 1;
                else sr += y[i], nr += 1;
            }
            const double gain = sl * sl / nl + sr * sr / nr;
            if (gain > best) best = gain, best_f = f, best_t = t;
        }
    }
    CHECK(best_f == 1);
    double sl = 0, sr = 0, nl = 0, nr = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i][best_f] <= best_t) sl += y[i], nl += 1;
        else sr += y[i], nr += 1;
    }
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double expected = xs[i][best_f] <= best_t ? sl / nl : sr / nr;
        CHECK(m.predict(xs[i]) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("gbt fits y = x1 closely") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-3, 3);
    std::vector<std::vector<double>> xs;
    std::vector<double> y;
    for (int i = 0; i < 1000; ++i) {
        xs.push_back({u(rng), u(rng), u(rng)});
        y.push_back(xs.back()[0]);
    }
    const auto m = GbtRegressor::fit(xs, y, GbtConfig{});
    double sse = 0, mean = std::accumulate(y.begin(), y.end(), 0.0) / 1000, var = 0;
    for (int i = 0; i < 1000; ++i) {
        sse += std::pow(m.predict(xs[i]) - y[i], 2);
        var += std::pow(y[i] - mean, 2);
    }
    CHECK(std::sqrt(sse / 1000) < 0.05 * std::sqrt(var / 1000));
}

TEST_CASE("gbt on degenerate features predicts the mean") {
    std::vector<std::vector<double>> xs(50, std::vector<double>{1.0, 1.0});
    std::vector<double> y;
    for (int i = 0; i < 50; ++i) y.push_back(i);
    const auto m = GbtRegressor::fit(xs, y, GbtConfig{});
    CHECK(m.predict(xs[0]) == doctest::Approx(24.5));
}

TEST_CASE("log-rmse identities") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0, 3);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> a(20), b(20);
        for (auto& v : a) v = n(rng);
        for (auto& v : b) v = n(rng);
        CHECK(log_rmse(a, a) == 0.0);
        const double c = n(rng);
        auto a2 = a, b2 = b;
        for (auto& v : a2) v += c;
        for (auto& v : b2) v += c;
        CHECK(log_rmse(a2, b2) == doctest::Approx(log_rmse(a, b)).epsilon(1e-9));
    }
    CHECK(log_rmse(std::vector<double>{0, 0}, std::vector<double>{3, -3}) == doctest::Approx(3));
    CHECK(r_squared(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}) == 1.0);
    CHECK(r_squared(std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3}) == 0.0);
    CHECK_THROWS_AS(r_squared(std::vector<double>{1, 2}, std::vector<double>{1, 1}), DegenerateDataError);
}

TEST_CASE("decoding: perfect and constant embedders") {
    const std::vector<double> none;
    const auto range = RangeSpec::standard(RangeLabel::R1kTo10k, none);
    const auto perfect = build_probe_dataset(ProbeTask::Decoding, range, Split::OutOfDomain, 1000, 3, LogEmbedder{}, none);
    const auto r = run_decoding(perfect, GbtConfig{});
    CHECK(r.log_rmse < 0.01);
    CHECK(r.n_eval == 200);
    CHECK(r.n_train == 800);
    CHECK(r.scatter.size() == 200);

    const auto flat = build_probe_dataset(ProbeTask::Decoding, range, Split::OutOfDomain, 1000, 3, ConstantEmbedder{}, none);
    const auto c = run_decoding(flat, GbtConfig{});
    CHECK(c.r2 <= 0.0);
    // oracle: the prediction is the training mean of ln y
    const auto [train, eval] = train_eval_split(flat.targets.size(), flat.seed);
    double mean = 0;
    for (auto i : train) mean += std::log(flat.targets[i]);
    mean /= static_cast<double>(train.size());
    double sse = 0;
    for (auto i : eval) sse += std::pow(std::log(flat.targets[i]) - mean, 2);
    CHECK(c.log_rmse == doctest::Approx(std::sqrt(sse / static_cast<double>(eval.size()))).epsilon(1e-9));
}

TEST_CASE("addition: perfect embedder and duplicated pairs") {
    const std::vector<double> none;
    const auto range = RangeSpec::standard(RangeLabel::R1kTo10k, none);
    const auto ds = build_probe_dataset(ProbeTask::Addition, range, Split::OutOfDomain, 1000, 5, LogEmbedder{}, none);
    CHECK(run_addition(ds, GbtConfig{}).log_rmse < 0.05);

    ProbeDataset ones;
    ones.task = ProbeTask::Addition;
    for (int i = 0; i < 40; ++i) {
        ones.values.push_back({1, 1});
        ones.targets.push_back(2);
        ones.features.push_back({0.0, 0.0});
    }
    CHECK(run_addition(ones, GbtConfig{}).log_rmse < 1e-12);
}

TEST_CASE("list classifier gradients match central differences") {
    ListClassifierConfig cfg;
    cfg.layers = 2;
    cfg.hidden = 3;
    ListClassifier clf(2, cfg);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n;
    ListClassifier::Sequence list(5, std::vector<double>(2));
    for (auto& item : list)
        for (auto& v : item) v = n(rng);
    std::vector<double> grads;
    clf.loss_and_gradients(list, 2, grads);
    auto& p = clf.parameters();
    for (std::size_t k = 0; k < p.size(); ++k) {
        const double orig = p[k];
        p[k] = orig + 1e-6;
        const double up = clf.loss(list, 2);
        p[k] = orig - 1e-6;
        const double down = clf.loss(list, 2);
        p[k] = orig;
        const double numeric = (up - down) / 2e-6;
        // round-off in the difference quotient is about 1e-10
        CHECK(std::abs(grads[k] - numeric) <= 1e-8 + 1e-5 * std::abs(numeric));
    }
}

TEST_CASE("untrained classifier sits at chance") {
    ListClassifier clf(4, ListClassifierConfig{});
    std::mt19937_64 rng(6);
    std::normal_distribution<double> n;
    std::size_t hits = 0;
    for (int i = 0; i < 2000; ++i) {
        ListClassifier::Sequence list(5, std::vector<double>(4));
        std::vector<double> key(5);
        for (std::size_t p = 0; p < 5; ++p) {
            for (auto& v : list[p]) v = n(rng);
            key[p] = list[p][0];
        }
        const auto truth = static_cast<std::size_t>(std::max_element(key.begin(), key.end()) - key.begin());
        hits += clf.predict(list) == truth ? 1 : 0;
    }
    CHECK(hits / 2000.0 == doctest::Approx(0.2).epsilon(0.25));  // 0.15 .. 0.25
}

TEST_CASE("list extremum: monotone feature is learnable") {
    const std::vector<double> none;
    const auto range = RangeSpec::standard(RangeLabel::R10kTo1e10, none);
    for (auto task : {ProbeTask::ListMax, ProbeTask::ListMin}) {
        const auto ds = build_probe_dataset(task, range, Split::OutOfDomain, 1000, 9, LogEmbedder{}, none);
        const auto r = run_list_extremum(ds, 1, ListClassifierConfig{});
        CHECK(r.n_eval == 200);
        CHECK(r.accuracy >= 0.95);
    }
}

TEST_CASE("list extremum: random embeddings stay near chance") {
    const std::vector<double> none;
    const auto range = RangeSpec::standard(RangeLabel::R10kTo1e10, none);
    const auto ds = build_probe_dataset(ProbeTask::ListMax, range, Split::OutOfDomain, 5000, 9, RandomEmbedder{}, none);
    ListClassifierConfig cfg;
    cfg.epochs = 3;
    const auto r = run_list_extremum(ds, 4, cfg);
    CHECK(r.n_eval == 1000);
    CHECK(std::abs(r.accuracy - 0.2) <= 0.05);
}

TEST_CASE("cosine heatmap") {
    TableEmbedder emb;
    emb.table[1] = {1, 0};
    emb.table[2] = {2, 0};
    emb.table[3] = {0, 5};
    emb.table[4] = {1, 1};
    const auto m = cosine_heatmap(emb, std::vector<double>{1, 2, 3, 4});
    CHECK(m[0][1] == doctest::Approx(1.0));
    CHECK(m[0][2] == doctest::Approx(0.0));
    CHECK(m[0][3] == doctest::Approx(std::sqrt(0.5)));
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(m[i][i] == 1.0);
        for (std::size_t j = 0; j < 4; ++j) CHECK(m[i][j] == m[j][i]);
    }
    emb.table[5] = {0, 0};
    try {
        cosine_heatmap(emb, std::vector<double>{1, 5});
        FAIL("expected an error");
    } catch (const UndefinedSimilarityError& e) {
        CHECK(std::string(e.what()).find("5") != std::string::npos);
    }
}

TEST_CASE("heatmap band means") {
    std::vector<std::vector<double>> m(60, std::vector<double>(60));
    for (std::size_t i = 0; i < 60; ++i)
        for (std::size_t j = 0; j < 60; ++j) {
            const double gap = std::abs(static_cast<double>(i) - static_cast<double>(j));
            m[i][j] = gap == 0 ? 1.0 : gap <= 5 ? 0.8 : gap >= 50 ? 0.1 : 0.5;
        }
    const auto b = heatmap_band_means(m);
    CHECK(b.near == doctest::Approx(0.8));
    CHECK(b.far == doctest::Approx(0.1));
}

TEST_CASE("probe plan report covers every requested cell") {
    const auto x = corpus_values();
    ProbePlan plan;
    plan.decoding_samples = 60;
    plan.addition_samples = 60;
    plan.list_samples = 60;
    plan.classifier.epochs = 1;
    plan.gbt.trees = 5;
    const auto report = run_probe_plan(plan, OffsetLogEmbedder{}, x);
    CHECK(report.cells.size() == 4 * 5 * 2);
    for (auto task : plan.tasks)
        for (auto range : plan.ranges)
            for (auto split : plan.splits) {
                const auto* c = report.find(task, range, split);
                REQUIRE(c != nullptr);
                const bool ood_ok = split == Split::InDomain || ood_admissible(range);
                CHECK(c->infeasible.has_value() == !ood_ok);
                if (!c->infeasible && c->metric == "accuracy") CHECK((c->value >= 0 && c->value <= 1));
                if (!c->infeasible && c->metric == "log_rmse") CHECK(c->value >= 0);
            }
    CHECK(report.heatmap.size() == 100);
    CHECK_FALSE(report.scatter.empty());

    const auto text = format_probe_report(report);
    const auto back = parse_probe_report(text);
    REQUIRE(back.cells.size() == report.cells.size());
    for (std::size_t i = 0; i < back.cells.size(); ++i) {
        CHECK(back.cells[i].value == report.cells[i].value);
        CHECK(back.cells[i].infeasible.has_value() == report.cells[i].infeasible.has_value());
    }
    CHECK(format_probe_report(back) == text);
    const auto grid = format_metric_grid(report);
    CHECK(grid.find("n/a") != std::string::npos);
    CHECK(grid.find("decoding/in_domain") != std::string::npos);
    CHECK(format_heatmap({1, 2}, {{1, 0.5}, {0.5, 1}}) == "# values 1 2\n1.000000 0.500000\n0.500000 1.000000\n");
    CHECK(format_scatter_csv({{10, 9.5}}) == "true_value,decoded_value\n10,9.5\n");
}
