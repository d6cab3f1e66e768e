#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "numanchor/encoder.hpp"
#include "numanchor/errors.hpp"
#include "numanchor/masking.hpp"
#include "numanchor/vocab.hpp"

using namespace numanchor;

namespace {

// Plain-loop reference forward pass, written independently of the Eigen code.
using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Matrix<double>& m) {
    Mat out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
    return out;
}

std::vector<double> row0(const Matrix<double>& m) { return to_mat(m)[0]; }

Mat matmul_bias(const Mat& x, const Matrix<double>& w, const Matrix<double>& b) {
    const auto W = to_mat(w);
    const auto B = row0(b);
    Mat y(x.size(), std::vector<double>(B.size()));
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < B.size(); ++j) {
            double s = B[j];
            for (std::size_t k = 0; k < x[i].size(); ++k) s += x[i][k] * W[k][j];
            y[i][j] = s;
        }
    return y;
}

Mat norm(const Mat& x, const Matrix<double>& g, const Matrix<double>& b) {
    const auto G = row0(g), B = row0(b);
    Mat y = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double mu = 0, var = 0;
        for (double v : x[i]) mu += v;
        mu /= static_cast<double>(x[i].size());
        for (double v : x[i]) var += (v - mu) * (v - mu);
        var /= static_cast<double>(x[i].size());
        for (std::size_t j = 0; j < x[i].size(); ++j) y[i][j] = (x[i][j] - mu) / std::sqrt(var + 1e-12) * G[j] + B[j];
    }
    return y;
}

Mat add(Mat a, const Mat& b) {
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
    return a;
}

std::vector<Mat> reference_states(const EncoderWeights<double>& w, std::size_t heads, const std::vector<TokenId>& ids) {
    const auto E = to_mat(w.tok_emb), P = to_mat(w.pos_emb);
    Mat x(ids.size());
    for (std::size_t t = 0; t < ids.size(); ++t) {
        x[t] = E[ids[t]];
        for (std::size_t j = 0; j < x[t].size(); ++j) x[t][j] += P[t][j];
    }
    x = norm(x, w.emb_ln_g, w.emb_ln_b);
    std::vector<Mat> states{x};
    const std::size_t H = x[0].size(), d = H / heads, n = ids.size();
    for (const auto& L : w.layers) {
        const Mat q = matmul_bias(x, L.wq, L.bq), k = matmul_bias(x, L.wk, L.bk), v = matmul_bias(x, L.wv, L.bv);
        Mat ctx(n, std::vector<double>(H, 0.0));
        for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t i = 0; i < n; ++i) {
                std::vector<double> s(n);
                double z = 0;
                for (std::size_t j = 0; j < n; ++j) {
                    double dot = 0;
                    for (std::size_t c = h * d; c < (h + 1) * d; ++c) dot += q[i][c] * k[j][c];
                    s[j] = std::exp(dot / std::sqrt(static_cast<double>(d)));
                    z += s[j];
                }
                for (std::size_t j = 0; j < n; ++j)
                    for (std::size_t c = h * d; c < (h + 1) * d; ++c) ctx[i][c] += s[j] / z * v[j][c];
            }
        }
        const Mat y = norm(add(x, matmul_bias(ctx, L.wo, L.bo)), L.ln1_g, L.ln1_b);
        Mat f = matmul_bias(y, L.w1, L.b1);
        for (auto& r : f)
            for (auto& v2 : r) v2 = 0.5 * v2 * (1.0 + std::erf(v2 / std::sqrt(2.0)));
        x = norm(add(y, matmul_bias(f, L.w2, L.b2)), L.ln2_g, L.ln2_b);
        states.push_back(x);
    }
    return states;
}

EncoderConfig micro_config() {
    EncoderConfig c;
    c.layers = 4;
    c.hidden = 8;
    c.heads = 2;
    c.ffn = 16;
    c.max_seq_len = 12;
    c.dropout = 0.0;
    c.seed = 11;
    return c;
}

// Larger weights than the default init so gradients are not all tiny.
void scale_weights(EncoderWeights<double>& w, double factor) {
    for (auto& [name, m] : w.named()) {
        if (name.find("_g") != std::string::npos || name.find("_b") != std::string::npos) continue;
        *m *= factor;
    }
}

std::vector<MaskedSequence> micro_batch(std::size_t vocab, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<TokenId> tok(Vocab::kReservedCount, static_cast<TokenId>(vocab) - 1);
    std::vector<MaskedSequence> batch;
    for (std::size_t len : {5u, 7u, 3u}) {
        std::vector<TokenId> ids;
        for (std::size_t i = 0; i < len; ++i) ids.push_back(tok(rng));
        ids[1] = Vocab::kAnc;
        if (len > 4) ids[len - 2] = Vocab::kLeft;
        batch.push_back(*mask_anchor_tokens(ids));
    }
    return batch;
}

}  // namespace

TEST_CASE("vocab build examples") {
    const std::vector<std::vector<std::string>> corpus{{"6", "<ANC>", "5"}, {"6", "rare"}};
    const Vocab v = build_vocab(corpus, 1);
    CHECK(v.contains("6"));
    CHECK(v.contains("5"));
    CHECK(v.id("<ANC>") == Vocab::kAnc);
    CHECK(v.size() == 6 + 3);
    CHECK(v.token(6) == "6");  // most frequent first
    CHECK(v.token(7) == "5");  // ties in lexicographic order
    CHECK(v.token(8) == "rare");

    const Vocab v2 = build_vocab(corpus, 2);
    CHECK(v2.id("rare") == Vocab::kUnk);
    CHECK(v2.id("6") == 6);
    CHECK(build_vocab(corpus, 1) == v);
    CHECK(Vocab::from_tsv(v.to_tsv()) == v);
    CHECK_THROWS_AS(build_vocab({}, 1), ConfigError);
}

TEST_CASE("numeral token ids exclude anchor values") {
    const std::vector<std::vector<std::string>> corpus{{"on", "6", "<ANC>", "5"}, {"7", "<LA>", "5"}};
    const Vocab v = build_vocab(corpus, 1);
    const auto ids = numeral_token_ids(v, corpus);
    CHECK(ids == std::vector<TokenId>{std::min(v.id("6"), v.id("7")), std::max(v.id("6"), v.id("7"))});
}

TEST_CASE("anchor masking examples") {
    const Vocab v({"<PAD>", "<MASK>", "<UNK>", "<ANC>", "<LA>", "<RA>", "6", "5", "April", "1911", "2000"});
    auto m = mask_anchor_tokens(v.encode({"6", "<ANC>", "5", "April"}));
    REQUIRE(m);
    CHECK(m->input_ids == v.encode({"6", "<ANC>", "<MASK>", "April"}));
    CHECK(m->labels == std::vector<TokenId>{kIgnoreLabel, kIgnoreLabel, v.id("5"), kIgnoreLabel});

    m = mask_anchor_tokens(v.encode({"6", "<LA>", "5", "April", "1911", "<RA>", "2000"}));
    REQUIRE(m);
    CHECK(m->input_ids == v.encode({"6", "<LA>", "<MASK>", "April", "1911", "<RA>", "<MASK>"}));
    CHECK(m->masked_count() == 2);

    CHECK_FALSE(mask_anchor_tokens(v.encode({"6", "April", "1911"})));
}

TEST_CASE("random masking rates") {
    std::mt19937_64 rng(3);
    std::vector<TokenId> ids(20000, 10);
    const auto m = mask_random_tokens(ids, 50, 0.15, rng);
    REQUIRE(m);
    const double rate = static_cast<double>(m->masked_count()) / 20000.0;
    CHECK(rate == doctest::Approx(0.15).epsilon(0.1));
    std::size_t as_mask = 0;
    for (std::size_t i = 0; i < ids.size(); ++i)
        if (m->labels[i] != kIgnoreLabel && m->input_ids[i] == Vocab::kMask) ++as_mask;
    CHECK(static_cast<double>(as_mask) / static_cast<double>(m->masked_count()) == doctest::Approx(0.8).epsilon(0.05));
    // reserved tokens never selected
    std::vector<TokenId> reserved(100, Vocab::kAnc);
    CHECK_FALSE(mask_random_tokens(reserved, 50, 1.0, rng));
}

TEST_CASE("truncation drops a dangling priming token") {
    CHECK(truncate_sequence({7, 3, 8, 9}, 2) == std::vector<TokenId>{7});
    CHECK(truncate_sequence({7, 8, 9}, 5) == std::vector<TokenId>{7, 8, 9});
}

TEST_CASE("config validation") {
    EncoderConfig c;
    CHECK_NOTHROW(c.validate());
    c.layers = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_NOTHROW(c.validate_architecture());
    c = EncoderConfig{};
    c.hidden = 130;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("hidden states match a loop-based reference") {
    TransformerEncoder<double> enc(micro_config(), 20);
    scale_weights(enc.weights(), 10.0);
    const std::vector<TokenId> ids{7, 3, 9, 12, 19, 6};
    const auto states = enc.hidden_states(ids);
    const auto ref = reference_states(enc.weights(), 2, ids);
    REQUIRE(states.size() == 5);
    for (std::size_t l = 0; l < states.size(); ++l) {
        CHECK(states[l].rows() == 6);
        CHECK(states[l].cols() == 8);
        for (std::size_t i = 0; i < ids.size(); ++i)
            for (std::size_t j = 0; j < 8; ++j) CHECK(states[l](i, j) == doctest::Approx(ref[l][i][j]).epsilon(1e-9));
    }
}

TEST_CASE("embedding override replaces the token embedding") {
    TransformerEncoder<double> enc(micro_config(), 20);
    const std::vector<TokenId> ids{7, 3, 9};
    EmbeddingOverride<double> ov{1, enc.weights().tok_emb.row(3)};
    const auto a = enc.hidden_states(ids);
    const auto b = enc.hidden_states({7, 12, 9}, ov);
    CHECK((a.back() - b.back()).norm() == doctest::Approx(0.0));
}

TEST_CASE("loss is the mean cross-entropy over masked rows") {
    TransformerEncoder<double> enc(micro_config(), 20);
    scale_weights(enc.weights(), 10.0);
    const auto batch = micro_batch(20, 5);
    double total = 0;
    std::size_t count = 0;
    const auto& w = enc.weights();
    for (const auto& seq : batch) {
        const auto out = reference_states(w, 2, seq.input_ids).back();
        for (std::size_t t = 0; t < seq.labels.size(); ++t) {
            if (seq.labels[t] == kIgnoreLabel) continue;
            const auto logits = matmul_bias({out[t]}, w.dec_w, w.dec_b)[0];
            double top = logits[0];
            for (double l : logits) top = std::max(top, l);
            double z = 0;
            for (double l : logits) z += std::exp(l - top);
            total += -(logits[seq.labels[t]] - top - std::log(z));
            ++count;
        }
    }
    CHECK(enc.loss(batch) == doctest::Approx(total / static_cast<double>(count)).epsilon(1e-10));
}

TEST_CASE("analytic gradients match central differences on 100 parameters") {
    EncoderConfig c = micro_config();
    c.layers = 2;
    TransformerEncoder<double> enc(c, 20);
    scale_weights(enc.weights(), 10.0);
    const auto batch = micro_batch(20, 9);

    auto grads = enc.weights().zeros_like();
    enc.loss_and_gradients(batch, grads, nullptr);

    auto params = enc.weights().named();
    const auto gparams = grads.named();
    std::mt19937_64 rng(1234);
    std::uniform_int_distribution<std::size_t> pick_tensor(0, params.size() - 1);
    const double h = 1e-5;
    double worst = 0.0;
    int checked = 0;
    while (checked < 100) {
        const std::size_t ti = pick_tensor(rng);
        auto& m = *params[ti].second;
        std::uniform_int_distribution<Eigen::Index> pick(0, m.size() - 1);
        const Eigen::Index k = pick(rng);
        const double orig = m.data()[k];
        m.data()[k] = orig + h;
        const double up = enc.loss(batch);
        m.data()[k] = orig - h;
        const double down = enc.loss(batch);
        m.data()[k] = orig;
        const double numeric = (up - down) / (2 * h);
        const double analytic = gparams[ti].second->data()[k];
        const double scale = std::max(std::abs(numeric), std::abs(analytic));
        if (scale < 1e-9) continue;  // both zero, e.g. embedding rows of unused tokens
        ++checked;
        const double rel = std::abs(numeric - analytic) / scale;
        worst = std::max(worst, rel);
        CHECK_MESSAGE(rel < 1e-4, params[ti].first, "[", k, "] analytic ", analytic, " numeric ", numeric);
    }
    MESSAGE("worst relative error " << worst);
}
