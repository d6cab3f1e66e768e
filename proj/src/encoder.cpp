#include "numanchor/encoder.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "numanchor/errors.hpp"

namespace numanchor {

void EncoderConfig::validate() const {
    if (layers < 4) throw ConfigError("encoder needs at least 4 layers for last-4-layer retrieval");
    validate_architecture();
}

void EncoderConfig::validate_architecture() const {
    if (layers == 0) throw ConfigError("encoder needs at least one layer");
    if (hidden == 0 || heads == 0 || hidden % heads != 0) {
        throw ConfigError("hidden size must be a positive multiple of the head count");
    }
    if (ffn == 0 || max_seq_len == 0) throw ConfigError("ffn and max_seq_len must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be non-negative");
    if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) throw ConfigError("warmup_fraction must lie in [0, 1]");
    if (!(random_mask_rate > 0.0 && random_mask_rate <= 1.0)) throw ConfigError("random_mask_rate must lie in (0, 1]");
}

// ---------------------------------------------------------------------------
// Weights

template <typename T>
std::vector<std::pair<std::string, Matrix<T>*>> EncoderWeights<T>::named() {
    std::vector<std::pair<std::string, Matrix<T>*>> out{
        {"tok_emb", &tok_emb}, {"pos_emb", &pos_emb}, {"emb_ln_g", &emb_ln_g}, {"emb_ln_b", &emb_ln_b}};
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto& L = layers[l];
        const std::string p = "layer" + std::to_string(l) + ".";
        for (auto [name, m] : std::initializer_list<std::pair<const char*, Matrix<T>*>>{
                 {"wq", &L.wq}, {"wk", &L.wk}, {"wv", &L.wv}, {"wo", &L.wo}, {"bq", &L.bq}, {"bk", &L.bk},
                 {"bv", &L.bv}, {"bo", &L.bo}, {"ln1_g", &L.ln1_g}, {"ln1_b", &L.ln1_b}, {"w1", &L.w1},
                 {"b1", &L.b1}, {"w2", &L.w2}, {"b2", &L.b2}, {"ln2_g", &L.ln2_g}, {"ln2_b", &L.ln2_b}}) {
            out.emplace_back(p + name, m);
        }
    }
    out.emplace_back("dec_w", &dec_w);
    out.emplace_back("dec_b", &dec_b);
    return out;
}

template <typename T>
std::vector<std::pair<std::string, const Matrix<T>*>> EncoderWeights<T>::named() const {
    auto mutable_list = const_cast<EncoderWeights*>(this)->named();
    std::vector<std::pair<std::string, const Matrix<T>*>> out;
    out.reserve(mutable_list.size());
    for (auto& [n, m] : mutable_list) out.emplace_back(n, m);
    return out;
}

template <typename T>
EncoderWeights<T> EncoderWeights<T>::zeros_like() const {
    EncoderWeights<T> z = *this;
    z.set_zero();
    return z;
}

template <typename T>
void EncoderWeights<T>::set_zero() {
    for (auto& [n, m] : named()) m->setZero();
}

template <typename T>
std::size_t EncoderWeights<T>::parameter_count() const {
    std::size_t total = 0;
    for (const auto& [n, m] : named()) total += static_cast<std::size_t>(m->size());
    return total;
}

template <typename To, typename From>
EncoderWeights<To> cast_weights(const EncoderWeights<From>& w) {
    EncoderWeights<To> out;
    out.layers.resize(w.layers.size());
    auto dst = out.named();
    const auto src = w.named();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i].second = src[i].second->template cast<To>();
    return out;
}

template EncoderWeights<float> cast_weights<float, double>(const EncoderWeights<double>&);
template EncoderWeights<double> cast_weights<double, float>(const EncoderWeights<float>&);
template EncoderWeights<float> cast_weights<float, float>(const EncoderWeights<float>&);
template EncoderWeights<double> cast_weights<double, double>(const EncoderWeights<double>&);

namespace {

constexpr double kLayerNormEps = 1e-12;
constexpr double kInitStd = 0.02;

template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;
template <typename T>
using ColVector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
struct NormCache {
    Matrix<T> xhat;
    ColVector<T> inv_std;
};

template <typename T>
void layer_norm(const Matrix<T>& x, const Matrix<T>& gamma, const Matrix<T>& beta, Matrix<T>& y,
                NormCache<T>& cache) {
    const auto n = x.rows();
    const T width = static_cast<T>(x.cols());
    cache.xhat.resize(x.rows(), x.cols());
    cache.inv_std.resize(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const T mean = x.row(r).sum() / width;
        const auto centered = (x.row(r).array() - mean).matrix();
        const T var = centered.squaredNorm() / width;
        const T inv = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
        cache.inv_std(r) = inv;
        cache.xhat.row(r) = centered * inv;
    }
    y = (cache.xhat.array().rowwise() * gamma.row(0).array()).rowwise() + beta.row(0).array();
}

template <typename T>
Matrix<T> layer_norm_backward(const Matrix<T>& dy, const Matrix<T>& gamma, const NormCache<T>& cache,
                              Matrix<T>& dgamma, Matrix<T>& dbeta) {
    dgamma.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
    dbeta.row(0) += dy.colwise().sum();
    const Matrix<T> dxhat = dy.array().rowwise() * gamma.row(0).array();
    const T width = static_cast<T>(dy.cols());
    Matrix<T> dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        const T mean_d = dxhat.row(r).sum() / width;
        const T mean_dx = dxhat.row(r).dot(cache.xhat.row(r)) / width;
        dx.row(r) = cache.inv_std(r) *
                    (dxhat.row(r).array() - mean_d - cache.xhat.row(r).array() * mean_dx).matrix();
    }
    return dx;
}

template <typename T>
T gelu(T x) {
    return T(0.5) * x * (T(1) + std::erf(x * static_cast<T>(std::numbers::sqrt2 / 2.0)));
}

template <typename T>
T gelu_grad(T x) {
    const T cdf = T(0.5) * (T(1) + std::erf(x * static_cast<T>(std::numbers::sqrt2 / 2.0)));
    const T pdf = std::exp(T(-0.5) * x * x) * static_cast<T>(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
    return cdf + x * pdf;
}

template <typename T>
Matrix<T> affine(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& b) {
    Matrix<T> y = x * w;
    y.rowwise() += b.row(0);
    return y;
}

template <typename T>
Matrix<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, std::mt19937_64& rng) {
    Matrix<T> mask(rows, cols);
    std::bernoulli_distribution keep(1.0 - p);
    const T scale = static_cast<T>(1.0 / (1.0 - p));
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? scale : T(0);
    return mask;
}

template <typename T>
void init_normal(Matrix<T>& m, Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, kInitStd);
    m.resize(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
}

}  // namespace

// ---------------------------------------------------------------------------
// Encoder

template <typename T>
TransformerEncoder<T>::TransformerEncoder(const EncoderConfig& config, std::size_t vocab_size) : config_(config) {
    config_.validate_architecture();
    if (vocab_size < static_cast<std::size_t>(Vocab::kReservedCount)) {
        throw ConfigError("vocabulary smaller than the reserved token set");
    }
    const auto V = static_cast<Eigen::Index>(vocab_size);
    const auto H = static_cast<Eigen::Index>(config_.hidden);
    const auto F = static_cast<Eigen::Index>(config_.ffn);
    const auto P = static_cast<Eigen::Index>(config_.max_seq_len);
    std::mt19937_64 rng(config_.seed);
    auto& w = weights_;
    init_normal(w.tok_emb, V, H, rng);
    init_normal(w.pos_emb, P, H, rng);
    w.emb_ln_g = Matrix<T>::Ones(1, H);
    w.emb_ln_b = Matrix<T>::Zero(1, H);
    w.layers.resize(config_.layers);
    for (auto& L : w.layers) {
        init_normal(L.wq, H, H, rng);
        init_normal(L.wk, H, H, rng);
        init_normal(L.wv, H, H, rng);
        init_normal(L.wo, H, H, rng);
        L.bq = L.bk = L.bv = L.bo = Matrix<T>::Zero(1, H);
        L.ln1_g = L.ln2_g = Matrix<T>::Ones(1, H);
        L.ln1_b = L.ln2_b = Matrix<T>::Zero(1, H);
        init_normal(L.w1, H, F, rng);
        L.b1 = Matrix<T>::Zero(1, F);
        init_normal(L.w2, F, H, rng);
        L.b2 = Matrix<T>::Zero(1, H);
    }
    init_normal(w.dec_w, H, V, rng);
    w.dec_b = Matrix<T>::Zero(1, V);
}

template <typename T>
TransformerEncoder<T>::TransformerEncoder(const EncoderConfig& config, EncoderWeights<T> weights)
    : config_(config), weights_(std::move(weights)) {
    config_.validate_architecture();
    const auto H = static_cast<Eigen::Index>(config_.hidden);
    if (weights_.layers.size() != config_.layers || weights_.tok_emb.cols() != H ||
        weights_.pos_emb.rows() != static_cast<Eigen::Index>(config_.max_seq_len) ||
        weights_.dec_w.rows() != H || weights_.dec_w.cols() != weights_.tok_emb.rows()) {
        throw ConfigError("weights do not match the encoder configuration");
    }
}

template <typename T>
struct TransformerEncoder<T>::Cache {
    struct Layer {
        Matrix<T> x_in, q, k, v, ctx;
        std::vector<Matrix<T>> probs;  // [sequence * heads + head]
        Matrix<T> drop_attn, drop_ffn;
        NormCache<T> ln1, ln2;
        Matrix<T> y, f1, act;
    };
    std::vector<Eigen::Index> offsets;  // start row of each sequence, plus the end
    NormCache<T> emb_ln;
    std::vector<Layer> layers;
    Matrix<T> out;
};

template <typename T>
double TransformerEncoder<T>::run(std::span<const MaskedSequence> batch, EncoderWeights<T>* grads,
                                  std::mt19937_64* rng) const {
    const auto& w = weights_;
    const auto H = static_cast<Eigen::Index>(config_.hidden);
    const auto heads = static_cast<Eigen::Index>(config_.heads);
    const Eigen::Index head_dim = H / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(head_dim));
    const bool use_dropout = rng != nullptr && config_.dropout > 0.0;

    Cache cache;
    cache.offsets.push_back(0);
    std::size_t total_masked = 0;
    for (const auto& seq : batch) {
        if (seq.input_ids.size() > config_.max_seq_len) {
            throw UnsupportedShapeError("sequence of length " + std::to_string(seq.input_ids.size()) +
                                        " exceeds max_seq_len " + std::to_string(config_.max_seq_len));
        }
        cache.offsets.push_back(cache.offsets.back() + static_cast<Eigen::Index>(seq.input_ids.size()));
        total_masked += seq.masked_count();
    }
    const Eigen::Index N = cache.offsets.back();
    if (N == 0 || total_masked == 0) return 0.0;

    // Embeddings.
    Matrix<T> e(N, H);
    for (std::size_t s = 0; s < batch.size(); ++s) {
        const auto& ids = batch[s].input_ids;
        for (std::size_t t = 0; t < ids.size(); ++t) {
            const Eigen::Index r = cache.offsets[s] + static_cast<Eigen::Index>(t);
            if (ids[t] < 0 || ids[t] >= w.tok_emb.rows()) throw RangeError("token id outside vocabulary");
            e.row(r) = w.tok_emb.row(ids[t]) + w.pos_emb.row(static_cast<Eigen::Index>(t));
        }
    }
    Matrix<T> x;
    layer_norm(e, w.emb_ln_g, w.emb_ln_b, x, cache.emb_ln);

    cache.layers.resize(w.layers.size());
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        const auto& L = w.layers[l];
        auto& c = cache.layers[l];
        c.x_in = std::move(x);
        c.q = affine(c.x_in, L.wq, L.bq);
        c.k = affine(c.x_in, L.wk, L.bk);
        c.v = affine(c.x_in, L.wv, L.bv);
        c.ctx.resize(N, H);
        c.probs.resize(batch.size() * static_cast<std::size_t>(heads));
        for (std::size_t s = 0; s < batch.size(); ++s) {
            const Eigen::Index off = cache.offsets[s];
            const Eigen::Index len = cache.offsets[s + 1] - off;
            if (len == 0) continue;
            for (Eigen::Index h = 0; h < heads; ++h) {
                const auto qh = c.q.block(off, h * head_dim, len, head_dim);
                const auto kh = c.k.block(off, h * head_dim, len, head_dim);
                const auto vh = c.v.block(off, h * head_dim, len, head_dim);
                Matrix<T> scores = (qh * kh.transpose()) * scale;
                for (Eigen::Index r = 0; r < len; ++r) {
                    const T top = scores.row(r).maxCoeff();
                    scores.row(r) = (scores.row(r).array() - top).exp().matrix();
                    scores.row(r) /= scores.row(r).sum();
                }
                c.ctx.block(off, h * head_dim, len, head_dim) = scores * vh;
                c.probs[s * static_cast<std::size_t>(heads) + static_cast<std::size_t>(h)] = std::move(scores);
            }
        }
        Matrix<T> attn = affine(c.ctx, L.wo, L.bo);
        if (use_dropout) {
            c.drop_attn = dropout_mask<T>(N, H, config_.dropout, *rng);
            attn = attn.cwiseProduct(c.drop_attn);
        }
        layer_norm(Matrix<T>(c.x_in + attn), L.ln1_g, L.ln1_b, c.y, c.ln1);
        c.f1 = affine(c.y, L.w1, L.b1);
        c.act = c.f1.unaryExpr([](T v) { return gelu(v); });
        Matrix<T> f2 = affine(c.act, L.w2, L.b2);
        if (use_dropout) {
            c.drop_ffn = dropout_mask<T>(N, H, config_.dropout, *rng);
            f2 = f2.cwiseProduct(c.drop_ffn);
        }
        layer_norm(Matrix<T>(c.y + f2), L.ln2_g, L.ln2_b, x, c.ln2);
    }
    cache.out = std::move(x);

    // Masked-LM head over the masked rows only.
    std::vector<Eigen::Index> rows;
    std::vector<TokenId> labels;
    rows.reserve(total_masked);
    for (std::size_t s = 0; s < batch.size(); ++s) {
        for (std::size_t t = 0; t < batch[s].labels.size(); ++t) {
            if (batch[s].labels[t] == kIgnoreLabel) continue;
            rows.push_back(cache.offsets[s] + static_cast<Eigen::Index>(t));
            labels.push_back(batch[s].labels[t]);
        }
    }
    const auto M = static_cast<Eigen::Index>(rows.size());
    Matrix<T> gathered(M, H);
    for (Eigen::Index i = 0; i < M; ++i) gathered.row(i) = cache.out.row(rows[static_cast<std::size_t>(i)]);
    Matrix<T> logits = affine(gathered, w.dec_w, w.dec_b);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < M; ++i) {
        const T top = logits.row(i).maxCoeff();
        logits.row(i) = (logits.row(i).array() - top).exp().matrix();
        const T z = logits.row(i).sum();
        logits.row(i) /= z;
        const TokenId label = labels[static_cast<std::size_t>(i)];
        if (label < 0 || label >= logits.cols()) throw RangeError("label outside vocabulary");
        loss -= std::log(static_cast<double>(logits(i, label)));
    }
    loss /= static_cast<double>(M);
    if (grads == nullptr) return loss;

    // ---- backward ----
    auto& g = *grads;
    const T inv_m = T(1) / static_cast<T>(M);
    Matrix<T>& dlogits = logits;  // softmax probabilities become the gradient in place
    for (Eigen::Index i = 0; i < M; ++i) dlogits(i, labels[static_cast<std::size_t>(i)]) -= T(1);
    dlogits *= inv_m;
    g.dec_w.noalias() += gathered.transpose() * dlogits;
    g.dec_b.row(0) += dlogits.colwise().sum();
    const Matrix<T> dgathered = dlogits * w.dec_w.transpose();
    Matrix<T> dx = Matrix<T>::Zero(N, H);
    for (Eigen::Index i = 0; i < M; ++i) dx.row(rows[static_cast<std::size_t>(i)]) += dgathered.row(i);

    for (std::size_t li = w.layers.size(); li-- > 0;) {
        const auto& L = w.layers[li];
        auto& G = g.layers[li];
        const auto& c = cache.layers[li];

        const Matrix<T> dr2 = layer_norm_backward(dx, L.ln2_g, c.ln2, G.ln2_g, G.ln2_b);
        Matrix<T> dy = dr2;
        Matrix<T> df2 = use_dropout ? Matrix<T>(dr2.cwiseProduct(c.drop_ffn)) : dr2;
        G.w2.noalias() += c.act.transpose() * df2;
        G.b2.row(0) += df2.colwise().sum();
        Matrix<T> df1 = df2 * L.w2.transpose();
        df1 = df1.cwiseProduct(c.f1.unaryExpr([](T v) { return gelu_grad(v); }));
        G.w1.noalias() += c.y.transpose() * df1;
        G.b1.row(0) += df1.colwise().sum();
        dy.noalias() += df1 * L.w1.transpose();

        const Matrix<T> dr1 = layer_norm_backward(dy, L.ln1_g, c.ln1, G.ln1_g, G.ln1_b);
        Matrix<T> dx_in = dr1;
        const Matrix<T> dattn = use_dropout ? Matrix<T>(dr1.cwiseProduct(c.drop_attn)) : dr1;
        G.wo.noalias() += c.ctx.transpose() * dattn;
        G.bo.row(0) += dattn.colwise().sum();
        const Matrix<T> dctx = dattn * L.wo.transpose();

        Matrix<T> dq = Matrix<T>::Zero(N, H), dk = Matrix<T>::Zero(N, H), dv = Matrix<T>::Zero(N, H);
        for (std::size_t s = 0; s < batch.size(); ++s) {
            const Eigen::Index off = cache.offsets[s];
            const Eigen::Index len = cache.offsets[s + 1] - off;
            if (len == 0) continue;
            for (Eigen::Index h = 0; h < heads; ++h) {
                const auto& P = c.probs[s * static_cast<std::size_t>(heads) + static_cast<std::size_t>(h)];
                const auto dctx_h = dctx.block(off, h * head_dim, len, head_dim);
                const auto qh = c.q.block(off, h * head_dim, len, head_dim);
                const auto kh = c.k.block(off, h * head_dim, len, head_dim);
                const auto vh = c.v.block(off, h * head_dim, len, head_dim);
                const Matrix<T> dP = dctx_h * vh.transpose();
                dv.block(off, h * head_dim, len, head_dim).noalias() += P.transpose() * dctx_h;
                const ColVector<T> rowdot = (dP.array() * P.array()).rowwise().sum();
                Matrix<T> dS = P.array() * (dP.array().colwise() - rowdot.array());
                dS *= scale;
                dq.block(off, h * head_dim, len, head_dim).noalias() += dS * kh;
                dk.block(off, h * head_dim, len, head_dim).noalias() += dS.transpose() * qh;
            }
        }
        G.wq.noalias() += c.x_in.transpose() * dq;
        G.wk.noalias() += c.x_in.transpose() * dk;
        G.wv.noalias() += c.x_in.transpose() * dv;
        G.bq.row(0) += dq.colwise().sum();
        G.bk.row(0) += dk.colwise().sum();
        G.bv.row(0) += dv.colwise().sum();
        dx_in.noalias() += dq * L.wq.transpose();
        dx_in.noalias() += dk * L.wk.transpose();
        dx_in.noalias() += dv * L.wv.transpose();
        dx = std::move(dx_in);
    }

    const Matrix<T> de = layer_norm_backward(dx, w.emb_ln_g, cache.emb_ln, g.emb_ln_g, g.emb_ln_b);
    for (std::size_t s = 0; s < batch.size(); ++s) {
        const auto& ids = batch[s].input_ids;
        for (std::size_t t = 0; t < ids.size(); ++t) {
            const Eigen::Index r = cache.offsets[s] + static_cast<Eigen::Index>(t);
            g.tok_emb.row(ids[t]) += de.row(r);
            g.pos_emb.row(static_cast<Eigen::Index>(t)) += de.row(r);
        }
    }
    return loss;
}

template <typename T>
double TransformerEncoder<T>::loss_and_gradients(std::span<const MaskedSequence> batch, EncoderWeights<T>& grads,
                                                 std::mt19937_64* dropout_rng) const {
    return run(batch, &grads, dropout_rng);
}

template <typename T>
double TransformerEncoder<T>::loss(std::span<const MaskedSequence> batch) const {
    return run(batch, nullptr, nullptr);
}

template <typename T>
std::vector<Matrix<T>> TransformerEncoder<T>::hidden_states(const std::vector<TokenId>& ids,
                                                            const std::optional<EmbeddingOverride<T>>& override) const {
    const auto& w = weights_;
    if (ids.size() > config_.max_seq_len) {
        throw UnsupportedShapeError("sequence longer than max_seq_len");
    }
    const auto H = static_cast<Eigen::Index>(config_.hidden);
    const auto heads = static_cast<Eigen::Index>(config_.heads);
    const Eigen::Index head_dim = H / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(head_dim));
    const auto N = static_cast<Eigen::Index>(ids.size());

    Matrix<T> e(N, H);
    for (Eigen::Index t = 0; t < N; ++t) {
        const TokenId id = ids[static_cast<std::size_t>(t)];
        if (override && override->position == static_cast<std::size_t>(t)) {
            if (override->embedding.size() != H) throw UnsupportedShapeError("override has the wrong width");
            e.row(t) = override->embedding;
        } else {
            if (id < 0 || id >= w.tok_emb.rows()) throw RangeError("token id outside vocabulary");
            e.row(t) = w.tok_emb.row(id);
        }
        e.row(t) += w.pos_emb.row(t);
    }
    std::vector<Matrix<T>> states;
    NormCache<T> norm;
    Matrix<T> x;
    layer_norm(e, w.emb_ln_g, w.emb_ln_b, x, norm);
    states.push_back(x);
    for (const auto& L : w.layers) {
        const Matrix<T> q = affine(x, L.wq, L.bq), k = affine(x, L.wk, L.bk), v = affine(x, L.wv, L.bv);
        Matrix<T> ctx(N, H);
        for (Eigen::Index h = 0; h < heads; ++h) {
            Matrix<T> scores = (q.middleCols(h * head_dim, head_dim) * k.middleCols(h * head_dim, head_dim).transpose()) * scale;
            for (Eigen::Index r = 0; r < N; ++r) {
                const T top = scores.row(r).maxCoeff();
                scores.row(r) = (scores.row(r).array() - top).exp().matrix();
                scores.row(r) /= scores.row(r).sum();
            }
            ctx.middleCols(h * head_dim, head_dim) = scores * v.middleCols(h * head_dim, head_dim);
        }
        Matrix<T> y;
        layer_norm(Matrix<T>(x + affine(ctx, L.wo, L.bo)), L.ln1_g, L.ln1_b, y, norm);
        const Matrix<T> act = affine(y, L.w1, L.b1).unaryExpr([](T v) { return gelu(v); });
        layer_norm(Matrix<T>(y + affine(act, L.w2, L.b2)), L.ln2_g, L.ln2_b, x, norm);
        states.push_back(x);
    }
    return states;
}

template struct EncoderWeights<float>;
template struct EncoderWeights<double>;
template class TransformerEncoder<float>;
template class TransformerEncoder<double>;

}  // namespace numanchor
