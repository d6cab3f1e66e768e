#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "numanchor/masking.hpp"
#include "numanchor/vocab.hpp"

namespace numanchor {

/// Architecture plus the training schedule. Defaults are the desk-scale
/// setting: 4 layers is the minimum for last-4-layer retrieval.
struct EncoderConfig {
    std::size_t layers = 4;
    std::size_t hidden = 128;
    std::size_t heads = 4;
    std::size_t ffn = 512;
    std::size_t max_seq_len = 128;
    double dropout = 0.1;
    std::uint64_t seed = 0;
    std::size_t epochs = 6;
    std::size_t batch_size = 32;
    double learning_rate = 1e-4;
    double warmup_fraction = 0.1;
    double grad_clip = 1.0;  // global L2 norm; 0 disables
    MaskingMode masking = MaskingMode::Anchor;
    double random_mask_rate = 0.15;

    /// Throws ConfigError on inconsistent values, including layers < 4.
    void validate() const;
    /// Same checks without the 4-layer minimum (micro-models for tests).
    void validate_architecture() const;
    bool operator==(const EncoderConfig&) const = default;
};

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
struct EncoderLayerWeights {
    Matrix<T> wq, wk, wv, wo;
    Matrix<T> bq, bk, bv, bo;
    Matrix<T> ln1_g, ln1_b;
    Matrix<T> w1, b1, w2, b2;
    Matrix<T> ln2_g, ln2_b;
};

/// Every trainable tensor. Biases and norm parameters are 1 x n rows.
template <typename T>
struct EncoderWeights {
    Matrix<T> tok_emb, pos_emb;
    Matrix<T> emb_ln_g, emb_ln_b;
    std::vector<EncoderLayerWeights<T>> layers;
    Matrix<T> dec_w, dec_b;  // masked-LM output projection (hidden x vocab)

    /// All tensors in a fixed order, named for serialization.
    std::vector<std::pair<std::string, Matrix<T>*>> named();
    std::vector<std::pair<std::string, const Matrix<T>*>> named() const;

    /// Same shapes, all zeros.
    EncoderWeights zeros_like() const;
    void set_zero();
    std::size_t parameter_count() const;
};

/// Replaces the token embedding at one position (before the position
/// embedding is added). Used for numerals outside the vocabulary.
template <typename T>
struct EmbeddingOverride {
    std::size_t position = 0;
    Eigen::Matrix<T, 1, Eigen::Dynamic> embedding;
};

/// Post-norm transformer encoder (BERT layout) with a masked-LM head and
/// hand-written backward pass.
template <typename T>
class TransformerEncoder {
public:
    TransformerEncoder(const EncoderConfig& config, std::size_t vocab_size);
    TransformerEncoder(const EncoderConfig& config, EncoderWeights<T> weights);

    const EncoderConfig& config() const noexcept { return config_; }
    std::size_t vocab_size() const noexcept { return static_cast<std::size_t>(weights_.tok_emb.rows()); }
    EncoderWeights<T>& weights() noexcept { return weights_; }
    const EncoderWeights<T>& weights() const noexcept { return weights_; }

    /// [embedding output, layer 1 output, ..., layer L output], each
    /// (sequence length x hidden). Inference mode: no dropout.
    std::vector<Matrix<T>> hidden_states(const std::vector<TokenId>& ids,
                                         const std::optional<EmbeddingOverride<T>>& override = {}) const;

    /// Mean cross-entropy over all masked positions of the batch. Gradients
    /// are added into `grads`. Dropout is active iff `dropout_rng` is given.
    double loss_and_gradients(std::span<const MaskedSequence> batch, EncoderWeights<T>& grads,
                              std::mt19937_64* dropout_rng) const;

    /// Same loss without dropout and without gradients.
    double loss(std::span<const MaskedSequence> batch) const;

private:
    struct Cache;
    double run(std::span<const MaskedSequence> batch, EncoderWeights<T>* grads, std::mt19937_64* rng) const;

    EncoderConfig config_;
    EncoderWeights<T> weights_;
};

extern template class TransformerEncoder<float>;
extern template class TransformerEncoder<double>;

/// Casts every tensor to another scalar type.
template <typename To, typename From>
EncoderWeights<To> cast_weights(const EncoderWeights<From>& w);

}  // namespace numanchor
