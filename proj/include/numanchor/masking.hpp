#pragma once

#include <optional>
#include <random>
#include <vector>

#include "numanchor/vocab.hpp"

namespace numanchor {

inline constexpr TokenId kIgnoreLabel = -1;

struct MaskedSequence {
    std::vector<TokenId> input_ids;
    std::vector<TokenId> labels;  // kIgnoreLabel where nothing is predicted

    std::size_t masked_count() const noexcept;
    bool operator==(const MaskedSequence&) const = default;
};

enum class MaskingMode {
    Anchor,  // mask exactly the anchor value after each priming token
    Random,  // standard 15% masking, used by the no-anchor control
};

/// Replaces the token after every `<ANC>`/`<LA>`/`<RA>` with `<MASK>`.
/// Returns nullopt (skip marker) when the sequence has no priming group.
std::optional<MaskedSequence> mask_anchor_tokens(const std::vector<TokenId>& ids);

/// BERT-style masking: each non-reserved position is selected with
/// probability `rate`; selected positions become `<MASK>` 80% of the time, a
/// random token 10%, and stay unchanged 10%. Nullopt when nothing is selected.
std::optional<MaskedSequence> mask_random_tokens(const std::vector<TokenId>& ids, std::size_t vocab_size,
                                                 double rate, std::mt19937_64& rng);

/// Truncates to `max_len` without leaving a dangling priming token at the end.
std::vector<TokenId> truncate_sequence(std::vector<TokenId> ids, std::size_t max_len);

}  // namespace numanchor
