#include "numanchor/masking.hpp"

#include <algorithm>

namespace numanchor {

std::size_t MaskedSequence::masked_count() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(labels.begin(), labels.end(), [](TokenId l) { return l != kIgnoreLabel; }));
}

std::optional<MaskedSequence> mask_anchor_tokens(const std::vector<TokenId>& ids) {
    MaskedSequence out{ids, std::vector<TokenId>(ids.size(), kIgnoreLabel)};
    bool any = false;
    for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
        if (!Vocab::is_priming(ids[i]) || Vocab::is_priming(ids[i + 1])) continue;
        out.labels[i + 1] = ids[i + 1];
        out.input_ids[i + 1] = Vocab::kMask;
        any = true;
    }
    if (!any) return std::nullopt;
    return out;
}

std::optional<MaskedSequence> mask_random_tokens(const std::vector<TokenId>& ids, std::size_t vocab_size,
                                                 double rate, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<TokenId> any_token(Vocab::kReservedCount,
                                                     static_cast<TokenId>(vocab_size) - 1);
    MaskedSequence out{ids, std::vector<TokenId>(ids.size(), kIgnoreLabel)};
    bool any = false;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < Vocab::kReservedCount) continue;
        if (u(rng) >= rate) continue;
        out.labels[i] = ids[i];
        const double r = u(rng);
        if (r < 0.8) {
            out.input_ids[i] = Vocab::kMask;
        } else if (r < 0.9 && vocab_size > static_cast<std::size_t>(Vocab::kReservedCount)) {
            out.input_ids[i] = any_token(rng);
        }
        any = true;
    }
    if (!any) return std::nullopt;
    return out;
}

std::vector<TokenId> truncate_sequence(std::vector<TokenId> ids, std::size_t max_len) {
    if (ids.size() <= max_len) return ids;
    ids.resize(max_len);
    while (!ids.empty() && Vocab::is_priming(ids.back())) ids.pop_back();
    return ids;
}

}  // namespace numanchor
