#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace numanchor {

using TokenId = std::int32_t;

/// Token <-> id map. Ids 0..5 are the reserved tokens; the rest are ordered
/// by (frequency desc, token asc). Numerals and anchor values are whole tokens.
class Vocab {
public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kMask = 1;
    static constexpr TokenId kUnk = 2;
    static constexpr TokenId kAnc = 3;
    static constexpr TokenId kLeft = 4;
    static constexpr TokenId kRight = 5;
    static constexpr TokenId kReservedCount = 6;

    static const std::vector<std::string>& reserved_tokens();

    Vocab();
    explicit Vocab(std::vector<std::string> tokens);

    std::size_t size() const noexcept { return tokens_.size(); }
    TokenId id(std::string_view token) const;  // kUnk when absent
    bool contains(std::string_view token) const;
    const std::string& token(TokenId id) const;
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

    std::vector<TokenId> encode(const std::vector<std::string>& tokens) const;

    static bool is_priming(TokenId id) noexcept { return id == kAnc || id == kLeft || id == kRight; }

    /// `token \t id` lines.
    std::string to_tsv() const;
    static Vocab from_tsv(std::string_view text);

    bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

Vocab build_vocab(const std::vector<std::vector<std::string>>& corpus, std::size_t min_frequency);

/// Tokens that occur as numerals in running text, i.e. not as the anchor
/// value of a priming group.
std::vector<TokenId> numeral_token_ids(const Vocab& vocab,
                                       const std::vector<std::vector<std::string>>& corpus);

}  // namespace numanchor
