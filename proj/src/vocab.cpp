#include "numanchor/vocab.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "numanchor/errors.hpp"
#include "numanchor/numeral_parser.hpp"
#include "numanchor/text_util.hpp"

namespace numanchor {

const std::vector<std::string>& Vocab::reserved_tokens() {
    static const std::vector<std::string> reserved{"<PAD>", "<MASK>", "<UNK>", "<ANC>", "<LA>", "<RA>"};
    return reserved;
}

Vocab::Vocab() : Vocab(reserved_tokens()) {}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    const auto& reserved = reserved_tokens();
    if (tokens_.size() < reserved.size() || !std::equal(reserved.begin(), reserved.end(), tokens_.begin())) {
        throw ConfigError("vocabulary must start with the reserved tokens");
    }
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
            throw ConfigError("duplicate vocabulary token '" + tokens_[i] + "'");
        }
    }
}

TokenId Vocab::id(std::string_view token) const {
    const auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }

const std::string& Vocab::token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw RangeError("token id " + std::to_string(id) + " outside vocabulary");
    }
    return tokens_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocab::encode(const std::vector<std::string>& tokens) const {
    std::vector<TokenId> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id(t));
    return ids;
}

std::string Vocab::to_tsv() const {
    std::string out;
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        out += tokens_[i];
        out += '\t';
        out += std::to_string(i);
        out += '\n';
    }
    return out;
}

Vocab Vocab::from_tsv(std::string_view text) {
    std::vector<std::string> tokens;
    for (auto line : split_lines(text)) {
        if (line.empty()) continue;
        const auto f = split(line, '\t');
        if (f.size() != 2) throw ParseError("vocab line must be 'token<TAB>id'");
        if (parse_size(f[1]) != tokens.size()) throw ParseError("vocab ids must be dense and in order");
        tokens.emplace_back(f[0]);
    }
    return Vocab(std::move(tokens));
}

Vocab build_vocab(const std::vector<std::vector<std::string>>& corpus, std::size_t min_frequency) {
    if (corpus.empty()) throw ConfigError("cannot build a vocabulary from an empty corpus");
    std::map<std::string, std::size_t> counts;
    for (const auto& doc : corpus) {
        for (const auto& t : doc) ++counts[t];
    }
    const auto& reserved = Vocab::reserved_tokens();
    const std::set<std::string> reserved_set(reserved.begin(), reserved.end());
    std::vector<std::pair<std::string, std::size_t>> ranked;
    for (auto& [token, count] : counts) {
        if (count >= min_frequency && !reserved_set.count(token)) ranked.emplace_back(token, count);
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> tokens(reserved.begin(), reserved.end());
    for (auto& [token, count] : ranked) tokens.push_back(token);
    return Vocab(std::move(tokens));
}

std::vector<TokenId> numeral_token_ids(const Vocab& vocab,
                                       const std::vector<std::vector<std::string>>& corpus) {
    std::set<TokenId> ids;
    for (const auto& doc : corpus) {
        for (std::size_t i = 0; i < doc.size(); ++i) {
            if (i > 0 && is_priming_token(doc[i - 1])) continue;
            if (!is_numeral(doc[i])) continue;
            const TokenId id = vocab.id(doc[i]);
            if (id != Vocab::kUnk) ids.insert(id);
        }
    }
    return {ids.begin(), ids.end()};
}

}  // namespace numanchor
