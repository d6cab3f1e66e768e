#include "numanchor/numeral_parser.hpp"

#include <charconv>
#include <cmath>
#include <cctype>

#include "numanchor/errors.hpp"
#include "numanchor/text_util.hpp"

namespace numanchor {

namespace {

bool is_digit(char c) noexcept { return c >= '0' && c <= '9'; }

bool is_word_byte(char c) noexcept {
    const auto u = static_cast<unsigned char>(c);
    return u >= 0x80 || std::isalnum(u) != 0;
}

bool is_space(char c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::size_t integer_digit_count(std::string_view surface) noexcept {
    std::size_t digits = 0;
    for (char c : surface) {
        if (c == '.') break;
        if (is_digit(c)) ++digits;
    }
    return digits;
}

}  // namespace

bool is_priming_token(std::string_view token) noexcept {
    return token == kAnchorToken || token == kLeftAnchorToken || token == kRightAnchorToken;
}

bool is_numeral(std::string_view token) noexcept {
    std::size_t i = 0;
    const std::size_t n = token.size();
    std::size_t lead = 0;
    while (i < n && is_digit(token[i])) {
        ++i;
        ++lead;
    }
    if (lead == 0) return false;
    bool grouped = false;
    while (i < n && token[i] == ',') {
        if (i + 3 >= n) return false;
        if (!is_digit(token[i + 1]) || !is_digit(token[i + 2]) || !is_digit(token[i + 3])) return false;
        i += 4;
        grouped = true;
    }
    if (grouped && lead > 3) return false;
    if (i < n && token[i] == '.') {
        ++i;
        std::size_t frac = 0;
        while (i < n && is_digit(token[i])) {
            ++i;
            ++frac;
        }
        if (frac == 0) return false;
    }
    return i == n;
}

double parse_numeral(std::string_view surface) {
    if (!is_numeral(surface)) {
        throw ParseError("not a numeral: '" + std::string(surface) + "'");
    }
    std::string plain;
    plain.reserve(surface.size());
    for (char c : surface) {
        if (c != ',') plain.push_back(c);
    }
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(plain.data(), plain.data() + plain.size(), value);
    if (ec == std::errc::result_out_of_range || !std::isfinite(value)) {
        throw RangeError("numeral out of range: '" + std::string(surface) + "'");
    }
    if (ec != std::errc{} || ptr != plain.data() + plain.size()) {
        throw ParseError("not a numeral: '" + std::string(surface) + "'");
    }
    return value;
}

std::vector<std::string> pretokenize(std::string_view text) {
    std::vector<std::string> tokens;
    const std::size_t n = text.size();
    std::size_t i = 0;
    while (i < n) {
        const char c = text[i];
        if (is_space(c)) {
            ++i;
            continue;
        }
        if (c == '<') {
            bool matched = false;
            for (std::string_view reserved : {kAnchorToken, kLeftAnchorToken, kRightAnchorToken}) {
                if (text.substr(i, reserved.size()) == reserved) {
                    tokens.emplace_back(reserved);
                    i += reserved.size();
                    matched = true;
                    break;
                }
            }
            if (matched) continue;
        }
        if (!is_word_byte(c)) {
            tokens.emplace_back(1, c);
            ++i;
            continue;
        }
        const std::size_t start = i;
        bool seen_point = false;
        while (i < n) {
            const char d = text[i];
            if (is_word_byte(d)) {
                ++i;
                continue;
            }
            // A separator stays inside the token only between digits.
            const bool prev_digit = i > start && is_digit(text[i - 1]);
            if (d == ',' && prev_digit && i + 3 < n && is_digit(text[i + 1]) &&
                is_digit(text[i + 2]) && is_digit(text[i + 3]) &&
                (i + 4 >= n || !is_word_byte(text[i + 4]))) {
                i += 4;
                continue;
            }
            if (d == '.' && prev_digit && !seen_point && i + 1 < n && is_digit(text[i + 1])) {
                seen_point = true;
                i += 2;
                continue;
            }
            break;
        }
        tokens.emplace_back(text.substr(start, i - start));
    }
    return tokens;
}

void validate_utf8(std::string_view text, std::size_t doc_id) {
    if (auto offset = first_invalid_utf8(text)) {
        throw DecodeError("document " + std::to_string(doc_id) + ": invalid UTF-8 at byte offset " +
                          std::to_string(*offset));
    }
}

ScannedDocument scan_document(std::string_view text, std::size_t doc_id) {
    validate_utf8(text, doc_id);
    ScannedDocument doc;
    doc.tokens = pretokenize(text);
    for (std::size_t t = 0; t < doc.tokens.size(); ++t) {
        const auto& token = doc.tokens[t];
        if (!is_numeral(token)) continue;
        doc.numerals.push_back({doc_id, t, token, parse_numeral(token)});
    }
    return doc;
}

std::vector<ScannedDocument> scan_corpus(const std::vector<std::string>& documents) {
    std::vector<ScannedDocument> out;
    out.reserve(documents.size());
    for (std::size_t d = 0; d < documents.size(); ++d) {
        out.push_back(scan_document(documents[d], d));
    }
    return out;
}

CorpusStats corpus_numeral_stats(const std::vector<NumeralOccurrence>& occurrences,
                                 std::size_t total_tokens) {
    CorpusStats stats;
    stats.total_tokens = total_tokens;
    stats.numeral_tokens = occurrences.size();
    stats.numeral_fraction =
        total_tokens == 0 ? 0.0
                          : static_cast<double>(occurrences.size()) / static_cast<double>(total_tokens);
    for (const auto& occ : occurrences) {
        ++stats.digit_length_histogram[integer_digit_count(occ.surface)];
    }
    return stats;
}

CorpusStats corpus_numeral_stats(const std::vector<ScannedDocument>& scanned) {
    std::vector<NumeralOccurrence> all;
    std::size_t total = 0;
    for (const auto& doc : scanned) {
        total += doc.tokens.size();
        all.insert(all.end(), doc.numerals.begin(), doc.numerals.end());
    }
    return corpus_numeral_stats(all, total);
}

std::string format_occurrences(const std::vector<NumeralOccurrence>& occurrences) {
    std::string out;
    for (const auto& occ : occurrences) {
        out += std::to_string(occ.doc_id);
        out += '\t';
        out += std::to_string(occ.token_index);
        out += '\t';
        out += occ.surface;
        out += '\t';
        out += format_double(occ.value);
        out += '\n';
    }
    return out;
}

std::vector<NumeralOccurrence> parse_occurrences(std::string_view text) {
    std::vector<NumeralOccurrence> out;
    std::size_t line_no = 0;
    for (std::string_view line : split_lines(text)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split(line, '\t');
        if (fields.size() != 4) {
            throw ParseError("occurrence record " + std::to_string(line_no) + ": expected 4 fields");
        }
        NumeralOccurrence occ;
        occ.doc_id = parse_size(fields[0]);
        occ.token_index = parse_size(fields[1]);
        occ.surface = std::string(fields[2]);
        occ.value = parse_double(fields[3]);
        out.push_back(std::move(occ));
    }
    return out;
}

}  // namespace numanchor
