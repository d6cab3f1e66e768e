#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace numanchor {

/// A numeral token located in a pre-tokenized document.
struct NumeralOccurrence {
    std::size_t doc_id = 0;
    std::size_t token_index = 0;
    std::string surface;
    double value = 0.0;

    bool operator==(const NumeralOccurrence&) const = default;
};

struct ScannedDocument {
    std::vector<std::string> tokens;
    std::vector<NumeralOccurrence> numerals;
};

struct CorpusStats {
    std::size_t total_tokens = 0;
    std::size_t numeral_tokens = 0;
    double numeral_fraction = 0.0;
    // digit count of the integer part -> number of numerals
    std::map<std::size_t, std::size_t> digit_length_histogram;
};

// Reserved priming tokens. The pre-tokenizer keeps them atomic so that an
// already-augmented corpus is recognized as such downstream.
inline constexpr std::string_view kAnchorToken = "<ANC>";
inline constexpr std::string_view kLeftAnchorToken = "<LA>";
inline constexpr std::string_view kRightAnchorToken = "<RA>";

bool is_priming_token(std::string_view token) noexcept;

/// True when `token` matches the numeral grammar: digits with optional
/// three-digit comma groups and an optional single decimal point.
bool is_numeral(std::string_view token) noexcept;

/// Base-10 value of a numeral surface. Throws ParseError when the surface
/// does not match the grammar, RangeError when the value overflows.
double parse_numeral(std::string_view surface);

/// Splits text on whitespace, then separates punctuation. Digit runs keep
/// their comma groups and decimal point; letter/digit mixes stay one token.
std::vector<std::string> pretokenize(std::string_view text);

/// Throws DecodeError naming the document and byte offset of the first
/// malformed UTF-8 sequence.
void validate_utf8(std::string_view text, std::size_t doc_id);

ScannedDocument scan_document(std::string_view text, std::size_t doc_id);
std::vector<ScannedDocument> scan_corpus(const std::vector<std::string>& documents);

CorpusStats corpus_numeral_stats(const std::vector<NumeralOccurrence>& occurrences,
                                 std::size_t total_tokens);
CorpusStats corpus_numeral_stats(const std::vector<ScannedDocument>& scanned);

/// `doc_id \t token_index \t surface \t value` records, one per line.
std::string format_occurrences(const std::vector<NumeralOccurrence>& occurrences);
std::vector<NumeralOccurrence> parse_occurrences(std::string_view text);

}  // namespace numanchor
