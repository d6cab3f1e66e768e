#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace numanchor {

/// Template-generated English-like sentences, one numeral each, used as a
/// desk-scale training corpus. Numerals are log-uniform in [min_value,
/// max_value]; a size adjective before the numeral tracks its decade.
struct SyntheticCorpusOptions {
    std::size_t sentences = 20000;
    std::uint64_t seed = 0;
    double min_value = 1.0;
    double max_value = 1e6;
    int significant_digits = 2;  // applied to values >= 100; smaller values are whole numbers
    double cue_accuracy = 0.75;  // chance the adjective matches the decade
    double comma_rate = 0.25;    // chance a value >= 1000 is written with comma groups
    double probe_frame_rate = 0.05;
};

/// Value as it appears in the corpus: a whole number rounded to the configured
/// significant digits.
double round_corpus_value(double value, int significant_digits);

/// Whole-number surface form, optionally with comma groups ("12,000").
std::string render_integer(double value, bool commas);

std::vector<std::string> generate_synthetic_corpus(const SyntheticCorpusOptions& options);

}  // namespace numanchor
