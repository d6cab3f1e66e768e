#include "numanchor/corpus_augmentation.hpp"

#include <cmath>
#include <cstdio>

#include "numanchor/errors.hpp"
#include "numanchor/text_util.hpp"

namespace numanchor {

std::string_view to_string(Strategy strategy) noexcept {
    switch (strategy) {
        case Strategy::Anchors: return "anchors";
        case Strategy::LnAnchors: return "ln_anchors";
        case Strategy::AnchorsDir: return "anchors_dir";
        case Strategy::LnAnchorsDir: return "ln_anchors_dir";
    }
    return "anchors";
}

Strategy parse_strategy(std::string_view text) {
    if (text == "anchors") return Strategy::Anchors;
    if (text == "ln_anchors") return Strategy::LnAnchors;
    if (text == "anchors_dir") return Strategy::AnchorsDir;
    if (text == "ln_anchors_dir") return Strategy::LnAnchorsDir;
    throw ConfigError("unknown strategy '" + std::string(text) + "'");
}

Space strategy_space(Strategy strategy) noexcept {
    return strategy == Strategy::LnAnchors || strategy == Strategy::LnAnchorsDir ? Space::Log
                                                                                 : Space::Linear;
}

bool is_directional(Strategy strategy) noexcept {
    return strategy == Strategy::AnchorsDir || strategy == Strategy::LnAnchorsDir;
}

std::string render_anchor(double anchor, Space space, LogRendering log_rendering) {
    if (space == Space::Log) {
        if (log_rendering == LogRendering::LogValue) return format_fixed(anchor, 4);
        return render_anchor(std::exp(anchor), Space::Linear);
    }
    const double rounded = std::round(anchor);
    if (std::abs(anchor - rounded) <= 1e-9) return format_fixed(rounded, 0);
    char buf[64];
    const int len = std::snprintf(buf, sizeof buf, "%.6g", anchor);
    return std::string(buf, static_cast<std::size_t>(len));
}

AugmentResult augment_document(const std::vector<std::string>& tokens,
                               const std::vector<NumeralOccurrence>& occurrences,
                               const AnchorTable& table, Strategy strategy,
                               const AugmentOptions& options) {
    if (table.space != strategy_space(strategy)) {
        throw AugmentationError("strategy " + std::string(to_string(strategy)) + " needs a " +
                                std::string(to_string(strategy_space(strategy))) +
                                "-space anchor table, got " + std::string(to_string(table.space)));
    }
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (is_priming_token(tokens[i])) {
            throw AugmentationError("reserved token " + tokens[i] + " at position " + std::to_string(i) +
                                    "; document is already augmented");
        }
    }
    for (std::size_t i = 0; i < occurrences.size(); ++i) {
        const auto& occ = occurrences[i];
        if (occ.token_index >= tokens.size() || tokens[occ.token_index] != occ.surface ||
            (i > 0 && occurrences[i - 1].token_index >= occ.token_index)) {
            throw AugmentationError("numeral occurrence at token " + std::to_string(occ.token_index) +
                                    " does not match the token stream");
        }
    }

    AugmentResult result;
    result.tokens.reserve(tokens.size() + 2 * occurrences.size());
    std::size_t next = 0;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        result.tokens.push_back(tokens[t]);
        if (next >= occurrences.size() || occurrences[next].token_index != t) continue;
        const auto& occ = occurrences[next++];
        const AnchorAssignment a = nearest_anchor_with_fallback(table, occ.value);
        if (a.linear_fallback) {
            result.warnings.push_back("numeral '" + occ.surface + "' at token " + std::to_string(t) +
                                      " has no log anchor; used linear nearest");
        }
        std::string_view prime = kAnchorToken;
        if (is_directional(strategy)) {
            if (a.direction == Direction::Left) prime = kLeftAnchorToken;
            if (a.direction == Direction::Right) prime = kRightAnchorToken;
        }
        result.tokens.emplace_back(prime);
        result.tokens.push_back(render_anchor(a.anchor, table.space, options.log_rendering));
    }
    return result;
}

std::vector<std::string> strip_augmentation(const std::vector<std::string>& augmented) {
    std::vector<std::string> out;
    out.reserve(augmented.size());
    for (std::size_t i = 0; i < augmented.size(); ++i) {
        if (!is_priming_token(augmented[i])) {
            out.push_back(augmented[i]);
            continue;
        }
        if (i + 1 >= augmented.size() || is_priming_token(augmented[i + 1])) {
            throw CorruptionError("priming token " + augmented[i] + " at position " + std::to_string(i) +
                                  " is not followed by an anchor value");
        }
        ++i;
    }
    return out;
}

}  // namespace numanchor
