#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "numanchor/anchor_induction.hpp"
#include "numanchor/numeral_parser.hpp"

namespace numanchor {

/// The four priming variants: linear or log anchor table, plain `<ANC>`
/// tokens or directional `<LA>`/`<RA>` tokens.
enum class Strategy { Anchors, LnAnchors, AnchorsDir, LnAnchorsDir };

std::string_view to_string(Strategy strategy) noexcept;
Strategy parse_strategy(std::string_view text);
Space strategy_space(Strategy strategy) noexcept;
bool is_directional(Strategy strategy) noexcept;

/// How anchor values are spelled in log space: the log value itself
/// (default) or its linear magnitude exp(m).
enum class LogRendering { LogValue, Magnitude };

struct AugmentOptions {
    LogRendering log_rendering = LogRendering::LogValue;
};

struct AugmentResult {
    std::vector<std::string> tokens;
    std::vector<std::string> warnings;
};

/// Linear space: the integer when within 1e-9 of one, else 6 significant
/// digits. Log space: 4 decimal places.
std::string render_anchor(double anchor, Space space,
                          LogRendering log_rendering = LogRendering::LogValue);

/// Inserts one priming group right after every numeral. Throws
/// AugmentationError for reserved tokens in the input or a table whose space
/// does not match the strategy.
AugmentResult augment_document(const std::vector<std::string>& tokens,
                               const std::vector<NumeralOccurrence>& occurrences,
                               const AnchorTable& table, Strategy strategy,
                               const AugmentOptions& options = {});

/// Removes every priming token together with the anchor value after it.
/// Throws CorruptionError when a priming token has no value after it.
std::vector<std::string> strip_augmentation(const std::vector<std::string>& augmented);

}  // namespace numanchor
