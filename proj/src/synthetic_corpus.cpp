#include "numanchor/synthetic_corpus.hpp"

#include <array>
#include <cmath>
#include <random>

#include "numanchor/errors.hpp"

namespace numanchor {

namespace {

constexpr std::array kCues{"tiny", "small", "modest", "sizable", "large", "huge", "vast"};
constexpr std::array kNouns{"city", "village", "company", "museum", "farm", "school", "team", "library", "factory", "port"};
constexpr std::array kUnits{"people", "tonnes", "visitors", "books", "kilometres", "workers", "dollars", "cars"};
constexpr std::array kPlaces{"the north", "the coast", "the valley", "the capital", "the island"};

template <typename A>
const char* pick(const A& arr, std::mt19937_64& rng) {
    return arr[std::uniform_int_distribution<std::size_t>(0, arr.size() - 1)(rng)];
}

}  // namespace

double round_corpus_value(double value, int significant_digits) {
    if (!(value > 0.0) || !std::isfinite(value)) throw DomainError("corpus values must be positive and finite");
    if (value < 100.0) return std::max(1.0, std::round(value));
    const double magnitude = std::floor(std::log10(value));
    const double unit = std::pow(10.0, magnitude - significant_digits + 1);
    return std::round(value / unit) * unit;
}

std::string render_integer(double value, bool commas) {
    std::string digits = std::to_string(static_cast<long long>(std::llround(value)));
    if (!commas || digits.size() <= 3) return digits;
    std::string out;
    const std::size_t lead = digits.size() % 3 == 0 ? 3 : digits.size() % 3;
    out = digits.substr(0, lead);
    for (std::size_t i = lead; i < digits.size(); i += 3) out += "," + digits.substr(i, 3);
    return out;
}

std::vector<std::string> generate_synthetic_corpus(const SyntheticCorpusOptions& options) {
    if (!(options.min_value >= 1.0 && options.max_value > options.min_value)) {
        throw ConfigError("synthetic corpus needs 1 <= min_value < max_value");
    }
    if (options.significant_digits < 1) throw ConfigError("significant_digits must be positive");
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> log_value(std::log(options.min_value), std::log(options.max_value));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> template_pick(0, 5);

    std::vector<std::string> out;
    out.reserve(options.sentences);
    for (std::size_t s = 0; s < options.sentences; ++s) {
        const double value = round_corpus_value(std::exp(log_value(rng)), options.significant_digits);
        const bool commas = value >= 1000.0 && u(rng) < options.comma_rate;
        const std::string n = render_integer(value, commas);
        if (u(rng) < options.probe_frame_rate) {
            out.push_back("the value is " + n + " .");
            continue;
        }
        const auto decade = std::min<std::size_t>(kCues.size() - 1, static_cast<std::size_t>(std::log10(value)));
        std::string cue = kCues[decade];
        if (u(rng) >= options.cue_accuracy) cue = pick(kCues, rng);
        const std::string noun = pick(kNouns, rng);
        const std::string unit = pick(kUnits, rng);
        switch (template_pick(rng)) {
            case 0: out.push_back("the " + noun + " had a " + cue + " count of " + n + " " + unit + " ."); break;
            case 1: out.push_back("a " + cue + " total of " + n + " " + unit + " was recorded in " + pick(kPlaces, rng) + " ."); break;
            case 2: out.push_back("with " + n + " " + unit + " , the " + noun + " is " + cue + " ."); break;
            case 3: out.push_back("the " + cue + " " + noun + " reported " + n + " " + unit + " last year ."); break;
            case 4: out.push_back("about " + n + " " + unit + " , a " + cue + " number , came to the " + noun + " ."); break;
            default: out.push_back("the value is " + n + " , which is " + cue + " ."); break;
        }
    }
    return out;
}

}  // namespace numanchor
