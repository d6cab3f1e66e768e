#pragma once

#include <cstddef>
#include <vector>

namespace numanchor {

/// Anything that maps a numeral value to a fixed-width vector.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::size_t dimension() const = 0;
    virtual std::vector<double> embed(double value) const = 0;
};

}  // namespace numanchor
