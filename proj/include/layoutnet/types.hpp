#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace layoutnet {

/// Five-coordinate state vector in layout order (a, x, y, b1, b2).
using Vec5 = std::array<double, 5>;

inline constexpr std::size_t kLayoutDims = 5;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// (b1, b2) has zero (or numerically zero) length.
struct DegenerateDirection : Error {
    using Error::Error;
};

/// Argument outside an operation's documented domain.
struct DomainError : Error {
    using Error::Error;
};

struct DimensionMismatch : Error {
    using Error::Error;
};

/// Row-major scalar image. Pixel (col, row) maps to the normalized point
/// ((2 col + 1) / width - 1, (2 row + 1) / height - 1); y grows downward.
struct Grid {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    Grid() = default;
    Grid(int w, int h, double fill = 0.0)
        : width(w), height(h), values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

    double& at(int col, int row) { return values[static_cast<std::size_t>(row) * width + col]; }
    double at(int col, int row) const { return values[static_cast<std::size_t>(row) * width + col]; }
    std::size_t size() const { return values.size(); }

    bool same_shape(const Grid& other) const { return width == other.width && height == other.height; }
};

inline double pixel_to_norm(int index, int extent) {
    return (2.0 * index + 1.0) / extent - 1.0;
}

/// Pixel index whose cell contains the normalized coordinate, clamped to the grid.
inline int norm_to_pixel(double coord, int extent) {
    const double f = (coord + 1.0) * 0.5 * extent;
    int idx = static_cast<int>(f >= 0.0 ? f : f - 1.0);
    if (idx < 0) idx = 0;
    if (idx >= extent) idx = extent - 1;
    return idx;
}

}  // namespace layoutnet
