#pragma once

#include <cstdint>
#include <vector>

#include "jvlgs/error.hpp"

namespace jvlgs {

/// H×W grid with values in {0,1}, row-major.
struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> grid;

    BinaryMask() = default;
    BinaryMask(int h, int w, std::uint8_t fill = 0)
        : height(h), width(w), grid(static_cast<std::size_t>(h) * w, fill) {}

    std::uint8_t& at(int y, int x) { return grid[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return grid[static_cast<std::size_t>(y) * width + x]; }

    bool inside(int y, int x) const { return y >= 0 && y < height && x >= 0 && x < width; }
    /// Zero outside the image.
    std::uint8_t get(int y, int x) const { return inside(y, x) ? at(y, x) : 0; }

    std::size_t count() const {
        std::size_t n = 0;
        for (auto v : grid) n += v;
        return n;
    }
    bool empty() const { return count() == 0; }

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

inline void require_same_shape(const BinaryMask& a, const BinaryMask& b, const char* what) {
    require(a.height == b.height && a.width == b.width, ErrorKind::ShapeMismatch,
            std::string(what) + ": mask shapes differ (" + std::to_string(a.height) + "x" + std::to_string(a.width) +
                " vs " + std::to_string(b.height) + "x" + std::to_string(b.width) + ")");
}

}  // namespace jvlgs
