#include "layoutnet/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include <fmt/format.h>

namespace layoutnet {

std::uint8_t to_byte(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::floor(255.0 * c + 0.5));
}

void write_pgm(const std::filesystem::path& path, const Grid& grid) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write image '{}'", path.string()));
    out << "P5\n" << grid.width << ' ' << grid.height << "\n255\n";
    std::vector<char> bytes(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) bytes[i] = static_cast<char>(to_byte(grid.values[i]));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(fmt::format("failed writing image '{}'", path.string()));
}

Grid read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(fmt::format("cannot open image '{}'", path.string()));
    std::string magic;
    int width = 0, height = 0, maxval = 0;
    if (!(in >> magic >> width >> height >> maxval) || magic != "P5" || maxval != 255 || width <= 0 || height <= 0)
        throw Error(fmt::format("'{}' is not an 8-bit binary PGM", path.string()));
    in.get();  // single whitespace after the header
    Grid g(width, height);
    std::vector<char> bytes(g.size());
    if (!in.read(bytes.data(), static_cast<std::streamsize>(bytes.size())))
        throw Error(fmt::format("image '{}' is truncated", path.string()));
    for (std::size_t i = 0; i < g.size(); ++i) g.values[i] = static_cast<unsigned char>(bytes[i]) / 255.0;
    return g;
}

}  // namespace layoutnet
