#pragma once

#include <filesystem>
#include <iosfwd>

#include "htr/dataset.hpp"

namespace htr {

// Binary 8-bit PGM ("P5\n<width> <height>\n255\n" + raw bytes). Comment lines
// starting with '#' are accepted in the header. Returns a one-image stack.
RawImages read_pgm(std::istream& in);
RawImages read_pgm(const std::filesystem::path& path);

void write_pgm(std::ostream& out, std::span<const std::uint8_t> pixels, std::size_t height, std::size_t width);
void write_pgm(const std::filesystem::path& path, std::span<const std::uint8_t> pixels, std::size_t height,
               std::size_t width);

} // namespace htr
