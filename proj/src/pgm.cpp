#include "htr/pgm.hpp"

#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>

namespace htr {

namespace {

void skip_space_and_comments(std::istream& in) {
    for (;;) {
        const int c = in.peek();
        if (c == '#') {
            std::string discard;
            std::getline(in, discard);
        } else if (c != EOF && std::isspace(c)) {
            in.get();
        } else {
            return;
        }
    }
}

std::size_t read_header_number(std::istream& in, const char* field) {
    skip_space_and_comments(in);
    std::size_t value = 0;
    bool any = false;
    while (std::isdigit(in.peek())) {
        value = value * 10 + static_cast<std::size_t>(in.get() - '0');
        any = true;
        if (value > 1u << 20) {
            throw ParseError(std::string("PGM header: ") + field + " too large");
        }
    }
    if (!any) {
        throw ParseError(std::string("PGM header: missing ") + field);
    }
    return value;
}

} // namespace

RawImages read_pgm(std::istream& in) {
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (in.gcount() != 2 || magic[0] != 'P') {
        throw ParseError("not a PGM file (missing 'P' magic)");
    }
    if (magic[1] != '5') {
        throw ParseError(std::string("unsupported PNM variant P") + magic[1] + "; only binary P5 is accepted");
    }
    const std::size_t width = read_header_number(in, "width");
    const std::size_t height = read_header_number(in, "height");
    const std::size_t maxval = read_header_number(in, "maxval");
    if (width == 0 || height == 0) {
        throw ParseError("PGM header: zero image extent");
    }
    if (maxval != 255) {
        throw ParseError("PGM header: maxval " + std::to_string(maxval) + " unsupported, expected 255");
    }
    if (!std::isspace(in.get())) {
        throw ParseError("PGM header: expected single whitespace before raster");
    }
    RawImages r{1, height, width, std::vector<std::uint8_t>(height * width)};
    in.read(reinterpret_cast<char*>(r.pixels.data()), static_cast<std::streamsize>(r.pixels.size()));
    if (static_cast<std::size_t>(in.gcount()) != r.pixels.size()) {
        throw ParseError("PGM raster truncated: expected " + std::to_string(r.pixels.size()) + " bytes, got " +
                         std::to_string(in.gcount()));
    }
    return r;
}

RawImages read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    try {
        return read_pgm(in);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void write_pgm(std::ostream& out, std::span<const std::uint8_t> pixels, std::size_t height, std::size_t width) {
    if (pixels.size() != height * width) {
        throw InputError("PGM pixel buffer does not match its dimensions");
    }
    out << "P5\n" << width << ' ' << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

void write_pgm(const std::filesystem::path& path, std::span<const std::uint8_t> pixels, std::size_t height,
               std::size_t width) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    write_pgm(out, pixels, height, width);
}

} // namespace htr
