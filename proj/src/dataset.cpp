#include "htr/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace htr {

namespace {

std::uint32_t read_u32_be(std::istream& in, const char* field) {
    std::array<unsigned char, 4> b{};
    in.read(reinterpret_cast<char*>(b.data()), 4);
    if (in.gcount() != 4) {
        throw IdxError(IdxError::Kind::truncated, std::string("IDX header truncated while reading ") + field);
    }
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

void write_u32_be(std::ostream& out, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                                static_cast<char>(v)};
    out.write(b.data(), 4);
}

std::string hex(std::uint32_t v) {
    std::ostringstream os;
    os << "0x" << std::hex;
    os.width(8);
    os.fill('0');
    os << v;
    return os.str();
}

void expect_magic(std::istream& in, std::uint32_t expected) {
    const std::uint32_t magic = read_u32_be(in, "magic");
    if (magic != expected) {
        throw IdxError(IdxError::Kind::bad_magic,
                       "IDX magic " + hex(magic) + " does not match expected " + hex(expected));
    }
}

std::vector<std::uint8_t> read_payload(std::istream& in, std::uint64_t expected) {
    if (expected > std::numeric_limits<std::size_t>::max() / 2) {
        throw IdxError(IdxError::Kind::dim_overflow, "IDX dimensions describe " + std::to_string(expected) + " bytes");
    }
    std::vector<std::uint8_t> data(static_cast<std::size_t>(expected));
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(expected));
    const auto got = static_cast<std::uint64_t>(in.gcount());
    if (got != expected) {
        throw IdxError(IdxError::Kind::truncated,
                       "IDX payload truncated: expected " + std::to_string(expected) + " bytes, got " +
                           std::to_string(got));
    }
    return data;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IdxError(IdxError::Kind::io, "cannot open " + path.string());
    }
    return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    return out;
}

template <typename Fn>
auto with_path_context(const std::filesystem::path& path, Fn&& fn) {
    try {
        return fn();
    } catch (const IdxError& e) {
        throw IdxError(e.kind(), path.string() + ": " + e.what());
    }
}

} // namespace

RawImages read_idx_images(std::istream& in) {
    expect_magic(in, kIdxImageMagic);
    RawImages r;
    r.count = read_u32_be(in, "image count");
    r.height = read_u32_be(in, "rows");
    r.width = read_u32_be(in, "columns");
    const std::uint64_t total = std::uint64_t(r.count) * std::uint64_t(r.height) * std::uint64_t(r.width);
    if (r.count != 0 && (r.height == 0 || r.width == 0)) {
        throw IdxError(IdxError::Kind::dim_overflow, "IDX image extents must be positive");
    }
    r.pixels = read_payload(in, total);
    return r;
}

RawImages read_idx_images(const std::filesystem::path& path) {
    auto in = open_in(path);
    return with_path_context(path, [&] { return read_idx_images(in); });
}

std::vector<std::uint8_t> read_idx_labels(std::istream& in) {
    expect_magic(in, kIdxLabelMagic);
    const std::uint32_t n = read_u32_be(in, "label count");
    return read_payload(in, n);
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
    auto in = open_in(path);
    return with_path_context(path, [&] { return read_idx_labels(in); });
}

void write_idx_images(std::ostream& out, const RawImages& images) {
    if (images.pixels.size() != images.count * images.height * images.width) {
        throw InputError("image stack size does not match its dimensions");
    }
    write_u32_be(out, kIdxImageMagic);
    write_u32_be(out, static_cast<std::uint32_t>(images.count));
    write_u32_be(out, static_cast<std::uint32_t>(images.height));
    write_u32_be(out, static_cast<std::uint32_t>(images.width));
    out.write(reinterpret_cast<const char*>(images.pixels.data()), static_cast<std::streamsize>(images.pixels.size()));
}

void write_idx_images(const std::filesystem::path& path, const RawImages& images) {
    auto out = open_out(path);
    write_idx_images(out, images);
}

void write_idx_labels(std::ostream& out, std::span<const std::uint8_t> labels) {
    write_u32_be(out, kIdxLabelMagic);
    write_u32_be(out, static_cast<std::uint32_t>(labels.size()));
    out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels) {
    auto out = open_out(path);
    write_idx_labels(out, labels);
}

std::vector<std::string> label_map_balanced47() {
    std::vector<std::string> map;
    for (char c = '0'; c <= '9'; ++c) {
        map.emplace_back(1, c);
    }
    for (char c = 'A'; c <= 'Z'; ++c) {
        map.emplace_back(1, c);
    }
    for (char c : std::string("abdefghnqrt")) {
        map.emplace_back(1, c);
    }
    return map;
}

std::vector<std::string> default_label_map(std::size_t classes) {
    auto map = label_map_balanced47();
    if (classes > map.size()) {
        throw ConfigError("no default label map for " + std::to_string(classes) + " classes; supply a label map file");
    }
    map.resize(classes);
    return map;
}

std::vector<std::string> read_label_map(const std::filesystem::path& path, std::size_t classes) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open label map " + path.string());
    }
    std::vector<std::string> map;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            throw ParseError(path.string() + ": empty line " + std::to_string(map.size() + 1));
        }
        map.push_back(line);
    }
    if (map.size() != classes) {
        throw CompatibilityError(path.string() + ": label map has " + std::to_string(map.size()) +
                                 " entries, expected " + std::to_string(classes));
    }
    return map;
}

std::vector<float> preprocess_image(std::span<const std::uint8_t> pixels, std::size_t height, std::size_t width,
                                    const PreprocessOptions& options) {
    const std::size_t target = options.target;
    if (pixels.size() != height * width) {
        throw InputError("image buffer does not match " + std::to_string(height) + "x" + std::to_string(width));
    }
    if (height < target || width < target) {
        throw InputError("unsupported size: " + std::to_string(height) + "x" + std::to_string(width) +
                         " would need upscaling to " + std::to_string(target) + "x" + std::to_string(target));
    }
    auto value = [&](std::size_t r, std::size_t c) {
        const double v = pixels[r * width + c];
        return options.invert ? 255.0 - v : v;
    };
    std::vector<float> out(target * target);

    if (height % target == 0 && width % target == 0) {
        const std::size_t bh = height / target, bw = width / target;
        for (std::size_t i = 0; i < target; ++i) {
            for (std::size_t j = 0; j < target; ++j) {
                double sum = 0.0;
                for (std::size_t r = i * bh; r < (i + 1) * bh; ++r) {
                    for (std::size_t c = j * bw; c < (j + 1) * bw; ++c) {
                        sum += value(r, c);
                    }
                }
                out[i * target + j] = static_cast<float>(sum / double(bh * bw) / 255.0);
            }
        }
        return out;
    }

    // Fractional footprints: each output pixel covers [i*H/t, (i+1)*H/t) of the
    // source; weights are the overlap lengths.
    const double sy = double(height) / double(target), sx = double(width) / double(target);
    for (std::size_t i = 0; i < target; ++i) {
        const double y0 = i * sy, y1 = (i + 1) * sy;
        for (std::size_t j = 0; j < target; ++j) {
            const double x0 = j * sx, x1 = (j + 1) * sx;
            double sum = 0.0;
            for (auto r = static_cast<std::size_t>(y0); r < height && double(r) < y1; ++r) {
                const double wy = std::min(y1, double(r + 1)) - std::max(y0, double(r));
                for (auto c = static_cast<std::size_t>(x0); c < width && double(c) < x1; ++c) {
                    const double wx = std::min(x1, double(c + 1)) - std::max(x0, double(c));
                    sum += wy * wx * value(r, c);
                }
            }
            out[i * target + j] = static_cast<float>(std::clamp(sum / (sy * sx) / 255.0, 0.0, 1.0));
        }
    }
    return out;
}

LabeledDataset::LabeledDataset(InputShape shape, std::vector<float> pixels, std::vector<std::size_t> labels,
                               std::vector<std::string> label_map)
    : shape_(shape), pixels_(std::move(pixels)), labels_(std::move(labels)), label_map_(std::move(label_map)) {
    const std::size_t per_image = shape_.channels * shape_.height * shape_.width;
    if (per_image == 0 || pixels_.size() != labels_.size() * per_image) {
        throw InputError("dataset holds " + std::to_string(pixels_.size()) + " pixel values for " +
                         std::to_string(labels_.size()) + " labels");
    }
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i] >= label_map_.size()) {
            throw InputError("label " + std::to_string(labels_[i]) + " at row " + std::to_string(i) +
                             " is outside the " + std::to_string(label_map_.size()) + "-class label map");
        }
    }
    for (float v : pixels_) {
        if (!(v >= 0.0f && v <= 1.0f)) {
            throw InputError("dataset pixel values must lie in [0, 1]");
        }
    }
}

Tensor LabeledDataset::image(std::size_t i) const {
    const std::size_t n = shape_.channels * shape_.height * shape_.width;
    if (i >= size()) {
        throw InputError("image index " + std::to_string(i) + " out of range");
    }
    return Tensor(shape_.shape(), std::vector<float>(pixels_.begin() + i * n, pixels_.begin() + (i + 1) * n));
}

Tensor LabeledDataset::batch(std::span<const std::size_t> indices) const {
    if (indices.empty()) {
        throw InputError("cannot build an empty batch");
    }
    const std::size_t n = shape_.channels * shape_.height * shape_.width;
    std::vector<float> data(indices.size() * n);
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] >= size()) {
            throw InputError("image index " + std::to_string(indices[k]) + " out of range");
        }
        std::copy_n(pixels_.begin() + indices[k] * n, n, data.begin() + k * n);
    }
    return Tensor(Shape{indices.size(), shape_.channels, shape_.height, shape_.width}, std::move(data));
}

std::vector<std::size_t> LabeledDataset::labels_of(std::span<const std::size_t> indices) const {
    std::vector<std::size_t> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) {
        out.push_back(labels_.at(i));
    }
    return out;
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
    const std::size_t n = shape_.channels * shape_.height * shape_.width;
    std::vector<float> pixels;
    pixels.reserve(indices.size() * n);
    for (std::size_t i : indices) {
        if (i >= size()) {
            throw InputError("subset index " + std::to_string(i) + " out of range");
        }
        pixels.insert(pixels.end(), pixels_.begin() + i * n, pixels_.begin() + (i + 1) * n);
    }
    return LabeledDataset(shape_, std::move(pixels), labels_of(indices), label_map_);
}

LabeledDataset preprocess(const RawImages& raw, std::span<const std::uint8_t> labels,
                          std::vector<std::string> label_map, const PreprocessOptions& options) {
    if (raw.count != labels.size()) {
        throw InputError(std::to_string(raw.count) + " images but " + std::to_string(labels.size()) + " labels");
    }
    const std::size_t t = options.target;
    std::vector<float> pixels;
    pixels.reserve(raw.count * t * t);
    for (std::size_t i = 0; i < raw.count; ++i) {
        auto img = preprocess_image(raw.image(i), raw.height, raw.width, options);
        pixels.insert(pixels.end(), img.begin(), img.end());
    }
    return LabeledDataset(InputShape{1, t, t}, std::move(pixels), std::vector<std::size_t>(labels.begin(), labels.end()),
                          std::move(label_map));
}

RawImages quantize(const LabeledDataset& data) {
    if (data.image_shape().channels != 1) {
        throw InputError("IDX export supports single-channel images only");
    }
    RawImages r{data.size(), data.image_shape().height, data.image_shape().width, {}};
    r.pixels.reserve(data.pixels().size());
    for (float v : data.pixels()) {
        r.pixels.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
    }
    return r;
}

SplitIndices split(std::size_t n, double train_ratio, std::uint64_t seed) {
    if (n < 2) {
        throw InputError("split needs at least 2 samples, got " + std::to_string(n));
    }
    if (!(train_ratio > 0.0 && train_ratio < 1.0)) {
        throw InputError("train ratio must be in (0, 1)");
    }
    // The epsilon absorbs representation error in (1 - ratio), e.g. 0.30000000000000004.
    const auto test = static_cast<std::size_t>(std::floor((1.0 - train_ratio) * double(n) + 1e-9));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    SplitIndices s;
    s.seed = seed;
    s.train.assign(perm.begin(), perm.end() - static_cast<std::ptrdiff_t>(test));
    s.test.assign(perm.end() - static_cast<std::ptrdiff_t>(test), perm.end());
    return s;
}

void write_split(const std::filesystem::path& path, const SplitIndices& split) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out << "# seed " << split.seed << '\n';
    for (std::size_t i : split.train) {
        out << "train " << i << '\n';
    }
    for (std::size_t i : split.test) {
        out << "test " << i << '\n';
    }
}

SplitIndices read_split(const std::filesystem::path& path, std::size_t n) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open split file " + path.string());
    }
    SplitIndices s;
    std::vector<bool> seen(n, false);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "#") {
            std::string key;
            ls >> key >> s.seed;
            continue;
        }
        std::size_t idx = 0;
        if (!(ls >> idx) || (kind != "train" && kind != "test")) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected 'train <i>' or 'test <i>'");
        }
        if (idx >= n || seen[idx]) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": index " + std::to_string(idx) +
                             " out of range or repeated");
        }
        seen[idx] = true;
        (kind == "train" ? s.train : s.test).push_back(idx);
    }
    return s;
}

} // namespace htr
