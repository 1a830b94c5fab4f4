#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "htr/model.hpp"
#include "htr/tensor.hpp"

namespace htr {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

class IdxError : public ParseError {
public:
    enum class Kind { bad_magic, truncated, dim_overflow, io };

    IdxError(Kind kind, const std::string& what) : ParseError(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

// Stack of 8-bit grayscale images, row-major.
struct RawImages {
    std::size_t count = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> pixels;

    std::span<const std::uint8_t> image(std::size_t i) const {
        return std::span<const std::uint8_t>(pixels).subspan(i * height * width, height * width);
    }
};

RawImages read_idx_images(std::istream& in);
RawImages read_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> read_idx_labels(std::istream& in);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);

void write_idx_images(std::ostream& out, const RawImages& images);
void write_idx_images(const std::filesystem::path& path, const RawImages& images);
void write_idx_labels(std::ostream& out, std::span<const std::uint8_t> labels);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);

// 0-9, A-Z, then a b d e f g h n q r t.
std::vector<std::string> label_map_balanced47();
// First `classes` entries of the balanced map; ConfigError beyond 47.
std::vector<std::string> default_label_map(std::size_t classes);
// UTF-8, one character per line, exactly `classes` lines.
std::vector<std::string> read_label_map(const std::filesystem::path& path, std::size_t classes);

struct PreprocessOptions {
    std::size_t target = 32;
    bool invert = false; // map white-background/black-ink to black-background
};

// Area-average resample of one image to target x target, scaled to [0,1].
// Block-aligned sizes (H and W multiples of target) reduce to plain block
// means. Throws InputError if the source is smaller than the target.
std::vector<float> preprocess_image(std::span<const std::uint8_t> pixels, std::size_t height, std::size_t width,
                                    const PreprocessOptions& options = {});

class LabeledDataset {
public:
    LabeledDataset() = default;
    LabeledDataset(InputShape shape, std::vector<float> pixels, std::vector<std::size_t> labels,
                   std::vector<std::string> label_map);

    std::size_t size() const noexcept { return labels_.size(); }
    bool empty() const noexcept { return labels_.empty(); }
    const InputShape& image_shape() const noexcept { return shape_; }
    std::size_t classes() const noexcept { return label_map_.size(); }
    const std::vector<std::size_t>& labels() const noexcept { return labels_; }
    const std::vector<std::string>& label_map() const noexcept { return label_map_; }
    std::span<const float> pixels() const noexcept { return pixels_; }

    Tensor image(std::size_t i) const;
    // (B, C, H, W) tensor of the selected rows, in the given order.
    Tensor batch(std::span<const std::size_t> indices) const;
    std::vector<std::size_t> labels_of(std::span<const std::size_t> indices) const;

    // Rows `indices`, relabelled into a new dataset.
    LabeledDataset subset(std::span<const std::size_t> indices) const;

private:
    InputShape shape_;
    std::vector<float> pixels_;
    std::vector<std::size_t> labels_;
    std::vector<std::string> label_map_;
};

// Resamples every image and validates labels against the label map.
LabeledDataset preprocess(const RawImages& raw, std::span<const std::uint8_t> labels,
                          std::vector<std::string> label_map, const PreprocessOptions& options = {});

// Quantizes a preprocessed dataset back to bytes (round(v * 255)).
RawImages quantize(const LabeledDataset& data);

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    std::uint64_t seed = 0;
};

// test = floor((1 - train_ratio) * n) rows, train gets the rest. Both lists are
// cut from one seeded permutation of 0..n-1.
SplitIndices split(std::size_t n, double train_ratio, std::uint64_t seed);

// Text form: one "train <index>" or "test <index>" line per row, preceded by
// a "# seed <n>" line.
void write_split(const std::filesystem::path& path, const SplitIndices& split);
SplitIndices read_split(const std::filesystem::path& path, std::size_t n);

} // namespace htr
