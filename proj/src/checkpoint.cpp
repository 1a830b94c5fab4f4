#include "htr/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace htr {

namespace {

constexpr std::array<char, 4> kMagic = {'H', 'T', 'R', 'C'};
constexpr std::uint8_t kConvTag = 0;
constexpr std::uint8_t kDenseTag = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
                                static_cast<char>(v >> 24)};
    out.write(b.data(), 4);
}

void put_f32(std::ostream& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

std::uint32_t get_u32(std::istream& in, const char* field) {
    std::array<unsigned char, 4> b{};
    in.read(reinterpret_cast<char*>(b.data()), 4);
    if (in.gcount() != 4) {
        throw ParseError(std::string("checkpoint truncated while reading ") + field);
    }
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

void put_tensor(std::ostream& out, std::uint8_t tag, const Tensor& weights, const Tensor& bias) {
    out.put(static_cast<char>(tag));
    put_u32(out, static_cast<std::uint32_t>(weights.shape().rank()));
    for (std::size_t d : weights.shape().dims()) {
        put_u32(out, static_cast<std::uint32_t>(d));
    }
    for (float v : weights.data()) {
        put_f32(out, v);
    }
    put_u32(out, static_cast<std::uint32_t>(bias.size()));
    for (float v : bias.data()) {
        put_f32(out, v);
    }
}

std::vector<float> get_floats(std::istream& in, std::size_t n, const char* field) {
    std::vector<float> values(n);
    for (auto& v : values) {
        v = std::bit_cast<float>(get_u32(in, field));
    }
    return values;
}

} // namespace

void save_checkpoint(std::ostream& out, const Parameters<float>& params) {
    out.write(kMagic.data(), kMagic.size());
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(params.conv.size() + params.dense.size()));
    for (const auto& c : params.conv) {
        put_tensor(out, kConvTag, c.kernels, c.bias);
    }
    for (const auto& d : params.dense) {
        put_tensor(out, kDenseTag, d.weight, d.bias);
    }
}

void save_checkpoint(const std::filesystem::path& path, const Parameters<float>& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    save_checkpoint(out, params);
}

Parameters<float> read_checkpoint(std::istream& in) {
    std::array<char, 4> magic{};
    in.read(magic.data(), magic.size());
    if (in.gcount() != 4 || magic != kMagic) {
        throw ParseError("not a checkpoint: bad magic bytes");
    }
    const std::uint32_t version = get_u32(in, "version");
    if (version != kCheckpointVersion) {
        throw ParseError("unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint32_t records = get_u32(in, "record count");
    Parameters<float> params;
    for (std::uint32_t r = 0; r < records; ++r) {
        const int tag = in.get();
        if (tag == std::char_traits<char>::eof()) {
            throw ParseError("checkpoint truncated at record " + std::to_string(r));
        }
        const std::size_t expected_rank = tag == kConvTag ? 4 : tag == kDenseTag ? 2 : 0;
        if (expected_rank == 0) {
            throw ParseError("checkpoint record " + std::to_string(r) + " has unknown tag " + std::to_string(tag));
        }
        const std::uint32_t rank = get_u32(in, "rank");
        if (rank != expected_rank) {
            throw ParseError("checkpoint record " + std::to_string(r) + " has rank " + std::to_string(rank));
        }
        std::vector<std::size_t> dims;
        for (std::uint32_t d = 0; d < rank; ++d) {
            dims.push_back(get_u32(in, "extent"));
        }
        Shape shape(dims);
        if (shape.elements() > (std::size_t{1} << 31)) {
            throw ParseError("checkpoint record " + std::to_string(r) + " is implausibly large");
        }
        Tensor weights(shape, get_floats(in, shape.elements(), "weights"));
        const std::uint32_t bias_len = get_u32(in, "bias length");
        if (bias_len != dims[0]) {
            throw ParseError("checkpoint record " + std::to_string(r) + " bias length " + std::to_string(bias_len) +
                             " does not match " + std::to_string(dims[0]) + " outputs");
        }
        Tensor bias(Shape{bias_len}, get_floats(in, bias_len, "bias"));
        if (tag == kConvTag) {
            if (!params.dense.empty()) {
                throw ParseError("checkpoint conv record follows a dense record");
            }
            params.conv.push_back({std::move(weights), std::move(bias)});
        } else {
            params.dense.push_back({std::move(weights), std::move(bias)});
        }
    }
    if (params.dense.empty()) {
        throw ParseError("checkpoint has no dense output layer");
    }
    return params;
}

Parameters<float> read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open checkpoint " + path.string());
    }
    try {
        return read_checkpoint(in);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

ModelConfig config_from_parameters(const Parameters<float>& params, InputShape input, double dropout_p) {
    ModelConfig config;
    config.input = input;
    config.dropout_p = dropout_p;
    for (const auto& c : params.conv) {
        if (c.kernel_height() != c.kernel_width()) {
            throw CompatibilityError("checkpoint holds a non-square kernel " + c.kernels.shape().to_string());
        }
        config.conv_blocks.push_back({c.out_channels(), c.kernel_height()});
    }
    for (std::size_t d = 0; d + 1 < params.dense.size(); ++d) {
        config.dense_units.push_back(params.dense[d].out_units());
    }
    config.classes = params.dense.back().out_units();
    return config;
}

Model<float> load_model(const std::filesystem::path& path, InputShape input, double dropout_p) {
    Parameters<float> params = read_checkpoint(path);
    ModelConfig config = config_from_parameters(params, input, dropout_p);
    return Model<float>::from_parameters(config, std::move(params));
}

} // namespace htr
