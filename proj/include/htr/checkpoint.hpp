#pragma once

#include <filesystem>
#include <iosfwd>

#include "htr/model.hpp"

namespace htr {

// Binary layout, little-endian:
//   "HTRC" | u32 version (1) | u32 record count
//   record: u8 tag (0 conv, 1 dense) | u32 rank | u32 extents[rank]
//           | f32 weights (row-major) | u32 bias length | f32 bias
// Conv records precede dense records, in layer order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(std::ostream& out, const Parameters<float>& params);
void save_checkpoint(const std::filesystem::path& path, const Parameters<float>& params);

Parameters<float> read_checkpoint(std::istream& in);
Parameters<float> read_checkpoint(const std::filesystem::path& path);

// The checkpoint stores weights only, so the input image shape comes from the
// caller. Dropout has no effect at inference and is set to `dropout_p`.
ModelConfig config_from_parameters(const Parameters<float>& params, InputShape input, double dropout_p = 0.5);
Model<float> load_model(const std::filesystem::path& path, InputShape input = {}, double dropout_p = 0.5);

} // namespace htr
