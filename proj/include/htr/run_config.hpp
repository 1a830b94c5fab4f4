#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "htr/model.hpp"
#include "htr/training.hpp"

namespace htr {

// Settings for `train` and `gradcheck`, read from a flat "key = value" file.
// '#' starts a comment. Unknown keys are errors. Relative paths resolve
// against the config file's directory.
struct RunConfig {
    std::filesystem::path data_dir;                 // output of `prepare`
    std::optional<std::filesystem::path> label_map; // one character per line
    ModelConfig model;
    TrainSchedule schedule;
    AdamConfig adam;
    std::uint64_t init_seed = 1;
    std::size_t limit = 0; // use at most this many training rows (0 = all)
    bool deterministic = false;

    double gradcheck_tolerance = 1e-4;
    std::size_t gradcheck_batch = 2;
    std::uint64_t gradcheck_seed = 7;
};

// Every invalid key or value is reported in a single ConfigError.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

// "8@5x5, 16@3x3" -> {{8,5},{16,3}}; "none" or empty -> {}.
std::vector<ConvBlock> parse_conv_blocks(const std::string& text);
std::string format_conv_blocks(const std::vector<ConvBlock>& blocks);

} // namespace htr
