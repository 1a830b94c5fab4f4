#include "htr/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace htr {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> items;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) {
            items.push_back(item);
        }
    }
    return items;
}

template <typename T>
T parse_number(const std::string& text) {
    T value{};
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        throw ConfigError("'" + text + "' is not a valid number");
    }
    return value;
}

double parse_real(const std::string& text) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        throw ConfigError("'" + text + "' is not a valid real number");
    }
    if (used != text.size()) {
        throw ConfigError("'" + text + "' is not a valid real number");
    }
    return v;
}

InputShape parse_input_shape(const std::string& text) {
    std::vector<std::size_t> dims;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, 'x')) {
        dims.push_back(parse_number<std::size_t>(trim(part)));
    }
    if (dims.size() != 3) {
        throw ConfigError("input_shape must look like 1x32x32, got '" + text + "'");
    }
    return {dims[0], dims[1], dims[2]};
}

} // namespace

std::vector<ConvBlock> parse_conv_blocks(const std::string& text) {
    std::vector<ConvBlock> blocks;
    if (trim(text) == "none") {
        return blocks;
    }
    for (const std::string& item : split_list(text)) {
        const auto at = item.find('@');
        const auto x = item.find('x', at == std::string::npos ? 0 : at);
        if (at == std::string::npos || x == std::string::npos) {
            throw ConfigError("conv block '" + item + "' must look like 8@5x5");
        }
        const auto filters = parse_number<std::size_t>(trim(item.substr(0, at)));
        const auto kh = parse_number<std::size_t>(trim(item.substr(at + 1, x - at - 1)));
        const auto kw = parse_number<std::size_t>(trim(item.substr(x + 1)));
        if (kh != kw) {
            throw ConfigError("conv block '" + item + "': only square kernels are supported");
        }
        blocks.push_back({filters, kh});
    }
    return blocks;
}

std::string format_conv_blocks(const std::vector<ConvBlock>& blocks) {
    if (blocks.empty()) {
        return "none";
    }
    std::string out;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        out += (i ? ", " : "") + std::to_string(blocks[i].filters) + "@" + std::to_string(blocks[i].kernel) + "x" +
               std::to_string(blocks[i].kernel);
    }
    return out;
}

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
    RunConfig cfg;
    cfg.model = ModelConfig::desk();
    auto path_value = [&](const std::string& v) {
        std::filesystem::path p(v);
        return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    };

    using Setter = std::function<void(const std::string&)>;
    const std::map<std::string, Setter> setters = {
        {"data", [&](const std::string& v) { cfg.data_dir = path_value(v); }},
        {"label_map", [&](const std::string& v) { cfg.label_map = path_value(v); }},
        {"input_shape", [&](const std::string& v) { cfg.model.input = parse_input_shape(v); }},
        {"conv_blocks", [&](const std::string& v) { cfg.model.conv_blocks = parse_conv_blocks(v); }},
        {"dense_units",
         [&](const std::string& v) {
             cfg.model.dense_units.clear();
             if (v != "none") {
                 for (const auto& item : split_list(v)) {
                     cfg.model.dense_units.push_back(parse_number<std::size_t>(item));
                 }
             }
         }},
        {"dropout", [&](const std::string& v) { cfg.model.dropout_p = parse_real(v); }},
        {"classes", [&](const std::string& v) { cfg.model.classes = parse_number<std::size_t>(v); }},
        {"epochs", [&](const std::string& v) { cfg.schedule.epochs = parse_number<std::size_t>(v); }},
        {"batch_size", [&](const std::string& v) { cfg.schedule.batch_size = parse_number<std::size_t>(v); }},
        {"log_every", [&](const std::string& v) { cfg.schedule.log_every = parse_number<std::size_t>(v); }},
        {"shuffle_seed", [&](const std::string& v) { cfg.schedule.shuffle_seed = parse_number<std::uint64_t>(v); }},
        {"dropout_seed", [&](const std::string& v) { cfg.schedule.dropout_seed = parse_number<std::uint64_t>(v); }},
        {"init_seed", [&](const std::string& v) { cfg.init_seed = parse_number<std::uint64_t>(v); }},
        {"learning_rate", [&](const std::string& v) { cfg.adam.learning_rate = parse_real(v); }},
        {"beta1", [&](const std::string& v) { cfg.adam.beta1 = parse_real(v); }},
        {"beta2", [&](const std::string& v) { cfg.adam.beta2 = parse_real(v); }},
        {"epsilon", [&](const std::string& v) { cfg.adam.epsilon = parse_real(v); }},
        {"limit", [&](const std::string& v) { cfg.limit = parse_number<std::size_t>(v); }},
        {"gradcheck_tolerance", [&](const std::string& v) { cfg.gradcheck_tolerance = parse_real(v); }},
        {"gradcheck_batch", [&](const std::string& v) { cfg.gradcheck_batch = parse_number<std::size_t>(v); }},
        {"gradcheck_seed", [&](const std::string& v) { cfg.gradcheck_seed = parse_number<std::uint64_t>(v); }},
    };

    std::vector<std::string> problems;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = "line " + std::to_string(lineno);
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            problems.push_back(where + ": expected 'key = value'");
            continue;
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = setters.find(key);
        if (it == setters.end()) {
            problems.push_back(where + ": unknown key '" + key + "'");
            continue;
        }
        try {
            it->second(value);
        } catch (const Error& e) {
            problems.push_back(where + ": " + key + ": " + e.what());
        }
    }

    if (cfg.schedule.epochs == 0) {
        problems.push_back("epochs: must be >= 1");
    }
    if (cfg.schedule.batch_size == 0) {
        problems.push_back("batch_size: must be >= 1");
    }
    if (!(cfg.adam.learning_rate >= 0.0)) {
        problems.push_back("learning_rate: must be >= 0");
    }
    if (!(cfg.adam.beta1 >= 0.0 && cfg.adam.beta1 < 1.0)) {
        problems.push_back("beta1: must be in [0, 1)");
    }
    if (!(cfg.adam.beta2 >= 0.0 && cfg.adam.beta2 < 1.0)) {
        problems.push_back("beta2: must be in [0, 1)");
    }
    if (!(cfg.adam.epsilon > 0.0)) {
        problems.push_back("epsilon: must be > 0");
    }
    if (cfg.gradcheck_batch == 0) {
        problems.push_back("gradcheck_batch: must be >= 1");
    }
    try {
        trace_shapes(cfg.model);
    } catch (const ConfigError& e) {
        problems.push_back(std::string("model: ") + e.what());
    }

    if (!problems.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& p : problems) {
            msg += "\n  " + p;
        }
        throw ConfigError(msg);
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str(), path.parent_path());
}

} // namespace htr
