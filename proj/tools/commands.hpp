#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

namespace htr::cli {

struct PrepareOptions {
    std::filesystem::path images;
    std::filesystem::path labels;
    std::filesystem::path out;
    std::optional<std::filesystem::path> label_map;
    std::size_t classes = 47;
    std::size_t size = 32;
    double train_ratio = 0.7;
    std::uint64_t seed = 42;
    bool invert = false;
};

struct TrainOptions {
    std::filesystem::path config;
    std::filesystem::path out;
    bool deterministic = false;
};

struct EvalOptions {
    std::filesystem::path checkpoint;
    std::filesystem::path images;
    std::filesystem::path labels;
    std::filesystem::path out;
    std::optional<std::filesystem::path> label_map;
    std::size_t size = 32;
    bool invert = false;
};

struct PredictOptions {
    std::filesystem::path checkpoint;
    std::filesystem::path image;
    std::optional<std::filesystem::path> label_map;
    std::size_t topk = 5;
    std::size_t size = 32;
    bool invert = false;
};

struct GradcheckOptions {
    std::filesystem::path config;
};

int run_prepare(const PrepareOptions& opts);
int run_train(const TrainOptions& opts);
int run_eval(const EvalOptions& opts);
int run_predict(const PredictOptions& opts);
int run_gradcheck(const GradcheckOptions& opts);

} // namespace htr::cli
