#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "htr/dataset.hpp"
#include "htr/model.hpp"

namespace htr {

// Mean of -log p[target] over the batch; p is clamped to >= 1e-12. Rows of
// probs must sum to 1 within 1e-5 and targets must be one-hot.
template <typename T>
double cross_entropy(const BasicTensor<T>& probs, const BasicTensor<T>& one_hot);

struct AdamConfig {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
    AdamState(const Parameters<T>& params, AdamConfig cfg);

    AdamConfig config;
    std::vector<BasicTensor<T>> m; // first moments, one per parameter block
    std::vector<BasicTensor<T>> v; // second moments
    std::uint64_t step = 0;
};

// One bias-corrected Adam update; increments state.step first.
template <typename T>
void adam_step(Parameters<T>& params, const Parameters<T>& grads, AdamState<T>& state);

struct TrainSchedule {
    std::size_t epochs = 20;
    std::size_t batch_size = 200;
    std::uint64_t shuffle_seed = 0;
    std::uint64_t dropout_seed = 0;
    std::size_t log_every = 1; // steps between train-metric rows; 0 logs epoch ends only
};

// Train metrics average the steps since the previous row. Validation metrics
// are present on the last row of each epoch when a validation set exists.
struct CurvePoint {
    std::size_t epoch = 0; // 1-based
    std::size_t step = 0;  // global, 1-based
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    std::optional<double> val_loss;
    std::optional<double> val_accuracy;

    friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

// ceil(train_size / batch_size); the final batch may be partial.
std::size_t steps_per_epoch(std::size_t train_size, std::size_t batch_size);

// Minibatch Adam on split.train with validation on split.test. The train order
// is reshuffled every epoch from shuffle_seed.
std::vector<CurvePoint> train(Model<float>& model, const LabeledDataset& data, const SplitIndices& split,
                              const TrainSchedule& schedule, const AdamConfig& adam,
                              const std::function<void(const CurvePoint&)>& on_log = {});

struct Evaluation {
    double loss = 0.0;
    double accuracy = 0.0;
};

// Eval-mode probabilities for the given rows, (N, classes).
Tensor predict(Model<float>& model, const LabeledDataset& data, std::span<const std::size_t> indices,
               std::size_t batch_size = 256);
Evaluation evaluate(Model<float>& model, const LabeledDataset& data, std::span<const std::size_t> indices,
                    std::size_t batch_size = 256);

std::size_t argmax_row(const Tensor& probs, std::size_t row);

// Header epoch,step,train_loss,train_acc,val_loss,val_acc; empty fields when
// a row carries no validation metrics.
void write_curves_csv(std::ostream& out, std::span<const CurvePoint> curve);

// |a - n| / max(1e-8, |a| + |n|)
double relative_error(double analytic, double numeric);

struct BlockError {
    std::string name;
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

struct GradientCheckReport {
    std::vector<BlockError> blocks;

    double max_error() const;
    bool passed(double tolerance) const { return max_error() <= tolerance; }
};

// Central differences (f(t+h) - f(t-h)) / 2h for every entry of every block,
// compared against `analytic`. `loss` must re-evaluate with the current values.
GradientCheckReport compare_gradients(const std::vector<BasicTensor<double>*>& params,
                                      const std::vector<const BasicTensor<double>*>& analytic,
                                      const std::vector<std::string>& names, const std::function<double()>& loss,
                                      double step = 1e-5);

// Whole-model check of mean cross-entropy in training mode with a fixed
// dropout seed. `tamper` may modify the analytic gradients before comparison.
GradientCheckReport gradient_check(Model<double>& model, const Tensor64& batch, const Tensor64& one_hot,
                                   std::uint64_t dropout_seed = 0, double step = 1e-5,
                                   const std::function<void(Parameters<double>&)>& tamper = {});

} // namespace htr
