#include "htr/training.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <utility>

#include "htr/csv.hpp"

namespace htr {

template <typename T>
double cross_entropy(const BasicTensor<T>& probs, const BasicTensor<T>& one_hot) {
    if (probs.shape() != one_hot.shape()) {
        throw ShapeError("cross_entropy: probabilities " + probs.shape().to_string() + " vs targets " +
                         one_hot.shape().to_string());
    }
    const std::vector<std::size_t> targets = one_hot_targets(one_hot);
    const std::size_t rows = probs.dim(0), classes = probs.dim(1);
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        double row_sum = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            row_sum += probs[r * classes + c];
        }
        if (std::abs(row_sum - 1.0) > 1e-5) {
            throw InputError("probability row " + std::to_string(r) + " sums to " + format_real(row_sum));
        }
        const double p = std::max(static_cast<double>(probs[r * classes + targets[r]]), 1e-12);
        total -= std::log(p);
    }
    return total / static_cast<double>(rows);
}

template <typename T>
AdamState<T>::AdamState(const Parameters<T>& params, AdamConfig cfg) : config(cfg) {
    for (const auto* block : params.blocks()) {
        m.emplace_back(block->shape());
        v.emplace_back(block->shape());
    }
}

template <typename T>
void adam_step(Parameters<T>& params, const Parameters<T>& grads, AdamState<T>& state) {
    auto p = params.blocks();
    auto g = grads.blocks();
    if (p.size() != g.size() || p.size() != state.m.size()) {
        throw ShapeError("adam_step: parameter, gradient and state block counts differ");
    }
    for (std::size_t b = 0; b < p.size(); ++b) {
        if (p[b]->shape() != g[b]->shape() || p[b]->shape() != state.m[b].shape()) {
            throw ShapeError("adam_step: block " + std::to_string(b) + " shape mismatch");
        }
    }
    const AdamConfig& c = state.config;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t b = 0; b < p.size(); ++b) {
        auto theta = p[b]->data();
        auto grad = g[b]->data();
        auto m = state.m[b].data();
        auto v = state.v[b].data();
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double gi = grad[i];
            const double mi = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
            const double vi = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double m_hat = mi / correction1;
            const double v_hat = vi / correction2;
            theta[i] = static_cast<T>(theta[i] - c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon));
        }
    }
}

std::size_t steps_per_epoch(std::size_t train_size, std::size_t batch_size) {
    if (batch_size == 0) {
        throw InputError("batch size must be >= 1");
    }
    return (train_size + batch_size - 1) / batch_size;
}

std::size_t argmax_row(const Tensor& probs, std::size_t row) {
    const std::size_t classes = probs.dim(1);
    auto begin = probs.data().begin() + row * classes;
    return static_cast<std::size_t>(std::max_element(begin, begin + classes) - begin);
}

Tensor predict(Model<float>& model, const LabeledDataset& data, std::span<const std::size_t> indices,
               std::size_t batch_size) {
    if (indices.empty()) {
        throw InputError("predict needs at least one sample");
    }
    const std::size_t classes = model.class_count();
    Tensor out(Shape{indices.size(), classes});
    for (std::size_t start = 0; start < indices.size(); start += batch_size) {
        const auto rows = indices.subspan(start, std::min(batch_size, indices.size() - start));
        const Tensor probs = model.forward(data.batch(rows), false);
        std::copy(probs.data().begin(), probs.data().end(), out.data().begin() + start * classes);
    }
    model.clear_cache();
    return out;
}

Evaluation evaluate(Model<float>& model, const LabeledDataset& data, std::span<const std::size_t> indices,
                    std::size_t batch_size) {
    const Tensor probs = predict(model, data, indices, batch_size);
    const std::vector<std::size_t> labels = data.labels_of(indices);
    const std::size_t correct = [&] {
        std::size_t n = 0;
        for (std::size_t r = 0; r < labels.size(); ++r) {
            n += argmax_row(probs, r) == labels[r];
        }
        return n;
    }();
    return {cross_entropy(probs, one_hot<float>(labels, model.class_count())),
            static_cast<double>(correct) / static_cast<double>(labels.size())};
}

std::vector<CurvePoint> train(Model<float>& model, const LabeledDataset& data, const SplitIndices& split,
                              const TrainSchedule& schedule, const AdamConfig& adam,
                              const std::function<void(const CurvePoint&)>& on_log) {
    if (data.empty() || split.train.empty()) {
        throw InputError("training set is empty");
    }
    if (schedule.epochs == 0 || schedule.batch_size == 0) {
        throw InputError("epochs and batch size must be >= 1");
    }
    if (schedule.batch_size > split.train.size()) {
        throw InputError("batch size " + std::to_string(schedule.batch_size) + " exceeds training set of " +
                         std::to_string(split.train.size()));
    }
    if (data.classes() != model.class_count()) {
        throw CompatibilityError("dataset has " + std::to_string(data.classes()) + " classes, model " +
                                 std::to_string(model.class_count()));
    }

    const std::size_t steps = steps_per_epoch(split.train.size(), schedule.batch_size);
    AdamState<float> state(model.params(), adam);
    std::mt19937_64 shuffle_rng(schedule.shuffle_seed);
    std::vector<std::size_t> order = split.train;
    std::vector<CurvePoint> curve;
    std::size_t global_step = 0;

    for (std::size_t epoch = 1; epoch <= schedule.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double window_loss = 0.0;
        std::size_t window_correct = 0, window_samples = 0, window_steps = 0;
        for (std::size_t s = 0; s < steps; ++s) {
            ++global_step;
            const std::size_t start = s * schedule.batch_size;
            const std::span<const std::size_t> rows(order.data() + start,
                                                    std::min(schedule.batch_size, order.size() - start));
            const std::vector<std::size_t> labels = data.labels_of(rows);
            const Tensor targets = one_hot<float>(labels, model.class_count());
            const Tensor probs = model.forward(data.batch(rows), true, schedule.dropout_seed + global_step);
            window_loss += cross_entropy(probs, targets);
            for (std::size_t r = 0; r < labels.size(); ++r) {
                window_correct += argmax_row(probs, r) == labels[r];
            }
            window_samples += labels.size();
            ++window_steps;

            const Parameters<float> grads = model.backward(targets);
            adam_step(model.params(), grads, state);

            const bool epoch_end = s + 1 == steps;
            if (epoch_end || (schedule.log_every > 0 && global_step % schedule.log_every == 0)) {
                CurvePoint point{epoch, global_step, window_loss / double(window_steps),
                                 double(window_correct) / double(window_samples), std::nullopt, std::nullopt};
                if (epoch_end && !split.test.empty()) {
                    const Evaluation val = evaluate(model, data, split.test);
                    point.val_loss = val.loss;
                    point.val_accuracy = val.accuracy;
                }
                curve.push_back(point);
                if (on_log) {
                    on_log(point);
                }
                window_loss = 0.0;
                window_correct = window_samples = window_steps = 0;
            }
        }
    }
    model.clear_cache();
    return curve;
}

void write_curves_csv(std::ostream& out, std::span<const CurvePoint> curve) {
    out << "epoch,step,train_loss,train_acc,val_loss,val_acc\n";
    for (const CurvePoint& p : curve) {
        out << p.epoch << ',' << p.step << ',' << format_real(p.train_loss) << ',' << format_real(p.train_accuracy)
            << ',' << (p.val_loss ? format_real(*p.val_loss) : "") << ','
            << (p.val_accuracy ? format_real(*p.val_accuracy) : "") << '\n';
    }
}

double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

double GradientCheckReport::max_error() const {
    double worst = 0.0;
    for (const auto& b : blocks) {
        worst = std::max(worst, b.max_relative_error);
    }
    return worst;
}

GradientCheckReport compare_gradients(const std::vector<BasicTensor<double>*>& params,
                                      const std::vector<const BasicTensor<double>*>& analytic,
                                      const std::vector<std::string>& names, const std::function<double()>& loss,
                                      double step) {
    if (params.size() != analytic.size() || params.size() != names.size()) {
        throw InputError("compare_gradients: block lists differ in length");
    }
    GradientCheckReport report;
    for (std::size_t b = 0; b < params.size(); ++b) {
        if (params[b]->shape() != analytic[b]->shape()) {
            throw ShapeError("compare_gradients: block " + names[b] + " shape mismatch");
        }
        BlockError err{names[b]};
        auto theta = params[b]->data();
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double saved = theta[i];
            theta[i] = saved + step;
            const double up = loss();
            theta[i] = saved - step;
            const double down = loss();
            theta[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double a = (*analytic[b])[i];
            const double e = relative_error(a, numeric);
            if (i == 0 || e > err.max_relative_error) {
                err.max_relative_error = e;
                err.worst_index = i;
                err.analytic = a;
                err.numeric = numeric;
            }
        }
        report.blocks.push_back(err);
    }
    return report;
}

GradientCheckReport gradient_check(Model<double>& model, const Tensor64& batch, const Tensor64& one_hot,
                                   std::uint64_t dropout_seed, double step,
                                   const std::function<void(Parameters<double>&)>& tamper) {
    model.forward(batch, true, dropout_seed);
    Parameters<double> analytic = model.backward(one_hot);
    if (tamper) {
        tamper(analytic);
    }
    auto loss = [&] { return cross_entropy(model.forward(batch, true, dropout_seed), one_hot); };
    GradientCheckReport report = compare_gradients(model.params().blocks(), std::as_const(analytic).blocks(),
                                                   model.params().block_names(), loss, step);
    model.clear_cache();
    return report;
}

template double cross_entropy(const BasicTensor<float>&, const BasicTensor<float>&);
template double cross_entropy(const BasicTensor<double>&, const BasicTensor<double>&);
template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(Parameters<float>&, const Parameters<float>&, AdamState<float>&);
template void adam_step(Parameters<double>&, const Parameters<double>&, AdamState<double>&);

} // namespace htr
