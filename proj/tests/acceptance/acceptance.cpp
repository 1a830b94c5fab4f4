// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "htr/checkpoint.hpp"
#include "htr/csv.hpp"
#include "htr/dataset.hpp"
#include "htr/metrics.hpp"
#include "htr/pgm.hpp"
#include "htr/training.hpp"
#include "oracles.hpp"
#include "synthetic_digits.hpp"

using namespace htr;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::mt19937_64& rng() {
    static std::mt19937_64 g(20240917);
    return g;
}

Tensor64 random_tensor(const Shape& s, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    Tensor64 t(s);
    for (auto& v : t.data()) {
        v = d(rng());
    }
    return t;
}

std::size_t pick(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng());
}

std::string fmt(double v) {
    return format_real(v);
}

// Finite-difference check of sum(w * layer(inputs)) for one layer.
double layer_error(std::vector<Tensor64*> wrt, const std::function<Tensor64()>& forward,
                   const std::function<std::vector<Tensor64>(const Tensor64&)>& backward) {
    const Tensor64 out = forward();
    const Tensor64 w = random_tensor(out.shape());
    const std::vector<Tensor64> grads = backward(w);
    std::vector<const Tensor64*> analytic;
    std::vector<std::string> names;
    for (std::size_t i = 0; i < grads.size(); ++i) {
        analytic.push_back(&grads[i]);
        names.push_back("g" + std::to_string(i));
    }
    return compare_gradients(wrt, analytic, names, [&] { return oracle::weighted_sum(forward(), w); })
        .max_error();
}

Outcome gradient_correctness() {
    double worst = 0.0;
    std::ostringstream detail;
    auto record = [&](const char* name, double e) {
        worst = std::max(worst, e);
        detail << name << '=' << fmt(e) << ' ';
    };

    {
        Tensor64 x = random_tensor(Shape{3, 7, 6});
        ConvParams<double> k{random_tensor(Shape{4, 3, 3, 2}), random_tensor(Shape{4})};
        record("conv", layer_error({&x, &k.kernels, &k.bias}, [&] { return conv2d_forward(x, k); },
                                   [&](const Tensor64& up) {
                                       auto g = conv2d_backward(x, k, up);
                                       return std::vector<Tensor64>{g.input_grad, g.param_grads.kernels,
                                                                    g.param_grads.bias};
                                   }));
    }
    {
        // Distinct, well-separated values keep every max window stable under the step.
        Tensor64 x(Shape{2, 6, 6});
        std::vector<double> v(x.size());
        std::iota(v.begin(), v.end(), 0.0);
        std::shuffle(v.begin(), v.end(), rng());
        for (std::size_t i = 0; i < v.size(); ++i) {
            x[i] = v[i] * 0.01;
        }
        for (PoolMode mode : {PoolMode::max, PoolMode::average}) {
            record(mode == PoolMode::max ? "maxpool" : "avgpool",
                   layer_error({&x}, [&] { return pool2d_forward(x, mode).output; },
                               [&](const Tensor64& up) {
                                   return std::vector<Tensor64>{pool2d_backward(pool2d_forward(x, mode), up)};
                               }));
        }
    }
    {
        Tensor64 x = random_tensor(Shape{40});
        for (auto& v : x.data()) {
            v += v >= 0 ? 0.01 : -0.01;
        }
        record("relu", layer_error({&x}, [&] { return relu(x); },
                                   [&](const Tensor64& up) { return std::vector<Tensor64>{relu_backward(x, up)}; }));
        const DropoutSpec spec{0.5, 99};
        record("dropout", layer_error({&x}, [&] { return dropout_forward(x, spec, true).output; },
                                      [&](const Tensor64& up) {
                                          return std::vector<Tensor64>{
                                              dropout_backward(dropout_forward(x, spec, true).mask, up)};
                                      }));
    }
    {
        Tensor64 x = random_tensor(Shape{9});
        DenseParams<double> p{random_tensor(Shape{5, 9}), random_tensor(Shape{5})};
        record("dense", layer_error({&x, &p.weight, &p.bias}, [&] { return dense_forward(x, p); },
                                    [&](const Tensor64& up) {
                                        auto g = dense_backward(x, p, up);
                                        return std::vector<Tensor64>{g.input_grad, g.param_grads.weight,
                                                                     g.param_grads.bias};
                                    }));
    }

    ModelConfig tiny;
    tiny.input = {1, 8, 8};
    tiny.conv_blocks = {{2, 3}};
    tiny.dense_units = {4};
    tiny.classes = 3;
    Model<double> model = Model<double>::build(tiny, 5);
    // Nonzero biases keep hidden ReLUs off their kink when conv features are dead.
    for (auto* bias : {&model.params().conv[0].bias, &model.params().dense[0].bias, &model.params().dense[1].bias}) {
        *bias = random_tensor(bias->shape(), -0.1, 0.1);
    }
    const Tensor64 batch = random_tensor(Shape{2, 1, 8, 8}, 0.0, 1.0);
    const std::vector<std::size_t> labels{0, 2};
    const Tensor64 targets = one_hot<double>(labels, 3);
    record("model", gradient_check(model, batch, targets, 11).max_error());

    const double planted = gradient_check(model, batch, targets, 11, 1e-5, [](Parameters<double>& g) {
                               for (auto& v : g.dense[0].weight.data()) {
                                   v *= 1.1;
                               }
                           }).max_error();
    detail << "planted_bug=" << fmt(planted);
    return {worst <= 1e-4 && planted > 1e-4, detail.str()};
}

Outcome conv_oracle() {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t c = pick(1, 8), o = pick(1, 8), kh = pick(1, 5), kw = pick(1, 5);
        const std::size_t h = kh + pick(0, 12), w = kw + pick(0, 12);
        const Tensor x = random_tensor(Shape{c, h, w}).cast<float>();
        const ConvParams<float> k{random_tensor(Shape{o, c, kh, kw}).cast<float>(),
                                  random_tensor(Shape{o}).cast<float>()};
        const Tensor fast = conv2d_forward(x, k);
        const Tensor64 ref = oracle::conv2d_direct(x.cast<double>(), k.cast<double>());
        for (std::size_t i = 0; i < fast.size(); ++i) {
            worst = std::max(worst, std::abs(fast[i] - ref[i]) / std::max(1.0, std::abs(ref[i])));
        }
    }
    return {worst <= 1e-5, "max_rel_diff=" + fmt(worst) + " over 100 shapes"};
}

Outcome auc_oracle() {
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = pick(2, 200);
        std::vector<double> scores(n);
        auto flags = std::make_unique<bool[]>(n);
        const double quantum = trial % 2 ? 0.1 : 1e-6; // odd trials carry many ties
        for (std::size_t i = 0; i < n; ++i) {
            flags[i] = i < 1 || (i > 1 && rng()() % 2);
            scores[i] = std::round(random_tensor(Shape{1})[0] / quantum) * quantum + (flags[i] ? 0.3 : 0.0);
        }
        const std::span<const bool> pos(flags.get(), n);
        worst = std::max(worst, std::abs(auc(roc_curve(scores, pos)) - oracle::auc_rank(scores, pos)));
    }
    return {worst <= 1e-12, "max_abs_diff=" + fmt(worst) + " over 50 instances"};
}

Outcome split_arithmetic() {
    const SplitIndices s = split(101784, 0.7, 42);
    return {s.train.size() == 71249 && s.test.size() == 30535,
            "train=" + std::to_string(s.train.size()) + " test=" + std::to_string(s.test.size())};
}

Outcome steps_consistency() {
    const std::size_t steps = steps_per_epoch(71249, 200);
    return {steps == 357, "steps_per_epoch=" + std::to_string(steps)};
}

Outcome desk_learning() {
    const auto start = std::chrono::steady_clock::now();
    const auto set = testing::synthetic_digits(2500, 2024);
    const LabeledDataset data = preprocess(set.images, set.labels, default_label_map(10));
    SplitIndices s;
    for (std::size_t i = 0; i < 2500; ++i) {
        (i < 2000 ? s.train : s.test).push_back(i);
    }
    Model<float> model = Model<float>::build(ModelConfig::desk(10), 1);
    TrainSchedule sched;
    sched.epochs = 10;
    sched.batch_size = 200;
    sched.log_every = 0;
    train(model, data, s, sched, AdamConfig{});
    const double acc = evaluate(model, data, s.test).accuracy;
    const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;

    // Full-size architecture: one forward/backward at batch 2.
    Model<float> big = Model<float>::build(ModelConfig::full(), 3);
    const std::vector<std::size_t> rows{0, 1};
    const Tensor probs = big.forward(data.batch(rows), true, 5);
    const Parameters<float> g = big.backward(one_hot<float>(data.labels_of(rows), 47));
    bool shapes_ok = big.flatten_width() == 1024 && probs.shape() == Shape{2, 47};
    const auto pb = big.params().blocks();
    const auto gb = g.blocks();
    shapes_ok = shapes_ok && pb.size() == gb.size();
    for (std::size_t i = 0; shapes_ok && i < pb.size(); ++i) {
        shapes_ok = pb[i]->shape() == gb[i]->shape();
    }
    return {acc >= 0.85 && minutes <= 10.0 && shapes_ok,
            "held_out_acc=" + fmt(acc) + " train_minutes=" + fmt(std::round(minutes * 100) / 100) +
                " full_flatten=" + std::to_string(big.flatten_width()) + (shapes_ok ? " shapes_ok" : " shapes_bad")};
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string("\"") + HTR_CLI_PATH + "\" " + args + " >>\"" + log.string() + "\" 2>&1";
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string q(const fs::path& p) {
    return "\"" + p.string() + "\"";
}

fs::path scratch(const char* name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Outcome determinism() {
    const fs::path dir = scratch("htr_acceptance_determinism");
    const auto set = testing::synthetic_digits(300, 77, {32, 6.0});
    write_idx_images(dir / "images.idx", set.images);
    write_idx_labels(dir / "labels.idx", set.labels);
    std::ofstream(dir / "run.cfg") << "data = prep\nclasses = 10\nepochs = 2\nbatch_size = 32\n";
    const fs::path log = dir / "log.txt";
    bool ok = run_cli("prepare --classes 10 --images " + q(dir / "images.idx") + " --labels " +
                          q(dir / "labels.idx") + " --out " + q(dir / "prep"),
                      log) == 0;
    ok = ok && run_cli("train --deterministic --config " + q(dir / "run.cfg") + " --out " + q(dir / "a"), log) == 0;
    ok = ok && run_cli("train --deterministic --config " + q(dir / "run.cfg") + " --out " + q(dir / "b"), log) == 0;
    const bool curves = ok && slurp(dir / "a" / "curves.csv") == slurp(dir / "b" / "curves.csv") &&
                        !slurp(dir / "a" / "curves.csv").empty();
    const bool ckpt = ok && slurp(dir / "a" / "checkpoint.htrc") == slurp(dir / "b" / "checkpoint.htrc");
    std::string detail = std::string("curves_identical=") + (curves ? "yes" : "no") +
                         " checkpoints_identical=" + (ckpt ? "yes" : "no");
    if (!ok) {
        detail += " cli_failed: " + slurp(log);
    } else {
        fs::remove_all(dir);
    }
    return {curves && ckpt, detail};
}

Outcome checkpoint_round_trip() {
    Model<float> model = Model<float>::build(ModelConfig::desk(), 8);
    const fs::path dir = scratch("htr_acceptance_checkpoint");
    save_checkpoint(dir / "m.htrc", model.params());
    Model<float> restored = load_model(dir / "m.htrc");
    const Tensor batch = random_tensor(Shape{4, 1, 32, 32}, 0.0, 1.0).cast<float>();
    const bool same = model.forward(batch, false) == restored.forward(batch, false);
    fs::remove_all(dir);
    return {same, same ? "predictions bitwise identical" : "predictions differ"};
}

Outcome softmax_analytics() {
    Tensor64 uniform = Tensor64::full(Shape{1, 47}, 1.0 / 47.0);
    Tensor64 target(Shape{1, 47});
    target[0] = 1.0;
    const double loss = cross_entropy(uniform, target);
    const bool exact = std::abs(loss - std::log(47.0)) <= 1e-6 && std::abs(loss - 3.8501) < 5e-5;

    const auto set = testing::synthetic_digits(100, 3, {32, 6.0});
    const LabeledDataset data = preprocess(set.images, set.labels, label_map_balanced47());
    std::vector<std::size_t> rows(100);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    Model<float> model = Model<float>::build(ModelConfig::desk(47), 2);
    const double initial = evaluate(model, data, rows).loss;
    const bool sane = std::abs(initial - std::log(47.0)) <= 0.2 * std::log(47.0);
    return {exact && sane, "uniform_loss=" + fmt(loss) + " initial_loss=" + fmt(initial)};
}

Outcome end_to_end() {
    const fs::path dir = scratch("htr_acceptance_e2e");
    const auto set = testing::synthetic_digits(200, 5, {64, 6.0});
    write_idx_images(dir / "images.idx", set.images);
    write_idx_labels(dir / "labels.idx", set.labels);
    write_pgm(dir / "sample.pgm", set.images.image(0), 64, 64);
    std::ofstream(dir / "run.cfg") << "data = prep\nclasses = 10\nepochs = 2\nbatch_size = 20\n";
    const fs::path log = dir / "log.txt";
    const fs::path ckpt = dir / "run" / "checkpoint.htrc";
    bool ok = run_cli("prepare --classes 10 --images " + q(dir / "images.idx") + " --labels " +
                          q(dir / "labels.idx") + " --out " + q(dir / "prep"),
                      log) == 0;
    ok = ok && run_cli("train --config " + q(dir / "run.cfg") + " --out " + q(dir / "run"), log) == 0;
    ok = ok && run_cli("eval --checkpoint " + q(ckpt) + " --images " + q(dir / "images.idx") + " --labels " +
                           q(dir / "labels.idx") + " --out " + q(dir / "report"),
                       log) == 0;
    ok = ok && run_cli("predict --checkpoint " + q(ckpt) + " --image " + q(dir / "sample.pgm"), log) == 0;
    std::vector<fs::path> expected = {dir / "run" / "curves.csv",         dir / "report" / "predictions.csv",
                                      dir / "report" / "confusion.csv",   dir / "report" / "auc.csv",
                                      dir / "report" / "class_metrics.csv"};
    for (int c = 0; c < 10; ++c) {
        expected.push_back(dir / "report" / "roc" / ("class_" + std::to_string(c) + ".csv"));
    }
    std::size_t present = 0;
    for (const auto& p : expected) {
        present += fs::is_regular_file(p) && fs::file_size(p) > 0;
    }
    std::string detail = "exit_ok=" + std::string(ok ? "yes" : "no") + " csvs=" + std::to_string(present) + "/" +
                         std::to_string(expected.size());
    if (!ok) {
        detail += " log: " + slurp(log);
    } else {
        fs::remove_all(dir);
    }
    return {ok && present == expected.size(), detail};
}

struct Criterion {
    int id;
    const char* name;
    double budget_seconds;
    Outcome (*run)();
};

} // namespace

int main() {
    const Criterion criteria[] = {
        {1, "gradient correctness", 30, gradient_correctness},
        {2, "convolution oracle equivalence", 30, conv_oracle},
        {3, "AUC oracle equivalence", 5, auc_oracle},
        {4, "split arithmetic", 1, split_arithmetic},
        {5, "steps per epoch", 1, steps_consistency},
        {6, "desk-scale learning", 600, desk_learning},
        {7, "determinism", 600, determinism},
        {8, "checkpoint round trip", 5, checkpoint_round_trip},
        {9, "softmax/cross-entropy analytics", 5, softmax_analytics},
        {10, "end-to-end smoke", 60, end_to_end},
    };
    int failures = 0;
    for (const Criterion& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (seconds > c.budget_seconds) {
            o.pass = false;
            o.detail += " over time budget";
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << " ("
                  << fmt(std::round(seconds * 100) / 100) << "s): " << o.detail << std::endl;
    }
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << '\n';
    return failures == 0 ? 0 : 1;
}
