#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>

#include "htr/checkpoint.hpp"
#include "htr/csv.hpp"
#include "htr/dataset.hpp"
#include "htr/metrics.hpp"
#include "htr/pgm.hpp"
#include "htr/run_config.hpp"
#include "htr/training.hpp"

namespace htr::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kImagesFile = "images.idx";
constexpr const char* kLabelsFile = "labels.idx";
constexpr const char* kSplitFile = "split.txt";
constexpr const char* kCheckpointFile = "checkpoint.htrc";
constexpr const char* kCurvesFile = "curves.csv";

void require_file(const fs::path& path, const char* what) {
    if (!fs::is_regular_file(path)) {
        throw Error(std::string(what) + " not found: " + path.string());
    }
}

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    return out;
}

std::vector<std::string> resolve_label_map(const std::optional<fs::path>& path, std::size_t classes) {
    return path ? read_label_map(*path, classes) : default_label_map(classes);
}

void check_labels(std::span<const std::uint8_t> labels, std::size_t classes, const fs::path& source) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= classes) {
            throw CompatibilityError(source.string() + ": label " + std::to_string(labels[i]) + " at row " +
                                     std::to_string(i) + " exceeds " + std::to_string(classes) + " classes");
        }
    }
}

} // namespace

int run_prepare(const PrepareOptions& opts) {
    require_file(opts.images, "image file");
    require_file(opts.labels, "label file");
    const RawImages raw = read_idx_images(opts.images);
    const std::vector<std::uint8_t> labels = read_idx_labels(opts.labels);
    check_labels(labels, opts.classes, opts.labels);
    const LabeledDataset data =
        preprocess(raw, labels, resolve_label_map(opts.label_map, opts.classes), {opts.size, opts.invert});

    fs::create_directories(opts.out);
    write_idx_images(opts.out / kImagesFile, quantize(data));
    write_idx_labels(opts.out / kLabelsFile, labels);
    const SplitIndices s = data.size() >= 2 ? split(data.size(), opts.train_ratio, opts.seed) : SplitIndices{};
    write_split(opts.out / kSplitFile, s);
    std::cout << "N=" << data.size() << " train=" << s.train.size() << " test=" << s.test.size() << '\n';
    return 0;
}

int run_train(const TrainOptions& opts) {
    RunConfig cfg = load_run_config(opts.config);
    cfg.deterministic = cfg.deterministic || opts.deterministic;
    if (cfg.data_dir.empty()) {
        throw ConfigError("invalid configuration:\n  data: required for training");
    }
    if (cfg.model.input.height != cfg.model.input.width || cfg.model.input.channels != 1) {
        throw ConfigError("training data must be single-channel square images");
    }
    const fs::path images = cfg.data_dir / kImagesFile;
    const fs::path labels_path = cfg.data_dir / kLabelsFile;
    require_file(images, "prepared image file");
    require_file(labels_path, "prepared label file");
    require_file(cfg.data_dir / kSplitFile, "split file");

    const RawImages raw = read_idx_images(images);
    const std::vector<std::uint8_t> labels = read_idx_labels(labels_path);
    check_labels(labels, cfg.model.classes, labels_path);
    const LabeledDataset data = preprocess(raw, labels, resolve_label_map(cfg.label_map, cfg.model.classes),
                                           {cfg.model.input.height, false});
    SplitIndices s = read_split(cfg.data_dir / kSplitFile, data.size());
    if (cfg.limit > 0 && s.train.size() > cfg.limit) {
        s.train.resize(cfg.limit);
    }

    Model<float> model = Model<float>::build(cfg.model, cfg.init_seed);
    std::cerr << "training " << format_conv_blocks(cfg.model.conv_blocks) << " on " << s.train.size()
              << " samples, " << steps_per_epoch(s.train.size(), cfg.schedule.batch_size) << " steps/epoch\n";
    const auto curve = train(model, data, s, cfg.schedule, cfg.adam, [](const CurvePoint& p) {
        if (p.val_accuracy) {
            std::cerr << "epoch " << p.epoch << " step " << p.step << " loss " << format_real(p.train_loss)
                      << " acc " << format_real(p.train_accuracy) << " val_acc " << format_real(*p.val_accuracy)
                      << '\n';
        }
    });

    fs::create_directories(opts.out);
    {
        auto out = open_output(opts.out / kCurvesFile);
        write_curves_csv(out, curve);
    }
    save_checkpoint(opts.out / kCheckpointFile, model.params());
    const CurvePoint& last = curve.back();
    std::cout << "steps_per_epoch=" << steps_per_epoch(s.train.size(), cfg.schedule.batch_size)
              << " final_train_loss=" << format_real(last.train_loss)
              << " final_train_acc=" << format_real(last.train_accuracy);
    if (last.val_accuracy) {
        std::cout << " final_val_acc=" << format_real(*last.val_accuracy);
    }
    std::cout << '\n';
    return 0;
}

int run_eval(const EvalOptions& opts) {
    require_file(opts.checkpoint, "checkpoint");
    require_file(opts.images, "image file");
    require_file(opts.labels, "label file");
    Model<float> model = load_model(opts.checkpoint, InputShape{1, opts.size, opts.size});
    const RawImages raw = read_idx_images(opts.images);
    const std::vector<std::uint8_t> labels = read_idx_labels(opts.labels);
    check_labels(labels, model.class_count(), opts.labels);
    const LabeledDataset data =
        preprocess(raw, labels, resolve_label_map(opts.label_map, model.class_count()), {opts.size, opts.invert});
    if (data.empty()) {
        throw InputError("evaluation set is empty");
    }
    std::vector<std::size_t> rows(data.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    const Tensor probs = predict(model, data, rows);
    const EvalReport report = evaluate_predictions(probs, data.labels(), data.label_map());

    fs::create_directories(opts.out / "roc");
    {
        auto out = open_output(opts.out / "predictions.csv");
        write_predictions_csv(out, probs, data.labels());
    }
    {
        auto out = open_output(opts.out / "confusion.csv");
        write_confusion_csv(out, report.confusion);
    }
    {
        auto out = open_output(opts.out / "auc.csv");
        write_auc_csv(out, report);
    }
    {
        auto out = open_output(opts.out / "class_metrics.csv");
        write_class_metrics_csv(out, report);
    }
    for (std::size_t c = 0; c < report.classes.size(); ++c) {
        if (report.classes[c].roc.empty()) {
            std::cerr << "class " << c << " (" << report.classes[c].label
                      << "): ROC undefined, needs positive and negative samples\n";
            continue;
        }
        auto out = open_output(opts.out / "roc" / ("class_" + std::to_string(c) + ".csv"));
        write_roc_csv(out, c, report.classes[c].roc);
    }
    std::cout << "accuracy=" << format_real(report.accuracy) << " samples=" << data.size() << '\n';
    return 0;
}

int run_predict(const PredictOptions& opts) {
    require_file(opts.checkpoint, "checkpoint");
    require_file(opts.image, "image");
    Model<float> model = load_model(opts.checkpoint, InputShape{1, opts.size, opts.size});
    const RawImages raw = read_pgm(opts.image);
    const auto map = resolve_label_map(opts.label_map, model.class_count());
    const std::vector<float> pixels = preprocess_image(raw.image(0), raw.height, raw.width, {opts.size, opts.invert});
    const Tensor probs = model.forward(Tensor(Shape{1, 1, opts.size, opts.size}, pixels), false);

    std::vector<std::size_t> order(model.class_count());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    std::cout << "predicted=" << map[order[0]] << '\n';
    for (std::size_t k = 0; k < std::min(opts.topk, order.size()); ++k) {
        std::cout << map[order[k]] << ':' << format_real(probs[order[k]]) << '\n';
    }
    return 0;
}

int run_gradcheck(const GradcheckOptions& opts) {
    const RunConfig cfg = load_run_config(opts.config);
    Model<double> model = Model<double>::build(cfg.model, cfg.init_seed);
    const InputShape in = cfg.model.input;
    std::mt19937_64 rng(cfg.gradcheck_seed);
    std::uniform_real_distribution<double> pixel(0.0, 1.0);
    Tensor64 batch(Shape{cfg.gradcheck_batch, in.channels, in.height, in.width});
    for (auto& v : batch.data()) {
        v = pixel(rng);
    }
    // Random biases keep ReLUs off their kink when a whole layer starts dead.
    std::uniform_real_distribution<double> bias(-0.1, 0.1);
    for (auto& c : model.params().conv) {
        for (auto& v : c.bias.data()) {
            v = bias(rng);
        }
    }
    for (auto& d : model.params().dense) {
        for (auto& v : d.bias.data()) {
            v = bias(rng);
        }
    }
    std::vector<std::size_t> targets(cfg.gradcheck_batch);
    for (auto& t : targets) {
        t = std::uniform_int_distribution<std::size_t>(0, cfg.model.classes - 1)(rng);
    }
    const GradientCheckReport report =
        gradient_check(model, batch, one_hot<double>(targets, cfg.model.classes), cfg.gradcheck_seed);
    for (const BlockError& b : report.blocks) {
        std::cout << b.name << " max_rel_error=" << format_real(b.max_relative_error) << '\n';
    }
    const bool ok = report.passed(cfg.gradcheck_tolerance);
    std::cout << (ok ? "PASS" : "FAIL") << " max_rel_error=" << format_real(report.max_error())
              << " tolerance=" << format_real(cfg.gradcheck_tolerance) << '\n';
    return ok ? 0 : 1;
}

} // namespace htr::cli
