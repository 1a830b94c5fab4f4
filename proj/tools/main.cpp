#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "htr/error.hpp"

int main(int argc, char** argv) {
    using namespace htr::cli;
    CLI::App app{"Handwritten character recognition: CNN training and evaluation"};
    app.require_subcommand(1);

    PrepareOptions prep;
    auto* prepare = app.add_subcommand("prepare", "Downsample an IDX image/label pair and write a train/test split");
    prepare->add_option("--images", prep.images, "IDX image file")->required();
    prepare->add_option("--labels", prep.labels, "IDX label file")->required();
    prepare->add_option("--out", prep.out, "Output directory")->required();
    prepare->add_flag("--invert", prep.invert, "Convert white-background images to black-background");
    prepare->add_option("--seed", prep.seed, "Split permutation seed");
    prepare->add_option("--classes", prep.classes, "Number of classes");
    prepare->add_option("--label-map", prep.label_map, "Label map file");

    TrainOptions tr;
    auto* train = app.add_subcommand("train", "Train a model from a config file");
    train->add_option("--config", tr.config, "Config file")->required();
    train->add_option("--out", tr.out, "Output directory")->required();
    train->add_flag("--deterministic", tr.deterministic, "Single-threaded, fixed reduction order");

    EvalOptions ev;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint and write metric CSVs");
    eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
    eval->add_option("--images", ev.images, "IDX image file")->required();
    eval->add_option("--labels", ev.labels, "IDX label file")->required();
    eval->add_option("--out", ev.out, "Output directory")->required();
    eval->add_flag("--invert", ev.invert, "Convert white-background images to black-background");
    eval->add_option("--label-map", ev.label_map, "Label map file");

    PredictOptions pr;
    auto* predict = app.add_subcommand("predict", "Classify one binary PGM image");
    predict->add_option("--checkpoint", pr.checkpoint, "Checkpoint file")->required();
    predict->add_option("--image", pr.image, "P5 PGM image")->required();
    predict->add_option("--topk", pr.topk, "Number of ranked classes to print")->check(CLI::PositiveNumber);
    predict->add_flag("--invert", pr.invert, "Convert white-background images to black-background");
    predict->add_option("--label-map", pr.label_map, "Label map file");

    GradcheckOptions gc;
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the configured model");
    gradcheck->add_option("--config", gc.config, "Config file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*prepare) {
            return run_prepare(prep);
        }
        if (*train) {
            return run_train(tr);
        }
        if (*eval) {
            return run_eval(ev);
        }
        if (*predict) {
            return run_predict(pr);
        }
        return run_gradcheck(gc);
    } catch (const htr::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
    }
    return 1;
}
