// Copyright (c) 2026 the tss project
// Licensed under the Apache License 2.0.

// Command-line front end: dataset generation, training, evaluation,
// watershed debug rendering, and ablation tables.
//
// Exit codes: 0 success, 2 usage or unparseable input, 3 I/O failure,
// 4 training divergence, 5 corrupt checkpoint.

#include "tss/core.hpp"
#include "tss/dataset.hpp"
#include "tss/io.hpp"
#include "tss/losses.hpp"
#include "tss/metrics.hpp"
#include "tss/morphology.hpp"
#include "tss/rng.hpp"
#include "tss/synthgen.hpp"
#include "tss/trainer.hpp"
#include "tss/watershed.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitDivergence = 4;
constexpr int kExitCorrupt = 5;

struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

std::pair<int, int> parse_range(const std::string& text) {
    int lo = 0, hi = 0;
    char extra = 0;
    if (std::sscanf(text.c_str(), "%d:%d%c", &lo, &hi, &extra) != 2 || lo > hi)
        throw UsageError("invalid range '" + text + "'");
    return {lo, hi};
}

std::pair<int, int> parse_size(const std::string& text) {
    int h = 0, w = 0;
    char extra = 0;
    if (std::sscanf(text.c_str(), "%dx%d%c", &h, &w, &extra) != 2 || h < 1 || w < 1)
        throw UsageError("invalid size '" + text + "'");
    return {h, w};
}

tss::dataset::SplitPercents parse_split(const std::string& text) {
    tss::dataset::SplitPercents split;
    char extra = 0;
    if (std::sscanf(text.c_str(), "%d:%d:%d%c", &split.train, &split.val, &split.test, &extra) != 3)
        throw UsageError("invalid split '" + text + "'");
    split.check();
    return split;
}

tss::LossWeights parse_weights(const std::string& weights_text, const std::string& shape_text) {
    tss::LossWeights weights;
    char extra = 0;
    if (std::sscanf(weights_text.c_str(), "%lf,%lf,%lf,%lf%c", &weights.lambda_seg,
                    &weights.lambda_split, &weights.lambda_shape, &weights.lambda_count,
                    &extra) != 4)
        throw UsageError("invalid weights '" + weights_text + "'");
    if (shape_text == "convex")
        weights.shape_kind = tss::ShapeKind::Convex;
    else if (shape_text == "circ")
        weights.shape_kind = tss::ShapeKind::Circ;
    else if (shape_text == "none")
        weights.shape_kind = tss::ShapeKind::None;
    else
        throw UsageError("invalid shape '" + shape_text + "' (convex|circ|none)");
    weights.check();
    return weights;
}

tss::losses::SegForm parse_seg_form(const std::string& text) {
    if (text == "ce") return tss::losses::SegForm::CrossEntropy;
    if (text == "literal") return tss::losses::SegForm::Literal;
    throw UsageError("invalid seg form '" + text + "' (ce|literal)");
}

std::string manifest_path(const std::string& data) {
    if (data.size() > 5 && data.substr(data.size() - 5) == ".json") return data;
    return (fs::path(data) / "manifest.json").string();
}

json report_json(const tss::metrics::MetricReport& report) {
    json j;
    j["mae"] = report.mae;
    j["miou_percent"] = report.miou_percent;
    j["n_images"] = report.n_images;
    if (report.qcs_infinite)
        j["qcs"] = "inf";
    else
        j["qcs"] = report.qcs;
    return j;
}

// ---------------------------------------------------------------- gen

struct GenOptions {
    std::string out;
    int n = 0;
    std::string size = "64x64";
    std::string berries = "3:8";
    std::string radius = "3:7";
    std::string split = "90:5:5";
    std::string distractors = "4:10";
    double occluder = 0.25;
    double red_fraction = 0.5;
    bool separated = false;
    uint64_t seed = 0;
};

int run_gen(const GenOptions& opt) {
    tss::synthgen::SceneConfig config;
    std::tie(config.height, config.width) = parse_size(opt.size);
    std::tie(config.berry_count_min, config.berry_count_max) = parse_range(opt.berries);
    std::tie(config.radius_min, config.radius_max) = parse_range(opt.radius);
    std::tie(config.distractor_count_min, config.distractor_count_max) =
        parse_range(opt.distractors);
    config.occluder_probability = opt.occluder;
    config.distractor_red_fraction = opt.red_fraction;
    config.separated = opt.separated;
    config.seed = opt.seed;
    const tss::dataset::SplitPercents split = parse_split(opt.split);

    const tss::dataset::Manifest manifest =
        tss::dataset::generate_dataset(opt.out, config, opt.n, split);
    std::cout << "wrote " << manifest.records.size() << " records to " << opt.out << "\n";
    return 0;
}

// ---------------------------------------------------------------- train

struct TrainOptions {
    std::string data;
    std::string out;
    std::string log;
    std::string weights = "1,1,1,1";
    std::string shape = "convex";
    std::string seg_form = "ce";
    int iters = 2000;
    int val_interval = 200;
    double lr = 1e-3;
    bool no_cosine = false;
    uint64_t seed = 0;
};

void write_train_log(const std::string& path, const std::vector<tss::trainer::TrainLogEntry>& log) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw tss::io::IoError(path, "cannot open for writing");
    for (const tss::trainer::TrainLogEntry& e : log) {
        json j;
        j["iteration"] = e.iteration;
        j["seg"] = e.seg;
        j["split"] = e.split;
        j["shape"] = e.shape;
        j["count"] = e.count;
        j["total"] = e.total;
        j["lr"] = e.lr;
        out << j.dump() << "\n";
    }
    if (!out) throw tss::io::IoError(path, "write failed");
}

int run_train(const TrainOptions& opt) {
    tss::trainer::TrainConfig config;
    config.iterations = opt.iters;
    config.learning_rate = opt.lr;
    config.cosine_schedule = !opt.no_cosine;
    config.val_interval = opt.val_interval;
    config.seed = opt.seed;
    config.weights = parse_weights(opt.weights, opt.shape);
    config.seg_form = parse_seg_form(opt.seg_form);
    config.check();

    const std::string manifest = manifest_path(opt.data);
    const tss::Dataset train_set = tss::dataset::load_split(manifest, tss::dataset::Split::Train);
    const tss::Dataset val_set = tss::dataset::load_split(manifest, tss::dataset::Split::Val);
    if (train_set.empty() || val_set.empty())
        throw tss::io::IoError(manifest, "train or val split is empty");

    const tss::trainer::TrainResult result = tss::trainer::train(train_set, val_set, config);
    tss::io::save_checkpoint(opt.out, result.best);
    write_train_log(opt.log.empty() ? opt.out + ".log" : opt.log, result.log);

    const tss::metrics::MetricReport report =
        result.val_log.empty() ? tss::trainer::evaluate_on(result.best, val_set)
                               : result.best_report;
    std::cout << report_json(report).dump() << "\n";
    return 0;
}

// ---------------------------------------------------------------- eval

struct EvalOptions {
    std::string ckpt;
    std::string data;
    std::string split = "test";
    std::string report;
    std::string csv;
    bool ground_truth = false;
};

int run_eval(const EvalOptions& opt) {
    if (opt.ckpt.empty() && !opt.ground_truth)
        throw UsageError("either --ckpt or --ground-truth is required");

    const tss::dataset::LoadedSplit data = tss::dataset::load_split_records(
        manifest_path(opt.data), tss::dataset::split_from_name(opt.split));
    if (data.samples.empty())
        throw tss::io::IoError(manifest_path(opt.data), "split has no records");

    std::optional<tss::trainer::NetworkParams> params;
    if (!opt.ground_truth) params = tss::io::load_checkpoint(opt.ckpt);

    std::vector<tss::losses::CountPair> pairs;
    std::vector<tss::BinaryMask> preds, gts;
    for (const tss::Sample& sample : data.samples) {
        tss::BinaryMask gt(sample.instances.height(), sample.instances.width());
        for (size_t i = 0; i < gt.size(); ++i) gt.set(i, sample.instances.at(i) != 0);
        tss::BinaryMask pred =
            opt.ground_truth
                ? gt
                : tss::threshold_prediction(tss::trainer::predict(*params, sample.image));
        pairs.push_back({sample.count, tss::metrics::count_from_mask(pred)});
        preds.push_back(std::move(pred));
        gts.push_back(std::move(gt));
    }
    const tss::metrics::MetricReport report = tss::metrics::evaluate(pairs, preds, gts);

    {
        std::ofstream out(opt.report, std::ios::trunc);
        if (!out) throw tss::io::IoError(opt.report, "cannot open for writing");
        out << report_json(report).dump(2) << "\n";
        if (!out) throw tss::io::IoError(opt.report, "write failed");
    }

    const std::string csv_path =
        opt.csv.empty() ? (fs::path(opt.report).replace_extension(".csv")).string() : opt.csv;
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw tss::io::IoError(csv_path, "cannot open for writing");
    csv << "path,count_true,count_pred,iou\n";
    for (size_t i = 0; i < data.records.size(); ++i) {
        char iou_text[32];
        std::snprintf(iou_text, sizeof(iou_text), "%.10g",
                      tss::metrics::iou(preds[i], gts[i]));
        csv << data.records[i].image << "," << pairs[i].truth << "," << pairs[i].predicted << ","
            << iou_text << "\n";
    }
    if (!csv) throw tss::io::IoError(csv_path, "write failed");

    std::cout << report_json(report).dump() << "\n";
    return 0;
}

// ---------------------------------------------------------------- watershed

struct WatershedOptions {
    std::string prob;
    std::string points;
    std::string out;
};

void region_color(int id, unsigned char* rgb) {
    // Golden-angle hue walk keeps adjacent ids far apart in hue.
    const double h = std::fmod(0.61803398875 * id, 1.0) * 6.0;
    const double s = 0.65, v = 0.90;
    const int sector = static_cast<int>(h);
    const double f = h - sector;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    double r, g, b;
    switch (sector % 6) {
        case 0: r = v, g = t, b = p; break;
        case 1: r = q, g = v, b = p; break;
        case 2: r = p, g = v, b = t; break;
        case 3: r = p, g = q, b = v; break;
        case 4: r = t, g = p, b = v; break;
        default: r = v, g = p, b = q; break;
    }
    rgb[0] = static_cast<unsigned char>(std::lround(r * 255.0));
    rgb[1] = static_cast<unsigned char>(std::lround(g * 255.0));
    rgb[2] = static_cast<unsigned char>(std::lround(b * 255.0));
}

int run_watershed(const WatershedOptions& opt) {
    const tss::ProbabilityMap prob = tss::io::read_probability_pfm(opt.prob);
    const tss::io::AnnotationFile points = tss::io::read_annotations(opt.points);
    const tss::BinaryMask pred = tss::threshold_prediction(prob);
    const tss::watershed::RegionSet regions = tss::watershed::selective(pred, prob, points.points);

    tss::ImageRGB out(prob.height(), prob.width());
    for (int u = 0; u < prob.height(); ++u)
        for (int v = 0; v < prob.width(); ++v) {
            const int label = regions.labels.at(u, v);
            unsigned char rgb[3] = {0, 0, 0};
            if (label > 0) region_color(label, rgb);
            for (int c = 0; c < 3; ++c) out.at(u, v, c) = rgb[c] / 255.0;
        }

    auto stamp = [&](const std::vector<tss::PixelCoord>& marks, double value) {
        const int du[5] = {0, -1, 1, 0, 0};
        const int dv[5] = {0, 0, 0, -1, 1};
        for (const tss::PixelCoord& m : marks)
            for (int k = 0; k < 5; ++k) {
                const int u = m.u + du[k];
                const int v = m.v + dv[k];
                if (u < 0 || v < 0 || u >= out.height() || v >= out.width()) continue;
                for (int c = 0; c < 3; ++c) out.at(u, v, c) = value;
            }
    };
    stamp(points.points.positives, 1.0);  // white crosses
    stamp(points.points.negatives, 0.0);  // black crosses
    tss::io::write_image_png(opt.out, out);
    return 0;
}

// ---------------------------------------------------------------- ablate

struct AblateOptions {
    std::string data;
    std::string configs;
    std::string out;
    uint64_t seed = 0;
    int iters = -1;    // -1: use the config file value or the default
    double lr = -1.0;  // same
};

struct AblationRow {
    std::string name;
    bool ok = false;
    std::string error;
    tss::metrics::MetricReport report;
};

int run_ablate(const AblateOptions& opt) {
    std::ifstream in(opt.configs);
    if (!in) throw tss::io::IoError(opt.configs, "cannot open");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw tss::io::ParseError(opt.configs, e.what());
    }

    int iterations = 2000;
    double lr = 1e-3;
    int val_interval = 200;
    json rows_spec;
    try {
        if (j.is_array()) {
            rows_spec = j;
        } else {
            if (j.contains("iterations")) iterations = j["iterations"].get<int>();
            if (j.contains("learning_rate")) lr = j["learning_rate"].get<double>();
            if (j.contains("val_interval")) val_interval = j["val_interval"].get<int>();
            rows_spec = j.at("configs");
        }
        if (!rows_spec.is_array() || rows_spec.empty())
            throw tss::io::ParseError(opt.configs, "no configurations listed");
    } catch (const json::exception& e) {
        throw tss::io::ParseError(opt.configs, e.what());
    }
    if (opt.iters >= 0) iterations = opt.iters;
    if (opt.lr > 0.0) lr = opt.lr;

    const std::string manifest = manifest_path(opt.data);
    const tss::Dataset train_set = tss::dataset::load_split(manifest, tss::dataset::Split::Train);
    const tss::Dataset val_set = tss::dataset::load_split(manifest, tss::dataset::Split::Val);
    const tss::Dataset test_set = tss::dataset::load_split(manifest, tss::dataset::Split::Test);
    if (train_set.empty() || val_set.empty() || test_set.empty())
        throw tss::io::IoError(manifest, "train, val, or test split is empty");

    std::vector<AblationRow> rows;
    for (size_t i = 0; i < rows_spec.size(); ++i) {
        AblationRow row;
        try {
            const json& spec = rows_spec[i];
            row.name = spec.at("name").get<std::string>();
            const json& w = spec.at("weights");
            if (!w.is_array() || w.size() != 4)
                throw UsageError("config '" + row.name + "': weights must have 4 entries");
            char weights_text[128];
            std::snprintf(weights_text, sizeof(weights_text), "%g,%g,%g,%g", w[0].get<double>(),
                          w[1].get<double>(), w[2].get<double>(), w[3].get<double>());
            tss::trainer::TrainConfig config;
            config.iterations = iterations;
            config.learning_rate = lr;
            config.val_interval = val_interval;
            config.seed = tss::mix_seed(opt.seed, i);
            config.weights =
                parse_weights(weights_text, spec.value("shape", std::string("none")));
            config.seg_form = parse_seg_form(spec.value("seg_form", std::string("ce")));
            config.check();

            const tss::trainer::TrainResult result =
                tss::trainer::train(train_set, val_set, config);
            row.report = tss::trainer::evaluate_on(result.best, test_set);
            row.ok = true;
        } catch (const json::exception& e) {
            row.error = e.what();
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
        std::cerr << "ablate: " << rows.back().name << (rows.back().ok ? " done" : " failed")
                  << "\n";
    }

    std::error_code ec;
    fs::create_directories(opt.out, ec);
    if (ec) throw tss::io::IoError(opt.out, "cannot create directory");

    std::string table = "| config | mIoU (%) | MAE | Q_cs |\n| --- | --- | --- | --- |\n";
    json jrows = json::array();
    for (const AblationRow& row : rows) {
        char line[256];
        if (row.ok) {
            char qcs_text[32];
            if (row.report.qcs_infinite)
                std::snprintf(qcs_text, sizeof(qcs_text), "inf");
            else
                std::snprintf(qcs_text, sizeof(qcs_text), "%.2f", row.report.qcs);
            std::snprintf(line, sizeof(line), "| %s | %.2f | %.2f | %s |\n", row.name.c_str(),
                          row.report.miou_percent, row.report.mae, qcs_text);
        } else {
            std::snprintf(line, sizeof(line), "| %s | failed | failed | failed |\n",
                          row.name.c_str());
        }
        table += line;

        json jr;
        jr["name"] = row.name;
        jr["ok"] = row.ok;
        if (row.ok) {
            jr["mae"] = row.report.mae;
            jr["miou_percent"] = row.report.miou_percent;
            jr["qcs"] = row.report.qcs_infinite ? json("inf") : json(row.report.qcs);
        } else {
            jr["error"] = row.error;
        }
        jrows.push_back(std::move(jr));
    }

    {
        std::ofstream md((fs::path(opt.out) / "ablation.md").string(), std::ios::trunc);
        if (!md) throw tss::io::IoError(opt.out, "cannot write ablation.md");
        md << table;
    }
    {
        json out_json;
        out_json["rows"] = std::move(jrows);
        std::ofstream jf((fs::path(opt.out) / "ablation.json").string(), std::ios::trunc);
        if (!jf) throw tss::io::IoError(opt.out, "cannot write ablation.json");
        jf << out_json.dump(2) << "\n";
    }
    std::cout << table;

    for (const AblationRow& row : rows)
        if (row.ok) return 0;
    return kExitIo;
}

// ---------------------------------------------------------------- main

int dispatch(CLI::App& app, const GenOptions& gen, const TrainOptions& train,
             const EvalOptions& eval, const WatershedOptions& ws, const AblateOptions& ablate) {
    try {
        if (app.got_subcommand("gen")) return run_gen(gen);
        if (app.got_subcommand("train")) return run_train(train);
        if (app.got_subcommand("eval")) return run_eval(eval);
        if (app.got_subcommand("watershed")) return run_watershed(ws);
        if (app.got_subcommand("ablate")) return run_ablate(ablate);
        std::cerr << "tss: no subcommand\n";
        return kExitUsage;
    } catch (const tss::io::CheckpointError& e) {
        std::cerr << "tss: " << e.what() << "\n";
        return kExitCorrupt;
    } catch (const tss::trainer::DivergenceDetected& e) {
        std::cerr << "tss: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const tss::io::ParseError& e) {
        std::cerr << "tss: " << e.what() << "\n";
        return kExitUsage;
    } catch (const tss::io::IoError& e) {
        std::cerr << "tss: " << e.what() << "\n";
        return kExitIo;
    } catch (const tss::synthgen::ConfigInvalid& e) {
        std::cerr << "tss: " << e.what() << "\n";
        return kExitUsage;
    } catch (const tss::watershed::NoMarkers& e) {
        std::cerr << "tss: " << e.what() << "\n";
        return kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "tss: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "tss: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "tss: " << e.what() << "\n";
        return kExitIo;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Point-supervised berry segmentation and counting toolkit"};
    app.require_subcommand(1);

    GenOptions gen_opt;
    CLI::App* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
    gen->add_option("--out", gen_opt.out, "Output dataset directory")->required();
    gen->add_option("--n", gen_opt.n, "Number of images")->required();
    gen->add_option("--size", gen_opt.size, "Frame size HxW (default 64x64)");
    gen->add_option("--berries", gen_opt.berries, "Berry count range MIN:MAX (default 3:8)");
    gen->add_option("--radius", gen_opt.radius, "Berry radius range MIN:MAX (default 3:7)");
    gen->add_option("--split", gen_opt.split, "Split percentages TRAIN:VAL:TEST (default 90:5:5)");
    gen->add_option("--distractors", gen_opt.distractors,
                    "Distractor leaf count range MIN:MAX (default 4:10)");
    gen->add_option("--occluder", gen_opt.occluder,
                    "Per-berry occluder probability (default 0.25)");
    gen->add_option("--red-fraction", gen_opt.red_fraction,
                    "Fraction of distractor leaves tinted red (default 0.5)");
    gen->add_flag("--separated", gen_opt.separated,
                  "Enforce non-touching berries (min center distance 2*r_max+1)");
    gen->add_option("--seed", gen_opt.seed, "Master seed (default 0)");

    TrainOptions train_opt;
    CLI::App* train = app.add_subcommand("train", "Train the segmenter on a dataset");
    train->add_option("--data", train_opt.data, "Dataset directory or manifest path")->required();
    train->add_option("--out", train_opt.out, "Checkpoint output path")->required();
    train->add_option("--log", train_opt.log, "Training log path (default <out>.log)");
    train->add_option("--weights", train_opt.weights,
                      "Loss weights SEG,SPLIT,SHAPE,COUNT (default 1,1,1,1)");
    train->add_option("--shape", train_opt.shape, "Shape term: convex|circ|none (default convex)");
    train->add_option("--seg-form", train_opt.seg_form,
                      "Segmentation term form: ce|literal (default ce)");
    train->add_option("--iters", train_opt.iters, "Training iterations (default 2000)");
    train->add_option("--lr", train_opt.lr, "Base learning rate (default 0.001)");
    train->add_option("--val-interval", train_opt.val_interval,
                      "Validation cadence in iterations (default 200)");
    train->add_flag("--no-cosine", train_opt.no_cosine, "Disable cosine annealing");
    train->add_option("--seed", train_opt.seed, "Run seed (default 0)");

    EvalOptions eval_opt;
    CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
    eval->add_option("--ckpt", eval_opt.ckpt, "Checkpoint path");
    eval->add_option("--data", eval_opt.data, "Dataset directory or manifest path")->required();
    eval->add_option("--split", eval_opt.split, "Split to evaluate (default test)");
    eval->add_option("--report", eval_opt.report, "Report JSON output path")->required();
    eval->add_option("--csv", eval_opt.csv, "Per-image CSV path (default: report with .csv)");
    eval->add_flag("--ground-truth", eval_opt.ground_truth,
                   "Score ground-truth masks against themselves (no checkpoint needed)");

    WatershedOptions ws_opt;
    CLI::App* ws = app.add_subcommand("watershed", "Render selective-watershed regions");
    ws->add_option("--prob", ws_opt.prob, "Probability map (PFM)")->required();
    ws->add_option("--points", ws_opt.points, "Point annotations (JSON)")->required();
    ws->add_option("--out", ws_opt.out, "Output PNG path")->required();

    AblateOptions ablate_opt;
    CLI::App* ablate = app.add_subcommand("ablate", "Train and evaluate loss configurations");
    ablate->add_option("--data", ablate_opt.data, "Dataset directory or manifest path")->required();
    ablate->add_option("--configs", ablate_opt.configs, "Configuration file (JSON)")->required();
    ablate->add_option("--out", ablate_opt.out, "Output directory")->required();
    ablate->add_option("--seed", ablate_opt.seed, "Master seed; rows derive their own (default 0)");
    ablate->add_option("--iters", ablate_opt.iters, "Override training iterations");
    ablate->add_option("--lr", ablate_opt.lr, "Override learning rate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    return dispatch(app, gen_opt, train_opt, eval_opt, ws_opt, ablate_opt);
}
