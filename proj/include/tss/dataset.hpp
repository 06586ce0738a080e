// Copyright (c) 2026 the tss project
// Licensed under the Apache License 2.0.

/**
 * @file dataset.hpp
 * @brief Persisted datasets: manifest schema, batch generation, split loading.
 *
 * A dataset directory holds images/, masks/, annotations/ and a
 * manifest.json listing every record with its count, per-scene seed, and
 * split. Paths inside the manifest are relative to the manifest's directory.
 */

#pragma once

#include "tss/io.hpp"
#include "tss/synthgen.hpp"
#include "tss/trainer.hpp"

#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace tss {
namespace dataset {

inline constexpr const char* kManifestVersion = "tss-dataset/1";

enum class Split { Train, Val, Test };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        default: return "test";
    }
}

inline Split split_from_name(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    throw std::invalid_argument("unknown split '" + name + "'");
}

struct Record {
    std::string image;
    std::string mask;
    std::string annotations;
    int count = 0;
    uint64_t seed = 0;
    Split split = Split::Train;
};

struct Manifest {
    std::vector<Record> records;
};

/// Integer percentages; remainder after flooring val and test goes to train.
struct SplitPercents {
    int train = 90;
    int val = 5;
    int test = 5;

    void check() const {
        if (train < 0 || val < 0 || test < 0 || train + val + test != 100)
            throw std::invalid_argument("split percentages must be non-negative and sum to 100");
    }
};

inline void write_manifest(const std::string& path, const Manifest& manifest) {
    nlohmann::json j;
    j["version"] = kManifestVersion;
    nlohmann::json records = nlohmann::json::array();
    for (const Record& r : manifest.records) {
        nlohmann::json jr;
        jr["image"] = r.image;
        jr["mask"] = r.mask;
        jr["annotations"] = r.annotations;
        jr["count"] = r.count;
        jr["seed"] = r.seed;
        jr["split"] = split_name(r.split);
        records.push_back(std::move(jr));
    }
    j["records"] = std::move(records);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io::IoError(path, "cannot open for writing");
    out << j.dump(2) << "\n";
    if (!out) throw io::IoError(path, "write failed");
}

inline Manifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io::IoError(path, "cannot open");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw io::ParseError(path, e.what());
    }
    try {
        if (!j.contains("version") || j["version"].get<std::string>() != kManifestVersion)
            throw io::ParseError(path, "unsupported manifest version");
        Manifest manifest;
        for (const nlohmann::json& jr : j.at("records")) {
            Record r;
            r.image = jr.at("image").get<std::string>();
            r.mask = jr.at("mask").get<std::string>();
            r.annotations = jr.at("annotations").get<std::string>();
            r.count = jr.at("count").get<int>();
            r.seed = jr.at("seed").get<uint64_t>();
            r.split = split_from_name(jr.at("split").get<std::string>());
            if (r.count < 0) throw io::ParseError(path, "negative count");
            manifest.records.push_back(std::move(r));
        }
        return manifest;
    } catch (const nlohmann::json::exception& e) {
        throw io::ParseError(path, e.what());
    } catch (const std::invalid_argument& e) {
        throw io::ParseError(path, e.what());
    }
}

/**
 * @brief Generates n scenes to @p dir and writes manifest.json.
 *
 * Scene i uses the seed mix_seed(config.seed, i), so the dataset is a pure
 * function of the config. Records 0..n_train-1 are train, the next
 * floor(n*val%) val, the final floor(n*test%) test.
 */
inline Manifest generate_dataset(const std::string& dir, const synthgen::SceneConfig& config,
                                 int n_images, const SplitPercents& split) {
    config.check();
    split.check();
    if (n_images < 1) throw std::invalid_argument("generate_dataset: n_images must be >= 1");

    namespace fs = std::filesystem;
    std::error_code ec;
    for (const char* sub : {"", "images", "masks", "annotations"}) {
        fs::create_directories(fs::path(dir) / sub, ec);
        if (ec) throw io::IoError((fs::path(dir) / sub).string(), "cannot create directory");
    }

    const int n_val = n_images * split.val / 100;
    const int n_test = n_images * split.test / 100;
    const int n_train = n_images - n_val - n_test;

    Manifest manifest;
    for (int i = 0; i < n_images; ++i) {
        synthgen::SceneConfig scene_config = config;
        scene_config.seed = mix_seed(config.seed, static_cast<uint64_t>(i));
        const synthgen::Scene scene = synthgen::generate_scene(scene_config);

        char name[32];
        std::snprintf(name, sizeof(name), "%05d", i);
        Record r;
        r.image = std::string("images/img_") + name + ".png";
        r.mask = std::string("masks/mask_") + name + ".png";
        r.annotations = std::string("annotations/ann_") + name + ".json";
        r.count = scene.count;
        r.seed = scene_config.seed;
        r.split = i < n_train ? Split::Train : (i < n_train + n_val ? Split::Val : Split::Test);

        io::write_image_png((fs::path(dir) / r.image).string(), scene.image);
        io::write_mask_png((fs::path(dir) / r.mask).string(), scene.instance_mask);
        io::write_annotations((fs::path(dir) / r.annotations).string(),
                              {r.image, scene.annotations});
        manifest.records.push_back(std::move(r));
    }
    write_manifest((fs::path(dir) / "manifest.json").string(), manifest);
    return manifest;
}

/// One split with its manifest records kept alongside the samples.
struct LoadedSplit {
    std::vector<Record> records;
    Dataset samples;
};

inline LoadedSplit load_split_records(const std::string& manifest_path, Split split) {
    const Manifest manifest = read_manifest(manifest_path);
    const std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();
    LoadedSplit out;
    for (const Record& r : manifest.records) {
        if (r.split != split) continue;
        Sample sample;
        try {
            sample.image = io::read_image_png((base / r.image).string());
            sample.instances = io::read_mask_png((base / r.mask).string());
            sample.annotations = io::read_annotations((base / r.annotations).string()).points;
        } catch (const io::ParseError& e) {
            // A broken dataset is an I/O problem for callers, not a usage one.
            throw io::IoError(manifest_path, e.what());
        }
        sample.count = r.count;
        out.records.push_back(r);
        out.samples.push_back(std::move(sample));
    }
    return out;
}

/// Loads one split of a persisted dataset into memory.
inline Dataset load_split(const std::string& manifest_path, Split split) {
    return load_split_records(manifest_path, split).samples;
}

}  // namespace dataset
}  // namespace tss
