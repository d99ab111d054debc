#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "d3m/common.hpp"
#include "d3m/image.hpp"

namespace d3m {

struct LabeledImage {
    Image pixels;
    int label = 0;
};

struct Patch {
    Image pixels;
    int64_t source_image_id = -1;
    int top = 0;
    int left = 0;
    double score = -1.0;  // teacher CE loss; negative means unscored
};

// One cell in a collage either came from a real patch (source id) or was
// produced by the generator.
struct CellProvenance {
    int64_t source_image_id = -1;
    bool generated = false;
};

struct Collage {
    Image pixels;
    int grid_rows = 1;
    int grid_cols = 1;
    std::vector<CellProvenance> cells;
    int class_id = 0;

    int cell_h() const { return pixels.h / grid_rows; }
    int cell_w() const { return pixels.w / grid_cols; }

    void check() const {
        if (pixels.h % grid_rows != 0 || pixels.w % grid_cols != 0) throw IndivisibleGrid();
        if (cells.size() != static_cast<size_t>(grid_rows) * grid_cols)
            throw Error("collage cell count does not match grid");
    }

    Image cell_pixels(int idx) const {
        int r = idx / grid_cols, c = idx % grid_cols;
        return crop(pixels, r * cell_h(), c * cell_w(), cell_h(), cell_w());
    }
};

// The learned per-class prompt vector v*.
struct PromptEmbedding {
    std::vector<float> vector;
    int class_id = 0;

    int d() const { return static_cast<int>(vector.size()); }
};

struct SoftLabelSet {
    int rows = 0;  // grid cells per collage
    int k = 0;     // class count
    std::vector<float> probs;  // rows*k, row-major
    float temperature = 1.0f;

    float at(int r, int c) const { return probs[static_cast<size_t>(r) * k + c]; }

    bool rows_stochastic(double tol = 1e-5) const {
        for (int r = 0; r < rows; ++r) {
            double s = 0.0;
            for (int c = 0; c < k; ++c) {
                float p = at(r, c);
                if (!(p >= 0.0f) || !std::isfinite(p)) return false;
                s += p;
            }
            if (std::abs(s - 1.0) > tol) return false;
        }
        return true;
    }
};

struct GenerationRecord {
    uint64_t seed = 0;
    std::optional<SoftLabelSet> soft_labels;
};

struct DatasetSummary {
    int k = 0;
    int height = 0;
    int width = 0;
    std::vector<int> per_class_counts;
    size_t total = 0;
};

inline DatasetSummary validate_dataset(const std::vector<LabeledImage>& images, int k) {
    if (images.empty()) throw EmptyDataset();
    DatasetSummary s;
    s.k = k;
    s.height = images.front().pixels.h;
    s.width = images.front().pixels.w;
    s.per_class_counts.assign(static_cast<size_t>(k), 0);
    for (size_t i = 0; i < images.size(); ++i) {
        const auto& im = images[i];
        if (im.label < 0 || im.label >= k) throw LabelOutOfRange(i, im.label, k);
        if (im.pixels.h != s.height || im.pixels.w != s.width)
            throw Error("image " + std::to_string(i) + ": resolution differs from first image");
        if (!im.pixels.finite_unit_range()) throw NonFinitePixel(i);
        s.per_class_counts[static_cast<size_t>(im.label)]++;
    }
    s.total = images.size();
    return s;
}

// ---- Dataset ingestion: directory of class subdirectories + manifest ----
//
// Layout:
//   root/manifest.json   {"classes": ["name0", ...], "height": H, "width": W}
//   root/<name>/*.ppm    one subdirectory per class
//
// Images are resized to the manifest resolution on ingest.

struct DatasetOnDisk {
    std::vector<LabeledImage> images;
    std::vector<std::string> class_names;
    int height = 0;
    int width = 0;
};

inline DatasetOnDisk load_dataset(const std::string& root) {
    namespace fs = std::filesystem;
    std::ifstream mf(root + "/manifest.json");
    if (!mf) throw ConfigInvalid("missing manifest.json in " + root);
    nlohmann::json j;
    mf >> j;
    DatasetOnDisk ds;
    ds.class_names = j.at("classes").get<std::vector<std::string>>();
    ds.height = j.at("height").get<int>();
    ds.width = j.at("width").get<int>();
    for (size_t c = 0; c < ds.class_names.size(); ++c) {
        fs::path dir = fs::path(root) / ds.class_names[c];
        if (!fs::is_directory(dir)) throw ConfigInvalid("missing class directory " + dir.string());
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& p : files) {
            Image img = read_ppm(p.string());
            if (img.h != ds.height || img.w != ds.width) img = resize(img, ds.height, ds.width);
            ds.images.push_back({std::move(img), static_cast<int>(c)});
        }
    }
    validate_dataset(ds.images, static_cast<int>(ds.class_names.size()));
    return ds;
}

inline void save_dataset(const DatasetOnDisk& ds, const std::string& root) {
    namespace fs = std::filesystem;
    fs::create_directories(root);
    nlohmann::json j;
    j["classes"] = ds.class_names;
    j["height"] = ds.height;
    j["width"] = ds.width;
    j["count"] = ds.images.size();
    std::ofstream(root + "/manifest.json") << j.dump(2) << "\n";
    std::vector<int> counter(ds.class_names.size(), 0);
    for (const auto& im : ds.images) {
        fs::path dir = fs::path(root) / ds.class_names[static_cast<size_t>(im.label)];
        fs::create_directories(dir);
        char name[32];
        std::snprintf(name, sizeof(name), "%05d.ppm", counter[static_cast<size_t>(im.label)]++);
        write_ppm(im.pixels, (dir / name).string());
    }
}

}  // namespace d3m
