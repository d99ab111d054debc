#pragma once

#include <algorithm>
#include <numeric>
#include <tuple>
#include <vector>

#include "d3m/classifier.hpp"
#include "d3m/data_model.hpp"
#include "d3m/rng.hpp"

namespace d3m {

struct PatchSamplerConfig {
    int n_candidates = 32;
    int patch_h = 8;
    int patch_w = 8;
    // Eq-style argmax-of-loss variant kept behind a flag for ablation; the
    // default selects the minimum-CE (most confidently classified) patch.
    bool select_max_loss = false;
    // Enumerate every crop origin instead of sampling n_candidates of them.
    bool exhaustive = false;

    void check(int img_h, int img_w) const {
        if (n_candidates < 1) throw ConfigInvalid("n_candidates must be >= 1");
        if (patch_h > img_h || patch_w > img_w) throw PatchLargerThanImage();
    }
};

// Cross-entropy of the frozen teacher on one patch, resized to the teacher
// input resolution first.
inline double score_patch(const TeacherModel& teacher, const Patch& patch, int label) {
    if (label < 0 || label >= teacher.k()) throw LabelOutOfRange(0, label, teacher.k());
    Image in = resize(patch.pixels, teacher.input_h(), teacher.input_w());
    auto logits = teacher.logits(in);
    return nn::cross_entropy(logits, label);
}

// Samples n_candidates crops with uniform random origins, scores each, and
// returns the best one. Ties break toward the lowest (top, left, index).
inline Patch select_informative_patch(const TeacherModel& teacher, const LabeledImage& image,
                                      const PatchSamplerConfig& cfg, uint64_t rng_seed,
                                      int64_t image_id = -1) {
    cfg.check(image.pixels.h, image.pixels.w);
    Rng rng(rng_seed);
    int max_top = image.pixels.h - cfg.patch_h;
    int max_left = image.pixels.w - cfg.patch_w;

    std::vector<std::pair<int, int>> origins;
    if (cfg.exhaustive) {
        for (int top = 0; top <= max_top; ++top)
            for (int left = 0; left <= max_left; ++left) origins.emplace_back(top, left);
    } else {
        for (int i = 0; i < cfg.n_candidates; ++i) {
            int top = static_cast<int>(rng.below(static_cast<uint64_t>(max_top + 1)));
            int left = static_cast<int>(rng.below(static_cast<uint64_t>(max_left + 1)));
            origins.emplace_back(top, left);
        }
    }

    Patch best;
    std::tuple<int, int, int> best_key{0, 0, 0};
    bool have = false;
    for (int i = 0; i < static_cast<int>(origins.size()); ++i) {
        auto [top, left] = origins[static_cast<size_t>(i)];
        Patch cand;
        cand.pixels = crop(image.pixels, top, left, cfg.patch_h, cfg.patch_w);
        cand.top = top;
        cand.left = left;
        cand.source_image_id = image_id;
        cand.score = score_patch(teacher, cand, image.label);
        bool better;
        if (!have) {
            better = true;
        } else if (cand.score != best.score) {
            better = cfg.select_max_loss ? cand.score > best.score : cand.score < best.score;
        } else {
            better = std::tuple<int, int, int>{top, left, i} < best_key;
        }
        if (better) {
            best = std::move(cand);
            best_key = {top, left, i};
            have = true;
        }
    }
    return best;
}

// Assembles one class's patches into ceil(N / (g_r*g_c)) collages. Patches
// are permuted with the given seed; the last collage is padded by re-sampling
// already-placed patches without replacement (reshuffling once a pad pass
// exhausts them).
inline std::vector<Collage> build_collages(const std::vector<Patch>& patches, int class_id, int grid_rows,
                                           int grid_cols, int out_h, int out_w, uint64_t rng_seed) {
    if (patches.empty()) throw EmptyCollageSet();
    if (out_h % grid_rows != 0 || out_w % grid_cols != 0) throw IndivisibleGrid();
    const int cells = grid_rows * grid_cols;
    const int cell_h = out_h / grid_rows, cell_w = out_w / grid_cols;

    Rng rng(rng_seed);
    std::vector<size_t> order(patches.size());
    std::iota(order.begin(), order.end(), 0);
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    const size_t n = patches.size();
    const size_t n_collages = (n + static_cast<size_t>(cells) - 1) / static_cast<size_t>(cells);
    // pad slots come from a second seeded pass over the already-used patches
    std::vector<size_t> slots = order;
    std::vector<size_t> pool;
    while (slots.size() < n_collages * static_cast<size_t>(cells)) {
        if (pool.empty()) {
            pool = order;
            for (size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.below(i)]);
        }
        slots.push_back(pool.back());
        pool.pop_back();
    }

    std::vector<Collage> out;
    for (size_t j = 0; j < n_collages; ++j) {
        Collage col;
        col.pixels = Image(out_h, out_w);
        col.grid_rows = grid_rows;
        col.grid_cols = grid_cols;
        col.class_id = class_id;
        for (int cidx = 0; cidx < cells; ++cidx) {
            const Patch& p = patches[slots[j * static_cast<size_t>(cells) + static_cast<size_t>(cidx)]];
            Image cell = resize(p.pixels, cell_h, cell_w);
            paste(col.pixels, cell, (cidx / grid_cols) * cell_h, (cidx % grid_cols) * cell_w);
            col.cells.push_back({p.source_image_id, false});
        }
        out.push_back(std::move(col));
    }
    return out;
}

}  // namespace d3m
