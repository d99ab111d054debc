#pragma once

#include <cmath>
#include <vector>

#include "d3m/classifier.hpp"
#include "d3m/diffusion.hpp"
#include "d3m/half.hpp"

namespace d3m {

enum class LabelMode : uint8_t { one_hot = 0, soft = 1 };
enum class LabelPrecision : uint8_t { f32 = 0, f16 = 1 };

inline size_t label_bytes_per_value(LabelPrecision p) { return p == LabelPrecision::f32 ? 4 : 2; }

struct LabelerConfig {
    int ipc = 1;  // per-class patch budget
    int grid_rows = 2;
    int grid_cols = 2;
    LabelMode mode = LabelMode::soft;
    LabelPrecision precision = LabelPrecision::f16;
    float temperature = 1.0f;

    int cells() const { return grid_rows * grid_cols; }
    int collages_needed() const { return (ipc + cells() - 1) / cells(); }

    void check() const {
        if (ipc < 1) throw ConfigInvalid("ipc must be >= 1");
        if (temperature <= 0.0f) throw ConfigInvalid("temperature must be > 0");
        if (grid_rows < 1 || grid_cols < 1) throw ConfigInvalid("grid must be >= 1x1");
    }
};

// Teacher soft labels for every grid cell of a generated collage, each cell
// resized to the teacher input first. Values land in storage precision right
// away so that replay-time recomputation matches the artifact bytes.
inline SoftLabelSet soft_labels_for(const Image& collage, const TeacherModel& teacher, const LabelerConfig& cfg) {
    if (collage.h % cfg.grid_rows != 0 || collage.w % cfg.grid_cols != 0) throw IndivisibleGrid();
    SoftLabelSet s;
    s.rows = cfg.cells();
    s.k = teacher.k();
    s.temperature = cfg.temperature;
    s.probs.resize(static_cast<size_t>(s.rows) * s.k);
    int ch = collage.h / cfg.grid_rows, cw = collage.w / cfg.grid_cols;
    for (int r = 0; r < cfg.grid_rows; ++r)
        for (int c = 0; c < cfg.grid_cols; ++c) {
            Image cell = crop(collage, r * ch, c * cw, ch, cw);
            auto logits = teacher.logits(resize(cell, teacher.input_h(), teacher.input_w()));
            for (auto& v : logits) v /= cfg.temperature;
            auto p = nn::softmax(logits);
            int row = r * cfg.grid_cols + c;
            for (int k = 0; k < s.k; ++k) {
                float pv = p[static_cast<size_t>(k)];
                if (cfg.precision == LabelPrecision::f16) pv = quantize_half(pv);
                s.probs[static_cast<size_t>(row) * s.k + k] = pv;
            }
        }
    return s;
}

// Step 3: derive one seed per collage from (base_seed, class, index),
// generate, and in soft mode attach per-cell teacher labels.
inline std::vector<GenerationRecord> make_records(const DiffusionBackend& backend, const PromptEmbedding& prompt,
                                                  const TeacherModel& teacher, const LabelerConfig& cfg,
                                                  uint64_t base_seed,
                                                  const PromptTemplate& tpl = PromptTemplate::photo_of_placeholder()) {
    cfg.check();
    auto cond = backend.text_encoder().encode(tpl, prompt.vector);
    std::vector<GenerationRecord> records;
    for (int i = 0; i < cfg.collages_needed(); ++i) {
        GenerationRecord rec;
        rec.seed = mix_seed(base_seed, static_cast<uint64_t>(prompt.class_id), static_cast<uint64_t>(i) + 1);
        if (cfg.mode == LabelMode::soft) {
            Image collage = backend.generate(rec.seed, cond);
            rec.soft_labels = soft_labels_for(collage, teacher, cfg);
        }
        records.push_back(std::move(rec));
    }
    return records;
}

struct ReplayResult {
    Collage collage;
    SoftLabelSet labels;  // stored soft labels, or synthesized one-hot rows
};

// Regenerates the collage pinned by (prompt, seed). When the record carries
// an expected hash (set by the caller from a previous generation), a
// mismatch raises NonDeterministicBackend.
inline ReplayResult replay(const DiffusionBackend& backend, const PromptEmbedding& prompt,
                           const GenerationRecord& record, const LabelerConfig& cfg, int k,
                           const PromptTemplate& tpl = PromptTemplate::photo_of_placeholder(),
                           uint64_t expected_hash = 0) {
    auto cond = backend.text_encoder().encode(tpl, prompt.vector);
    Image img = backend.generate(record.seed, cond);
    if (expected_hash != 0 && img.content_hash() != expected_hash) throw NonDeterministicBackend();

    ReplayResult res;
    res.collage.pixels = std::move(img);
    res.collage.grid_rows = cfg.grid_rows;
    res.collage.grid_cols = cfg.grid_cols;
    res.collage.class_id = prompt.class_id;
    res.collage.cells.assign(static_cast<size_t>(cfg.cells()), CellProvenance{-1, true});
    if (record.soft_labels) {
        res.labels = *record.soft_labels;
    } else {
        res.labels.rows = cfg.cells();
        res.labels.k = k;
        res.labels.temperature = cfg.temperature;
        res.labels.probs.assign(static_cast<size_t>(res.labels.rows) * k, 0.0f);
        for (int r = 0; r < res.labels.rows; ++r)
            res.labels.probs[static_cast<size_t>(r) * k + prompt.class_id] = 1.0f;
    }
    return res;
}

}  // namespace d3m
