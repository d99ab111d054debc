#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "d3m/data_model.hpp"
#include "d3m/rng.hpp"

namespace d3m {

// Procedural shapes benchmark: each class is a distinct glyph drawn in a
// random bright color at a jittered position over dark clutter. The glyph
// covers most of the canvas so informative patches land on its body.
namespace shapes {

inline const std::vector<std::string>& class_names() {
    static const std::vector<std::string> names = {"disk",    "frame", "cross",  "triangle", "hstripes",
                                                   "vstripes", "xmark", "ring",  "checker",  "diamond"};
    return names;
}

// Coverage of class `cls` at normalized glyph coordinates (u,v) in [0,1].
inline float glyph_mask(int cls, float u, float v) {
    float cu = u - 0.5f, cv = v - 0.5f;
    float r = std::sqrt(cu * cu + cv * cv);
    switch (cls) {
        case 0:  // disk
            return r < 0.42f ? 1.0f : 0.0f;
        case 1:  // square frame
            return (std::max(std::abs(cu), std::abs(cv)) > 0.28f && std::max(std::abs(cu), std::abs(cv)) < 0.46f)
                       ? 1.0f
                       : 0.0f;
        case 2:  // plus cross
            return (std::abs(cu) < 0.14f || std::abs(cv) < 0.14f) ? 1.0f : 0.0f;
        case 3:  // triangle
            return (v > 0.15f && std::abs(cu) < 0.5f * (v - 0.15f)) ? 1.0f : 0.0f;
        case 4:  // horizontal stripes
            return std::fmod(v * 3.0f, 1.0f) < 0.5f ? 1.0f : 0.0f;
        case 5:  // vertical stripes
            return std::fmod(u * 3.0f, 1.0f) < 0.5f ? 1.0f : 0.0f;
        case 6:  // X mark
            return (std::abs(cu - cv) < 0.16f || std::abs(cu + cv) < 0.16f) ? 1.0f : 0.0f;
        case 7:  // ring
            return (r > 0.22f && r < 0.44f) ? 1.0f : 0.0f;
        case 8:  // checkerboard
            return (static_cast<int>(u * 3.0f) + static_cast<int>(v * 3.0f)) % 2 == 0 ? 1.0f : 0.0f;
        case 9:  // diamond
            return (std::abs(cu) + std::abs(cv)) < 0.45f ? 1.0f : 0.0f;
        default:
            return 0.0f;
    }
}

inline Image render(int cls, int h, int w, Rng& rng) {
    Image img(h, w);
    // dark clutter background
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float base = 0.05f + 0.15f * static_cast<float>(rng.uniform());
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = std::clamp(base + 0.05f * static_cast<float>(rng.uniform()), 0.0f, 1.0f);
        }
    // bright random color, never too close to the background
    std::array<float, 3> color{};
    for (auto& c : color) c = 0.55f + 0.45f * static_cast<float>(rng.uniform());
    color[rng.below(3)] *= 0.35f;  // force a hue

    int gh = (3 * h) / 4, gw = (3 * w) / 4;
    int top = static_cast<int>(rng.below(static_cast<uint64_t>(h - gh + 1)));
    int left = static_cast<int>(rng.below(static_cast<uint64_t>(w - gw + 1)));
    for (int y = 0; y < gh; ++y)
        for (int x = 0; x < gw; ++x) {
            float m = glyph_mask(cls, (x + 0.5f) / gw, (y + 0.5f) / gh);
            if (m <= 0.0f) continue;
            for (int c = 0; c < 3; ++c)
                img.at(top + y, left + x, c) = std::clamp(m * color[static_cast<size_t>(c)] +
                                                              (1.0f - m) * img.at(top + y, left + x, c),
                                                          0.0f, 1.0f);
        }
    return img;
}

inline DatasetOnDisk make_dataset(int k, int per_class, int h, int w, uint64_t seed) {
    if (k < 1 || k > static_cast<int>(class_names().size())) throw ConfigInvalid("shapes supports 1..10 classes");
    DatasetOnDisk ds;
    ds.height = h;
    ds.width = w;
    ds.class_names.assign(class_names().begin(), class_names().begin() + k);
    for (int c = 0; c < k; ++c) {
        Rng rng(mix_seed(seed, static_cast<uint64_t>(c)));
        for (int i = 0; i < per_class; ++i) ds.images.push_back({render(c, h, w, rng), c});
    }
    return ds;
}

}  // namespace shapes
}  // namespace d3m
