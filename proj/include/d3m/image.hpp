#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "d3m/common.hpp"
#include "d3m/hash.hpp"

namespace d3m {

// 3-channel float image, HWC layout, values nominally in [0,1].
struct Image {
    int h = 0;
    int w = 0;
    std::vector<float> px;  // size h*w*3

    Image() = default;
    Image(int h_, int w_, float fill = 0.0f) : h(h_), w(w_), px(static_cast<size_t>(h_) * w_ * 3, fill) {}

    float& at(int y, int x, int c) { return px[(static_cast<size_t>(y) * w + x) * 3 + c]; }
    float at(int y, int x, int c) const { return px[(static_cast<size_t>(y) * w + x) * 3 + c]; }

    uint64_t content_hash() const {
        uint64_t h0 = fnv1a(&h, sizeof(h));
        h0 = fnv1a(&w, sizeof(w), h0);
        return hash_floats(px, h0);
    }

    bool finite_unit_range() const {
        for (float v : px)
            if (!(v >= 0.0f && v <= 1.0f)) return false;
        return true;
    }
};

inline Image crop(const Image& src, int top, int left, int ph, int pw) {
    if (top < 0 || left < 0 || top + ph > src.h || left + pw > src.w) throw PatchLargerThanImage();
    Image out(ph, pw);
    for (int y = 0; y < ph; ++y)
        for (int x = 0; x < pw; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = src.at(top + y, left + x, c);
    return out;
}

namespace detail {

// Triangle-filter tap table for one output coordinate. The support widens
// with the downscale ratio ("bilinear, antialiased"); on upscale it
// degenerates to plain bilinear.
struct Taps {
    int lo;
    std::vector<double> w;  // normalized weights for indices lo..lo+w.size()-1
};

inline std::vector<Taps> make_taps(int in_n, int out_n) {
    const double scale = static_cast<double>(in_n) / out_n;
    const double support = std::max(1.0, scale);
    std::vector<Taps> taps(static_cast<size_t>(out_n));
    for (int o = 0; o < out_n; ++o) {
        const double center = (o + 0.5) * scale - 0.5;
        const int lo = static_cast<int>(std::floor(center - support)) + 1;
        const int hi = static_cast<int>(std::ceil(center + support)) - 1;
        Taps t;
        t.lo = lo;
        double sum = 0.0;
        for (int i = lo; i <= hi; ++i) {
            double d = std::abs((i - center) / support);
            double wgt = d < 1.0 ? 1.0 - d : 0.0;
            t.w.push_back(wgt);
            sum += wgt;
        }
        for (double& wgt : t.w) wgt /= sum;
        taps[static_cast<size_t>(o)] = std::move(t);
    }
    return taps;
}

}  // namespace detail

inline Image resize(const Image& src, int out_h, int out_w) {
    if (src.h == out_h && src.w == out_w) return src;
    // vertical pass
    Image mid(out_h, src.w);
    auto vtaps = detail::make_taps(src.h, out_h);
    for (int y = 0; y < out_h; ++y) {
        const auto& t = vtaps[static_cast<size_t>(y)];
        for (int x = 0; x < src.w; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (size_t k = 0; k < t.w.size(); ++k)
                    acc += t.w[k] * src.at(std::clamp(t.lo + static_cast<int>(k), 0, src.h - 1), x, c);
                mid.at(y, x, c) = static_cast<float>(acc);
            }
    }
    // horizontal pass
    Image out(out_h, out_w);
    auto htaps = detail::make_taps(src.w, out_w);
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            const auto& t = htaps[static_cast<size_t>(x)];
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (size_t k = 0; k < t.w.size(); ++k)
                    acc += t.w[k] * mid.at(y, std::clamp(t.lo + static_cast<int>(k), 0, src.w - 1), c);
                out.at(y, x, c) = std::clamp(static_cast<float>(acc), 0.0f, 1.0f);
            }
        }
    return out;
}

inline void paste(Image& dst, const Image& src, int top, int left) {
    for (int y = 0; y < src.h; ++y)
        for (int x = 0; x < src.w; ++x)
            for (int c = 0; c < 3; ++c) dst.at(top + y, left + x, c) = src.at(y, x, c);
}

// ---- PPM (P6, 8-bit) I/O: the ingest/export image format ----

inline void write_ppm(const Image& img, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    f << "P6\n" << img.w << " " << img.h << "\n255\n";
    std::vector<unsigned char> buf(img.px.size());
    for (size_t i = 0; i < img.px.size(); ++i)
        buf[i] = static_cast<unsigned char>(std::lround(std::clamp(img.px[i], 0.0f, 1.0f) * 255.0f));
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

inline Image read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot read " + path);
    std::string magic;
    f >> magic;
    if (magic != "P6") throw Error(path + ": not a P6 PPM file");
    auto next_int = [&f, &path]() {
        // skip whitespace and '#' comments
        int ch;
        while ((ch = f.get()) != EOF) {
            if (ch == '#') {
                while ((ch = f.get()) != EOF && ch != '\n') {}
            } else if (!std::isspace(ch)) {
                f.unget();
                break;
            }
        }
        int v;
        if (!(f >> v)) throw Error(path + ": truncated PPM header");
        return v;
    };
    int w = next_int();
    int h = next_int();
    int maxval = next_int();
    if (maxval != 255) throw Error(path + ": only maxval 255 supported");
    f.get();  // single whitespace after header
    Image img(h, w);
    std::vector<unsigned char> buf(img.px.size());
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (f.gcount() != static_cast<std::streamsize>(buf.size())) throw Error(path + ": truncated PPM data");
    for (size_t i = 0; i < buf.size(); ++i) img.px[i] = static_cast<float>(buf[i]) / 255.0f;
    return img;
}

}  // namespace d3m
