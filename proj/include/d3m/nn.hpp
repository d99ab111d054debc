#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <vector>

#include "d3m/common.hpp"
#include "d3m/hash.hpp"
#include "d3m/image.hpp"
#include "d3m/rng.hpp"

// Minimal CPU training stack. Everything is float32 storage with double
// accumulation in the inner products, which keeps finite-difference gradient
// checks tight without switching the whole pipeline to doubles.
namespace d3m::nn {

struct Param {
    std::vector<float> v;  // values
    std::vector<float> g;  // gradient accumulator

    explicit Param(size_t n = 0) : v(n, 0.0f), g(n, 0.0f) {}
    size_t size() const { return v.size(); }
    void zero_grad() { std::fill(g.begin(), g.end(), 0.0f); }
};

inline uint64_t hash_params(const std::vector<const Param*>& ps) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto* p : ps) h = hash_floats(p->v, h);
    return h;
}

inline size_t count_params(const std::vector<const Param*>& ps) {
    size_t n = 0;
    for (const auto* p : ps) n += p->size();
    return n;
}

inline void write_param(std::ostream& os, const Param& p) {
    uint64_t n = p.size();
    os.write(reinterpret_cast<const char*>(&n), sizeof(n));
    os.write(reinterpret_cast<const char*>(p.v.data()), static_cast<std::streamsize>(n * sizeof(float)));
}

inline void read_param(std::istream& is, Param& p) {
    uint64_t n = 0;
    is.read(reinterpret_cast<char*>(&n), sizeof(n));
    if (n != p.size()) throw Error("checkpoint parameter size mismatch");
    is.read(reinterpret_cast<char*>(p.v.data()), static_cast<std::streamsize>(n * sizeof(float)));
}

struct Linear {
    int in = 0, out = 0;
    Param w, b;  // w is out x in, row-major

    Linear() = default;
    Linear(int in_, int out_) : in(in_), out(out_), w(static_cast<size_t>(in_) * out_), b(static_cast<size_t>(out_)) {}

    void init(Rng& rng) {
        float s = std::sqrt(2.0f / static_cast<float>(in));
        for (auto& x : w.v) x = static_cast<float>(rng.normal()) * s;
        std::fill(b.v.begin(), b.v.end(), 0.0f);
    }

    std::vector<float> forward(const std::vector<float>& x) const {
        std::vector<float> y(static_cast<size_t>(out));
        for (int o = 0; o < out; ++o) {
            double acc = b.v[static_cast<size_t>(o)];
            const float* wr = &w.v[static_cast<size_t>(o) * in];
            for (int i = 0; i < in; ++i) acc += static_cast<double>(wr[i]) * x[static_cast<size_t>(i)];
            y[static_cast<size_t>(o)] = static_cast<float>(acc);
        }
        return y;
    }

    // Accumulates into w.g/b.g, returns dL/dx.
    std::vector<float> backward(const std::vector<float>& x, const std::vector<float>& dy) {
        std::vector<float> dx(static_cast<size_t>(in), 0.0f);
        for (int o = 0; o < out; ++o) {
            float d = dy[static_cast<size_t>(o)];
            if (d == 0.0f) continue;
            b.g[static_cast<size_t>(o)] += d;
            float* gw = &w.g[static_cast<size_t>(o) * in];
            const float* wr = &w.v[static_cast<size_t>(o) * in];
            for (int i = 0; i < in; ++i) {
                gw[i] += d * x[static_cast<size_t>(i)];
                dx[static_cast<size_t>(i)] += d * wr[i];
            }
        }
        return dx;
    }
};

// 3x3 convolution, stride 1, zero padding 1, CHW layout.
struct Conv3x3 {
    int cin = 0, cout = 0;
    Param w, b;  // w: cout x cin x 3 x 3

    Conv3x3() = default;
    Conv3x3(int cin_, int cout_)
        : cin(cin_), cout(cout_), w(static_cast<size_t>(cout_) * cin_ * 9), b(static_cast<size_t>(cout_)) {}

    void init(Rng& rng) {
        float s = std::sqrt(2.0f / static_cast<float>(cin * 9));
        for (auto& x : w.v) x = static_cast<float>(rng.normal()) * s;
        std::fill(b.v.begin(), b.v.end(), 0.0f);
    }

    std::vector<float> forward(const std::vector<float>& x, int h, int wd) const {
        std::vector<float> y(static_cast<size_t>(cout) * h * wd);
        for (int co = 0; co < cout; ++co)
            for (int yy = 0; yy < h; ++yy)
                for (int xx = 0; xx < wd; ++xx) {
                    double acc = b.v[static_cast<size_t>(co)];
                    for (int ci = 0; ci < cin; ++ci)
                        for (int ky = -1; ky <= 1; ++ky)
                            for (int kx = -1; kx <= 1; ++kx) {
                                int sy = yy + ky, sx = xx + kx;
                                if (sy < 0 || sy >= h || sx < 0 || sx >= wd) continue;
                                acc += static_cast<double>(
                                           w.v[((static_cast<size_t>(co) * cin + ci) * 3 + (ky + 1)) * 3 + (kx + 1)]) *
                                       x[(static_cast<size_t>(ci) * h + sy) * wd + sx];
                            }
                    y[(static_cast<size_t>(co) * h + yy) * wd + xx] = static_cast<float>(acc);
                }
        return y;
    }

    std::vector<float> backward(const std::vector<float>& x, const std::vector<float>& dy, int h, int wd) {
        std::vector<float> dx(static_cast<size_t>(cin) * h * wd, 0.0f);
        for (int co = 0; co < cout; ++co)
            for (int yy = 0; yy < h; ++yy)
                for (int xx = 0; xx < wd; ++xx) {
                    float d = dy[(static_cast<size_t>(co) * h + yy) * wd + xx];
                    if (d == 0.0f) continue;
                    b.g[static_cast<size_t>(co)] += d;
                    for (int ci = 0; ci < cin; ++ci)
                        for (int ky = -1; ky <= 1; ++ky)
                            for (int kx = -1; kx <= 1; ++kx) {
                                int sy = yy + ky, sx = xx + kx;
                                if (sy < 0 || sy >= h || sx < 0 || sx >= wd) continue;
                                size_t wi = ((static_cast<size_t>(co) * cin + ci) * 3 + (ky + 1)) * 3 + (kx + 1);
                                size_t xi = (static_cast<size_t>(ci) * h + sy) * wd + sx;
                                w.g[wi] += d * x[xi];
                                dx[xi] += d * w.v[wi];
                            }
                }
        return dx;
    }
};

inline std::vector<float> relu(const std::vector<float>& x) {
    std::vector<float> y(x.size());
    for (size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
    return y;
}

inline std::vector<float> relu_backward(const std::vector<float>& x, const std::vector<float>& dy) {
    std::vector<float> dx(x.size());
    for (size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
    return dx;
}

// 2x2 average pool, CHW. Dimensions must be even.
inline std::vector<float> avgpool2(const std::vector<float>& x, int c, int h, int w) {
    int oh = h / 2, ow = w / 2;
    std::vector<float> y(static_cast<size_t>(c) * oh * ow);
    for (int ch = 0; ch < c; ++ch)
        for (int yy = 0; yy < oh; ++yy)
            for (int xx = 0; xx < ow; ++xx) {
                const float* base = &x[static_cast<size_t>(ch) * h * w];
                float s = base[(2 * yy) * w + 2 * xx] + base[(2 * yy) * w + 2 * xx + 1] +
                          base[(2 * yy + 1) * w + 2 * xx] + base[(2 * yy + 1) * w + 2 * xx + 1];
                y[(static_cast<size_t>(ch) * oh + yy) * ow + xx] = 0.25f * s;
            }
    return y;
}

inline std::vector<float> avgpool2_backward(const std::vector<float>& dy, int c, int h, int w) {
    int oh = h / 2, ow = w / 2;
    std::vector<float> dx(static_cast<size_t>(c) * h * w);
    for (int ch = 0; ch < c; ++ch)
        for (int yy = 0; yy < oh; ++yy)
            for (int xx = 0; xx < ow; ++xx) {
                float d = 0.25f * dy[(static_cast<size_t>(ch) * oh + yy) * ow + xx];
                float* base = &dx[static_cast<size_t>(ch) * h * w];
                base[(2 * yy) * w + 2 * xx] = d;
                base[(2 * yy) * w + 2 * xx + 1] = d;
                base[(2 * yy + 1) * w + 2 * xx] = d;
                base[(2 * yy + 1) * w + 2 * xx + 1] = d;
            }
    return dx;
}

inline std::vector<float> softmax(const std::vector<float>& logits) {
    float m = logits[0];
    for (float v : logits) m = std::max(m, v);
    std::vector<float> p(logits.size());
    double z = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        z += p[i];
    }
    for (auto& v : p) v = static_cast<float>(v / z);
    return p;
}

// CE against an integer label; returns loss, fills dlogits = softmax - onehot.
inline double cross_entropy(const std::vector<float>& logits, int label, std::vector<float>* dlogits = nullptr) {
    if (label < 0 || static_cast<size_t>(label) >= logits.size())
        throw LabelOutOfRange(0, label, static_cast<int>(logits.size()));
    auto p = softmax(logits);
    double loss = -std::log(std::max(static_cast<double>(p[static_cast<size_t>(label)]), 1e-30));
    if (dlogits) {
        *dlogits = p;
        (*dlogits)[static_cast<size_t>(label)] -= 1.0f;
    }
    return loss;
}

// KL(target || softmax(logits)) up to the constant entropy term, i.e. soft
// cross-entropy. dlogits = softmax - target.
inline double soft_cross_entropy(const std::vector<float>& logits, const float* target,
                                 std::vector<float>* dlogits = nullptr) {
    auto p = softmax(logits);
    double loss = 0.0;
    for (size_t i = 0; i < p.size(); ++i)
        loss -= static_cast<double>(target[i]) * std::log(std::max(static_cast<double>(p[i]), 1e-30));
    if (dlogits) {
        *dlogits = p;
        for (size_t i = 0; i < p.size(); ++i) (*dlogits)[i] -= target[i];
    }
    return loss;
}

struct Adam {
    double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int64_t t = 0;
    std::vector<std::vector<float>> m, v;

    void step(const std::vector<Param*>& params) {
        if (m.empty()) {
            for (auto* p : params) {
                m.emplace_back(p->size(), 0.0f);
                v.emplace_back(p->size(), 0.0f);
            }
        }
        ++t;
        double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (size_t pi = 0; pi < params.size(); ++pi) {
            auto& p = *params[pi];
            for (size_t i = 0; i < p.size(); ++i) {
                double g = p.g[i];
                m[pi][i] = static_cast<float>(beta1 * m[pi][i] + (1.0 - beta1) * g);
                v[pi][i] = static_cast<float>(beta2 * v[pi][i] + (1.0 - beta2) * g * g);
                double mh = m[pi][i] / bc1, vh = v[pi][i] / bc2;
                p.v[i] -= static_cast<float>(lr * mh / (std::sqrt(vh) + eps));
            }
            p.zero_grad();
        }
    }
};

struct Sgd {
    double lr = 1e-2;

    void step(const std::vector<Param*>& params) const {
        for (auto* p : params) {
            for (size_t i = 0; i < p->size(); ++i) p->v[i] -= static_cast<float>(lr * p->g[i]);
            p->zero_grad();
        }
    }
};

// HWC [0,1] image -> CHW feature vector.
inline std::vector<float> to_chw(const Image& img) {
    std::vector<float> x(static_cast<size_t>(3) * img.h * img.w);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.h; ++y)
            for (int xx = 0; xx < img.w; ++xx)
                x[(static_cast<size_t>(c) * img.h + y) * img.w + xx] = img.at(y, xx, c);
    return x;
}

inline Image from_chw(const std::vector<float>& x, int h, int w) {
    Image img(h, w);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                img.at(y, xx, c) = x[(static_cast<size_t>(c) * h + y) * w + xx];
    return img;
}

}  // namespace d3m::nn
