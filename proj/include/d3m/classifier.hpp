#pragma once

#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "d3m/data_model.hpp"
#include "d3m/nn.hpp"
#include "d3m/rng.hpp"

namespace d3m {

// Small conv classifier: `blocks` conv3x3+relu+avgpool stages, then a fully
// connected head. Two configs of this net are the "distinct architectures"
// used for cross-architecture runs.
struct ConvNetConfig {
    int in_h = 8, in_w = 8;
    int k = 4;
    int width = 8;
    int blocks = 1;

    bool operator==(const ConvNetConfig&) const = default;
};

class ConvNet {
  public:
    ConvNet() = default;
    explicit ConvNet(const ConvNetConfig& cfg) : cfg_(cfg) {
        int cin = 3;
        int ch = cfg.width;
        for (int b = 0; b < cfg.blocks; ++b) {
            convs_.emplace_back(cin, ch);
            cin = ch;
            ch *= 2;
        }
        int fh = cfg.in_h >> cfg.blocks, fw = cfg.in_w >> cfg.blocks;
        if (fh < 1 || fw < 1) throw ConfigInvalid("too many pool stages for input resolution");
        fc_ = nn::Linear(cin * fh * fw, cfg.k);
    }

    void init(uint64_t seed) {
        Rng rng(seed);
        for (auto& c : convs_) c.init(rng);
        fc_.init(rng);
    }

    const ConvNetConfig& config() const { return cfg_; }

    std::vector<nn::Param*> params() {
        std::vector<nn::Param*> ps;
        for (auto& c : convs_) {
            ps.push_back(&c.w);
            ps.push_back(&c.b);
        }
        ps.push_back(&fc_.w);
        ps.push_back(&fc_.b);
        return ps;
    }
    std::vector<const nn::Param*> params() const {
        std::vector<const nn::Param*> ps;
        for (const auto& c : convs_) {
            ps.push_back(&c.w);
            ps.push_back(&c.b);
        }
        ps.push_back(&fc_.w);
        ps.push_back(&fc_.b);
        return ps;
    }

    uint64_t param_hash() const { return nn::hash_params(params()); }

    // Forward on a CHW vector matching the configured resolution.
    std::vector<float> logits(const std::vector<float>& x) const {
        std::vector<float> a = x;
        int h = cfg_.in_h, w = cfg_.in_w;
        for (const auto& c : convs_) {
            a = nn::relu(c.forward(a, h, w));
            a = nn::avgpool2(a, c.cout, h, w);
            h /= 2;
            w /= 2;
        }
        return fc_.forward(a);
    }

    std::vector<float> logits(const Image& img) const {
        const Image& in = (img.h == cfg_.in_h && img.w == cfg_.in_w) ? img : resize(img, cfg_.in_h, cfg_.in_w);
        return logits(nn::to_chw(in));
    }

    // Forward keeping activations, then backprop one example. Returns loss.
    // target_soft of size k when soft labels drive the gradient, else label.
    double train_example(const std::vector<float>& x, int label, const float* target_soft) {
        int h = cfg_.in_h, w = cfg_.in_w;
        std::vector<std::vector<float>> pre, pooled;
        std::vector<float> a = x;
        for (const auto& c : convs_) {
            pre.push_back(c.forward(a, h, w));
            a = nn::relu(pre.back());
            pooled.push_back(a);
            a = nn::avgpool2(a, c.cout, h, w);
            h /= 2;
            w /= 2;
        }
        std::vector<float> feats = a;
        auto lg = fc_.forward(feats);
        std::vector<float> dlg;
        double loss = target_soft ? nn::soft_cross_entropy(lg, target_soft, &dlg)
                                  : nn::cross_entropy(lg, label, &dlg);
        std::vector<float> da = fc_.backward(feats, dlg);
        for (int b = static_cast<int>(convs_.size()) - 1; b >= 0; --b) {
            da = nn::avgpool2_backward(da, convs_[static_cast<size_t>(b)].cout, h * 2, w * 2);
            h *= 2;
            w *= 2;
            da = nn::relu_backward(pre[static_cast<size_t>(b)], da);
            const std::vector<float>& input =
                b == 0 ? x : nn::avgpool2(pooled[static_cast<size_t>(b - 1)], convs_[static_cast<size_t>(b - 1)].cout,
                                          h * 2, w * 2);
            da = convs_[static_cast<size_t>(b)].backward(input, da, h, w);
        }
        return loss;
    }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw Error("cannot write " + path);
        f.write("D3MC", 4);
        f.write(reinterpret_cast<const char*>(&cfg_), sizeof(cfg_));
        for (const auto* p : params()) nn::write_param(f, *p);
    }

    static ConvNet load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw Error("cannot read " + path);
        char magic[4];
        f.read(magic, 4);
        if (std::string(magic, 4) != "D3MC") throw Error(path + ": not a classifier checkpoint");
        ConvNetConfig cfg;
        f.read(reinterpret_cast<char*>(&cfg), sizeof(cfg));
        ConvNet net(cfg);
        for (auto* p : net.params()) nn::read_param(f, *p);
        if (!f) throw Error(path + ": truncated checkpoint");
        return net;
    }

  private:
    ConvNetConfig cfg_;
    std::vector<nn::Conv3x3> convs_;
    nn::Linear fc_;
};

// Frozen pretrained classifier guiding patch selection and soft labeling.
class TeacherModel {
  public:
    explicit TeacherModel(ConvNet net) : net_(std::move(net)), frozen_hash_(net_.param_hash()) {}

    int input_h() const { return net_.config().in_h; }
    int input_w() const { return net_.config().in_w; }
    int k() const { return net_.config().k; }

    std::vector<float> logits(const Image& img) const {
        if (input_h() < 1 || input_w() < 1) throw TeacherInputMismatch();
        auto lg = net_.logits(img);
        for (float v : lg)
            if (!std::isfinite(v)) throw NonFiniteLogits();
        return lg;
    }

    uint64_t param_hash() const { return net_.param_hash(); }
    uint64_t frozen_hash() const { return frozen_hash_; }
    const ConvNet& net() const { return net_; }

  private:
    ConvNet net_;
    uint64_t frozen_hash_;
};

// Plain supervised training pass over labeled images. Used to pretrain the
// toy teacher and the held-out probe.
inline std::vector<double> fit_classifier(ConvNet& net, const std::vector<LabeledImage>& data, int epochs,
                                          double lr, uint64_t seed) {
    if (data.empty()) throw EmptyDataset();
    Rng rng(seed);
    nn::Adam opt;
    opt.lr = lr;
    auto params = net.params();
    std::vector<size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> epoch_losses;
    for (int e = 0; e < epochs; ++e) {
        // Fisher-Yates with our seeded rng
        for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        double total = 0.0;
        for (size_t idx : order) {
            const auto& ex = data[idx];
            const Image& in = (ex.pixels.h == net.config().in_h && ex.pixels.w == net.config().in_w)
                                  ? ex.pixels
                                  : resize(ex.pixels, net.config().in_h, net.config().in_w);
            total += net.train_example(nn::to_chw(in), ex.label, nullptr);
            opt.step(params);
        }
        double mean = total / static_cast<double>(data.size());
        if (!std::isfinite(mean)) throw DivergedTraining();
        epoch_losses.push_back(mean);
    }
    return epoch_losses;
}

inline int predict(const ConvNet& net, const Image& img) {
    auto lg = net.logits(img);
    return static_cast<int>(std::max_element(lg.begin(), lg.end()) - lg.begin());
}

}  // namespace d3m
