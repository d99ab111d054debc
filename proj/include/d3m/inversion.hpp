#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "d3m/diffusion.hpp"

namespace d3m {

struct InversionConfig {
    int steps = 1500;
    double lr = 3e-3;
    int batch = 4;
    bool adam = true;
    uint64_t seed = 0;

    void check() const {
        if (steps < 0) throw ConfigInvalid("inversion steps must be >= 0");
        if (lr <= 0) throw ConfigInvalid("inversion lr must be > 0");
        if (batch < 1) throw ConfigInvalid("inversion batch must be >= 1");
    }
};

struct InversionResult {
    PromptEmbedding embedding;
    std::vector<double> losses;  // one entry per step (batch mean)
};

// Initialization: the class-name token embedding when the name is known to
// the encoder, otherwise the vocabulary mean plus small seeded noise.
inline std::vector<float> initial_prompt(const TextEncoder& enc, const std::string& class_name, uint64_t seed) {
    std::vector<float> v(static_cast<size_t>(enc.d()), 0.0f);
    if (!class_name.empty() && enc.has_token(class_name)) {
        const float* e = enc.embedding(enc.token_id(class_name));
        v.assign(e, e + enc.d());
        return v;
    }
    for (const auto& tok : enc.vocab()) {
        const float* e = enc.embedding(enc.token_id(tok));
        for (int i = 0; i < enc.d(); ++i) v[static_cast<size_t>(i)] += e[i];
    }
    for (auto& x : v) x /= static_cast<float>(enc.vocab().size());
    Rng rng(seed);
    for (auto& x : v) x += 0.01f * static_cast<float>(rng.normal());
    return v;
}

// Optimizes the single placeholder embedding v for one class against the
// frozen backend: stochastic gradient on E ||eps - phi(X(t), t, rho(v))||^2.
// Only v moves; denoiser and text-encoder weights are untouched.
inline InversionResult invert_class(const DiffusionBackend& backend, const PromptTemplate& tpl,
                                    const std::vector<Collage>& collages, const InversionConfig& cfg,
                                    int class_id, const std::string& class_name = "") {
    cfg.check();
    const TextEncoder& enc = backend.text_encoder();

    InversionResult res;
    res.embedding.class_id = class_id;
    res.embedding.vector = initial_prompt(enc, class_name, mix_seed(cfg.seed, 0xf00d));
    if (cfg.steps == 0) return res;
    if (collages.empty()) throw EmptyCollageSet();

    std::vector<std::vector<float>> signals;
    signals.reserve(collages.size());
    for (const auto& c : collages) {
        const Image& img = (c.pixels.h == backend.height() && c.pixels.w == backend.width())
                               ? c.pixels
                               : resize(c.pixels, backend.height(), backend.width());
        signals.push_back(image_to_signal(img));
    }

    const int T = [&backend] {
        // the toy backend exposes its schedule; default to 40 otherwise
        if (const auto* toy = dynamic_cast<const ToyBackend*>(&backend)) return toy->schedule().cfg.timesteps;
        return 40;
    }();

    Rng rng(cfg.seed);
    std::vector<float>& v = res.embedding.vector;
    const float jac = enc.placeholder_jacobian(tpl);
    nn::Param vparam(v.size());
    nn::Adam adam;
    adam.lr = cfg.lr;

    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<float> dv(v.size(), 0.0f);
        double loss = 0.0;
        auto cond = enc.encode(tpl, v);
        for (int b = 0; b < cfg.batch; ++b) {
            size_t i = rng.below(signals.size());
            int t = static_cast<int>(rng.below(static_cast<uint64_t>(T)));
            std::vector<float> eps(signals[i].size());
            for (auto& x : eps) x = static_cast<float>(rng.normal());
            std::vector<float> dcond;
            loss += backend.eps_loss_grad_cond(signals[i], t, eps, cond, &dcond);
            for (size_t j = 0; j < v.size(); ++j) dv[j] += jac * dcond[j];
        }
        loss /= cfg.batch;
        if (!std::isfinite(loss)) throw NonFiniteLoss();
        res.losses.push_back(loss);
        if (cfg.adam) {
            vparam.v = v;
            for (size_t j = 0; j < v.size(); ++j) vparam.g[j] = dv[j] / static_cast<float>(cfg.batch);
            adam.step({&vparam});
            v = vparam.v;
        } else {
            for (size_t j = 0; j < v.size(); ++j)
                v[j] -= static_cast<float>(cfg.lr * dv[j] / static_cast<float>(cfg.batch));
        }
    }
    return res;
}

// Conditioning from a fixed engineered prompt, no optimization. The token
// "name_of_class" in the template is substituted with the class name.
inline std::vector<float> engineered_prompt_baseline(const DiffusionBackend& backend, const std::string& class_name,
                                                     std::vector<std::string> template_tokens = {
                                                         "a", "natural", "collage", "of", "name_of_class",
                                                         "images"}) {
    for (auto& tok : template_tokens)
        if (tok == "name_of_class") tok = class_name;
    return backend.text_encoder().encode_tokens(template_tokens);
}

// The baseline packaged as a placeholder embedding: with mean pooling the
// placeholder vector that reproduces the engineered conditioning under `tpl`
// is v = n * cond - sum(other template tokens), solved exactly.
inline PromptEmbedding engineered_prompt_embedding(const DiffusionBackend& backend, int class_id,
                                                   const std::string& class_name,
                                                   const PromptTemplate& tpl = PromptTemplate::photo_of_placeholder()) {
    auto cond = engineered_prompt_baseline(backend, class_name);
    std::vector<std::string> others;
    for (const auto& tok : tpl.tokens)
        if (tok != tpl.placeholder) others.push_back(tok);
    auto n = static_cast<float>(tpl.tokens.size());
    std::vector<float> v(cond.size(), 0.0f);
    if (!others.empty()) {
        auto other_mean = backend.text_encoder().encode_tokens(others);
        for (size_t j = 0; j < v.size(); ++j)
            v[j] = n * cond[j] - static_cast<float>(others.size()) * other_mean[j];
    } else {
        for (size_t j = 0; j < v.size(); ++j) v[j] = n * cond[j];
    }
    PromptEmbedding p;
    p.vector = std::move(v);
    p.class_id = class_id;
    return p;
}

}  // namespace d3m
