#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "d3m/common.hpp"
#include "d3m/data_model.hpp"
#include "d3m/hash.hpp"
#include "d3m/nn.hpp"
#include "d3m/rng.hpp"

namespace d3m {

// ---- forward-noising schedule ----
//
// Variance preserving, linear betas starting at exactly 0 so the signal
// coefficient at t=0 is exactly 1 (add_noise(x0, 0, eps) == x0).
struct ScheduleConfig {
    int timesteps = 40;
    float beta_start = 0.0f;
    float beta_end = 0.35f;
    int sample_steps = 10;  // DDIM steps at generation time
};

struct NoiseSchedule {
    ScheduleConfig cfg;
    std::vector<float> alpha_bar;  // cumulative signal variance, alpha_bar[0] == 1

    explicit NoiseSchedule(const ScheduleConfig& c = {}) : cfg(c) {
        alpha_bar.resize(static_cast<size_t>(cfg.timesteps));
        double prod = 1.0;
        for (int t = 0; t < cfg.timesteps; ++t) {
            double beta = this->beta(t);
            prod *= 1.0 - beta;
            alpha_bar[static_cast<size_t>(t)] = static_cast<float>(prod);
        }
    }

    double beta(int t) const {
        return cfg.beta_start + (cfg.beta_end - cfg.beta_start) *
                                    (cfg.timesteps > 1 ? static_cast<double>(t) / (cfg.timesteps - 1) : 0.0);
    }

    float signal(int t) const { return std::sqrt(alpha_bar[static_cast<size_t>(t)]); }
    float noise(int t) const { return std::sqrt(1.0f - alpha_bar[static_cast<size_t>(t)]); }

    void check_t(int t) const {
        if (t < 0 || t >= cfg.timesteps) throw TimestepOutOfRange(t, cfg.timesteps);
    }
};

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, on flattened [-1,1] signals.
inline std::vector<float> add_noise(const NoiseSchedule& sched, const std::vector<float>& x0, int t,
                                    const std::vector<float>& eps) {
    sched.check_t(t);
    if (eps.size() != x0.size()) throw Error("noise shape mismatch");
    std::vector<float> xt(x0.size());
    float s = sched.signal(t), n = sched.noise(t);
    for (size_t i = 0; i < x0.size(); ++i) xt[i] = s * x0[i] + n * eps[i];
    return xt;
}

// ---- prompt side ----

struct PromptTemplate {
    std::vector<std::string> tokens;

    static constexpr const char* placeholder = "<s*>";

    static PromptTemplate photo_of_placeholder() { return {{"a", "photo", "of", placeholder}}; }

    int placeholder_index() const {
        int idx = -1;
        for (size_t i = 0; i < tokens.size(); ++i)
            if (tokens[i] == placeholder) {
                if (idx >= 0) throw ConfigInvalid("prompt template has more than one placeholder");
                idx = static_cast<int>(i);
            }
        if (idx < 0) throw ConfigInvalid("prompt template has no placeholder");
        return idx;
    }
};

// Learned embedding table over a tiny vocabulary. The conditioning vector is
// the mean of the token embeddings, so it is linear in the placeholder
// embedding v (gradient w.r.t. v is upstream / token_count).
class TextEncoder {
  public:
    TextEncoder() = default;
    TextEncoder(std::vector<std::string> vocab, int d, uint64_t seed)
        : vocab_(std::move(vocab)), d_(d), table_(vocab_.size() * static_cast<size_t>(d)) {
        Rng rng(seed);
        for (auto& x : table_.v) x = static_cast<float>(rng.normal()) * 0.1f;
    }

    int d() const { return d_; }
    const std::vector<std::string>& vocab() const { return vocab_; }

    int token_id(const std::string& tok) const {
        for (size_t i = 0; i < vocab_.size(); ++i)
            if (vocab_[i] == tok) return static_cast<int>(i);
        throw UnknownToken(tok);
    }
    bool has_token(const std::string& tok) const {
        return std::find(vocab_.begin(), vocab_.end(), tok) != vocab_.end();
    }

    const float* embedding(int id) const { return &table_.v[static_cast<size_t>(id) * d_]; }

    // Mean-pool a plain token sequence (no placeholder).
    std::vector<float> encode_tokens(const std::vector<std::string>& tokens) const {
        std::vector<float> cond(static_cast<size_t>(d_), 0.0f);
        for (const auto& tok : tokens) {
            const float* e = embedding(token_id(tok));
            for (int i = 0; i < d_; ++i) cond[static_cast<size_t>(i)] += e[i];
        }
        for (auto& x : cond) x /= static_cast<float>(tokens.size());
        return cond;
    }

    // Mean-pool a template with the placeholder slot substituted by v.
    std::vector<float> encode(const PromptTemplate& tpl, const std::vector<float>& v) const {
        if (static_cast<int>(v.size()) != d_) throw ConfigInvalid("prompt vector width != encoder d");
        int slot = tpl.placeholder_index();
        std::vector<float> cond(static_cast<size_t>(d_), 0.0f);
        for (size_t i = 0; i < tpl.tokens.size(); ++i) {
            const float* e = static_cast<int>(i) == slot ? v.data() : embedding(token_id(tpl.tokens[i]));
            for (int j = 0; j < d_; ++j) cond[static_cast<size_t>(j)] += e[j];
        }
        for (auto& x : cond) x /= static_cast<float>(tpl.tokens.size());
        return cond;
    }

    // d(cond)/d(v) for the mean pool.
    float placeholder_jacobian(const PromptTemplate& tpl) const {
        return 1.0f / static_cast<float>(tpl.tokens.size());
    }

    nn::Param& table() { return table_; }
    const nn::Param& table() const { return table_; }
    uint64_t param_hash() const { return nn::hash_params({&table_}); }

  private:
    std::vector<std::string> vocab_;
    int d_ = 0;
    nn::Param table_;
};

// ---- backend interface ----

class DiffusionBackend {
  public:
    virtual ~DiffusionBackend() = default;

    virtual int height() const = 0;
    virtual int width() const = 0;
    virtual int d() const = 0;
    virtual const TextEncoder& text_encoder() const = 0;

    // Full reverse process from a seeded Gaussian; pure in (weights, seed,
    // cond, sampler config).
    virtual Image generate(uint64_t seed, const std::vector<float>& cond) const = 0;

    // Squared-error denoising loss on one (x0, eps, t) sample with gradient
    // w.r.t. the conditioning vector. Backends without gradient access throw.
    virtual double eps_loss_grad_cond(const std::vector<float>& x0, int t, const std::vector<float>& eps,
                                      const std::vector<float>& cond, std::vector<float>* dcond) const {
        (void)x0;
        (void)t;
        (void)eps;
        (void)cond;
        (void)dcond;
        throw BackendUnavailable("backend does not expose denoiser gradients");
    }

    // Hash of weights + sampler config; stored in artifacts so replay
    // failures are diagnosable.
    virtual uint64_t fingerprint() const = 0;
};

inline std::vector<float> image_to_signal(const Image& img) {
    auto x = nn::to_chw(img);
    for (auto& v : x) v = 2.0f * v - 1.0f;
    return x;
}

inline Image signal_to_image(const std::vector<float>& x, int h, int w) {
    std::vector<float> u(x.size());
    for (size_t i = 0; i < x.size(); ++i) u[i] = std::clamp(0.5f * (x[i] + 1.0f), 0.0f, 1.0f);
    return nn::from_chw(u, h, w);
}

// ---- toy backend ----
//
// Pixel-space conditional diffusion model small enough to train on a desk
// CPU: an MLP denoiser over [flattened image | sinusoidal t-embedding |
// conditioning vector], with the learned-embedding text encoder above.
struct ToyBackendConfig {
    int height = 16;
    int width = 16;
    int d = 32;       // text-embedding width
    int t_dim = 16;   // sinusoidal timestep embedding width
    int hidden = 192;
    ScheduleConfig schedule;
};

class ToyBackend : public DiffusionBackend {
  public:
    ToyBackend() = default;
    ToyBackend(const ToyBackendConfig& cfg, std::vector<std::string> vocab, uint64_t seed)
        : cfg_(cfg),
          sched_(cfg.schedule),
          enc_(std::move(vocab), cfg.d, mix_seed(seed, 1)),
          l1_(pixel_dim() + cfg.t_dim + cfg.d, cfg.hidden),
          l2_(cfg.hidden, cfg.hidden),
          l3_(cfg.hidden, pixel_dim()) {
        Rng rng(mix_seed(seed, 2));
        l1_.init(rng);
        l2_.init(rng);
        l3_.init(rng);
        // zero-init the output layer: the untrained model predicts eps = 0
        std::fill(l3_.w.v.begin(), l3_.w.v.end(), 0.0f);
    }

    int pixel_dim() const { return 3 * cfg_.height * cfg_.width; }
    int height() const override { return cfg_.height; }
    int width() const override { return cfg_.width; }
    int d() const override { return cfg_.d; }
    const TextEncoder& text_encoder() const override { return enc_; }
    TextEncoder& text_encoder_mut() { return enc_; }
    const NoiseSchedule& schedule() const { return sched_; }
    const ToyBackendConfig& config() const { return cfg_; }
    bool trained() const { return trained_; }
    void mark_trained() { trained_ = true; }

    std::vector<nn::Param*> denoiser_params() { return {&l1_.w, &l1_.b, &l2_.w, &l2_.b, &l3_.w, &l3_.b}; }
    std::vector<const nn::Param*> denoiser_params() const {
        return {&l1_.w, &l1_.b, &l2_.w, &l2_.b, &l3_.w, &l3_.b};
    }

    uint64_t denoiser_hash() const { return nn::hash_params(denoiser_params()); }
    uint64_t encoder_hash() const { return enc_.param_hash(); }

    uint64_t fingerprint() const override {
        uint64_t h = denoiser_hash();
        h = hash_floats(enc_.table().v, h);
        h = fnv1a(&cfg_, sizeof(cfg_), h);
        return h;
    }

    std::vector<float> time_embedding(int t) const {
        std::vector<float> e(static_cast<size_t>(cfg_.t_dim));
        for (int i = 0; i < cfg_.t_dim / 2; ++i) {
            double f = std::pow(10000.0, -2.0 * i / cfg_.t_dim);
            e[static_cast<size_t>(2 * i)] = static_cast<float>(std::sin(t * f));
            e[static_cast<size_t>(2 * i + 1)] = static_cast<float>(std::cos(t * f));
        }
        return e;
    }

    // Noise-level floor used when converting the x0 head to an eps
    // prediction; keeps the low-t conversion bounded (abar(0) == 1 exactly).
    static constexpr float kNoiseFloor = 0.1f;

    // eps prediction on a flattened [-1,1] signal. The MLP head predicts the
    // clean signal g ~ x0 and the eps estimate is derived analytically as
    // (x_t - sqrt(abar) g) / sqrt(1 - abar), which an additive MLP cannot
    // represent on its own.
    std::vector<float> predict_eps(const std::vector<float>& xt, int t, const std::vector<float>& cond) const {
        sched_.check_t(t);
        auto g = predict_x0(xt, t, cond);
        float s = sched_.signal(t);
        float n = std::max(sched_.noise(t), kNoiseFloor);
        std::vector<float> eps_hat(g.size());
        for (size_t i = 0; i < g.size(); ++i) eps_hat[i] = (xt[i] - s * g[i]) / n;
        return eps_hat;
    }

    std::vector<float> predict_x0(const std::vector<float>& xt, int t, const std::vector<float>& cond) const {
        sched_.check_t(t);
        auto in = pack_input(xt, t, cond);
        auto h1 = nn::relu(l1_.forward(in));
        auto h2 = nn::relu(l2_.forward(h1));
        auto out = l3_.forward(h2);
        for (float v : out)
            if (!std::isfinite(v)) throw NonFiniteActivation();
        return out;
    }

    Image generate(uint64_t seed, const std::vector<float>& cond) const override {
        Rng rng(seed);
        std::vector<float> x(static_cast<size_t>(pixel_dim()));
        for (auto& v : x) v = static_cast<float>(rng.normal());
        const int T = sched_.cfg.timesteps;
        const int S = std::min(sched_.cfg.sample_steps, T);
        // evenly spaced DDIM timestep ladder ending at t=0 (abar(0)=1)
        std::vector<int> ts(static_cast<size_t>(S));
        for (int i = 0; i < S; ++i) ts[static_cast<size_t>(i)] = ((S - 1 - i) * (T - 1)) / (S - 1 == 0 ? 1 : S - 1);
        for (int i = 0; i < S; ++i) {
            int t = ts[static_cast<size_t>(i)];
            if (t == 0) break;  // abar(0) == 1: the state already is x0
            auto x0p = predict_x0(x, t, cond);
            float s = sched_.signal(t);
            float nf = std::max(sched_.noise(t), kNoiseFloor);
            int t_prev = i + 1 < S ? ts[static_cast<size_t>(i + 1)] : 0;
            float sp = sched_.signal(t_prev), np = sched_.noise(t_prev);
            for (size_t j = 0; j < x.size(); ++j) {
                float eps_hat = (x[j] - s * x0p[j]) / nf;
                x[j] = sp * x0p[j] + np * eps_hat;
            }
        }
        return signal_to_image(x, cfg_.height, cfg_.width);
    }

    // One denoising-loss evaluation; optionally accumulates denoiser /
    // encoder-side gradients for training, and always fills dcond when asked.
    // Loss is the mean squared error between eps and the prediction.
    double eps_loss(const std::vector<float>& x0, int t, const std::vector<float>& eps,
                    const std::vector<float>& cond, std::vector<float>* dcond, bool accumulate_param_grads) {
        auto xt = add_noise(sched_, x0, t, eps);
        auto in = pack_input(xt, t, cond);
        auto a1 = l1_.forward(in);
        auto h1 = nn::relu(a1);
        auto a2 = l2_.forward(h1);
        auto h2 = nn::relu(a2);
        auto out = l3_.forward(h2);  // x0 head
        const float s = sched_.signal(t);
        const float nf = std::max(sched_.noise(t), kNoiseFloor);
        double loss = 0.0;
        std::vector<float> dout(out.size());
        const double inv_n = 1.0 / static_cast<double>(out.size());
        for (size_t i = 0; i < out.size(); ++i) {
            double eps_hat = (static_cast<double>(xt[i]) - s * out[i]) / nf;
            double r = eps_hat - eps[i];
            loss += r * r * inv_n;
            dout[i] = static_cast<float>(2.0 * r * inv_n * (-s / nf));
        }
        if (!std::isfinite(loss)) throw NonFiniteLoss();
        if (dcond || accumulate_param_grads) {
            auto dh2 = l3_.backward(h2, dout);
            auto da2 = nn::relu_backward(a2, dh2);
            auto dh1 = l2_.backward(h1, da2);
            auto da1 = nn::relu_backward(a1, dh1);
            auto din = l1_.backward(in, da1);
            if (!accumulate_param_grads) zero_last_grads();
            if (dcond) {
                dcond->assign(static_cast<size_t>(cfg_.d), 0.0f);
                size_t off = static_cast<size_t>(pixel_dim() + cfg_.t_dim);
                for (int i = 0; i < cfg_.d; ++i) (*dcond)[static_cast<size_t>(i)] = din[off + static_cast<size_t>(i)];
            }
        }
        return loss;
    }

    // Reconstruction form of the same objective: mean squared error of the
    // x0 head against the clean signal. Equivalent target up to a per-t
    // weight, but numerically flat across timesteps, so backend pretraining
    // uses this one.
    double x0_loss(const std::vector<float>& x0, int t, const std::vector<float>& eps,
                   const std::vector<float>& cond, std::vector<float>* dcond, bool accumulate_param_grads) {
        auto xt = add_noise(sched_, x0, t, eps);
        auto in = pack_input(xt, t, cond);
        auto a1 = l1_.forward(in);
        auto h1 = nn::relu(a1);
        auto a2 = l2_.forward(h1);
        auto h2 = nn::relu(a2);
        auto out = l3_.forward(h2);
        double loss = 0.0;
        std::vector<float> dout(out.size());
        const double inv_n = 1.0 / static_cast<double>(out.size());
        for (size_t i = 0; i < out.size(); ++i) {
            double r = static_cast<double>(out[i]) - x0[i];
            loss += r * r * inv_n;
            dout[i] = static_cast<float>(2.0 * r * inv_n);
        }
        if (!std::isfinite(loss)) throw NonFiniteLoss();
        if (dcond || accumulate_param_grads) {
            auto dh2 = l3_.backward(h2, dout);
            auto da2 = nn::relu_backward(a2, dh2);
            auto dh1 = l2_.backward(h1, da2);
            auto da1 = nn::relu_backward(a1, dh1);
            auto din = l1_.backward(in, da1);
            if (!accumulate_param_grads) zero_last_grads();
            if (dcond) {
                dcond->assign(static_cast<size_t>(cfg_.d), 0.0f);
                size_t off = static_cast<size_t>(pixel_dim() + cfg_.t_dim);
                for (int i = 0; i < cfg_.d; ++i) (*dcond)[static_cast<size_t>(i)] = din[off + static_cast<size_t>(i)];
            }
        }
        return loss;
    }

    // Hash of the ReLU on/off pattern for one (x0, t, eps, cond) input. The
    // denoiser is piecewise linear in cond; finite-difference probes are only
    // valid while both endpoints stay inside the same linear region, which
    // callers can confirm by comparing this hash at the probe endpoints.
    uint64_t activation_pattern(const std::vector<float>& x0, int t, const std::vector<float>& eps,
                                const std::vector<float>& cond) const {
        auto xt = add_noise(sched_, x0, t, eps);
        auto in = pack_input(xt, t, cond);
        auto a1 = l1_.forward(in);
        auto h1 = nn::relu(a1);
        auto a2 = l2_.forward(h1);
        std::vector<uint8_t> bits;
        bits.reserve(a1.size() + a2.size());
        for (float v : a1) bits.push_back(v > 0.0f);
        for (float v : a2) bits.push_back(v > 0.0f);
        return fnv1a(bits.data(), bits.size());
    }

    // const wrapper for callers that only need the conditioning gradient
    double eps_loss_grad_cond(const std::vector<float>& x0, int t, const std::vector<float>& eps,
                              const std::vector<float>& cond, std::vector<float>* dcond) const override {
        // backward needs mutable grad buffers; they are zeroed again before
        // returning, so the weights and observable state stay untouched
        auto* self = const_cast<ToyBackend*>(this);
        return self->eps_loss(x0, t, eps, cond, dcond, false);
    }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw Error("cannot write " + path);
        f.write("D3MB", 4);
        uint32_t version = 1;
        f.write(reinterpret_cast<const char*>(&version), sizeof(version));
        f.write(reinterpret_cast<const char*>(&cfg_), sizeof(cfg_));
        uint8_t tr = trained_ ? 1 : 0;
        f.write(reinterpret_cast<const char*>(&tr), 1);
        uint32_t nv = static_cast<uint32_t>(enc_.vocab().size());
        f.write(reinterpret_cast<const char*>(&nv), sizeof(nv));
        for (const auto& tok : enc_.vocab()) {
            uint32_t n = static_cast<uint32_t>(tok.size());
            f.write(reinterpret_cast<const char*>(&n), sizeof(n));
            f.write(tok.data(), n);
        }
        nn::write_param(f, enc_.table());
        for (const auto* p : denoiser_params()) nn::write_param(f, *p);
    }

    static ToyBackend load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw BackendUnavailable("cannot read " + path);
        char magic[4];
        f.read(magic, 4);
        if (std::string(magic, 4) != "D3MB") throw BackendUnavailable(path + " is not a backend checkpoint");
        uint32_t version = 0;
        f.read(reinterpret_cast<char*>(&version), sizeof(version));
        if (version != 1) throw VersionUnsupported(version);
        ToyBackendConfig cfg;
        f.read(reinterpret_cast<char*>(&cfg), sizeof(cfg));
        uint8_t tr = 0;
        f.read(reinterpret_cast<char*>(&tr), 1);
        uint32_t nv = 0;
        f.read(reinterpret_cast<char*>(&nv), sizeof(nv));
        std::vector<std::string> vocab;
        for (uint32_t i = 0; i < nv; ++i) {
            uint32_t n = 0;
            f.read(reinterpret_cast<char*>(&n), sizeof(n));
            std::string tok(n, '\0');
            f.read(tok.data(), n);
            vocab.push_back(std::move(tok));
        }
        ToyBackend b(cfg, std::move(vocab), 0);
        b.trained_ = tr != 0;
        nn::read_param(f, b.enc_.table());
        for (auto* p : b.denoiser_params()) nn::read_param(f, *p);
        if (!f) throw BackendUnavailable(path + ": truncated checkpoint");
        return b;
    }

  private:
    std::vector<float> pack_input(const std::vector<float>& xt, int t, const std::vector<float>& cond) const {
        if (static_cast<int>(xt.size()) != pixel_dim()) throw Error("denoiser input shape mismatch");
        if (static_cast<int>(cond.size()) != cfg_.d) throw ConfigInvalid("conditioning width != d");
        std::vector<float> in;
        in.reserve(xt.size() + static_cast<size_t>(cfg_.t_dim + cfg_.d));
        in.insert(in.end(), xt.begin(), xt.end());
        auto te = time_embedding(t);
        in.insert(in.end(), te.begin(), te.end());
        in.insert(in.end(), cond.begin(), cond.end());
        return in;
    }

    void zero_last_grads() {
        for (auto* p : denoiser_params()) p->zero_grad();
    }

    ToyBackendConfig cfg_;
    NoiseSchedule sched_;
    TextEncoder enc_;
    nn::Linear l1_, l2_, l3_;
    bool trained_ = false;
};

// ---- toy backend training ----

struct ToyTrainConfig {
    int epochs = 30;
    double lr = 2e-3;
    int batch = 8;
    // fraction of samples whose class token is replaced by the generic
    // "object" token, keeping class-name conditioning deliberately coarse
    double cond_dropout = 0.3;
    uint64_t seed = 1;
};

inline std::vector<std::string> toy_vocabulary(const std::vector<std::string>& class_names) {
    std::vector<std::string> v = {"a", "photo", "of", "object", "natural", "collage", "images"};
    for (const auto& n : class_names)
        if (std::find(v.begin(), v.end(), n) == v.end()) v.push_back(n);
    v.push_back(PromptTemplate::placeholder);
    return v;
}

// Trains denoiser + embedding table on a class-labeled collage corpus with
// "a photo of <name>" prompts. Returns per-epoch mean losses.
inline std::vector<double> train_toy_backend(ToyBackend& backend, const std::vector<Collage>& corpus,
                                             const std::vector<std::string>& class_names,
                                             const ToyTrainConfig& cfg) {
    if (corpus.empty()) throw EmptyCollageSet();
    std::vector<std::vector<float>> signals;
    signals.reserve(corpus.size());
    for (const auto& c : corpus) {
        const Image& img = (c.pixels.h == backend.height() && c.pixels.w == backend.width())
                               ? c.pixels
                               : resize(c.pixels, backend.height(), backend.width());
        signals.push_back(image_to_signal(img));
    }

    Rng rng(cfg.seed);
    nn::Adam opt;
    opt.lr = cfg.lr;
    auto& table = backend.text_encoder_mut().table();
    std::vector<nn::Param*> params = backend.denoiser_params();
    params.push_back(&table);

    const int T = backend.schedule().cfg.timesteps;
    const auto& enc = backend.text_encoder();
    std::vector<double> epoch_losses;
    for (int e = 0; e < cfg.epochs; ++e) {
        double total = 0.0;
        int steps = static_cast<int>((corpus.size() + cfg.batch - 1) / cfg.batch);
        for (int s = 0; s < steps; ++s) {
            for (int b = 0; b < cfg.batch; ++b) {
                size_t i = rng.below(corpus.size());
                int t = static_cast<int>(rng.below(static_cast<uint64_t>(T)));
                std::vector<float> eps(signals[i].size());
                for (auto& v : eps) v = static_cast<float>(rng.normal());
                std::vector<std::string> prompt = {"a", "photo", "of",
                                                   rng.uniform() < cfg.cond_dropout
                                                       ? std::string("object")
                                                       : class_names[static_cast<size_t>(corpus[i].class_id)]};
                auto cond = enc.encode_tokens(prompt);
                std::vector<float> dcond;
                total += backend.x0_loss(signals[i], t, eps, cond, &dcond, true);
                // route the conditioning gradient into the token embeddings
                float jac = 1.0f / static_cast<float>(prompt.size());
                for (const auto& tok : prompt) {
                    int id = enc.token_id(tok);
                    for (int j = 0; j < backend.d(); ++j)
                        table.g[static_cast<size_t>(id) * backend.d() + static_cast<size_t>(j)] +=
                            jac * dcond[static_cast<size_t>(j)];
                }
            }
            opt.step(params);
        }
        double mean = total / static_cast<double>(steps * cfg.batch);
        if (!std::isfinite(mean)) throw DivergedTraining();
        epoch_losses.push_back(mean);
    }
    if (cfg.epochs > 0) backend.mark_trained();
    return epoch_losses;
}

// ---- external adapter ----
//
// Placeholder for a remote pretrained latent diffusion model. Every request
// is recorded; calls fail until a real service binding is configured.
class ExternalBackend : public DiffusionBackend {
  public:
    ExternalBackend(std::string model_id, std::string checkpoint_path, int h, int w, int d)
        : model_id_(std::move(model_id)), checkpoint_(std::move(checkpoint_path)), h_(h), w_(w), d_(d) {}

    int height() const override { return h_; }
    int width() const override { return w_; }
    int d() const override { return d_; }
    const TextEncoder& text_encoder() const override {
        throw BackendUnavailable("external adapter has no local text encoder");
    }

    Image generate(uint64_t seed, const std::vector<float>& cond) const override {
        std::ostringstream os;
        os << "generate model=" << model_id_ << " seed=" << seed << " cond_hash=" << hex64(hash_floats(cond));
        request_log_.push_back(os.str());
        throw BackendUnavailable("external model '" + model_id_ + "' is not connected");
    }

    uint64_t fingerprint() const override {
        uint64_t h = fnv1a(model_id_.data(), model_id_.size());
        return fnv1a(checkpoint_.data(), checkpoint_.size(), h);
    }

    const std::vector<std::string>& request_log() const { return request_log_; }

  private:
    std::string model_id_;
    std::string checkpoint_;
    int h_, w_, d_;
    mutable std::vector<std::string> request_log_;
};

}  // namespace d3m
