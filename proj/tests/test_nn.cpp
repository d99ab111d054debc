// Micro NN stack: layers, losses, optimizers, classifier nets.

#include <catch_amalgamated.hpp>
#include <cmath>
#include <filesystem>

#include "d3m/classifier.hpp"
#include "d3m/nn.hpp"
#include "d3m/shapes.hpp"

using namespace d3m;

namespace {

// central finite difference of a scalar function of one parameter entry
template <typename F>
double fd(F f, float& slot, double h = 1e-3) {
    float keep = slot;
    slot = static_cast<float>(keep + h);
    double up = f();
    slot = static_cast<float>(keep - h);
    double down = f();
    slot = keep;
    return (up - down) / (2.0 * h);
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

}  // namespace

TEST_CASE("linear backward matches finite differences") {
    Rng rng(21);
    nn::Linear lin(5, 3);
    lin.init(rng);
    std::vector<float> x(5), target(3);
    for (auto& v : x) v = static_cast<float>(rng.normal());
    for (auto& v : target) v = static_cast<float>(rng.normal());
    auto loss = [&] {
        auto y = lin.forward(x);
        double s = 0.0;
        for (int i = 0; i < 3; ++i) s += 0.5 * (y[i] - target[i]) * (y[i] - target[i]);
        return s;
    };
    auto y = lin.forward(x);
    std::vector<float> dy(3);
    for (int i = 0; i < 3; ++i) dy[i] = y[i] - target[i];
    lin.w.zero_grad();
    lin.b.zero_grad();
    auto dx = lin.backward(x, dy);
    for (size_t j = 0; j < lin.w.size(); ++j) REQUIRE(rel_err(lin.w.g[j], fd(loss, lin.w.v[j])) < 1e-3);
    for (size_t j = 0; j < lin.b.size(); ++j) REQUIRE(rel_err(lin.b.g[j], fd(loss, lin.b.v[j])) < 1e-3);
    for (size_t j = 0; j < x.size(); ++j) REQUIRE(rel_err(dx[j], fd(loss, x[j])) < 1e-3);
}

TEST_CASE("conv3x3 backward matches finite differences") {
    Rng rng(22);
    const int h = 4, w = 4;
    nn::Conv3x3 conv(2, 2);
    conv.init(rng);
    std::vector<float> x(2 * h * w), target(2 * h * w);
    for (auto& v : x) v = static_cast<float>(rng.normal());
    for (auto& v : target) v = static_cast<float>(rng.normal());
    auto loss = [&] {
        auto y = conv.forward(x, h, w);
        double s = 0.0;
        for (size_t i = 0; i < y.size(); ++i) s += 0.5 * (y[i] - target[i]) * (y[i] - target[i]);
        return s;
    };
    auto y = conv.forward(x, h, w);
    std::vector<float> dy(y.size());
    for (size_t i = 0; i < y.size(); ++i) dy[i] = y[i] - target[i];
    conv.w.zero_grad();
    conv.b.zero_grad();
    auto dx = conv.backward(x, dy, h, w);
    for (size_t j = 0; j < conv.w.size(); j += 7) REQUIRE(rel_err(conv.w.g[j], fd(loss, conv.w.v[j])) < 3e-3);
    for (size_t j = 0; j < conv.b.size(); ++j) REQUIRE(rel_err(conv.b.g[j], fd(loss, conv.b.v[j])) < 3e-3);
    for (size_t j = 0; j < x.size(); j += 5) REQUIRE(rel_err(dx[j], fd(loss, x[j])) < 1e-3);
}

TEST_CASE("softmax is a probability vector and shift-invariant") {
    std::vector<float> logits{1.0f, 2.0f, -0.5f};
    auto p = nn::softmax(logits);
    double s = 0.0;
    for (float v : p) {
        REQUIRE(v > 0.0f);
        s += v;
    }
    REQUIRE(s == Catch::Approx(1.0).margin(1e-6));
    std::vector<float> shifted{101.0f, 102.0f, 99.5f};
    auto q = nn::softmax(shifted);
    for (int i = 0; i < 3; ++i) REQUIRE(p[i] == Catch::Approx(q[i]).margin(1e-6));
}

TEST_CASE("cross entropy equals -log softmax and its gradient checks out") {
    std::vector<float> logits{0.3f, -1.2f, 2.2f, 0.0f};
    auto p = nn::softmax(logits);
    std::vector<float> dl;
    double ce = nn::cross_entropy(logits, 2, &dl);
    REQUIRE(ce == Catch::Approx(-std::log(p[2])).margin(1e-6));
    auto loss = [&] { return nn::cross_entropy(logits, 2); };
    for (size_t j = 0; j < logits.size(); ++j) REQUIRE(rel_err(dl[j], fd(loss, logits[j])) < 2e-3);
    REQUIRE_THROWS_AS(nn::cross_entropy(logits, 7), LabelOutOfRange);
}

TEST_CASE("soft cross entropy gradient is softmax minus target") {
    std::vector<float> logits{0.5f, -0.5f, 1.5f};
    std::vector<float> target{0.2f, 0.3f, 0.5f};
    std::vector<float> dl;
    nn::soft_cross_entropy(logits, target.data(), &dl);
    auto p = nn::softmax(logits);
    for (int i = 0; i < 3; ++i) REQUIRE(dl[i] == Catch::Approx(p[i] - target[i]).margin(1e-6));
}

TEST_CASE("adam and sgd both descend a quadratic") {
    for (bool use_adam : {true, false}) {
        nn::Param p(1);
        p.v[0] = 5.0f;
        nn::Adam adam;
        adam.lr = 0.1;
        nn::Sgd sgd;
        sgd.lr = 0.1;
        for (int i = 0; i < 200; ++i) {
            p.g[0] = 2.0f * p.v[0];  // d/dx of x^2
            if (use_adam)
                adam.step({&p});
            else
                sgd.step({&p});
        }
        REQUIRE(std::abs(p.v[0]) < 0.1f);
    }
}

TEST_CASE("count_params and hash_params track exact contents") {
    nn::Linear lin(3, 2);
    // 3*2 weights + 2 biases
    REQUIRE(nn::count_params({&lin.w, &lin.b}) == 8);
    uint64_t h0 = nn::hash_params({&lin.w, &lin.b});
    lin.w.v[4] += 1e-6f;
    REQUIRE(nn::hash_params({&lin.w, &lin.b}) != h0);
}

TEST_CASE("convnet parameter census matches the architecture arithmetic") {
    // {16x16 in, k=4, width=8, blocks=1}:
    //   conv 3->8:  8*3*9 + 8  = 224
    //   fc 8*8*8 -> 4: 512*4 + 4 = 2052   (one 2x pool: 16 -> 8)
    const ConvNet net(ConvNetConfig{16, 16, 4, 8, 1});
    REQUIRE(nn::count_params(net.params()) == 224 + 2052);
}

TEST_CASE("convnet save/load preserves every weight") {
    ConvNet net(ConvNetConfig{8, 8, 3, 6, 2});
    net.init(31);
    std::string path = (std::filesystem::temp_directory_path() / "d3m_test_net.ckpt").string();
    net.save(path);
    ConvNet back = ConvNet::load(path);
    REQUIRE(back.param_hash() == net.param_hash());
    REQUIRE(back.config() == net.config());
    std::filesystem::remove(path);
}

TEST_CASE("convnet logits auto-resizes image input") {
    ConvNet net(ConvNetConfig{8, 8, 3, 6, 1});
    net.init(4);
    Image big(16, 16);
    for (auto& p : big.px) p = 0.5f;
    auto lg = net.logits(big);
    REQUIRE(lg.size() == 3);
}

TEST_CASE("fit_classifier reaches high accuracy on an easy problem") {
    auto train = shapes::make_dataset(3, 32, 16, 16, 1);
    auto test = shapes::make_dataset(3, 16, 16, 16, 2);
    ConvNet net(ConvNetConfig{16, 16, 3, 12, 2});
    net.init(7);
    auto losses = fit_classifier(net, train.images, 15, 2e-3, 11);
    REQUIRE(losses.front() > losses.back());
    int hit = 0;
    for (const auto& ex : test.images) hit += predict(net, ex.pixels) == ex.label;
    REQUIRE(hit >= static_cast<int>(test.images.size() * 3) / 4);
}

TEST_CASE("teacher model freezes its parameter hash") {
    ConvNet net(ConvNetConfig{8, 8, 2, 4, 1});
    net.init(9);
    TeacherModel teacher(net);
    REQUIRE(teacher.frozen_hash() == teacher.param_hash());
    Image img(8, 8);
    auto lg = teacher.logits(img);
    REQUIRE(lg.size() == 2);
    REQUIRE(teacher.param_hash() == teacher.frozen_hash());
}
