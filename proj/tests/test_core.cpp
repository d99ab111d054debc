// RNG, hashing, half-precision, and image primitives.

#include <catch_amalgamated.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "d3m/half.hpp"
#include "d3m/hash.hpp"
#include "d3m/image.hpp"
#include "d3m/rng.hpp"

using namespace d3m;

TEST_CASE("rng is deterministic per seed") {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
    bool differs = false;
    Rng a2(42);
    for (int i = 0; i < 100; ++i) differs |= a2.next_u64() != c.next_u64();
    REQUIRE(differs);
}

TEST_CASE("rng uniform stays in [0,1) and below(n) stays in range") {
    Rng r(7);
    for (int i = 0; i < 10000; ++i) {
        double u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        REQUIRE(r.below(17) < 17);
    }
}

TEST_CASE("rng normal has roughly standard moments") {
    Rng r(11);
    double sum = 0.0, sq = 0.0;
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
        double x = r.normal();
        sum += x;
        sq += x * x;
    }
    REQUIRE(std::abs(sum / n) < 0.02);
    REQUIRE(std::abs(sq / n - 1.0) < 0.03);
}

TEST_CASE("mix_seed separates streams") {
    REQUIRE(mix_seed(1, 2, 3) == mix_seed(1, 2, 3));
    REQUIRE(mix_seed(1, 2, 3) != mix_seed(1, 3, 2));
    REQUIRE(mix_seed(1, 2) != mix_seed(2, 2));
}

TEST_CASE("fnv1a matches the reference test vectors") {
    // frozen from an independent implementation of 64-bit FNV-1a
    REQUIRE(fnv1a("", 0) == 0xcbf29ce484222325ULL);
    REQUIRE(fnv1a("a", 1) == 0xaf63dc4c8601ec8cULL);
    REQUIRE(fnv1a("hello world", 11) == 0x779a65e7023cd2e7ULL);
}

TEST_CASE("crc32 matches the reference test vectors") {
    // frozen from zlib.crc32; "123456789" is the classic CRC-32 check value
    REQUIRE(crc32("", 0) == 0x0u);
    REQUIRE(crc32("123456789", 9) == 0xcbf43926u);
    REQUIRE(crc32("d3m artifact", 12) == 0x6a260e23u);
}

TEST_CASE("hash_floats matches the byte-level fnv of the raw values") {
    // frozen: FNV-1a over the little-endian float32 bytes of [1, 2.5, -3.25]
    REQUIRE(hash_floats({1.0f, 2.5f, -3.25f}) == 0x59081ea897746be8ULL);
}

TEST_CASE("hex64 renders fixed-width lowercase hex") {
    REQUIRE(hex64(0) == "0000000000000000");
    REQUIRE(hex64(0xdeadbeefULL) == "00000000deadbeef");
}

TEST_CASE("float_to_half matches reference conversions") {
    // frozen from numpy float16 casts (round-to-nearest-even)
    REQUIRE(float_to_half(0.0f) == 0x0000);
    REQUIRE(float_to_half(1.0f) == 0x3c00);
    REQUIRE(float_to_half(0.5f) == 0x3800);
    REQUIRE(float_to_half(0.1f) == 0x2e66);
    REQUIRE(float_to_half(2.0f / 3.0f) == 0x3955);
    REQUIRE(float_to_half(65504.0f) == 0x7bff);
    REQUIRE(float_to_half(1e-8f) == 0x0000);   // below the subnormal range
    REQUIRE(float_to_half(100000.0f) == 0x7c00);  // overflow to +inf
    REQUIRE(half_to_float(0x2e66) == Catch::Approx(0.0999755859375).epsilon(0));
}

TEST_CASE("quantize_half is idempotent and bounded") {
    Rng r(3);
    for (int i = 0; i < 1000; ++i) {
        float v = static_cast<float>(r.uniform());
        float q = quantize_half(v);
        REQUIRE(quantize_half(q) == q);
        REQUIRE(std::abs(q - v) <= 0.0005f);  // probabilities live in [0,1]
    }
}

TEST_CASE("crop takes the exact window and rejects out-of-bounds") {
    Image img(4, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<float>(y * 4 + x) / 16.0f;
    Image w = crop(img, 1, 2, 2, 2);
    REQUIRE(w.h == 2);
    REQUIRE(w.w == 2);
    REQUIRE(w.at(0, 0, 0) == img.at(1, 2, 0));
    REQUIRE(w.at(1, 1, 2) == img.at(2, 3, 2));
    REQUIRE_THROWS_AS(crop(img, 3, 3, 2, 2), Error);
}

TEST_CASE("resize to the same size is the identity") {
    Rng r(5);
    Image img(6, 7);
    for (auto& p : img.px) p = static_cast<float>(r.uniform());
    Image out = resize(img, 6, 7);
    for (size_t i = 0; i < img.px.size(); ++i) REQUIRE(out.px[i] == Catch::Approx(img.px[i]).margin(1e-6));
}

TEST_CASE("resize of a constant image stays constant") {
    Image img(8, 8);
    for (auto& p : img.px) p = 0.375f;
    for (auto [h, w] : {std::pair{4, 4}, {16, 16}, {3, 5}}) {
        Image out = resize(img, h, w);
        for (float p : out.px) REQUIRE(p == Catch::Approx(0.375f).margin(1e-6));
    }
}

TEST_CASE("resize is a convex combination of source pixels") {
    // normalized filter taps: every output stays inside the source range
    Image img(8, 8);
    Rng r(9);
    float lo = 1.0f, hi = 0.0f;
    for (auto& p : img.px) {
        p = static_cast<float>(r.uniform());
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
    for (auto [h, w] : {std::pair{4, 4}, {2, 2}, {16, 16}, {5, 7}}) {
        Image out = resize(img, h, w);
        for (float p : out.px) {
            REQUIRE(p >= lo - 1e-6f);
            REQUIRE(p <= hi + 1e-6f);
        }
    }
}

TEST_CASE("downscaling a ramp stays monotone along the ramp axis") {
    Image img(4, 8);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 8; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<float>(x) / 8.0f;
    Image out = resize(img, 2, 4);
    for (int y = 0; y < 2; ++y)
        for (int x = 1; x < 4; ++x) REQUIRE(out.at(y, x, 0) > out.at(y, x - 1, 0));
}

TEST_CASE("paste writes the block and content_hash notices") {
    Image dst(4, 4), src(2, 2);
    for (auto& p : src.px) p = 1.0f;
    uint64_t before = dst.content_hash();
    paste(dst, src, 1, 1);
    REQUIRE(dst.at(1, 1, 0) == 1.0f);
    REQUIRE(dst.at(2, 2, 2) == 1.0f);
    REQUIRE(dst.at(0, 0, 0) == 0.0f);
    REQUIRE(dst.content_hash() != before);
}

TEST_CASE("ppm round trip is exact on 8-bit-quantized pixels") {
    Image img(5, 3);
    Rng r(13);
    for (auto& p : img.px) p = std::round(static_cast<float>(r.uniform()) * 255.0f) / 255.0f;
    std::string path = (std::filesystem::temp_directory_path() / "d3m_test_roundtrip.ppm").string();
    write_ppm(img, path);
    Image back = read_ppm(path);
    REQUIRE(back.h == img.h);
    REQUIRE(back.w == img.w);
    for (size_t i = 0; i < img.px.size(); ++i) REQUIRE(back.px[i] == Catch::Approx(img.px[i]).margin(1.0 / 510));
    std::filesystem::remove(path);
}

TEST_CASE("finite_unit_range flags NaN and out-of-range pixels") {
    Image img(2, 2);
    REQUIRE(img.finite_unit_range());
    img.at(0, 0, 0) = std::nanf("");
    REQUIRE_FALSE(img.finite_unit_range());
    img.at(0, 0, 0) = 1.5f;
    REQUIRE_FALSE(img.finite_unit_range());
}
