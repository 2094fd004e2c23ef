#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "facetrain/fp16.hpp"
#include "oracles.hpp"

using namespace facetrain;

TEST_CASE("exactly representable values pass through") {
    for (float v : {0.0f, 1.0f, -1.0f, 0.5f, 2.0f, 3.5f, 1024.0f, 65504.0f, -65504.0f})
        CHECK(fp16_round(v) == v);
    CHECK(std::signbit(fp16_round(-0.0f)));
}

TEST_CASE("pinned roundings") {
    // 2049 is one past the 2048..4096 half grid (step 2); ties go to even
    CHECK(fp16_round(2049.0f) == 2048.0f);
    CHECK(fp16_round(2051.0f) == 2052.0f);
    // below half the smallest subnormal -> zero
    CHECK(fp16_round(1e-8f) == 0.0f);
    CHECK(fp16_round(-1e-8f) == -0.0f);
    // smallest subnormal is 2^-24
    CHECK(fp16_round(std::ldexp(1.0f, -24)) == std::ldexp(1.0f, -24));
    // halfway between 0 and 2^-24 rounds to even (zero)
    CHECK(fp16_round(std::ldexp(1.0f, -25)) == 0.0f);
    // just above halfway rounds up
    CHECK(fp16_round(std::ldexp(1.2f, -25)) == std::ldexp(1.0f, -24));
    // smallest normal
    CHECK(fp16_round(std::ldexp(1.0f, -14)) == std::ldexp(1.0f, -14));
    // 1 + 2^-11 is halfway between 1 and 1+2^-10: ties to even -> 1
    CHECK(fp16_round(1.0f + std::ldexp(1.0f, -11)) == 1.0f);
    CHECK(fp16_round(1.0f + std::ldexp(3.0f, -11)) == 1.0f + std::ldexp(1.0f, -9));
}

TEST_CASE("overflow behavior: infinity vs clamped") {
    CHECK(std::isinf(fp16_round(1e6f)));
    CHECK(fp16_round(1e6f) > 0);
    CHECK(std::isinf(fp16_round(-1e6f)));
    CHECK(fp16_round_clamped(1e6f) == 65504.0f);
    CHECK(fp16_round_clamped(-1e6f) == -65504.0f);
    CHECK(fp16_round_clamped(1.5f) == 1.5f);
    // 65520 is the tie between 65504 and the (unrepresentable) 65536
    CHECK(std::isinf(fp16_round(65520.0f)));
    CHECK(fp16_round(65519.0f) == 65504.0f);
}

TEST_CASE("specials survive") {
    CHECK(std::isnan(fp16_round(std::numeric_limits<float>::quiet_NaN())));
    CHECK(std::isinf(fp16_round(std::numeric_limits<float>::infinity())));
    CHECK(fp16_round(-std::numeric_limits<float>::infinity()) ==
          -std::numeric_limits<float>::infinity());
}

TEST_CASE("bit-level encodings of landmark values") {
    CHECK(float_to_half_bits(0.0f) == 0x0000);
    CHECK(float_to_half_bits(-0.0f) == 0x8000);
    CHECK(float_to_half_bits(1.0f) == 0x3C00);
    CHECK(float_to_half_bits(-2.0f) == 0xC000);
    CHECK(float_to_half_bits(65504.0f) == 0x7BFF);
    CHECK(float_to_half_bits(std::ldexp(1.0f, -24)) == 0x0001);
    CHECK(float_to_half_bits(std::numeric_limits<float>::infinity()) == 0x7C00);
    CHECK(half_bits_to_float(0x3C00) == 1.0f);
    CHECK(half_bits_to_float(0x0001) == std::ldexp(1.0f, -24));
    CHECK(half_bits_to_float(0x7BFF) == 65504.0f);
}

TEST_CASE("round trip is idempotent") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<float> u(-70000.0f, 70000.0f);
    for (int i = 0; i < 10000; ++i) {
        const float once = fp16_round(u(rng));
        CHECK(fp16_round(once) == once);
    }
}

TEST_CASE("agrees with the arithmetic reference across magnitudes") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<float> mant(-2.0f, 2.0f);
    std::uniform_int_distribution<int> expo(-30, 18);
    for (int i = 0; i < 100000; ++i) {
        const float x = std::ldexp(mant(rng), expo(rng));
        const float got = fp16_round(x);
        const float want = oracle::fp16_reference(x);
        if (std::isinf(want)) {
            CHECK(std::isinf(got));
            CHECK(std::signbit(got) == std::signbit(want));
        } else {
            CHECK(got == want);
        }
    }
}

TEST_CASE("double overload matches the float path for float-representable input") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(-100.0, 100.0);
    for (int i = 0; i < 1000; ++i) {
        const float x = static_cast<float>(u(rng));
        CHECK(fp16_round(static_cast<double>(x)) == static_cast<double>(fp16_round(x)));
    }
}
