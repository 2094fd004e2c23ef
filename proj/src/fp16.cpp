#include "facetrain/fp16.hpp"

#include <cstring>

namespace facetrain {

std::uint16_t float_to_half_bits(float x) {
    std::uint32_t f;
    std::memcpy(&f, &x, sizeof f);
    const std::uint16_t sign = static_cast<std::uint16_t>((f >> 16) & 0x8000u);
    const std::uint32_t f_exp = (f >> 23) & 0xffu;
    std::uint32_t f_sig = f & 0x7fffffu;

    if (f_exp == 0xffu) {  // inf / NaN
        if (f_sig == 0) return sign | 0x7c00u;
        return sign | 0x7c00u | static_cast<std::uint16_t>(f_sig >> 13) | 1u;  // keep NaN quiet
    }
    // rebias: half exponent = float exponent - 127 + 15
    const int e = static_cast<int>(f_exp) - 127;
    if (e > 15) return sign | 0x7c00u;  // overflow -> inf
    if (e >= -14) {
        // normal half; round the 23-bit significand to 10 bits, ties to even
        std::uint16_t h = static_cast<std::uint16_t>(((e + 15) << 10) | (f_sig >> 13));
        const std::uint32_t rem = f_sig & 0x1fffu;
        if (rem > 0x1000u || (rem == 0x1000u && (h & 1u))) ++h;  // may carry into exponent
        return sign | h;
    }
    if (e < -25) return sign;  // underflows to zero even after rounding
    // subnormal half: implicit leading 1, shifted by the exponent deficit
    f_sig |= 0x800000u;
    const int shift = -e - 14 + 13;  // 14..24
    std::uint16_t h = static_cast<std::uint16_t>(f_sig >> shift);
    const std::uint32_t rem = f_sig & ((1u << shift) - 1u);
    const std::uint32_t half_ulp = 1u << (shift - 1);
    if (rem > half_ulp || (rem == half_ulp && (h & 1u))) ++h;
    return sign | h;
}

float half_bits_to_float(std::uint16_t h) {
    const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
    const std::uint32_t exp = (h >> 10) & 0x1fu;
    const std::uint32_t sig = h & 0x3ffu;
    std::uint32_t f;
    if (exp == 0) {
        if (sig == 0) {
            f = sign;
        } else {  // subnormal: renormalize
            int e = 0;
            std::uint32_t s = sig;
            while ((s & 0x400u) == 0) {
                s <<= 1;
                ++e;
            }
            f = sign | static_cast<std::uint32_t>(113 - e) << 23 | ((s & 0x3ffu) << 13);
        }
    } else if (exp == 0x1fu) {
        f = sign | 0x7f800000u | (sig << 13);
    } else {
        f = sign | ((exp + 112) << 23) | (sig << 13);
    }
    float out;
    std::memcpy(&out, &f, sizeof out);
    return out;
}

float fp16_round(float x) { return half_bits_to_float(float_to_half_bits(x)); }

double fp16_round(double x) { return static_cast<double>(fp16_round(static_cast<float>(x))); }

float fp16_round_clamped(float x) {
    const float r = fp16_round(x);
    if (r > 65504.0f) return 65504.0f;
    if (r < -65504.0f) return -65504.0f;
    return r;
}

}  // namespace facetrain
