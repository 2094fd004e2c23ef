#pragma once

#include <cstdint>

namespace facetrain {

// IEEE 754 binary16 conversion: round-to-nearest-even, subnormals, and
// infinities/NaN preserved.
std::uint16_t float_to_half_bits(float x);
float half_bits_to_float(std::uint16_t h);

// float -> half -> float round trip. Training use clamps overflow to the
// largest finite half value (±65504) instead of infinity.
float fp16_round(float x);
double fp16_round(double x);
float fp16_round_clamped(float x);

}  // namespace facetrain
