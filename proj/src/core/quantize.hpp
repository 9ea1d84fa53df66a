#pragma once

#include <span>

#include "tensor.hpp"

namespace ody {

// S = max(|gamma * max(w)|, |beta * min(w)|) / (2^{N-1} - 1).
// All-zero (or fully clipped-to-zero) input yields kMinScale.
float compute_scale_symmetric(std::span<const float> w, int bits, float gamma, float beta);

struct SymmetricQuant {
    std::vector<std::int8_t> codes;
    float scale = 0.0f;
};

// codes = clamp(round(w/S), -2^{N-1}, 2^{N-1}-1); round half away from zero.
SymmetricQuant quantize_symmetric(std::span<const float> w, int bits, float gamma, float beta);

struct AsymmetricQuant {
    std::vector<std::int8_t> codes;
    float scale = 0.0f;
    float zero_point = 0.0f; // D(q) = q * scale + zero_point
};

AsymmetricQuant quantize_asymmetric(std::span<const float> x, int bits);

// PerChannel: one scale per row. PerGroup: one scale per (row, group).
// Symmetric schemes only; clip_gamma/clip_beta from the scheme apply per row.
QuantizedTensor quantize_weights(const DenseTensor& w, const QuantScheme& scheme);

// Dynamic symmetric abs-max per row: S_i = max_k |a[i][k]| / 127.
QuantizedTensor quantize_activations_per_token(const DenseTensor& a, int bits = 8);

DenseTensor dequantize(const QuantizedTensor& q);

} // namespace ody
