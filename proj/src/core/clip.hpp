#pragma once

#include <span>

#include "tensor.hpp"

namespace ody {

// Candidate truncation intensities; 1.0 is always searched so the
// selected pair can never lose to plain min-max RTN.
struct ClipGrid {
    float min = 0.50f;
    float step = 0.01f;

    std::vector<float> candidates() const;
};

struct ClipResult {
    std::vector<float> gamma;
    std::vector<float> beta;
    std::vector<float> mse_before; // per channel, at gamma = beta = 1
    std::vector<float> mse_after;
};

// Mean squared error between w_c and its fake-quantized reconstruction.
float channel_quant_mse(std::span<const float> w_c, int bits, float gamma, float beta);

// Exhaustive joint grid search per output channel. Ties prefer larger
// gamma+beta, then larger gamma.
ClipResult optimize_clipping(const DenseTensor& w, int bits, const ClipGrid& grid);

} // namespace ody
