#pragma once

#include "tensor.hpp"

namespace ody {

// Layer Hessian H = 2 * X^T X accumulated over calibration batches
// (batch rows are samples, columns are in_features). Accumulation runs
// in f64 so batch order does not matter beyond rounding noise.
class HessianState {
public:
    explicit HessianState(std::size_t in_features);

    std::size_t in_features() const { return k_; }
    std::size_t sample_count() const { return samples_; }
    double at(std::size_t i, std::size_t j) const { return h_[i * k_ + j]; }
    const std::vector<double>& matrix() const { return h_; }

    void accumulate(const DenseTensor& x_batch);

private:
    std::size_t k_ = 0;
    std::size_t samples_ = 0;
    std::vector<double> h_;
};

struct GptqOptions {
    bool reorder = false;       // process columns by descending diag(H)
    std::size_t block_size = 128; // lazy batched update width
    double damping = 0.01;      // lambda = damping * mean(diag H)
};

// Column-sequential quantization of each row with Hessian-weighted error
// propagation into the not-yet-quantized columns. Scales are frozen up
// front from the scheme's per-channel clip factors (min-max when absent).
// Scheme must be per-channel symmetric.
QuantizedTensor gptq_quantize_layer(const DenseTensor& w, const HessianState& state,
                                    const QuantScheme& scheme, const GptqOptions& opts = {});

// Squared Frobenius norm of (W - Dq(W_q)) X^T, X given as (samples x in_features).
double layerwise_error(const DenseTensor& w, const QuantizedTensor& w_q, const DenseTensor& x);

} // namespace ody
