#include "hessian.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "parallel.hpp"
#include "quantize.hpp"

namespace ody {

HessianState::HessianState(std::size_t in_features)
    : k_(in_features), h_(in_features * in_features, 0.0) {
    if (in_features == 0) fail(ErrorCode::InvalidArgument, "HessianState: zero in_features");
}

void HessianState::accumulate(const DenseTensor& x_batch) {
    if (x_batch.cols() != k_) {
        fail(ErrorCode::ShapeMismatch, "accumulate_hessian: batch has " +
                                           std::to_string(x_batch.cols()) + " features, expected " +
                                           std::to_string(k_));
    }
    for (std::size_t s = 0; s < x_batch.rows(); ++s) {
        const float* x = x_batch.row(s);
        for (std::size_t i = 0; i < k_; ++i) {
            const double xi2 = 2.0 * static_cast<double>(x[i]);
            double* hi = h_.data() + i * k_;
            for (std::size_t j = 0; j < k_; ++j) {
                hi[j] += xi2 * static_cast<double>(x[j]);
            }
        }
    }
    samples_ += x_batch.rows();
}

namespace {

// In-place lower Cholesky of a row-major n x n SPD matrix; strict upper
// triangle is left untouched. Returns false when not positive definite.
bool cholesky_lower(std::vector<double>& a, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) {
        double d = a[j * n + j];
        for (std::size_t p = 0; p < j; ++p) d -= a[j * n + p] * a[j * n + p];
        if (!(d > 0.0)) return false;
        d = std::sqrt(d);
        a[j * n + j] = d;
        for (std::size_t i = j + 1; i < n; ++i) {
            double v = a[i * n + j];
            for (std::size_t p = 0; p < j; ++p) v -= a[i * n + p] * a[j * n + p];
            a[i * n + j] = v / d;
        }
    }
    return true;
}

// Inverse of SPD matrix from its lower Cholesky factor: A^-1 = L^-T L^-1.
std::vector<double> spd_inverse_from_cholesky(const std::vector<double>& l, std::size_t n) {
    // invert L by forward substitution (column by column)
    std::vector<double> linv(n * n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        linv[j * n + j] = 1.0 / l[j * n + j];
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = 0.0;
            for (std::size_t p = j; p < i; ++p) s += l[i * n + p] * linv[p * n + j];
            linv[i * n + j] = -s / l[i * n + i];
        }
    }
    std::vector<double> inv(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = 0.0;
            for (std::size_t p = i; p < n; ++p) s += linv[p * n + i] * linv[p * n + j];
            inv[i * n + j] = s;
            inv[j * n + i] = s;
        }
    }
    return inv;
}

} // namespace

QuantizedTensor gptq_quantize_layer(const DenseTensor& w, const HessianState& state,
                                    const QuantScheme& scheme, const GptqOptions& opts) {
    if (scheme.granularity != Granularity::PerChannel || !scheme.symmetric) {
        fail(ErrorCode::InvalidArgument, "gptq_quantize_layer: scheme must be per-channel symmetric");
    }
    if (w.cols() != state.in_features()) {
        fail(ErrorCode::ShapeMismatch, "gptq_quantize_layer: weight columns != Hessian size");
    }
    scheme.validate(w.rows(), w.cols());
    const std::size_t n_rows = w.rows();
    const std::size_t k = w.cols();

    // Frozen per-channel scales (from clip factors when present).
    std::vector<float> scales(n_rows);
    for (std::size_t r = 0; r < n_rows; ++r) {
        scales[r] = compute_scale_symmetric({w.row(r), k}, scheme.bits, scheme.gamma(r), scheme.beta(r));
    }

    // Column processing order.
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    if (opts.reorder) {
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return state.at(a, a) > state.at(b, b);
        });
    }

    // A = P (H + lambda I) P^T in processing order.
    double mean_diag = 0.0;
    for (std::size_t i = 0; i < k; ++i) mean_diag += state.at(i, i);
    mean_diag /= static_cast<double>(k);
    const double lambda = opts.damping * mean_diag;

    std::vector<double> a(k * k);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            a[i * k + j] = state.at(order[i], order[j]);
        }
        a[i * k + i] += lambda;
    }
    if (!cholesky_lower(a, k)) {
        fail(ErrorCode::Numeric, "gptq_quantize_layer: H + lambda*I not positive definite");
    }
    std::vector<double> hinv = spd_inverse_from_cholesky(a, k);
    // Upper factor U with Hinv = U^T U; rows of U drive the updates.
    if (!cholesky_lower(hinv, k)) {
        fail(ErrorCode::Numeric, "gptq_quantize_layer: inverse Hessian factorization failed");
    }
    std::vector<double> u(k * k, 0.0); // U = L^T, row-major upper triangular
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j <= i; ++j) u[j * k + i] = hinv[i * k + j];
    }

    const std::int32_t lo = scheme.qmin();
    const std::int32_t hi = scheme.qmax();
    const std::size_t bs = std::max<std::size_t>(1, opts.block_size);
    std::vector<std::int8_t> codes(n_rows * k);

    parallel_for_rows(n_rows, [&](std::size_t r0, std::size_t r1) {
        std::vector<double> wr(k);
        std::vector<double> err(bs);
        for (std::size_t r = r0; r < r1; ++r) {
            for (std::size_t i = 0; i < k; ++i) wr[i] = w.at(r, order[i]);
            const double s = static_cast<double>(scales[r]);
            for (std::size_t b0 = 0; b0 < k; b0 += bs) {
                const std::size_t b1 = std::min(b0 + bs, k);
                for (std::size_t i = b0; i < b1; ++i) {
                    const double d = u[i * k + i];
                    double q = std::round(wr[i] / s);
                    q = std::min(std::max(q, static_cast<double>(lo)), static_cast<double>(hi));
                    codes[r * k + order[i]] = static_cast<std::int8_t>(q);
                    const double e = (wr[i] - q * s) / d;
                    err[i - b0] = e;
                    for (std::size_t j = i + 1; j < b1; ++j) wr[j] -= e * u[i * k + j];
                }
                // lazy batched update of everything past the block
                for (std::size_t j = b1; j < k; ++j) {
                    double upd = 0.0;
                    for (std::size_t i = b0; i < b1; ++i) upd += err[i - b0] * u[i * k + j];
                    wr[j] -= upd;
                }
            }
        }
    });

    QuantizedTensor out;
    out.rows = n_rows;
    out.cols = k;
    out.scheme = scheme;
    out.scales = std::move(scales);
    if (scheme.bits == 4) {
        out.payload_i4 = PackedInt4Buffer(codes);
    } else {
        out.payload_i8 = std::move(codes);
    }
    return out;
}

double layerwise_error(const DenseTensor& w, const QuantizedTensor& w_q, const DenseTensor& x) {
    if (w.rows() != w_q.rows || w.cols() != w_q.cols) {
        fail(ErrorCode::ShapeMismatch, "layerwise_error: weight shapes disagree");
    }
    if (x.cols() != w.cols()) {
        fail(ErrorCode::ShapeMismatch, "layerwise_error: activation features != weight columns");
    }
    DenseTensor dq = dequantize(w_q);
    DenseTensor diff(w.rows(), w.cols());
    for (std::size_t i = 0; i < w.size(); ++i) diff.data()[i] = w.data()[i] - dq.data()[i];
    DenseTensor prod = matmul_f32(diff, x);
    double acc = 0.0;
    for (float v : prod.data()) acc += static_cast<double>(v) * static_cast<double>(v);
    return acc;
}

} // namespace ody
