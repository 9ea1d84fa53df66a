#include "quantize.hpp"

#include <algorithm>
#include <cmath>

#include "parallel.hpp"

namespace ody {

namespace {

std::int32_t clamp_code(float x, std::int32_t lo, std::int32_t hi) {
    // round half away from zero
    float r = std::round(x);
    if (r < static_cast<float>(lo)) return lo;
    if (r > static_cast<float>(hi)) return hi;
    return static_cast<std::int32_t>(r);
}

} // namespace

float compute_scale_symmetric(std::span<const float> w, int bits, float gamma, float beta) {
    if (w.empty()) fail(ErrorCode::InvalidArgument, "compute_scale_symmetric: empty input");
    if (!(gamma > 0.0f && gamma <= 1.0f && beta > 0.0f && beta <= 1.0f)) {
        fail(ErrorCode::InvalidArgument, "compute_scale_symmetric: gamma/beta outside (0,1]");
    }
    float wmax = w[0], wmin = w[0];
    for (float v : w) {
        wmax = std::max(wmax, v);
        wmin = std::min(wmin, v);
    }
    float qmax = static_cast<float>((1 << (bits - 1)) - 1);
    float s = std::max(std::fabs(gamma * wmax), std::fabs(beta * wmin)) / qmax;
    return s > 0.0f ? s : kMinScale;
}

SymmetricQuant quantize_symmetric(std::span<const float> w, int bits, float gamma, float beta) {
    SymmetricQuant out;
    out.scale = compute_scale_symmetric(w, bits, gamma, beta);
    const std::int32_t lo = -(1 << (bits - 1));
    const std::int32_t hi = (1 << (bits - 1)) - 1;
    out.codes.resize(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        out.codes[i] = static_cast<std::int8_t>(clamp_code(w[i] / out.scale, lo, hi));
    }
    return out;
}

AsymmetricQuant quantize_asymmetric(std::span<const float> x, int bits) {
    if (x.empty()) fail(ErrorCode::InvalidArgument, "quantize_asymmetric: empty input");
    float xmax = x[0], xmin = x[0];
    for (float v : x) {
        xmax = std::max(xmax, v);
        xmin = std::min(xmin, v);
    }
    AsymmetricQuant out;
    const std::int32_t lo = -(1 << (bits - 1));
    const std::int32_t hi = (1 << (bits - 1)) - 1;
    const float levels = static_cast<float>((1 << bits) - 1);
    if (xmax > xmin) {
        out.scale = (xmax - xmin) / levels;
        // zero point chosen so xmin maps to the bottom code, xmax to the top
        out.zero_point = xmin - out.scale * static_cast<float>(lo);
    } else {
        out.scale = kMinScale;
        out.zero_point = xmin;
    }
    out.codes.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out.codes[i] = static_cast<std::int8_t>(clamp_code((x[i] - out.zero_point) / out.scale, lo, hi));
    }
    return out;
}

QuantizedTensor quantize_weights(const DenseTensor& w, const QuantScheme& scheme) {
    if (w.size() == 0) fail(ErrorCode::InvalidArgument, "quantize_weights: empty tensor");
    if (!scheme.symmetric) {
        fail(ErrorCode::InvalidArgument, "quantize_weights: weights are quantized symmetrically");
    }
    if (scheme.granularity != Granularity::PerChannel && scheme.granularity != Granularity::PerGroup) {
        fail(ErrorCode::InvalidArgument, "quantize_weights: granularity must be per_channel or per_group");
    }
    scheme.validate(w.rows(), w.cols());

    QuantizedTensor out;
    out.rows = w.rows();
    out.cols = w.cols();
    out.scheme = scheme;
    const std::size_t groups = out.groups_per_row();
    const std::size_t g = scheme.granularity == Granularity::PerGroup ? scheme.group_size : w.cols();
    out.scales.resize(w.rows() * groups);
    std::vector<std::int8_t> codes(w.size());

    parallel_for_rows(w.rows(), [&](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
            for (std::size_t gi = 0; gi < groups; ++gi) {
                std::span<const float> chunk(w.row(r) + gi * g, g);
                SymmetricQuant q = quantize_symmetric(chunk, scheme.bits, scheme.gamma(r), scheme.beta(r));
                out.scales[r * groups + gi] = q.scale;
                std::copy(q.codes.begin(), q.codes.end(), codes.begin() + static_cast<std::ptrdiff_t>(r * w.cols() + gi * g));
            }
        }
    });

    if (scheme.bits == 4) {
        out.payload_i4 = PackedInt4Buffer(codes);
    } else {
        out.payload_i8 = std::move(codes);
    }
    return out;
}

QuantizedTensor quantize_activations_per_token(const DenseTensor& a, int bits) {
    if (a.size() == 0) fail(ErrorCode::InvalidArgument, "quantize_activations_per_token: empty tensor");
    QuantizedTensor out;
    out.rows = a.rows();
    out.cols = a.cols();
    out.scheme.bits = bits;
    out.scheme.symmetric = true;
    out.scheme.granularity = Granularity::PerToken;
    out.scales.resize(a.rows());
    std::vector<std::int8_t> codes(a.size());
    parallel_for_rows(a.rows(), [&](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
            SymmetricQuant q = quantize_symmetric({a.row(r), a.cols()}, bits, 1.0f, 1.0f);
            out.scales[r] = q.scale;
            std::copy(q.codes.begin(), q.codes.end(), codes.begin() + static_cast<std::ptrdiff_t>(r * a.cols()));
        }
    });
    out.payload_i8 = std::move(codes);
    return out;
}

DenseTensor dequantize(const QuantizedTensor& q) {
    DenseTensor out(q.rows, q.cols);
    parallel_for_rows(q.rows, [&](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
            for (std::size_t c = 0; c < q.cols; ++c) {
                float v = static_cast<float>(q.code(r, c)) * q.scale_at(r, c);
                if (!q.scheme.symmetric) v += q.zero_point_at(r, c);
                out.at(r, c) = v;
            }
        }
    });
    return out;
}

} // namespace ody
