#include <algorithm>
#include <cmath>
#include <numeric>

#include "core/hessian.hpp"
#include "core/quantize.hpp"
#include "core/rng.hpp"
#include "doctest.h"

using namespace ody;

namespace {

DenseTensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double stddev = 1.0) {
    DenseTensor t(r, c);
    for (auto& v : t.data()) v = static_cast<float>(rng.gaussian() * stddev);
    return t;
}

QuantScheme per_channel_scheme(int bits) {
    QuantScheme s;
    s.bits = bits;
    s.symmetric = true;
    s.granularity = Granularity::PerChannel;
    return s;
}

// Direct formulation of the compensation update: quantize column i, then
// shift the remaining columns by -err * Hinv[:,i]/Hinv[i][i] and eliminate
// index i from Hinv. Reference for the blocked Cholesky implementation.
std::vector<std::int8_t> gptq_elimination_oracle(const DenseTensor& w, const HessianState& state,
                                                 int bits, double damping = 0.01) {
    const std::size_t k = w.cols();
    double mean_diag = 0.0;
    for (std::size_t i = 0; i < k; ++i) mean_diag += state.at(i, i);
    mean_diag /= static_cast<double>(k);
    const double lambda = damping * mean_diag;

    // dense inverse via Gauss-Jordan (test-only, small k)
    std::vector<double> a(k * 2 * k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) a[i * 2 * k + j] = state.at(i, j);
        a[i * 2 * k + i] += lambda;
        a[i * 2 * k + k + i] = 1.0;
    }
    for (std::size_t col = 0; col < k; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < k; ++r) {
            if (std::fabs(a[r * 2 * k + col]) > std::fabs(a[piv * 2 * k + col])) piv = r;
        }
        for (std::size_t c = 0; c < 2 * k; ++c) std::swap(a[col * 2 * k + c], a[piv * 2 * k + c]);
        double d = a[col * 2 * k + col];
        for (std::size_t c = 0; c < 2 * k; ++c) a[col * 2 * k + c] /= d;
        for (std::size_t r = 0; r < k; ++r) {
            if (r == col) continue;
            double f = a[r * 2 * k + col];
            for (std::size_t c = 0; c < 2 * k; ++c) a[r * 2 * k + c] -= f * a[col * 2 * k + c];
        }
    }
    std::vector<double> hinv(k * k);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) hinv[i * k + j] = a[i * 2 * k + k + j];
    }

    const std::int32_t lo = -(1 << (bits - 1)), hi = (1 << (bits - 1)) - 1;
    std::vector<std::int8_t> codes(w.rows() * k);
    for (std::size_t r = 0; r < w.rows(); ++r) {
        std::vector<double> wr(k);
        for (std::size_t i = 0; i < k; ++i) wr[i] = w.at(r, i);
        double s = compute_scale_symmetric({w.row(r), k}, bits, 1.0f, 1.0f);
        std::vector<double> h = hinv;
        for (std::size_t i = 0; i < k; ++i) {
            double q = std::round(wr[i] / s);
            q = std::min(std::max(q, static_cast<double>(lo)), static_cast<double>(hi));
            codes[r * k + i] = static_cast<std::int8_t>(q);
            double d = h[i * k + i];
            double err = (wr[i] - q * s) / d;
            for (std::size_t j = i + 1; j < k; ++j) wr[j] -= err * h[i * k + j];
            // eliminate index i from the inverse
            for (std::size_t p = i + 1; p < k; ++p) {
                for (std::size_t q2 = i + 1; q2 < k; ++q2) {
                    h[p * k + q2] -= h[p * k + i] * h[i * k + q2] / d;
                }
            }
        }
    }
    return codes;
}

std::vector<std::int8_t> codes_of(const QuantizedTensor& q) {
    std::vector<std::int8_t> out(q.rows * q.cols);
    for (std::size_t r = 0; r < q.rows; ++r) {
        for (std::size_t c = 0; c < q.cols; ++c) out[r * q.cols + c] = q.code(r, c);
    }
    return out;
}

} // namespace

TEST_CASE("hessian accumulation: single sample, zero batch, additivity") {
    HessianState state(2);
    DenseTensor x(1, 2, {1.0f, 0.0f});
    state.accumulate(x);
    CHECK(state.at(0, 0) == 2.0);
    CHECK(state.at(0, 1) == 0.0);
    CHECK(state.at(1, 0) == 0.0);
    CHECK(state.at(1, 1) == 0.0);
    CHECK(state.sample_count() == 1);

    DenseTensor z(3, 2, {0, 0, 0, 0, 0, 0});
    state.accumulate(z);
    CHECK(state.at(0, 0) == 2.0); // unchanged
    CHECK(state.sample_count() == 4);

    HessianState twice(2);
    twice.accumulate(x);
    twice.accumulate(x);
    CHECK(twice.at(0, 0) == 4.0);

    DenseTensor bad(1, 3, {1, 2, 3});
    CHECK_THROWS_AS(state.accumulate(bad), Error);
}

TEST_CASE("hessian accumulation is order-independent") {
    Rng rng(3);
    DenseTensor b1 = random_tensor(8, 6, rng);
    DenseTensor b2 = random_tensor(8, 6, rng);
    HessianState fwd(6), rev(6);
    fwd.accumulate(b1);
    fwd.accumulate(b2);
    rev.accumulate(b2);
    rev.accumulate(b1);
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < 6; ++j) {
            REQUIRE(std::fabs(fwd.at(i, j) - rev.at(i, j)) <=
                    1e-6 * std::max(1.0, std::fabs(fwd.at(i, j))));
        }
    }
    // symmetry within accumulation tolerance
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < 6; ++j) {
            REQUIRE(std::fabs(fwd.at(i, j) - fwd.at(j, i)) <=
                    1e-5 * std::max(1.0, std::fabs(fwd.at(i, j))));
        }
    }
}

TEST_CASE("H proportional to identity reduces gptq to plain RTN") {
    Rng rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        DenseTensor w = random_tensor(6, 12, rng, 0.2);
        HessianState state(12);
        // accumulate the identity: unit sample per coordinate
        for (std::size_t i = 0; i < 12; ++i) {
            DenseTensor e(1, 12);
            e.at(0, i) = 1.0f;
            state.accumulate(e);
        }
        QuantizedTensor gptq = gptq_quantize_layer(w, state, per_channel_scheme(4));
        QuantizedTensor rtn = quantize_weights(w, per_channel_scheme(4));
        REQUIRE(codes_of(gptq) == codes_of(rtn));
        REQUIRE(gptq.scales == rtn.scales);
    }
}

TEST_CASE("exactly representable weights pass through with zero compensation") {
    // values on the gamma=beta=1 INT4 grid
    DenseTensor w(2, 4, {0.7f, -0.4f, 0.2f, 0.1f, 0.3f, 0.7f, -0.3f, 0.0f});
    Rng rng(11);
    HessianState state(4);
    state.accumulate(random_tensor(32, 4, rng));
    QuantizedTensor q = gptq_quantize_layer(w, state, per_channel_scheme(4));
    DenseTensor back = dequantize(q);
    for (std::size_t i = 0; i < w.size(); ++i) {
        REQUIRE(back.data()[i] == doctest::Approx(w.data()[i]).epsilon(1e-6));
    }
}

TEST_CASE("blocked cholesky implementation matches the elimination oracle") {
    Rng rng(13);
    for (int trial = 0; trial < 8; ++trial) {
        std::size_t k = static_cast<std::size_t>(rng.uniform_int(4, 24));
        DenseTensor w = random_tensor(5, k, rng, 0.2);
        HessianState state(k);
        state.accumulate(random_tensor(4 * k, k, rng));

        GptqOptions opts;
        opts.block_size = 4; // force several lazy-update rounds
        QuantizedTensor got = gptq_quantize_layer(w, state, per_channel_scheme(4), opts);
        std::vector<std::int8_t> want = gptq_elimination_oracle(w, state, 4);
        REQUIRE(codes_of(got) == want);
    }
}

TEST_CASE("gptq error never exceeds RTN error (statistical)") {
    Rng rng(17);
    int wins = 0;
    const int trials = 20;
    for (int t = 0; t < trials; ++t) {
        DenseTensor w = random_tensor(8, 32, rng, 0.2);
        DenseTensor x = random_tensor(256, 32, rng);
        HessianState state(32);
        state.accumulate(x);
        QuantizedTensor gptq = gptq_quantize_layer(w, state, per_channel_scheme(4));
        QuantizedTensor rtn = quantize_weights(w, per_channel_scheme(4));
        if (layerwise_error(w, gptq, x) <= layerwise_error(w, rtn, x)) ++wins;
    }
    CHECK(wins >= 19); // >= 95%
}

TEST_CASE("reorder processes columns by descending Hessian diagonal") {
    Rng rng(19);
    DenseTensor w = random_tensor(6, 10, rng, 0.2);
    // calibration with wildly uneven column energies
    DenseTensor x(40, 10);
    for (std::size_t s = 0; s < 40; ++s) {
        for (std::size_t c = 0; c < 10; ++c) {
            x.at(s, c) = static_cast<float>(rng.gaussian() * (c + 1));
        }
    }
    HessianState state(10);
    state.accumulate(x);
    GptqOptions plain, ro;
    ro.reorder = true;
    QuantizedTensor a = gptq_quantize_layer(w, state, per_channel_scheme(4), plain);
    QuantizedTensor b = gptq_quantize_layer(w, state, per_channel_scheme(4), ro);
    // both are valid quantizations with the same frozen scales
    CHECK(a.scales == b.scales);
    double ea = layerwise_error(w, a, x);
    double eb = layerwise_error(w, b, x);
    CHECK(ea >= 0.0);
    CHECK(eb >= 0.0);
}

TEST_CASE("layerwise error: exact quantization and zero activations give zero") {
    DenseTensor w(2, 2, {0.7f, -0.4f, 0.3f, 0.7f});
    QuantizedTensor q = quantize_weights(w, per_channel_scheme(4));
    Rng rng(23);
    DenseTensor x = random_tensor(16, 2, rng);
    CHECK(layerwise_error(w, q, x) == doctest::Approx(0.0).epsilon(1e-10));

    DenseTensor w2(2, 2, {0.31f, -0.17f, 0.23f, 0.09f});
    QuantizedTensor q2 = quantize_weights(w2, per_channel_scheme(4));
    DenseTensor zero(16, 2);
    CHECK(layerwise_error(w2, q2, zero) == 0.0);
}

TEST_CASE("layerwise error: 2x2 hand case against the scalar oracle") {
    DenseTensor w(2, 2, {0.31f, -0.17f, 0.23f, 0.09f});
    QuantizedTensor q = quantize_weights(w, per_channel_scheme(4));
    DenseTensor x(3, 2, {1.0f, 2.0f, -0.5f, 0.25f, 3.0f, -1.0f});

    DenseTensor dq = dequantize(q);
    double want = 0.0;
    for (std::size_t o = 0; o < 2; ++o) {
        for (std::size_t s = 0; s < 3; ++s) {
            double dot = 0.0;
            for (std::size_t c = 0; c < 2; ++c) {
                dot += (static_cast<double>(w.at(o, c)) - static_cast<double>(dq.at(o, c))) *
                       static_cast<double>(x.at(s, c));
            }
            want += dot * dot;
        }
    }
    CHECK(layerwise_error(w, q, x) == doctest::Approx(want).epsilon(1e-5));

    DenseTensor badx(3, 5);
    CHECK_THROWS_AS(layerwise_error(w, q, badx), Error);
}

TEST_CASE("degenerate hessian is rejected") {
    DenseTensor w(2, 4, {0.1f, 0.2f, 0.3f, 0.4f, -0.1f, -0.2f, -0.3f, -0.4f});
    HessianState state(4); // never accumulated: H = 0, damping = 0
    CHECK_THROWS_AS(gptq_quantize_layer(w, state, per_channel_scheme(4)), Error);
}
