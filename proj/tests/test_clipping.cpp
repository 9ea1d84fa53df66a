#include <algorithm>
#include <cmath>

#include "core/clip.hpp"
#include "core/quantize.hpp"
#include "core/rng.hpp"
#include "doctest.h"

using namespace ody;

TEST_CASE("channel mse: exactly representable channel is zero") {
    // codes times a power-of-two scale: integer grid of S = 0.125
    std::vector<float> w{0.875f, -0.5f, 0.25f, 0.0f};
    // gamma=beta=1 gives S = 0.875/7 = 0.125; every value is a multiple
    CHECK(channel_quant_mse(w, 4, 1.0f, 1.0f) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("channel mse: scalar evaluation") {
    std::vector<float> w{0.4f, -0.2f, 0.1f};
    const double s = 0.4 / 7.0;
    double want = ((0.4 - 7 * s) * (0.4 - 7 * s) + (-0.2 + 4 * s) * (-0.2 + 4 * s) +
                   (0.1 - 2 * s) * (0.1 - 2 * s)) /
                  3.0;
    CHECK(channel_quant_mse(w, 4, 1.0f, 1.0f) == doctest::Approx(want).epsilon(1e-5));
}

TEST_CASE("channel mse scales quadratically with the channel") {
    Rng rng(7);
    std::vector<float> w(32);
    for (auto& v : w) v = static_cast<float>(rng.gaussian());
    std::vector<float> w3(32);
    for (std::size_t i = 0; i < 32; ++i) w3[i] = 3.0f * w[i];
    float a = channel_quant_mse(w, 4, 0.8f, 0.9f);
    float b = channel_quant_mse(w3, 4, 0.8f, 0.9f);
    CHECK(b == doctest::Approx(9.0f * a).epsilon(1e-4));
}

TEST_CASE("grid always contains 1.0 and honors min/step") {
    ClipGrid grid{0.5f, 0.01f};
    auto cand = grid.candidates();
    CHECK(cand.size() == 51);
    CHECK(cand.front() == doctest::Approx(0.5f));
    CHECK(cand.back() == 1.0f);

    ClipGrid one{1.0f, 0.1f};
    CHECK(one.candidates() == std::vector<float>{1.0f});
}

TEST_CASE("channel on the identity grid keeps gamma = beta = 1 with zero mse") {
    DenseTensor w(1, 4, {0.875f, -0.5f, 0.25f, 0.125f});
    ClipResult res = optimize_clipping(w, 4, ClipGrid{});
    CHECK(res.gamma[0] == 1.0f);
    CHECK(res.beta[0] == 1.0f);
    CHECK(res.mse_after[0] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("outlier channel narrows its range and improves mse") {
    // one extreme at -0.4, mass inside (-0.2, 0.2)
    Rng rng(13);
    std::vector<float> ch(64);
    for (auto& v : ch) v = static_cast<float>(rng.uniform() * 0.38 - 0.19);
    ch[10] = -0.4f;
    DenseTensor w(1, 64, std::move(ch));
    ClipResult res = optimize_clipping(w, 4, ClipGrid{});
    CHECK(res.beta[0] < 1.0f); // beta scales the (negative) outlier side
    CHECK(res.mse_after[0] < res.mse_before[0]);
}

TEST_CASE("mse_after never exceeds mse_before") {
    Rng rng(17);
    DenseTensor w(16, 32);
    for (auto& v : w.data()) v = static_cast<float>(rng.gaussian());
    ClipResult res = optimize_clipping(w, 4, ClipGrid{});
    for (std::size_t r = 0; r < 16; ++r) CHECK(res.mse_after[r] <= res.mse_before[r]);
}

TEST_CASE("result is invariant to channel permutation") {
    Rng rng(19);
    DenseTensor w(8, 16);
    for (auto& v : w.data()) v = static_cast<float>(rng.gaussian());
    ClipResult base = optimize_clipping(w, 4, ClipGrid{});

    // reverse channel order
    DenseTensor rev(8, 16);
    for (std::size_t r = 0; r < 8; ++r) {
        for (std::size_t c = 0; c < 16; ++c) rev.at(r, c) = w.at(7 - r, c);
    }
    ClipResult perm = optimize_clipping(rev, 4, ClipGrid{});
    for (std::size_t r = 0; r < 8; ++r) {
        CHECK(perm.gamma[r] == base.gamma[7 - r]);
        CHECK(perm.beta[r] == base.beta[7 - r]);
        CHECK(perm.mse_after[r] == base.mse_after[7 - r]);
    }
}

TEST_CASE("grid {1.0} reproduces plain min-max RTN exactly") {
    Rng rng(23);
    DenseTensor w(4, 16);
    for (auto& v : w.data()) v = static_cast<float>(rng.gaussian());
    ClipResult res = optimize_clipping(w, 4, ClipGrid{1.0f, 0.1f});
    for (std::size_t r = 0; r < 4; ++r) {
        CHECK(res.gamma[r] == 1.0f);
        CHECK(res.beta[r] == 1.0f);
        CHECK(res.mse_after[r] == res.mse_before[r]);
        CHECK(res.mse_after[r] ==
              doctest::Approx(channel_quant_mse({w.row(r), 16}, 4, 1.0f, 1.0f)).epsilon(1e-7));
    }
}

TEST_CASE("property: scaling a channel by k > 0 leaves the argmin unchanged") {
    Rng rng(29);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<float> ch(24);
        for (auto& v : ch) v = static_cast<float>(rng.gaussian());
        DenseTensor w1(1, 24, ch);
        std::vector<float> scaled(24);
        const float k = 4.0f;
        for (std::size_t i = 0; i < 24; ++i) scaled[i] = k * ch[i];
        DenseTensor w2(1, 24, std::move(scaled));
        ClipGrid coarse{0.5f, 0.05f};
        ClipResult a = optimize_clipping(w1, 4, coarse);
        ClipResult b = optimize_clipping(w2, 4, coarse);
        REQUIRE(a.gamma[0] == b.gamma[0]);
        REQUIRE(a.beta[0] == b.beta[0]);
        REQUIRE(b.mse_after[0] == doctest::Approx(k * k * a.mse_after[0]).epsilon(1e-4));
    }
}

TEST_CASE("empty weight is rejected") {
    DenseTensor empty;
    CHECK_THROWS_AS(optimize_clipping(empty, 4, ClipGrid{}), Error);
}
