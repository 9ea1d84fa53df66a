#include "clip.hpp"

#include <algorithm>
#include <cmath>

#include "parallel.hpp"
#include "quantize.hpp"

namespace ody {

std::vector<float> ClipGrid::candidates() const {
    if (!(min > 0.0f && min <= 1.0f) || !(step > 0.0f)) {
        fail(ErrorCode::InvalidArgument, "ClipGrid: need 0 < min <= 1 and step > 0");
    }
    std::vector<float> out;
    // Walk an integer index to dodge drift from repeated float addition.
    for (int i = 0;; ++i) {
        float v = min + static_cast<float>(i) * step;
        if (v >= 1.0f - 1e-6f) break;
        out.push_back(v);
    }
    out.push_back(1.0f);
    return out;
}

float channel_quant_mse(std::span<const float> w_c, int bits, float gamma, float beta) {
    if (w_c.empty()) fail(ErrorCode::InvalidArgument, "channel_quant_mse: empty channel");
    SymmetricQuant q = quantize_symmetric(w_c, bits, gamma, beta);
    double acc = 0.0;
    for (std::size_t i = 0; i < w_c.size(); ++i) {
        double e = static_cast<double>(w_c[i]) - static_cast<double>(q.codes[i]) * static_cast<double>(q.scale);
        acc += e * e;
    }
    return static_cast<float>(acc / static_cast<double>(w_c.size()));
}

namespace {

// MSE for a fixed scale, without materializing codes.
double mse_for_scale(std::span<const float> w, int bits, float scale) {
    const float lo = static_cast<float>(-(1 << (bits - 1)));
    const float hi = static_cast<float>((1 << (bits - 1)) - 1);
    double acc = 0.0;
    for (float v : w) {
        float c = std::round(v / scale);
        c = std::min(std::max(c, lo), hi);
        double e = static_cast<double>(v) - static_cast<double>(c) * static_cast<double>(scale);
        acc += e * e;
    }
    return acc / static_cast<double>(w.size());
}

} // namespace

ClipResult optimize_clipping(const DenseTensor& w, int bits, const ClipGrid& grid) {
    if (w.size() == 0) fail(ErrorCode::InvalidArgument, "optimize_clipping: empty weight");
    const std::vector<float> cand = grid.candidates();
    const float qmax = static_cast<float>((1 << (bits - 1)) - 1);

    ClipResult res;
    res.gamma.resize(w.rows());
    res.beta.resize(w.rows());
    res.mse_before.resize(w.rows());
    res.mse_after.resize(w.rows());

    parallel_for_rows(w.rows(), [&](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
            std::span<const float> ch(w.row(r), w.cols());
            float wmax = ch[0], wmin = ch[0];
            for (float v : ch) {
                wmax = std::max(wmax, v);
                wmin = std::min(wmin, v);
            }
            double best_mse = 0.0;
            float best_g = 1.0f, best_b = 1.0f;
            bool first = true;
            double mse_identity = 0.0;
            for (float g : cand) {
                for (float b : cand) {
                    float s = std::max(std::fabs(g * wmax), std::fabs(b * wmin)) / qmax;
                    if (!(s > 0.0f)) s = kMinScale;
                    double mse = mse_for_scale(ch, bits, s);
                    if (g == 1.0f && b == 1.0f) mse_identity = mse;
                    bool better = first || mse < best_mse ||
                                  (mse == best_mse &&
                                   (g + b > best_g + best_b ||
                                    (g + b == best_g + best_b && g > best_g)));
                    if (better) {
                        best_mse = mse;
                        best_g = g;
                        best_b = b;
                        first = false;
                    }
                }
            }
            res.gamma[r] = best_g;
            res.beta[r] = best_b;
            res.mse_before[r] = static_cast<float>(mse_identity);
            res.mse_after[r] = static_cast<float>(best_mse);
        }
    });
    return res;
}

} // namespace ody
