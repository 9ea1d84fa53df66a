#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "bench.hpp"
#include "clip.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace ody {

// A checkpoint is a directory of <layer>.otf dense weight tensors plus a
// manifest.txt listing layer names in order. Calibration directories hold
// one <layer>.otf activation tensor (samples x in_features) per layer.

enum class Recipe { Rtn, Lwc, LwcGptq };

std::string recipe_name(Recipe r);
Recipe recipe_from_name(const std::string& name);

struct QuantizeConfig {
    Recipe recipe = Recipe::Rtn;
    int bits = 4;
    Granularity granularity = Granularity::PerChannel;
    std::size_t group_size = 128;
    ClipGrid grid;
    bool reorder = false;
    std::filesystem::path calib_dir; // required for LwcGptq
};

struct LayerReport {
    std::string layer;
    std::size_t rows = 0, cols = 0;
    double mse_before = 0.0;      // weight MSE at gamma = beta = 1 RTN
    double mse_after = 0.0;       // weight MSE of the recipe's output
    double layerwise_error = -1.0; // ||(W - Dq(Wq)) X^T||_F^2; -1 without calib
};

struct QuantizeResult {
    std::vector<LayerReport> layers;
};

std::vector<std::string> read_manifest(const std::filesystem::path& checkpoint_dir);

// Quantizes every manifest layer, writes <layer>.q/ tensor directories and
// report.csv under out_dir.
QuantizeResult quantize_checkpoint(const std::filesystem::path& checkpoint_dir,
                                   const std::filesystem::path& out_dir,
                                   const QuantizeConfig& config);

std::string quantize_report_csv(const QuantizeResult& result);

struct VerifyResult {
    std::size_t scalar_cases = 0;
    std::size_t pack_cases = 0;
    std::size_t matrix_cases = 0;
    bool ok = true;
    std::string detail; // failing coordinates on mismatch
};

// Exhaustive 16x256 scalar sweep of the high-nibble path against
// sign-extended multiplication, pack round-trips, and random matrix
// engine-agreement checks. inject_fault flips one nibble as a negative
// control.
VerifyResult run_verify(std::uint64_t seed, bool inject_fault);

struct MseAblationRow {
    std::string layer;
    double err_rtn = 0.0;
    double err_lwc = 0.0;
    double err_lwc_gptq = -1.0; // -1 without calibration data
};

// Per-layer layerwise error (weight MSE when no calibration data) under
// the three recipes.
std::vector<MseAblationRow> eval_mse(const std::filesystem::path& checkpoint_dir,
                                     const std::filesystem::path& calib_dir, int bits,
                                     const ClipGrid& grid);

std::string mse_table(const std::vector<MseAblationRow>& rows);

struct GenConfig {
    std::size_t layers = 4;
    std::size_t rows = 64;
    std::size_t cols = 64;
    std::size_t calib_rows = 256;
    double outlier_fraction = 0.01;
    double outlier_sigma = 5.0;
    std::uint64_t seed = 1;
};

// Seeded synthetic checkpoint: Gaussian weights with injected outliers and
// Gaussian calibration activations (written to <dir>/calib when calib_rows > 0).
void generate_checkpoint(const std::filesystem::path& dir, const GenConfig& config);

DenseTensor synth_gaussian(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 1.0);
DenseTensor synth_weights_with_outliers(std::size_t rows, std::size_t cols, Rng& rng,
                                        double outlier_fraction, double outlier_sigma);

} // namespace ody
