// odyssey CLI: quantize checkpoints, verify engine exactness, run the
// GEMM benchmark sweep, and report MSE ablations. Talks to the core
// exclusively through the C API in odyssey/odyssey.h.
//
// Exit codes: 0 success, 1 verification/numeric failure, 2 usage error.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "odyssey/odyssey.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

int fail_with(ody_status st) {
    std::cerr << "error: " << ody_last_error() << "\n";
    return st == ODY_EINVAL ? kExitUsage : kExitFailure;
}

struct StringGuard {
    char* s = nullptr;
    ~StringGuard() { ody_string_free(s); }
};

bool write_or_print(const std::string& out_path, const char* text) {
    if (out_path.empty()) {
        std::cout << text;
        return true;
    }
    std::ofstream f(out_path, std::ios::trunc);
    if (!f) {
        std::cerr << "error: cannot open " << out_path << "\n";
        return false;
    }
    f << text;
    return true;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"odyssey: W4A8 quantization toolkit and software mixed-precision GEMM engine"};
    app.require_subcommand(1);

    int threads = 0;
    app.add_option("--threads", threads, "worker threads (0 = hardware; ODYSSEY_THREADS overrides)");

    // quantize
    auto* quantize = app.add_subcommand("quantize", "quantize a checkpoint directory");
    std::string q_input, q_out, q_recipe = "rtn", q_calib, q_granularity = "per_channel";
    int q_bits = 4;
    std::size_t q_group = 128;
    float q_grid_min = 0.5f, q_grid_step = 0.01f;
    quantize->add_option("--input", q_input, "checkpoint directory (OTF tensors + manifest.txt)")
        ->required();
    quantize->add_option("--out", q_out, "output directory")->required();
    quantize->add_option("--recipe", q_recipe, "rtn | lwc | lwc+gptq");
    quantize->add_option("--calib", q_calib, "calibration activation directory");
    quantize->add_option("--bits", q_bits, "weight bit width (4 or 8)");
    quantize->add_option("--granularity", q_granularity, "per_channel | per_group");
    quantize->add_option("--group-size", q_group, "group size for per_group");
    quantize->add_option("--clip-grid-min", q_grid_min, "smallest clip candidate");
    quantize->add_option("--clip-grid-step", q_grid_step, "clip grid step");

    // verify
    auto* verify = app.add_subcommand("verify", "run the engine exactness suite");
    std::uint64_t v_seed = 1;
    bool v_inject = false;
    verify->add_option("--seed", v_seed, "seed for the random matrix checks");
    verify->add_flag("--inject-fault", v_inject, "test hook: flip one nibble (must fail)");

    // gemm-bench
    auto* bench = app.add_subcommand("gemm-bench", "benchmark the GEMM engines over a shape sweep");
    std::string b_shapes, b_engines, b_baseline = "finegrained", b_format = "table", b_out;
    int b_repeats = 5;
    std::uint64_t b_seed = 1;
    bool b_parallel = false;
    bench->add_option("--shapes", b_shapes, "shape file of 'm n k [g]' lines (default: built-in sweep)");
    bench->add_option("--engines", b_engines, "comma-separated engines (default: all)");
    bench->add_option("--baseline", b_baseline, "speedup baseline engine");
    bench->add_option("--repeats", b_repeats, "timed repeats per engine (>= 3)");
    bench->add_option("--seed", b_seed, "input generation seed");
    bench->add_option("--format", b_format, "table | csv");
    bench->add_option("--out", b_out, "write report to file instead of stdout");
    bench->add_flag("--parallel-cases", b_parallel, "run cases concurrently (timings get noisy)");

    // eval-mse
    auto* evalmse = app.add_subcommand("eval-mse", "per-layer recipe ablation table");
    std::string e_input, e_calib;
    int e_bits = 4;
    float e_grid_min = 0.5f, e_grid_step = 0.01f;
    evalmse->add_option("--input", e_input, "checkpoint directory")->required();
    evalmse->add_option("--calib", e_calib, "calibration activation directory");
    evalmse->add_option("--bits", e_bits, "weight bit width");
    evalmse->add_option("--clip-grid-min", e_grid_min, "smallest clip candidate");
    evalmse->add_option("--clip-grid-step", e_grid_step, "clip grid step");

    // gen-checkpoint
    auto* gen = app.add_subcommand("gen-checkpoint", "write a seeded synthetic checkpoint");
    std::string g_out;
    std::size_t g_layers = 4, g_rows = 64, g_cols = 64, g_calib_rows = 256;
    double g_outliers = 0.01;
    std::uint64_t g_seed = 1;
    gen->add_option("--out", g_out, "output directory")->required();
    gen->add_option("--layers", g_layers, "layer count");
    gen->add_option("--rows", g_rows, "output channels per layer");
    gen->add_option("--cols", g_cols, "input features per layer");
    gen->add_option("--calib-rows", g_calib_rows, "calibration samples (0 disables)");
    gen->add_option("--outlier-fraction", g_outliers, "fraction of 5-sigma outlier weights");
    gen->add_option("--seed", g_seed, "generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
    }

    ody_set_threads(threads);

    if (*quantize) {
        ody_status st = ody_cmd_quantize(q_input.c_str(), q_out.c_str(), q_recipe.c_str(),
                                         q_calib.empty() ? nullptr : q_calib.c_str(), q_bits,
                                         q_granularity.c_str(), q_group, q_grid_min, q_grid_step);
        if (st != ODY_OK) return fail_with(st);
        std::cout << "wrote quantized tensors and report.csv to " << q_out << "\n";
        return kExitOk;
    }

    if (*verify) {
        int ok = 0;
        StringGuard summary;
        ody_status st = ody_cmd_verify(v_seed, v_inject ? 1 : 0, &ok, &summary.s);
        if (st != ODY_OK) return fail_with(st);
        std::cout << summary.s;
        return ok ? kExitOk : kExitFailure;
    }

    if (*bench) {
        StringGuard report;
        ody_status st = ody_cmd_gemm_bench(b_shapes.empty() ? nullptr : b_shapes.c_str(),
                                           b_engines.empty() ? nullptr : b_engines.c_str(),
                                           b_baseline.c_str(), b_repeats, b_seed, b_format.c_str(),
                                           b_parallel ? 1 : 0, &report.s);
        if (st != ODY_OK) return fail_with(st);
        return write_or_print(b_out, report.s) ? kExitOk : kExitFailure;
    }

    if (*evalmse) {
        StringGuard table;
        ody_status st = ody_cmd_eval_mse(e_input.c_str(), e_calib.empty() ? nullptr : e_calib.c_str(),
                                         e_bits, e_grid_min, e_grid_step, &table.s);
        if (st != ODY_OK) return fail_with(st);
        std::cout << table.s;
        return kExitOk;
    }

    if (*gen) {
        ody_status st = ody_cmd_gen_checkpoint(g_out.c_str(), g_layers, g_rows, g_cols, g_calib_rows,
                                               g_outliers, g_seed);
        if (st != ODY_OK) return fail_with(st);
        std::cout << "wrote synthetic checkpoint to " << g_out << "\n";
        return kExitOk;
    }

    return kExitUsage;
}
