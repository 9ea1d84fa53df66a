#include "odyssey/odyssey.h"

#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>
#include <vector>

#include "core/bench.hpp"
#include "core/clip.hpp"
#include "core/gemm.hpp"
#include "core/hessian.hpp"
#include "core/otf.hpp"
#include "core/parallel.hpp"
#include "core/pipeline.hpp"
#include "core/quantize.hpp"

using namespace ody;

struct ody_tensor {
    DenseTensor t;
};

struct ody_qtensor {
    QuantizedTensor q;
};

namespace {

thread_local std::string g_last_error;

ody_status status_for(const Error& e) {
    switch (e.code()) {
        case ErrorCode::InvalidArgument:
        case ErrorCode::ShapeMismatch: return ODY_EINVAL;
        case ErrorCode::Io: return ODY_EIO;
        case ErrorCode::BadMagic:
        case ErrorCode::Truncated:
        case ErrorCode::UnsupportedDtype: return ODY_EPARSE;
        case ErrorCode::Numeric: return ODY_ENUMERIC;
    }
    return ODY_EINVAL;
}

template <typename Fn>
ody_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return ODY_OK;
    } catch (const Error& e) {
        g_last_error = e.what();
        return status_for(e);
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return ODY_EINVAL;
    }
}

ody_status einval(const char* msg) {
    g_last_error = msg;
    return ODY_EINVAL;
}

char* dup_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

Granularity to_granularity(ody_granularity g) {
    switch (g) {
        case ODY_PER_TENSOR: return Granularity::PerTensor;
        case ODY_PER_CHANNEL: return Granularity::PerChannel;
        case ODY_PER_TOKEN: return Granularity::PerToken;
        case ODY_PER_GROUP: return Granularity::PerGroup;
    }
    fail(ErrorCode::InvalidArgument, "bad granularity enum");
}

Engine to_engine(ody_engine e) {
    switch (e) {
        case ODY_ENGINE_W4A16: return Engine::W4A16Grouped;
        case ODY_ENGINE_FINEGRAINED: return Engine::W4A8FineGrained;
        case ODY_ENGINE_ASYMMETRIC: return Engine::W4A8Asymmetric;
        case ODY_ENGINE_FAST: return Engine::W4A8Fast;
        case ODY_ENGINE_W8A8: return Engine::W8A8;
    }
    fail(ErrorCode::InvalidArgument, "bad engine enum");
}

std::vector<Engine> parse_engines(const char* engines) {
    std::vector<Engine> out;
    if (!engines || !*engines) {
        return {Engine::W4A8Fast, Engine::W4A8FineGrained, Engine::W4A8Asymmetric, Engine::W8A8,
                Engine::W4A16Grouped};
    }
    std::stringstream ss(engines);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(engine_from_name(item));
    }
    if (out.empty()) fail(ErrorCode::InvalidArgument, "no engines given");
    return out;
}

std::vector<BenchCase> parse_shapes_file(const char* path, std::uint64_t seed, int repeats,
                                         const std::vector<Engine>& engines) {
    std::ifstream f(path);
    if (!f) fail(ErrorCode::Io, std::string("cannot open shapes file ") + path);
    std::vector<BenchCase> cases;
    std::string line;
    while (std::getline(f, line)) {
        for (auto& ch : line) {
            if (ch == ',') ch = ' ';
        }
        std::istringstream ls(line);
        BenchCase c;
        if (!(ls >> c.m >> c.n >> c.k)) continue;
        if (!(ls >> c.group_size)) c.group_size = 128;
        c.engines = engines;
        c.repeats = repeats;
        c.seed = seed;
        cases.push_back(c);
    }
    if (cases.empty()) fail(ErrorCode::InvalidArgument, std::string("no shapes in ") + path);
    return cases;
}

} // namespace

extern "C" {

const char* ody_last_error(void) {
    return g_last_error.c_str();
}

void ody_string_free(char* s) {
    delete[] s;
}

void ody_set_threads(int n) {
    set_thread_count(n);
}

ody_status ody_tensor_create(size_t rows, size_t cols, const float* data, ody_tensor** out) {
    if (!data || !out) return einval("ody_tensor_create: null argument");
    return guarded([&] {
        std::vector<float> v(data, data + rows * cols);
        *out = new ody_tensor{DenseTensor(rows, cols, std::move(v))};
    });
}

void ody_tensor_free(ody_tensor* t) {
    delete t;
}

ody_status ody_tensor_dims(const ody_tensor* t, size_t* rows, size_t* cols) {
    if (!t || !rows || !cols) return einval("ody_tensor_dims: null argument");
    *rows = t->t.rows();
    *cols = t->t.cols();
    return ODY_OK;
}

ody_status ody_tensor_data(const ody_tensor* t, const float** data) {
    if (!t || !data) return einval("ody_tensor_data: null argument");
    *data = t->t.data().data();
    return ODY_OK;
}

ody_status ody_tensor_write(const ody_tensor* t, const char* path) {
    if (!t || !path) return einval("ody_tensor_write: null argument");
    return guarded([&] { write_tensor(t->t, path); });
}

ody_status ody_tensor_read(const char* path, ody_tensor** out) {
    if (!path || !out) return einval("ody_tensor_read: null argument");
    return guarded([&] { *out = new ody_tensor{read_dense(path)}; });
}

ody_status ody_matmul_f32(const ody_tensor* a, const ody_tensor* b_transposed, ody_tensor** out) {
    if (!a || !b_transposed || !out) return einval("ody_matmul_f32: null argument");
    return guarded([&] { *out = new ody_tensor{matmul_f32(a->t, b_transposed->t)}; });
}

void ody_qtensor_free(ody_qtensor* q) {
    delete q;
}

ody_status ody_qtensor_write(const ody_qtensor* q, const char* dir) {
    if (!q || !dir) return einval("ody_qtensor_write: null argument");
    return guarded([&] { write_tensor(q->q, dir); });
}

ody_status ody_qtensor_read(const char* dir, ody_qtensor** out) {
    if (!dir || !out) return einval("ody_qtensor_read: null argument");
    return guarded([&] { *out = new ody_qtensor{read_quantized(dir)}; });
}

ody_status ody_qtensor_dims(const ody_qtensor* q, size_t* rows, size_t* cols) {
    if (!q || !rows || !cols) return einval("ody_qtensor_dims: null argument");
    *rows = q->q.rows;
    *cols = q->q.cols;
    return ODY_OK;
}

ody_status ody_quantize_weights(const ody_tensor* w, int bits, ody_granularity granularity,
                                size_t group_size, const float* clip_gamma, const float* clip_beta,
                                ody_qtensor** out) {
    if (!w || !out) return einval("ody_quantize_weights: null argument");
    return guarded([&] {
        QuantScheme scheme;
        scheme.bits = bits;
        scheme.symmetric = true;
        scheme.granularity = to_granularity(granularity);
        scheme.group_size = group_size;
        if (clip_gamma) scheme.clip_gamma.assign(clip_gamma, clip_gamma + w->t.rows());
        if (clip_beta) scheme.clip_beta.assign(clip_beta, clip_beta + w->t.rows());
        *out = new ody_qtensor{quantize_weights(w->t, scheme)};
    });
}

ody_status ody_quantize_activations(const ody_tensor* a, ody_qtensor** out) {
    if (!a || !out) return einval("ody_quantize_activations: null argument");
    return guarded([&] { *out = new ody_qtensor{quantize_activations_per_token(a->t, 8)}; });
}

ody_status ody_dequantize(const ody_qtensor* q, ody_tensor** out) {
    if (!q || !out) return einval("ody_dequantize: null argument");
    return guarded([&] { *out = new ody_tensor{dequantize(q->q)}; });
}

ody_status ody_optimize_clipping(const ody_tensor* w, int bits, float grid_min, float grid_step,
                                 float* gamma, float* beta, float* mse_before, float* mse_after) {
    if (!w) return einval("ody_optimize_clipping: null tensor");
    return guarded([&] {
        ClipGrid grid{grid_min, grid_step};
        ClipResult res = optimize_clipping(w->t, bits, grid);
        const std::size_t n = w->t.rows();
        if (gamma) std::memcpy(gamma, res.gamma.data(), n * sizeof(float));
        if (beta) std::memcpy(beta, res.beta.data(), n * sizeof(float));
        if (mse_before) std::memcpy(mse_before, res.mse_before.data(), n * sizeof(float));
        if (mse_after) std::memcpy(mse_after, res.mse_after.data(), n * sizeof(float));
    });
}

ody_status ody_gptq_quantize(const ody_tensor* w, const ody_tensor* calib, int bits,
                             const float* clip_gamma, const float* clip_beta, int reorder,
                             ody_qtensor** out) {
    if (!w || !calib || !out) return einval("ody_gptq_quantize: null argument");
    return guarded([&] {
        QuantScheme scheme;
        scheme.bits = bits;
        scheme.symmetric = true;
        scheme.granularity = Granularity::PerChannel;
        if (clip_gamma) scheme.clip_gamma.assign(clip_gamma, clip_gamma + w->t.rows());
        if (clip_beta) scheme.clip_beta.assign(clip_beta, clip_beta + w->t.rows());
        HessianState state(w->t.cols());
        state.accumulate(calib->t);
        GptqOptions opts;
        opts.reorder = reorder != 0;
        *out = new ody_qtensor{gptq_quantize_layer(w->t, state, scheme, opts)};
    });
}

ody_status ody_layerwise_error(const ody_tensor* w, const ody_qtensor* w_q, const ody_tensor* x,
                               double* out) {
    if (!w || !w_q || !x || !out) return einval("ody_layerwise_error: null argument");
    return guarded([&] { *out = layerwise_error(w->t, w_q->q, x->t); });
}

ody_status ody_gemm(ody_engine engine, const ody_tensor* a_dense, const ody_qtensor* a_q,
                    const ody_qtensor* w_q, ody_gemm_counters* counters, ody_tensor** out) {
    if (!w_q || !out) return einval("ody_gemm: null argument");
    return guarded([&] {
        Engine e = to_engine(engine);
        if (e == Engine::W4A16Grouped && !a_dense) {
            fail(ErrorCode::InvalidArgument, "ody_gemm: w4a16 engine needs a_dense");
        }
        if (e != Engine::W4A16Grouped && !a_q) {
            fail(ErrorCode::InvalidArgument, "ody_gemm: engine needs quantized activations");
        }
        GemmCounters c;
        static const DenseTensor empty_dense;
        static const QuantizedTensor empty_q;
        DenseTensor result = run_engine(e, a_dense ? a_dense->t : empty_dense,
                                        a_q ? a_q->q : empty_q, w_q->q, &c);
        if (counters) {
            counters->int8_mac_ops = c.int8_mac_ops;
            counters->dequant_events = c.dequant_events;
            counters->zero_point_sub_ops = c.zero_point_sub_ops;
            counters->final_scale_ops = c.final_scale_ops;
        }
        *out = new ody_tensor{std::move(result)};
    });
}

ody_status ody_cmd_quantize(const char* checkpoint_dir, const char* out_dir, const char* recipe,
                            const char* calib_dir, int bits, const char* granularity,
                            size_t group_size, float clip_grid_min, float clip_grid_step) {
    if (!checkpoint_dir || !out_dir || !recipe) return einval("ody_cmd_quantize: null argument");
    return guarded([&] {
        QuantizeConfig cfg;
        cfg.recipe = recipe_from_name(recipe);
        cfg.bits = bits;
        cfg.granularity = granularity ? granularity_from_name(granularity) : Granularity::PerChannel;
        cfg.group_size = group_size;
        cfg.grid = ClipGrid{clip_grid_min, clip_grid_step};
        if (calib_dir) cfg.calib_dir = calib_dir;
        quantize_checkpoint(checkpoint_dir, out_dir, cfg);
    });
}

ody_status ody_cmd_verify(uint64_t seed, int inject_fault, int* ok, char** summary) {
    if (!ok) return einval("ody_cmd_verify: null ok");
    return guarded([&] {
        VerifyResult res = run_verify(seed, inject_fault != 0);
        *ok = res.ok ? 1 : 0;
        if (summary) {
            std::ostringstream os;
            os << "scalar cases: " << res.scalar_cases << "\n"
               << "pack round-trip cases: " << res.pack_cases << "\n"
               << "matrix cases: " << res.matrix_cases << "\n"
               << (res.ok ? "all checks passed" : "MISMATCH: " + res.detail) << "\n";
            *summary = dup_string(os.str());
        }
    });
}

ody_status ody_cmd_gemm_bench(const char* shapes_file, const char* engines, const char* baseline,
                              int repeats, uint64_t seed, const char* format, int parallel_cases,
                              char** report) {
    if (!report) return einval("ody_cmd_gemm_bench: null report");
    return guarded([&] {
        std::vector<Engine> engine_list = parse_engines(engines);
        Engine base = baseline && *baseline ? engine_from_name(baseline) : Engine::W4A8FineGrained;
        if (repeats < 3) fail(ErrorCode::InvalidArgument, "repeats must be >= 3");
        std::vector<BenchCase> cases =
            shapes_file ? parse_shapes_file(shapes_file, seed, repeats, engine_list)
                        : default_sweep(seed, repeats, engine_list);
        std::vector<BenchReport> reports(cases.size());
        if (parallel_cases) {
            std::vector<std::thread> pool;
            for (std::size_t i = 0; i < cases.size(); ++i) {
                pool.emplace_back([&, i] { reports[i] = run_bench(cases[i], base); });
            }
            for (auto& t : pool) t.join();
        } else {
            for (std::size_t i = 0; i < cases.size(); ++i) reports[i] = run_bench(cases[i], base);
        }
        ReportFormat fmt = ReportFormat::Table;
        if (format && std::string(format) == "csv") fmt = ReportFormat::Csv;
        *report = dup_string(emit_report(reports, fmt));
    });
}

ody_status ody_cmd_eval_mse(const char* checkpoint_dir, const char* calib_dir, int bits,
                            float clip_grid_min, float clip_grid_step, char** table) {
    if (!checkpoint_dir || !table) return einval("ody_cmd_eval_mse: null argument");
    return guarded([&] {
        ClipGrid grid{clip_grid_min, clip_grid_step};
        auto rows = eval_mse(checkpoint_dir, calib_dir ? calib_dir : "", bits, grid);
        *table = dup_string(mse_table(rows));
    });
}

ody_status ody_cmd_gen_checkpoint(const char* dir, size_t layers, size_t rows, size_t cols,
                                  size_t calib_rows, double outlier_fraction, uint64_t seed) {
    if (!dir) return einval("ody_cmd_gen_checkpoint: null dir");
    return guarded([&] {
        GenConfig cfg;
        cfg.layers = layers;
        cfg.rows = rows;
        cfg.cols = cols;
        cfg.calib_rows = calib_rows;
        cfg.outlier_fraction = outlier_fraction;
        cfg.seed = seed;
        generate_checkpoint(dir, cfg);
    });
}

} // extern "C"
