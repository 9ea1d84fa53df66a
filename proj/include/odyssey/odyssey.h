/*
 * odyssey.h — C API for the odyssey W4A8 quantization toolkit and
 * software mixed-precision GEMM engine.
 *
 * All functions return ody_status; ODY_OK is 0. On failure,
 * ody_last_error() returns a thread-local message describing what went
 * wrong. Handles are opaque and must be released with their *_free
 * function; strings returned through char** out-parameters must be
 * released with ody_string_free().
 */
#ifndef ODYSSEY_H
#define ODYSSEY_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ody_status {
    ODY_OK = 0,
    ODY_EINVAL = 1,   /* bad argument / shape mismatch */
    ODY_EIO = 2,      /* file I/O failure */
    ODY_EPARSE = 3,   /* bad magic, truncation, unsupported dtype */
    ODY_ENUMERIC = 4, /* verification or numeric failure */
} ody_status;

typedef enum ody_granularity {
    ODY_PER_TENSOR = 0,
    ODY_PER_CHANNEL = 1,
    ODY_PER_TOKEN = 2,
    ODY_PER_GROUP = 3,
} ody_granularity;

typedef enum ody_engine {
    ODY_ENGINE_W4A16 = 0,
    ODY_ENGINE_FINEGRAINED = 1,
    ODY_ENGINE_ASYMMETRIC = 2,
    ODY_ENGINE_FAST = 3,
    ODY_ENGINE_W8A8 = 4,
} ody_engine;

typedef struct ody_tensor ody_tensor;   /* dense row-major f32 matrix */
typedef struct ody_qtensor ody_qtensor; /* quantized tensor */

typedef struct ody_gemm_counters {
    uint64_t int8_mac_ops;
    uint64_t dequant_events;
    uint64_t zero_point_sub_ops;
    uint64_t final_scale_ops;
} ody_gemm_counters;

/* Last error message for the calling thread; empty string when none. */
const char* ody_last_error(void);

void ody_string_free(char* s);

/* Worker threads for parallel sections; 0 restores the hardware default.
 * The ODYSSEY_THREADS environment variable overrides this setting. */
void ody_set_threads(int n);

/* ---- dense tensors ---- */

ody_status ody_tensor_create(size_t rows, size_t cols, const float* data, ody_tensor** out);
void ody_tensor_free(ody_tensor* t);
ody_status ody_tensor_dims(const ody_tensor* t, size_t* rows, size_t* cols);
/* Pointer into the tensor; valid until the tensor is freed. */
ody_status ody_tensor_data(const ody_tensor* t, const float** data);

ody_status ody_tensor_write(const ody_tensor* t, const char* path);
ody_status ody_tensor_read(const char* path, ody_tensor** out);

/* O[i][j] = sum_k a[i][k] * b_transposed[j][k]; fixed accumulation order. */
ody_status ody_matmul_f32(const ody_tensor* a, const ody_tensor* b_transposed, ody_tensor** out);

/* ---- quantized tensors ---- */

void ody_qtensor_free(ody_qtensor* q);
ody_status ody_qtensor_write(const ody_qtensor* q, const char* dir);
ody_status ody_qtensor_read(const char* dir, ody_qtensor** out);
ody_status ody_qtensor_dims(const ody_qtensor* q, size_t* rows, size_t* cols);

/* Symmetric weight quantization. granularity: ODY_PER_CHANNEL or
 * ODY_PER_GROUP (group_size must divide cols). clip_gamma/clip_beta are
 * optional per-row arrays of length rows; NULL means 1.0 everywhere. */
ody_status ody_quantize_weights(const ody_tensor* w, int bits, ody_granularity granularity,
                                size_t group_size, const float* clip_gamma, const float* clip_beta,
                                ody_qtensor** out);

/* Dynamic symmetric per-token INT8 activation quantization. */
ody_status ody_quantize_activations(const ody_tensor* a, ody_qtensor** out);

ody_status ody_dequantize(const ody_qtensor* q, ody_tensor** out);

/* ---- learnable weight clipping ---- */

/* Per output channel, joint grid search over truncation intensities.
 * Arrays must hold w->rows entries; any of them may be NULL. */
ody_status ody_optimize_clipping(const ody_tensor* w, int bits, float grid_min, float grid_step,
                                 float* gamma, float* beta, float* mse_before, float* mse_after);

/* ---- Hessian-based compensation ---- */

/* Column-sequential quantization with Hessian-weighted error propagation.
 * calib is (samples x in_features); per-channel scales come from
 * clip_gamma/clip_beta (min-max when NULL) and stay frozen. */
ody_status ody_gptq_quantize(const ody_tensor* w, const ody_tensor* calib, int bits,
                             const float* clip_gamma, const float* clip_beta, int reorder,
                             ody_qtensor** out);

/* Squared Frobenius norm of (W - Dq(Wq)) X^T. */
ody_status ody_layerwise_error(const ody_tensor* w, const ody_qtensor* w_q, const ody_tensor* x,
                               double* out);

/* ---- GEMM engines ---- */

/* a_dense feeds ODY_ENGINE_W4A16 only (may be NULL otherwise); a_q feeds
 * the rest (may be NULL for W4A16). counters may be NULL. */
ody_status ody_gemm(ody_engine engine, const ody_tensor* a_dense, const ody_qtensor* a_q,
                    const ody_qtensor* w_q, ody_gemm_counters* counters, ody_tensor** out);

/* ---- pipeline commands (CLI backends) ---- */

/* recipe: "rtn", "lwc", "lwc+gptq". calib_dir may be NULL except for
 * lwc+gptq. granularity: "per_channel" or "per_group". Writes <layer>.q/
 * tensor directories plus report.csv under out_dir. */
ody_status ody_cmd_quantize(const char* checkpoint_dir, const char* out_dir, const char* recipe,
                            const char* calib_dir, int bits, const char* granularity,
                            size_t group_size, float clip_grid_min, float clip_grid_step);

/* Exactness suite. Returns a human-readable summary; *ok is 1 when every
 * check passed. inject_fault flips one nibble as a negative control. */
ody_status ody_cmd_verify(uint64_t seed, int inject_fault, int* ok, char** summary);

/* Benchmark sweep. shapes_file: optional text file of "m n k g" lines
 * (NULL selects the built-in sweep). engines: comma-separated names
 * (fast, finegrained, asymmetric, w8a8, w4a16); NULL selects all.
 * format: "csv" or "table". parallel_cases runs cases concurrently. */
ody_status ody_cmd_gemm_bench(const char* shapes_file, const char* engines, const char* baseline,
                              int repeats, uint64_t seed, const char* format, int parallel_cases,
                              char** report);

/* Per-layer layerwise-error ablation (rtn / lwc / lwc+gptq) as a text
 * table. calib_dir may be NULL (weight MSE is reported instead and the
 * gptq column is omitted). */
ody_status ody_cmd_eval_mse(const char* checkpoint_dir, const char* calib_dir, int bits,
                            float clip_grid_min, float clip_grid_step, char** table);

/* Seeded synthetic checkpoint generator (Gaussian weights with injected
 * outliers; calibration activations under <dir>/calib). */
ody_status ody_cmd_gen_checkpoint(const char* dir, size_t layers, size_t rows, size_t cols,
                                  size_t calib_rows, double outlier_fraction, uint64_t seed);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* ODYSSEY_H */
