#include "pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "hessian.hpp"
#include "otf.hpp"
#include "quantize.hpp"

namespace ody {

namespace fs = std::filesystem;

std::string recipe_name(Recipe r) {
    switch (r) {
        case Recipe::Rtn: return "rtn";
        case Recipe::Lwc: return "lwc";
        case Recipe::LwcGptq: return "lwc+gptq";
    }
    return "unknown";
}

Recipe recipe_from_name(const std::string& name) {
    if (name == "rtn") return Recipe::Rtn;
    if (name == "lwc") return Recipe::Lwc;
    if (name == "lwc+gptq") return Recipe::LwcGptq;
    fail(ErrorCode::InvalidArgument, "unknown recipe: " + name + " (expected rtn, lwc, lwc+gptq)");
}

std::vector<std::string> read_manifest(const fs::path& checkpoint_dir) {
    std::ifstream f(checkpoint_dir / "manifest.txt");
    if (!f) fail(ErrorCode::Io, "missing manifest.txt in " + checkpoint_dir.string());
    std::vector<std::string> layers;
    std::string line;
    while (std::getline(f, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) layers.push_back(line);
    }
    if (layers.empty()) fail(ErrorCode::InvalidArgument, "empty manifest in " + checkpoint_dir.string());
    return layers;
}

namespace {

double weight_mse(const DenseTensor& w, const QuantizedTensor& q) {
    DenseTensor dq = dequantize(q);
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        double e = static_cast<double>(w.data()[i]) - static_cast<double>(dq.data()[i]);
        acc += e * e;
    }
    return acc / static_cast<double>(w.size());
}

QuantizedTensor quantize_layer(const DenseTensor& w, const QuantizeConfig& cfg,
                               const DenseTensor* calib) {
    QuantScheme scheme;
    scheme.bits = cfg.bits;
    scheme.symmetric = true;
    scheme.granularity = cfg.granularity;
    scheme.group_size = cfg.group_size;

    if (cfg.recipe != Recipe::Rtn) {
        ClipResult clip = optimize_clipping(w, cfg.bits, cfg.grid);
        scheme.clip_gamma = clip.gamma;
        scheme.clip_beta = clip.beta;
    }
    if (cfg.recipe == Recipe::LwcGptq) {
        if (!calib) fail(ErrorCode::InvalidArgument, "recipe lwc+gptq requires calibration data");
        if (cfg.granularity != Granularity::PerChannel) {
            fail(ErrorCode::InvalidArgument,
                 "recipe lwc+gptq supports per_channel granularity only (the fast-engine layout)");
        }
        HessianState state(w.cols());
        state.accumulate(*calib);
        GptqOptions opts;
        opts.reorder = cfg.reorder;
        return gptq_quantize_layer(w, state, scheme, opts);
    }
    return quantize_weights(w, scheme);
}

} // namespace

QuantizeResult quantize_checkpoint(const fs::path& checkpoint_dir, const fs::path& out_dir,
                                   const QuantizeConfig& cfg) {
    if (cfg.recipe == Recipe::LwcGptq && cfg.calib_dir.empty()) {
        fail(ErrorCode::InvalidArgument, "recipe lwc+gptq requires --calib");
    }
    std::vector<std::string> layers = read_manifest(checkpoint_dir);
    std::error_code ec;
    fs::create_directories(out_dir, ec);

    QuantizeResult result;
    for (const auto& name : layers) {
        DenseTensor w = read_dense(checkpoint_dir / (name + ".otf"));
        DenseTensor calib;
        bool have_calib = false;
        if (!cfg.calib_dir.empty()) {
            fs::path cpath = cfg.calib_dir / (name + ".otf");
            if (!fs::exists(cpath)) {
                fail(ErrorCode::Io, "missing calibration tensor " + cpath.string());
            }
            calib = read_dense(cpath);
            have_calib = true;
        }

        QuantizedTensor q = quantize_layer(w, cfg, have_calib ? &calib : nullptr);
        write_tensor(q, out_dir / (name + ".q"));

        QuantScheme rtn_scheme;
        rtn_scheme.bits = cfg.bits;
        rtn_scheme.granularity = cfg.granularity;
        rtn_scheme.group_size = cfg.group_size;
        QuantizedTensor baseline = quantize_weights(w, rtn_scheme);

        LayerReport rep;
        rep.layer = name;
        rep.rows = w.rows();
        rep.cols = w.cols();
        rep.mse_before = weight_mse(w, baseline);
        rep.mse_after = weight_mse(w, q);
        if (have_calib) rep.layerwise_error = layerwise_error(w, q, calib);
        result.layers.push_back(rep);
    }

    std::ofstream rf(out_dir / "report.csv", std::ios::trunc);
    if (!rf) fail(ErrorCode::Io, "cannot write report.csv under " + out_dir.string());
    rf << quantize_report_csv(result);
    return result;
}

std::string quantize_report_csv(const QuantizeResult& result) {
    std::ostringstream os;
    os << "layer,rows,cols,mse_before,mse_after,layerwise_error\n";
    os << std::setprecision(9) << std::scientific;
    for (const auto& l : result.layers) {
        os << l.layer << "," << l.rows << "," << l.cols << "," << l.mse_before << "," << l.mse_after
           << ",";
        if (l.layerwise_error >= 0.0) os << l.layerwise_error;
        os << "\n";
    }
    return os.str();
}

VerifyResult run_verify(std::uint64_t seed, bool inject_fault) {
    VerifyResult res;

    // Exhaustive scalar sweep: 16 INT4 weight codes x 256 INT8 activations.
    for (int wcode = -8; wcode <= 7; ++wcode) {
        for (int acode = -128; acode <= 127; ++acode) {
            PackedInt4Buffer buf(std::vector<std::int8_t>{static_cast<std::int8_t>(wcode)});
            std::int32_t high = unpack_sint4_as_high_nibble(buf, 0);
            std::int32_t got = (acode * high) >> 4;
            std::int32_t want = acode * wcode;
            ++res.scalar_cases;
            if (got != want) {
                res.ok = false;
                res.detail = "scalar mismatch at w=" + std::to_string(wcode) +
                             " a=" + std::to_string(acode);
                return res;
            }
        }
    }

    // Pack round-trips over all 16 values, both packers.
    for (int v = -8; v <= 7; ++v) {
        std::vector<std::int8_t> vec{static_cast<std::int8_t>(v)};
        ++res.pack_cases;
        if (pack_sint4_high_nibble(vec).get(0) != v) {
            res.ok = false;
            res.detail = "sint4 pack round-trip failed at " + std::to_string(v);
            return res;
        }
        PackedInt4Buffer off = pack_uint4_offset(vec);
        if (static_cast<int>(unpack_uint4_offset_raw(off, 0)) - 8 != v) {
            res.ok = false;
            res.detail = "uint4 offset round-trip failed at " + std::to_string(v);
            return res;
        }
    }

    // Random matrix agreement across engines.
    Rng rng(seed);
    for (int trial = 0; trial < 20; ++trial) {
        std::size_t m = static_cast<std::size_t>(rng.uniform_int(1, 64));
        std::size_t n = static_cast<std::size_t>(rng.uniform_int(1, 64));
        std::size_t k = static_cast<std::size_t>(rng.uniform_int(1, 64));
        DenseTensor a(m, k);
        for (auto& v : a.data()) v = static_cast<float>(rng.gaussian());
        DenseTensor w(n, k);
        for (auto& v : w.data()) v = static_cast<float>(rng.gaussian() * 0.1);

        QuantizedTensor a_q = quantize_activations_per_token(a, 8);
        QuantScheme pc;
        pc.bits = 4;
        pc.granularity = Granularity::PerChannel;
        QuantizedTensor w_q = quantize_weights(w, pc);

        std::vector<std::int8_t> codes = w_q.payload_i4.unpack();
        if (inject_fault && trial == 7) {
            // negative control: flip one nibble in the packed buffer only;
            // the sign-extension oracle keeps the original codes
            std::size_t idx = (m * n) % w_q.payload_i4.element_count();
            std::int8_t v = w_q.payload_i4.get(idx);
            w_q.payload_i4.set(idx, static_cast<std::int8_t>(v == 7 ? -8 : v + 1));
        }

        std::vector<std::int32_t> fast_acc = gemm_w4a8_fast_accumulators(a_q, w_q);
        ++res.matrix_cases;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                std::int32_t want = 0;
                for (std::size_t kk = 0; kk < k; ++kk) {
                    want += static_cast<std::int32_t>(a_q.payload_i8[i * k + kk]) *
                            static_cast<std::int32_t>(codes[j * k + kk]);
                }
                std::int32_t got = fast_acc[i * n + j] >> 4;
                if (got != want) {
                    res.ok = false;
                    res.detail = "matrix mismatch trial " + std::to_string(trial) + " at (i=" +
                                 std::to_string(i) + ", j=" + std::to_string(j) + ")";
                    return res;
                }
            }
        }
    }
    return res;
}

std::vector<MseAblationRow> eval_mse(const fs::path& checkpoint_dir, const fs::path& calib_dir,
                                     int bits, const ClipGrid& grid) {
    std::vector<std::string> layers = read_manifest(checkpoint_dir);
    std::vector<MseAblationRow> rows;
    for (const auto& name : layers) {
        DenseTensor w = read_dense(checkpoint_dir / (name + ".otf"));
        DenseTensor calib;
        bool have_calib = false;
        if (!calib_dir.empty()) {
            calib = read_dense(calib_dir / (name + ".otf"));
            have_calib = true;
        }

        QuantScheme scheme;
        scheme.bits = bits;
        scheme.granularity = Granularity::PerChannel;
        QuantizedTensor rtn = quantize_weights(w, scheme);

        ClipResult clip = optimize_clipping(w, bits, grid);
        QuantScheme lwc_scheme = scheme;
        lwc_scheme.clip_gamma = clip.gamma;
        lwc_scheme.clip_beta = clip.beta;
        QuantizedTensor lwc = quantize_weights(w, lwc_scheme);

        MseAblationRow row;
        row.layer = name;
        if (have_calib) {
            row.err_rtn = layerwise_error(w, rtn, calib);
            row.err_lwc = layerwise_error(w, lwc, calib);
            HessianState state(w.cols());
            state.accumulate(calib);
            QuantizedTensor gptq = gptq_quantize_layer(w, state, lwc_scheme);
            row.err_lwc_gptq = layerwise_error(w, gptq, calib);
        } else {
            row.err_rtn = weight_mse(w, rtn);
            row.err_lwc = weight_mse(w, lwc);
        }
        rows.push_back(row);
    }
    return rows;
}

std::string mse_table(const std::vector<MseAblationRow>& rows) {
    std::ostringstream os;
    os << std::left << std::setw(16) << "layer" << std::right << std::setw(16) << "rtn"
       << std::setw(16) << "lwc" << std::setw(16) << "lwc+gptq" << "\n";
    os << std::setprecision(6) << std::scientific;
    for (const auto& r : rows) {
        os << std::left << std::setw(16) << r.layer << std::right << std::setw(16) << r.err_rtn
           << std::setw(16) << r.err_lwc << std::setw(16);
        if (r.err_lwc_gptq >= 0.0) {
            os << r.err_lwc_gptq;
        } else {
            os << "-";
        }
        os << "\n";
    }
    return os.str();
}

DenseTensor synth_gaussian(std::size_t rows, std::size_t cols, Rng& rng, double stddev) {
    DenseTensor t(rows, cols);
    for (auto& v : t.data()) v = static_cast<float>(rng.gaussian() * stddev);
    return t;
}

DenseTensor synth_weights_with_outliers(std::size_t rows, std::size_t cols, Rng& rng,
                                        double outlier_fraction, double outlier_sigma) {
    DenseTensor t(rows, cols);
    for (auto& v : t.data()) {
        double x = rng.gaussian() * 0.1;
        if (rng.uniform() < outlier_fraction) x *= outlier_sigma;
        v = static_cast<float>(x);
    }
    return t;
}

void generate_checkpoint(const fs::path& dir, const GenConfig& cfg) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (cfg.calib_rows > 0) fs::create_directories(dir / "calib", ec);
    Rng rng(cfg.seed);
    std::ofstream manifest(dir / "manifest.txt", std::ios::trunc);
    if (!manifest) fail(ErrorCode::Io, "cannot write manifest under " + dir.string());
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        std::string name = "layer" + std::to_string(l);
        manifest << name << "\n";
        DenseTensor w =
            synth_weights_with_outliers(cfg.rows, cfg.cols, rng, cfg.outlier_fraction, cfg.outlier_sigma);
        write_tensor(w, dir / (name + ".otf"));
        if (cfg.calib_rows > 0) {
            DenseTensor x = synth_gaussian(cfg.calib_rows, cfg.cols, rng);
            write_tensor(x, dir / "calib" / (name + ".otf"));
        }
    }
}

} // namespace ody
