#include "bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "quantize.hpp"
#include "rng.hpp"

namespace ody {

std::uint64_t fnv1a(const void* data, std::size_t bytes) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

void BenchCase::validate() const {
    if (m == 0 || n == 0 || k == 0) fail(ErrorCode::InvalidArgument, "BenchCase: shapes must be positive");
    if (repeats < 3) fail(ErrorCode::InvalidArgument, "BenchCase: repeats must be >= 3");
    if (engines.empty()) fail(ErrorCode::InvalidArgument, "BenchCase: no engines");
    for (Engine e : engines) {
        if ((e == Engine::W4A8FineGrained || e == Engine::W4A16Grouped) &&
            (group_size == 0 || k % group_size != 0)) {
            fail(ErrorCode::InvalidArgument, "BenchCase: group size does not divide K");
        }
    }
}

std::string BenchCase::id() const {
    std::ostringstream os;
    os << "m" << m << "_n" << n << "_k" << k << "_g" << group_size;
    return os.str();
}

std::vector<BenchCase> default_sweep(std::uint64_t seed, int repeats,
                                     const std::vector<Engine>& engines) {
    // (N, K) pairs from the LLaMA-2-70B kernel shapes, scaled down 8x.
    const std::size_t shapes[4][2] = {{512, 512}, {128, 1024}, {1386, 512}, {640, 640}};
    const std::size_t context_m = 128; // 1024 / 8
    std::vector<BenchCase> cases;
    for (std::size_t mi = 0; mi < 2; ++mi) {
        for (const auto& nk : shapes) {
            BenchCase c;
            c.m = mi == 0 ? context_m : 1;
            c.n = nk[0];
            c.k = nk[1];
            c.group_size = 128;
            c.engines = engines;
            c.repeats = repeats;
            c.seed = seed;
            cases.push_back(c);
        }
    }
    return cases;
}

namespace {

struct PreparedInputs {
    DenseTensor a_dense; // Dq(a_q): the float activations the W4A16 path consumes
    QuantizedTensor a_q;
    QuantizedTensor w_per_channel;  // 4-bit
    QuantizedTensor w_grouped;      // 4-bit, channel scale replicated per group
    QuantizedTensor w_widened;      // int8 codes == int4 codes, same scales
    PackedInt4Buffer w_offset;
};

// One per-channel quantization feeds every engine: grouped/widened/offset
// views carry the identical codes and scales, so outputs must agree and the
// cross-check is meaningful.
PreparedInputs prepare_inputs(const BenchCase& c) {
    Rng rng(c.seed ^ 0x9d2c5680u);
    DenseTensor a(c.m, c.k);
    for (auto& v : a.data()) v = static_cast<float>(rng.gaussian());
    DenseTensor w(c.n, c.k);
    for (auto& v : w.data()) v = static_cast<float>(rng.gaussian() * 0.1);

    PreparedInputs in;
    in.a_q = quantize_activations_per_token(a, 8);
    in.a_dense = dequantize(in.a_q);

    QuantScheme pc;
    pc.bits = 4;
    pc.symmetric = true;
    pc.granularity = Granularity::PerChannel;
    in.w_per_channel = quantize_weights(w, pc);

    const std::size_t groups = c.k / c.group_size;
    in.w_grouped = in.w_per_channel;
    in.w_grouped.scheme.granularity = Granularity::PerGroup;
    in.w_grouped.scheme.group_size = c.group_size;
    in.w_grouped.scales.resize(c.n * groups);
    for (std::size_t r = 0; r < c.n; ++r) {
        for (std::size_t g = 0; g < groups; ++g) {
            in.w_grouped.scales[r * groups + g] = in.w_per_channel.scales[r];
        }
    }

    in.w_widened = in.w_per_channel;
    in.w_widened.scheme.bits = 8;
    in.w_widened.payload_i8 = in.w_per_channel.payload_i4.unpack();
    in.w_widened.payload_i4 = PackedInt4Buffer();

    in.w_offset = pack_uint4_offset(in.w_per_channel.payload_i4.unpack());
    return in;
}

DenseTensor dispatch(Engine e, const PreparedInputs& in, const BenchCase& c, GemmCounters* counters) {
    switch (e) {
        case Engine::W4A16Grouped: return gemm_w4a16_grouped(in.a_dense, in.w_grouped, counters);
        case Engine::W4A8FineGrained: return gemm_w4a8_finegrained(in.a_q, in.w_grouped, counters);
        case Engine::W4A8Asymmetric:
            return gemm_w4a8_asymmetric(in.a_q, in.w_offset, c.n, c.k, in.w_per_channel.scales, counters);
        case Engine::W4A8Fast: return gemm_w4a8_fast(in.a_q, in.w_per_channel, counters);
        case Engine::W8A8: return gemm_w8a8(in.a_q, in.w_widened, counters);
    }
    fail(ErrorCode::InvalidArgument, "dispatch: unknown engine");
}

void cross_check(const DenseTensor& ref, const DenseTensor& got, Engine e, const BenchCase& c) {
    float max_abs = 0.0f;
    for (float v : ref.data()) max_abs = std::max(max_abs, std::fabs(v));
    const float tol = 1e-5f * std::max(1.0f, max_abs);
    for (std::size_t i = 0; i < ref.size(); ++i) {
        if (std::fabs(ref.data()[i] - got.data()[i]) > tol) {
            fail(ErrorCode::Numeric,
                 "verification error: engine " + engine_name(e) + " disagrees with fast path on case " +
                     c.id() + " at flat index " + std::to_string(i));
        }
    }
}

} // namespace

BenchReport run_bench(const BenchCase& c, Engine baseline) {
    c.validate();
    PreparedInputs in = prepare_inputs(c);

    BenchReport report;
    report.bench_case = c;
    report.baseline = baseline;

    // Agreement gate before any timing.
    DenseTensor ref = gemm_w4a8_fast(in.a_q, in.w_per_channel, nullptr);
    for (Engine e : c.engines) {
        if (e == Engine::W4A8Fast) continue;
        DenseTensor got = dispatch(e, in, c, nullptr);
        cross_check(ref, got, e, c);
    }

    for (Engine e : c.engines) {
        EngineResult r;
        r.engine = e;
        DenseTensor out;
        for (int i = 0; i < c.warmup; ++i) out = dispatch(e, in, c, nullptr);
        std::vector<std::uint64_t> times;
        times.reserve(static_cast<std::size_t>(c.repeats));
        for (int i = 0; i < c.repeats; ++i) {
            GemmCounters counters;
            auto t0 = std::chrono::steady_clock::now();
            out = dispatch(e, in, c, &counters);
            auto t1 = std::chrono::steady_clock::now();
            times.push_back(static_cast<std::uint64_t>(
                std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
            r.counters = counters; // identical every repeat
        }
        std::sort(times.begin(), times.end());
        r.median_ns = times[times.size() / 2];
        r.checksum = fnv1a(out.data().data(), out.size() * sizeof(float));
        report.engines.push_back(r);
    }

    const EngineResult* base = nullptr;
    for (const auto& r : report.engines) {
        if (r.engine == baseline) base = &r;
    }
    for (auto& r : report.engines) {
        r.speedup_vs_baseline =
            base && r.median_ns > 0 ? static_cast<double>(base->median_ns) / static_cast<double>(r.median_ns)
                                    : 0.0;
    }

    const EngineResult* fast = nullptr;
    for (const auto& r : report.engines) {
        if (r.engine == Engine::W4A8Fast) fast = &r;
    }
    if (fast) {
        for (const auto& r : report.engines) {
            if ((r.engine == Engine::W4A8FineGrained || r.engine == Engine::W4A8Asymmetric) &&
                fast->median_ns > r.median_ns) {
                report.warnings.push_back("soft check: fast slower than " + engine_name(r.engine) +
                                          " on case " + c.id());
            }
        }
    }
    return report;
}

std::string emit_report(const std::vector<BenchReport>& reports, ReportFormat format) {
    std::ostringstream os;
    const char* header =
        "case_id,engine,m,n,k,g,median_ns,int8_mac_ops,dequant_events,zero_point_sub_ops,"
        "final_scale_ops,speedup_vs_baseline,checksum";
    if (format == ReportFormat::Csv) {
        os << header << "\n";
        for (const auto& rep : reports) {
            for (const auto& r : rep.engines) {
                os << rep.bench_case.id() << "," << engine_name(r.engine) << "," << rep.bench_case.m
                   << "," << rep.bench_case.n << "," << rep.bench_case.k << ","
                   << rep.bench_case.group_size << "," << r.median_ns << "," << r.counters.int8_mac_ops
                   << "," << r.counters.dequant_events << "," << r.counters.zero_point_sub_ops << ","
                   << r.counters.final_scale_ops << "," << std::setprecision(6) << std::fixed
                   << r.speedup_vs_baseline << std::defaultfloat << "," << r.checksum << "\n";
            }
        }
        return os.str();
    }

    os << std::left << std::setw(22) << "case" << std::setw(13) << "engine" << std::right
       << std::setw(12) << "median_ns" << std::setw(14) << "int8_macs" << std::setw(14) << "dequants"
       << std::setw(12) << "zp_subs" << std::setw(10) << "speedup" << "\n";
    for (const auto& rep : reports) {
        for (const auto& r : rep.engines) {
            os << std::left << std::setw(22) << rep.bench_case.id() << std::setw(13)
               << engine_name(r.engine) << std::right << std::setw(12) << r.median_ns << std::setw(14)
               << r.counters.int8_mac_ops << std::setw(14) << r.counters.dequant_events << std::setw(12)
               << r.counters.zero_point_sub_ops << std::setw(10) << std::setprecision(2) << std::fixed
               << r.speedup_vs_baseline << std::defaultfloat << "\n";
        }
        for (const auto& w : rep.warnings) os << "# " << w << "\n";
    }
    return os.str();
}

} // namespace ody
