#include "gemm.hpp"

#include <algorithm>
#include <mutex>

#include "parallel.hpp"
#include "quantize.hpp"

namespace ody {

namespace {

// 127*127*K must stay below 2^31.
constexpr std::size_t kMaxK = std::size_t{1} << 17;

void check_k(std::size_t k) {
    if (k > kMaxK) {
        fail(ErrorCode::InvalidArgument, "GEMM: K exceeds the 32-bit accumulator safety bound 2^17");
    }
}

void require(bool cond, const char* msg) {
    if (!cond) fail(ErrorCode::ShapeMismatch, msg);
}

void require_per_token_i8(const QuantizedTensor& a_q) {
    if (a_q.scheme.granularity != Granularity::PerToken || a_q.scheme.bits != 8 || !a_q.scheme.symmetric) {
        fail(ErrorCode::InvalidArgument, "GEMM: activations must be symmetric per-token INT8");
    }
}

struct CounterSink {
    GemmCounters* out;
    std::mutex mu;

    void add(const GemmCounters& c) {
        if (!out) return;
        std::lock_guard<std::mutex> lock(mu);
        out->merge(c);
    }
};

} // namespace

PackedInt4Buffer pack_sint4_high_nibble(const std::vector<std::int8_t>& q) {
    return PackedInt4Buffer(q); // low 4 two's-complement bits, range-checked
}

std::int8_t unpack_sint4_as_high_nibble(const PackedInt4Buffer& buf, std::size_t i) {
    std::uint8_t byte = buf.bytes()[i / 2];
    std::uint8_t shifted = (i % 2 == 0) ? static_cast<std::uint8_t>(byte << 4)
                                        : static_cast<std::uint8_t>(byte & 0xF0);
    return static_cast<std::int8_t>(shifted); // value * 16
}

PackedInt4Buffer pack_uint4_offset(const std::vector<std::int8_t>& q) {
    std::vector<std::uint8_t> bytes((q.size() + 1) / 2, 0);
    for (std::size_t i = 0; i < q.size(); ++i) {
        if (q[i] < -8 || q[i] > 7) {
            fail(ErrorCode::InvalidArgument, "pack_uint4_offset: value out of [-8,7]");
        }
        std::uint8_t nib = static_cast<std::uint8_t>(q[i] + 8); // in [0,15]
        if (i % 2 == 0) {
            bytes[i / 2] |= nib;
        } else {
            bytes[i / 2] |= static_cast<std::uint8_t>(nib << 4);
        }
    }
    return PackedInt4Buffer(std::move(bytes), q.size());
}

std::uint8_t unpack_uint4_offset_raw(const PackedInt4Buffer& buf, std::size_t i) {
    std::uint8_t byte = buf.bytes()[i / 2];
    return (i % 2 == 0) ? static_cast<std::uint8_t>(byte & 0x0F) : static_cast<std::uint8_t>(byte >> 4);
}

std::string engine_name(Engine e) {
    switch (e) {
        case Engine::W4A16Grouped: return "w4a16";
        case Engine::W4A8FineGrained: return "finegrained";
        case Engine::W4A8Asymmetric: return "asymmetric";
        case Engine::W4A8Fast: return "fast";
        case Engine::W8A8: return "w8a8";
    }
    return "unknown";
}

Engine engine_from_name(const std::string& name) {
    if (name == "w4a16") return Engine::W4A16Grouped;
    if (name == "finegrained") return Engine::W4A8FineGrained;
    if (name == "asymmetric") return Engine::W4A8Asymmetric;
    if (name == "fast") return Engine::W4A8Fast;
    if (name == "w8a8") return Engine::W8A8;
    fail(ErrorCode::InvalidArgument, "unknown engine: " + name);
}

DenseTensor gemm_w4a16_grouped(const DenseTensor& a, const QuantizedTensor& w_q, GemmCounters* counters) {
    require(a.cols() == w_q.cols, "gemm_w4a16_grouped: inner dims disagree");
    if (w_q.scheme.bits != 4) fail(ErrorCode::InvalidArgument, "gemm_w4a16_grouped: weights must be 4-bit");
    const std::size_t m = a.rows(), n = w_q.rows, k = a.cols();
    DenseTensor out(m, n);
    CounterSink sink{counters, {}};
    parallel_for_rows(m, [&](std::size_t r0, std::size_t r1) {
        GemmCounters local;
        for (std::size_t i = r0; i < r1; ++i) {
            const float* ai = a.row(i);
            for (std::size_t j = 0; j < n; ++j) {
                float acc = 0.0f;
                for (std::size_t kk = 0; kk < k; ++kk) {
                    // dequantize the weight element, then a real FMA
                    float wf = static_cast<float>(w_q.code(j, kk)) * w_q.scale_at(j, kk);
                    acc += ai[kk] * wf;
                }
                local.dequant_events += k;
                out.at(i, j) = acc;
            }
        }
        sink.add(local);
    });
    return out;
}

DenseTensor gemm_w4a8_finegrained(const QuantizedTensor& a_q, const QuantizedTensor& w_q,
                                  GemmCounters* counters) {
    require_per_token_i8(a_q);
    require(a_q.cols == w_q.cols, "gemm_w4a8_finegrained: inner dims disagree");
    if (w_q.scheme.bits != 4) fail(ErrorCode::InvalidArgument, "gemm_w4a8_finegrained: weights must be 4-bit");
    const std::size_t g = w_q.scheme.granularity == Granularity::PerGroup ? w_q.scheme.group_size : w_q.cols;
    if (g == 0 || w_q.cols % g != 0) {
        fail(ErrorCode::InvalidArgument, "gemm_w4a8_finegrained: g does not divide K");
    }
    check_k(g);
    const std::size_t m = a_q.rows, n = w_q.rows, k = w_q.cols, groups = k / g;
    DenseTensor out(m, n);
    CounterSink sink{counters, {}};
    parallel_for_rows(m, [&](std::size_t r0, std::size_t r1) {
        GemmCounters local;
        for (std::size_t i = r0; i < r1; ++i) {
            const std::int8_t* ai = a_q.payload_i8.data() + i * k;
            const float sa = a_q.scales[i];
            for (std::size_t j = 0; j < n; ++j) {
                float acc = 0.0f;
                for (std::size_t gi = 0; gi < groups; ++gi) {
                    std::int32_t sub = 0;
                    const std::size_t base = gi * g;
                    for (std::size_t kk = 0; kk < g; ++kk) {
                        sub += static_cast<std::int32_t>(ai[base + kk]) *
                               static_cast<std::int32_t>(w_q.code(j, base + kk));
                    }
                    // group sub-sum leaves the integer domain here
                    acc += static_cast<float>(sub) * (sa * w_q.scale_at(j, base));
                }
                local.int8_mac_ops += k;
                local.dequant_events += groups;
                out.at(i, j) = acc;
            }
        }
        sink.add(local);
    });
    return out;
}

DenseTensor gemm_w4a8_asymmetric(const QuantizedTensor& a_q, const PackedInt4Buffer& w_offset,
                                 std::size_t n, std::size_t k, const std::vector<float>& w_scales,
                                 GemmCounters* counters) {
    require_per_token_i8(a_q);
    require(a_q.cols == k, "gemm_w4a8_asymmetric: inner dims disagree");
    require(w_offset.element_count() == n * k, "gemm_w4a8_asymmetric: packed buffer size mismatch");
    require(w_scales.size() == n, "gemm_w4a8_asymmetric: scales size mismatch");
    check_k(k);
    const std::size_t m = a_q.rows;

    // One unpack sweep over the weights: widen to 32-bit, subtract 8.
    std::vector<std::int32_t> wide(n * k);
    for (std::size_t i = 0; i < n * k; ++i) {
        wide[i] = static_cast<std::int32_t>(unpack_uint4_offset_raw(w_offset, i)) - 8;
    }
    if (counters) counters->zero_point_sub_ops += n * k;

    DenseTensor out(m, n);
    CounterSink sink{counters, {}};
    parallel_for_rows(m, [&](std::size_t r0, std::size_t r1) {
        GemmCounters local;
        for (std::size_t i = r0; i < r1; ++i) {
            const std::int8_t* ai = a_q.payload_i8.data() + i * k;
            const float sa = a_q.scales[i];
            for (std::size_t j = 0; j < n; ++j) {
                const std::int32_t* wj = wide.data() + j * k;
                std::int32_t acc = 0;
                for (std::size_t kk = 0; kk < k; ++kk) {
                    acc += static_cast<std::int32_t>(ai[kk]) * wj[kk];
                }
                local.int8_mac_ops += k;
                local.dequant_events += 1;
                local.final_scale_ops += 1;
                out.at(i, j) = static_cast<float>(acc) * (sa * w_scales[j]);
            }
        }
        sink.add(local);
    });
    return out;
}

namespace {

void require_fast_inputs(const QuantizedTensor& a_q, const QuantizedTensor& w_q) {
    require_per_token_i8(a_q);
    if (w_q.scheme.bits != 4 || w_q.scheme.granularity != Granularity::PerChannel) {
        fail(ErrorCode::InvalidArgument, "gemm_w4a8_fast: weights must be per-channel 4-bit");
    }
    if (!w_q.scheme.symmetric) {
        fail(ErrorCode::InvalidArgument, "gemm_w4a8_fast: asymmetric weights not supported");
    }
    require(a_q.cols == w_q.cols, "gemm_w4a8_fast: inner dims disagree");
    check_k(w_q.cols);
}

// Single unpack pass: nibble into the high 4 bits of an INT8 lane.
std::vector<std::int8_t> unpack_high_nibble_lanes(const PackedInt4Buffer& buf) {
    std::vector<std::int8_t> lanes(buf.element_count());
    for (std::size_t i = 0; i < lanes.size(); ++i) {
        lanes[i] = unpack_sint4_as_high_nibble(buf, i);
    }
    return lanes;
}

} // namespace

std::vector<std::int32_t> gemm_w4a8_fast_accumulators(const QuantizedTensor& a_q,
                                                      const QuantizedTensor& w_q) {
    require_fast_inputs(a_q, w_q);
    const std::size_t m = a_q.rows, n = w_q.rows, k = w_q.cols;
    std::vector<std::int8_t> wh = unpack_high_nibble_lanes(w_q.payload_i4);
    std::vector<std::int32_t> acc(m * n);
    parallel_for_rows(m, [&](std::size_t r0, std::size_t r1) {
        for (std::size_t i = r0; i < r1; ++i) {
            const std::int8_t* ai = a_q.payload_i8.data() + i * k;
            for (std::size_t j = 0; j < n; ++j) {
                const std::int8_t* wj = wh.data() + j * k;
                std::int32_t s = 0;
                for (std::size_t kk = 0; kk < k; ++kk) {
                    s += static_cast<std::int32_t>(ai[kk]) * static_cast<std::int32_t>(wj[kk]);
                }
                acc[i * n + j] = s;
            }
        }
    });
    return acc;
}

DenseTensor gemm_w4a8_fast(const QuantizedTensor& a_q, const QuantizedTensor& w_q,
                           GemmCounters* counters) {
    require_fast_inputs(a_q, w_q);
    const std::size_t m = a_q.rows, n = w_q.rows, k = w_q.cols;
    std::vector<std::int8_t> wh = unpack_high_nibble_lanes(w_q.payload_i4);
    DenseTensor out(m, n);
    CounterSink sink{counters, {}};
    parallel_for_rows(m, [&](std::size_t r0, std::size_t r1) {
        GemmCounters local;
        for (std::size_t i = r0; i < r1; ++i) {
            const std::int8_t* ai = a_q.payload_i8.data() + i * k;
            const float sa = a_q.scales[i];
            for (std::size_t j = 0; j < n; ++j) {
                const std::int8_t* wj = wh.data() + j * k;
                std::int32_t acc = 0;
                for (std::size_t kk = 0; kk < k; ++kk) {
                    acc += static_cast<std::int32_t>(ai[kk]) * static_cast<std::int32_t>(wj[kk]);
                }
                acc >>= 4; // exact: every addend is a multiple of 16
                local.int8_mac_ops += k;
                local.dequant_events += 1;
                local.final_scale_ops += 1;
                out.at(i, j) = static_cast<float>(acc) * (sa * w_q.scales[j]);
            }
        }
        sink.add(local);
    });
    return out;
}

DenseTensor gemm_w8a8(const QuantizedTensor& a_q, const QuantizedTensor& w_q, GemmCounters* counters) {
    require_per_token_i8(a_q);
    if (w_q.scheme.bits != 8 || w_q.scheme.granularity != Granularity::PerChannel) {
        fail(ErrorCode::InvalidArgument, "gemm_w8a8: weights must be per-channel 8-bit");
    }
    require(a_q.cols == w_q.cols, "gemm_w8a8: inner dims disagree");
    check_k(w_q.cols);
    const std::size_t m = a_q.rows, n = w_q.rows, k = w_q.cols;
    DenseTensor out(m, n);
    CounterSink sink{counters, {}};
    parallel_for_rows(m, [&](std::size_t r0, std::size_t r1) {
        GemmCounters local;
        for (std::size_t i = r0; i < r1; ++i) {
            const std::int8_t* ai = a_q.payload_i8.data() + i * k;
            const float sa = a_q.scales[i];
            for (std::size_t j = 0; j < n; ++j) {
                const std::int8_t* wj = w_q.payload_i8.data() + j * k;
                std::int32_t acc = 0;
                for (std::size_t kk = 0; kk < k; ++kk) {
                    acc += static_cast<std::int32_t>(ai[kk]) * static_cast<std::int32_t>(wj[kk]);
                }
                local.int8_mac_ops += k;
                local.dequant_events += 1;
                local.final_scale_ops += 1;
                out.at(i, j) = static_cast<float>(acc) * (sa * w_q.scales[j]);
            }
        }
        sink.add(local);
    });
    return out;
}

DenseTensor run_engine(Engine e, const DenseTensor& a_dense, const QuantizedTensor& a_q,
                       const QuantizedTensor& w_q, GemmCounters* counters) {
    switch (e) {
        case Engine::W4A16Grouped:
            return gemm_w4a16_grouped(a_dense, w_q, counters);
        case Engine::W4A8FineGrained:
            return gemm_w4a8_finegrained(a_q, w_q, counters);
        case Engine::W4A8Asymmetric: {
            if (w_q.scheme.bits != 4 || w_q.scheme.granularity != Granularity::PerChannel) {
                fail(ErrorCode::InvalidArgument, "asymmetric engine: weights must be per-channel 4-bit");
            }
            PackedInt4Buffer off = pack_uint4_offset(w_q.payload_i4.unpack());
            return gemm_w4a8_asymmetric(a_q, off, w_q.rows, w_q.cols, w_q.scales, counters);
        }
        case Engine::W4A8Fast:
            return gemm_w4a8_fast(a_q, w_q, counters);
        case Engine::W8A8:
            return gemm_w8a8(a_q, w_q, counters);
    }
    fail(ErrorCode::InvalidArgument, "run_engine: unknown engine");
}

} // namespace ody
