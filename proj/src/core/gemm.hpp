#pragma once

#include <cstdint>
#include <string>

#include "tensor.hpp"

namespace ody {

// Instruction-class counts for one GEMM call. Deterministic functions of
// (M, N, K, g, engine); counted inside the loops and merged commutatively.
struct GemmCounters {
    std::uint64_t int8_mac_ops = 0;
    std::uint64_t dequant_events = 0;     // Integer->Float conversion + FMA
    std::uint64_t zero_point_sub_ops = 0; // widened subtractions (asymmetric path)
    std::uint64_t final_scale_ops = 0;    // per-output-element post-GEMM scaling

    void merge(const GemmCounters& o) {
        int8_mac_ops += o.int8_mac_ops;
        dequant_events += o.dequant_events;
        zero_point_sub_ops += o.zero_point_sub_ops;
        final_scale_ops += o.final_scale_ops;
    }
};

// Stores each value's low 4 two's-complement bits. Consumers unpack into
// the high nibble of an INT8 lane, i.e. value*16, and shift the 32-bit
// accumulator right by 4 once per output element.
PackedInt4Buffer pack_sint4_high_nibble(const std::vector<std::int8_t>& q);

// Unpack element i of a high-nibble pack as an int8 equal to value*16.
std::int8_t unpack_sint4_as_high_nibble(const PackedInt4Buffer& buf, std::size_t i);

// Offset path: stores q+8 as unsigned nibbles; consumers must widen and
// subtract 8 at unpack time.
PackedInt4Buffer pack_uint4_offset(const std::vector<std::int8_t>& q);
std::uint8_t unpack_uint4_offset_raw(const PackedInt4Buffer& buf, std::size_t i);

enum class Engine {
    W4A16Grouped,
    W4A8FineGrained,
    W4A8Asymmetric,
    W4A8Fast,
    W8A8,
};

std::string engine_name(Engine e);
Engine engine_from_name(const std::string& name);

// W4A16 pipeline: per-element weight dequantize, real-valued FMA.
// a is dense (M x K); w_q is 4-bit grouped (or per-channel), (N x K).
DenseTensor gemm_w4a16_grouped(const DenseTensor& a, const QuantizedTensor& w_q,
                               GemmCounters* counters = nullptr);

// Fine-grained pipeline: INT8 MAC per group, group sub-sum dequantized into a
// real accumulator. a_q per-token 8-bit (M x K); w_q per-group 4-bit (N x K).
DenseTensor gemm_w4a8_finegrained(const QuantizedTensor& a_q, const QuantizedTensor& w_q,
                                  GemmCounters* counters = nullptr);

// Vanilla offset path: weights unpacked once per output column sweep,
// widened to 32-bit, 8 subtracted, then MAC. Numerically identical to the
// fast path on the same codes.
DenseTensor gemm_w4a8_asymmetric(const QuantizedTensor& a_q, const PackedInt4Buffer& w_offset,
                                 std::size_t n, std::size_t k, const std::vector<float>& w_scales,
                                 GemmCounters* counters = nullptr);

// FastGEMM: nibble unpacked into the high 4 bits of an INT8 lane (value*16),
// INT8 MAC into int32, one arithmetic shift right by 4 per output element
// (exact: every addend is a multiple of 16), one dequant by S_a * S_w.
DenseTensor gemm_w4a8_fast(const QuantizedTensor& a_q, const QuantizedTensor& w_q,
                           GemmCounters* counters = nullptr);

// Integer accumulators of the fast path, before the shift; exposed for the
// exactness suite.
std::vector<std::int32_t> gemm_w4a8_fast_accumulators(const QuantizedTensor& a_q,
                                                      const QuantizedTensor& w_q);

// W8A8 pipeline: INT8 MAC, single post-GEMM dequant by S_a * S_w.
DenseTensor gemm_w8a8(const QuantizedTensor& a_q, const QuantizedTensor& w_q,
                      GemmCounters* counters = nullptr);

// Uniform entry point used by the bench harness. For W4A16Grouped,
// a_dense supplies the activations; other engines take a_q.
DenseTensor run_engine(Engine e, const DenseTensor& a_dense, const QuantizedTensor& a_q,
                       const QuantizedTensor& w_q, GemmCounters* counters = nullptr);

} // namespace ody
