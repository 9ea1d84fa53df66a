#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gemm.hpp"

namespace ody {

struct BenchCase {
    std::size_t m = 0, n = 0, k = 0;
    std::size_t group_size = 128;
    std::vector<Engine> engines;
    int repeats = 5;
    int warmup = 2;
    std::uint64_t seed = 0;

    void validate() const;
    std::string id() const;
};

struct EngineResult {
    Engine engine;
    std::uint64_t median_ns = 0;
    GemmCounters counters;
    std::uint64_t checksum = 0; // FNV-1a over output f32 bytes
    double speedup_vs_baseline = 0.0;
};

struct BenchReport {
    BenchCase bench_case;
    Engine baseline;
    std::vector<EngineResult> engines;
    // Soft wall-time ordering check (fast <= finegrained, fast <= asymmetric);
    // violations are reported, never fatal.
    std::vector<std::string> warnings;
};

// Default shape sweep (transformer projection shapes scaled down 8x for
// desk runtime): four (N, K)
// pairs at context-decode M and again at self-decode M=1.
std::vector<BenchCase> default_sweep(std::uint64_t seed, int repeats,
                                     const std::vector<Engine>& engines);

// Seeded inputs, warmups, median timing over repeats. All engine outputs
// are cross-checked against the fast path before any timing is reported;
// disagreement beyond 1e-5 relative is a verification error.
BenchReport run_bench(const BenchCase& c, Engine baseline);

enum class ReportFormat { Table, Csv };

std::string emit_report(const std::vector<BenchReport>& reports, ReportFormat format);

std::uint64_t fnv1a(const void* data, std::size_t bytes);

} // namespace ody
