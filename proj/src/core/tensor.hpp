#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "error.hpp"

namespace ody {

// Smallest scale handed out for all-zero channels/tokens so code/S is
// always defined and rounds to 0.
inline constexpr float kMinScale = 0x1.0p-24f;

// Row-major f32 matrix. Values are checked finite at construction.
class DenseTensor {
public:
    DenseTensor() = default;
    DenseTensor(std::size_t rows, std::size_t cols);
    DenseTensor(std::size_t rows, std::size_t cols, std::vector<float> data);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    float at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    float& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const float* row(std::size_t r) const { return data_.data() + r * cols_; }
    float* row(std::size_t r) { return data_.data() + r * cols_; }

    const std::vector<float>& data() const { return data_; }
    std::vector<float>& data() { return data_; }

    void check_finite() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<float> data_;
};

// Two's-complement 4-bit codes, two per byte: element 2k in the low nibble,
// 2k+1 in the high nibble of byte k. Odd tails zero-pad the high nibble.
class PackedInt4Buffer {
public:
    PackedInt4Buffer() = default;
    explicit PackedInt4Buffer(const std::vector<std::int8_t>& values);
    PackedInt4Buffer(std::vector<std::uint8_t> bytes, std::size_t element_count);

    std::size_t element_count() const { return count_; }
    const std::vector<std::uint8_t>& bytes() const { return bytes_; }
    std::vector<std::uint8_t>& bytes() { return bytes_; }

    // Sign-extended value in [-8, 7].
    std::int8_t get(std::size_t i) const;
    void set(std::size_t i, std::int8_t v);

    std::vector<std::int8_t> unpack() const;

private:
    std::vector<std::uint8_t> bytes_;
    std::size_t count_ = 0;
};

enum class Granularity {
    PerTensor,
    PerChannel,
    PerToken,
    PerGroup,
};

std::string granularity_name(Granularity g);
Granularity granularity_from_name(const std::string& name);

struct QuantScheme {
    int bits = 8; // 4 or 8
    bool symmetric = true;
    Granularity granularity = Granularity::PerChannel;
    std::size_t group_size = 128; // PerGroup only
    // Per-channel truncation intensities; empty means 1.0 everywhere.
    std::vector<float> clip_gamma;
    std::vector<float> clip_beta;

    void validate(std::size_t rows, std::size_t cols) const;
    float gamma(std::size_t channel) const { return clip_gamma.empty() ? 1.0f : clip_gamma[channel]; }
    float beta(std::size_t channel) const { return clip_beta.empty() ? 1.0f : clip_beta[channel]; }
    std::int32_t qmin() const { return -(1 << (bits - 1)); }
    std::int32_t qmax() const { return (1 << (bits - 1)) - 1; }
};

// Integer codes plus scales (and zero points when asymmetric). 4-bit
// payloads are nibble-packed, 8-bit payloads live in int8.
struct QuantizedTensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    QuantScheme scheme;
    std::vector<std::int8_t> payload_i8; // bits == 8
    PackedInt4Buffer payload_i4;         // bits == 4
    // Row-major (rows x groups_per_row()); one column for non-grouped.
    std::vector<float> scales;
    std::vector<float> zero_points; // empty when symmetric

    std::size_t groups_per_row() const;
    float scale_at(std::size_t r, std::size_t c) const;
    float zero_point_at(std::size_t r, std::size_t c) const;
    std::int8_t code(std::size_t r, std::size_t c) const;
    void validate() const;
};

// O[i][j] = sum_k a[i][k] * b_transposed[j][k], accumulated left to right
// in f32 so results are bit-reproducible for any thread count.
DenseTensor matmul_f32(const DenseTensor& a, const DenseTensor& b_transposed);

} // namespace ody
