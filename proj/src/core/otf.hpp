#pragma once

#include <cstdint>
#include <filesystem>
#include <variant>

#include "tensor.hpp"

namespace ody {

// OTF tensor file, little-endian:
//   magic "OTF1" | dtype u8 (0=f32,1=i8,2=packed-i4,3=i32) | ndim u8 |
//   dims u64 each | payload, row-major.
// A quantized tensor is a directory: payload.otf, scales.otf, optional
// zero_points.otf, and scheme.txt with key=value lines
// (bits, symmetric, granularity, group_size).

enum class OtfDtype : std::uint8_t {
    F32 = 0,
    I8 = 1,
    PackedI4 = 2,
    I32 = 3,
};

struct RawTensor {
    OtfDtype dtype = OtfDtype::F32;
    std::vector<std::uint64_t> dims;
    std::vector<std::uint8_t> payload;

    std::uint64_t numel() const;
};

void write_raw_tensor(const RawTensor& t, const std::filesystem::path& path);
RawTensor read_raw_tensor(const std::filesystem::path& path);

void write_tensor(const DenseTensor& t, const std::filesystem::path& path);
void write_tensor(const QuantizedTensor& t, const std::filesystem::path& dir);

using AnyTensor = std::variant<DenseTensor, QuantizedTensor>;

// Directory -> QuantizedTensor, file -> DenseTensor (f32 header required).
AnyTensor read_tensor(const std::filesystem::path& path);
DenseTensor read_dense(const std::filesystem::path& path);
QuantizedTensor read_quantized(const std::filesystem::path& dir);

} // namespace ody
