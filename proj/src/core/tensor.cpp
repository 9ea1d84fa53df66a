#include "tensor.hpp"

#include <cmath>

#include "parallel.hpp"

namespace ody {

DenseTensor::DenseTensor(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}

DenseTensor::DenseTensor(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        fail(ErrorCode::ShapeMismatch,
             "DenseTensor: data length " + std::to_string(data_.size()) + " != " +
                 std::to_string(rows_) + "x" + std::to_string(cols_));
    }
    check_finite();
}

void DenseTensor::check_finite() const {
    for (float v : data_) {
        if (!std::isfinite(v)) {
            fail(ErrorCode::InvalidArgument, "DenseTensor: non-finite value");
        }
    }
}

PackedInt4Buffer::PackedInt4Buffer(const std::vector<std::int8_t>& values)
    : bytes_((values.size() + 1) / 2, 0), count_(values.size()) {
    for (std::size_t i = 0; i < values.size(); ++i) set(i, values[i]);
}

PackedInt4Buffer::PackedInt4Buffer(std::vector<std::uint8_t> bytes, std::size_t element_count)
    : bytes_(std::move(bytes)), count_(element_count) {
    if (bytes_.size() != (count_ + 1) / 2) {
        fail(ErrorCode::ShapeMismatch, "PackedInt4Buffer: byte count != ceil(elements/2)");
    }
}

std::int8_t PackedInt4Buffer::get(std::size_t i) const {
    std::uint8_t byte = bytes_[i / 2];
    std::uint8_t nib = (i % 2 == 0) ? (byte & 0x0F) : (byte >> 4);
    // sign-extend from 4 bits
    return static_cast<std::int8_t>(nib >= 8 ? static_cast<int>(nib) - 16 : static_cast<int>(nib));
}

void PackedInt4Buffer::set(std::size_t i, std::int8_t v) {
    if (v < -8 || v > 7) {
        fail(ErrorCode::InvalidArgument, "PackedInt4Buffer: value out of [-8,7]");
    }
    std::uint8_t nib = static_cast<std::uint8_t>(v) & 0x0F;
    std::uint8_t& byte = bytes_[i / 2];
    if (i % 2 == 0) {
        byte = static_cast<std::uint8_t>((byte & 0xF0) | nib);
    } else {
        byte = static_cast<std::uint8_t>((byte & 0x0F) | (nib << 4));
    }
}

std::vector<std::int8_t> PackedInt4Buffer::unpack() const {
    std::vector<std::int8_t> out(count_);
    for (std::size_t i = 0; i < count_; ++i) out[i] = get(i);
    return out;
}

std::string granularity_name(Granularity g) {
    switch (g) {
        case Granularity::PerTensor: return "per_tensor";
        case Granularity::PerChannel: return "per_channel";
        case Granularity::PerToken: return "per_token";
        case Granularity::PerGroup: return "per_group";
    }
    return "unknown";
}

Granularity granularity_from_name(const std::string& name) {
    if (name == "per_tensor") return Granularity::PerTensor;
    if (name == "per_channel") return Granularity::PerChannel;
    if (name == "per_token") return Granularity::PerToken;
    if (name == "per_group") return Granularity::PerGroup;
    fail(ErrorCode::InvalidArgument, "unknown granularity: " + name);
}

void QuantScheme::validate(std::size_t rows, std::size_t cols) const {
    if (bits != 4 && bits != 8) {
        fail(ErrorCode::InvalidArgument, "QuantScheme: bits must be 4 or 8");
    }
    if (granularity == Granularity::PerGroup) {
        if (group_size == 0 || cols % group_size != 0) {
            fail(ErrorCode::InvalidArgument,
                 "QuantScheme: group size " + std::to_string(group_size) +
                     " does not divide axis length " + std::to_string(cols));
        }
    }
    auto check_clip = [&](const std::vector<float>& v, const char* what) {
        if (v.empty()) return;
        if (v.size() != rows) {
            fail(ErrorCode::InvalidArgument, std::string("QuantScheme: ") + what + " length != channels");
        }
        for (float x : v) {
            if (!(x > 0.0f && x <= 1.0f)) {
                fail(ErrorCode::InvalidArgument, std::string("QuantScheme: ") + what + " outside (0,1]");
            }
        }
    };
    check_clip(clip_gamma, "clip_gamma");
    check_clip(clip_beta, "clip_beta");
}

std::size_t QuantizedTensor::groups_per_row() const {
    if (scheme.granularity == Granularity::PerGroup) return cols / scheme.group_size;
    return 1;
}

float QuantizedTensor::scale_at(std::size_t r, std::size_t c) const {
    switch (scheme.granularity) {
        case Granularity::PerTensor: return scales[0];
        case Granularity::PerChannel:
        case Granularity::PerToken: return scales[r];
        case Granularity::PerGroup: return scales[r * groups_per_row() + c / scheme.group_size];
    }
    return scales[0];
}

float QuantizedTensor::zero_point_at(std::size_t r, std::size_t c) const {
    if (zero_points.empty()) return 0.0f;
    switch (scheme.granularity) {
        case Granularity::PerTensor: return zero_points[0];
        case Granularity::PerChannel:
        case Granularity::PerToken: return zero_points[r];
        case Granularity::PerGroup: return zero_points[r * groups_per_row() + c / scheme.group_size];
    }
    return zero_points[0];
}

std::int8_t QuantizedTensor::code(std::size_t r, std::size_t c) const {
    std::size_t i = r * cols + c;
    return scheme.bits == 4 ? payload_i4.get(i) : payload_i8[i];
}

void QuantizedTensor::validate() const {
    scheme.validate(rows, cols);
    std::size_t n = rows * cols;
    if (scheme.bits == 4) {
        if (payload_i4.element_count() != n) {
            fail(ErrorCode::ShapeMismatch, "QuantizedTensor: packed payload size mismatch");
        }
    } else if (payload_i8.size() != n) {
        fail(ErrorCode::ShapeMismatch, "QuantizedTensor: payload size mismatch");
    }
    std::size_t expect_scales =
        scheme.granularity == Granularity::PerTensor ? 1 : rows * groups_per_row();
    if (scales.size() != expect_scales) {
        fail(ErrorCode::ShapeMismatch, "QuantizedTensor: scales size mismatch");
    }
    for (float s : scales) {
        if (!(s > 0.0f) || !std::isfinite(s)) {
            fail(ErrorCode::InvalidArgument, "QuantizedTensor: non-positive scale");
        }
    }
    if (scheme.symmetric && !zero_points.empty()) {
        fail(ErrorCode::InvalidArgument, "QuantizedTensor: symmetric tensor carries zero points");
    }
    const std::int32_t lo = scheme.qmin();
    const std::int32_t hi = scheme.qmax();
    for (std::size_t i = 0; i < n; ++i) {
        std::int32_t v = scheme.bits == 4 ? payload_i4.get(i) : payload_i8[i];
        if (v < lo || v > hi) {
            fail(ErrorCode::InvalidArgument, "QuantizedTensor: code out of range");
        }
    }
}

DenseTensor matmul_f32(const DenseTensor& a, const DenseTensor& b_transposed) {
    if (a.cols() != b_transposed.cols()) {
        fail(ErrorCode::ShapeMismatch,
             "matmul_f32: inner dims disagree (" + std::to_string(a.cols()) + " vs " +
                 std::to_string(b_transposed.cols()) + ")");
    }
    const std::size_t m = a.rows(), n = b_transposed.rows(), k = a.cols();
    DenseTensor out(m, n);
    parallel_for_rows(m, [&](std::size_t r0, std::size_t r1) {
        for (std::size_t i = r0; i < r1; ++i) {
            const float* ai = a.row(i);
            for (std::size_t j = 0; j < n; ++j) {
                const float* bj = b_transposed.row(j);
                float acc = 0.0f;
                for (std::size_t kk = 0; kk < k; ++kk) acc += ai[kk] * bj[kk];
                out.at(i, j) = acc;
            }
        }
    });
    return out;
}

} // namespace ody
