#include "otf.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace ody {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'O', 'T', 'F', '1'};

std::size_t dtype_payload_bytes(OtfDtype dtype, std::uint64_t numel) {
    switch (dtype) {
        case OtfDtype::F32: return numel * 4;
        case OtfDtype::I8: return numel;
        case OtfDtype::PackedI4: return (numel + 1) / 2;
        case OtfDtype::I32: return numel * 4;
    }
    fail(ErrorCode::UnsupportedDtype, "unsupported dtype code");
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

} // namespace

std::uint64_t RawTensor::numel() const {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

void write_raw_tensor(const RawTensor& t, const fs::path& path) {
    if (t.dims.empty() || t.dims.size() > 255) {
        fail(ErrorCode::InvalidArgument, "write_tensor: bad ndim");
    }
    if (t.payload.size() != dtype_payload_bytes(t.dtype, t.numel())) {
        fail(ErrorCode::ShapeMismatch, "write_tensor: payload size does not match dims");
    }
    std::string header(kMagic, 4);
    header.push_back(static_cast<char>(t.dtype));
    header.push_back(static_cast<char>(t.dims.size()));
    for (auto d : t.dims) put_u64(header, d);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail(ErrorCode::Io, "write_tensor: cannot open " + path.string());
    f.write(header.data(), static_cast<std::streamsize>(header.size()));
    f.write(reinterpret_cast<const char*>(t.payload.data()),
            static_cast<std::streamsize>(t.payload.size()));
    if (!f) fail(ErrorCode::Io, "write_tensor: write failed for " + path.string());
}

RawTensor read_raw_tensor(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::Io, "read_tensor: cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    if (bytes.size() < 6) fail(ErrorCode::Truncated, "read_tensor: truncated header in " + path.string());
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        fail(ErrorCode::BadMagic, "read_tensor: bad magic in " + path.string());
    }
    std::uint8_t dtype_code = bytes[4];
    if (dtype_code > 3) {
        fail(ErrorCode::UnsupportedDtype,
             "read_tensor: unsupported dtype code " + std::to_string(dtype_code) + " in " + path.string());
    }
    RawTensor t;
    t.dtype = static_cast<OtfDtype>(dtype_code);
    std::size_t ndim = bytes[5];
    std::size_t offset = 6 + ndim * 8;
    if (bytes.size() < offset) fail(ErrorCode::Truncated, "read_tensor: truncated dims in " + path.string());
    for (std::size_t i = 0; i < ndim; ++i) t.dims.push_back(get_u64(bytes.data() + 6 + i * 8));
    std::size_t expect = dtype_payload_bytes(t.dtype, t.numel());
    if (bytes.size() - offset != expect) {
        fail(ErrorCode::Truncated, "read_tensor: truncated payload in " + path.string());
    }
    t.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end());
    return t;
}

void write_tensor(const DenseTensor& t, const fs::path& path) {
    RawTensor raw;
    raw.dtype = OtfDtype::F32;
    raw.dims = {t.rows(), t.cols()};
    raw.payload.resize(t.size() * 4);
    std::memcpy(raw.payload.data(), t.data().data(), raw.payload.size());
    write_raw_tensor(raw, path);
}

namespace {

RawTensor raw_from_floats(const std::vector<float>& v, std::uint64_t rows, std::uint64_t cols) {
    RawTensor raw;
    raw.dtype = OtfDtype::F32;
    raw.dims = {rows, cols};
    raw.payload.resize(v.size() * 4);
    std::memcpy(raw.payload.data(), v.data(), raw.payload.size());
    return raw;
}

std::vector<float> floats_from_raw(const RawTensor& raw) {
    if (raw.dtype != OtfDtype::F32) fail(ErrorCode::UnsupportedDtype, "expected f32 tensor");
    std::vector<float> v(raw.numel());
    std::memcpy(v.data(), raw.payload.data(), raw.payload.size());
    return v;
}

} // namespace

void write_tensor(const QuantizedTensor& t, const fs::path& dir) {
    t.validate();
    std::error_code ec;
    fs::create_directories(dir, ec);

    RawTensor payload;
    payload.dims = {t.rows, t.cols};
    if (t.scheme.bits == 4) {
        payload.dtype = OtfDtype::PackedI4;
        payload.payload = t.payload_i4.bytes();
    } else {
        payload.dtype = OtfDtype::I8;
        payload.payload.resize(t.payload_i8.size());
        std::memcpy(payload.payload.data(), t.payload_i8.data(), t.payload_i8.size());
    }
    write_raw_tensor(payload, dir / "payload.otf");

    std::uint64_t scale_cols = t.scheme.granularity == Granularity::PerTensor ? 1 : t.groups_per_row();
    std::uint64_t scale_rows = t.scheme.granularity == Granularity::PerTensor ? 1 : t.rows;
    write_raw_tensor(raw_from_floats(t.scales, scale_rows, scale_cols), dir / "scales.otf");
    if (!t.zero_points.empty()) {
        write_raw_tensor(raw_from_floats(t.zero_points, scale_rows, scale_cols), dir / "zero_points.otf");
    }

    std::ostringstream scheme;
    scheme << "bits=" << t.scheme.bits << "\n";
    scheme << "symmetric=" << (t.scheme.symmetric ? 1 : 0) << "\n";
    scheme << "granularity=" << granularity_name(t.scheme.granularity) << "\n";
    scheme << "group_size=" << t.scheme.group_size << "\n";
    std::ofstream f(dir / "scheme.txt", std::ios::trunc);
    if (!f) fail(ErrorCode::Io, "write_tensor: cannot open " + (dir / "scheme.txt").string());
    f << scheme.str();
}

DenseTensor read_dense(const fs::path& path) {
    RawTensor raw = read_raw_tensor(path);
    if (raw.dtype != OtfDtype::F32) {
        fail(ErrorCode::UnsupportedDtype, "read_dense: " + path.string() + " is not f32");
    }
    if (raw.dims.size() != 2) fail(ErrorCode::UnsupportedDtype, "read_dense: expected 2 dims");
    return DenseTensor(raw.dims[0], raw.dims[1], floats_from_raw(raw));
}

QuantizedTensor read_quantized(const fs::path& dir) {
    std::ifstream f(dir / "scheme.txt");
    if (!f) fail(ErrorCode::Io, "read_tensor: missing scheme.txt in " + dir.string());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(f, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    QuantizedTensor t;
    t.scheme.bits = std::stoi(kv.at("bits"));
    t.scheme.symmetric = kv.at("symmetric") == "1";
    t.scheme.granularity = granularity_from_name(kv.at("granularity"));
    t.scheme.group_size = static_cast<std::size_t>(std::stoull(kv.at("group_size")));

    RawTensor payload = read_raw_tensor(dir / "payload.otf");
    if (payload.dims.size() != 2) fail(ErrorCode::UnsupportedDtype, "quantized payload: expected 2 dims");
    t.rows = payload.dims[0];
    t.cols = payload.dims[1];
    if (t.scheme.bits == 4) {
        if (payload.dtype != OtfDtype::PackedI4) {
            fail(ErrorCode::UnsupportedDtype, "4-bit tensor payload must be packed-i4");
        }
        t.payload_i4 = PackedInt4Buffer(payload.payload, t.rows * t.cols);
    } else {
        if (payload.dtype != OtfDtype::I8) {
            fail(ErrorCode::UnsupportedDtype, "8-bit tensor payload must be i8");
        }
        t.payload_i8.resize(payload.payload.size());
        std::memcpy(t.payload_i8.data(), payload.payload.data(), payload.payload.size());
    }
    t.scales = floats_from_raw(read_raw_tensor(dir / "scales.otf"));
    if (fs::exists(dir / "zero_points.otf")) {
        t.zero_points = floats_from_raw(read_raw_tensor(dir / "zero_points.otf"));
    }
    t.validate();
    return t;
}

AnyTensor read_tensor(const fs::path& path) {
    if (fs::is_directory(path)) return read_quantized(path);
    return read_dense(path);
}

} // namespace ody
