#ifndef PAIRCLF_CORE_FPTN_HPP
#define PAIRCLF_CORE_FPTN_HPP

// FPTN binary tensor files.
//
//   offset  size        field
//   0       4           magic "FPTN"
//   4       2           version, u16 LE (= 1)
//   6       1           dtype, u8 (1 = float32)
//   7       1           ndim, u8
//   8       4*ndim      extents, u32 LE each
//   ...     4*prod      row-major float32 LE payload
//
// No padding and no trailing bytes.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <string>
#include <vector>

#include "pairclf/core/error.hpp"
#include "pairclf/core/tensor.hpp"

namespace pairclf::fptn {

inline constexpr char kMagic[4] = {'F', 'P', 'T', 'N'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 1;

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

} // namespace detail

/// Serialized form of a float tensor.
inline std::vector<std::uint8_t> encode(const Tensor<float>& t) {
    if (t.rank() == 0 || t.rank() > 255) throw ShapeError("FPTN supports ranks 1..255");
    std::vector<std::uint8_t> out;
    out.reserve(8 + 4 * t.rank() + 4 * t.size());
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    detail::put_u16(out, kVersion);
    out.push_back(kDtypeF32);
    out.push_back(static_cast<std::uint8_t>(t.rank()));
    for (auto e : t.shape()) {
        if (e > 0xffffffffULL) throw ShapeError("FPTN extent exceeds u32");
        detail::put_u32(out, static_cast<std::uint32_t>(e));
    }
    for (float v : t.data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

/// Parses one tensor starting at `bytes[pos]`; advances `pos` past it.
inline Tensor<float> decode_at(std::span<const std::uint8_t> bytes, std::size_t& pos) {
    auto need = [&](std::size_t n, const char* what) {
        if (bytes.size() - pos < n)
            throw TruncatedError(std::string("FPTN truncated while reading ") + what);
    };
    if (pos > bytes.size()) throw TruncatedError("FPTN offset past end of buffer");
    need(4, "magic");
    if (std::memcmp(bytes.data() + pos, kMagic, 4) != 0) throw BadMagicError("FPTN bad magic bytes");
    pos += 4;
    need(2, "version");
    const std::uint16_t version = static_cast<std::uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
    if (version != kVersion) throw BadVersionError("FPTN unsupported version " + std::to_string(version));
    pos += 2;
    need(2, "dtype/ndim");
    const std::uint8_t dtype = bytes[pos];
    if (dtype != kDtypeF32) throw BadDtypeError("FPTN unsupported dtype code " + std::to_string(dtype));
    const std::uint8_t ndim = bytes[pos + 1];
    if (ndim == 0) throw FormatError("FPTN tensor with zero dimensions");
    pos += 2;
    need(4u * ndim, "extents");
    Shape shape(ndim);
    for (std::size_t i = 0; i < ndim; ++i) {
        shape[i] = detail::get_u32(bytes.data() + pos);
        if (shape[i] == 0) throw FormatError("FPTN extent of zero");
        pos += 4;
    }
    const std::size_t count = shape_size(shape);
    need(4 * count, "payload");
    Tensor<float>::Storage data(count);
    for (std::size_t i = 0; i < count; ++i, pos += 4)
        data[i] = std::bit_cast<float>(detail::get_u32(bytes.data() + pos));
    return Tensor<float>(std::move(shape), std::move(data));
}

inline Tensor<float> decode(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    auto t = decode_at(bytes, pos);
    if (pos != bytes.size()) throw TrailingBytesError("FPTN has trailing bytes after payload");
    return t;
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

inline void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("write failed for " + path.string());
}

inline Tensor<float> read(const std::filesystem::path& path) { return decode(read_bytes(path)); }

inline void write(const Tensor<float>& t, const std::filesystem::path& path) { write_bytes(path, encode(t)); }

} // namespace pairclf::fptn

#endif // PAIRCLF_CORE_FPTN_HPP
