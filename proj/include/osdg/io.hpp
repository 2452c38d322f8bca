#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "osdg/errors.hpp"

namespace osdg {

// Explicit little-endian scalar IO, independent of host byte order.

inline void write_u32_le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_i32_le(std::ostream& os, std::int32_t v) {
    write_u32_le(os, static_cast<std::uint32_t>(v));
}

inline void write_u64_le(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline void write_f32_le(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32_le(os, bits);
}

inline void write_f64_le(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64_le(os, bits);
}

inline std::uint32_t read_u32_le(std::istream& is, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw FormatError(std::string("truncated file while reading ") + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::int32_t read_i32_le(std::istream& is, const char* what) {
    return static_cast<std::int32_t>(read_u32_le(is, what));
}

inline std::uint64_t read_u64_le(std::istream& is, const char* what) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8))
        throw FormatError(std::string("truncated file while reading ") + what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline float read_f32_le(std::istream& is, const char* what) {
    const std::uint32_t bits = read_u32_le(is, what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

inline double read_f64_le(std::istream& is, const char* what) {
    const std::uint64_t bits = read_u64_le(is, what);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

inline std::uint32_t read_u32_be(std::istream& is, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw FormatError(std::string("truncated file while reading ") + what);
    return (static_cast<std::uint32_t>(b[0]) << 24) |
           (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open '" + path + "' for writing");
    return os;
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open '" + path + "' for reading");
    return is;
}

} // namespace osdg
