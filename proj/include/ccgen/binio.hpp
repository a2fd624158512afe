#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "ccgen/common.hpp"

namespace ccgen::binio {

inline void put_u32(std::ostream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                           static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(bytes, 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
    put_u32(out, static_cast<std::uint32_t>(v & 0xffffffffULL));
    put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

inline void put_i32(std::ostream& out, std::int32_t v) { put_u32(out, static_cast<std::uint32_t>(v)); }
inline void put_i64(std::ostream& out, std::int64_t v) { put_u64(out, static_cast<std::uint64_t>(v)); }
inline void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline std::uint32_t get_u32(std::istream& in, const char* what) {
    unsigned char bytes[4];
    if (!in.read(reinterpret_cast<char*>(bytes), 4)) throw data_error(std::string("truncated ") + what);
    return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
           (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
}

inline std::uint64_t get_u64(std::istream& in, const char* what) {
    const std::uint64_t lo = get_u32(in, what);
    const std::uint64_t hi = get_u32(in, what);
    return lo | (hi << 32);
}

inline std::int32_t get_i32(std::istream& in, const char* what) {
    return static_cast<std::int32_t>(get_u32(in, what));
}
inline std::int64_t get_i64(std::istream& in, const char* what) {
    return static_cast<std::int64_t>(get_u64(in, what));
}
inline float get_f32(std::istream& in, const char* what) {
    return std::bit_cast<float>(get_u32(in, what));
}
inline double get_f64(std::istream& in, const char* what) {
    return std::bit_cast<double>(get_u64(in, what));
}

}  // namespace ccgen::binio
