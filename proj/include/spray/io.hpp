#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "spray/core.hpp"

namespace spray {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace io {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw IoError("unexpected end of file reading u32");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_u8(std::ostream& os, std::uint8_t v) {
    os.write(reinterpret_cast<const char*>(&v), 1);
}

inline std::uint8_t read_u8(std::istream& is) {
    char c;
    is.read(&c, 1);
    if (!is) throw IoError("unexpected end of file reading u8");
    return static_cast<std::uint8_t>(c);
}

inline void write_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(os, bits);
}

inline float read_f32(std::istream& is) {
    const std::uint32_t bits = read_u32(is);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

inline void write_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u32(os, static_cast<std::uint32_t>(bits));
    write_u32(os, static_cast<std::uint32_t>(bits >> 32));
}

inline double read_f64(std::istream& is) {
    const std::uint64_t lo = read_u32(is);
    const std::uint64_t hi = read_u32(is);
    const std::uint64_t bits = lo | (hi << 32);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

inline void expect_magic(std::istream& is, const char magic[4], const char* what) {
    char buf[4];
    is.read(buf, 4);
    if (!is || std::memcmp(buf, magic, 4) != 0)
        throw IoError(std::string("bad magic, not a ") + what + " file");
}

inline std::ofstream open_out(const std::filesystem::path& path, bool binary = true) {
    std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    return os;
}

inline std::ifstream open_in(const std::filesystem::path& path, bool binary = true) {
    std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
    if (!is) throw IoError("cannot open for reading: " + path.string());
    return is;
}

/// Formats a double with 9 significant digits, the precision used by the
/// report CSV files.
inline std::string fmt9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

inline std::string fmt17(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// FNV-1a 64-bit, used for pipeline stage cache keys.
inline std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a(s.data(), s.size(), h);
}

inline std::uint64_t hash_file(const std::filesystem::path& path, std::uint64_t h = 0xcbf29ce484222325ULL) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot hash missing file: " + path.string());
    char buf[1 << 16];
    while (is) {
        is.read(buf, sizeof(buf));
        h = fnv1a(buf, static_cast<std::size_t>(is.gcount()), h);
    }
    return h;
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read: " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    auto os = open_out(path);
    os << text;
    if (!os) throw IoError("write failed: " + path.string());
}

/// Splits one CSV line on commas (the report formats never quote fields).
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace io
}  // namespace spray
