#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"

namespace ringscan::tsv {

inline std::vector<std::string_view> split(std::string_view line, char sep = '\t') {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

inline std::string where(const std::string& path, std::size_t line_no) {
    return path + ":" + std::to_string(line_no);
}

template <class Int>
Int parse_int(std::string_view s, const std::string& path, std::size_t line_no) {
    Int value{};
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, value);
    if (ec != std::errc{} || ptr != end) {
        throw ParseError(where(path, line_no) + ": expected integer, got '" + std::string(s) + "'");
    }
    return value;
}

inline double parse_real(std::string_view s, const std::string& path, std::size_t line_no) {
    // from_chars for double is unavailable on older libstdc++; strtod is exact for
    // round-tripping %.17g output.
    const std::string tmp(s);
    char* end = nullptr;
    const double value = std::strtod(tmp.c_str(), &end);
    if (tmp.empty() || end != tmp.c_str() + tmp.size()) {
        throw ParseError(where(path, line_no) + ": expected real number, got '" + tmp + "'");
    }
    return value;
}

// Shortest-safe lossless representation.
inline std::string format_exact(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string format_sig(double v, int digits) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

// Rounds to the value that format_sig(v, digits) would parse back to.
inline double round_sig(double v, int digits) {
    return std::strtod(format_sig(v, digits).c_str(), nullptr);
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path);
    return in;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    return out;
}

inline void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

} // namespace ringscan::tsv
