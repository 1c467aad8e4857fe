#pragma once

// Deterministic text output helpers. Reports must be byte-identical across
// runs with the same seed and config, so all floating-point formatting goes
// through one fixed printf conversion and wall-clock times are kept out of
// report payloads (they go to sidecar files).

#include "timeformer/errors.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace timeformer {

/// Shortest round-trippable-enough decimal form, stable across runs.
inline std::string fmt_g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

/// Full-precision form for values that must survive a text round trip.
inline std::string fmt_exact(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// FNV-1a 64-bit hash, reported as fixed-width hex. Used to stamp reports
/// with the configuration they came from.
inline std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(p.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << content;
    if (!out) throw IoError("short write to '" + path + "'");
}

/// Plain-text portable graymap (P2) of a non-negative matrix, intensity
/// scaled so the matrix maximum maps to 255. An all-zero matrix renders as
/// all black.
inline std::string pgm_from_matrix(const std::vector<double>& values, std::size_t rows,
                                   std::size_t cols) {
    if (values.size() != rows * cols) {
        throw DimensionError("pgm payload size " + std::to_string(values.size()) +
                             " does not match " + std::to_string(rows) + "x" +
                             std::to_string(cols));
    }
    double mx = 0.0;
    for (double v : values) mx = v > mx ? v : mx;
    std::string out = "P2\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n255\n";
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            const double v = values[i * cols + j];
            int px = 0;
            if (mx > 0.0 && v > 0.0) {
                px = static_cast<int>(v / mx * 255.0 + 0.5);
                if (px > 255) px = 255;
            }
            if (j) out += ' ';
            out += std::to_string(px);
        }
        out += '\n';
    }
    return out;
}

inline std::string join_csv_row(const std::vector<std::string>& cells) {
    std::string row;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) row += ',';
        row += cells[i];
    }
    row += '\n';
    return row;
}

} // namespace timeformer
