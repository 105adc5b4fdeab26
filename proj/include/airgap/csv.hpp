#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "airgap/baselines.hpp"
#include "airgap/errors.hpp"
#include "airgap/util.hpp"

namespace airgap {

inline std::string format_long(long long v) { return std::to_string(v); }

// Documented CSV schemas (header rows). All emitted files are header +
// data rows, '.' decimal point, LF line endings.
namespace csv_schema {
inline const std::vector<std::string> bler = {"snr_db", "bler", "ci_halfwidth", "scheme"};
inline const std::vector<std::string> mse = {"snr_db", "mse", "ci_halfwidth", "scheme"};
inline const std::vector<std::string> variance = {"sigma_l2", "v", "stage"};
inline const std::vector<std::string> bler_vs_mse = {"sigma_l2", "bler_noisy", "bler_perfect"};
inline const std::vector<std::string> train_log = {"iteration", "phase", "loss"};
inline const std::vector<std::string> train_log_timed = {"iteration", "phase", "loss",
                                                         "wall_ms"};
}  // namespace csv_schema

inline void emit_csv(const std::string& path, const std::vector<std::string>& header,
                     const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path, std::ios::binary);  // binary: LF endings everywhere
    if (!out) throw IoError("cannot write '" + path + "'");
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) out << ',';
        out << header[i];
    }
    out << '\n';
    for (const auto& row : rows) {
        if (row.size() != header.size()) throw ConfigError("emit_csv: row width != header width");
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out << ',';
            out << row[i];
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

// Codebook CSV (see load_codebook_csv for the format).
inline void save_codebook_csv(const Codebook& cb, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    const int n = cb.symbols();
    for (int m = 0; m < cb.size(); ++m) {
        for (int k = 0; k < n; ++k) {
            if (k) out << ',';
            out << format_double(cb.rows(m, k)) << ',' << format_double(cb.rows(m, n + k));
        }
        out << '\n';
    }
}

}  // namespace airgap
