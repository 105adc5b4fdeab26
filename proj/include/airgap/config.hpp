#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "airgap/channel.hpp"
#include "airgap/errors.hpp"
#include "airgap/util.hpp"

namespace airgap {

enum class TransportKind { perfect, gaussian, learned };

inline std::string to_string(TransportKind t) {
    switch (t) {
        case TransportKind::perfect: return "perfect";
        case TransportKind::gaussian: return "gaussian";
        case TransportKind::learned: return "learned";
    }
    return "?";
}

enum class Preset { paper, desk };

// All run parameters. Defaults are the paper operating point on AWGN
// (M = 256, sigma_c^2 = sigma_f^2 = 0.02, S_c = S_f = 1e5, N_c = N_f = 4,
// trained at 10 dB); selecting the RBF channel flips N_c, N_f to 5 and the
// training SNR to 20 dB unless those keys are set explicitly.
struct ExperimentConfig {
    ChannelKind channel = ChannelKind::awgn;
    int m = 256;
    int n_c = 4;
    int n_f = 4;
    double sigma_c2 = 0.02;
    double sigma_f2 = 0.02;
    long s_c = 100000;
    long s_f = 100000;
    double comm_train_snr_db = 10.0;
    double feedback_train_snr_db = 10.0;
    std::vector<double> eval_snr_grid;  // filled per channel if empty
    long long eval_samples = 1000000;
    long comm_iterations = 1500;
    long min_iterations = 500;
    int fb_outer_iterations = 40;
    int fb_inner_steps = 50;
    bool plateau = true;
    double plateau_rel_improvement = 1e-3;
    int plateau_window = 100;
    double lr = 1e-3;
    std::uint64_t seed = 1;
    TransportKind transport = TransportKind::perfect;
    double transport_sigma_l2 = 0.0;
    std::vector<double> sigma_l2_grid = {1e-6, 1e-4, 1e-3, 1e-2, 1e-1, 1.0};
    int variance_replications = 200;
    long variance_batch = 1000;
    std::string out_dir = "out";
    std::string codebook_path;
    bool agrell_fallback = false;
};

inline std::vector<double> parse_snr_grid(const std::string& spec, long line = 0) {
    // "a:b:step" inclusive grid, a comma-separated list, or a single value
    std::vector<double> out;
    if (spec.find(',') != std::string::npos) {
        std::stringstream ss(spec);
        std::string tok;
        try {
            while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw ParseError("bad snr grid '" + spec + "'", line);
        }
        if (out.empty()) throw ParseError("empty snr grid '" + spec + "'", line);
        return out;
    }
    const auto c1 = spec.find(':');
    try {
        if (c1 == std::string::npos) {
            out.push_back(std::stod(spec));
            return out;
        }
        const auto c2 = spec.find(':', c1 + 1);
        if (c2 == std::string::npos) throw ParseError("snr grid needs a:b:step", line);
        const double a = std::stod(spec.substr(0, c1));
        const double b = std::stod(spec.substr(c1 + 1, c2 - c1 - 1));
        const double step = std::stod(spec.substr(c2 + 1));
        if (step <= 0.0) throw ParseError("snr grid step must be positive", line);
        for (double v = a; v <= b + 1e-9; v += step) out.push_back(v);
    } catch (const ParseError&) {
        throw;
    } catch (const std::exception&) {
        throw ParseError("bad snr grid '" + spec + "'", line);
    }
    if (out.empty()) throw ParseError("empty snr grid '" + spec + "'", line);
    return out;
}

inline void apply_channel_defaults(ExperimentConfig& cfg) {
    if (cfg.channel == ChannelKind::rbf) {
        cfg.n_c = 5;
        cfg.n_f = 5;
        cfg.comm_train_snr_db = 20.0;
        cfg.feedback_train_snr_db = 20.0;
    } else {
        cfg.n_c = 4;
        cfg.n_f = 4;
        cfg.comm_train_snr_db = 10.0;
        cfg.feedback_train_snr_db = 10.0;
    }
}

inline std::vector<double> default_eval_grid(ChannelKind kind) {
    return kind == ChannelKind::awgn ? parse_snr_grid("-4:16:2") : parse_snr_grid("0:20:2");
}

// Desk preset: batch sizes and budgets small enough for CI-style runs; the
// paper preset keeps the published operating point.
inline void apply_preset(ExperimentConfig& cfg, Preset p) {
    if (p == Preset::paper) {
        cfg.s_c = 100000;
        cfg.s_f = 100000;
        cfg.comm_iterations = 1500;
        cfg.min_iterations = 500;
        cfg.fb_outer_iterations = 40;
        cfg.eval_samples = 1000000;
        cfg.variance_batch = 100000;
        cfg.variance_replications = 200;
    } else {
        cfg.s_c = 4096;
        cfg.s_f = 4096;
        cfg.comm_iterations = 2600;
        cfg.min_iterations = 800;
        cfg.fb_outer_iterations = 30;
        cfg.eval_samples = 200000;
        cfg.variance_batch = 1000;
        cfg.variance_replications = 200;
    }
}

inline void validate(const ExperimentConfig& cfg) {
    auto fail = [](const std::string& key, const std::string& why) {
        throw ConfigError("config: " + key + " " + why);
    };
    if (cfg.m < 2) fail("m", "must be at least 2");
    if (cfg.n_c < 1) fail("n_c", "must be positive");
    if (cfg.n_f < 1) fail("n_f", "must be positive");
    if (!(cfg.sigma_c2 > 0.0 && cfg.sigma_c2 < 1.0)) fail("sigma_c2", "must lie in (0,1)");
    if (!(cfg.sigma_f2 > 0.0 && cfg.sigma_f2 < 1.0)) fail("sigma_f2", "must lie in (0,1)");
    if (cfg.s_c < 1) fail("s_c", "must be at least 1");
    if (cfg.s_f < 1) fail("s_f", "must be at least 1");
    if (cfg.eval_samples < 1) fail("eval_samples", "must be at least 1");
    if (cfg.comm_iterations < 0) fail("comm_iterations", "must be non-negative");
    if (cfg.fb_outer_iterations < 0) fail("fb_outer_iterations", "must be non-negative");
    if (cfg.fb_inner_steps < 1) fail("fb_inner_steps", "must be at least 1");
    if (cfg.lr <= 0.0) fail("lr", "must be positive");
    if (cfg.transport_sigma_l2 < 0.0) fail("transport_sigma_l2", "must be non-negative");
    if (cfg.variance_replications < 2) fail("variance_replications", "must be at least 2");
    if (cfg.variance_batch < 1) fail("variance_batch", "must be at least 1");
    for (double s : cfg.sigma_l2_grid)
        if (s < 0.0) fail("sigma_l2_grid", "entries must be non-negative");
}

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

template <typename T>
T parse_number(const std::string& v, const std::string& key, long line) {
    try {
        std::size_t pos = 0;
        T out;
        if constexpr (std::is_floating_point_v<T>)
            out = static_cast<T>(std::stod(v, &pos));
        else
            out = static_cast<T>(std::stoll(v, &pos));
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ParseError("bad value '" + v + "' for key '" + key + "'", line);
    }
}

inline bool parse_bool(const std::string& v, const std::string& key, long line) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ParseError("bad boolean '" + v + "' for key '" + key + "'", line);
}

inline std::vector<double> parse_double_list(const std::string& v, const std::string& key,
                                             long line) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(parse_number<double>(trim(tok), key, line));
    if (out.empty()) throw ParseError("empty list for key '" + key + "'", line);
    return out;
}

}  // namespace detail

// Applies one `key = value` assignment. Used by the file loader and by CLI
// flag overrides (line 0 = not from a file).
inline void apply_config_key(ExperimentConfig& cfg, const std::string& key,
                             const std::string& value, long line = 0) {
    using detail::parse_bool;
    using detail::parse_double_list;
    using detail::parse_number;
    if (key == "channel") {
        if (value == "awgn")
            cfg.channel = ChannelKind::awgn;
        else if (value == "rbf")
            cfg.channel = ChannelKind::rbf;
        else
            throw ParseError("channel must be awgn or rbf", line);
    } else if (key == "m") {
        cfg.m = parse_number<int>(value, key, line);
    } else if (key == "n_c") {
        cfg.n_c = parse_number<int>(value, key, line);
    } else if (key == "n_f") {
        cfg.n_f = parse_number<int>(value, key, line);
    } else if (key == "sigma_c2") {
        cfg.sigma_c2 = parse_number<double>(value, key, line);
    } else if (key == "sigma_f2") {
        cfg.sigma_f2 = parse_number<double>(value, key, line);
    } else if (key == "s_c") {
        cfg.s_c = parse_number<long>(value, key, line);
    } else if (key == "s_f") {
        cfg.s_f = parse_number<long>(value, key, line);
    } else if (key == "comm_train_snr_db") {
        cfg.comm_train_snr_db = parse_number<double>(value, key, line);
    } else if (key == "feedback_train_snr_db") {
        cfg.feedback_train_snr_db = parse_number<double>(value, key, line);
    } else if (key == "eval_snr_grid") {
        cfg.eval_snr_grid = parse_snr_grid(value, line);
    } else if (key == "eval_samples") {
        cfg.eval_samples = parse_number<long long>(value, key, line);
    } else if (key == "comm_iterations") {
        cfg.comm_iterations = parse_number<long>(value, key, line);
    } else if (key == "min_iterations") {
        cfg.min_iterations = parse_number<long>(value, key, line);
    } else if (key == "fb_outer_iterations") {
        cfg.fb_outer_iterations = parse_number<int>(value, key, line);
    } else if (key == "fb_inner_steps") {
        cfg.fb_inner_steps = parse_number<int>(value, key, line);
    } else if (key == "plateau") {
        cfg.plateau = parse_bool(value, key, line);
    } else if (key == "plateau_rel_improvement") {
        cfg.plateau_rel_improvement = parse_number<double>(value, key, line);
    } else if (key == "plateau_window") {
        cfg.plateau_window = parse_number<int>(value, key, line);
    } else if (key == "lr") {
        cfg.lr = parse_number<double>(value, key, line);
    } else if (key == "seed") {
        cfg.seed = parse_number<long long>(value, key, line);
    } else if (key == "transport") {
        if (value == "perfect") {
            cfg.transport = TransportKind::perfect;
        } else if (value == "learned") {
            cfg.transport = TransportKind::learned;
        } else if (value.rfind("gaussian:", 0) == 0) {
            cfg.transport = TransportKind::gaussian;
            cfg.transport_sigma_l2 = parse_number<double>(value.substr(9), key, line);
        } else if (value == "gaussian") {
            cfg.transport = TransportKind::gaussian;
        } else {
            throw ParseError("transport must be perfect, gaussian[:sigma_l2] or learned", line);
        }
    } else if (key == "sigma_l2_grid") {
        cfg.sigma_l2_grid = parse_double_list(value, key, line);
    } else if (key == "variance_replications") {
        cfg.variance_replications = parse_number<int>(value, key, line);
    } else if (key == "variance_batch") {
        cfg.variance_batch = parse_number<long>(value, key, line);
    } else if (key == "out_dir") {
        cfg.out_dir = value;
    } else if (key == "codebook") {
        cfg.codebook_path = value;
    } else if (key == "agrell_fallback") {
        cfg.agrell_fallback = parse_bool(value, key, line);
    } else {
        throw ParseError("unknown config key '" + key + "'", line);
    }
}

// Line-oriented `key = value` file; '#' starts a comment; unknown keys are
// rejected. The channel key (re)applies channel-dependent defaults for
// n_c/n_f and training SNRs before any explicit assignment of those keys, so
// `channel = rbf` alone selects the 5-channel-use, 20 dB operating point.
inline ExperimentConfig load_config(const std::string& path,
                                    ExperimentConfig base = ExperimentConfig{}) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::vector<std::pair<std::string, std::string>> entries;
    std::vector<long> lines;
    std::string raw;
    long line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
        entries.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
        lines.push_back(line_no);
    }
    ExperimentConfig cfg = base;
    // channel first: it sets dependent defaults that explicit keys override
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].first == "channel") {
            apply_config_key(cfg, entries[i].first, entries[i].second, lines[i]);
            apply_channel_defaults(cfg);
        }
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].first == "channel") continue;
        apply_config_key(cfg, entries[i].first, entries[i].second, lines[i]);
    }
    validate(cfg);
    return cfg;
}

inline std::string double_list_to_string(const std::vector<double>& grid) {
    std::string out;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (i) out += ',';
        out += format_double(grid[i]);
    }
    return out;
}

// Canonical `key = value` form; load_config(save_config(cfg)) reproduces cfg.
inline void save_config(const ExperimentConfig& cfg, std::ostream& out) {
    out << "channel = " << to_string(cfg.channel) << '\n';
    out << "m = " << cfg.m << '\n';
    out << "n_c = " << cfg.n_c << '\n';
    out << "n_f = " << cfg.n_f << '\n';
    out << "sigma_c2 = " << format_double(cfg.sigma_c2) << '\n';
    out << "sigma_f2 = " << format_double(cfg.sigma_f2) << '\n';
    out << "s_c = " << cfg.s_c << '\n';
    out << "s_f = " << cfg.s_f << '\n';
    out << "comm_train_snr_db = " << format_double(cfg.comm_train_snr_db) << '\n';
    out << "feedback_train_snr_db = " << format_double(cfg.feedback_train_snr_db) << '\n';
    if (!cfg.eval_snr_grid.empty())
        out << "eval_snr_grid = " << double_list_to_string(cfg.eval_snr_grid) << '\n';
    out << "eval_samples = " << cfg.eval_samples << '\n';
    out << "comm_iterations = " << cfg.comm_iterations << '\n';
    out << "min_iterations = " << cfg.min_iterations << '\n';
    out << "fb_outer_iterations = " << cfg.fb_outer_iterations << '\n';
    out << "fb_inner_steps = " << cfg.fb_inner_steps << '\n';
    out << "plateau = " << (cfg.plateau ? "true" : "false") << '\n';
    out << "plateau_rel_improvement = " << format_double(cfg.plateau_rel_improvement) << '\n';
    out << "plateau_window = " << cfg.plateau_window << '\n';
    out << "lr = " << format_double(cfg.lr) << '\n';
    out << "seed = " << cfg.seed << '\n';
    if (cfg.transport == TransportKind::gaussian)
        out << "transport = gaussian:" << format_double(cfg.transport_sigma_l2) << '\n';
    else
        out << "transport = " << to_string(cfg.transport) << '\n';
    out << "sigma_l2_grid = " << double_list_to_string(cfg.sigma_l2_grid) << '\n';
    out << "variance_replications = " << cfg.variance_replications << '\n';
    out << "variance_batch = " << cfg.variance_batch << '\n';
    out << "out_dir = " << cfg.out_dir << '\n';
    if (!cfg.codebook_path.empty()) out << "codebook = " << cfg.codebook_path << '\n';
    out << "agrell_fallback = " << (cfg.agrell_fallback ? "true" : "false") << '\n';
}

inline void save_config(const ExperimentConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    save_config(cfg, out);
}

}  // namespace airgap
