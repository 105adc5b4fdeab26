#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "airgap/channel.hpp"
#include "airgap/complex_block.hpp"
#include "airgap/errors.hpp"
#include "airgap/eval.hpp"

namespace airgap {

inline double gaussian_q(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

// ---------------------------------------------------------------------------
// QPSK, M = 256: 8 bits over 4 symbols, Gray-mapped per symbol. Symbol k of
// message m carries bits (7-2k, 6-2k), MSB first: I = (1-2b_hi)/sqrt(2),
// Q = (1-2b_lo)/sqrt(2). Unit energy per symbol.

inline ComplexBlock qpsk_encode(const std::vector<int>& messages) {
    constexpr double a = 0.7071067811865475244;  // 1/sqrt(2)
    ComplexBlock x = ComplexBlock::zeros(static_cast<Index>(messages.size()), 4);
    for (Index i = 0; i < x.rows(); ++i) {
        const int m = messages[static_cast<std::size_t>(i)];
        if (m < 0 || m > 255) throw InputError("qpsk_encode: message out of range");
        for (int k = 0; k < 4; ++k) {
            const int b_hi = (m >> (7 - 2 * k)) & 1;
            const int b_lo = (m >> (6 - 2 * k)) & 1;
            x.set(i, k, {(1 - 2 * b_hi) * a, (1 - 2 * b_lo) * a});
        }
    }
    return x;
}

// Per-symbol quadrant decision (equalize first on fading channels).
inline std::vector<int> qpsk_decode(const ComplexBlock& y) {
    if (y.symbols() != 4) throw InputError("qpsk_decode: expected 4 symbols");
    std::vector<int> out(static_cast<std::size_t>(y.rows()));
    for (Index i = 0; i < y.rows(); ++i) {
        int m = 0;
        for (int k = 0; k < 4; ++k) {
            const std::complex<double> s = y.at(i, k);
            const int b_hi = s.real() < 0.0 ? 1 : 0;
            const int b_lo = s.imag() < 0.0 ? 1 : 0;
            m |= b_hi << (7 - 2 * k);
            m |= b_lo << (6 - 2 * k);
        }
        out[static_cast<std::size_t>(i)] = m;
    }
    return out;
}

// BLER = 1 - (1 - Q(sqrt(SNR)))^(2 n_symbols) for Gray QPSK on AWGN.
inline double qpsk_bler_closed_form(double snr_db, int n_symbols = 4) {
    const double q = gaussian_q(std::sqrt(std::pow(10.0, snr_db / 10.0)));
    return 1.0 - std::pow(1.0 - q, 2.0 * n_symbols);
}

// ---------------------------------------------------------------------------
// Codebook baselines (Agrell sphere packing). Rows are stored in ComplexBlock
// layout [re_0..re_{N-1} | im_0..im_{N-1}], scaled so the average energy per
// complex symbol is 1 across the codebook.

struct Codebook {
    Mat rows;  // M x 2N
    int symbols() const { return static_cast<int>(rows.cols()) / 2; }
    int size() const { return static_cast<int>(rows.rows()); }

    ComplexBlock encode(const std::vector<int>& messages) const {
        ComplexBlock x = ComplexBlock::zeros(static_cast<Index>(messages.size()), symbols());
        for (Index i = 0; i < x.rows(); ++i) {
            const int m = messages[static_cast<std::size_t>(i)];
            if (m < 0 || m >= size()) throw InputError("codebook encode: message out of range");
            x.data.row(i) = rows.row(m);
        }
        return x;
    }
};

inline void normalize_codebook_energy(Codebook& cb) {
    const double mean_energy =
        cb.rows.squaredNorm() / (static_cast<double>(cb.size()) * cb.symbols());
    if (mean_energy <= 0.0) throw ConfigError("codebook: zero energy");
    cb.rows /= std::sqrt(mean_energy);
}

// Fallback constellation when no optimized codebook file is available: the
// 240 minimal-norm E8 lattice vectors plus the lexicographically first 16 of
// the next shell, scaled to unit average symbol energy. Coordinates are
// enumerated in half-units so shell membership is exact integer arithmetic.
inline Codebook agrell_fallback_codebook(int m = 256) {
    if (m != 256) throw ConfigError("fallback codebook is defined for M = 256");
    using V = std::array<int, 8>;  // coordinates * 2
    std::vector<V> shell2, shell4;
    auto consider = [&](const V& u) {
        int norm4 = 0, sum = 0;  // norm4 = 4*||x||^2, sum = 2*sum(x)
        for (int c : u) {
            norm4 += c * c;
            sum += c;
        }
        if (sum % 4 != 0) return;
        if (norm4 == 8) shell2.push_back(u);
        if (norm4 == 16) shell4.push_back(u);
    };
    // integer points: all coordinates even in half-units
    V u{};
    const int evens[5] = {-4, -2, 0, 2, 4};
    for (int i0 = 0; i0 < 5; ++i0)
        for (int i1 = 0; i1 < 5; ++i1)
            for (int i2 = 0; i2 < 5; ++i2)
                for (int i3 = 0; i3 < 5; ++i3)
                    for (int i4 = 0; i4 < 5; ++i4)
                        for (int i5 = 0; i5 < 5; ++i5)
                            for (int i6 = 0; i6 < 5; ++i6)
                                for (int i7 = 0; i7 < 5; ++i7) {
                                    u = {evens[i0], evens[i1], evens[i2], evens[i3],
                                         evens[i4], evens[i5], evens[i6], evens[i7]};
                                    consider(u);
                                }
    // half-integer points: all coordinates odd in half-units
    const int odds[4] = {-3, -1, 1, 3};
    for (int i0 = 0; i0 < 4; ++i0)
        for (int i1 = 0; i1 < 4; ++i1)
            for (int i2 = 0; i2 < 4; ++i2)
                for (int i3 = 0; i3 < 4; ++i3)
                    for (int i4 = 0; i4 < 4; ++i4)
                        for (int i5 = 0; i5 < 4; ++i5)
                            for (int i6 = 0; i6 < 4; ++i6)
                                for (int i7 = 0; i7 < 4; ++i7) {
                                    u = {odds[i0], odds[i1], odds[i2], odds[i3],
                                         odds[i4], odds[i5], odds[i6], odds[i7]};
                                    consider(u);
                                }
    std::sort(shell2.begin(), shell2.end());
    std::sort(shell4.begin(), shell4.end());
    if (shell2.size() != 240) throw ConfigError("E8 enumeration: unexpected first-shell count");
    if (shell4.size() < 16) throw ConfigError("E8 enumeration: next shell too small");

    Codebook cb;
    cb.rows.resize(256, 8);
    auto write_row = [&](int row, const V& v) {
        // interpret coordinate pairs (2k, 2k+1) as one complex symbol
        for (int k = 0; k < 4; ++k) {
            cb.rows(row, k) = 0.5 * v[static_cast<std::size_t>(2 * k)];
            cb.rows(row, 4 + k) = 0.5 * v[static_cast<std::size_t>(2 * k + 1)];
        }
    };
    for (int i = 0; i < 240; ++i) write_row(i, shell2[static_cast<std::size_t>(i)]);
    for (int i = 0; i < 16; ++i) write_row(240 + i, shell4[static_cast<std::size_t>(i)]);
    normalize_codebook_energy(cb);
    return cb;
}

// Codebook CSV: one message per line, 2N comma-separated reals interleaved as
// re_0, im_0, re_1, im_1, ...; line k holds message id k-1. Files need not be
// normalized; scaling to unit average symbol energy is applied at load.
inline Codebook load_codebook_csv(const std::string& path, int expected_m = 256,
                                  int expected_symbols = 4) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open codebook file '" + path + "'");
    std::vector<std::vector<double>> lines;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<double> vals;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                std::size_t pos = 0;
                vals.push_back(std::stod(tok, &pos));
                while (pos < tok.size() && std::isspace(static_cast<unsigned char>(tok[pos])))
                    ++pos;
                if (pos != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw ParseError("codebook: bad value '" + tok + "'", line_no);
            }
        }
        if (static_cast<int>(vals.size()) != 2 * expected_symbols)
            throw ParseError("codebook: expected " + std::to_string(2 * expected_symbols) +
                                 " values, got " + std::to_string(vals.size()),
                             line_no);
        lines.push_back(std::move(vals));
    }
    if (static_cast<int>(lines.size()) != expected_m)
        throw ConfigError("codebook: expected " + std::to_string(expected_m) + " rows, got " +
                          std::to_string(lines.size()));
    Codebook cb;
    cb.rows.resize(expected_m, 2 * expected_symbols);
    for (int i = 0; i < expected_m; ++i)
        for (int k = 0; k < expected_symbols; ++k) {
            cb.rows(i, k) = lines[static_cast<std::size_t>(i)][static_cast<std::size_t>(2 * k)];
            cb.rows(i, expected_symbols + k) =
                lines[static_cast<std::size_t>(i)][static_cast<std::size_t>(2 * k + 1)];
        }
    for (int i = 0; i < expected_m; ++i)
        for (int j = 0; j < i; ++j)
            if ((cb.rows.row(i).array() == cb.rows.row(j).array()).all())
                throw ConfigError("codebook: rows " + std::to_string(j + 1) + " and " +
                                  std::to_string(i + 1) + " are identical");
    normalize_codebook_energy(cb);
    return cb;
}

// Maximum-likelihood decoding: nearest codebook row in Euclidean distance,
// lowest index on ties; rows are equalized by h_hat first when given.
inline std::vector<int> ml_decode(const Codebook& cb, const ComplexBlock& y,
                                  const std::vector<std::complex<double>>* hhat = nullptr) {
    if (y.symbols() != cb.symbols()) throw InputError("ml_decode: symbol count mismatch");
    const Index n = y.symbols();
    std::vector<int> out(static_cast<std::size_t>(y.rows()));
    Eigen::RowVectorXd eq(2 * n);
    for (Index i = 0; i < y.rows(); ++i) {
        if (hhat) {
            const std::complex<double> h = (*hhat)[static_cast<std::size_t>(i)];
            for (Index k = 0; k < n; ++k) {
                const std::complex<double> s = y.at(i, k) / h;
                eq(k) = s.real();
                eq(n + k) = s.imag();
            }
        } else {
            eq = y.data.row(i);
        }
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int c = 0; c < cb.size(); ++c) {
            const double d = (eq - cb.rows.row(c)).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Pilot equalization for fading channels: h_hat = y_0 / pilot, remaining
// symbols divided by h_hat. |h_hat| is floored at 1e-6 (added to the
// magnitude) to guard the division.

constexpr double kPilotGainFloor = 1e-6;

inline std::complex<double> guard_gain(std::complex<double> h) {
    const double mag = std::abs(h);
    if (mag >= kPilotGainFloor) return h;
    if (mag == 0.0) return {kPilotGainFloor, 0.0};
    return h * ((mag + kPilotGainFloor) / mag);
}

struct PilotEqualized {
    ComplexBlock data;  // symbols after the pilot, equalized
    std::vector<std::complex<double>> hhat;
};

inline PilotEqualized pilot_equalize(const ComplexBlock& y, std::complex<double> pilot) {
    if (y.symbols() < 2) throw InputError("pilot_equalize: block needs pilot plus data");
    const Index n_data = y.symbols() - 1;
    PilotEqualized out;
    out.data = ComplexBlock::zeros(y.rows(), n_data);
    out.hhat.resize(static_cast<std::size_t>(y.rows()));
    for (Index i = 0; i < y.rows(); ++i) {
        const std::complex<double> h = guard_gain(y.at(i, 0) / pilot);
        out.hhat[static_cast<std::size_t>(i)] = h;
        for (Index k = 0; k < n_data; ++k) out.data.set(i, k, y.at(i, k + 1) / h);
    }
    return out;
}

constexpr std::complex<double> kPilotSymbol{1.0, 0.0};

// Prepends the unit-energy pilot symbol to each row.
inline ComplexBlock with_pilot(const ComplexBlock& x) {
    ComplexBlock out = ComplexBlock::zeros(x.rows(), x.symbols() + 1);
    const Index n = x.symbols();
    for (Index i = 0; i < x.rows(); ++i) {
        out.set(i, 0, kPilotSymbol);
        for (Index k = 0; k < n; ++k) out.set(i, k + 1, x.at(i, k));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Analog baseline: center and scale r to zero mean and unit variance, send
// (r - E[r])(1 + j)/sqrt(2 var(r)) repeated over the channel uses, decode by
// averaging real+imag parts with the inverse scaling and clipping to [0,1].

struct SourceMoments {
    double mean = 0.5;
    double var = 1.0 / 12.0;  // U(0,1)
};

inline ComplexBlock analog_tx_awgn(const Vec& r, int nf, SourceMoments sm = {}) {
    ComplexBlock x = ComplexBlock::zeros(r.size(), nf);
    const double scale = 1.0 / std::sqrt(2.0 * sm.var);
    for (Index i = 0; i < r.size(); ++i) {
        if (!(r(i) >= 0.0 && r(i) <= 1.0)) throw InputError("analog tx: input outside [0,1]");
        const double a = (r(i) - sm.mean) * scale;
        for (int k = 0; k < nf; ++k) x.set(i, k, {a, a});
    }
    return x;
}

inline Vec analog_rx_awgn(const ComplexBlock& y, SourceMoments sm = {}) {
    const Index nf = y.symbols();
    Vec out(y.rows());
    const double scale = std::sqrt(2.0 * sm.var) / (2.0 * static_cast<double>(nf));
    for (Index i = 0; i < y.rows(); ++i) {
        double acc = 0.0;
        for (Index k = 0; k < nf; ++k) {
            const std::complex<double> s = y.at(i, k);
            acc += s.real() + s.imag();
        }
        out(i) = std::clamp(scale * acc + sm.mean, 0.0, 1.0);
    }
    return out;
}

// RBF variant: nf_total channel uses = 1 pilot + (nf_total - 1) repetitions.
inline ComplexBlock analog_tx_rbf(const Vec& r, int nf_total, SourceMoments sm = {}) {
    if (nf_total < 2) throw ConfigError("analog rbf tx: need pilot plus data");
    return with_pilot(analog_tx_awgn(r, nf_total - 1, sm));
}

// Decode per the pilot-equalized average over the nf_total - 1 data symbols.
inline Vec analog_rx_rbf(const ComplexBlock& y, SourceMoments sm = {}) {
    const PilotEqualized eq = pilot_equalize(y, kPilotSymbol);
    const Index n_data = eq.data.symbols();
    Vec out(y.rows());
    const double scale = std::sqrt(2.0 * sm.var) / (2.0 * static_cast<double>(n_data));
    for (Index i = 0; i < y.rows(); ++i) {
        double acc = 0.0;
        for (Index k = 0; k < n_data; ++k) {
            const std::complex<double> s = eq.data.at(i, k);
            acc += s.real() + s.imag();
        }
        out(i) = std::clamp(scale * acc + sm.mean, 0.0, 1.0);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Monte-Carlo evaluators for the baseline schemes (sharded like the learned
// systems' evaluations; results independent of thread count).

enum class DiscreteScheme { qpsk, codebook };

inline BlerEstimate evaluate_baseline_bler(DiscreteScheme scheme, const Codebook* cb,
                                           ChannelKind kind, double snr_db, long long n_samples,
                                           const Rng& master, int n_shards = 64) {
    if (scheme == DiscreteScheme::codebook && !cb)
        throw ConfigError("codebook evaluation without a codebook");
    const ChannelModel channel(kind, snr_db_to_noise_var(snr_db));
    n_shards = static_cast<int>(std::min<long long>(n_shards, n_samples));
    std::vector<long long> errors(static_cast<std::size_t>(n_shards), 0);
    const long long per_shard = n_samples / n_shards;
    const long long remainder = n_samples % n_shards;
    const int m_count = scheme == DiscreteScheme::qpsk ? 256 : cb->size();
    run_sharded(n_shards, [&](int shard) {
        Rng msg_rng = master.sub("baseline-messages", static_cast<std::uint64_t>(shard));
        Rng chan_rng = master.sub("baseline-channel", static_cast<std::uint64_t>(shard));
        long long todo = per_shard + (shard < remainder ? 1 : 0);
        long long errs = 0;
        while (todo > 0) {
            const Index batch = static_cast<Index>(std::min<long long>(todo, 4096));
            std::vector<int> msgs(static_cast<std::size_t>(batch));
            for (auto& v : msgs)
                v = static_cast<int>(msg_rng.uniform_index(static_cast<std::uint64_t>(m_count)));
            ComplexBlock x = scheme == DiscreteScheme::qpsk ? qpsk_encode(msgs)
                                                            : cb->encode(msgs);
            if (kind == ChannelKind::rbf) x = with_pilot(x);
            const ComplexBlock y = channel.transmit(x, chan_rng);
            std::vector<int> decoded;
            if (kind == ChannelKind::rbf) {
                const PilotEqualized eq = pilot_equalize(y, kPilotSymbol);
                decoded = scheme == DiscreteScheme::qpsk ? qpsk_decode(eq.data)
                                                         : ml_decode(*cb, eq.data);
            } else {
                decoded = scheme == DiscreteScheme::qpsk ? qpsk_decode(y) : ml_decode(*cb, y);
            }
            for (Index i = 0; i < batch; ++i)
                if (decoded[static_cast<std::size_t>(i)] != msgs[static_cast<std::size_t>(i)])
                    ++errs;
            todo -= batch;
        }
        errors[static_cast<std::size_t>(shard)] = errs;
    });
    long long total = 0;
    for (long long e : errors) total += e;
    BlerEstimate est;
    est.errors = total;
    est.samples = n_samples;
    est.bler = static_cast<double>(total) / static_cast<double>(n_samples);
    est.ci_halfwidth = wilson_halfwidth(total, n_samples);
    return est;
}

inline MseEstimate evaluate_analog_mse(ChannelKind kind, int nf, double snr_db,
                                       long long n_samples, const Rng& master, int n_shards = 64,
                                       SourceMoments sm = {}) {
    const ChannelModel channel(kind, snr_db_to_noise_var(snr_db));
    n_shards = static_cast<int>(std::min<long long>(n_shards, n_samples));
    std::vector<double> sums(static_cast<std::size_t>(n_shards), 0.0);
    std::vector<double> sq_sums(static_cast<std::size_t>(n_shards), 0.0);
    const long long per_shard = n_samples / n_shards;
    const long long remainder = n_samples % n_shards;
    run_sharded(n_shards, [&](int shard) {
        Rng src = master.sub("analog-source", static_cast<std::uint64_t>(shard));
        Rng chan_rng = master.sub("analog-channel", static_cast<std::uint64_t>(shard));
        long long todo = per_shard + (shard < remainder ? 1 : 0);
        double sum = 0.0, sq = 0.0;
        while (todo > 0) {
            const Index batch = static_cast<Index>(std::min<long long>(todo, 8192));
            Vec r(batch);
            for (Index i = 0; i < batch; ++i) r(i) = src.uniform01();
            const ComplexBlock x =
                kind == ChannelKind::awgn ? analog_tx_awgn(r, nf, sm) : analog_tx_rbf(r, nf, sm);
            const ComplexBlock y = channel.transmit(x, chan_rng);
            const Vec r_hat = kind == ChannelKind::awgn ? analog_rx_awgn(y, sm)
                                                        : analog_rx_rbf(y, sm);
            for (Index i = 0; i < batch; ++i) {
                const double e2 = (r(i) - r_hat(i)) * (r(i) - r_hat(i));
                sum += e2;
                sq += e2 * e2;
            }
            todo -= batch;
        }
        sums[static_cast<std::size_t>(shard)] = sum;
        sq_sums[static_cast<std::size_t>(shard)] = sq;
    });
    double sum = 0.0, sq = 0.0;
    for (int s = 0; s < n_shards; ++s) {
        sum += sums[static_cast<std::size_t>(s)];
        sq += sq_sums[static_cast<std::size_t>(s)];
    }
    MseEstimate est;
    est.samples = n_samples;
    est.mse = sum / static_cast<double>(n_samples);
    const double var = std::max(0.0, sq / static_cast<double>(n_samples) - est.mse * est.mse);
    est.ci_halfwidth = 1.959963984540054 * std::sqrt(var / static_cast<double>(n_samples));
    return est;
}

}  // namespace airgap
