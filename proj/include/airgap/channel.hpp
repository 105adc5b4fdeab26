#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "airgap/complex_block.hpp"
#include "airgap/errors.hpp"
#include "airgap/rng.hpp"

namespace airgap {

enum class ChannelKind { awgn, rbf };

inline std::string to_string(ChannelKind k) { return k == ChannelKind::awgn ? "awgn" : "rbf"; }

// SNR = E[||x||^2 / N] / sigma^2 = 1 / sigma^2 under unit average symbol
// energy, so sigma^2 = 10^(-snr_db/10). sigma^2 is the noise variance per
// complex symbol (both components together).
inline double snr_db_to_noise_var(double snr_db) { return std::pow(10.0, -snr_db / 10.0); }
inline double noise_var_to_snr_db(double noise_var) { return -10.0 * std::log10(noise_var); }

// y = x + n, n iid CN(0, sigma^2) per symbol (each real component sigma^2/2).
inline ComplexBlock awgn_apply(const ComplexBlock& x, double noise_var, Rng& rng) {
    if (noise_var <= 0.0) throw InputError("awgn_apply: noise variance must be positive");
    const double comp_std = std::sqrt(noise_var / 2.0);
    ComplexBlock y;
    y.data = x.data;
    for (Index i = 0; i < y.data.rows(); ++i)
        for (Index j = 0; j < y.data.cols(); ++j) y.data(i, j) += comp_std * rng.normal();
    return y;
}

struct RbfOutput {
    ComplexBlock y;
    std::vector<std::complex<double>> h;  // one fading coefficient per row
};

// y_i = h_i * x_i + n_i with h_i ~ CN(0,1) constant across the N symbols of
// row i (block = one example row), redrawn per row. The fading coefficients
// are returned for test harnesses only; learner-facing code goes through
// ChannelModel, which discards them.
inline RbfOutput rbf_apply(const ComplexBlock& x, double noise_var, Rng& rng) {
    if (noise_var <= 0.0) throw InputError("rbf_apply: noise variance must be positive");
    const Index n = x.symbols();
    RbfOutput out;
    out.y.data = Mat(x.data.rows(), x.data.cols());
    out.h.resize(static_cast<std::size_t>(x.rows()));
    const double comp_std = std::sqrt(noise_var / 2.0);
    const double h_comp_std = std::sqrt(0.5);
    for (Index i = 0; i < x.rows(); ++i) {
        const double hr = h_comp_std * rng.normal();
        const double hi = h_comp_std * rng.normal();
        out.h[static_cast<std::size_t>(i)] = {hr, hi};
        for (Index k = 0; k < n; ++k) {
            const double xr = x.data(i, k);
            const double xi = x.data(i, n + k);
            out.y.data(i, k) = hr * xr - hi * xi + comp_std * rng.normal();
            out.y.data(i, n + k) = hr * xi + hi * xr + comp_std * rng.normal();
        }
    }
    return out;
}

// Exploration perturbation, iid CN(0, sigma_p^2) entries (total variance
// sigma_p^2 per symbol, sigma_p^2/2 per real component).
inline ComplexBlock sample_perturbation(Index rows, Index symbols, double sigma_p2, Rng& rng) {
    if (!(sigma_p2 > 0.0 && sigma_p2 < 1.0))
        throw InputError("sample_perturbation: variance must lie in (0,1)");
    const double comp_std = std::sqrt(sigma_p2 / 2.0);
    ComplexBlock w = ComplexBlock::zeros(rows, symbols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < 2 * symbols; ++j) w.data(i, j) = comp_std * rng.normal();
    return w;
}

// The stochastic black box P(y|x) seen by the learners. It exposes transmit()
// only: noise and fading realizations are unreachable from training code.
class ChannelModel {
public:
    ChannelModel(ChannelKind kind, double noise_var) : kind_(kind), noise_var_(noise_var) {
        if (noise_var <= 0.0) throw ConfigError("ChannelModel: noise variance must be positive");
    }

    ChannelKind kind() const { return kind_; }
    double noise_var() const { return noise_var_; }

    ComplexBlock transmit(const ComplexBlock& x, Rng& rng) const {
        if (kind_ == ChannelKind::awgn) return awgn_apply(x, noise_var_, rng);
        return rbf_apply(x, noise_var_, rng).y;
    }

private:
    ChannelKind kind_;
    double noise_var_;
};

}  // namespace airgap
