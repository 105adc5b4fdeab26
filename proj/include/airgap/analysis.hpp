#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "airgap/autoencoder.hpp"
#include "airgap/channel.hpp"

namespace airgap {

struct VariancePoint {
    double sigma_l2 = 0.0;
    double v = 0.0;        // cumulative element-wise variance of the gradient estimator
    double std_err = 0.0;  // replication-scatter standard error of v
};

struct VarianceStudy {
    std::vector<VariancePoint> points;
    double d_sq_norm_mean = 0.0;     // E[||D||^2] over sampled (message, perturbation)
    double d_sq_norm_std_err = 0.0;
    int replications = 0;
    Index batch = 0;
    std::string stage;  // e.g. "untrained", "1000", "final"
};

namespace detail {

struct GradSample {
    Vec clean;  // (1/S) sum_i l_i D_i
    Vec noise;  // (1/S) sum_i n_i D_i with n_i ~ N(0,1); the sigma_l^2 noisy
                // estimator is clean + sigma_l * noise
};

inline GradSample variance_replication(const CommSystem& sys, const ChannelModel& channel,
                                       Index batch, const Rng& master, int rep) {
    Rng msg_rng = master.sub("v-messages", static_cast<std::uint64_t>(rep));
    Rng chan_rng = master.sub("v-channel", static_cast<std::uint64_t>(rep));
    Rng perturb_rng = master.sub("v-perturbation", static_cast<std::uint64_t>(rep));
    Rng noise_rng = master.sub("v-loss-noise", static_cast<std::uint64_t>(rep));
    const std::vector<int> msgs = draw_messages(sys.params.m, batch, msg_rng);
    CommTransmitter::Trace trace;
    const ComplexBlock x = sys.tx.forward(msgs, trace);
    const ComplexBlock w =
        sample_perturbation(batch, sys.params.nc, sys.params.sigma_c2, perturb_rng);
    ComplexBlock xp;
    xp.data = x.data + w.data;
    const ComplexBlock y = channel.transmit(xp, chan_rng);
    const Mat probs = sys.rx.forward(y);
    const Vec l = ce_losses(probs, msgs);
    Vec unit_noise(batch);
    for (Index i = 0; i < batch; ++i) unit_noise(i) = noise_rng.normal();
    GradSample s;
    s.clean = sys.tx.backward(msgs, trace,
                              reinforce_upstream(l, xp.data, x.data, sys.params.sigma_c2));
    s.noise = sys.tx.backward(
        msgs, trace, reinforce_upstream(unit_noise, xp.data, x.data, sys.params.sigma_c2));
    return s;
}

}  // namespace detail

// Monte-Carlo estimate of E[||D||^2] with D = (2/sigma_c^2) J^T w, the
// per-example log-policy gradient: per-example backward norms over sampled
// messages and perturbations. Independent of the channel.
inline std::pair<double, double> estimate_d_sq_norm(const CommSystem& sys, Index n_samples,
                                                    const Rng& master) {
    Rng msg_rng = master.sub("d-messages");
    Rng perturb_rng = master.sub("d-perturbation");
    const std::vector<int> msgs = draw_messages(sys.params.m, n_samples, msg_rng);
    CommTransmitter::Trace trace;
    const ComplexBlock x = sys.tx.forward(msgs, trace);
    const ComplexBlock w =
        sample_perturbation(n_samples, sys.params.nc, sys.params.sigma_c2, perturb_rng);
    Mat upstream = (2.0 / sys.params.sigma_c2) * w.data;
    const Vec norms = sys.tx.per_example_sq_grad_norms(msgs, trace, upstream);
    const double mean = norms.mean();
    const double var = (norms.array() - mean).square().sum() /
                       std::max<double>(1.0, static_cast<double>(n_samples - 1));
    return {mean, std::sqrt(var / static_cast<double>(n_samples))};
}

// Noise-induced variance term from the Jacobian Frobenius norm:
//   B = sigma_l^2 E[||D||^2] = (2 sigma_l^2 / sigma_c^2) E[||grad_theta f||_F^2]
// (for w ~ CN(0, sigma_c^2 I), E[w w^T] = (sigma_c^2/2) I over the 2Nc real
// components). Estimated over uniformly sampled messages, exact in sigma_l^2.
inline double estimate_b_closed_form(const CommSystem& sys, double sigma_l2, Index n_messages,
                                     const Rng& master) {
    Rng msg_rng = master.sub("b-messages");
    const std::vector<int> msgs = draw_messages(sys.params.m, n_messages, msg_rng);
    const double fro_mean = sys.tx.per_example_jacobian_fro_sq(msgs).mean();
    return 2.0 * sigma_l2 / sys.params.sigma_c2 * fro_mean;
}

// Numerical evaluation of V = E||grad J~ - E[grad J]||^2 across a sigma_l^2
// grid. Each replication draws a fresh batch (messages, perturbation, channel
// noise, loss noise); the clean-estimator mean is taken over the same
// replication set, and one N(0,1)-weighted backward per replication serves
// every grid point (the noisy estimator is clean + sigma_l * noise). Two
// passes over the replications keep memory at two gradient vectors.
inline VarianceStudy estimate_v_grid(const CommSystem& sys, const ChannelModel& channel,
                                     const std::vector<double>& sigma_l2_grid, Index batch,
                                     int replications, const Rng& master,
                                     std::string stage = {}) {
    if (replications < 2) throw InputError("estimate_v_grid: need at least 2 replications");
    const Index n_params = sys.tx.net().param_count();
    Vec g_sum = Vec::Zero(n_params);
    for (int r = 0; r < replications; ++r)
        g_sum += detail::variance_replication(sys, channel, batch, master, r).clean;
    const Vec g_bar = g_sum / replications;

    VarianceStudy study;
    study.replications = replications;
    study.batch = batch;
    study.stage = std::move(stage);
    study.points.resize(sigma_l2_grid.size());
    std::vector<double> sum_v(sigma_l2_grid.size(), 0.0), sum_v2(sigma_l2_grid.size(), 0.0);
    for (int r = 0; r < replications; ++r) {
        const detail::GradSample s = detail::variance_replication(sys, channel, batch, master, r);
        const double cc = (s.clean - g_bar).squaredNorm();
        const double cn = (s.clean - g_bar).dot(s.noise);
        const double nn = s.noise.squaredNorm();
        for (std::size_t k = 0; k < sigma_l2_grid.size(); ++k) {
            const double sl = std::sqrt(sigma_l2_grid[k]);
            const double v = cc + 2.0 * sl * cn + sl * sl * nn;
            sum_v[k] += v;
            sum_v2[k] += v * v;
        }
    }
    for (std::size_t k = 0; k < sigma_l2_grid.size(); ++k) {
        const double mean = sum_v[k] / replications;
        const double var =
            std::max(0.0, sum_v2[k] / replications - mean * mean) / (replications - 1);
        study.points[k] = {sigma_l2_grid[k], mean, std::sqrt(var)};
    }
    const auto [d_mean, d_se] = estimate_d_sq_norm(sys, std::min<Index>(batch, 2048), master);
    study.d_sq_norm_mean = d_mean;
    study.d_sq_norm_std_err = d_se;
    return study;
}

inline VariancePoint estimate_v(const CommSystem& sys, const ChannelModel& channel,
                                double sigma_l2, Index batch, int replications,
                                const Rng& master) {
    return estimate_v_grid(sys, channel, {sigma_l2}, batch, replications, master).points[0];
}

// ---------------------------------------------------------------------------
// BLER versus feedback-noise sweep: identical seeds, training and evaluation
// on AWGN at the configured SNR, AdditiveGaussian loss transport per grid
// point against the perfect-transport reference.

struct BlerVsMseConfig {
    CommParams comm;
    TrainSchedule schedule;
    double train_snr_db = 10.0;
    double eval_snr_db = 10.0;
    long long eval_samples = 200000;
    std::vector<double> sigma_l2_grid = {1e-6, 1e-4, 1e-3, 1e-2, 1e-1, 1.0};
    std::uint64_t seed = 1;
};

struct BlerVsMseRow {
    double sigma_l2 = 0.0;
    double bler_noisy = 0.0;
    double bler_perfect = 0.0;
    bool training_aborted = false;
};

inline std::vector<BlerVsMseRow> bler_vs_feedback_mse_sweep(const BlerVsMseConfig& cfg) {
    const Rng master(cfg.seed);
    const ChannelModel channel(cfg.comm.channel, snr_db_to_noise_var(cfg.train_snr_db));
    CommSystem reference = make_comm_system(cfg.comm, master);
    PerfectTransport perfect;
    alternating_train(reference, channel, perfect, cfg.schedule, master);
    const double bler_perfect =
        evaluate_bler(reference, cfg.eval_snr_db, cfg.eval_samples, master.sub("sweep-eval")).bler;

    std::vector<BlerVsMseRow> rows;
    rows.reserve(cfg.sigma_l2_grid.size());
    for (double sigma_l2 : cfg.sigma_l2_grid) {
        BlerVsMseRow row;
        row.sigma_l2 = sigma_l2;
        row.bler_perfect = bler_perfect;
        CommSystem sys = make_comm_system(cfg.comm, master);
        GaussianTransport transport(sigma_l2);
        try {
            alternating_train(sys, channel, transport, cfg.schedule, master);
            row.bler_noisy =
                evaluate_bler(sys, cfg.eval_snr_db, cfg.eval_samples, master.sub("sweep-eval"))
                    .bler;
        } catch (const TrainingError&) {
            row.training_aborted = true;
            row.bler_noisy = 1.0;
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace airgap
