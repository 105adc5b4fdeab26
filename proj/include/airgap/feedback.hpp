#pragma once

#include <cmath>
#include <deque>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "airgap/autoencoder.hpp"
#include "airgap/channel.hpp"
#include "airgap/eval.hpp"
#include "airgap/nn.hpp"
#include "airgap/receiver.hpp"

namespace airgap {

enum class Direction { a_to_b, b_to_a };

inline Direction opposite(Direction d) {
    return d == Direction::a_to_b ? Direction::b_to_a : Direction::a_to_b;
}

inline std::string to_string(Direction d) { return d == Direction::a_to_b ? "a_to_b" : "b_to_a"; }

// Real-number transmitter: scalar -> dense 10Nf (ELU) -> dense 2Nf (linear),
// then energy normalization. The constraint is E[||x||^2 / Nf] = 1 in
// expectation, so the scale is a batch statistic (batch RMS symbol amplitude)
// rather than a per-row constraint; that leaves amplitude free to carry
// information. At inference the scale is frozen to an exponential moving
// average (decay 0.999) of the training scales.
class FeedbackTransmitter {
public:
    static constexpr double kScaleFloor = 1e-12;

    enum class Mode { training, inference };

    struct Trace {
        MlpTrace mlp;
        Mat z;  // pre-normalization output
        double scale = 1.0;
    };

    FeedbackTransmitter(MlpNetwork net, int nf) : net_(std::move(net)), nf_(nf) {
        if (net_.input_dim() != 1) throw ConfigError("feedback transmitter: input width != 1");
        if (net_.output_dim() != 2 * nf_)
            throw ConfigError("feedback transmitter: output width != 2*Nf");
    }

    int channel_uses() const { return nf_; }
    MlpNetwork& net() { return net_; }
    const MlpNetwork& net() const { return net_; }
    double ema_scale() const { return ema_scale_; }
    void set_ema_scale(double s) { ema_scale_ = s; }

    // Training-mode forward updates the EMA scale; use the const
    // inference overload for evaluation and loss transport.
    ComplexBlock forward(const Vec& r, Mode mode, Trace& trace) {
        ComplexBlock x = forward_const(r, mode, trace);
        if (mode == Mode::training)
            ema_scale_ = ema_scale_ > 0.0 ? 0.999 * ema_scale_ + 0.001 * trace.scale
                                          : trace.scale;
        return x;
    }

    ComplexBlock forward_inference(const Vec& r) const {
        Trace t;
        return forward_const(r, Mode::inference, t);
    }

    // Gradient of sum_i <upstream_i, x_i> for a training-mode forward. The
    // batch statistic couples examples:
    //   dL/dz_k = u_k / s - z_k * (sum_j <u_j, z_j>) / (s^3 S Nf).
    Vec backward(const Vec& r, const Trace& trace, const Mat& upstream) const {
        const Index s_rows = trace.z.rows();
        const double s = trace.scale;
        const double dot = trace.z.cwiseProduct(upstream).sum();
        const double coupling =
            dot / (s * s * s * static_cast<double>(s_rows) * static_cast<double>(nf_));
        Mat gz = upstream / s - trace.z * coupling;
        Mat rin(r.size(), 1);
        rin.col(0) = r;
        return net_.backward(rin, trace.mlp, gz);
    }

private:
    ComplexBlock forward_const(const Vec& r, Mode mode, Trace& trace) const {
        for (Index i = 0; i < r.size(); ++i)
            if (!(r(i) >= 0.0 && r(i) <= 1.0))
                throw InputError("feedback transmitter: input outside [0,1]");
        Mat rin(r.size(), 1);
        rin.col(0) = r;
        trace.z = net_.forward(rin, trace.mlp);
        double scale;
        if (mode == Mode::inference && ema_scale_ > 0.0) {
            scale = ema_scale_;
        } else {
            scale = std::sqrt(trace.z.squaredNorm() /
                              (static_cast<double>(trace.z.rows()) * nf_));
            if (scale < kScaleFloor) {
                std::cerr << "airgap: feedback transmitter scale floored (degenerate batch)\n";
                scale = kScaleFloor;
            }
        }
        trace.scale = scale;
        ComplexBlock x;
        x.data = trace.z / scale;
        return x;
    }

    MlpNetwork net_;
    int nf_;
    double ema_scale_ = 0.0;
};

struct FeedbackParams {
    int nf = 4;
    double sigma_f2 = 0.02;
    ChannelKind channel = ChannelKind::awgn;
    double lr = 1e-3;
};

struct FeedbackDevice {
    FeedbackTransmitter tx;
    ReceiverStack rx;
    Optimizer tx_opt;
    Optimizer rx_main_opt;
    Optimizer rx_est_opt;
};

// Two devices, each with a real-number transmitter and receiver. Each
// direction has a training source regenerated independently on both sides
// from the same seed (lockstep pseudo-random streams), so the receiving
// device knows the transmitted values without any extra link.
struct FeedbackSystem {
    FeedbackParams params;
    FeedbackDevice a;
    FeedbackDevice b;
    Rng src_ab_tx, src_ab_rx;  // direction A->B source, device-A / device-B copies
    Rng src_ba_tx, src_ba_rx;

    FeedbackDevice& device_tx(Direction d) { return d == Direction::a_to_b ? a : b; }
    FeedbackDevice& device_rx(Direction d) { return d == Direction::a_to_b ? b : a; }
    const FeedbackDevice& device_tx(Direction d) const { return d == Direction::a_to_b ? a : b; }
    const FeedbackDevice& device_rx(Direction d) const { return d == Direction::a_to_b ? b : a; }
    Rng& source_tx(Direction d) { return d == Direction::a_to_b ? src_ab_tx : src_ba_tx; }
    Rng& source_rx(Direction d) { return d == Direction::a_to_b ? src_ab_rx : src_ba_rx; }
};

inline FeedbackDevice make_feedback_device(const FeedbackParams& p, const Rng& master,
                                           const std::string& label) {
    Rng tx_rng = master.sub("fb-init-tx-" + label);
    Rng rx_rng = master.sub("fb-init-rx-" + label);
    MlpNetwork tx_net = MlpNetwork::glorot({1, 10 * p.nf, 2 * p.nf},
                                           {Activation::elu, Activation::linear}, tx_rng);
    MlpNetwork rx_net = MlpNetwork::glorot({2 * p.nf, 10 * p.nf, 1},
                                           {Activation::relu, Activation::linear}, rx_rng);
    FeedbackTransmitter tx(std::move(tx_net), p.nf);
    const Index tx_params = tx.net().param_count();
    const Index rx_params = rx_net.param_count();
    if (p.channel == ChannelKind::rbf) {
        Rng est_rng = master.sub("fb-init-rx-est-" + label);
        MlpNetwork est = MlpNetwork::glorot({2 * p.nf, 10 * p.nf, 2},
                                            {Activation::relu, Activation::linear}, est_rng);
        // identity-start transform, as in the message receiver
        est.params()(est.param_count() - 2) += 1.0;
        const Index est_params = est.param_count();
        return FeedbackDevice{std::move(tx),
                              ReceiverStack(std::move(est), std::move(rx_net)),
                              Optimizer::adam(p.lr, tx_params),
                              Optimizer::adam(p.lr, rx_params),
                              Optimizer::adam(p.lr, est_params)};
    }
    return FeedbackDevice{std::move(tx), ReceiverStack(std::move(rx_net)),
                          Optimizer::adam(p.lr, tx_params), Optimizer::adam(p.lr, rx_params),
                          Optimizer{}};
}

inline FeedbackSystem make_feedback_system(const FeedbackParams& p, const Rng& master) {
    if (p.nf < 1) throw ConfigError("feedback system: Nf must be positive");
    if (!(p.sigma_f2 > 0.0 && p.sigma_f2 < 1.0))
        throw ConfigError("feedback system: sigma_f2 must lie in (0,1)");
    return FeedbackSystem{p,
                          make_feedback_device(p, master, "a"),
                          make_feedback_device(p, master, "b"),
                          master.sub("fb-source-ab"),
                          master.sub("fb-source-ab"),
                          master.sub("fb-source-ba"),
                          master.sub("fb-source-ba")};
}

inline Vec draw_uniform_batch(Index count, Rng& rng) {
    Vec r(count);
    for (Index i = 0; i < count; ++i) r(i) = rng.uniform01();
    return r;
}

// One receiver step (direction tx-device -> rx-device): transmit a shared
// source batch without perturbation, regenerate the batch at the receiver,
// take one optimizer step on the receiving device's receiver to reduce the
// MSE. Returns the batch MSE.
inline double train_feedback_receiver_step(FeedbackSystem& sys, Direction dir,
                                           const ChannelModel& channel, Index batch,
                                           Rng& chan_rng) {
    if (batch < 1) throw InputError("feedback receiver step: batch must be >= 1");
    const Vec r_tx = draw_uniform_batch(batch, sys.source_tx(dir));
    FeedbackTransmitter::Trace tx_trace;
    const ComplexBlock x =
        sys.device_tx(dir).tx.forward(r_tx, FeedbackTransmitter::Mode::training, tx_trace);
    const ComplexBlock y = channel.transmit(x, chan_rng);
    FeedbackDevice& rx_dev = sys.device_rx(dir);
    ReceiverStack::Trace rx_trace;
    const Mat out = rx_dev.rx.forward(y, rx_trace);
    const Vec r_rx = draw_uniform_batch(batch, sys.source_rx(dir));
    const Vec err = out.col(0) - r_rx;
    const double mse = err.squaredNorm() / static_cast<double>(batch);
    if (!std::isfinite(mse)) throw TrainingError("feedback receiver step: non-finite MSE");
    Mat upstream(batch, 1);
    upstream.col(0) = (2.0 / static_cast<double>(batch)) * err;
    ReceiverStack::Grads g = rx_dev.rx.backward(rx_trace, upstream);
    rx_dev.rx_main_opt.step(rx_dev.rx.main_net().params(), g.main);
    if (rx_dev.rx.has_rtn()) rx_dev.rx_est_opt.step(rx_dev.rx.est_net().params(), g.est);
    return mse;
}

// Sends a batch of [0,1] scalars one per Nf channel uses through a direction
// of the (trained) system: encode at the frozen inference scale, transmit,
// decode. Order preserved; decodes are returned raw (degradation shows up as
// MSE, not as clipping).
inline Vec loss_transport(const FeedbackSystem& sys, Direction dir, const Vec& values,
                          const ChannelModel& channel, Rng& chan_rng) {
    const ComplexBlock x = sys.device_tx(dir).tx.forward_inference(values);
    const ComplexBlock y = channel.transmit(x, chan_rng);
    return sys.device_rx(dir).rx.forward(y).col(0);
}

// One policy-gradient transmitter step (Algorithm 2). The scaled perturbation
// X_p = sqrt(1 - sigma_f^2) X + W keeps unit average symbol energy. The
// squared errors are clipped to [0,1] and returned through the opposite
// direction of the system itself (or perfectly, for ablations). Updates the
// sending transmitter only. Returns the mean received loss.
inline double train_feedback_transmitter_step(FeedbackSystem& sys, Direction dir,
                                              const ChannelModel& channel, Index batch,
                                              Rng& perturb_rng, Rng& chan_rng,
                                              Rng& return_chan_rng, bool perfect_return = false) {
    if (batch < 1) throw InputError("feedback transmitter step: batch must be >= 1");
    const FeedbackParams& p = sys.params;
    const Vec r_tx = draw_uniform_batch(batch, sys.source_tx(dir));
    FeedbackDevice& tx_dev = sys.device_tx(dir);
    FeedbackTransmitter::Trace tx_trace;
    const ComplexBlock x = tx_dev.tx.forward(r_tx, FeedbackTransmitter::Mode::training, tx_trace);
    const ComplexBlock w = sample_perturbation(batch, p.nf, p.sigma_f2, perturb_rng);
    const double damp = std::sqrt(1.0 - p.sigma_f2);
    ComplexBlock xp;
    xp.data = damp * x.data + w.data;
    const ComplexBlock y = channel.transmit(xp, chan_rng);
    const Vec r_hat = sys.device_rx(dir).rx.forward(y).col(0);
    const Vec r_rx = draw_uniform_batch(batch, sys.source_rx(dir));
    const Vec losses = clip01((r_rx - r_hat).cwiseProduct(r_rx - r_hat));
    const Vec l_hat = perfect_return
                          ? losses
                          : loss_transport(sys, opposite(dir), losses, channel, return_chan_rng);
    const Mat upstream = reinforce_upstream(l_hat, xp.data, damp * x.data, p.sigma_f2, damp);
    const Vec grad = tx_dev.tx.backward(r_tx, tx_trace, upstream);
    if (!grad.allFinite()) throw TrainingError("feedback transmitter step: non-finite gradient");
    tx_dev.tx_opt.step(tx_dev.tx.net().params(), grad);
    return l_hat.mean();
}

struct FeedbackSchedule {
    int outer_iterations = 12;
    int inner_steps = 50;      // transmitter+receiver step pairs per phase
    int rx_steps_per_pair = 1;  // receiver-loop length per pair (Alg. 1 repeat)
    Index batch = 4096;
    bool perfect_return = false;
    bool plateau_enabled = true;
    double plateau_rel_improvement = 1e-3;
    int min_outer_iterations = 4;
    int divergence_window = 100;
    double divergence_mse = 10.0;
};

struct FeedbackLogRow {
    long step;
    Direction dir;
    char kind;  // 't' transmitter, 'r' receiver
    double loss;
};

struct FeedbackTrainResult {
    std::vector<FeedbackLogRow> log;
    int outer_iterations_run = 0;
    bool stopped_on_plateau = false;
    double final_mse_ab = 0.0;
    double final_mse_ba = 0.0;
};

// Main loop (Algorithm 3): each outer iteration trains the A->B pair for
// inner_steps (transmitter A then receiver B per step), then the B->A pair
// the same way. Losses travel through the opposite, partially trained
// direction. Stops on the outer budget or when both directions' per-phase
// mean MSE stops improving.
inline FeedbackTrainResult feedback_main_loop(FeedbackSystem& sys, const ChannelModel& channel,
                                              const FeedbackSchedule& sched, const Rng& master) {
    Rng perturb = master.sub("fb-perturbation");
    Rng chan = master.sub("fb-channel");
    Rng ret_chan = master.sub("fb-return-channel");
    FeedbackTrainResult res;
    long step = 0;
    int diverged_run = 0;
    double prev_ma[2] = {-1.0, -1.0};
    for (int outer = 0; outer < sched.outer_iterations; ++outer) {
        double phase_mse[2] = {0.0, 0.0};
        for (Direction dir : {Direction::a_to_b, Direction::b_to_a}) {
            const int di = dir == Direction::a_to_b ? 0 : 1;
            double mse_sum = 0.0;
            for (int k = 0; k < sched.inner_steps; ++k) {
                const double tx_loss = train_feedback_transmitter_step(
                    sys, dir, channel, sched.batch, perturb, chan, ret_chan,
                    sched.perfect_return);
                res.log.push_back({step++, dir, 't', tx_loss});
                double mse = 0.0;
                for (int j = 0; j < sched.rx_steps_per_pair; ++j) {
                    mse = train_feedback_receiver_step(sys, dir, channel, sched.batch, chan);
                    res.log.push_back({step++, dir, 'r', mse});
                }
                mse_sum += mse;
                if (mse > sched.divergence_mse) {
                    if (++diverged_run >= sched.divergence_window)
                        throw TrainingError("feedback_main_loop: MSE above " +
                                            std::to_string(sched.divergence_mse) + " for " +
                                            std::to_string(sched.divergence_window) +
                                            " consecutive steps");
                } else {
                    diverged_run = 0;
                }
            }
            phase_mse[di] = mse_sum / sched.inner_steps;
        }
        res.outer_iterations_run = outer + 1;
        res.final_mse_ab = phase_mse[0];
        res.final_mse_ba = phase_mse[1];
        if (sched.plateau_enabled && outer + 1 >= sched.min_outer_iterations &&
            prev_ma[0] > 0.0 && prev_ma[1] > 0.0 &&
            (prev_ma[0] - phase_mse[0]) < sched.plateau_rel_improvement * prev_ma[0] &&
            (prev_ma[1] - phase_mse[1]) < sched.plateau_rel_improvement * prev_ma[1]) {
            res.stopped_on_plateau = true;
            break;
        }
        prev_ma[0] = phase_mse[0];
        prev_ma[1] = phase_mse[1];
    }
    return res;
}

// Monte-Carlo MSE of one direction at the given SNR: r ~ U(0,1), no
// perturbation, frozen inference scale, decode clipped to [0,1] (matching the
// analog baselines' clipping). 95% normal-approximation interval.
inline MseEstimate evaluate_feedback_mse(const FeedbackSystem& sys, Direction dir, double snr_db,
                                         long long n_samples, const Rng& master,
                                         int n_shards = 64) {
    if (n_samples < 1) throw InputError("evaluate_feedback_mse: need at least one sample");
    const ChannelModel channel(sys.params.channel, snr_db_to_noise_var(snr_db));
    n_shards = static_cast<int>(std::min<long long>(n_shards, n_samples));
    std::vector<double> sums(static_cast<std::size_t>(n_shards), 0.0);
    std::vector<double> sq_sums(static_cast<std::size_t>(n_shards), 0.0);
    const long long per_shard = n_samples / n_shards;
    const long long remainder = n_samples % n_shards;
    run_sharded(n_shards, [&](int shard) {
        Rng src = master.sub("mse-source", static_cast<std::uint64_t>(shard));
        Rng chan_rng = master.sub("mse-channel", static_cast<std::uint64_t>(shard));
        long long todo = per_shard + (shard < remainder ? 1 : 0);
        double sum = 0.0, sq = 0.0;
        while (todo > 0) {
            const Index batch = static_cast<Index>(std::min<long long>(todo, 8192));
            const Vec r = draw_uniform_batch(batch, src);
            const ComplexBlock x = sys.device_tx(dir).tx.forward_inference(r);
            const ComplexBlock y = channel.transmit(x, chan_rng);
            const Vec r_hat = clip01(sys.device_rx(dir).rx.forward(y).col(0));
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
    const double var =
        std::max(0.0, sq / static_cast<double>(n_samples) - est.mse * est.mse);
    est.ci_halfwidth = 1.959963984540054 * std::sqrt(var / static_cast<double>(n_samples));
    return est;
}

// Learned loss-return link for the message autoencoder: clip-to-[0,1] losses
// travel through one direction of a trained feedback system over the channel.
class LearnedTransport final : public FeedbackTransport {
public:
    LearnedTransport(const FeedbackSystem& sys, double snr_db,
                     Direction dir = Direction::a_to_b)
        : sys_(&sys), channel_(sys.params.channel, snr_db_to_noise_var(snr_db)), dir_(dir) {}

    Vec send(const Vec& losses, Rng& rng) override {
        return loss_transport(*sys_, dir_, losses, channel_, rng);
    }
    bool unit_interval_losses() const override { return true; }
    std::string name() const override { return "learned"; }

private:
    const FeedbackSystem* sys_;
    ChannelModel channel_;
    Direction dir_;
};

}  // namespace airgap
