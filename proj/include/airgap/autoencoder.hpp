#pragma once

#include <chrono>
#include <cmath>
#include <deque>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "airgap/channel.hpp"
#include "airgap/complex_block.hpp"
#include "airgap/eval.hpp"
#include "airgap/nn.hpp"
#include "airgap/receiver.hpp"

namespace airgap {

// Message transmitter: one-hot(M) -> dense M (ELU) -> dense 2Nc (linear),
// then per-row scaling to ||x||^2 = Nc exactly, so E[||x||^2 / Nc] = 1.
// Output layout matches ComplexBlock: [re_0..re_{Nc-1} | im_0..im_{Nc-1}].
class CommTransmitter {
public:
    static constexpr double kNormFloor = 1e-12;

    struct Trace {
        MlpTrace mlp;
        Mat z;      // pre-normalization net output
        Vec norms;  // per-row ||z|| (floored)
    };

    CommTransmitter(MlpNetwork net, int m, int nc) : net_(std::move(net)), m_(m), nc_(nc) {
        if (net_.input_dim() != m_) throw ConfigError("transmitter: input width != M");
        if (net_.output_dim() != 2 * nc_) throw ConfigError("transmitter: output width != 2*Nc");
    }

    int message_count() const { return m_; }
    int channel_uses() const { return nc_; }
    MlpNetwork& net() { return net_; }
    const MlpNetwork& net() const { return net_; }

    ComplexBlock forward(const std::vector<int>& messages) const {
        Trace t;
        return forward(messages, t);
    }

    ComplexBlock forward(const std::vector<int>& messages, Trace& trace) const {
        OneHotBatch in(messages, m_);
        trace.z = net_.forward(in, trace.mlp);
        const Index s = trace.z.rows();
        trace.norms.resize(s);
        ComplexBlock x;
        x.data.resize(s, 2 * nc_);
        const double target = std::sqrt(static_cast<double>(nc_));
        for (Index i = 0; i < s; ++i) {
            const double n = std::max(trace.z.row(i).norm(), kNormFloor);
            trace.norms(i) = n;
            x.data.row(i) = trace.z.row(i) * (target / n);
        }
        return x;
    }

    // Gradient of sum_i <upstream_i, x_i> through the normalization and the
    // network. The normalization Jacobian is exact:
    //   d(c z / ||z||)/dz = c (I/||z|| - z z^T / ||z||^3).
    Vec backward(const std::vector<int>& messages, const Trace& trace,
                 const Mat& upstream) const {
        const Index s = trace.z.rows();
        const double target = std::sqrt(static_cast<double>(nc_));
        Mat gz(s, trace.z.cols());
        for (Index i = 0; i < s; ++i) {
            const double n = trace.norms(i);
            const double zdotu = trace.z.row(i).dot(upstream.row(i));
            gz.row(i) =
                target * (upstream.row(i) / n - trace.z.row(i) * (zdotu / (n * n * n)));
        }
        OneHotBatch in(messages, m_);
        return net_.backward(in, trace.mlp, gz);
    }

    // Per-example ||grad_theta <upstream_i, x_i>||^2 including normalization.
    Vec per_example_sq_grad_norms(const std::vector<int>& messages, const Trace& trace,
                                  const Mat& upstream) const {
        const Index s = trace.z.rows();
        Vec out(s);
        for (Index i = 0; i < s; ++i) {
            std::vector<int> one{messages[static_cast<std::size_t>(i)]};
            Trace t1;
            forward(one, t1);
            Vec g = backward(one, t1, upstream.row(i));
            out(i) = g.squaredNorm();
        }
        return out;
    }

    // Per-example squared Frobenius norm of d x_i / d theta (normalization
    // included): one backward per output coordinate.
    Vec per_example_jacobian_fro_sq(const std::vector<int>& messages) const {
        const Index s = static_cast<Index>(messages.size());
        Vec out = Vec::Zero(s);
        for (Index i = 0; i < s; ++i) {
            std::vector<int> one{messages[static_cast<std::size_t>(i)]};
            Trace t1;
            forward(one, t1);
            for (int k = 0; k < 2 * nc_; ++k) {
                Mat unit = Mat::Zero(1, 2 * nc_);
                unit(0, k) = 1.0;
                out(i) += backward(one, t1, unit).squaredNorm();
            }
        }
        return out;
    }

private:
    MlpNetwork net_;
    int m_, nc_;
};

struct CommParams {
    int m = 256;
    int nc = 4;
    double sigma_c2 = 0.02;
    ChannelKind channel = ChannelKind::awgn;
    double lr = 1e-3;
};

// Transmitter + receiver for message transmission, with per-network
// optimizer state. The receiver is plain for AWGN and an RTN stack for RBF.
struct CommSystem {
    CommParams params;
    CommTransmitter tx;
    ReceiverStack rx;
    Optimizer tx_opt;
    Optimizer rx_main_opt;
    Optimizer rx_est_opt;  // unused for the plain receiver
};

inline CommSystem make_comm_system(const CommParams& p, const Rng& master) {
    if (p.m < 2) throw ConfigError("comm system: M must be at least 2");
    if (p.nc < 1) throw ConfigError("comm system: Nc must be positive");
    if (!(p.sigma_c2 > 0.0 && p.sigma_c2 < 1.0))
        throw ConfigError("comm system: sigma_c2 must lie in (0,1)");
    Rng tx_rng = master.sub("comm-init-tx");
    Rng rx_rng = master.sub("comm-init-rx");
    MlpNetwork tx_net = MlpNetwork::glorot({p.m, p.m, 2 * p.nc},
                                           {Activation::elu, Activation::linear}, tx_rng);
    MlpNetwork rx_net = MlpNetwork::glorot({2 * p.nc, p.m, p.m},
                                           {Activation::relu, Activation::softmax}, rx_rng);
    CommTransmitter tx(std::move(tx_net), p.m, p.nc);
    const Index tx_params = tx.net().param_count();
    const Index rx_params = rx_net.param_count();
    if (p.channel == ChannelKind::rbf) {
        Rng est_rng = master.sub("comm-init-rx-est");
        MlpNetwork est = MlpNetwork::glorot({2 * p.nc, 10 * p.nc, 2},
                                            {Activation::relu, Activation::linear}, est_rng);
        // gain estimate starts at 1 + 0j so the transform begins as the
        // identity; otherwise early divisions by a near-zero estimate swamp
        // the discriminative net
        est.params()(est.param_count() - 2) += 1.0;
        const Index est_params = est.param_count();
        ReceiverStack rx(std::move(est), std::move(rx_net));
        return CommSystem{p,
                          std::move(tx),
                          std::move(rx),
                          Optimizer::adam(p.lr, tx_params),
                          Optimizer::adam(p.lr, rx_params),
                          Optimizer::adam(p.lr, est_params)};
    }
    ReceiverStack rx(std::move(rx_net));
    return CommSystem{p,
                      std::move(tx),
                      std::move(rx),
                      Optimizer::adam(p.lr, tx_params),
                      Optimizer::adam(p.lr, rx_params),
                      Optimizer{}};
}

// Per-example cross-entropy l_i = -log p_i[m_i]; probabilities are clamped at
// 1e-300 before the log, and clamp_count (if given) reports how often.
inline Vec ce_losses(const Mat& probs, const std::vector<int>& messages,
                     long* clamp_count = nullptr) {
    if (probs.rows() != static_cast<Index>(messages.size()))
        throw ConfigError("ce_losses: batch size mismatch");
    Vec l(probs.rows());
    long clamped = 0;
    for (Index i = 0; i < probs.rows(); ++i) {
        const int m = messages[static_cast<std::size_t>(i)];
        if (m < 0 || m >= probs.cols()) throw InputError("ce_losses: message out of range");
        double p = probs(i, m);
        if (p < 1e-300) {
            p = 1e-300;
            ++clamped;
        }
        l(i) = -std::log(p);
    }
    if (clamp_count) *clamp_count = clamped;
    return l;
}

// Upstream rows for the policy-gradient estimator: row i is
//   scale * (2 l_i / (sigma2 * S)) * (xp_i - mean_i),
// so a batch backward with these rows yields the estimated gradient of the
// batch-mean objective. `scale` carries the extra sqrt(1-sigma_f^2) factor of
// the scaled-perturbation policy; 1 for the additive policy.
inline Mat reinforce_upstream(const Vec& losses, const Mat& xp, const Mat& mean, double sigma2,
                              double scale = 1.0) {
    if (xp.rows() != mean.rows() || xp.cols() != mean.cols() || losses.size() != xp.rows())
        throw ConfigError("reinforce_upstream: shape mismatch");
    const double c = 2.0 * scale / (sigma2 * static_cast<double>(xp.rows()));
    Mat u = xp - mean;
    for (Index i = 0; i < u.rows(); ++i) u.row(i) *= c * losses(i);
    return u;
}

// Loss-return link used during transmitter training: Perfect is the identity,
// AdditiveGaussian adds N(0, sigma_l^2) per loss, Learned (feedback.hpp) runs
// each loss through a trained feedback pair over the channel.
class FeedbackTransport {
public:
    virtual ~FeedbackTransport() = default;
    virtual Vec send(const Vec& losses, Rng& rng) = 0;
    // true if losses must be clipped to [0,1] before transport (learned link)
    virtual bool unit_interval_losses() const { return false; }
    virtual std::string name() const = 0;
};

class PerfectTransport final : public FeedbackTransport {
public:
    Vec send(const Vec& losses, Rng&) override { return losses; }
    std::string name() const override { return "perfect"; }
};

class GaussianTransport final : public FeedbackTransport {
public:
    explicit GaussianTransport(double sigma_l2) : sigma_l_(std::sqrt(sigma_l2)) {
        if (sigma_l2 < 0.0) throw ConfigError("gaussian transport: negative variance");
    }
    Vec send(const Vec& losses, Rng& rng) override {
        Vec out = losses;
        for (Index i = 0; i < out.size(); ++i) out(i) += sigma_l_ * rng.normal();
        return out;
    }
    std::string name() const override { return "gaussian"; }

private:
    double sigma_l_;
};

inline std::vector<int> draw_messages(int m, Index count, Rng& rng) {
    std::vector<int> msgs(static_cast<std::size_t>(count));
    for (auto& v : msgs) v = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(m)));
    return msgs;
}

// One supervised receiver step: transmit a fresh batch without exploration,
// minimize mean cross-entropy by one optimizer step on the receiver only.
inline double train_receiver_step(CommSystem& sys, const ChannelModel& channel, Index batch,
                                  Rng& msg_rng, Rng& chan_rng) {
    if (batch < 1) throw InputError("train_receiver_step: batch must be >= 1");
    const std::vector<int> msgs = draw_messages(sys.params.m, batch, msg_rng);
    const ComplexBlock x = sys.tx.forward(msgs);
    const ComplexBlock y = channel.transmit(x, chan_rng);
    ReceiverStack::Trace trace;
    const Mat probs = sys.rx.forward(y, trace);
    const Vec l = ce_losses(probs, msgs);
    const double loss = l.mean();
    if (!std::isfinite(loss)) throw TrainingError("receiver step: non-finite loss");
    ReceiverStack::Grads g =
        sys.rx.backward_cross_entropy(trace, msgs, 1.0 / static_cast<double>(batch));
    sys.rx_main_opt.step(sys.rx.main_net().params(), g.main);
    if (sys.rx.has_rtn()) sys.rx_est_opt.step(sys.rx.est_net().params(), g.est);
    return loss;
}

// One policy-gradient transmitter step. Exploration is additive on the
// normalized output, x_p = x + w with w ~ CN(0, sigma_c^2 I); the receiver
// scores the perturbed transmissions and the per-example losses come back
// through the transport. Updates the transmitter only. Returns the mean
// received loss.
inline double train_transmitter_step(CommSystem& sys, const ChannelModel& channel,
                                     FeedbackTransport& transport, Index batch, Rng& msg_rng,
                                     Rng& chan_rng, Rng& perturb_rng, Rng& transport_rng) {
    if (batch < 1) throw InputError("train_transmitter_step: batch must be >= 1");
    const std::vector<int> msgs = draw_messages(sys.params.m, batch, msg_rng);
    CommTransmitter::Trace trace;
    const ComplexBlock x = sys.tx.forward(msgs, trace);
    const ComplexBlock w = sample_perturbation(batch, sys.params.nc, sys.params.sigma_c2,
                                               perturb_rng);
    ComplexBlock xp;
    xp.data = x.data + w.data;
    const ComplexBlock y = channel.transmit(xp, chan_rng);
    const Mat probs = sys.rx.forward(y);
    Vec l = ce_losses(probs, msgs);
    if (transport.unit_interval_losses()) l = clip01(l);
    const Vec l_hat = transport.send(l, transport_rng);
    const Mat upstream = reinforce_upstream(l_hat, xp.data, x.data, sys.params.sigma_c2);
    const Vec grad = sys.tx.backward(msgs, trace, upstream);
    if (!grad.allFinite()) throw TrainingError("transmitter step: non-finite gradient");
    sys.tx_opt.step(sys.tx.net().params(), grad);
    return l_hat.mean();
}

struct TrainSchedule {
    long iterations = 2000;
    Index batch = 4096;
    int rx_steps = 1;
    int tx_steps = 1;
    bool plateau_enabled = true;
    int plateau_window = 100;
    double plateau_rel_improvement = 1e-3;
    long min_iterations = 500;
    int divergence_window = 100;
    double divergence_factor = 10.0;
};

struct TrainLogRow {
    long iteration;
    char phase;  // 'r' receiver, 't' transmitter
    double loss;
    double wall_ms;
};

struct TrainResult {
    std::vector<TrainLogRow> log;
    long iterations_run = 0;
    bool stopped_on_plateau = false;
    double final_rx_loss = 0.0;
};

// Alternating training loop: rx_steps supervised receiver steps then tx_steps
// policy-gradient transmitter steps per outer iteration, until the budget is
// exhausted or the 100-iteration moving average of the receiver loss stops
// improving. Aborts with a diagnostic if the loss exceeds
// divergence_factor * ln(M) for divergence_window consecutive iterations.
inline TrainResult alternating_train(CommSystem& sys, const ChannelModel& channel,
                                     FeedbackTransport& transport, const TrainSchedule& sched,
                                     const Rng& master) {
    Rng msg_rng = master.sub("comm-messages");
    Rng chan_rng = master.sub("comm-channel");
    Rng perturb_rng = master.sub("comm-perturbation");
    Rng transport_rng = master.sub("comm-transport");
    TrainResult res;
    res.log.reserve(static_cast<std::size_t>(sched.iterations) *
                    static_cast<std::size_t>(sched.rx_steps + sched.tx_steps));
    const double divergence_level = sched.divergence_factor * std::log(sys.params.m);
    int diverged_run = 0;
    std::deque<double> window;
    double prev_ma = -1.0;
    const auto t0 = std::chrono::steady_clock::now();
    auto wall_ms = [&t0] {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    };
    for (long it = 0; it < sched.iterations; ++it) {
        double rx_loss = 0.0;
        for (int k = 0; k < sched.rx_steps; ++k) {
            rx_loss = train_receiver_step(sys, channel, sched.batch, msg_rng, chan_rng);
            res.log.push_back({it, 'r', rx_loss, wall_ms()});
        }
        for (int k = 0; k < sched.tx_steps; ++k) {
            const double tx_loss = train_transmitter_step(sys, channel, transport, sched.batch,
                                                          msg_rng, chan_rng, perturb_rng,
                                                          transport_rng);
            res.log.push_back({it, 't', tx_loss, wall_ms()});
        }
        res.iterations_run = it + 1;
        res.final_rx_loss = rx_loss;

        if (rx_loss > divergence_level) {
            if (++diverged_run >= sched.divergence_window)
                throw TrainingError("alternating_train: loss above " +
                                    std::to_string(divergence_level) + " for " +
                                    std::to_string(sched.divergence_window) +
                                    " consecutive iterations");
        } else {
            diverged_run = 0;
        }

        if (sched.plateau_enabled) {
            window.push_back(rx_loss);
            if (static_cast<int>(window.size()) > sched.plateau_window) window.pop_front();
            if (static_cast<int>(window.size()) == sched.plateau_window &&
                (it + 1) % sched.plateau_window == 0) {
                const double ma =
                    std::accumulate(window.begin(), window.end(), 0.0) / window.size();
                if (prev_ma > 0.0 && it + 1 >= sched.min_iterations &&
                    (prev_ma - ma) < sched.plateau_rel_improvement * std::abs(prev_ma)) {
                    res.stopped_on_plateau = true;
                    break;
                }
                prev_ma = ma;
            }
        }
    }
    return res;
}

// Monte-Carlo block error rate at the given SNR, Wilson 95% interval. No
// exploration perturbation; hard decisions by argmax with lowest-index ties.
// Sharded over substreams; the result is independent of the thread count.
inline BlerEstimate evaluate_bler(const CommSystem& sys, double snr_db, long long n_samples,
                                  const Rng& master, int n_shards = 64) {
    if (n_samples < 1) throw InputError("evaluate_bler: need at least one sample");
    const ChannelModel channel(sys.params.channel, snr_db_to_noise_var(snr_db));
    n_shards = static_cast<int>(std::min<long long>(n_shards, n_samples));
    std::vector<long long> errors(static_cast<std::size_t>(n_shards), 0);
    const long long per_shard = n_samples / n_shards;
    const long long remainder = n_samples % n_shards;
    run_sharded(n_shards, [&](int shard) {
        Rng msg_rng = master.sub("bler-messages", static_cast<std::uint64_t>(shard));
        Rng chan_rng = master.sub("bler-channel", static_cast<std::uint64_t>(shard));
        long long todo = per_shard + (shard < remainder ? 1 : 0);
        long long errs = 0;
        while (todo > 0) {
            const Index batch = static_cast<Index>(std::min<long long>(todo, 8192));
            const std::vector<int> msgs = draw_messages(sys.params.m, batch, msg_rng);
            const ComplexBlock x = sys.tx.forward(msgs);
            const ComplexBlock y = channel.transmit(x, chan_rng);
            const Mat probs = sys.rx.forward(y);
            for (Index i = 0; i < batch; ++i)
                if (argmax_row(probs, i) != msgs[static_cast<std::size_t>(i)]) ++errs;
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

}  // namespace airgap
