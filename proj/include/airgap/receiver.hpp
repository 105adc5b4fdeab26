#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "airgap/complex_block.hpp"
#include "airgap/nn.hpp"

namespace airgap {

// Receiver over a complex block: split the N received symbols into 2N reals,
// optionally run a radio-transformer stage (an estimation subnetwork predicts
// a complex channel gain h_hat, the signal is divided by it), then a
// discriminative network. Covers both the message receiver (softmax over M)
// and the feedback-system receiver (single linear output).
class ReceiverStack {
public:
    static constexpr double kGainFloor = 1e-6;

    struct Trace {
        MlpTrace est;
        Mat hhat;                     // S x 2 (re, im), post-guard effective gain
        std::vector<uint8_t> guarded;  // rows where the magnitude floor fired
        Mat transformed;              // S x 2N input to the main net
        MlpTrace main;
    };

    struct Grads {
        Vec main;
        Vec est;  // empty when there is no estimation stage
    };

    // Plain receiver (no transformer stage).
    explicit ReceiverStack(MlpNetwork main_net) : main_(std::move(main_net)) {}

    // RTN receiver: est_net maps 2N reals to 2 reals (h_hat).
    ReceiverStack(MlpNetwork est_net, MlpNetwork main_net)
        : est_(std::move(est_net)), main_(std::move(main_net)), rtn_(true) {
        if (est_->output_dim() != 2)
            throw ConfigError("RTN estimation network must output 2 reals");
        if (est_->input_dim() != main_.input_dim())
            throw ConfigError("RTN estimation/main input widths differ");
    }

    bool has_rtn() const { return rtn_; }
    MlpNetwork& main_net() { return main_; }
    const MlpNetwork& main_net() const { return main_; }
    MlpNetwork& est_net() { return *est_; }
    const MlpNetwork& est_net() const { return *est_; }
    int input_symbols() const { return main_.input_dim() / 2; }
    int output_dim() const { return main_.output_dim(); }

    Mat forward(const ComplexBlock& y) const {
        Trace t;
        return forward(y, t);
    }

    Mat forward(const ComplexBlock& y, Trace& trace) const {
        if (2 * y.symbols() != main_.input_dim())
            throw ConfigError("receiver: block width mismatch");
        if (!rtn_) {
            trace.transformed = y.data;
            return main_.forward(trace.transformed, trace.main);
        }
        const Index s = y.rows();
        const Index n = y.symbols();
        Mat hhat = est_->forward(y.data, trace.est);
        trace.guarded.assign(static_cast<std::size_t>(s), 0);
        trace.transformed.resize(s, 2 * n);
        for (Index i = 0; i < s; ++i) {
            double a = hhat(i, 0), b = hhat(i, 1);
            const double mag = std::hypot(a, b);
            if (mag < kGainFloor) {
                // add kGainFloor to the magnitude, keeping the phase
                trace.guarded[static_cast<std::size_t>(i)] = 1;
                if (mag == 0.0) {
                    a = kGainFloor;
                    b = 0.0;
                } else {
                    const double f = (mag + kGainFloor) / mag;
                    a *= f;
                    b *= f;
                }
                hhat(i, 0) = a;
                hhat(i, 1) = b;
            }
            const double d = a * a + b * b;
            for (Index k = 0; k < n; ++k) {
                const double p = y.data(i, k);
                const double q = y.data(i, n + k);
                trace.transformed(i, k) = (p * a + q * b) / d;
                trace.transformed(i, n + k) = (q * a - p * b) / d;
            }
        }
        trace.hhat = std::move(hhat);
        return main_.forward(trace.transformed, trace.main);
    }

    // Gradient of sum_i <upstream_i, output_i> w.r.t. both networks' params.
    Grads backward(const Trace& trace, const Mat& upstream) const {
        return backward_impl(trace, upstream, nullptr);
    }

    // Fused path for a softmax-terminated main net:
    // scale * sum_i -log p_i[target_i].
    Grads backward_cross_entropy(const Trace& trace, const std::vector<int>& targets,
                                 double scale = 1.0) const {
        return backward_impl(trace, Mat(), &targets, scale);
    }

private:
    Grads backward_impl(const Trace& trace, const Mat& upstream,
                        const std::vector<int>* targets, double scale = 1.0) const {
        Grads g;
        if (!rtn_) {
            if (targets)
                g.main = main_.backward_cross_entropy(trace.transformed, trace.main, *targets,
                                                      scale);
            else
                g.main = main_.backward(trace.transformed, trace.main, upstream);
            return g;
        }
        Mat input_grad;  // gradient on the transformed signal
        if (targets)
            g.main = main_.backward_cross_entropy(trace.transformed, trace.main, *targets, scale,
                                                  &input_grad);
        else
            g.main = main_.backward(trace.transformed, trace.main, upstream, &input_grad);

        // back through t = y / h_hat into (a, b); guarded rows are treated as
        // non-differentiable (zero gain gradient).
        const Index s = trace.transformed.rows();
        const Index n = trace.transformed.cols() / 2;
        Mat hgrad = Mat::Zero(s, 2);
        const Mat& y = *est_input(trace);
        for (Index i = 0; i < s; ++i) {
            if (trace.guarded[static_cast<std::size_t>(i)]) continue;
            const double a = trace.hhat(i, 0), b = trace.hhat(i, 1);
            const double d = a * a + b * b;
            double ga = 0.0, gb = 0.0;
            for (Index k = 0; k < n; ++k) {
                const double p = y(i, k), q = y(i, n + k);
                const double tr = trace.transformed(i, k), ti = trace.transformed(i, n + k);
                const double ur = input_grad(i, k), ui = input_grad(i, n + k);
                ga += (ur * (p - 2.0 * a * tr) + ui * (q - 2.0 * a * ti)) / d;
                gb += (ur * (q - 2.0 * b * tr) + ui * (-p - 2.0 * b * ti)) / d;
            }
            hgrad(i, 0) = ga;
            hgrad(i, 1) = gb;
        }
        g.est = est_->backward(*est_input(trace), trace.est, hgrad);
        return g;
    }

    static const Mat* est_input(const Trace& trace) { return &trace.est.post.front(); }

    std::optional<MlpNetwork> est_;
    MlpNetwork main_;
    bool rtn_ = false;
};

}  // namespace airgap
