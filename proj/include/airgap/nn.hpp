#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "airgap/errors.hpp"
#include "airgap/linalg.hpp"
#include "airgap/rng.hpp"

namespace airgap {

enum class Activation { linear, relu, elu, softmax };

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::linear: return "linear";
        case Activation::relu: return "relu";
        case Activation::elu: return "elu";
        case Activation::softmax: return "softmax";
    }
    return "?";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "linear") return Activation::linear;
    if (s == "relu") return Activation::relu;
    if (s == "elu") return Activation::elu;
    if (s == "softmax") return Activation::softmax;
    throw ParseError("unknown activation '" + s + "'");
}

// Elementwise activation value / derivative. ELU uses alpha = 1; the
// derivative is recovered from the post-activation value (exp(x) = y + 1 for
// x < 0). ReLU takes derivative 0 at exactly 0. Softmax is handled row-wise
// by the network code, not here.
inline double activation_apply(Activation a, double x) {
    switch (a) {
        case Activation::linear: return x;
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::elu: return x > 0.0 ? x : std::expm1(x);
        case Activation::softmax: throw ConfigError("softmax is row-wise, not elementwise");
    }
    return x;
}

inline double activation_grad(Activation a, double x) {
    switch (a) {
        case Activation::linear: return 1.0;
        case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
        case Activation::elu: return x > 0.0 ? 1.0 : std::exp(x);
        case Activation::softmax: throw ConfigError("softmax is row-wise, not elementwise");
    }
    return 1.0;
}

// derivative from the post-activation value (what forward traces store)
inline double activation_grad_from_post(Activation a, double y) {
    switch (a) {
        case Activation::linear: return 1.0;
        case Activation::relu: return y > 0.0 ? 1.0 : 0.0;
        case Activation::elu: return y > 0.0 ? 1.0 : y + 1.0;
        case Activation::softmax: throw ConfigError("softmax is row-wise, not elementwise");
    }
    return 1.0;
}

inline void softmax_rows_inplace(Mat& z) {
    for (Index i = 0; i < z.rows(); ++i) {
        const double mx = z.row(i).maxCoeff();
        double sum = 0.0;
        for (Index j = 0; j < z.cols(); ++j) {
            z(i, j) = std::exp(z(i, j) - mx);
            sum += z(i, j);
        }
        z.row(i) /= sum;
    }
}

// Batch of one-hot rows given by index; avoids materializing S x M zeros on
// the dense path and enables sparse first-layer updates on the backward path.
struct OneHotBatch {
    const std::vector<int>* indices;
    int width;

    OneHotBatch(const std::vector<int>& idx, int w) : indices(&idx), width(w) {
        for (int m : idx)
            if (m < 0 || m >= w) throw InputError("one-hot index out of range");
    }
    Index rows() const { return static_cast<Index>(indices->size()); }
};

struct MlpTrace {
    // post[0] is the input batch (empty for one-hot input), post[l+1] the
    // post-activation output of layer l.
    std::vector<Mat> post;
};

// Dense feed-forward network over a flat parameter vector. Parameter layout:
// for each layer l in order, the weight matrix W_l (out x in, row-major) then
// the bias b_l (out). Softmax is only permitted as the final activation.
//
// forward/backward are pure; backward returns the gradient of
// sum_i <upstream_row_i, output_row_i> with respect to the parameters.
class MlpNetwork {
public:
    MlpNetwork(std::vector<int> dims, std::vector<Activation> acts)
        : dims_(std::move(dims)), acts_(std::move(acts)) {
        if (dims_.size() < 2) throw ConfigError("MlpNetwork needs at least one layer");
        if (acts_.size() != dims_.size() - 1)
            throw ConfigError("MlpNetwork: one activation per layer required");
        for (int d : dims_)
            if (d <= 0) throw ConfigError("MlpNetwork: layer dimensions must be positive");
        for (std::size_t l = 0; l + 1 < acts_.size(); ++l)
            if (acts_[l] == Activation::softmax)
                throw ConfigError("MlpNetwork: softmax allowed only as final activation");
        Index count = 0;
        for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
            w_off_.push_back(count);
            count += static_cast<Index>(dims_[l]) * dims_[l + 1];
            b_off_.push_back(count);
            count += dims_[l + 1];
        }
        params_ = Vec::Zero(count);
    }

    // Uniform Glorot-style fan-based init for weights, zero biases.
    static MlpNetwork glorot(std::vector<int> dims, std::vector<Activation> acts, Rng& rng) {
        MlpNetwork net(std::move(dims), std::move(acts));
        for (std::size_t l = 0; l + 1 < net.dims_.size(); ++l) {
            const int fan_in = net.dims_[l];
            const int fan_out = net.dims_[l + 1];
            const double bound = std::sqrt(6.0 / (fan_in + fan_out));
            double* w = net.params_.data() + net.w_off_[l];
            for (Index k = 0; k < static_cast<Index>(fan_in) * fan_out; ++k)
                w[k] = bound * (2.0 * rng.uniform01() - 1.0);
        }
        return net;
    }

    const std::vector<int>& dims() const { return dims_; }
    const std::vector<Activation>& activations() const { return acts_; }
    int input_dim() const { return dims_.front(); }
    int output_dim() const { return dims_.back(); }
    std::size_t layer_count() const { return dims_.size() - 1; }
    Index param_count() const { return params_.size(); }
    Vec& params() { return params_; }
    const Vec& params() const { return params_; }

    Eigen::Map<const Mat> weights(std::size_t layer) const {
        return {params_.data() + w_off_[layer], dims_[layer + 1], dims_[layer]};
    }
    Eigen::Map<const Eigen::RowVectorXd> biases(std::size_t layer) const {
        return {params_.data() + b_off_[layer], dims_[layer + 1]};
    }

    Mat forward(const Mat& input) const { return forward_impl(&input, nullptr, nullptr); }
    Mat forward(const Mat& input, MlpTrace& trace) const {
        return forward_impl(&input, nullptr, &trace);
    }
    Mat forward(const OneHotBatch& input) const { return forward_impl(nullptr, &input, nullptr); }
    Mat forward(const OneHotBatch& input, MlpTrace& trace) const {
        return forward_impl(nullptr, &input, &trace);
    }

    // Gradient of sum_i <upstream_i, f(x_i)> w.r.t. params. The trace must
    // come from a forward() over the same input. For one-hot input, pass the
    // same batch again (the trace does not store it). input_grad, if given,
    // receives the gradient w.r.t. the input batch.
    Vec backward(const Mat& input, const MlpTrace& trace, const Mat& upstream,
                 Mat* input_grad = nullptr) const {
        Vec grad = Vec::Zero(param_count());
        backward_into(&input, nullptr, trace, upstream, false, grad, input_grad);
        return grad;
    }
    Vec backward(const OneHotBatch& input, const MlpTrace& trace, const Mat& upstream) const {
        Vec grad = Vec::Zero(param_count());
        backward_into(nullptr, &input, trace, upstream, false, grad, nullptr);
        return grad;
    }

    // Fused softmax + cross-entropy path: gradient of
    // scale * sum_i -log p_i[target_i]. Avoids the cancellation of
    // differentiating log(softmax) in two steps.
    Vec backward_cross_entropy(const Mat& input, const MlpTrace& trace,
                               const std::vector<int>& targets, double scale = 1.0,
                               Mat* input_grad = nullptr) const {
        Mat seed = ce_seed(trace, targets, scale);
        Vec grad = Vec::Zero(param_count());
        backward_into(&input, nullptr, trace, seed, true, grad, input_grad);
        return grad;
    }

    // Per-example squared norms of the parameter gradient: row i gets
    // ||grad_theta <upstream_i, f(x_i)>||^2. Used by the gradient-variance
    // analysis, where per-example (not batch-summed) norms are required.
    Vec per_example_sq_grad_norms(const Mat& input, const MlpTrace& trace,
                                  const Mat& upstream) const {
        return per_example_norms_impl(&input, nullptr, trace, upstream);
    }
    Vec per_example_sq_grad_norms(const OneHotBatch& input, const MlpTrace& trace,
                                  const Mat& upstream) const {
        return per_example_norms_impl(nullptr, &input, trace, upstream);
    }

    // Per-example squared Frobenius norm of the Jacobian d f(x_i) / d theta,
    // one backward pass per output coordinate.
    Vec per_example_jacobian_fro_sq(const Mat& input) const {
        return jacobian_fro_impl(&input, nullptr);
    }
    Vec per_example_jacobian_fro_sq(const OneHotBatch& input) const {
        return jacobian_fro_impl(nullptr, &input);
    }

private:
    Mat forward_impl(const Mat* dense, const OneHotBatch* onehot, MlpTrace* trace) const {
        Mat cur;
        if (trace) {
            trace->post.clear();
            trace->post.reserve(layer_count() + 1);
        }
        Index rows = 0;
        if (dense) {
            if (dense->cols() != dims_[0])
                throw ConfigError("MlpNetwork: input width " + std::to_string(dense->cols()) +
                                  " != layer width " + std::to_string(dims_[0]));
            rows = dense->rows();
            if (trace) trace->post.push_back(*dense);
        } else {
            if (onehot->width != dims_[0])
                throw ConfigError("MlpNetwork: one-hot width mismatch");
            rows = onehot->rows();
            if (trace) trace->post.emplace_back();  // input kept by caller
        }
        for (std::size_t l = 0; l < layer_count(); ++l) {
            const auto w = weights(l);
            const auto b = biases(l);
            Mat z(rows, dims_[l + 1]);
            if (l == 0 && onehot) {
                for (Index i = 0; i < rows; ++i) {
                    const int m = (*onehot->indices)[static_cast<std::size_t>(i)];
                    z.row(i) = w.col(m).transpose() + b;
                }
            } else {
                const Mat& in = (l == 0) ? *dense : cur;
                z.noalias() = in * w.transpose();
                z.rowwise() += b;
            }
            apply_activation_inplace(acts_[l], z);
            cur = std::move(z);
            if (trace) trace->post.push_back(cur);
        }
        return cur;
    }

    static void apply_activation_inplace(Activation a, Mat& z) {
        switch (a) {
            case Activation::linear: break;
            case Activation::relu: z = z.cwiseMax(0.0); break;
            case Activation::elu:
                for (Index i = 0; i < z.rows(); ++i)
                    for (Index j = 0; j < z.cols(); ++j)
                        if (z(i, j) <= 0.0) z(i, j) = std::expm1(z(i, j));
                break;
            case Activation::softmax: softmax_rows_inplace(z); break;
        }
    }

    // upstream-on-post -> gradient-on-preactivation for one layer
    static Mat activation_backward(Activation a, const Mat& post, const Mat& g) {
        switch (a) {
            case Activation::linear: return g;
            case Activation::relu:
                return (post.array() > 0.0).cast<double>().matrix().cwiseProduct(g);
            case Activation::elu: {
                Mat out(g.rows(), g.cols());
                for (Index i = 0; i < g.rows(); ++i)
                    for (Index j = 0; j < g.cols(); ++j)
                        out(i, j) = g(i, j) * (post(i, j) > 0.0 ? 1.0 : post(i, j) + 1.0);
                return out;
            }
            case Activation::softmax: {
                Mat out(g.rows(), g.cols());
                for (Index i = 0; i < g.rows(); ++i) {
                    const double dot = g.row(i).dot(post.row(i));
                    out.row(i) = post.row(i).array() * (g.row(i).array() - dot);
                }
                return out;
            }
        }
        return g;
    }

    Mat ce_seed(const MlpTrace& trace, const std::vector<int>& targets, double scale) const {
        if (acts_.back() != Activation::softmax)
            throw ConfigError("cross-entropy backward requires a softmax final layer");
        const Mat& probs = trace.post.back();
        if (probs.rows() != static_cast<Index>(targets.size()))
            throw ConfigError("cross-entropy backward: target count mismatch");
        Mat seed = probs;
        for (Index i = 0; i < seed.rows(); ++i) {
            const int t = targets[static_cast<std::size_t>(i)];
            if (t < 0 || t >= seed.cols()) throw InputError("cross-entropy target out of range");
            seed(i, t) -= 1.0;
        }
        seed *= scale;
        return seed;
    }

    // seed_is_preactivation: the upstream matrix is already the gradient on
    // the final pre-activation (fused CE path).
    void backward_into(const Mat* dense, const OneHotBatch* onehot, const MlpTrace& trace,
                       const Mat& upstream, bool seed_is_preactivation, Vec& grad,
                       Mat* input_grad) const {
        const std::size_t layers = layer_count();
        if (trace.post.size() != layers + 1) throw ConfigError("backward: trace/network mismatch");
        if (upstream.rows() != trace.post.back().rows() ||
            upstream.cols() != trace.post.back().cols())
            throw ConfigError("backward: upstream shape mismatch");
        Mat g = upstream;
        for (std::size_t li = layers; li-- > 0;) {
            Mat gpre = (li == layers - 1 && seed_is_preactivation)
                           ? std::move(g)
                           : activation_backward(acts_[li], trace.post[li + 1], g);
            Eigen::Map<Mat> wg(grad.data() + w_off_[li], dims_[li + 1], dims_[li]);
            Eigen::Map<Eigen::RowVectorXd> bg(grad.data() + b_off_[li], dims_[li + 1]);
            if (li == 0 && onehot) {
                for (Index i = 0; i < gpre.rows(); ++i) {
                    const int m = (*onehot->indices)[static_cast<std::size_t>(i)];
                    wg.col(m) += gpre.row(i).transpose();
                }
            } else {
                const Mat& a_in = (li == 0) ? *dense : trace.post[li];
                wg.noalias() += gpre.transpose() * a_in;
            }
            bg += gpre.colwise().sum();
            if (li > 0) {
                g.noalias() = gpre * weights(li);
            } else if (input_grad) {
                input_grad->noalias() = gpre * weights(0);
            }
        }
    }

    Vec per_example_norms_impl(const Mat* dense, const OneHotBatch* onehot, const MlpTrace& trace,
                               const Mat& upstream) const {
        const Index rows = upstream.rows();
        Vec norms(rows);
        Vec scratch = Vec::Zero(param_count());
        std::vector<int> one_idx(1);
        for (Index i = 0; i < rows; ++i) {
            MlpTrace row_trace = slice_trace(trace, i);
            scratch.setZero();
            if (onehot) {
                one_idx[0] = (*onehot->indices)[static_cast<std::size_t>(i)];
                OneHotBatch one(one_idx, onehot->width);
                backward_into(nullptr, &one, row_trace, upstream.row(i), false, scratch, nullptr);
            } else {
                Mat in_row = dense->row(i);
                backward_into(&in_row, nullptr, row_trace, upstream.row(i), false, scratch,
                              nullptr);
            }
            norms(i) = scratch.squaredNorm();
        }
        return norms;
    }

    Vec jacobian_fro_impl(const Mat* dense, const OneHotBatch* onehot) const {
        MlpTrace trace;
        if (dense)
            forward(*dense, trace);
        else
            forward(*onehot, trace);
        const Index rows = trace.post.back().rows();
        const int d_out = output_dim();
        Vec out = Vec::Zero(rows);
        Vec scratch = Vec::Zero(param_count());
        std::vector<int> one_idx(1);
        for (Index i = 0; i < rows; ++i) {
            MlpTrace row_trace = slice_trace(trace, i);
            for (int k = 0; k < d_out; ++k) {
                Mat unit = Mat::Zero(1, d_out);
                unit(0, k) = 1.0;
                scratch.setZero();
                if (onehot) {
                    one_idx[0] = (*onehot->indices)[static_cast<std::size_t>(i)];
                    OneHotBatch one(one_idx, onehot->width);
                    backward_into(nullptr, &one, row_trace, unit, false, scratch, nullptr);
                } else {
                    Mat in_row = dense->row(i);
                    backward_into(&in_row, nullptr, row_trace, unit, false, scratch, nullptr);
                }
                out(i) += scratch.squaredNorm();
            }
        }
        return out;
    }

    static MlpTrace slice_trace(const MlpTrace& trace, Index row) {
        MlpTrace t;
        t.post.reserve(trace.post.size());
        for (const Mat& m : trace.post) {
            if (m.size() == 0)
                t.post.emplace_back();
            else
                t.post.push_back(m.row(row));
        }
        return t;
    }

    std::vector<int> dims_;
    std::vector<Activation> acts_;
    Vec params_;
    std::vector<Index> w_off_, b_off_;
};

enum class OptKind { sgd, adam };

// SGD or Adam over a flat parameter vector. Adam uses the standard
// bias-corrected moment updates with beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
struct Optimizer {
    OptKind kind = OptKind::adam;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    Vec m, v;
    long long step_count = 0;

    static Optimizer sgd(double lr) {
        Optimizer o;
        o.kind = OptKind::sgd;
        o.lr = lr;
        return o;
    }
    static Optimizer adam(double lr, Index n_params) {
        Optimizer o;
        o.kind = OptKind::adam;
        o.lr = lr;
        o.m = Vec::Zero(n_params);
        o.v = Vec::Zero(n_params);
        return o;
    }

    void step(Vec& params, const Vec& grad) {
        if (grad.size() != params.size()) throw ConfigError("optimizer: gradient size mismatch");
        if (!grad.allFinite()) throw TrainingError("optimizer: non-finite gradient entries");
        ++step_count;
        if (kind == OptKind::sgd) {
            params -= lr * grad;
            return;
        }
        if (m.size() != params.size()) throw ConfigError("optimizer: moment size mismatch");
        m = beta1 * m + (1.0 - beta1) * grad;
        v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
        params.array() -=
            lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    }
};

}  // namespace airgap
