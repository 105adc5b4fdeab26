#include <catch2/catch.hpp>

#include "airgap/nn.hpp"

#include <cmath>
#include <limits>
#include <vector>

using namespace airgap;

namespace {

// central finite differences on L(theta) = sum_i <upstream_i, f(x_i)>
Vec fd_gradient(MlpNetwork& net, const Mat& input, const Mat& upstream, double h = 1e-6) {
    Vec g(net.param_count());
    for (Index i = 0; i < net.param_count(); ++i) {
        const double orig = net.params()(i);
        net.params()(i) = orig + h;
        const double lp = net.forward(input).cwiseProduct(upstream).sum();
        net.params()(i) = orig - h;
        const double lm = net.forward(input).cwiseProduct(upstream).sum();
        net.params()(i) = orig;
        g(i) = (lp - lm) / (2.0 * h);
    }
    return g;
}

double max_rel_err(const Vec& a, const Vec& b) {
    double worst = 0.0;
    for (Index i = 0; i < a.size(); ++i) {
        const double scale = std::max({1e-8, std::abs(a(i)), std::abs(b(i))});
        worst = std::max(worst, std::abs(a(i) - b(i)) / scale);
    }
    return worst;
}

Mat onehot_dense(const std::vector<int>& idx, int width) {
    Mat m = Mat::Zero(static_cast<Index>(idx.size()), width);
    for (Index i = 0; i < m.rows(); ++i) m(i, idx[static_cast<std::size_t>(i)]) = 1.0;
    return m;
}

}  // namespace

TEST_CASE("zero net maps everything to zero", "[nn]") {
    MlpNetwork net({3, 5, 2}, {Activation::elu, Activation::linear});
    Mat in(2, 3);
    in << 0.1, -4.0, 2.5, 1.0, 1.0, 1.0;
    const Mat out = net.forward(in);
    REQUIRE(out.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("identity linear layer passes input through", "[nn]") {
    MlpNetwork net({2, 2}, {Activation::linear});
    net.params()(0) = 1.0;  // W(0,0)
    net.params()(3) = 1.0;  // W(1,1)
    Mat in(1, 2);
    in << 0.3, 0.7;
    const Mat out = net.forward(in);
    REQUIRE(out(0, 0) == Approx(0.3));
    REQUIRE(out(0, 1) == Approx(0.7));
}

TEST_CASE("softmax layer symmetry and analytic values", "[nn]") {
    MlpNetwork net({2, 2}, {Activation::softmax});
    net.params()(0) = 1.0;
    net.params()(3) = 1.0;
    Mat zero_in(1, 2);
    zero_in << 0.0, 0.0;
    const Mat uniform = net.forward(zero_in);
    REQUIRE(uniform(0, 0) == Approx(0.5).margin(1e-12));
    REQUIRE(uniform(0, 1) == Approx(0.5).margin(1e-12));

    Mat in(1, 2);
    in << std::log(2.0), 0.0;  // softmax([ln 2, ln 1]) = [2/3, 1/3]
    const Mat out = net.forward(in);
    REQUIRE(out(0, 0) == Approx(2.0 / 3.0).epsilon(1e-12));
    REQUIRE(out(0, 1) == Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one and stay positive", "[nn]") {
    Rng rng(3);
    MlpNetwork net = MlpNetwork::glorot({4, 16, 8}, {Activation::relu, Activation::softmax}, rng);
    Mat in(32, 4);
    for (Index i = 0; i < in.rows(); ++i)
        for (Index j = 0; j < in.cols(); ++j) in(i, j) = 50.0 * (rng.uniform01() - 0.5);
    const Mat out = net.forward(in);
    for (Index i = 0; i < out.rows(); ++i) {
        REQUIRE(out.row(i).sum() == Approx(1.0).margin(1e-9));
        REQUIRE(out.row(i).minCoeff() > 0.0);
    }
}

TEST_CASE("activation values and derivatives", "[nn]") {
    REQUIRE(activation_apply(Activation::elu, -40.0) == Approx(-1.0).margin(1e-12));
    REQUIRE(activation_apply(Activation::elu, 0.0) == 0.0);
    REQUIRE(activation_apply(Activation::elu, 1.0) == 1.0);
    REQUIRE(activation_apply(Activation::relu, -3.0) == 0.0);
    REQUIRE(activation_grad(Activation::relu, -3.0) == 0.0);
    REQUIRE(activation_apply(Activation::relu, 2.0) == 2.0);
    REQUIRE(activation_grad(Activation::relu, 2.0) == 1.0);
    // derivative consistent with value at a kink-free sample of points
    for (double x : {-2.0, -0.5, 0.3, 1.7}) {
        const double h = 1e-7;
        for (Activation a : {Activation::elu, Activation::relu, Activation::linear}) {
            const double fd =
                (activation_apply(a, x + h) - activation_apply(a, x - h)) / (2.0 * h);
            REQUIRE(activation_grad(a, x) == Approx(fd).margin(1e-6));
        }
    }
}

TEST_CASE("zero upstream gives zero gradient", "[nn]") {
    Rng rng(11);
    MlpNetwork net = MlpNetwork::glorot({3, 4, 2}, {Activation::elu, Activation::linear}, rng);
    Mat in(5, 3);
    for (Index i = 0; i < in.size(); ++i) in.data()[i] = rng.uniform01();
    MlpTrace trace;
    net.forward(in, trace);
    const Vec g = net.backward(in, trace, Mat::Zero(5, 2));
    REQUIRE(g.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("scalar chain rule", "[nn]") {
    MlpNetwork net({1, 1}, {Activation::linear});
    net.params()(0) = 3.0;  // w
    net.params()(1) = 0.5;  // b
    Mat in(1, 1);
    in << 2.0;
    MlpTrace trace;
    net.forward(in, trace);
    Mat upstream(1, 1);
    upstream << 1.0;
    const Vec g = net.backward(in, trace, upstream);
    REQUIRE(g(0) == Approx(2.0));  // d/dw = x
    REQUIRE(g(1) == Approx(1.0));  // d/db = 1
}

TEST_CASE("backward matches finite differences on a small random net", "[nn]") {
    Rng rng(17);
    MlpNetwork net = MlpNetwork::glorot({2, 3, 2}, {Activation::elu, Activation::linear}, rng);
    REQUIRE(net.param_count() <= 30);
    Mat in(4, 2);
    Mat upstream(4, 2);
    for (Index i = 0; i < in.size(); ++i) in.data()[i] = 2.0 * rng.uniform01() - 1.0;
    for (Index i = 0; i < upstream.size(); ++i) upstream.data()[i] = 2.0 * rng.uniform01() - 1.0;
    MlpTrace trace;
    net.forward(in, trace);
    const Vec analytic = net.backward(in, trace, upstream);
    const Vec numeric = fd_gradient(net, in, upstream);
    REQUIRE(max_rel_err(analytic, numeric) < 1e-5);
}

TEST_CASE("backward through softmax and fused cross-entropy", "[nn]") {
    Rng rng(19);
    MlpNetwork net = MlpNetwork::glorot({3, 5, 4}, {Activation::relu, Activation::softmax}, rng);
    Mat in(6, 3);
    for (Index i = 0; i < in.size(); ++i) in.data()[i] = 2.0 * rng.uniform01() - 1.0;
    const std::vector<int> targets = {0, 3, 1, 2, 0, 1};

    MlpTrace trace;
    net.forward(in, trace);
    const Vec analytic = net.backward_cross_entropy(in, trace, targets);

    // finite differences on the cross-entropy loss itself
    Vec numeric(net.param_count());
    const double h = 1e-6;
    auto ce = [&]() {
        const Mat p = net.forward(in);
        double s = 0.0;
        for (Index i = 0; i < p.rows(); ++i)
            s += -std::log(p(i, targets[static_cast<std::size_t>(i)]));
        return s;
    };
    for (Index i = 0; i < net.param_count(); ++i) {
        const double orig = net.params()(i);
        net.params()(i) = orig + h;
        const double lp = ce();
        net.params()(i) = orig - h;
        const double lm = ce();
        net.params()(i) = orig;
        numeric(i) = (lp - lm) / (2.0 * h);
    }
    REQUIRE(max_rel_err(analytic, numeric) < 1e-4);

    // generic upstream through the softmax activation (full Jacobian path)
    Mat upstream(6, 4);
    for (Index i = 0; i < upstream.size(); ++i) upstream.data()[i] = rng.uniform01();
    MlpTrace t2;
    net.forward(in, t2);
    const Vec analytic2 = net.backward(in, t2, upstream);
    const Vec numeric2 = fd_gradient(net, in, upstream);
    REQUIRE(max_rel_err(analytic2, numeric2) < 1e-4);
}

TEST_CASE("one-hot fast path agrees with the dense path", "[nn]") {
    Rng rng(23);
    MlpNetwork net = MlpNetwork::glorot({6, 5, 4}, {Activation::elu, Activation::linear}, rng);
    const std::vector<int> idx = {0, 5, 2, 2, 3};
    const Mat dense = onehot_dense(idx, 6);
    const OneHotBatch onehot(idx, 6);

    MlpTrace t_dense, t_hot;
    const Mat out_dense = net.forward(dense, t_dense);
    const Mat out_hot = net.forward(onehot, t_hot);
    REQUIRE((out_dense - out_hot).cwiseAbs().maxCoeff() == 0.0);

    Mat upstream(5, 4);
    for (Index i = 0; i < upstream.size(); ++i) upstream.data()[i] = rng.uniform01() - 0.5;
    const Vec g_dense = net.backward(dense, t_dense, upstream);
    const Vec g_hot = net.backward(onehot, t_hot, upstream);
    REQUIRE((g_dense - g_hot).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("forward and backward are pure", "[nn]") {
    Rng rng(29);
    MlpNetwork net = MlpNetwork::glorot({3, 4, 2}, {Activation::elu, Activation::linear}, rng);
    const Vec before = net.params();
    Mat in(2, 3);
    for (Index i = 0; i < in.size(); ++i) in.data()[i] = rng.uniform01();
    MlpTrace trace;
    const Mat out1 = net.forward(in, trace);
    net.backward(in, trace, Mat::Ones(2, 2));
    const Mat out2 = net.forward(in);
    REQUIRE((net.params() - before).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((out1 - out2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sgd and adam basics", "[nn]") {
    Vec theta(1);
    theta << 1.0;
    Optimizer sgd = Optimizer::sgd(0.1);
    Vec grad(1);
    grad << 2.0;
    sgd.step(theta, grad);
    REQUIRE(theta(0) == Approx(0.8));

    // Adam first step moves opposite the gradient sign, elementwise
    Vec theta2(3);
    theta2 << 1.0, -2.0, 0.5;
    Optimizer adam = Optimizer::adam(1e-3, 3);
    Vec g2(3);
    g2 << 0.3, -4.0, 1e-4;
    const Vec before = theta2;
    adam.step(theta2, g2);
    for (Index i = 0; i < 3; ++i)
        REQUIRE(std::signbit(theta2(i) - before(i)) == std::signbit(-g2(i)));

    // zero gradient leaves parameters unchanged
    Vec theta3(2);
    theta3 << 0.25, -0.75;
    Optimizer sgd2 = Optimizer::sgd(0.1);
    sgd2.step(theta3, Vec::Zero(2));
    REQUIRE(theta3(0) == 0.25);
    Optimizer adam2 = Optimizer::adam(1e-3, 2);
    adam2.step(theta3, Vec::Zero(2));
    REQUIRE(theta3(0) == 0.25);
    REQUIRE(theta3(1) == -0.75);
}

TEST_CASE("optimizer steps are deterministic", "[nn]") {
    auto run = [] {
        Vec theta(4);
        theta << 0.1, -0.2, 0.3, -0.4;
        Optimizer adam = Optimizer::adam(1e-3, 4);
        Vec g(4);
        g << 1.0, -2.0, 0.5, 3.0;
        for (int i = 0; i < 10; ++i) adam.step(theta, g);
        return theta;
    };
    const Vec a = run(), b = run();
    REQUIRE((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("non-finite gradients abort the step", "[nn]") {
    Vec theta(1);
    theta << 1.0;
    Optimizer adam = Optimizer::adam(1e-3, 1);
    Vec g(1);
    g << std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_AS(adam.step(theta, g), TrainingError);
    REQUIRE(theta(0) == 1.0);
}

TEST_CASE("jacobian frobenius norm of an affine map", "[nn]") {
    // zero-valued single linear layer: ||J||_F^2 = d_out * sum(x^2) + d_out
    MlpNetwork net({3, 4}, {Activation::linear});
    Mat in(2, 3);
    in << 0.5, -1.0, 2.0, 0.0, 0.0, 0.0;
    const Vec fro = net.per_example_jacobian_fro_sq(in);
    REQUIRE(fro(0) == Approx(4.0 * (0.25 + 1.0 + 4.0) + 4.0));
    REQUIRE(fro(1) == Approx(4.0));

    // duplicate rows get identical values
    Mat dup(2, 3);
    dup << 0.5, -1.0, 2.0, 0.5, -1.0, 2.0;
    const Vec fro2 = net.per_example_jacobian_fro_sq(dup);
    REQUIRE(fro2(0) == fro2(1));
}

TEST_CASE("jacobian frobenius norm matches finite differences", "[nn]") {
    Rng rng(31);
    MlpNetwork net = MlpNetwork::glorot({2, 3, 2}, {Activation::elu, Activation::linear}, rng);
    Mat in(1, 2);
    in << 0.4, -0.6;
    const double analytic = net.per_example_jacobian_fro_sq(in)(0);

    // numeric Jacobian column by column
    double numeric = 0.0;
    const double h = 1e-6;
    for (Index p = 0; p < net.param_count(); ++p) {
        const double orig = net.params()(p);
        net.params()(p) = orig + h;
        const Mat fp = net.forward(in);
        net.params()(p) = orig - h;
        const Mat fm = net.forward(in);
        net.params()(p) = orig;
        numeric += ((fp - fm) / (2.0 * h)).squaredNorm();
    }
    REQUIRE(analytic == Approx(numeric).epsilon(1e-4));
}

TEST_CASE("parameter count and layout invariants", "[nn]") {
    MlpNetwork net({4, 7, 3}, {Activation::relu, Activation::linear});
    REQUIRE(net.param_count() == 4 * 7 + 7 + 7 * 3 + 3);
    REQUIRE_THROWS_AS(MlpNetwork({4, 5, 3}, {Activation::softmax, Activation::linear}),
                      ConfigError);
    REQUIRE_THROWS_AS(MlpNetwork({4}, {}), ConfigError);
    Mat bad(1, 3);
    bad.setZero();
    REQUIRE_THROWS_AS(net.forward(bad), ConfigError);
}
