#include <catch2/catch.hpp>

#include "airgap/channel.hpp"

#include <cmath>
#include <complex>
#include <concepts>

using namespace airgap;

TEST_CASE("snr to noise variance", "[channel]") {
    REQUIRE(snr_db_to_noise_var(0.0) == Approx(1.0));
    REQUIRE(snr_db_to_noise_var(10.0) == Approx(0.1));
    REQUIRE(snr_db_to_noise_var(20.0) == Approx(0.01));
    REQUIRE(noise_var_to_snr_db(snr_db_to_noise_var(7.3)) == Approx(7.3));
}

TEST_CASE("awgn noiseless limit and determinism", "[channel]") {
    Rng rng(1);
    ComplexBlock x = ComplexBlock::zeros(3, 4);
    for (Index i = 0; i < x.data.size(); ++i) x.data.data()[i] = 0.5 * (i % 7) - 1.0;
    Rng r1(9), r2(9);
    const ComplexBlock y1 = awgn_apply(x, 1e-30, r1);
    REQUIRE((y1.data - x.data).cwiseAbs().maxCoeff() < 1e-10);
    Rng r3(9);
    const ComplexBlock a = awgn_apply(x, 0.1, r2);
    const ComplexBlock b = awgn_apply(x, 0.1, r3);
    REQUIRE((a.data - b.data).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("awgn per-symbol error power", "[channel]") {
    Rng rng(42);
    const Index rows = 4096;
    const Index syms = 61;  // ~1e6 noise samples in chunks
    double acc = 0.0;
    long count = 0;
    for (int rep = 0; rep < 4; ++rep) {
        ComplexBlock x = ComplexBlock::zeros(rows, syms);
        const ComplexBlock y = awgn_apply(x, 0.1, rng);
        for (Index i = 0; i < rows; ++i)
            for (Index k = 0; k < syms; ++k) {
                acc += std::norm(y.at(i, k));
                ++count;
            }
    }
    REQUIRE(acc / count == Approx(0.1).epsilon(0.01));
}

TEST_CASE("rbf equalization identity and fading moments", "[channel]") {
    Rng rng(7);
    ComplexBlock x = ComplexBlock::zeros(2, 3);
    for (Index i = 0; i < x.data.size(); ++i) x.data.data()[i] = 0.3 * (i + 1);
    const RbfOutput out = rbf_apply(x, 1e-30, rng);
    for (Index i = 0; i < x.rows(); ++i)
        for (Index k = 0; k < x.symbols(); ++k) {
            const std::complex<double> rec = out.y.at(i, k) / out.h[static_cast<std::size_t>(i)];
            REQUIRE(std::abs(rec - x.at(i, k)) < 1e-10);
        }

    // E[|h|^2] = 1 over many draws
    double e_h2 = 0.0;
    long n = 0;
    for (int rep = 0; rep < 250; ++rep) {
        ComplexBlock z = ComplexBlock::zeros(4096, 1);
        const RbfOutput o = rbf_apply(z, 1.0, rng);
        for (const auto& h : o.h) {
            e_h2 += std::norm(h);
            ++n;
        }
    }
    REQUIRE(e_h2 / n == Approx(1.0).epsilon(0.01));
}

TEST_CASE("rbf rows fade independently", "[channel]") {
    Rng rng(12);
    double sum_x = 0, sum_y = 0, sum_xy = 0, sum_x2 = 0, sum_y2 = 0;
    const int trials = 100000;
    for (int t = 0; t < trials; t += 2048) {
        ComplexBlock z = ComplexBlock::zeros(2 * 2048, 1);
        const RbfOutput o = rbf_apply(z, 1.0, rng);
        for (int i = 0; i < 2048; ++i) {
            const double a = o.h[static_cast<std::size_t>(2 * i)].real();
            const double b = o.h[static_cast<std::size_t>(2 * i + 1)].real();
            sum_x += a;
            sum_y += b;
            sum_xy += a * b;
            sum_x2 += a * a;
            sum_y2 += b * b;
        }
    }
    const double n = trials / 2;
    const double cov = sum_xy / n - (sum_x / n) * (sum_y / n);
    const double vx = sum_x2 / n - (sum_x / n) * (sum_x / n);
    const double vy = sum_y2 / n - (sum_y / n) * (sum_y / n);
    REQUIRE(std::abs(cov / std::sqrt(vx * vy)) < 0.01);
}

TEST_CASE("perturbation moments and circularity", "[channel]") {
    Rng rng(21);
    const double sigma_p2 = 0.02;
    double sum_re = 0, sum_im = 0, pow_re = 0, pow_im = 0;
    long n = 0;
    for (int rep = 0; rep < 8; ++rep) {
        const ComplexBlock w = sample_perturbation(4096, 31, sigma_p2, rng);
        const Index syms = w.symbols();
        for (Index i = 0; i < w.rows(); ++i)
            for (Index k = 0; k < syms; ++k) {
                const double re = w.data(i, k);
                const double im = w.data(i, syms + k);
                sum_re += re;
                sum_im += im;
                pow_re += re * re;
                pow_im += im * im;
                ++n;
            }
    }
    const double total_var = (pow_re + pow_im) / n;
    REQUIRE(total_var == Approx(sigma_p2).epsilon(0.02));
    REQUIRE(pow_re / n == Approx(sigma_p2 / 2.0).epsilon(0.02));
    REQUIRE(pow_im / n == Approx(sigma_p2 / 2.0).epsilon(0.02));
    const double se = std::sqrt(sigma_p2 / 2.0 / n);
    REQUIRE(std::abs(sum_re / n) < 3.0 * se);
    REQUIRE(std::abs(sum_im / n) < 3.0 * se);
    REQUIRE_THROWS_AS(sample_perturbation(1, 1, 1.5, rng), InputError);
}

TEST_CASE("channels preserve shape and do not mutate input", "[channel]") {
    Rng rng(33);
    ComplexBlock x = ComplexBlock::zeros(5, 4);
    for (Index i = 0; i < x.data.size(); ++i) x.data.data()[i] = 0.1 * i;
    const Mat before = x.data;
    const ComplexBlock y1 = awgn_apply(x, 0.5, rng);
    const RbfOutput y2 = rbf_apply(x, 0.5, rng);
    REQUIRE(y1.data.rows() == 5);
    REQUIRE(y1.data.cols() == 8);
    REQUIRE(y2.y.data.rows() == 5);
    REQUIRE(y2.y.data.cols() == 8);
    REQUIRE((x.data - before).cwiseAbs().maxCoeff() == 0.0);
}

template <typename T>
constexpr bool exposes_fading_state = requires(T c) { c.fading(); } ||
                                      requires(T c) { c.h(); } ||
                                      requires(T c) { c.last_noise(); } ||
                                      requires(T c) { c.noise(); };
template <typename T>
constexpr bool exposes_transmit = requires(T c, const ComplexBlock& x, Rng& r) {
    { c.transmit(x, r) } -> std::same_as<ComplexBlock>;
};

TEST_CASE("channel model exposes the sampling surface only", "[channel]") {
    // Learner-facing interface: construction, kind, noise_var, transmit.
    // No accessor can reach fading or noise realizations.
    static_assert(!exposes_fading_state<ChannelModel>);
    static_assert(exposes_transmit<ChannelModel>);
    Rng rng(2);
    const ChannelModel chan(ChannelKind::rbf, 0.25);
    ComplexBlock x = ComplexBlock::zeros(3, 2);
    const ComplexBlock y = chan.transmit(x, rng);
    REQUIRE(y.rows() == 3);
}

TEST_CASE("complex block layout round-trips exactly", "[channel]") {
    ComplexBlock b = ComplexBlock::zeros(2, 3);
    b.set(1, 2, {0.25, -0.125});
    REQUIRE(b.at(1, 2) == std::complex<double>(0.25, -0.125));
    REQUIRE(b.data(1, 2) == 0.25);
    REQUIRE(b.data(1, 5) == -0.125);
}
