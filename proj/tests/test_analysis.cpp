#include <catch2/catch.hpp>

#include "airgap/analysis.hpp"

#include <cmath>
#include <vector>

using namespace airgap;

namespace {

CommSystem small_system(std::uint64_t seed = 1) {
    CommParams p;
    p.m = 8;
    p.nc = 1;
    return make_comm_system(p, Rng(seed));
}

// Independent estimator assembly for cross-checking estimate_v: explicit
// epsilon draws per replication, no shared noise directions, direct variance.
std::pair<double, double> naive_v(const CommSystem& sys, const ChannelModel& channel,
                                  double sigma_l2, Index batch, int reps, std::uint64_t seed) {
    const Rng master(seed);
    Vec clean_sum = Vec::Zero(sys.tx.net().param_count());
    std::vector<Vec> noisy;
    noisy.reserve(static_cast<std::size_t>(reps));
    for (int rep = 0; rep < reps; ++rep) {
        Rng msg_rng = master.sub("naive-msg", rep);
        Rng chan_rng = master.sub("naive-chan", rep);
        Rng pert_rng = master.sub("naive-pert", rep);
        Rng eps_rng = master.sub("naive-eps", rep);
        const std::vector<int> msgs = draw_messages(sys.params.m, batch, msg_rng);
        CommTransmitter::Trace trace;
        const ComplexBlock x = sys.tx.forward(msgs, trace);
        const ComplexBlock w =
            sample_perturbation(batch, sys.params.nc, sys.params.sigma_c2, pert_rng);
        ComplexBlock xp;
        xp.data = x.data + w.data;
        const ComplexBlock y = channel.transmit(xp, chan_rng);
        Vec l = ce_losses(sys.rx.forward(y), msgs);
        clean_sum += sys.tx.backward(
            msgs, trace, reinforce_upstream(l, xp.data, x.data, sys.params.sigma_c2));
        for (Index i = 0; i < batch; ++i) l(i) += std::sqrt(sigma_l2) * eps_rng.normal();
        noisy.push_back(sys.tx.backward(
            msgs, trace, reinforce_upstream(l, xp.data, x.data, sys.params.sigma_c2)));
    }
    const Vec mean_clean = clean_sum / reps;
    double sum = 0.0, sum_sq = 0.0;
    for (const Vec& g : noisy) {
        const double v = (g - mean_clean).squaredNorm();
        sum += v;
        sum_sq += v * v;
    }
    const double mean = sum / reps;
    const double var = std::max(0.0, sum_sq / reps - mean * mean) / (reps - 1);
    return {mean, std::sqrt(var)};
}

}  // namespace

TEST_CASE("estimate_v agrees with an independent assembly", "[analysis]") {
    const CommSystem sys = small_system(3);
    const ChannelModel channel(ChannelKind::awgn, snr_db_to_noise_var(10.0));
    for (double sigma_l2 : {0.0, 1.0}) {
        const VariancePoint fast = estimate_v(sys, channel, sigma_l2, 200, 200, Rng(4));
        const auto [slow, slow_se] = naive_v(sys, channel, sigma_l2, 200, 200, 5);
        const double se = std::sqrt(fast.std_err * fast.std_err + slow_se * slow_se);
        REQUIRE(std::abs(fast.v - slow) < 4.0 * se);
    }
}

TEST_CASE("v grid is flat at tiny noise and grows with it", "[analysis]") {
    const CommSystem sys = small_system(7);
    const ChannelModel channel(ChannelKind::awgn, snr_db_to_noise_var(10.0));
    const std::vector<double> grid = {0.0, 1e-4, 1e-3, 1e-1, 1.0, 10.0};
    const VarianceStudy study = estimate_v_grid(sys, channel, grid, 500, 200, Rng(8));
    // non-decreasing within 2 standard errors (shared noise directions make
    // the ordering essentially exact)
    for (std::size_t k = 1; k < study.points.size(); ++k)
        REQUIRE(study.points[k].v >=
                study.points[k - 1].v - 2.0 * study.points[k - 1].std_err);
    // the noise-dominant increment matches sigma_l^2 E||D||^2 / S
    const double d_over_s = study.d_sq_norm_mean / 500.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        if (grid[k] < 1.0) continue;
        const double increment = study.points[k].v - study.points[0].v;
        REQUIRE(increment == Approx(grid[k] * d_over_s).epsilon(0.10));
    }
}

TEST_CASE("closed-form b term", "[analysis]") {
    const CommSystem sys = small_system(9);
    REQUIRE(estimate_b_closed_form(sys, 0.0, 256, Rng(10)) == 0.0);
    const double b1 = estimate_b_closed_form(sys, 0.5, 256, Rng(10));
    const double b2 = estimate_b_closed_form(sys, 1.0, 256, Rng(10));
    REQUIRE(b2 == Approx(2.0 * b1).epsilon(1e-12));

    // two routes to E||D||^2: the Frobenius identity and direct sampling
    const auto [d_mean, d_se] = estimate_d_sq_norm(sys, 4096, Rng(11));
    REQUIRE(b2 == Approx(d_mean).epsilon(0.10));
}

TEST_CASE("v slope matches the closed-form b within 15 percent", "[analysis]") {
    CommSystem sys = small_system(12);
    const ChannelModel channel(ChannelKind::awgn, snr_db_to_noise_var(10.0));
    // a briefly trained system, as in the figure's trained stages
    PerfectTransport transport;
    TrainSchedule sched;
    sched.iterations = 200;
    sched.batch = 256;
    sched.plateau_enabled = false;
    alternating_train(sys, channel, transport, sched, Rng(13));

    const std::vector<double> grid = {1.0, 10.0};
    const VarianceStudy study = estimate_v_grid(sys, channel, grid, 500, 200, Rng(14));
    const double slope =
        (study.points[1].v - study.points[0].v) / (grid[1] - grid[0]) * 500.0;
    const double b_unit = estimate_b_closed_form(sys, 1.0, 2048, Rng(15));
    REQUIRE(slope == Approx(b_unit).epsilon(0.15));
}

TEST_CASE("training reduces the clean-gradient variance", "[analysis]") {
    const ChannelModel channel(ChannelKind::awgn, snr_db_to_noise_var(10.0));
    CommSystem untrained = small_system(16);
    CommSystem trained = small_system(16);
    PerfectTransport transport;
    TrainSchedule sched;
    sched.iterations = 400;
    sched.batch = 256;
    sched.plateau_enabled = false;
    alternating_train(trained, channel, transport, sched, Rng(17));

    const VariancePoint v_untrained = estimate_v(untrained, channel, 0.0, 500, 200, Rng(18));
    const VariancePoint v_trained = estimate_v(trained, channel, 0.0, 500, 200, Rng(18));
    REQUIRE(v_trained.v <= v_untrained.v);
}

TEST_CASE("noisy losses do not bias the estimator mean", "[analysis]") {
    // project the noise contribution of each replication onto a fixed
    // direction; its mean must be statistically zero for any sigma_l^2
    const CommSystem sys = small_system(19);
    const ChannelModel channel(ChannelKind::awgn, snr_db_to_noise_var(10.0));
    const Rng master(20);
    const Index batch = 200;
    const int reps = 300;
    Rng dir_rng(21);
    Vec dir(sys.tx.net().param_count());
    for (Index i = 0; i < dir.size(); ++i) dir(i) = dir_rng.normal();
    dir.normalize();
    double sum = 0.0, sum_sq = 0.0;
    for (int rep = 0; rep < reps; ++rep) {
        const auto s = airgap::detail::variance_replication(sys, channel, batch, master, rep);
        const double proj = s.noise.dot(dir);  // noisy - clean, unit variance scale
        sum += proj;
        sum_sq += proj * proj;
    }
    const double mean = sum / reps;
    const double se = std::sqrt((sum_sq / reps - mean * mean) / reps);
    REQUIRE(std::abs(mean) < 3.0 * se);
}

TEST_CASE("bler sweep structure and determinism", "[analysis]") {
    BlerVsMseConfig cfg;
    cfg.comm.m = 4;
    cfg.comm.nc = 1;
    cfg.schedule.iterations = 120;
    cfg.schedule.batch = 128;
    cfg.schedule.plateau_enabled = false;
    cfg.eval_samples = 20000;
    cfg.sigma_l2_grid = {1e-6, 1.0};
    cfg.seed = 22;
    const auto rows = bler_vs_feedback_mse_sweep(cfg);
    REQUIRE(rows.size() == 2);
    REQUIRE(rows[0].bler_perfect == rows[1].bler_perfect);
    REQUIRE(rows[0].sigma_l2 == 1e-6);
    // near-noiseless loss feedback trains essentially like the reference
    REQUIRE(rows[0].bler_noisy <= 2.0 * std::max(rows[0].bler_perfect, 1e-3));
    const auto rows2 = bler_vs_feedback_mse_sweep(cfg);
    REQUIRE(rows2[0].bler_noisy == rows[0].bler_noisy);
    REQUIRE(rows2[1].bler_noisy == rows[1].bler_noisy);
}
