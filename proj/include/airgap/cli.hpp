#pragma once

#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "airgap/analysis.hpp"
#include "airgap/autoencoder.hpp"
#include "airgap/baselines.hpp"
#include "airgap/config.hpp"
#include "airgap/csv.hpp"
#include "airgap/feedback.hpp"
#include "airgap/model_io.hpp"

namespace airgap {

namespace cli_detail {

struct CliOptions {
    ExperimentConfig cfg;
    std::string config_path;
    std::optional<Preset> preset;
    std::vector<std::pair<std::string, std::string>> overrides;  // flag-level key=value
    std::string model_path;
    std::string feedback_model_path;
    std::string scheme;
    std::optional<double> snr_db;
    std::string snr_grid;
    bool timings = false;
};

// Precedence: paper defaults < --preset < config file < flags. The --channel
// flag re-applies its dependent defaults (n_c, n_f, training SNRs) before the
// remaining flags are applied; inside a config file the channel key does the
// same relative to the file's other keys.
inline ExperimentConfig resolve_config(const CliOptions& opt) {
    ExperimentConfig cfg;
    if (opt.preset) apply_preset(cfg, *opt.preset);
    if (!opt.config_path.empty()) cfg = load_config(opt.config_path, cfg);
    for (const auto& [k, v] : opt.overrides) {
        apply_config_key(cfg, k, v);
        if (k == "channel") apply_channel_defaults(cfg);
    }
    if (!opt.snr_grid.empty()) cfg.eval_snr_grid = parse_snr_grid(opt.snr_grid);
    if (opt.snr_db) cfg.eval_snr_grid = {*opt.snr_db};
    if (cfg.eval_snr_grid.empty()) cfg.eval_snr_grid = default_eval_grid(cfg.channel);
    validate(cfg);
    return cfg;
}

inline void add_common_flags(CLI::App* cmd, CliOptions& opt) {
    cmd->add_option_function<std::string>(
           "--channel", [&](const std::string& v) { opt.overrides.emplace_back("channel", v); },
           "Channel kind: awgn or rbf");
    cmd->add_option_function<std::string>(
           "--seed", [&](const std::string& v) { opt.overrides.emplace_back("seed", v); },
           "Master seed");
    cmd->add_option("--config", opt.config_path, "Config file (key = value lines)");
    cmd->add_option_function<std::string>(
           "--out", [&](const std::string& v) { opt.overrides.emplace_back("out_dir", v); },
           "Output directory");
    cmd->add_option_function<std::string>(
           "--transport",
           [&](const std::string& v) { opt.overrides.emplace_back("transport", v); },
           "Loss transport: perfect, gaussian:<sigma_l2> or learned");
    cmd->add_option_function<std::string>(
           "--preset",
           [&](const std::string& v) {
               if (v == "desk")
                   opt.preset = Preset::desk;
               else if (v == "paper")
                   opt.preset = Preset::paper;
               else
                   throw CLI::ValidationError("--preset must be desk or paper");
           },
           "Parameter preset: desk or paper");
    cmd->add_option_function<std::string>(
           "--codebook", [&](const std::string& v) { opt.overrides.emplace_back("codebook", v); },
           "Agrell codebook CSV path");
    cmd->add_flag_function(
           "--agrell-fallback",
           [&](std::int64_t) { opt.overrides.emplace_back("agrell_fallback", "true"); },
           "Use the built-in E8-shell fallback codebook");
    cmd->add_option("--snr-db", [&opt](CLI::results_t res) {
        opt.snr_db = std::stod(res[0]);
        return true;
    }, "Single evaluation SNR (dB)");
    cmd->add_option("--snr-grid", opt.snr_grid, "Evaluation SNR grid a:b:step");
    cmd->add_flag("--timings", opt.timings, "Include wall-clock times in training logs");
}

inline std::filesystem::path ensure_out_dir(const ExperimentConfig& cfg) {
    std::filesystem::path dir(cfg.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + cfg.out_dir + "'");
    return dir;
}

inline TrainSchedule comm_schedule(const ExperimentConfig& cfg) {
    TrainSchedule s;
    s.iterations = cfg.comm_iterations;
    s.batch = cfg.s_c;
    s.plateau_enabled = cfg.plateau;
    s.plateau_window = cfg.plateau_window;
    s.plateau_rel_improvement = cfg.plateau_rel_improvement;
    s.min_iterations = cfg.min_iterations;
    return s;
}

inline FeedbackSchedule fb_schedule(const ExperimentConfig& cfg) {
    FeedbackSchedule s;
    s.outer_iterations = cfg.fb_outer_iterations;
    s.inner_steps = cfg.fb_inner_steps;
    s.batch = cfg.s_f;
    s.plateau_enabled = cfg.plateau;
    s.plateau_rel_improvement = cfg.plateau_rel_improvement;
    return s;
}

inline void write_comm_log(const std::filesystem::path& path, const std::vector<TrainLogRow>& log,
                           bool timings) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(log.size());
    for (const auto& r : log) {
        std::vector<std::string> row = {std::to_string(r.iteration), std::string(1, r.phase),
                                        format_double(r.loss)};
        if (timings) row.push_back(format_double(r.wall_ms));
        rows.push_back(std::move(row));
    }
    emit_csv(path.string(), timings ? csv_schema::train_log_timed : csv_schema::train_log, rows);
}

inline void write_fb_log(const std::filesystem::path& path,
                         const std::vector<FeedbackLogRow>& log) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(log.size());
    for (const auto& r : log)
        rows.push_back({std::to_string(r.step), to_string(r.dir) + ":" + r.kind,
                        format_double(r.loss)});
    emit_csv(path.string(), csv_schema::train_log, rows);
}

inline std::vector<std::string> bler_row(double snr_db, const BlerEstimate& est,
                                         const std::string& scheme) {
    return {format_double(snr_db), format_double(est.bler), format_double(est.ci_halfwidth),
            scheme};
}

inline std::vector<std::string> mse_row(double snr_db, const MseEstimate& est,
                                        const std::string& scheme) {
    return {format_double(snr_db), format_double(est.mse), format_double(est.ci_halfwidth),
            scheme};
}

inline Codebook resolve_codebook(const ExperimentConfig& cfg) {
    if (!cfg.codebook_path.empty()) return load_codebook_csv(cfg.codebook_path, cfg.m, 4);
    if (cfg.agrell_fallback) return agrell_fallback_codebook(cfg.m);
    throw ConfigError(
        "Agrell decoding needs a codebook: pass --codebook <csv> or --agrell-fallback to use "
        "the built-in E8-shell constellation");
}

inline std::unique_ptr<FeedbackTransport> make_transport(const ExperimentConfig& cfg,
                                                         const FeedbackSystem* fb) {
    switch (cfg.transport) {
        case TransportKind::perfect: return std::make_unique<PerfectTransport>();
        case TransportKind::gaussian:
            return std::make_unique<GaussianTransport>(cfg.transport_sigma_l2);
        case TransportKind::learned:
            if (!fb)
                throw ConfigError(
                    "learned transport needs a trained feedback system (--feedback-model or "
                    "full-pipeline)");
            return std::make_unique<LearnedTransport>(*fb, cfg.comm_train_snr_db);
    }
    throw ConfigError("unreachable transport kind");
}

inline CommParams comm_params(const ExperimentConfig& cfg) {
    return CommParams{cfg.m, cfg.n_c, cfg.sigma_c2, cfg.channel, cfg.lr};
}

inline FeedbackParams feedback_params(const ExperimentConfig& cfg) {
    return FeedbackParams{cfg.n_f, cfg.sigma_f2, cfg.channel, cfg.lr};
}

inline FeedbackTrainResult train_feedback(FeedbackSystem& fb, const ExperimentConfig& cfg) {
    const ChannelModel channel(cfg.channel, snr_db_to_noise_var(cfg.feedback_train_snr_db));
    const Rng master(cfg.seed);
    return feedback_main_loop(fb, channel, fb_schedule(cfg), master.sub("fb-train"));
}

inline TrainResult train_comm(CommSystem& sys, FeedbackTransport& transport,
                              const ExperimentConfig& cfg) {
    const ChannelModel channel(cfg.channel, snr_db_to_noise_var(cfg.comm_train_snr_db));
    const Rng master(cfg.seed);
    return alternating_train(sys, channel, transport, comm_schedule(cfg),
                             master.sub("comm-train"));
}

inline int cmd_train_comm(const CliOptions& opt) {
    const ExperimentConfig cfg = resolve_config(opt);
    const auto dir = ensure_out_dir(cfg);
    std::optional<FeedbackSystem> fb;
    if (cfg.transport == TransportKind::learned) {
        if (opt.feedback_model_path.empty())
            throw ConfigError("--transport learned requires --feedback-model <path>");
        fb = load_feedback_system(opt.feedback_model_path, cfg.seed);
    }
    CommSystem sys = make_comm_system(comm_params(cfg), Rng(cfg.seed));
    auto transport = make_transport(cfg, fb ? &*fb : nullptr);
    std::cerr << "train-comm: " << to_string(cfg.channel) << ", transport "
              << transport->name() << ", " << cfg.comm_iterations << " iterations\n";
    const TrainResult res = train_comm(sys, *transport, cfg);
    save_comm_system(sys, (dir / "comm_model.txt").string());
    write_comm_log(dir / "train_comm_log.csv", res.log, opt.timings);
    std::cerr << "train-comm: ran " << res.iterations_run << " iterations, final rx loss "
              << res.final_rx_loss << "\n";
    return 0;
}

inline int cmd_train_feedback(const CliOptions& opt) {
    const ExperimentConfig cfg = resolve_config(opt);
    const auto dir = ensure_out_dir(cfg);
    FeedbackSystem fb = make_feedback_system(feedback_params(cfg), Rng(cfg.seed));
    std::cerr << "train-feedback: " << to_string(cfg.channel) << ", "
              << cfg.fb_outer_iterations << " outer iterations\n";
    const FeedbackTrainResult res = train_feedback(fb, cfg);
    save_feedback_system(fb, (dir / "feedback_model.txt").string());
    write_fb_log(dir / "train_feedback_log.csv", res.log);
    std::cerr << "train-feedback: final MSE a->b " << res.final_mse_ab << ", b->a "
              << res.final_mse_ba << "\n";
    return 0;
}

inline int cmd_eval_bler(const CliOptions& opt) {
    const ExperimentConfig cfg = resolve_config(opt);
    const auto dir = ensure_out_dir(cfg);
    const Rng master(cfg.seed);
    std::vector<std::vector<std::string>> rows;
    if (!opt.model_path.empty()) {
        const CommSystem sys = load_comm_system(opt.model_path);
        for (double snr : cfg.eval_snr_grid)
            rows.push_back(bler_row(
                snr, evaluate_bler(sys, snr, cfg.eval_samples, master.sub("eval-bler")),
                "autoencoder"));
    } else if (opt.scheme == "qpsk") {
        for (double snr : cfg.eval_snr_grid)
            rows.push_back(bler_row(snr,
                                    evaluate_baseline_bler(DiscreteScheme::qpsk, nullptr,
                                                           cfg.channel, snr, cfg.eval_samples,
                                                           master.sub("eval-bler")),
                                    "qpsk"));
    } else if (opt.scheme == "agrell") {
        const Codebook cb = resolve_codebook(cfg);
        const std::string label = cfg.codebook_path.empty() ? "agrell_fallback" : "agrell";
        for (double snr : cfg.eval_snr_grid)
            rows.push_back(bler_row(snr,
                                    evaluate_baseline_bler(DiscreteScheme::codebook, &cb,
                                                           cfg.channel, snr, cfg.eval_samples,
                                                           master.sub("eval-bler")),
                                    label));
    } else {
        throw ConfigError("eval-bler needs --model <path> or --scheme qpsk|agrell");
    }
    emit_csv((dir / "bler.csv").string(), csv_schema::bler, rows);
    return 0;
}

inline int cmd_eval_mse(const CliOptions& opt) {
    const ExperimentConfig cfg = resolve_config(opt);
    const auto dir = ensure_out_dir(cfg);
    const Rng master(cfg.seed);
    std::vector<std::vector<std::string>> rows;
    if (!opt.model_path.empty()) {
        const FeedbackSystem fb = load_feedback_system(opt.model_path, cfg.seed);
        for (double snr : cfg.eval_snr_grid)
            rows.push_back(mse_row(snr,
                                   evaluate_feedback_mse(fb, Direction::a_to_b, snr,
                                                         cfg.eval_samples,
                                                         master.sub("eval-mse")),
                                   "learned"));
    } else if (opt.scheme == "analog") {
        for (double snr : cfg.eval_snr_grid)
            rows.push_back(mse_row(snr,
                                   evaluate_analog_mse(cfg.channel, cfg.n_f, snr,
                                                       cfg.eval_samples, master.sub("eval-mse")),
                                   "analog"));
    } else {
        throw ConfigError("eval-mse needs --model <path> or --scheme analog");
    }
    emit_csv((dir / "mse.csv").string(), csv_schema::mse, rows);
    return 0;
}

inline int cmd_variance_sweep(const CliOptions& opt) {
    const ExperimentConfig cfg = resolve_config(opt);
    const auto dir = ensure_out_dir(cfg);
    const Rng master(cfg.seed);
    const ChannelModel channel(cfg.channel, snr_db_to_noise_var(cfg.comm_train_snr_db));
    CommSystem sys = make_comm_system(comm_params(cfg), Rng(cfg.seed));
    PerfectTransport transport;

    std::vector<std::vector<std::string>> rows;
    auto run_stage = [&](const std::string& stage) {
        const VarianceStudy study =
            estimate_v_grid(sys, channel, cfg.sigma_l2_grid, cfg.variance_batch,
                            cfg.variance_replications, master.sub("variance-" + stage), stage);
        for (const auto& p : study.points)
            rows.push_back({format_double(p.sigma_l2), format_double(p.v), stage});
        std::cerr << "variance-sweep: stage " << stage << " done\n";
    };

    run_stage("untrained");
    const long mid = std::min<long>(1000, cfg.comm_iterations);
    TrainSchedule sched = comm_schedule(cfg);
    sched.plateau_enabled = false;  // fixed stage boundaries
    if (mid > 0) {
        sched.iterations = mid;
        alternating_train(sys, channel, transport, sched, master.sub("comm-train"));
        run_stage(std::to_string(mid));
    }
    if (cfg.comm_iterations > mid) {
        sched.iterations = cfg.comm_iterations - mid;
        alternating_train(sys, channel, transport, sched, master.sub("comm-train-2"));
        run_stage("final");
    }
    emit_csv((dir / "variance.csv").string(), csv_schema::variance, rows);
    return 0;
}

inline int cmd_bler_vs_mse(const CliOptions& opt) {
    const ExperimentConfig cfg = resolve_config(opt);
    const auto dir = ensure_out_dir(cfg);
    BlerVsMseConfig sweep;
    sweep.comm = comm_params(cfg);
    sweep.schedule = comm_schedule(cfg);
    sweep.train_snr_db = cfg.comm_train_snr_db;
    sweep.eval_snr_db = cfg.comm_train_snr_db;
    sweep.eval_samples = cfg.eval_samples;
    sweep.sigma_l2_grid = cfg.sigma_l2_grid;
    sweep.seed = cfg.seed;
    std::cerr << "bler-vs-mse: " << sweep.sigma_l2_grid.size() + 1 << " training runs\n";
    const auto result = bler_vs_feedback_mse_sweep(sweep);
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : result)
        rows.push_back({format_double(r.sigma_l2), format_double(r.bler_noisy),
                        format_double(r.bler_perfect)});
    emit_csv((dir / "bler_vs_mse.csv").string(), csv_schema::bler_vs_mse, rows);
    return 0;
}

inline int cmd_full_pipeline(const CliOptions& opt) {
    const ExperimentConfig cfg = resolve_config(opt);
    const auto dir = ensure_out_dir(cfg);
    const Rng master(cfg.seed);

    // resolve baselines first so a bad codebook fails before any training
    std::optional<Codebook> cb;
    std::string agrell_label = "agrell";
    const bool baselines_apply = cfg.m == 256;
    if (baselines_apply && (!cfg.codebook_path.empty() || cfg.agrell_fallback)) {
        cb = resolve_codebook(cfg);
        if (cfg.codebook_path.empty()) agrell_label = "agrell_fallback";
    } else if (!baselines_apply) {
        std::cerr << "full-pipeline: M != 256, skipping the QPSK/Agrell baselines\n";
    } else {
        std::cerr << "full-pipeline: no codebook given; skipping the Agrell curve "
                     "(--codebook or --agrell-fallback adds it)\n";
    }

    std::cerr << "full-pipeline: training feedback system (" << to_string(cfg.channel) << ")\n";
    FeedbackSystem fb = make_feedback_system(feedback_params(cfg), Rng(cfg.seed));
    const FeedbackTrainResult fb_res = train_feedback(fb, cfg);
    save_feedback_system(fb, (dir / "feedback_model.txt").string());
    write_fb_log(dir / "train_feedback_log.csv", fb_res.log);

    std::cerr << "full-pipeline: training autoencoder through the learned feedback link\n";
    CommSystem sys_fb = make_comm_system(comm_params(cfg), Rng(cfg.seed));
    LearnedTransport learned(fb, cfg.comm_train_snr_db);
    const TrainResult res_fb = train_comm(sys_fb, learned, cfg);
    save_comm_system(sys_fb, (dir / "comm_model_feedback.txt").string());
    write_comm_log(dir / "train_comm_feedback_log.csv", res_fb.log, opt.timings);

    std::cerr << "full-pipeline: training the perfect-feedback reference\n";
    CommSystem sys_perfect = make_comm_system(comm_params(cfg), Rng(cfg.seed));
    PerfectTransport perfect;
    const TrainResult res_p = train_comm(sys_perfect, perfect, cfg);
    save_comm_system(sys_perfect, (dir / "comm_model_perfect.txt").string());
    write_comm_log(dir / "train_comm_perfect_log.csv", res_p.log, opt.timings);

    std::cerr << "full-pipeline: BLER sweep\n";
    std::vector<std::vector<std::string>> rows;
    for (double snr : cfg.eval_snr_grid) {
        rows.push_back(bler_row(
            snr, evaluate_bler(sys_fb, snr, cfg.eval_samples, master.sub("pipe-eval-fb")),
            "autoencoder_feedback"));
        rows.push_back(bler_row(
            snr, evaluate_bler(sys_perfect, snr, cfg.eval_samples, master.sub("pipe-eval-p")),
            "autoencoder_perfect"));
        if (baselines_apply)
            rows.push_back(bler_row(snr,
                                    evaluate_baseline_bler(DiscreteScheme::qpsk, nullptr,
                                                           cfg.channel, snr, cfg.eval_samples,
                                                           master.sub("pipe-eval-qpsk")),
                                    "qpsk"));
        if (cb)
            rows.push_back(bler_row(snr,
                                    evaluate_baseline_bler(DiscreteScheme::codebook, &*cb,
                                                           cfg.channel, snr, cfg.eval_samples,
                                                           master.sub("pipe-eval-agrell")),
                                    agrell_label));
    }
    emit_csv((dir / "bler.csv").string(), csv_schema::bler, rows);
    return 0;
}

}  // namespace cli_detail

// Entry point shared by the binary and the tests: argv-style arguments
// without the program name.
inline int run_cli(const std::vector<std::string>& args) {
    using namespace cli_detail;
    CLI::App app{"End-to-end autoencoders over unknown channels with a learned feedback link"};
    app.require_subcommand(1);

    struct Sub {
        CLI::App* cmd;
        CliOptions opt;
        int (*fn)(const CliOptions&);
    };
    std::vector<std::unique_ptr<Sub>> subs;
    auto add = [&](const std::string& name, const std::string& desc,
                   int (*fn)(const CliOptions&), bool takes_model, bool takes_scheme,
                   bool takes_fb_model) {
        auto sub = std::make_unique<Sub>();
        sub->cmd = app.add_subcommand(name, desc);
        sub->fn = fn;
        add_common_flags(sub->cmd, sub->opt);
        if (takes_model) sub->cmd->add_option("--model", sub->opt.model_path, "Saved model file");
        if (takes_scheme)
            sub->cmd->add_option("--scheme", sub->opt.scheme,
                                 "Baseline scheme (qpsk, agrell, analog)");
        if (takes_fb_model)
            sub->cmd->add_option("--feedback-model", sub->opt.feedback_model_path,
                                 "Saved feedback-system model (learned transport)");
        subs.push_back(std::move(sub));
    };

    add("train-comm", "Train the message autoencoder", cmd_train_comm, false, false, true);
    add("train-feedback", "Train the real-number feedback system", cmd_train_feedback, false,
        false, false);
    add("eval-bler", "Monte-Carlo BLER over an SNR grid", cmd_eval_bler, true, true, false);
    add("eval-mse", "Monte-Carlo MSE over an SNR grid", cmd_eval_mse, true, true, false);
    add("variance-sweep", "Gradient-estimator variance vs feedback noise", cmd_variance_sweep,
        false, false, false);
    add("bler-vs-mse", "Final BLER vs feedback-noise variance", cmd_bler_vs_mse, false, false,
        false);
    add("full-pipeline", "Feedback system, autoencoder through it, BLER sweep",
        cmd_full_pipeline, false, false, false);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    try {
        for (auto& sub : subs)
            if (sub->cmd->parsed()) return sub->fn(sub->opt);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

}  // namespace airgap
