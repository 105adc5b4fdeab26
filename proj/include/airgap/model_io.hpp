#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "airgap/autoencoder.hpp"
#include "airgap/errors.hpp"
#include "airgap/feedback.hpp"
#include "airgap/util.hpp"

namespace airgap {

// Versioned plain-text model format: a header line, system metadata, then per
// network a `net <name>` section with layer dims, activations and the flat
// decimal parameter list (shortest round-trip form, one value per line).
// Plain text keeps saved models diff-able.

namespace detail {

inline std::string read_line(std::istream& in, long& line_no) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("unexpected end of model file", line_no);
    ++line_no;
    return line;
}

inline void expect_token(std::istringstream& ss, const std::string& expected, long line_no) {
    std::string tok;
    ss >> tok;
    if (tok != expected)
        throw ParseError("expected '" + expected + "', got '" + tok + "'", line_no);
}

inline void save_mlp(std::ostream& out, const MlpNetwork& net, const std::string& name) {
    out << "net " << name << '\n';
    out << "dims";
    for (int d : net.dims()) out << ' ' << d;
    out << '\n';
    out << "acts";
    for (Activation a : net.activations()) out << ' ' << to_string(a);
    out << '\n';
    out << "params " << net.param_count() << '\n';
    for (Index i = 0; i < net.param_count(); ++i) out << format_double(net.params()(i)) << '\n';
}

inline MlpNetwork load_mlp(std::istream& in, const std::string& name, long& line_no) {
    {
        std::istringstream ss(read_line(in, line_no));
        expect_token(ss, "net", line_no);
        std::string got;
        ss >> got;
        if (got != name) throw ParseError("expected net '" + name + "', got '" + got + "'",
                                          line_no);
    }
    std::vector<int> dims;
    {
        std::istringstream ss(read_line(in, line_no));
        expect_token(ss, "dims", line_no);
        int d;
        while (ss >> d) dims.push_back(d);
    }
    std::vector<Activation> acts;
    {
        std::istringstream ss(read_line(in, line_no));
        expect_token(ss, "acts", line_no);
        std::string a;
        while (ss >> a) acts.push_back(activation_from_string(a));
    }
    MlpNetwork net(dims, acts);
    Index count = 0;
    {
        std::istringstream ss(read_line(in, line_no));
        expect_token(ss, "params", line_no);
        ss >> count;
    }
    if (count != net.param_count())
        throw ParseError("parameter count mismatch for net '" + name + "'", line_no);
    for (Index i = 0; i < count; ++i) {
        const std::string line = read_line(in, line_no);
        try {
            net.params()(i) = std::stod(line);
        } catch (const std::exception&) {
            throw ParseError("bad parameter value '" + line + "'", line_no);
        }
    }
    return net;
}

}  // namespace detail

inline void save_comm_system(const CommSystem& sys, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "airgap-model 1 comm\n";
    out << "channel " << to_string(sys.params.channel) << '\n';
    out << "m " << sys.params.m << '\n';
    out << "nc " << sys.params.nc << '\n';
    out << "sigma_c2 " << format_double(sys.params.sigma_c2) << '\n';
    out << "lr " << format_double(sys.params.lr) << '\n';
    detail::save_mlp(out, sys.tx.net(), "tx");
    detail::save_mlp(out, sys.rx.main_net(), "rx");
    if (sys.rx.has_rtn()) detail::save_mlp(out, sys.rx.est_net(), "rx_est");
    out << "end\n";
}

inline CommSystem load_comm_system(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open model file '" + path + "'");
    long line_no = 0;
    if (detail::read_line(in, line_no) != "airgap-model 1 comm")
        throw ParseError("not a comm model file", line_no);
    CommParams p;
    auto scalar_line = [&](const std::string& key) {
        std::istringstream ss(detail::read_line(in, line_no));
        detail::expect_token(ss, key, line_no);
        std::string v;
        ss >> v;
        return v;
    };
    const std::string chan = scalar_line("channel");
    if (chan == "awgn")
        p.channel = ChannelKind::awgn;
    else if (chan == "rbf")
        p.channel = ChannelKind::rbf;
    else
        throw ParseError("bad channel '" + chan + "'", line_no);
    p.m = std::stoi(scalar_line("m"));
    p.nc = std::stoi(scalar_line("nc"));
    p.sigma_c2 = std::stod(scalar_line("sigma_c2"));
    p.lr = std::stod(scalar_line("lr"));
    MlpNetwork tx_net = detail::load_mlp(in, "tx", line_no);
    MlpNetwork rx_net = detail::load_mlp(in, "rx", line_no);
    CommTransmitter tx(std::move(tx_net), p.m, p.nc);
    const Index tx_params = tx.net().param_count();
    const Index rx_params = rx_net.param_count();
    if (p.channel == ChannelKind::rbf) {
        MlpNetwork est = detail::load_mlp(in, "rx_est", line_no);
        const Index est_params = est.param_count();
        return CommSystem{p,
                          std::move(tx),
                          ReceiverStack(std::move(est), std::move(rx_net)),
                          Optimizer::adam(p.lr, tx_params),
                          Optimizer::adam(p.lr, rx_params),
                          Optimizer::adam(p.lr, est_params)};
    }
    return CommSystem{p,
                      std::move(tx),
                      ReceiverStack(std::move(rx_net)),
                      Optimizer::adam(p.lr, tx_params),
                      Optimizer::adam(p.lr, rx_params),
                      Optimizer{}};
}

inline void save_feedback_device(std::ostream& out, const FeedbackDevice& dev,
                                 const std::string& label, bool rtn) {
    out << "scale_" << label << ' ' << format_double(dev.tx.ema_scale()) << '\n';
    detail::save_mlp(out, dev.tx.net(), "tx_" + label);
    detail::save_mlp(out, dev.rx.main_net(), "rx_" + label);
    if (rtn) detail::save_mlp(out, dev.rx.est_net(), "rx_est_" + label);
}

inline void save_feedback_system(const FeedbackSystem& sys, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    const bool rtn = sys.params.channel == ChannelKind::rbf;
    out << "airgap-model 1 feedback\n";
    out << "channel " << to_string(sys.params.channel) << '\n';
    out << "nf " << sys.params.nf << '\n';
    out << "sigma_f2 " << format_double(sys.params.sigma_f2) << '\n';
    out << "lr " << format_double(sys.params.lr) << '\n';
    save_feedback_device(out, sys.a, "a", rtn);
    save_feedback_device(out, sys.b, "b", rtn);
    out << "end\n";
}

inline FeedbackDevice load_feedback_device(std::istream& in, const FeedbackParams& p,
                                           const std::string& label, long& line_no) {
    double scale = 0.0;
    {
        std::istringstream ss(detail::read_line(in, line_no));
        detail::expect_token(ss, "scale_" + label, line_no);
        ss >> scale;
    }
    MlpNetwork tx_net = detail::load_mlp(in, "tx_" + label, line_no);
    MlpNetwork rx_net = detail::load_mlp(in, "rx_" + label, line_no);
    FeedbackTransmitter tx(std::move(tx_net), p.nf);
    tx.set_ema_scale(scale);
    const Index tx_params = tx.net().param_count();
    const Index rx_params = rx_net.param_count();
    if (p.channel == ChannelKind::rbf) {
        MlpNetwork est = detail::load_mlp(in, "rx_est_" + label, line_no);
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

inline FeedbackSystem load_feedback_system(const std::string& path, std::uint64_t seed = 1) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open model file '" + path + "'");
    long line_no = 0;
    if (detail::read_line(in, line_no) != "airgap-model 1 feedback")
        throw ParseError("not a feedback model file", line_no);
    FeedbackParams p;
    auto scalar_line = [&](const std::string& key) {
        std::istringstream ss(detail::read_line(in, line_no));
        detail::expect_token(ss, key, line_no);
        std::string v;
        ss >> v;
        return v;
    };
    const std::string chan = scalar_line("channel");
    if (chan == "awgn")
        p.channel = ChannelKind::awgn;
    else if (chan == "rbf")
        p.channel = ChannelKind::rbf;
    else
        throw ParseError("bad channel '" + chan + "'", line_no);
    p.nf = std::stoi(scalar_line("nf"));
    p.sigma_f2 = std::stod(scalar_line("sigma_f2"));
    p.lr = std::stod(scalar_line("lr"));
    FeedbackDevice a = load_feedback_device(in, p, "a", line_no);
    FeedbackDevice b = load_feedback_device(in, p, "b", line_no);
    const Rng master(seed);
    return FeedbackSystem{p,
                          std::move(a),
                          std::move(b),
                          master.sub("fb-source-ab"),
                          master.sub("fb-source-ab"),
                          master.sub("fb-source-ba"),
                          master.sub("fb-source-ba")};
}

}  // namespace airgap
