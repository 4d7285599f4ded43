#pragma once

// Text checkpoint container: named sections, explicit dimensions and
// 17-digit decimals, so a reload reproduces predictions bit for bit.

#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include "hestondml/io.hpp"
#include "hestondml/training.hpp"

namespace hestondml {

inline constexpr const char* kCheckpointMagic = "hestondml-checkpoint 1";

namespace detail {

inline void write_row(std::ostream& out, const double* v, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) out << (i ? " " : "") << io::fmt17(v[i]);
    out << '\n';
}

inline void write_matrix(std::ostream& out, const std::string& name, const RowMatrix& m) {
    out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) write_row(out, m.row(r).data(), m.cols());
}

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    std::string word() {
        std::string w;
        if (!(in_ >> w)) throw FormatError("checkpoint: unexpected end of file");
        return w;
    }
    void expect(const std::string& w) {
        const auto got = word();
        if (got != w) throw FormatError("checkpoint: expected '" + w + "', found '" + got + "'");
    }
    double number() { return io::to_double(word(), "checkpoint"); }
    long integer() {
        const double v = number();
        if (v != static_cast<double>(static_cast<long>(v))) throw FormatError("checkpoint: expected an integer");
        return static_cast<long>(v);
    }
    double keyed(const std::string& key) {
        expect(key);
        return number();
    }
    template <class Array>
    void keyed_array(const std::string& key, Array& a) {
        expect(key);
        for (auto& v : a) v = number();
    }
    RowMatrix matrix(const std::string& name) {
        expect(name);
        const long r = integer(), c = integer();
        if (r < 0 || c < 0 || r * c > 100000000) throw FormatError("checkpoint: bad dimensions for " + name);
        RowMatrix m(r, c);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = number();
        return m;
    }

private:
    std::istream& in_;
};

}  // namespace detail

inline void save_checkpoint(std::ostream& out, const NetworkCheckpoint& cp) {
    const auto& s = cp.net.spec;
    out << kCheckpointMagic << "\n[spec]\n"
        << "n_inputs " << s.n_inputs << "\nhidden_layers " << s.hidden_layers << "\nneurons " << s.neurons
        << "\nwide_deep " << (s.wide_deep ? 1 : 0) << "\ndropout_rate " << io::fmt17(s.dropout_rate) << '\n';
    const auto& st = cp.stats;
    out << "[normalisation]\n";
    auto arr = [&](const char* key, const Vec8& a) {
        out << key << ' ';
        detail::write_row(out, a.data(), static_cast<Eigen::Index>(a.size()));
    };
    arr("x_mean", st.x_mean);
    arr("x_std", st.x_std);
    out << "y_mean " << io::fmt17(st.y_mean) << "\ny_std " << io::fmt17(st.y_std) << '\n';
    arr("xbar_scale", st.xbar_scale);
    arr("xbar_norm2", st.xbar_norm2);
    const auto& m = cp.meta;
    out << "[training]\n"
        << "epochs_run " << m.epochs_run << "\nfinal_train_loss " << io::fmt17(m.final_train_loss)
        << "\nfinal_val_loss " << io::fmt17(m.final_val_loss) << "\nbest_val_loss " << io::fmt17(m.best_val_loss)
        << "\nbest_epoch " << m.best_epoch << "\nseed " << m.seed << "\nlambda " << io::fmt17(m.lambda) << '\n';
    for (std::size_t l = 0; l < cp.net.params.W.size(); ++l) {
        out << "[layer " << l + 1 << "]\n";
        detail::write_matrix(out, "W", cp.net.params.W[l]);
        detail::write_matrix(out, "b", cp.net.params.b[l]);
    }
    if (s.wide_deep) {
        out << "[wide]\n";
        detail::write_matrix(out, "W", cp.net.params.wide);
    }
    out << "[end]\n";
}

inline NetworkCheckpoint load_checkpoint(std::istream& in) {
    std::string magic;
    std::getline(in, magic);
    if (io::trim(magic) != kCheckpointMagic) throw FormatError("checkpoint: not a hestondml checkpoint");
    detail::Reader rd(in);
    NetworkCheckpoint cp;
    auto& s = cp.net.spec;
    rd.expect("[spec]");
    s.n_inputs = static_cast<int>(rd.keyed("n_inputs"));
    s.hidden_layers = static_cast<int>(rd.keyed("hidden_layers"));
    s.neurons = static_cast<int>(rd.keyed("neurons"));
    s.wide_deep = rd.keyed("wide_deep") != 0.0;
    s.dropout_rate = rd.keyed("dropout_rate");
    s.validate();
    if (s.n_inputs != static_cast<int>(kNumInputs)) throw FormatError("checkpoint: expected 8 inputs");

    auto& st = cp.stats;
    rd.expect("[normalisation]");
    rd.keyed_array("x_mean", st.x_mean);
    rd.keyed_array("x_std", st.x_std);
    st.y_mean = rd.keyed("y_mean");
    st.y_std = rd.keyed("y_std");
    rd.keyed_array("xbar_scale", st.xbar_scale);
    rd.keyed_array("xbar_norm2", st.xbar_norm2);
    st.validate();

    auto& m = cp.meta;
    rd.expect("[training]");
    m.epochs_run = static_cast<int>(rd.keyed("epochs_run"));
    m.final_train_loss = rd.keyed("final_train_loss");
    m.final_val_loss = rd.keyed("final_val_loss");
    m.best_val_loss = rd.keyed("best_val_loss");
    m.best_epoch = static_cast<int>(rd.keyed("best_epoch"));
    rd.expect("seed");
    m.seed = std::stoull(rd.word());
    m.lambda = rd.keyed("lambda");

    for (int l = 0; l < s.layer_count(); ++l) {
        rd.expect("[layer");
        rd.expect(std::to_string(l + 1) + "]");
        RowMatrix W = rd.matrix("W");
        RowMatrix b = rd.matrix("b");
        if (W.rows() != s.fan_in(l) || W.cols() != s.fan_out(l) || b.rows() != 1 || b.cols() != s.fan_out(l))
            throw FormatError("checkpoint: layer " + std::to_string(l + 1) + " dimensions do not match the network architecture");
        cp.net.params.W.push_back(std::move(W));
        cp.net.params.b.push_back(RowVector(b.row(0)));
    }
    if (s.wide_deep) {
        rd.expect("[wide]");
        cp.net.params.wide = rd.matrix("W");
        if (cp.net.params.wide.rows() != s.n_inputs || cp.net.params.wide.cols() != 1)
            throw FormatError("checkpoint: wide layer dimensions do not match the network architecture");
    } else {
        cp.net.params.wide = RowMatrix(0, 0);
    }
    rd.expect("[end]");
    return cp;
}

inline void save_checkpoint(const std::string& path, const NetworkCheckpoint& cp) {
    auto out = io::open_out(path);
    save_checkpoint(out, cp);
    if (!out) throw FormatError("failed writing '" + path + "'");
}

inline NetworkCheckpoint load_checkpoint(const std::string& path) {
    auto in = io::open_in(path);
    return load_checkpoint(in);
}

}  // namespace hestondml
