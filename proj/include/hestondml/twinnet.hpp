#pragma once

// Feed-forward network with its mirrored adjoint ("twin") pass. The forward
// pass maps normalised inputs to a normalised price; the adjoint pass returns
// the input gradient of that price, and both are trained jointly.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hestondml/dataset.hpp"
#include "hestondml/errors.hpp"

namespace hestondml {

using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct NetworkSpec {
    int n_inputs = 8;
    int hidden_layers = 4;
    int neurons = 50;
    bool wide_deep = false;
    double dropout_rate = 0.0;  ///< 0 disables dropout

    int layer_count() const { return hidden_layers + 1; }
    int fan_in(int l) const { return l == 0 ? n_inputs : neurons; }
    int fan_out(int l) const { return l == hidden_layers ? 1 : neurons; }

    void validate() const {
        if (n_inputs < 1) throw ParameterError("NetworkSpec: n_inputs must be >= 1");
        if (hidden_layers < 1) throw ParameterError("NetworkSpec: hidden_layers must be >= 1");
        if (neurons < 1) throw ParameterError("NetworkSpec: neurons must be >= 1");
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
            throw ParameterError("NetworkSpec: dropout rate must lie in [0, 1)");
    }
    bool operator==(const NetworkSpec&) const = default;
};

/// Trainable parameters. The same shape holds gradients and optimiser moments.
struct Params {
    std::vector<RowMatrix> W;  // W[l]: fan_in x fan_out
    std::vector<RowVector> b;  // b[l]: 1 x fan_out
    RowMatrix wide;            // n_inputs x 1 when wide_deep, else empty

    static Params zeros_like(const Params& p) {
        Params z;
        for (const auto& w : p.W) z.W.push_back(RowMatrix::Zero(w.rows(), w.cols()));
        for (const auto& v : p.b) z.b.push_back(RowVector::Zero(v.cols()));
        z.wide = RowMatrix::Zero(p.wide.rows(), p.wide.cols());
        return z;
    }

    /// Calls f(param_block, other_blocks..., is_weight) for each block in a fixed order.
    template <class F, class... Rest>
    void for_each(F&& f, Rest&... rest) {
        for (std::size_t l = 0; l < W.size(); ++l) {
            f(W[l], rest.W[l]..., true);
            f(b[l], rest.b[l]..., false);
        }
        if (wide.size() > 0) f(wide, rest.wide..., true);
    }

    double squared_norm() const {
        double s = 0.0;
        for (std::size_t l = 0; l < W.size(); ++l) s += W[l].squaredNorm() + b[l].squaredNorm();
        return s + wide.squaredNorm();
    }
};

struct Network {
    NetworkSpec spec;
    Params params;

    std::size_t parameter_count() const {
        std::size_t n = static_cast<std::size_t>(params.wide.size());
        for (std::size_t l = 0; l < params.W.size(); ++l)
            n += static_cast<std::size_t>(params.W[l].size() + params.b[l].size());
        return n;
    }
};

/// Kaiming-normal weights (std sqrt(2 / fan_in)), biases uniform in
/// +-1/sqrt(fan_in), wide weights zero.
inline Network init_network(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    Network net{spec, {}};
    for (int l = 0; l < spec.layer_count(); ++l) {
        const int in = spec.fan_in(l), out = spec.fan_out(l);
        const double sd = std::sqrt(2.0 / in), lim = 1.0 / std::sqrt(static_cast<double>(in));
        RowMatrix W(in, out);
        for (Eigen::Index i = 0; i < W.size(); ++i) {
            // Box-Muller keeps the stream platform-independent, unlike std::normal_distribution.
            const double u1 = (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
            const double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            W.data()[i] = sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        }
        RowVector b(out);
        for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = lim * (2.0 * detail::uniform01(rng) - 1.0);
        net.params.W.push_back(std::move(W));
        net.params.b.push_back(std::move(b));
    }
    net.params.wide = spec.wide_deep ? RowMatrix::Zero(spec.n_inputs, 1) : RowMatrix(0, 0);
    return net;
}

namespace act {
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}
}  // namespace act

/// Activations kept from the forward pass (and the adjoint pass when run).
struct ForwardCache {
    std::vector<RowMatrix> a;      // a[0] = x; a[l] = softplus(z[l]) * mask[l] for hidden l
    std::vector<RowMatrix> z;      // z[l], l = 1..L (index 0 unused)
    std::vector<RowMatrix> s;      // sigmoid(z[l]) for hidden l
    std::vector<RowMatrix> mask;   // dropout masks (scaled) per hidden layer; empty when inactive
    std::vector<RowMatrix> zbar;   // adjoint of z[l], l = 1..L
    bool valid = false;
};

/// Dropout masks per hidden layer: Bernoulli(1-p) scaled by 1/(1-p).
struct DropoutState {
    std::mt19937_64 rng;
    explicit DropoutState(std::uint64_t seed) : rng(seed) {}
};

/// y = z^(L) (+ x W_wide). Pass a DropoutState to run in training mode.
inline RowMatrix forward(const Network& net, const RowMatrix& x, ForwardCache* cache = nullptr,
                         DropoutState* dropout = nullptr) {
    const auto& spec = net.spec;
    if (x.cols() != spec.n_inputs) throw ParameterError("forward: input width does not match the network");
    const int L = spec.layer_count();
    const bool drop = dropout != nullptr && spec.dropout_rate > 0.0;
    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c.a.assign(static_cast<std::size_t>(L), RowMatrix());
    c.z.assign(static_cast<std::size_t>(L) + 1, RowMatrix());
    c.s.assign(static_cast<std::size_t>(L), RowMatrix());
    c.mask.assign(drop ? static_cast<std::size_t>(L) : 0u, RowMatrix());
    c.zbar.clear();
    c.a[0] = x;
    for (int l = 1; l <= L; ++l) {
        const auto& W = net.params.W[static_cast<std::size_t>(l - 1)];
        const auto& b = net.params.b[static_cast<std::size_t>(l - 1)];
        RowMatrix z = c.a[static_cast<std::size_t>(l - 1)] * W;
        z.rowwise() += b;
        if (l < L) {
            RowMatrix a = z.unaryExpr([](double v) { return act::softplus(v); });
            c.s[static_cast<std::size_t>(l)] = z.unaryExpr([](double v) { return act::sigmoid(v); });
            if (drop) {
                const double keep = 1.0 - spec.dropout_rate;
                RowMatrix m(z.rows(), z.cols());
                for (Eigen::Index i = 0; i < m.size(); ++i)
                    m.data()[i] = detail::uniform01(dropout->rng) < keep ? 1.0 / keep : 0.0;
                a = a.cwiseProduct(m);
                c.mask[static_cast<std::size_t>(l)] = std::move(m);
            }
            c.a[static_cast<std::size_t>(l)] = std::move(a);
        }
        c.z[static_cast<std::size_t>(l)] = std::move(z);
    }
    RowMatrix y = c.z[static_cast<std::size_t>(L)];
    if (spec.wide_deep) y += x * net.params.wide;
    c.valid = true;
    return y;
}

/// dy/dx for every row, by the reverse sweep over the cached forward pass.
inline RowMatrix adjoint(const Network& net, ForwardCache& c) {
    const int L = net.spec.layer_count();
    if (!c.valid || static_cast<int>(c.z.size()) != L + 1 || c.a.empty())
        throw std::logic_error("adjoint: no forward cache for this network");
    const Eigen::Index n = c.a[0].rows();
    c.zbar.assign(static_cast<std::size_t>(L) + 1, RowMatrix());
    c.zbar[static_cast<std::size_t>(L)] = RowMatrix::Ones(n, 1);
    RowMatrix abar;
    for (int l = L; l >= 1; --l) {
        const auto& W = net.params.W[static_cast<std::size_t>(l - 1)];
        abar = c.zbar[static_cast<std::size_t>(l)] * W.transpose();
        if (l - 1 >= 1) {
            RowMatrix zb = abar.cwiseProduct(c.s[static_cast<std::size_t>(l - 1)]);
            if (!c.mask.empty()) zb = zb.cwiseProduct(c.mask[static_cast<std::size_t>(l - 1)]);
            c.zbar[static_cast<std::size_t>(l - 1)] = std::move(zb);
        }
    }
    if (net.spec.wide_deep) abar.rowwise() += RowVector(net.params.wide.col(0).transpose());
    return abar;
}

/// Differential-penalty setup: lambda and the per-column weights 1/||Xbar_j||^2.
struct DifferentialWeights {
    double lambda = 1.0;
    RowVector column_weight;  // 1 x n_inputs

    static DifferentialWeights from_stats(const NormalisationStats& s, double lambda) {
        DifferentialWeights w{lambda, RowVector(static_cast<Eigen::Index>(kNumInputs))};
        for (std::size_t j = 0; j < kNumInputs; ++j) w.column_weight[static_cast<Eigen::Index>(j)] = 1.0 / s.xbar_norm2[j];
        return w;
    }
};

/// MSE(y) + (lambda/m) sum_i sum_j c_j (xbar_hat_ij - xbar_ij)^2.
inline double combined_loss(const RowMatrix& y_hat, const RowMatrix& xbar_hat, const RowMatrix& y,
                            const RowMatrix& xbar, const DifferentialWeights& w) {
    const double m = static_cast<double>(y.rows());
    double loss = (y_hat - y).squaredNorm() / m;
    if (w.lambda != 0.0) {
        const RowMatrix d = xbar_hat - xbar;
        loss += w.lambda / m * (d.array().square().rowwise() * w.column_weight.array()).sum();
    }
    return loss;
}

struct LossAndGradient {
    double loss = 0.0;
    Params grad;
};

/// Loss on a batch and its exact gradient with respect to every parameter,
/// obtained by reverse-mode differentiation through both the forward and
/// the adjoint graph. With value_only the adjoint graph is never built.
inline LossAndGradient loss_and_gradient(const Network& net, const RowMatrix& X, const RowMatrix& Y,
                                         const RowMatrix& Xbar, const DifferentialWeights& w,
                                         DropoutState* dropout = nullptr, bool value_only = false) {
    const int L = net.spec.layer_count();
    const auto sz = [](int l) { return static_cast<std::size_t>(l); };
    const double m = static_cast<double>(X.rows());
    ForwardCache c;
    const RowMatrix y_hat = forward(net, X, &c, dropout);
    LossAndGradient out{0.0, Params::zeros_like(net.params)};
    Params& G = out.grad;

    std::vector<RowMatrix> Gz(sz(L) + 1);  // dLoss/dz[l]
    const RowMatrix Gy = 2.0 / m * (y_hat - Y);
    out.loss = (y_hat - Y).squaredNorm() / m;

    if (!value_only) {
        const RowMatrix xbar_hat = adjoint(net, c);
        const RowMatrix diff = xbar_hat - Xbar;
        out.loss += w.lambda / m * (diff.array().square().rowwise() * w.column_weight.array()).sum();
        // Gradient flowing into the adjoint output abar[0].
        RowMatrix Gabar = (2.0 * w.lambda / m) * (diff.array().rowwise() * w.column_weight.array()).matrix();
        if (net.spec.wide_deep) G.wide += Gabar.colwise().sum().transpose();
        // The adjoint ran l = L..1; its reverse runs l = 1..L.
        for (int l = 1; l <= L; ++l) {
            const auto& W = net.params.W[sz(l - 1)];
            const RowMatrix& zbar = c.zbar[sz(l)];
            // abar[l-1] = zbar[l] W^T
            G.W[sz(l - 1)] += Gabar.transpose() * zbar;
            if (l == L) break;  // zbar[L] is constant
            const RowMatrix Gzbar = Gabar * W;
            // zbar[l] = abar[l] * mask * s(z[l]); abar[l] = zbar[l+1] W[l+1]^T
            const RowMatrix abar_l = c.zbar[sz(l + 1)] * net.params.W[sz(l)].transpose();
            RowMatrix ms = c.s[sz(l)];
            if (!c.mask.empty()) ms = ms.cwiseProduct(c.mask[sz(l)]);
            Gabar = Gzbar.cwiseProduct(ms);
            RowMatrix dz = Gzbar.cwiseProduct(abar_l).cwiseProduct(
                c.s[sz(l)].unaryExpr([](double s) { return s * (1.0 - s); }));
            if (!c.mask.empty()) dz = dz.cwiseProduct(c.mask[sz(l)]);
            Gz[sz(l)] = std::move(dz);
        }
    }

    // Standard backpropagation through the forward graph.
    if (net.spec.wide_deep) G.wide += X.transpose() * Gy;
    RowMatrix g = Gz[sz(L)].size() ? RowMatrix(Gz[sz(L)] + Gy) : Gy;
    for (int l = L; l >= 1; --l) {
        G.W[sz(l - 1)] += c.a[sz(l - 1)].transpose() * g;
        G.b[sz(l - 1)] += g.colwise().sum();
        if (l == 1) break;
        RowMatrix ga = g * net.params.W[sz(l - 1)].transpose();
        RowMatrix ms = c.s[sz(l - 1)];
        if (!c.mask.empty()) ms = ms.cwiseProduct(c.mask[sz(l - 1)]);
        g = ga.cwiseProduct(ms);
        if (Gz[sz(l - 1)].size()) g += Gz[sz(l - 1)];
    }
    return out;
}

}  // namespace hestondml
