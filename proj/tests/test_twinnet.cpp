#include <gtest/gtest.h>

#include <random>

#include "hestondml/twinnet.hpp"

using namespace hestondml;

namespace {

RowMatrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N(0.0, scale);
    RowMatrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = N(rng);
    return m;
}

// Network with 2 inputs and a single hidden layer of 2 neurons, set by hand.
Network tiny_network() {
    NetworkSpec spec;
    spec.n_inputs = 2;
    spec.hidden_layers = 1;
    spec.neurons = 2;
    Network net = init_network(spec, 0);
    net.params.W[0] << 0.5, -1.0, 0.25, 2.0;
    net.params.b[0] << 0.1, -0.2;
    net.params.W[1] << 1.5, -0.5;
    net.params.b[1] << 0.3;
    return net;
}

DifferentialWeights weights(Eigen::Index n, double lambda, std::uint64_t seed) {
    DifferentialWeights w{lambda, RowVector(n)};
    std::mt19937_64 rng(seed);
    for (Eigen::Index j = 0; j < n; ++j) w.column_weight[j] = 0.5 + detail::uniform01(rng);
    return w;
}

// Central differences of the loss in every parameter, compared with the
// reverse-mode gradient.
void check_parameter_gradient(Network net, const RowMatrix& X, const RowMatrix& Y, const RowMatrix& Xbar,
                              const DifferentialWeights& w, std::optional<DropoutState> drop = std::nullopt) {
    auto loss_at = [&](const Network& n) {
        std::optional<DropoutState> d = drop;
        return loss_and_gradient(n, X, Y, Xbar, w, d ? &*d : nullptr).loss;
    };
    std::optional<DropoutState> d0 = drop;
    const auto lg = loss_and_gradient(net, X, Y, Xbar, w, d0 ? &*d0 : nullptr);
    Params grad = lg.grad;
    double worst = 0.0;
    net.params.for_each(
        [&](auto& block, auto& g, bool) {
            for (Eigen::Index i = 0; i < block.size(); ++i) {
                const double keep = block.data()[i];
                const double h = 1e-6 * std::max(1.0, std::abs(keep));
                block.data()[i] = keep + h;
                const double up = loss_at(net);
                block.data()[i] = keep - h;
                const double dn = loss_at(net);
                block.data()[i] = keep;
                const double fd = (up - dn) / (2.0 * h);
                worst = std::max(worst, std::abs(g.data()[i] - fd) / std::max(std::abs(fd), 1e-2));
            }
        },
        grad);
    EXPECT_LT(worst, 1e-5);
}

}  // namespace

TEST(TwinNet, ZeroWeightsGiveTheOutputBias) {
    NetworkSpec spec;
    Network net = init_network(spec, 1);
    for (auto& W : net.params.W) W.setZero();
    for (auto& b : net.params.b) b.setZero();
    net.params.b.back()[0] = 0.37;
    const RowMatrix x = random_matrix(5, 8, 2);
    ForwardCache c;
    const RowMatrix y = forward(net, x, &c);
    for (Eigen::Index i = 0; i < 5; ++i) EXPECT_EQ(y(i, 0), 0.37);
    EXPECT_EQ(adjoint(net, c).cwiseAbs().maxCoeff(), 0.0);
}

TEST(TwinNet, HandComputedForwardAndAdjoint) {
    const Network net = tiny_network();
    RowMatrix x(1, 2);
    x << 1.0, -0.5;
    ForwardCache c;
    const RowMatrix y = forward(net, x, &c);
    const RowMatrix g = adjoint(net, c);
    EXPECT_NEAR(y(0, 0), 1.6853419719218892, 1e-15);
    EXPECT_NEAR(g(0, 0), 0.512300122950832, 1e-15);
    EXPECT_NEAR(g(0, 1), 0.13146195007580963, 1e-15);
}

TEST(TwinNet, SoftplusAndSigmoidAreStable) {
    EXPECT_NEAR(act::softplus(0.0), std::log(2.0), 1e-16);
    EXPECT_EQ(act::softplus(800.0), 800.0);
    EXPECT_NEAR(act::softplus(-800.0), 0.0, 1e-300);
    EXPECT_EQ(act::sigmoid(0.0), 0.5);
    EXPECT_EQ(act::sigmoid(-800.0), 0.0);
    EXPECT_EQ(act::sigmoid(800.0), 1.0);
}

TEST(TwinNet, AdjointMatchesFiniteDifferences) {
    for (bool wide : {false, true}) {
        NetworkSpec spec;
        spec.wide_deep = wide;
        Network net = init_network(spec, 11);
        if (wide) net.params.wide = random_matrix(8, 1, 12, 0.3);
        const RowMatrix x = random_matrix(20, 8, 13);
        ForwardCache c;
        forward(net, x, &c);
        const RowMatrix g = adjoint(net, c);
        for (Eigen::Index j = 0; j < 8; ++j) {
            RowMatrix up = x, dn = x;
            up.col(j).array() += 1e-6;
            dn.col(j).array() -= 1e-6;
            const RowMatrix fd = (forward(net, up) - forward(net, dn)) / 2e-6;
            for (Eigen::Index i = 0; i < 20; ++i)
                EXPECT_LT(std::abs(g(i, j) - fd(i, 0)), 1e-5 * std::max(1.0, std::abs(fd(i, 0))));
        }
    }
}

TEST(TwinNet, AdjointWithoutForwardCacheIsALogicError) {
    const Network net = init_network(NetworkSpec{}, 1);
    ForwardCache empty;
    EXPECT_THROW(adjoint(net, empty), std::logic_error);
}

TEST(TwinNet, BatchRowsAreIndependent) {
    const Network net = init_network(NetworkSpec{}, 4);
    const RowMatrix x = random_matrix(6, 8, 5);
    const RowMatrix y = forward(net, x);
    for (Eigen::Index i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(forward(net, x.row(i)).value(), y(i, 0));
}

TEST(TwinNet, LinearWhenDeepPartIsZero) {
    NetworkSpec spec;
    spec.wide_deep = true;
    Network net = init_network(spec, 3);
    for (auto& W : net.params.W) W.setZero();
    for (auto& b : net.params.b) b.setZero();
    net.params.wide = random_matrix(8, 1, 6);
    const RowMatrix x = random_matrix(4, 8, 7);
    ForwardCache c;
    const RowMatrix y = forward(net, x, &c);
    const RowMatrix g = adjoint(net, c);
    for (Eigen::Index i = 0; i < 4; ++i) {
        EXPECT_NEAR(y(i, 0), (x.row(i) * net.params.wide)(0, 0), 1e-14);
        for (Eigen::Index j = 0; j < 8; ++j) EXPECT_EQ(g(i, j), net.params.wide(j, 0));
    }
}

TEST(TwinNet, InitialisationShapesAndScale) {
    NetworkSpec spec;
    spec.neurons = 400;
    spec.hidden_layers = 2;
    const Network net = init_network(spec, 8);
    ASSERT_EQ(net.params.W.size(), 3u);
    EXPECT_EQ(net.params.W[0].rows(), 8);
    EXPECT_EQ(net.params.W[0].cols(), 400);
    EXPECT_EQ(net.params.W[2].cols(), 1);
    const auto& W = net.params.W[1];
    const double sd = std::sqrt(W.squaredNorm() / static_cast<double>(W.size()));
    EXPECT_NEAR(sd, std::sqrt(2.0 / 400.0), 0.01 * std::sqrt(2.0 / 400.0));
    EXPECT_LE(net.params.b[1].cwiseAbs().maxCoeff(), 1.0 / std::sqrt(400.0));
    EXPECT_EQ(init_network(spec, 8).params.W[1], W);
    EXPECT_EQ(net.parameter_count(), 8u * 400 + 400 + 400 * 400 + 400 + 400 + 1);
}

TEST(TwinNet, SpecValidation) {
    NetworkSpec s;
    s.dropout_rate = 1.0;
    EXPECT_THROW(init_network(s, 0), ParameterError);
    s = {};
    s.hidden_layers = 0;
    EXPECT_THROW(init_network(s, 0), ParameterError);
    EXPECT_THROW(forward(init_network(NetworkSpec{}, 0), RowMatrix::Zero(2, 7)), ParameterError);
}

TEST(Loss, HandComputedCombinedLoss) {
    RowMatrix yh(2, 1), y = RowMatrix::Zero(2, 1), xh(2, 2), xb = RowMatrix::Zero(2, 2);
    yh << 1.0, 2.0;
    xh << 1.0, 0.0, 0.0, 1.0;
    DifferentialWeights w{0.5, RowVector(2)};
    w.column_weight << 1.0, 2.0;
    // MSE 2.5 plus 0.5 / 2 * (1 * 1 + 2 * 1).
    EXPECT_DOUBLE_EQ(combined_loss(yh, xh, y, xb, w), 3.25);
}

TEST(Loss, ZeroLambdaIsPlainMse) {
    const Network net = init_network(NetworkSpec{}, 21);
    const RowMatrix X = random_matrix(30, 8, 22), Y = random_matrix(30, 1, 23), Xbar = random_matrix(30, 8, 24);
    const auto w = weights(8, 0.0, 25);
    const double mse = (forward(net, X) - Y).squaredNorm() / 30.0;
    EXPECT_NEAR(loss_and_gradient(net, X, Y, Xbar, w).loss, mse, 1e-14);
    const auto a = loss_and_gradient(net, X, Y, Xbar, w);
    const auto b = loss_and_gradient(net, X, Y, Xbar, w, nullptr, true);
    for (std::size_t l = 0; l < a.grad.W.size(); ++l) EXPECT_LT((a.grad.W[l] - b.grad.W[l]).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Loss, ReportedLossEqualsCombinedLoss) {
    const Network net = init_network(NetworkSpec{}, 31);
    const RowMatrix X = random_matrix(16, 8, 32), Y = random_matrix(16, 1, 33), Xbar = random_matrix(16, 8, 34);
    const auto w = weights(8, 0.7, 35);
    ForwardCache c;
    const RowMatrix yh = forward(net, X, &c);
    const RowMatrix xh = adjoint(net, c);
    EXPECT_NEAR(loss_and_gradient(net, X, Y, Xbar, w).loss, combined_loss(yh, xh, Y, Xbar, w), 1e-13);
}

TEST(Loss, ParameterGradientMatchesFiniteDifferences) {
    NetworkSpec spec;
    spec.hidden_layers = 3;
    spec.neurons = 7;
    const Network net = init_network(spec, 41);
    const RowMatrix X = random_matrix(12, 8, 42), Y = random_matrix(12, 1, 43), Xbar = random_matrix(12, 8, 44);
    check_parameter_gradient(net, X, Y, Xbar, weights(8, 1.0, 45));
}

TEST(Loss, WideAndDeepGradientMatchesFiniteDifferences) {
    NetworkSpec spec;
    spec.hidden_layers = 2;
    spec.neurons = 6;
    spec.wide_deep = true;
    Network net = init_network(spec, 51);
    net.params.wide = random_matrix(8, 1, 52, 0.5);
    const RowMatrix X = random_matrix(10, 8, 53), Y = random_matrix(10, 1, 54), Xbar = random_matrix(10, 8, 55);
    check_parameter_gradient(net, X, Y, Xbar, weights(8, 2.0, 56));
}

TEST(Dropout, ZeroRateIsTheIdentity) {
    const Network net = init_network(NetworkSpec{}, 61);
    const RowMatrix X = random_matrix(9, 8, 62);
    DropoutState d(63);
    EXPECT_EQ(forward(net, X, nullptr, &d), forward(net, X));
}

TEST(Dropout, MaskedAdjointMatchesFiniteDifferences) {
    NetworkSpec spec;
    spec.hidden_layers = 2;
    spec.neurons = 20;
    spec.dropout_rate = 0.3;
    const Network net = init_network(spec, 71);
    const RowMatrix x = random_matrix(5, 8, 72);
    const DropoutState seed_state(73);
    DropoutState d = seed_state;
    ForwardCache c;
    forward(net, x, &c, &d);
    ASSERT_FALSE(c.mask.empty());
    const RowMatrix g = adjoint(net, c);
    for (Eigen::Index j = 0; j < 8; ++j) {
        RowMatrix up = x, dn = x;
        up.col(j).array() += 1e-6;
        dn.col(j).array() -= 1e-6;
        DropoutState du = seed_state, dd = seed_state;
        const RowMatrix fd = (forward(net, up, nullptr, &du) - forward(net, dn, nullptr, &dd)) / 2e-6;
        for (Eigen::Index i = 0; i < 5; ++i) EXPECT_LT(std::abs(g(i, j) - fd(i, 0)), 1e-5 * std::max(1.0, std::abs(fd(i, 0))));
    }
}

TEST(Dropout, MaskedParameterGradientMatchesFiniteDifferences) {
    NetworkSpec spec;
    spec.hidden_layers = 2;
    spec.neurons = 6;
    spec.dropout_rate = 0.25;
    const Network net = init_network(spec, 81);
    const RowMatrix X = random_matrix(8, 8, 82), Y = random_matrix(8, 1, 83), Xbar = random_matrix(8, 8, 84);
    check_parameter_gradient(net, X, Y, Xbar, weights(8, 1.0, 85), DropoutState(86));
}

TEST(Dropout, MasksCarryInverseKeepScaling) {
    NetworkSpec spec;
    spec.dropout_rate = 0.5;
    spec.neurons = 200;
    const Network net = init_network(spec, 91);
    DropoutState d(92);
    ForwardCache c;
    forward(net, random_matrix(50, 8, 93), &c, &d);
    const auto& m = c.mask[1];
    std::size_t kept = 0;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        EXPECT_TRUE(m.data()[i] == 0.0 || m.data()[i] == 2.0);
        kept += m.data()[i] != 0.0;
    }
    EXPECT_NEAR(static_cast<double>(kept) / static_cast<double>(m.size()), 0.5, 0.02);
}
