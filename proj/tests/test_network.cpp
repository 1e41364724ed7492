#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracle.hpp"
#include "quirk/network.hpp"

using namespace quirk;
using std::numbers::pi;

namespace {

Model make_model(const std::vector<std::size_t>& widths, std::size_t dr_layers, bool dense, std::uint64_t seed) {
    Model m = Model::initialize(NetworkSpec::from_widths(widths, dr_layers, dense, seed));
    m.input_norm.assign(widths.front(), FeatureRange{0.0, 1.0});
    return m;
}

void zero_angles(Model& m) {
    for (auto& lp : m.layers)
        for (auto& e : lp.edges) std::fill(e.thetas.begin(), e.thetas.end(), 0.0);
}

// Whole-network forward pass assembled from the dense-matrix edge oracle and
// the rescale written out by hand; inputs are already in [0, pi].
double oracle_forward(const std::vector<double>& x, const Model& m) {
    std::vector<double> act = x;
    double last = 0.0;
    for (std::size_t l = 0; l < m.spec.layers.size(); ++l) {
        const auto& ls = m.spec.layers[l];
        std::vector<double> sums(ls.units, 0.0);
        std::vector<std::size_t> alive(ls.units, 0);
        for (std::size_t i = 0; i < ls.fan_in; ++i)
            for (std::size_t u = 0; u < ls.units; ++u)
                if (m.layers[l].active[i * ls.units + u]) {
                    sums[u] += oracle::dr_value(act[i], m.layers[l].edges[i * ls.units + u]);
                    ++alive[u];
                }
        if (l + 1 == m.spec.layers.size()) {
            last = sums[0];
            break;
        }
        act.assign(ls.units, 0.0);
        for (std::size_t u = 0; u < ls.units; ++u)
            if (alive[u] > 0)
                act[u] = std::clamp(((sums[u] / static_cast<double>(alive[u])) + (ls.rescale_bias ? 0.0 : 1.0)) / 2.0 * pi,
                                    0.0, pi);
    }
    return m.spec.dense_head ? m.dense_w * last + m.dense_b : last;
}

double half_mse(const Model& m, const std::vector<double>& xs, const std::vector<double>& ys) {
    const std::size_t dim = m.spec.input_dim;
    double acc = 0.0;
    for (std::size_t r = 0; r < ys.size(); ++r) {
        const double y = network_forward(std::span(xs).subspan(r * dim, dim), m);
        acc += (y - ys[r]) * (y - ys[r]);
    }
    return 0.5 * acc / static_cast<double>(ys.size());
}

void random_rows(Rng& rng, std::size_t rows, std::size_t dim, std::vector<double>& xs, std::vector<double>& ys) {
    xs.resize(rows * dim);
    ys.resize(rows);
    for (auto& v : xs) v = rng.uniform(0.02, 0.98);
    for (auto& v : ys) v = rng.uniform(-1.0, 1.0);
}

} // namespace

TEST(Rescale, Examples) {
    for (std::size_t n : {1, 2, 3, 7}) {
        const double b = static_cast<double>(n);
        EXPECT_DOUBLE_EQ(rescale(b, n, false), pi);
        EXPECT_DOUBLE_EQ(rescale(-b, n, false), 0.0);
        EXPECT_DOUBLE_EQ(rescale(0.0, n, false), pi / 2);
    }
    EXPECT_DOUBLE_EQ(rescale(1.0, 1, true), pi / 2);
    EXPECT_THROW(rescale(0.0, 0, false), InvalidInput);
}

TEST(Rescale, ClampsOutOfRange) {
    diagnostics().reset();
    EXPECT_DOUBLE_EQ(rescale(5.0, 2, false), pi);
    EXPECT_DOUBLE_EQ(rescale(-3.0, 1, true), 0.0);
    EXPECT_EQ(diagnostics().clamped_rescale_inputs.load(), 2U);
    // With b = 1 a negative sum lands below 0 and is held at the domain edge without counting.
    EXPECT_DOUBLE_EQ(rescale(-0.5, 1, true), 0.0);
    EXPECT_EQ(diagnostics().clamped_rescale_inputs.load(), 2U);
}

TEST(LayerForward, ZeroAngleExamples) {
    Model m = make_model({2, 3, 1}, 1, false, 0);
    zero_angles(m);
    const std::vector<double> zeros{0.0, 0.0}, mixed{0.0, pi};
    for (double v : layer_forward(zeros, m, 0)) EXPECT_NEAR(v, 2.0, 1e-15);
    for (double v : layer_forward(mixed, m, 0)) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(LayerForward, RandomLayerMatchesPerEdgeOracle) {
    Model m = make_model({3, 4, 1}, 3, false, 11);
    Rng rng(11);
    for (int k = 0; k < 20; ++k) {
        std::vector<double> x{rng.uniform(0, pi), rng.uniform(0, pi), rng.uniform(0, pi)};
        const auto out = layer_forward(x, m, 0);
        for (std::size_t u = 0; u < 4; ++u) {
            double want = 0.0;
            for (std::size_t i = 0; i < 3; ++i) want += oracle::dr_value(x[i], m.edge({0, i, u}));
            EXPECT_NEAR(out[u], want, 1e-12);
        }
    }
}

TEST(LayerForward, WrongWidth) {
    Model m = make_model({2, 2, 1}, 1, false, 0);
    const std::vector<double> x{0.1, 0.2, 0.3};
    EXPECT_THROW(layer_forward(x, m, 0), ShapeError);
}

TEST(NetworkForward, SingleEdgeIsCosine) {
    Model m = make_model({1, 1}, 1, false, 0);
    zero_angles(m);
    for (double x = 0.0; x <= 1.0; x += 0.1) {
        const std::vector<double> raw{x};
        EXPECT_NEAR(network_forward(raw, m), std::cos(x * pi), 1e-14);
    }
}

TEST(NetworkForward, HandTracedZeroNetwork) {
    // Layer 0 gives 2 per unit, rescale(2, 2) = pi, then each output edge gives cos(pi).
    Model m = make_model({2, 2, 1}, 1, false, 0);
    zero_angles(m);
    const std::vector<double> raw{0.0, 0.0};
    EXPECT_NEAR(network_forward(raw, m), -2.0, 1e-14);
}

TEST(NetworkForward, MatchesCompositionOracle) {
    Rng rng(12);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Model m = make_model({2, 3, 2, 1}, 1 + seed % 4, seed % 2 == 0, seed);
        m.dense_w = 1.7;
        m.dense_b = -0.3;
        m.spec.layers[1].rescale_bias = seed % 3 == 0;
        std::vector<double> x{rng.uniform(0, pi), rng.uniform(0, pi)};
        EXPECT_NEAR(forward_normalized(x, m), oracle_forward(x, m), 1e-12);
    }
}

TEST(NetworkForward, PrunedEdgeUsesSurvivingFanIn) {
    Model m = make_model({3, 2, 1}, 2, false, 5);
    m.layers[0].active[m.edge_index({0, 1, 0})] = 0;
    EXPECT_EQ(m.active_fan_in(0, 0), 2U);
    Rng rng(13);
    for (int k = 0; k < 10; ++k) {
        std::vector<double> x{rng.uniform(0, pi), rng.uniform(0, pi), rng.uniform(0, pi)};
        EXPECT_NEAR(forward_normalized(x, m), oracle_forward(x, m), 1e-12);
    }
}

TEST(NetworkForward, RangeProperty) {
    Rng rng(14);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Model m = make_model({2, 3, 2, 1}, 1 + seed % 5, false, seed);
        std::vector<double> x{rng.uniform(0, pi), rng.uniform(0, pi)};
        const auto t = trace_normalized(x, m);
        for (std::size_t l = 0; l < t.unit_sums.size(); ++l) {
            const double bound = static_cast<double>(m.spec.layers[l].fan_in);
            for (double v : t.unit_sums[l]) EXPECT_LE(std::abs(v), bound);
            for (double a : t.activations[l]) {
                EXPECT_GE(a, 0.0);
                EXPECT_LE(a, pi);
            }
        }
        EXPECT_LE(std::abs(t.output), 2.0);
    }
}

TEST(NetworkForward, Errors) {
    Model m = Model::initialize(NetworkSpec::from_widths({2, 1}, 1, false));
    const std::vector<double> x{0.1, 0.2};
    EXPECT_THROW(network_forward(x, m), StateError);
    m.input_norm.assign(2, FeatureRange{});
    const std::vector<double> bad{0.1};
    EXPECT_THROW(network_forward(bad, m), ShapeError);
    EXPECT_THROW(NetworkSpec::from_widths({2, 2}, 1, false), ShapeError);
}

TEST(NetworkForward, Deterministic) {
    const Model a = make_model({2, 2, 1}, 3, false, 9), b = make_model({2, 2, 1}, 3, false, 9);
    const std::vector<double> x{0.3, 0.6};
    EXPECT_EQ(network_forward(x, a), network_forward(x, b));
}

TEST(NetworkForward, PredictMatchesScalarPath) {
    const Model m = make_model({2, 2, 1}, 3, true, 4);
    Rng rng(15);
    std::vector<double> xs, ys;
    random_rows(rng, 200, 2, xs, ys);
    const auto p1 = predict(m, xs, 2, 1), p3 = predict(m, xs, 2, 3);
    for (std::size_t r = 0; r < ys.size(); ++r) {
        EXPECT_EQ(p1[r], p3[r]);
        EXPECT_NEAR(p1[r], network_forward(std::span(xs).subspan(2 * r, 2), m), 1e-14);
    }
}

TEST(ParamCount, Conventions) {
    EXPECT_EQ(param_count(make_model({2, 2, 1}, 3, false, 0)), 36U);
    EXPECT_EQ(param_count(make_model({2, 2, 1}, 3, true, 0)), 38U);
    EXPECT_EQ(param_count(make_model({1, 1}, 1, false, 0)), 2U);
    EXPECT_EQ(param_count(make_model({1, 1}, 1, true, 0)), 4U);
}

TEST(ParamCount, EqualsFlattenedLength) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Model m = make_model({3, 2, 1}, 1 + seed % 3, seed % 2 == 1, seed);
        if (seed % 3 == 0) m.layers[0].active[seed % 6] = 0;
        EXPECT_EQ(param_count(m), flatten_parameters(m).size());
        auto flat = flatten_parameters(m);
        for (auto& v : flat) v += 0.5;
        assign_parameters(m, flat);
        EXPECT_EQ(flatten_parameters(m), flat);
    }
}

TEST(Backward, ZeroResidualGivesZeroGradient) {
    const Model m = make_model({2, 2, 1}, 2, true, 3);
    Rng rng(16);
    std::vector<double> xs, ys;
    random_rows(rng, 40, 2, xs, ys);
    ys = predict(m, xs, 2);
    const auto g = network_backward({xs, ys, 2}, m);
    // Predictions and the gradient pass use different kernels, so residuals are at rounding level.
    for (double v : g.flatten(m)) EXPECT_NEAR(v, 0.0, 1e-14);
    EXPECT_NEAR(g.loss, 0.0, 1e-28);
}

TEST(Backward, SingleEdgeChainRule) {
    Model m = make_model({1, 1}, 3, false, 21);
    const std::vector<double> xs{0.4}, ys{0.25};
    const auto g = network_backward({xs, ys, 1}, m);
    const double x = 0.4 * pi;
    const auto dg = dr_gradient(x, m.edge({0, 0, 0}));
    const double residual = dg.value - 0.25;
    for (std::size_t k = 0; k < dg.dtheta.size(); ++k) EXPECT_NEAR(g.edges[0][0][k], residual * dg.dtheta[k], 1e-14);
}

TEST(Backward, MatchesFiniteDifferences) {
    Rng rng(17);
    const std::vector<std::vector<std::size_t>> shapes{{1, 1}, {2, 1}, {2, 2, 1}, {3, 3, 1}, {2, 3, 2, 1}};
    int checked = 0;
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const auto& widths = shapes[seed % shapes.size()];
        Model m = make_model(widths, 1 + seed % 4, seed % 2 == 0, seed);
        m.dense_w = 0.8;
        if (seed % 5 == 1) m.spec.layers[0].rescale_bias = true;
        std::vector<double> xs, ys;
        random_rows(rng, 12, widths.front(), xs, ys);
        const auto g = network_backward({xs, ys, widths.front()}, m).flatten(m);
        const auto flat = flatten_parameters(m);
        for (std::size_t k = 0; k < flat.size(); ++k) {
            const double fd = oracle::central_difference(
                [&](double v) {
                    Model probe = m;
                    auto f = flat;
                    f[k] = v;
                    assign_parameters(probe, f);
                    return half_mse(probe, xs, ys);
                },
                flat[k]);
            // Relative tolerance with a floor so near-zero gradients are compared absolutely.
            EXPECT_NEAR(g[k], fd, 1e-5 * std::max(std::abs(fd), 1e-2)) << "seed " << seed << " param " << k;
            ++checked;
        }
    }
    EXPECT_GT(checked, 500);
}

TEST(Backward, ThreadCountInvariant) {
    const Model m = make_model({3, 3, 1}, 3, true, 8);
    Rng rng(18);
    std::vector<double> xs, ys;
    random_rows(rng, 300, 3, xs, ys);
    const auto g1 = network_backward({xs, ys, 3}, m, 1);
    for (std::size_t threads : {2, 4, 7}) {
        const auto gt = network_backward({xs, ys, 3}, m, threads);
        EXPECT_EQ(g1.flatten(m), gt.flatten(m));
        EXPECT_EQ(g1.loss, gt.loss);
    }
}

TEST(Backward, ShapeErrors) {
    const Model m = make_model({2, 1}, 1, false, 0);
    const std::vector<double> xs{0.1, 0.2, 0.3}, ys{0.0};
    EXPECT_THROW(network_backward({xs, ys, 3}, m), ShapeError);
    EXPECT_THROW(network_backward({xs, ys, 2}, m), ShapeError);
}

TEST(Normalization, FitsRangesAndClamps) {
    const std::vector<double> inputs{1.0, 5.0, 3.0, 5.0, 2.0, 5.0};
    const std::vector<std::size_t> rows{0, 1};
    const auto r = fit_feature_ranges(inputs, 2, rows);
    EXPECT_EQ(r[0], (FeatureRange{1.0, 3.0}));
    EXPECT_EQ(r[1], (FeatureRange{4.5, 5.5}));
    Model m = make_model({2, 1}, 1, false, 0);
    m.input_norm = r;
    diagnostics().reset();
    const std::vector<double> raw{4.0, 5.0};
    const auto n = normalize_input(raw, m);
    EXPECT_DOUBLE_EQ(n[0], pi);
    EXPECT_DOUBLE_EQ(n[1], pi / 2);
    EXPECT_EQ(diagnostics().clamped_network_inputs.load(), 1U);
}
