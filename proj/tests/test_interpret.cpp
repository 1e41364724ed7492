#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "oracle.hpp"
#include "quirk/interpret.hpp"

using namespace quirk;
using std::numbers::pi;

namespace {

Model cos_model() {
    Model m = Model::initialize(NetworkSpec::from_widths({1, 1}, 1, false, 1));
    m.layers[0].edges[0].thetas = {0.0, 0.0};
    m.input_norm = {{0.0, 1.0}};
    return m;
}

Dataset unit_interval_data(std::size_t n, std::uint64_t seed) { return generate_univariate("sin", n, 0.0, 1.0, seed); }

} // namespace

TEST(SampleEdge, GridAndValues) {
    const Model m = cos_model();
    const auto s = sample_edge(m, {0, 0, 0}, 65);
    ASSERT_EQ(s.xs.size(), 65U);
    EXPECT_EQ(s.xs.front(), 0.0);
    EXPECT_EQ(s.xs.back(), pi);
    for (std::size_t k = 0; k < s.xs.size(); ++k) EXPECT_NEAR(s.ys[k], std::cos(s.xs[k]), 1e-12);
    const auto two = sample_edge(m, {0, 0, 0}, 2);
    EXPECT_EQ(two.xs, (std::vector<double>{0.0, pi}));
    EXPECT_THROW(sample_edge(m, {0, 0, 0}, 1), InvalidInput);
    EXPECT_THROW(sample_edge(m, {0, 1, 0}, 10), LookupError);
    EXPECT_THROW(sample_edge(m, {1, 0, 0}, 10), LookupError);
}

TEST(SampleEdge, MatchesOracleForRandomEdges) {
    const Model m = Model::initialize(NetworkSpec::from_widths({2, 2, 1}, 3, false, 5));
    for (const auto& e : m.active_edges()) {
        const auto s = sample_edge(m, e, 33);
        const auto& params = m.layers[e.layer].edges[m.edge_index(e)];
        for (std::size_t k = 0; k < s.xs.size(); ++k) EXPECT_NEAR(s.ys[k], oracle::dr_value(s.xs[k], params), 1e-12);
    }
}

TEST(FitPoly, RecoversQuadraticInT) {
    std::vector<double> xs, ys;
    for (int k = 0; k <= 40; ++k) {
        const double x = pi * k / 40.0;
        xs.push_back(x);
        ys.push_back(1.0 + 2.0 * x + 3.0 * x * x);
    }
    // x = a (t + 1) with a = pi / 2.
    const double a = pi / 2.0;
    const auto fit = fit_poly(xs, ys, 6, 1.0 - 1e-12);
    ASSERT_EQ(fit.degree, 2U);
    ASSERT_EQ(fit.coeffs.size(), 3U);
    EXPECT_NEAR(fit.coeffs[0], 1.0 + 2.0 * a + 3.0 * a * a, 1e-8);
    EXPECT_NEAR(fit.coeffs[1], 2.0 * a + 6.0 * a * a, 1e-8);
    EXPECT_NEAR(fit.coeffs[2], 3.0 * a * a, 1e-8);
    EXPECT_NEAR(fit.r_squared, 1.0, 1e-12);
    for (double x : {0.0, 0.3, 2.0, pi}) EXPECT_NEAR(fit.evaluate(x), 1.0 + 2.0 * x + 3.0 * x * x, 1e-9);
}

TEST(FitPoly, RangeComesFromSamples) {
    const std::vector<double> xs{2.0, 3.0, 4.0, 5.0}, ys{4.0, 6.0, 8.0, 10.0};
    const auto fit = fit_poly(xs, ys, 2);
    EXPECT_EQ(fit.lo, 2.0);
    EXPECT_EQ(fit.hi, 5.0);
    EXPECT_EQ(fit.degree, 1U);
    EXPECT_NEAR(fit.coeffs[0], 7.0, 1e-12);
    EXPECT_NEAR(fit.coeffs[1], 3.0, 1e-12);
}

TEST(FitPoly, ConstantIsDegreeZero) {
    const std::vector<double> xs{0.0, 1.0, 2.0, 3.0}, ys(4, 0.25);
    const auto fit = fit_poly(xs, ys, 3);
    EXPECT_EQ(fit.degree, 0U);
    EXPECT_NEAR(fit.coeffs[0], 0.25, 1e-15);
    EXPECT_GE(fit.r_squared, 0.99);
}

TEST(FitPoly, CosineNeedsFewTerms) {
    const auto s = sample_edge(cos_model(), {0, 0, 0});
    const auto fit = fit_poly(s, 4, 0.999);
    EXPECT_LE(fit.degree, 4U);
    EXPECT_GE(fit.r_squared, 0.999);
}

TEST(FitPoly, DegreeGrowsWithTarget) {
    const Model m = Model::initialize(NetworkSpec::from_widths({1, 1}, 4, false, 12));
    const auto s = sample_edge(m, {0, 0, 0});
    std::size_t prev = 0;
    double prev_r2 = -1e300;
    for (double target : {0.5, 0.9, 0.99, 0.999, 0.99999}) {
        const auto fit = fit_poly(s, 10, target);
        EXPECT_GE(fit.degree, prev) << target;
        prev = fit.degree;
        EXPECT_GE(fit.r_squared, prev_r2 - 1e-12);
        prev_r2 = fit.r_squared;
    }
}

TEST(FitPoly, Errors) {
    const std::vector<double> same{1.0, 1.0, 1.0, 1.0}, ys{0, 1, 2, 3};
    EXPECT_THROW(fit_poly(same, ys, 2), InvalidInput);
    EXPECT_THROW(fit_poly(ys, std::vector<double>{0, 1, 2}, 2), ShapeError);
    EXPECT_THROW(fit_poly(ys, ys, 4), InvalidInput);
    const std::vector<double> bad{0, 1, NAN, 3};
    EXPECT_THROW(fit_poly(ys, bad, 2), InvalidInput);
}

TEST(PolyText, Formatting) {
    EXPECT_EQ(poly_to_string(std::vector<double>{0.5, -1.25, 0.75}), "0.5 - 1.25*t + 0.75*t^2");
}

TEST(Report, CosineModel) {
    const Model m = cos_model();
    const Dataset d = unit_interval_data(300, 4);
    const auto r = report(m, d);
    ASSERT_EQ(r.edges.size(), 1U);
    EXPECT_EQ(r.points.size(), d.split.test.size());
    EXPECT_GE(r.edges[0].fit.r_squared, 0.99);
    EXPECT_LT(r.surrogate_rmse, 0.1);
    EXPECT_FALSE(r.summary.empty());
    EXPECT_THROW(report(m, generate("I.6.2", 50, 1)), ShapeError);
    Model raw = m;
    raw.input_norm.clear();
    EXPECT_THROW(report(raw, d), StateError);
}

TEST(Report, HighDegreeSurrogateTracksModel) {
    // With enough terms every edge polynomial is close to its circuit, so the
    // rebuilt network follows the model.
    InterpretConfig c;
    c.max_degree = 14;
    c.r2_target = 1.0;
    for (std::uint64_t seed : {1, 2, 3}) {
        Model m = Model::initialize(NetworkSpec::from_widths({2, 2, 1}, 2, true, seed));
        const Dataset d = generate("I.15.3x", 200, seed);
        m.input_norm = fit_feature_ranges(d.inputs, d.input_dim(), d.split.train);
        const auto r = report(m, d, c);
        EXPECT_LT(r.surrogate_rmse, 1e-4) << "seed " << seed;
    }
}

TEST(Report, PrunedEdgesAreSkipped) {
    Model m = Model::initialize(NetworkSpec::from_widths({2, 2, 1}, 2, false, 3));
    m.input_norm = {{0.0, 1.0}, {0.0, 1.0}};
    m.layers[0].active[1] = 0;
    const Dataset d = generate("xsq_minus_ysq", 100, 1);
    EXPECT_EQ(report(m, d).edges.size(), 5U);
}

TEST(Report, JsonRoundTrip) {
    Model m = Model::initialize(NetworkSpec::from_widths({2, 2, 1}, 2, true, 9));
    const Dataset d = generate("I.6.2", 150, 9);
    m.input_norm = fit_feature_ranges(d.inputs, d.input_dim(), d.split.train);
    const auto r = report(m, d);
    const auto j = report_to_json(r);
    const auto back = report_from_json(nlohmann::json::parse(j.dump()));
    EXPECT_EQ(report_to_json(back).dump(), j.dump());
    EXPECT_NEAR(recompute_surrogate_rmse(back), r.surrogate_rmse, 1e-12);
    EXPECT_EQ(back.edges.size(), r.edges.size());
    EXPECT_THROW(report_from_json(nlohmann::json::parse("{\"format\": \"other\"}")), Error);
}

TEST(Report, CoefficientsCsvParses) {
    Model m = Model::initialize(NetworkSpec::from_widths({2, 2, 1}, 2, false, 10));
    const Dataset d = generate("xsq_minus_ysq", 100, 10);
    m.input_norm = fit_feature_ranges(d.inputs, d.input_dim(), d.split.train);
    InterpretConfig c;
    c.max_degree = 4;
    const auto r = report(m, d, c);
    std::ostringstream out;
    write_coefficients_csv(out, r);
    EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "layer,input,unit,degree,r_squared,c0,c1,c2,c3,c4");
    std::istringstream in(out.str());
    const Dataset table = read_csv(in);
    EXPECT_EQ(table.size(), r.edges.size());
    EXPECT_EQ(table.input_dim(), 9U);
}

TEST(Report, EdgePlotIsSvg) {
    const Model m = cos_model();
    const auto s = sample_edge(m, {0, 0, 0}, 50);
    const std::string svg = edge_plot(s, fit_poly(s)).render();
    EXPECT_NE(svg.find("<svg"), std::string::npos);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
}
