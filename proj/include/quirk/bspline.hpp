#pragma once

// Univariate B-spline baseline: Cox-de Boor basis evaluation and penalised
// least-squares fits on clamped uniform knots.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "quirk/diagnostics.hpp"
#include "quirk/errors.hpp"

namespace quirk {

namespace detail {

inline void check_knots(std::span<const double> knots, std::size_t degree) {
    if (knots.size() < degree + 2) throw InvalidInput("knot vector too short for the requested degree");
    for (std::size_t j = 1; j < knots.size(); ++j)
        if (!(knots[j] >= knots[j - 1])) throw InvalidInput("knot vector must be non-decreasing");
    if (!(knots.front() < knots.back())) throw InvalidInput("knot vector spans an empty interval");
}

// Index k with knots[k] <= x < knots[k+1]; x equal to the last knot belongs to
// the last non-empty interval.
inline std::size_t knot_span(std::span<const double> knots, double x) {
    if (x >= knots.back()) {
        std::size_t k = knots.size() - 2;
        while (knots[k] == knots[k + 1]) --k;
        return k;
    }
    const auto it = std::upper_bound(knots.begin(), knots.end(), x);
    return static_cast<std::size_t>(it - knots.begin()) - 1;
}

} // namespace detail

/// Value of basis function i of the given degree at x. Zero outside the knot span.
inline double basis_eval(std::span<const double> knots, std::size_t degree, std::size_t i, double x) {
    detail::check_knots(knots, degree);
    if (i + degree + 1 >= knots.size())
        throw IndexError("basis index " + std::to_string(i) + " out of range for " + std::to_string(knots.size()) +
                         " knots");
    if (!std::isfinite(x) || x < knots.front() || x > knots.back()) return 0.0;
    const std::size_t k = detail::knot_span(knots, x);
    std::vector<double> n(degree + 1);
    for (std::size_t j = 0; j <= degree; ++j) n[j] = (i + j == k) ? 1.0 : 0.0;
    for (std::size_t d = 1; d <= degree; ++d)
        for (std::size_t j = 0; j + d <= degree; ++j) {
            const std::size_t a = i + j;
            const double left = knots[a + d] - knots[a];
            const double right = knots[a + d + 1] - knots[a + 1];
            const double lterm = left > 0.0 ? (x - knots[a]) / left * n[j] : 0.0;
            const double rterm = right > 0.0 ? (knots[a + d + 1] - x) / right * n[j + 1] : 0.0;
            n[j] = lterm + rterm;
        }
    return n[0];
}

/// All basis values at x (length knots.size() - degree - 1).
inline std::vector<double> basis_row(std::span<const double> knots, std::size_t degree, double x) {
    detail::check_knots(knots, degree);
    const std::size_t count = knots.size() - degree - 1;
    std::vector<double> row(count, 0.0);
    if (!std::isfinite(x) || x < knots.front() || x > knots.back()) return row;
    const std::size_t k = detail::knot_span(knots, x);
    const std::size_t first = k >= degree ? k - degree : 0;
    for (std::size_t i = first; i <= std::min(k, count - 1); ++i) row[i] = basis_eval(knots, degree, i, x);
    return row;
}

/// degree + 1 copies of each end and n_coeffs - degree - 1 evenly spaced interior knots.
inline std::vector<double> clamped_uniform_knots(double lo, double hi, std::size_t n_coeffs, std::size_t degree = 3) {
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) throw InvalidInput("knot range must satisfy lo < hi");
    if (n_coeffs < degree + 1) throw InvalidInput("need at least degree + 1 coefficients");
    const std::size_t pieces = n_coeffs - degree;
    std::vector<double> knots(degree, lo);
    for (std::size_t j = 0; j <= pieces; ++j)
        knots.push_back(j == pieces ? hi : lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(pieces));
    knots.insert(knots.end(), degree, hi);
    return knots;
}

/// Greville abscissae: the mean of `degree` consecutive interior knots per coefficient.
inline std::vector<double> greville_abscissae(std::span<const double> knots, std::size_t degree) {
    const std::size_t count = knots.size() - degree - 1;
    std::vector<double> g(count);
    for (std::size_t j = 0; j < count; ++j) {
        double s = 0.0;
        for (std::size_t m = 1; m <= degree; ++m) s += knots[j + m];
        g[j] = degree == 0 ? knots[j] : s / static_cast<double>(degree);
    }
    return g;
}

struct BSplineModel {
    std::size_t degree = 3;
    std::vector<double> knots;
    std::vector<double> coeffs;
    double smoothness = 0.0;

    /// Inputs outside the knot span are clamped to it, like network inputs
    /// outside the training range.
    double evaluate(double x) const {
        const auto row = basis_row(knots, degree, std::clamp(x, knots.front(), knots.back()));
        double s = 0.0;
        for (std::size_t i = 0; i < row.size(); ++i) s += row[i] * coeffs[i];
        return s;
    }

    std::vector<double> evaluate(std::span<const double> xs) const {
        std::vector<double> out;
        out.reserve(xs.size());
        for (double x : xs) out.push_back(evaluate(x));
        return out;
    }

    std::size_t param_count() const noexcept { return coeffs.size(); }
};

/// Rows of the penalty operator. Row j is h^2 times twice the second divided
/// difference of the coefficients over the Greville abscissae, h being the
/// interior knot spacing. On uniform interior knots this is the plain second
/// difference c[j-1] - 2c[j] + c[j+1]; its null space is exactly the straight lines.
inline Eigen::MatrixXd second_difference_penalty(std::span<const double> knots, std::size_t degree) {
    const auto g = greville_abscissae(knots, degree);
    const std::size_t m = g.size();
    if (m < 3) return Eigen::MatrixXd::Zero(0, static_cast<Eigen::Index>(m));
    const double h = (knots.back() - knots.front()) / static_cast<double>(m - degree);
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m - 2), static_cast<Eigen::Index>(m));
    for (std::size_t j = 1; j + 1 < m; ++j) {
        const double a = g[j] - g[j - 1];
        const double b = g[j + 1] - g[j];
        const double scale = 2.0 * h * h / (a + b);
        const auto r = static_cast<Eigen::Index>(j - 1);
        d(r, static_cast<Eigen::Index>(j - 1)) = scale / a;
        d(r, static_cast<Eigen::Index>(j)) = -scale * (1.0 / a + 1.0 / b);
        d(r, static_cast<Eigen::Index>(j + 1)) = scale / b;
    }
    return d;
}

/// Minimises (1/N) * |B c - y|^2 + S * |D c|^2 with D from
/// second_difference_penalty, via the normal equations. A singular system is
/// retried with a small ridge term and a warning.
inline BSplineModel fit_bspline(std::span<const double> xs, std::span<const double> ys, std::size_t n_coeffs,
                                double smoothness, std::size_t degree = 3) {
    if (xs.size() != ys.size()) throw ShapeError("fit_bspline: xs and ys differ in length");
    if (n_coeffs < degree + 1) throw InvalidInput("fit_bspline: need at least degree + 1 coefficients");
    if (xs.size() < n_coeffs) throw InvalidInput("fit_bspline: need at least as many samples as coefficients");
    if (!(smoothness >= 0.0) || !std::isfinite(smoothness)) throw InvalidInput("fit_bspline: smoothness must be >= 0");
    for (std::size_t k = 0; k < xs.size(); ++k)
        if (!std::isfinite(xs[k]) || !std::isfinite(ys[k])) throw InvalidInput("fit_bspline: samples must be finite");
    const auto [lo_it, hi_it] = std::minmax_element(xs.begin(), xs.end());
    BSplineModel model;
    model.degree = degree;
    model.smoothness = smoothness;
    model.knots = clamped_uniform_knots(*lo_it, *hi_it, n_coeffs, degree);

    const auto m = static_cast<Eigen::Index>(n_coeffs);
    Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
    const double inv_n = 1.0 / static_cast<double>(xs.size());
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const auto row = basis_row(model.knots, degree, xs[k]);
        const Eigen::Map<const Eigen::VectorXd> b(row.data(), m);
        normal.noalias() += inv_n * b * b.transpose();
        rhs += inv_n * ys[k] * b;
    }
    if (smoothness > 0.0) {
        const Eigen::MatrixXd d = second_difference_penalty(model.knots, degree);
        normal.noalias() += smoothness * d.transpose() * d;
    }

    Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
    const auto pivots = ldlt.vectorD().cwiseAbs();
    const bool singular = ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
                          pivots.minCoeff() <= 1e-13 * std::max(1.0, pivots.maxCoeff());
    if (singular) {
        diagnostics().regularized_solves.fetch_add(1, std::memory_order_relaxed);
        warn("fit_bspline: singular normal equations, adding a ridge term");
        const double ridge = 1e-10 * std::max(1.0, normal.diagonal().maxCoeff());
        normal += ridge * Eigen::MatrixXd::Identity(m, m);
        ldlt.compute(normal);
    }
    const Eigen::VectorXd c = ldlt.solve(rhs);
    model.coeffs.assign(c.data(), c.data() + c.size());
    for (double v : model.coeffs)
        if (!std::isfinite(v)) throw NumericError("fit_bspline: solve produced non-finite coefficients");
    return model;
}

} // namespace quirk
