#pragma once

#include <nnest/jet.hpp>
#include <nnest/quadrature.hpp>

#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>

namespace nnest {

/**
 * Data of  -div(A grad u) + beta . grad u + c u = f  in Omega,  u = g  on the boundary.
 *
 * The Dirichlet datum is given as a smooth field whose trace is g; its gradient supplies the
 * tangential derivative needed by the boundary estimators.
 */
struct ProblemData {
    std::string name;
    std::function<Eigen::Matrix2d(const Point&)> diffusion;
    /// Divergence of the rows of A, so that div(A grad w) = divA . grad w + A : hess w.
    std::function<Eigen::Vector2d(const Point&)> diffusion_divergence;
    std::function<Eigen::Vector2d(const Point&)> advection;
    std::function<double(const Point&)> reaction;
    std::function<double(const Point&)> source;
    SmoothField dirichlet;
    std::optional<SmoothField> exact_solution;
};

/**
 * Coefficients of the residual  r = f + div(A grad w) - beta . grad w - c w  as an affine
 * function of the jet of w at one point: r = f + v*w + g.grad w + h.(w_xx, w_xy, w_yy).
 */
struct ResidualForm {
    double source = 0.0;
    double value = 0.0;
    Eigen::Vector2d grad = Eigen::Vector2d::Zero();
    std::array<double, 3> hess{0.0, 0.0, 0.0};

    double apply(const Jet2& w) const
    {
        return source + value * w.value + grad.dot(w.grad) + hess[0] * w.hess[0] + hess[1] * w.hess[1] +
               hess[2] * w.hess[2];
    }

    /// Cotangent of the jet given the cotangent s of the residual value.
    Jet2 pullback(double s) const
    {
        Jet2 j;
        j.value = s * value;
        j.grad = s * grad;
        for (int i = 0; i < 3; ++i) j.hess[i] = s * hess[i];
        return j;
    }
};

inline ResidualForm residual_form(const ProblemData& problem, const Point& x)
{
    const Eigen::Matrix2d a = problem.diffusion(x);
    ResidualForm r;
    r.source = problem.source(x);
    r.value = -problem.reaction(x);
    r.grad = problem.diffusion_divergence(x) - problem.advection(x);
    r.hess = {a(0, 0), a(0, 1) + a(1, 0), a(1, 1)};
    return r;
}

/// Strong residual f + div(A grad w) - beta . grad w - c w at an interior point.
inline double residual(const ProblemData& problem, const SmoothField& w, const Point& x)
{
    return residual_form(problem, x).apply(w(x));
}

namespace detail {
inline ProblemData poisson(std::string name, std::function<double(const Point&)> f, SmoothField g,
                           std::optional<SmoothField> u)
{
    ProblemData p;
    p.name = std::move(name);
    p.diffusion = [](const Point&) { return Eigen::Matrix2d::Identity().eval(); };
    p.diffusion_divergence = [](const Point&) { return Eigen::Vector2d::Zero().eval(); };
    p.advection = [](const Point&) { return Eigen::Vector2d::Zero().eval(); };
    p.reaction = [](const Point&) { return 0.0; };
    p.source = std::move(f);
    p.dirichlet = std::move(g);
    p.exact_solution = std::move(u);
    return p;
}

inline const SmoothField zero_field = [](const Point&) { return Jet2{}; };
}  // namespace detail

/// u = sin(pi x) sin(pi y) on the unit square, g = 0.
inline Jet2 smooth_square_solution(const Point& x)
{
    using std::numbers::pi;
    const double sx = std::sin(pi * x.x()), cx = std::cos(pi * x.x());
    const double sy = std::sin(pi * x.y()), cy = std::cos(pi * x.y());
    Jet2 j;
    j.value = sx * sy;
    j.grad = Eigen::Vector2d(pi * cx * sy, pi * sx * cy);
    j.hess = {-pi * pi * sx * sy, pi * pi * cx * cy, -pi * pi * sx * sy};
    return j;
}

/// u = (1 - exp(-x/eps)) (1 - x) sin(pi y): boundary layer of width eps at x = 0.
inline Jet2 boundary_layer_solution(const Point& x, double eps)
{
    using std::numbers::pi;
    const double e = std::exp(-x.x() / eps);
    const double a = (1.0 - e) * (1.0 - x.x());
    const double da = e / eps * (1.0 - x.x()) - (1.0 - e);
    const double dda = -e * ((1.0 - x.x()) / (eps * eps) + 2.0 / eps);
    const double s = std::sin(pi * x.y()), c = std::cos(pi * x.y());
    Jet2 j;
    j.value = a * s;
    j.grad = Eigen::Vector2d(da * s, pi * a * c);
    j.hess = {dda * s, pi * da * c, -pi * pi * a * s};
    return j;
}

/**
 * u = r^(2/3) cos(2 phi / 3) = Re z^(2/3) with the principal branch, phi in (-pi, pi).
 * Harmonic on the rotated L-shape and zero on both edges meeting at the re-entrant corner.
 */
inline Jet2 lshape_singular_solution(const Point& x)
{
    if (x.x() == 0.0 && x.y() == 0.0) throw std::domain_error("singular solution is not differentiable at the origin");
    const std::complex<double> z(x.x(), x.y());
    const std::complex<double> f = std::pow(z, 2.0 / 3.0);
    const std::complex<double> df = (2.0 / 3.0) * f / z;
    const std::complex<double> ddf = (-1.0 / 3.0) * df / z;
    Jet2 j;
    j.value = f.real();
    j.grad = Eigen::Vector2d(df.real(), -df.imag());
    j.hess = {ddf.real(), -ddf.imag(), -ddf.real()};
    return j;
}

enum class ManufacturedCase { smooth_square, boundary_layer, lshape_singular };

/// Poisson problems (A = I, beta = 0, c = 0) with known exact solutions.
inline ProblemData manufactured(ManufacturedCase which, double eps = 1e-2)
{
    switch (which) {
    case ManufacturedCase::smooth_square:
        return detail::poisson(
            "smooth_square",
            [](const Point& x) { return -smooth_square_solution(x).laplacian(); }, detail::zero_field,
            SmoothField(smooth_square_solution));
    case ManufacturedCase::boundary_layer: {
        SmoothField u = [eps](const Point& x) { return boundary_layer_solution(x, eps); };
        return detail::poisson(
            "boundary_layer", [u](const Point& x) { return -u(x).laplacian(); }, detail::zero_field, u);
    }
    case ManufacturedCase::lshape_singular:
        return detail::poisson(
            "lshape_singular", [](const Point&) { return 0.0; }, SmoothField(lshape_singular_solution),
            SmoothField(lshape_singular_solution));
    }
    throw std::invalid_argument("unknown manufactured case");
}

/// Squared H1 seminorm and squared L2 norm of u - w, per element.
struct ErrorParts {
    std::vector<double> grad_sq;
    std::vector<double> value_sq;
};

inline ErrorParts error_parts(const ProblemData& problem, const SmoothField& w, const Mesh& mesh,
                              const TriangleRule& rule)
{
    if (!problem.exact_solution) throw std::invalid_argument("problem has no exact solution");
    const auto& u = *problem.exact_solution;
    ErrorParts parts;
    parts.grad_sq.assign(mesh.num_elements(), 0.0);
    parts.value_sq.assign(mesh.num_elements(), 0.0);
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const auto p = mesh.corners(e);
        const double jac = 2.0 * mesh.area(e);
        for (int q = 0; q < rule.size(); ++q) {
            const Point x = map_to_element(p, rule.points[q]);
            const Jet2 ju = u(x), jw = w(x);
            parts.grad_sq[e] += jac * rule.weights[q] * (ju.grad - jw.grad).squaredNorm();
            parts.value_sq[e] += jac * rule.weights[q] * (ju.value - jw.value) * (ju.value - jw.value);
        }
    }
    return parts;
}

/// ||u - w||_{H1} evaluated by quadrature.
inline double h1_error(const ProblemData& problem, const SmoothField& w, const Mesh& mesh, const TriangleRule& rule)
{
    const auto parts = error_parts(problem, w, mesh, rule);
    double s = 0.0;
    for (int e = 0; e < mesh.num_elements(); ++e) s += parts.grad_sq[e] + parts.value_sq[e];
    return std::sqrt(s);
}

}  // namespace nnest
