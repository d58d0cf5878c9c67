#pragma once

#include <nnest/mesh.hpp>

#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

namespace nnest {

enum class RuleKind { standard, high };

/**
 * Quadrature rule on the reference triangle {(x,y) : x,y >= 0, x+y <= 1}.
 * Points are barycentric coordinates; weights sum to the reference area 1/2.
 */
struct TriangleRule {
    std::vector<std::array<double, 3>> points;
    std::vector<double> weights;
    int exactness_degree = 0;

    int size() const { return static_cast<int>(weights.size()); }
};

/// Quadrature rule on [0,1]; weights sum to 1.
struct SegmentRule {
    std::vector<double> points;
    std::vector<double> weights;
    int exactness_degree = 0;

    int size() const { return static_cast<int>(weights.size()); }
};

namespace detail {
// Symmetric orbits of barycentric points.
inline void add_centroid(TriangleRule& r, double w)
{
    r.points.push_back({1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
    r.weights.push_back(w);
}

inline void add_s21(TriangleRule& r, double a, double w)
{
    const double b = 1.0 - 2.0 * a;
    for (const auto& p : {std::array{b, a, a}, std::array{a, b, a}, std::array{a, a, b}}) {
        r.points.push_back(p);
        r.weights.push_back(w);
    }
}

inline void add_s111(TriangleRule& r, double a, double b, double w)
{
    const double c = 1.0 - a - b;
    for (const auto& p : {std::array{a, b, c}, std::array{a, c, b}, std::array{b, a, c}, std::array{b, c, a},
                          std::array{c, a, b}, std::array{c, b, a}}) {
        r.points.push_back(p);
        r.weights.push_back(w);
    }
}
}  // namespace detail

/// standard: 6 points, exact for degree 4. high: 16 points, exact for degree 8.
inline TriangleRule tri_rule(RuleKind kind)
{
    TriangleRule r;
    if (kind == RuleKind::standard) {
        r.exactness_degree = 4;
        detail::add_s21(r, 0.4459484909159648863183293, 0.1116907948390057328475035);
        detail::add_s21(r, 0.09157621350977074345957146, 0.05497587182766093381916316);
    } else {
        r.exactness_degree = 8;
        detail::add_centroid(r, 0.07215780383889358412554556);
        detail::add_s21(r, 0.4592925882927231560288155, 0.04754581713364231239694805);
        detail::add_s21(r, 0.1705693077517602066222935, 0.05160868526735912514089578);
        detail::add_s21(r, 0.05054722831703097545842355, 0.01622924881159904015546296);
        detail::add_s111(r, 0.2631128296346381134217858, 0.7284923929554042812410004, 0.01361515708721749713242235);
    }
    return r;
}

/// Gauss-Legendre rule with n points mapped to [0,1].
inline SegmentRule gauss_legendre(int n)
{
    SegmentRule r;
    r.exactness_degree = 2 * n - 1;
    r.points.resize(n);
    r.weights.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            if (n == 1) p0 = 1.0;
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-17) break;
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        r.points[i] = 0.5 * (1.0 - x);
        r.points[n - 1 - i] = 0.5 * (1.0 + x);
        r.weights[i] = r.weights[n - 1 - i] = 0.5 * w;
    }
    return r;
}

/// standard: 4-point Gauss (degree 7). high: 8-point Gauss (degree 15).
inline SegmentRule seg_rule(RuleKind kind) { return gauss_legendre(kind == RuleKind::standard ? 4 : 8); }

inline Point map_to_element(const std::array<Point, 3>& corners, const std::array<double, 3>& bary)
{
    return bary[0] * corners[0] + bary[1] * corners[1] + bary[2] * corners[2];
}

/// Per-element integrals of f.
inline std::vector<double> integrate_per_element(const Mesh& mesh, const TriangleRule& rule,
                                                 const std::function<double(const Point&)>& f)
{
    std::vector<double> out(mesh.num_elements(), 0.0);
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const auto p = mesh.corners(e);
        const double jac = 2.0 * mesh.area(e);
        double s = 0.0;
        for (int q = 0; q < rule.size(); ++q) s += rule.weights[q] * f(map_to_element(p, rule.points[q]));
        out[e] = jac * s;
    }
    return out;
}

inline double integrate(const Mesh& mesh, const TriangleRule& rule, const std::function<double(const Point&)>& f)
{
    double sum = 0.0;
    for (double v : integrate_per_element(mesh, rule, f)) sum += v;
    return sum;
}

/// Per-facet boundary integrals of f(point, outward normal).
inline std::vector<double> integrate_per_facet(const Mesh& mesh, const SegmentRule& rule,
                                               const std::function<double(const Point&, const Point&)>& f)
{
    std::vector<double> out(mesh.num_boundary_facets(), 0.0);
    for (int k = 0; k < mesh.num_boundary_facets(); ++k) {
        const auto& fc = mesh.boundary_facets()[k];
        const Point& a = mesh.vertices()[fc.vertices[0]];
        const Point& b = mesh.vertices()[fc.vertices[1]];
        double s = 0.0;
        for (int q = 0; q < rule.size(); ++q) s += rule.weights[q] * f(a + rule.points[q] * (b - a), fc.normal);
        out[k] = (b - a).norm() * s;
    }
    return out;
}

inline double integrate_boundary(const Mesh& mesh, const SegmentRule& rule,
                                 const std::function<double(const Point&, const Point&)>& f)
{
    double sum = 0.0;
    for (double v : integrate_per_facet(mesh, rule, f)) sum += v;
    return sum;
}

/**
 * Physical quadrature points of a whole mesh. Volume point q of element e has index
 * e * volume_rule.size() + q; boundary point q of facet k has index k * boundary_rule.size() + q.
 */
struct QuadraturePoints {
    TriangleRule volume_rule;
    SegmentRule boundary_rule;

    std::vector<Point> volume_points;
    std::vector<double> volume_weights;  // physical weights, summing to the element areas
    std::vector<Point> boundary_points;
    std::vector<double> boundary_weights;  // physical weights, summing to the facet lengths

    int volume_per_element() const { return volume_rule.size(); }
    int boundary_per_facet() const { return boundary_rule.size(); }
    int num_volume() const { return static_cast<int>(volume_points.size()); }
    int num_boundary() const { return static_cast<int>(boundary_points.size()); }
};

inline QuadraturePoints make_quadrature_points(const Mesh& mesh, TriangleRule vrule, SegmentRule brule)
{
    QuadraturePoints qp;
    qp.volume_rule = std::move(vrule);
    qp.boundary_rule = std::move(brule);
    const int nq = qp.volume_rule.size();
    qp.volume_points.reserve(mesh.num_elements() * nq);
    qp.volume_weights.reserve(mesh.num_elements() * nq);
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const auto p = mesh.corners(e);
        const double jac = 2.0 * mesh.area(e);
        for (int q = 0; q < nq; ++q) {
            qp.volume_points.push_back(map_to_element(p, qp.volume_rule.points[q]));
            qp.volume_weights.push_back(jac * qp.volume_rule.weights[q]);
        }
    }
    const int nb = qp.boundary_rule.size();
    for (int k = 0; k < mesh.num_boundary_facets(); ++k) {
        const auto& fc = mesh.boundary_facets()[k];
        const Point& a = mesh.vertices()[fc.vertices[0]];
        const Point& b = mesh.vertices()[fc.vertices[1]];
        const double len = (b - a).norm();
        for (int q = 0; q < nb; ++q) {
            qp.boundary_points.push_back(a + qp.boundary_rule.points[q] * (b - a));
            qp.boundary_weights.push_back(len * qp.boundary_rule.weights[q]);
        }
    }
    return qp;
}

inline QuadraturePoints make_quadrature_points(const Mesh& mesh, RuleKind kind)
{
    return make_quadrature_points(mesh, tri_rule(kind), seg_rule(kind));
}

}  // namespace nnest
