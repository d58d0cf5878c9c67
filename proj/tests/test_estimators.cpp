#include "oracles.hpp"

#include <nnest/estimators.hpp>

#include <gtest/gtest.h>

#include <numbers>
#include <random>

using namespace nnest;
using std::numbers::pi;

namespace {

std::shared_ptr<const ProblemData> share(ProblemData p) { return std::make_shared<const ProblemData>(std::move(p)); }

EstimatorContext make_ctx(const ProblemData& p, const Mesh& m, RuleKind kind = RuleKind::standard)
{
    return EstimatorContext(share(p), std::make_shared<const TestSpaces>(m), kind);
}

/// Poisson problem with the given source and Dirichlet field, no exact solution.
ProblemData poisson(std::function<double(const Point&)> f, SmoothField g)
{
    return detail::poisson("test", std::move(f), std::move(g), std::nullopt);
}

std::vector<Mesh> small_meshes()
{
    return {make_crisscross_unit_square(1), make_crisscross_unit_square(2), make_crisscross_unit_square(4),
            refine_nvb(make_crisscross_unit_square(2), Marking{0, 5})};
}

}  // namespace

TEST(Estimators, DiffusionDivergenceConsistency)
{
    // The helper problem's divergence of rows must match its diffusion field.
    const ProblemData p = oracle::variable_coefficients();
    const Point x(0.3, 0.6);
    const double h = 1e-6;
    const Eigen::Matrix2d ax = (p.diffusion(x + Point(h, 0)) - p.diffusion(x - Point(h, 0))) / (2 * h);
    const Eigen::Matrix2d ay = (p.diffusion(x + Point(0, h)) - p.diffusion(x - Point(0, h))) / (2 * h);
    const Eigen::Vector2d div(ax(0, 0) + ay(0, 1), ax(1, 0) + ay(1, 1));
    EXPECT_NEAR((div - p.diffusion_divergence(x)).norm(), 0.0, 1e-8);
}

TEST(Estimators, ExactSolutionGivesZero)
{
    const ProblemData p = manufactured(ManufacturedCase::smooth_square);
    const auto ctx = make_ctx(p, make_crisscross_unit_square(4));
    const auto w = ctx.sample(*p.exact_solution);
    for (auto f : {Formulation::weak_lagrange, Formulation::weak_bubble, Formulation::broken, Formulation::strong}) {
        const auto rep = estimate(ctx, w, f);
        EXPECT_LE(rep.eta_omega, 1e-8);
        EXPECT_LE(rep.rho_omega, 1e-8);
        EXPECT_LE(rep.eta_gamma, 1e-8);
        EXPECT_LE(rep.rho_gamma, 1e-8);
        for (const auto& c : rep.per_element) EXPECT_LE(c.total(), 1e-16);
    }
    EXPECT_LE(pinn_boundary_bound(ctx, w).value, 1e-12);
}

TEST(Estimators, DualNormsMatchDenseOracle)
{
    for (const auto& p : {manufactured(ManufacturedCase::smooth_square), oracle::variable_coefficients()}) {
        for (const Mesh& m : small_meshes()) {
            const auto ctx = make_ctx(p, m);
            for (int s = 0; s < 3; ++s) {
                const SmoothField w = s == 0 ? detail::zero_field : SmoothField(oracle::RandomSmooth(s));
                const auto jw = ctx.sample(w);
                const double lag = eta_omega_weak(ctx, jw, WeakSpace::lagrange).value;
                const double bub = eta_omega_weak(ctx, jw, WeakSpace::bubble).value;
                const double br = eta_omega_broken(ctx, jw).value;
                const double bd = eta_gamma_hdiv(ctx, jw).value;
                const double ref_lag = oracle::weak_volume_dual_norm(ctx, w, SpaceKind::lagrange_h10_p1);
                const double ref_bub = oracle::weak_volume_dual_norm(ctx, w, SpaceKind::bubble_enriched_p1_b0);
                EXPECT_NEAR(lag, ref_lag, 1e-10 * ref_lag + 1e-300);
                EXPECT_NEAR(bub, ref_bub, 1e-10 * ref_bub);
                EXPECT_NEAR(br, oracle::broken_volume_dual_norm(ctx, w), 1e-10 * br);
                const double ref_bd = oracle::boundary_dual_norm(ctx, w);
                EXPECT_NEAR(bd, ref_bd, 1e-10 * ref_bd + 1e-300);
                EXPECT_GE(bub, lag * (1 - 1e-12));
            }
        }
    }
}

TEST(Estimators, WeakFunctionalMatchesIntegrationByParts)
{
    // With a high-order rule the residual form and the integrated-by-parts form agree.
    const ProblemData p = oracle::variable_coefficients();
    for (int n : {2, 4}) {
        const auto ctx = make_ctx(p, make_crisscross_unit_square(n), RuleKind::high);
        const oracle::RandomSmooth w(40 + n);
        for (auto kind : {SpaceKind::lagrange_h10_p1, SpaceKind::bubble_enriched_p1_b0}) {
            const double a = oracle::weak_volume_dual_norm(ctx, w, kind);
            const double b = oracle::weak_volume_dual_norm(ctx, w, kind, true);
            EXPECT_NEAR(a, b, 1e-5 * a);
        }
    }
}

TEST(Estimators, WeakRemainders)
{
    const Mesh m = make_crisscross_unit_square(3);
    const auto constant = poisson([](const Point&) { return 2.0; }, detail::zero_field);
    const auto ctx = make_ctx(constant, m);
    const auto zero = ctx.sample(detail::zero_field);
    EXPECT_NEAR(rho_omega_weak(ctx, zero, WeakSpace::bubble).value, 0.0, 1e-12);
    EXPECT_GT(rho_omega_weak(ctx, zero, WeakSpace::lagrange).value, 0.1);
    for (int s = 0; s < 10; ++s) {
        const auto ctx2 = make_ctx(oracle::variable_coefficients(), m);
        const auto w = ctx2.sample(oracle::RandomSmooth(s));
        EXPECT_LE(rho_omega_weak(ctx2, w, WeakSpace::bubble).value, rho_omega_weak(ctx2, w, WeakSpace::lagrange).value);
    }
}

TEST(Estimators, BrokenCharacterization)
{
    for (int s = 0; s < 20; ++s) {
        const Mesh m = small_meshes()[s % 4];
        const auto ctx = make_ctx(s % 2 ? oracle::variable_coefficients() : manufactured(ManufacturedCase::smooth_square), m);
        const auto w = ctx.sample(oracle::RandomSmooth(100 + s));
        const double eta = eta_omega_broken(ctx, w).value;
        const auto eq = eta_omega_broken_equiv(ctx, w);
        EXPECT_LE(eq.mean_part, eta + 1e-12);
        EXPECT_LE(eta, eq.mean_part + eq.oscillation_part + 1e-12);
    }
}

TEST(Estimators, BrokenRemainder)
{
    const Mesh m = make_crisscross_unit_square(2);
    const auto affine = poisson([](const Point& x) { return 1.0 + 2 * x.x() - x.y(); }, detail::zero_field);
    const auto ctx = make_ctx(affine, m);
    EXPECT_NEAR(rho_omega_broken(ctx, ctx.sample(detail::zero_field)).value, 0.0, 1e-12);

    // Smooth residual: ||h (1 - pi^1) r|| = O(h^3) on uniform refinement.
    const auto smooth = poisson([](const Point& x) { return std::sin(2 * x.x()) * std::exp(x.y()); }, detail::zero_field);
    const auto c1 = make_ctx(smooth, make_crisscross_unit_square(4));
    const auto c2 = make_ctx(smooth, make_crisscross_unit_square(8));
    const double ratio = rho_omega_broken(c1, c1.sample(detail::zero_field)).value /
                         rho_omega_broken(c2, c2.sample(detail::zero_field)).value;
    EXPECT_GT(ratio, 7.0);
    EXPECT_LT(ratio, 9.0);
}

TEST(Estimators, StrongPythagoras)
{
    std::mt19937_64 rng(4);
    for (int s = 0; s < 50; ++s) {
        const int n = 1 + s % 8;
        const Mesh m = make_crisscross_unit_square(n);
        const auto ctx = make_ctx(s % 2 ? oracle::variable_coefficients() : manufactured(ManufacturedCase::smooth_square), m);
        const oracle::RandomSmooth w(200 + s);
        const auto jw = ctx.sample(w);
        const auto [eta, rho] = eta_rho_strong(ctx, jw);
        double direct = 0.0;
        for (int i = 0; i < ctx.points().num_volume(); ++i) {
            const double r = residual(ctx.problem(), w, ctx.points().volume_points[i]);
            direct += ctx.points().volume_weights[i] * r * r;
        }
        EXPECT_NEAR(eta.value * eta.value + rho.value * rho.value, direct, 1e-12 * direct);
    }
    const auto ctx = make_ctx(poisson([](const Point&) { return -3.0; }, detail::zero_field), make_crisscross_unit_square(2));
    const auto [eta, rho] = eta_rho_strong(ctx, ctx.sample(detail::zero_field));
    EXPECT_NEAR(rho.value, 0.0, 1e-14);
    EXPECT_NEAR(eta.value, 3.0, 1e-13);
}

TEST(Estimators, BoundaryDualNorm)
{
    const auto g = oracle::RandomSmooth(5);
    const auto p = poisson([](const Point&) { return 0.0; }, g);
    const auto ctx = make_ctx(p, make_crisscross_unit_square(3));
    EXPECT_LE(eta_gamma_hdiv(ctx, ctx.sample(g)).value, 1e-9);
    EXPECT_LE(rho_gamma(ctx, ctx.sample(g)).value, 1e-12);

    // Adding a field that vanishes on the boundary changes nothing.
    const auto w = oracle::RandomSmooth(6);
    const SmoothField bubble = [](const Point& x) {
        Jet2 b;
        b.value = x.x() * (1 - x.x()) * x.y() * (1 - x.y());
        b.grad = Eigen::Vector2d((1 - 2 * x.x()) * x.y() * (1 - x.y()), (1 - 2 * x.y()) * x.x() * (1 - x.x()));
        b.hess = {-2 * x.y() * (1 - x.y()), (1 - 2 * x.x()) * (1 - 2 * x.y()), -2 * x.x() * (1 - x.x())};
        return b;
    };
    const SmoothField shifted = [&](const Point& x) { return w(x) + 5.0 * bubble(x); };
    EXPECT_NEAR(eta_gamma_hdiv(ctx, ctx.sample(w)).value, eta_gamma_hdiv(ctx, ctx.sample(shifted)).value, 1e-13);
}

TEST(Estimators, TangentialRemainder)
{
    const SmoothField slope_x = [](const Point& x) {
        Jet2 j;
        j.value = x.x();
        j.grad = Eigen::Vector2d(1.0, 0.0);
        return j;
    };
    // Constant trace difference: zero.
    const SmoothField constant = [](const Point&) {
        Jet2 j;
        j.value = 0.7;
        return j;
    };
    const auto ctx0 = make_ctx(poisson([](const Point&) { return 0.0; }, detail::zero_field), make_crisscross_unit_square(2));
    EXPECT_EQ(rho_gamma(ctx0, ctx0.sample(constant)).value, 0.0);

    // g = x: horizontal facets of length h have unit tangential slope; contribution h * h each.
    const auto ctx = make_ctx(poisson([](const Point&) { return 0.0; }, slope_x), make_crisscross_unit_square(2));
    const auto part = rho_gamma(ctx, ctx.sample(detail::zero_field));
    EXPECT_NEAR(part.value * part.value, 4 * 0.25, 1e-14);
    for (int k = 0; k < ctx.mesh().num_boundary_facets(); ++k) {
        const auto& f = ctx.mesh().boundary_facets()[k];
        if (std::abs(f.normal.x()) < 0.5) { EXPECT_NEAR(part.local_sq[f.element], 0.25, 1e-14); }
    }

    // Smooth trace difference: value scales like h^{1/2}.
    const auto g = poisson([](const Point&) { return 0.0; }, oracle::RandomSmooth(8));
    const auto c1 = make_ctx(g, make_crisscross_unit_square(4));
    const auto c2 = make_ctx(g, make_crisscross_unit_square(8));
    const double ratio = rho_gamma(c1, c1.sample(detail::zero_field)).value / rho_gamma(c2, c2.sample(detail::zero_field)).value;
    EXPECT_GT(ratio, 1.3);
    EXPECT_LT(ratio, 1.5);
}

TEST(Estimators, PinnBoundaryBound)
{
    const SmoothField kappa = [](const Point&) {
        Jet2 j;
        j.value = 0.4;
        return j;
    };
    const auto ctx = make_ctx(poisson([](const Point&) { return 0.0; }, detail::zero_field), make_crisscross_unit_square(2));
    const auto b = pinn_boundary_bound(ctx, ctx.sample(kappa));
    // Each facet contributes kappa^2 h^{-1} h = kappa^2; corner elements carry two facets.
    EXPECT_NEAR(b.value * b.value, 8 * 0.16, 1e-14);
    const oracle::RandomSmooth w(3);
    const SmoothField w2 = [&](const Point& x) { return 2.0 * w(x); };
    const double v1 = pinn_boundary_bound(ctx, ctx.sample(w)).value, v2 = pinn_boundary_bound(ctx, ctx.sample(w2)).value;
    EXPECT_NEAR(v2 * v2, 4 * v1 * v1, 1e-12 * v2 * v2);
}

TEST(Estimators, LocalizationSumsToGlobal)
{
    const auto ctx = make_ctx(oracle::variable_coefficients(), make_crisscross_unit_square(4));
    const auto w = ctx.sample(oracle::RandomSmooth(12));
    for (auto f : {Formulation::weak_lagrange, Formulation::weak_bubble, Formulation::broken, Formulation::strong}) {
        const auto rep = estimate(ctx, w, f);
        double s[4] = {0, 0, 0, 0};
        for (const auto& c : rep.per_element) {
            s[0] += c.eta_omega2;
            s[1] += c.rho_omega2;
            s[2] += c.eta_gamma2;
            s[3] += c.rho_gamma2;
            EXPECT_GE(c.eta_omega2, 0.0);
            EXPECT_GE(c.eta_gamma2, 0.0);
        }
        EXPECT_NEAR(s[0], rep.eta_omega * rep.eta_omega, 1e-10 * std::max(1.0, s[0]));
        EXPECT_NEAR(s[1], rep.rho_omega * rep.rho_omega, 1e-10 * std::max(1.0, s[1]));
        EXPECT_NEAR(s[2], rep.eta_gamma * rep.eta_gamma, 1e-10 * std::max(1.0, s[2]));
        EXPECT_NEAR(s[3], rep.rho_gamma * rep.rho_gamma, 1e-10 * std::max(1.0, s[3]));
    }
}

TEST(Estimators, LocalizationConcentratesOnSupport)
{
    const Mesh m = make_crisscross_unit_square(4);
    const int target = 37;
    const Point c = m.centroid(target);
    // Source supported (numerically) on one element: a narrow bump at its centroid.
    const auto p = poisson(
        [&, target](const Point& x) {
            const double d2 = (x - c).squaredNorm();
            return std::exp(-d2 / 1e-4) * 1e3;
        },
        detail::zero_field);
    const auto ctx = make_ctx(p, m);
    const auto part = eta_omega_weak(ctx, ctx.sample(detail::zero_field), WeakSpace::bubble);
    double patch = 0.0, total = 0.0;
    const auto& tv = m.triangles()[target].vertices;
    for (int e = 0; e < m.num_elements(); ++e) {
        total += part.local_sq[e];
        bool touches = false;
        for (int v : m.triangles()[e].vertices)
            for (int u : tv) touches |= u == v;
        if (touches) patch += part.local_sq[e];
    }
    EXPECT_GE(patch, 0.5 * total);
}

TEST(Estimators, Homogeneity)
{
    const ProblemData base = oracle::variable_coefficients();
    ProblemData doubled = base;
    doubled.source = [f = base.source](const Point& x) { return 2.0 * f(x); };
    doubled.dirichlet = [g = base.dirichlet](const Point& x) { return 2.0 * g(x); };
    const Mesh m = make_crisscross_unit_square(3);
    const auto c1 = make_ctx(base, m), c2 = make_ctx(doubled, m);
    for (auto f : {Formulation::weak_lagrange, Formulation::weak_bubble, Formulation::broken, Formulation::strong}) {
        const auto r1 = estimate(c1, c1.sample(detail::zero_field), f);
        const auto r2 = estimate(c2, c2.sample(detail::zero_field), f);
        EXPECT_NEAR(r2.eta_omega, 2 * r1.eta_omega, 1e-12 * r2.eta_omega);
        EXPECT_NEAR(r2.rho_omega, 2 * r1.rho_omega, 1e-12 * r2.rho_omega);
        EXPECT_NEAR(r2.eta_gamma, 2 * r1.eta_gamma, 1e-12 * r2.eta_gamma);
        EXPECT_NEAR(r2.rho_gamma, 2 * r1.rho_gamma, 1e-12 * r2.rho_gamma);
    }
}

TEST(Estimators, NestedMonotonicity)
{
    const ProblemData p = oracle::variable_coefficients();
    const oracle::RandomSmooth w(21);
    Mesh m = make_crisscross_unit_square(2);
    double prev_lag = 0.0, prev_br = 0.0;
    for (int level = 0; level < 3; ++level) {
        // A high-order rule keeps the functional essentially fixed across meshes.
        const auto ctx = make_ctx(p, m, RuleKind::high);
        const auto jw = ctx.sample(w);
        const double lag = eta_omega_weak(ctx, jw, WeakSpace::lagrange).value;
        const double br = eta_omega_broken(ctx, jw).value;
        EXPECT_GE(lag, prev_lag * (1 - 1e-6));
        EXPECT_GE(br, prev_br * (1 - 1e-6));
        prev_lag = lag;
        prev_br = br;
        m = refine_uniform(m);
    }
}

TEST(Estimators, AdjointsMatchDirectionalDerivatives)
{
    const auto ctx = make_ctx(oracle::variable_coefficients(), make_crisscross_unit_square(2));
    const auto w = ctx.sample(oracle::RandomSmooth(30));
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n;
    FieldSamples d = w;
    for (auto& j : d.volume) j = Jet2{n(rng), {n(rng), n(rng)}, {n(rng), n(rng), n(rng)}};
    for (auto& j : d.boundary) j = Jet2{n(rng), {n(rng), n(rng)}, {n(rng), n(rng), n(rng)}};
    auto shifted = [&](double t) {
        FieldSamples s = w;
        for (std::size_t i = 0; i < s.volume.size(); ++i) s.volume[i] += t * d.volume[i];
        for (std::size_t i = 0; i < s.boundary.size(); ++i) s.boundary[i] += t * d.boundary[i];
        return s;
    };
    auto pair = [&](const FieldSamples& a) {
        double s = 0.0;
        auto dot = [](const Jet2& x, const Jet2& y) {
            return x.value * y.value + x.grad.dot(y.grad) + x.hess[0] * y.hess[0] + x.hess[1] * y.hess[1] +
                   x.hess[2] * y.hess[2];
        };
        for (std::size_t i = 0; i < a.volume.size(); ++i) s += dot(a.volume[i], d.volume[i]);
        for (std::size_t i = 0; i < a.boundary.size(); ++i) s += dot(a.boundary[i], d.boundary[i]);
        return s;
    };
    using PartFn = std::function<PartResult(const FieldSamples&, FieldSamples*)>;
    const std::vector<std::pair<std::string, PartFn>> parts = {
        {"eta_weak_lagrange", [&](const FieldSamples& s, FieldSamples* a) { return eta_omega_weak(ctx, s, WeakSpace::lagrange, a); }},
        {"eta_weak_bubble", [&](const FieldSamples& s, FieldSamples* a) { return eta_omega_weak(ctx, s, WeakSpace::bubble, a); }},
        {"rho_weak_lagrange", [&](const FieldSamples& s, FieldSamples* a) { return rho_omega_weak(ctx, s, WeakSpace::lagrange, a); }},
        {"rho_weak_bubble", [&](const FieldSamples& s, FieldSamples* a) { return rho_omega_weak(ctx, s, WeakSpace::bubble, a); }},
        {"eta_broken", [&](const FieldSamples& s, FieldSamples* a) { return eta_omega_broken(ctx, s, a); }},
        {"rho_broken", [&](const FieldSamples& s, FieldSamples* a) { return rho_omega_broken(ctx, s, a); }},
        {"eta_strong", [&](const FieldSamples& s, FieldSamples* a) { return eta_rho_strong(ctx, s, 0, a, 1.0, 0.0).first; }},
        {"rho_strong", [&](const FieldSamples& s, FieldSamples* a) { return eta_rho_strong(ctx, s, 0, a, 0.0, 1.0).second; }},
        {"eta_gamma", [&](const FieldSamples& s, FieldSamples* a) { return eta_gamma_hdiv(ctx, s, a); }},
        {"rho_gamma", [&](const FieldSamples& s, FieldSamples* a) { return rho_gamma(ctx, s, a); }},
        {"pinn_boundary", [&](const FieldSamples& s, FieldSamples* a) { return pinn_boundary_bound(ctx, s, a); }},
    };
    for (const auto& [name, fn] : parts) {
        FieldSamples adj = FieldSamples::zeros(ctx.points().num_volume(), ctx.points().num_boundary());
        fn(w, &adj);
        const double h = 1e-5;
        const double vp = fn(shifted(h), nullptr).value, vm = fn(shifted(-h), nullptr).value;
        const double fd = (vp * vp - vm * vm) / (2 * h);
        EXPECT_NEAR(pair(adj), fd, 1e-6 * std::max(1.0, std::abs(fd))) << name;
    }
}

TEST(Estimators, ReportOverloadAndTags)
{
    const ProblemData p = manufactured(ManufacturedCase::smooth_square);
    const auto rep = estimate(p, detail::zero_field, make_crisscross_unit_square(2), RuleKind::high, Formulation::broken);
    EXPECT_EQ(rep.num_elements, 16);
    EXPECT_EQ(rep.quadrature, "high");
    EXPECT_GT(rep.eta(), 0.0);
    EXPECT_GT(rep.rho(), 0.0);
}

TEST(Estimators, CalibratedSandwich)
{
    // eta <= C1 e and e <= C2 (eta + rho) for the bubble-enriched weak estimators on the smooth
    // problem. Constants frozen from a sweep over meshes n = 1..8 and perturbation families.
    constexpr double c1 = 1.2;
    constexpr double c2 = 2.0;
    const ProblemData p = manufactured(ManufacturedCase::smooth_square);
    const auto rule = tri_rule(RuleKind::high);
    int pairs = 0;
    for (int n : {1, 2, 4, 8}) {
        const Mesh m = make_crisscross_unit_square(n);
        const auto ctx = make_ctx(p, m, RuleKind::high);
        for (int s = 0; s < 6; ++s) {
            const double amp = s == 0 ? 0.0 : 0.3 / s;
            const oracle::RandomSmooth pert(300 + s);
            const SmoothField w = s == 0 ? detail::zero_field : SmoothField([&, amp](const Point& x) {
                return smooth_square_solution(x) + amp * pert(x);
            });
            const double e = h1_error(p, w, refine_uniform(m, n < 4 ? 2 : 1), rule);
            const auto rep = estimate(ctx, ctx.sample(w), Formulation::weak_bubble);
            EXPECT_LE(rep.eta(), c1 * e) << n << " " << s;
            EXPECT_LE(e, c2 * (rep.eta() + rep.rho())) << n << " " << s;
            ++pairs;
        }
    }
    EXPECT_GE(pairs, 20);
}
