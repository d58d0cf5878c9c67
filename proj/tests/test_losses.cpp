#include "oracles.hpp"

#include <nnest/losses.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace nnest;

namespace {

std::shared_ptr<const EstimatorContext> make_ctx(const ProblemData& p, const Mesh& m, RuleKind kind = RuleKind::standard)
{
    return std::make_shared<const EstimatorContext>(std::make_shared<const ProblemData>(p),
                                                    std::make_shared<const TestSpaces>(m), kind);
}

const LossKind all_kinds[] = {LossKind::wb, LossKind::br, LossKind::pmod, LossKind::pinn, LossKind::wb_eta_only};

SmoothField square_bubble()
{
    return [](const Point& x) {
        Jet2 b;
        b.value = x.x() * (1 - x.x()) * x.y() * (1 - x.y());
        b.grad = Eigen::Vector2d((1 - 2 * x.x()) * x.y() * (1 - x.y()), (1 - 2 * x.y()) * x.x() * (1 - x.x()));
        b.hess = {-2 * x.y() * (1 - x.y()), (1 - 2 * x.x()) * (1 - 2 * x.y()), -2 * x.x() * (1 - x.x())};
        return b;
    };
}

/// Smooth problem with nonzero boundary data and a lower-order term, to exercise every adjoint path.
ProblemData rich_problem()
{
    ProblemData p = manufactured(ManufacturedCase::smooth_square);
    p.advection = [](const Point& x) { return Eigen::Vector2d(0.5, -x.x()); };
    p.reaction = [](const Point&) { return 0.7; };
    p.dirichlet = oracle::RandomSmooth(2, 2, 0.5);
    p.exact_solution.reset();
    return p;
}

}  // namespace

TEST(Losses, KindNames)
{
    for (LossKind k : all_kinds) EXPECT_EQ(loss_kind_from_string(to_string(k)), k);
    EXPECT_THROW(loss_kind_from_string("bogus"), std::invalid_argument);
}

TEST(Losses, ExactSolutionGivesZero)
{
    const ProblemData p = manufactured(ManufacturedCase::smooth_square);
    const auto ctx = make_ctx(p, make_crisscross_unit_square(4));
    for (LossKind k : all_kinds) EXPECT_LE(Loss({k, 3}, ctx).evaluate(*p.exact_solution).value, 1e-8) << to_string(k);
}

TEST(Losses, WeakBubbleIsSumOfParts)
{
    const auto ctx = make_ctx(rich_problem(), make_crisscross_unit_square(3));
    const oracle::RandomSmooth w(4);
    const auto jw = ctx->sample(w);
    const double parts = std::pow(eta_omega_weak(*ctx, jw, WeakSpace::bubble).value, 2) +
                         std::pow(rho_omega_weak(*ctx, jw, WeakSpace::bubble).value, 2) +
                         std::pow(eta_gamma_hdiv(*ctx, jw).value, 2) + std::pow(rho_gamma(*ctx, jw).value, 2);
    const auto wb = Loss({LossKind::wb}, ctx).evaluate(w);
    EXPECT_NEAR(wb.value, parts, 1e-12 * parts);
    const auto eta_only = Loss({LossKind::wb_eta_only}, ctx).evaluate(w);
    EXPECT_LE(eta_only.value, wb.value);
    for (LossKind k : all_kinds) {
        const auto ev = Loss({k, 5}, ctx).evaluate(w);
        EXPECT_GE(ev.value, 0.0);
        if (k == LossKind::pinn) continue;
        double s = 0.0;
        for (double v : ev.per_element) s += v;
        EXPECT_NEAR(s, ev.value, 1e-10 * ev.value) << to_string(k);
    }
}

TEST(Losses, PinnSampleCounts)
{
    const auto ctx = make_ctx(manufactured(ManufacturedCase::smooth_square), make_crisscross_unit_square(4));
    const Loss pinn({LossKind::pinn, 7}, ctx);
    EXPECT_EQ(pinn.interior_samples(), 384);
    EXPECT_EQ(pinn.boundary_samples(), 64);
    EXPECT_EQ(pinn.alpha(), 64.0);
    const auto ev = pinn.evaluate(detail::zero_field);
    EXPECT_EQ(ev.num_interior, 384);
    EXPECT_EQ(ev.num_boundary, 64);
    EXPECT_NEAR(ev.value, ev.interior_term + ev.boundary_term, 1e-15);
}

TEST(Losses, PinnSamplingDeterministicAndResampled)
{
    const Mesh l = make_lshape_rotated(0);
    const auto ctx = make_ctx(manufactured(ManufacturedCase::lshape_singular), l);
    const Loss pinn({LossKind::pinn, 9}, ctx);
    const auto a = pinn.points(0), b = pinn.points(0), c = pinn.points(1);
    EXPECT_EQ(a.volume, b.volume);
    EXPECT_NE(a.volume, c.volume);
    EXPECT_NE(Loss({LossKind::pinn, 10}, ctx).points(0).volume, a.volume);
    // Interior samples lie in the L-shape: rotating back gives (-1,1)^2 minus the third quadrant.
    const double c45 = std::sqrt(0.5);
    for (const auto& x : a.volume) {
        const Point r(c45 * (x.x() - x.y()), c45 * (x.x() + x.y()));
        EXPECT_LE(std::max(std::abs(r.x()), std::abs(r.y())), 1.0 + 1e-12);
        EXPECT_FALSE(r.x() < -1e-12 && r.y() < -1e-12);
    }
}

TEST(Losses, PinnMonteCarloMatchesQuadrature)
{
    // Boundary exact (w = 0 on the boundary, g = 0): the interior term estimates ||f + lap w||^2.
    const ProblemData p = manufactured(ManufacturedCase::smooth_square);
    const Mesh m = make_crisscross_unit_square(4);
    const auto ctx = make_ctx(p, m);
    const SmoothField b = square_bubble();
    const SmoothField w = [&](const Point& x) { return 3.0 * b(x); };
    LossSpec spec{LossKind::pinn, 21, 10000, 200};
    const auto ev = Loss(spec, ctx).evaluate(w);
    EXPECT_NEAR(ev.boundary_term, 0.0, 1e-24);
    const double ref = integrate(refine_uniform(m, 2), tri_rule(RuleKind::high), [&](const Point& x) {
        const double r = residual(p, w, x);
        return r * r;
    });
    EXPECT_NEAR(ev.interior_term, ref, 0.1 * ref);
}

TEST(Losses, FullGradientOfWeakBubbleMatchesFiniteDifferences)
{
    const auto ctx = make_ctx(rich_problem(), make_crisscross_unit_square(1));
    const Loss loss({LossKind::wb}, ctx);
    const MlpParams p = init(2, 4, 31);
    Eigen::VectorXd g;
    loss.evaluate(p, &g);
    const double h = 1e-6;
    int checked = 0;
    for (int k = 0; k < p.size(); ++k) {
        MlpParams a = p, b = p;
        a.flat[k] += h;
        b.flat[k] -= h;
        const double fd = (loss.evaluate(a).value - loss.evaluate(b).value) / (2 * h);
        if (std::abs(fd) <= 1e-8) continue;
        EXPECT_NEAR(g[k], fd, 1e-4 * std::abs(fd)) << k;
        ++checked;
    }
    EXPECT_GT(checked, p.size() / 2);
}

TEST(Losses, DirectionalDerivativesForEveryKind)
{
    const auto ctx = make_ctx(rich_problem(), make_crisscross_unit_square(2));
    const MlpParams p = init(2, 5, 41);
    std::mt19937_64 rng(42);
    std::normal_distribution<double> n;
    for (bool masked : {false, true}) {
        const std::optional<SmoothField> mask = masked ? std::optional<SmoothField>(square_bubble()) : std::nullopt;
        for (LossKind k : all_kinds) {
            const Loss loss({k, 43}, ctx, mask);
            Eigen::VectorXd g;
            loss.evaluate(p, &g, 2);
            for (int dir = 0; dir < 20; ++dir) {
                Eigen::VectorXd d(p.size());
                for (auto& v : d) v = n(rng);
                d.normalize();
                MlpParams a = p, b = p;
                const double h = 1e-6;
                a.flat += h * d;
                b.flat -= h * d;
                const double fd = (loss.evaluate(a, nullptr, 2).value - loss.evaluate(b, nullptr, 2).value) / (2 * h);
                EXPECT_NEAR(g.dot(d), fd, 1e-4 * std::max(std::abs(fd), 1e-6))
                    << to_string(k) << (masked ? " masked" : "") << " dir " << dir;
            }
        }
    }
}

TEST(Losses, ThetaIndependentLossHasZeroGradient)
{
    // A zero mask makes the trial function independent of the parameters.
    const SmoothField zero_mask = detail::zero_field;
    const auto ctx = make_ctx(rich_problem(), make_crisscross_unit_square(2));
    Eigen::VectorXd g;
    Loss({LossKind::wb}, ctx, zero_mask).evaluate(init(1, 3, 1), &g);
    EXPECT_EQ(g.norm(), 0.0);
}

TEST(Losses, RatioGuardAndHomogeneity)
{
    EXPECT_FALSE(loss_error_ratio(1.0, 0.0).has_value());
    EXPECT_FALSE(loss_error_ratio(1.0, 1e-15).has_value());
    EXPECT_DOUBLE_EQ(*loss_error_ratio(4.0, 0.5), 4.0);

    const Mesh m = make_crisscross_unit_square(4);
    const ProblemData p = manufactured(ManufacturedCase::smooth_square);
    ProblemData doubled = p;
    doubled.source = [f = p.source](const Point& x) { return 2.0 * f(x); };
    doubled.exact_solution = [u = *p.exact_solution](const Point& x) { return 2.0 * u(x); };
    const ErrorEvaluator e1(p, refine_uniform(m)), e2(doubled, refine_uniform(m));
    const SmoothField w = [](const Point& x) { return 0.3 * smooth_square_solution(x); };
    const SmoothField w2 = [](const Point& x) { return 0.6 * smooth_square_solution(x); };
    const double r1 = *loss_error_ratio(Loss({LossKind::wb}, make_ctx(p, m)).evaluate(w).value, e1.h1_error(w));
    const double r2 = *loss_error_ratio(Loss({LossKind::wb}, make_ctx(doubled, m)).evaluate(w2).value, e2.h1_error(w2));
    EXPECT_NEAR(r1, r2, 1e-10 * r1);
    EXPECT_FALSE(loss_error_ratio(0.0, e1.h1_error(*p.exact_solution)).has_value());
    EXPECT_NEAR(e1.h1_error(detail::zero_field), h1_error(p, detail::zero_field, refine_uniform(m), tri_rule(RuleKind::high)),
                1e-12);
}
