#pragma once

// Acceptance criteria shared by the acceptance binary and `nnest verify`. Each criterion prints
// one pass/fail line with the measured quantity and its tolerance.

#include "oracles.hpp"

#include <nnest/experiments.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace acceptance {

using namespace nnest;

struct Result {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

struct Options {
    bool corrupt_quadrature = false;  ///< test hook: perturbs one quadrature weight in criterion 5
    std::string out_dir = "acceptance_runs";
    std::ostream* log = nullptr;      ///< training progress
};

inline std::string fmt(double v)
{
    std::ostringstream os;
    os << std::setprecision(3) << std::scientific << v;
    return os.str();
}

inline std::string fixed(double v)
{
    std::ostringstream os;
    os << std::setprecision(3) << std::fixed << v;
    return os.str();
}

inline void print(std::ostream& os, const Result& r)
{
    os << (r.pass ? "[PASS] " : "[FAIL] ") << std::setw(2) << r.id << ". " << r.name << ": " << r.detail << " ("
       << fixed(r.seconds) << " s)" << std::endl;
}

/// Runs fn, timing it and turning exceptions into failures.
inline Result timed(int id, const std::string& name, const std::function<void(Result&)>& fn)
{
    Result r;
    r.id = id;
    r.name = name;
    const auto start = std::chrono::steady_clock::now();
    try {
        fn(r);
    } catch (const std::exception& e) {
        r.pass = false;
        r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

inline std::shared_ptr<const EstimatorContext> context(const ProblemData& p, const Mesh& m, RuleKind k = RuleKind::standard)
{
    return std::make_shared<const EstimatorContext>(std::make_shared<const ProblemData>(p),
                                                    std::make_shared<const TestSpaces>(m), k);
}

// ---------------------------------------------------------------------------------------------
// Estimator and infrastructure criteria

inline Result strong_identity()
{
    return timed(1, "strong-form identity eta^2 + rho^2 = ||r||^2", [](Result& r) {
        double worst = 0.0;
        for (int s = 0; s < 50; ++s) {
            const int n = 1 + s % 8;  // 4 .. 256 elements
            const ProblemData p = s % 2 ? oracle::variable_coefficients() : manufactured(ManufacturedCase::smooth_square);
            const auto ctx = context(p, make_crisscross_unit_square(n));
            const oracle::RandomSmooth w(1000 + s);
            const auto [eta, rho] = eta_rho_strong(*ctx, ctx->sample(w));
            double direct = 0.0;
            for (int i = 0; i < ctx->points().num_volume(); ++i) {
                const double res = residual(p, w, ctx->points().volume_points[i]);
                direct += ctx->points().volume_weights[i] * res * res;
            }
            worst = std::max(worst, std::abs(eta.value * eta.value + rho.value * rho.value - direct) / direct);
        }
        r.pass = worst <= 1e-12;
        r.detail = "max relative deviation " + fmt(worst) + " over 50 fields (tol 1e-12)";
    });
}

inline Result broken_characterization()
{
    return timed(2, "broken characterization ||pi0 r|| <= eta_br <= ||pi0 r|| + ||h(1-pi0)pi1 r||", [](Result& r) {
        double worst_lower = -1e300, worst_upper = -1e300;
        const Mesh meshes[] = {make_crisscross_unit_square(1), make_crisscross_unit_square(2), make_crisscross_unit_square(4),
                               refine_nvb(make_crisscross_unit_square(2), Marking{0, 5}), make_lshape_rotated(0)};
        for (int s = 0; s < 50; ++s) {
            const ProblemData p = s % 2 ? oracle::variable_coefficients() : manufactured(ManufacturedCase::smooth_square);
            const auto ctx = context(p, meshes[s % 5]);
            const auto w = ctx->sample(oracle::RandomSmooth(2000 + s));
            const double eta = eta_omega_broken(*ctx, w).value;
            const auto eq = eta_omega_broken_equiv(*ctx, w);
            worst_lower = std::max(worst_lower, eq.mean_part - eta);
            worst_upper = std::max(worst_upper, eta - eq.mean_part - eq.oscillation_part);
        }
        r.pass = worst_lower <= 1e-12 && worst_upper <= 1e-12;
        r.detail = "max lower violation " + fmt(worst_lower) + ", max upper violation " + fmt(worst_upper) +
                   " over 50 fields (slack 1e-12)";
    });
}

inline Result dense_oracle()
{
    return timed(3, "dual norms vs dense brute force", [](Result& r) {
        std::vector<Mesh> meshes = {make_crisscross_unit_square(1), make_crisscross_unit_square(2),
                                    make_crisscross_unit_square(4), make_lshape_rotated(0),
                                    refine_nvb(make_crisscross_unit_square(2), Marking{3}),
                                    refine_nvb(make_lshape_rotated(0), Marking{0, 7})};
        double worst = 0.0;
        int cases = 0;
        for (const Mesh& m : meshes) {
            if (m.num_elements() > 64) continue;
            for (int s = 0; s < 3; ++s) {
                const ProblemData p = s == 1 ? manufactured(ManufacturedCase::smooth_square) : oracle::variable_coefficients();
                const auto ctx = context(p, m);
                const oracle::RandomSmooth w(3000 + s);
                const auto jw = ctx->sample(w);
                auto rel = [](double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); };
                worst = std::max(worst, rel(eta_omega_weak(*ctx, jw, WeakSpace::lagrange).value,
                                            oracle::weak_volume_dual_norm(*ctx, w, SpaceKind::lagrange_h10_p1)));
                worst = std::max(worst, rel(eta_omega_weak(*ctx, jw, WeakSpace::bubble).value,
                                            oracle::weak_volume_dual_norm(*ctx, w, SpaceKind::bubble_enriched_p1_b0)));
                worst = std::max(worst, rel(eta_omega_broken(*ctx, jw).value, oracle::broken_volume_dual_norm(*ctx, w)));
                worst = std::max(worst, rel(eta_gamma_hdiv(*ctx, jw).value, oracle::boundary_dual_norm(*ctx, w)));
                cases += 4;
            }
        }
        r.pass = worst <= 1e-10;
        r.detail = "max relative deviation " + fmt(worst) + " over " + std::to_string(cases) + " norms (tol 1e-10)";
    });
}

inline Result consistency_at_solution()
{
    return timed(4, "consistency at the exact solution", [](Result& r) {
        struct Case {
            std::string name;
            ProblemData problem;
            Mesh mesh;
        };
        const std::vector<Case> cases = {
            {"smooth", manufactured(ManufacturedCase::smooth_square), make_crisscross_unit_square(4)},
            {"boundary layer", manufactured(ManufacturedCase::boundary_layer, 1e-2), make_boundary_layer_mesh()},
            {"L-shape", manufactured(ManufacturedCase::lshape_singular), make_lshape_rotated()}};
        double worst = 0.0;
        std::string where;
        for (const auto& c : cases) {
            const auto ctx = context(c.problem, c.mesh);
            const auto w = ctx->sample(*c.problem.exact_solution);
            for (auto f : {Formulation::weak_lagrange, Formulation::weak_bubble, Formulation::broken, Formulation::strong}) {
                const auto rep = estimate(*ctx, w, f);
                for (double v : {rep.eta_omega, rep.rho_omega, rep.eta_gamma, rep.rho_gamma})
                    if (v > worst) {
                        worst = v;
                        where = c.name;
                    }
            }
            worst = std::max(worst, pinn_boundary_bound(*ctx, w).value);
        }
        r.pass = worst <= 1e-7;
        r.detail = "largest estimator part " + fmt(worst) + (where.empty() ? "" : " (" + where + ")") + " (tol 1e-7)";
    });
}

inline Result quadrature_exactness(bool corrupt)
{
    return timed(5, "quadrature exactness", [corrupt](Result& r) {
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> u(-2.0, 2.0);
        double worst = 0.0;
        for (auto kind : {RuleKind::standard, RuleKind::high}) {
            TriangleRule rule = tri_rule(kind);
            if (corrupt) rule.weights[0] *= 1.001;
            for (int trial = 0; trial < 10; ++trial) {
                std::array<Point, 3> t{Point(u(rng), u(rng)), Point(u(rng), u(rng)), Point(u(rng), u(rng))};
                double area = 0.5 * nnest::detail::cross(t[1] - t[0], t[2] - t[0]);
                if (area < 0) std::swap(t[1], t[2]), area = -area;
                for (int p = 0; p <= rule.exactness_degree; ++p)
                    for (int q = 0; p + q <= rule.exactness_degree; ++q) {
                        double s = 0.0;
                        for (int k = 0; k < rule.size(); ++k) {
                            const Point x = map_to_element(t, rule.points[k]);
                            s += 2.0 * area * rule.weights[k] * std::pow(x.x(), p) * std::pow(x.y(), q);
                        }
                        const double exact = oracle::exact_monomial(t, p, q, area);
                        worst = std::max(worst, std::abs(s - exact) / std::max(1.0, std::abs(exact)));
                    }
            }
            SegmentRule seg = seg_rule(kind);
            if (corrupt) seg.weights[0] *= 1.001;
            const int degree = 2 * seg.size() - 1;
            for (int trial = 0; trial < 10; ++trial) {
                const double a = u(rng), b = a + 0.1 + std::abs(u(rng));
                for (int k = 0; k <= degree; ++k) {
                    double s = 0.0;
                    for (int q = 0; q < seg.size(); ++q) s += (b - a) * seg.weights[q] * std::pow(a + (b - a) * seg.points[q], k);
                    const double exact = (std::pow(b, k + 1) - std::pow(a, k + 1)) / (k + 1);
                    worst = std::max(worst, std::abs(s - exact) / std::max(1.0, std::abs(exact)));
                }
            }
        }
        r.pass = worst <= 1e-12;
        r.detail = "max relative monomial error " + fmt(worst) + " (tol 1e-12)" + (corrupt ? " [corrupted weights]" : "");
    });
}

inline Result derivative_correctness()
{
    return timed(6, "derivative correctness (jets and parameter gradient)", [](Result& r) {
        const MlpParams net = init(3, 10, 6);
        std::mt19937_64 rng(6);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        double jet_worst = 0.0;
        const double h = 1e-4;
        for (int i = 0; i < 50; ++i) {
            const Point x(u(rng), u(rng));
            auto v = [&](const Point& y) { return forward_jet(net, y).value; };
            const Jet2 j = forward_jet(net, x);
            const Point ex(h, 0), ey(0, h);
            const double gx = (v(x + ex) - v(x - ex)) / (2 * h), gy = (v(x + ey) - v(x - ey)) / (2 * h);
            const double lap = (v(x + ex) + v(x - ex) + v(x + ey) + v(x - ey) - 4 * v(x)) / (h * h);
            jet_worst = std::max({jet_worst, std::abs(j.grad.x() - gx) / std::max(1.0, j.grad.norm()),
                                  std::abs(j.grad.y() - gy) / std::max(1.0, j.grad.norm()),
                                  std::abs(j.laplacian() - lap) / std::max(1.0, std::abs(j.laplacian()))});
        }
        ProblemData p = manufactured(ManufacturedCase::smooth_square);
        p.dirichlet = oracle::RandomSmooth(7, 2, 0.5);
        const Loss loss({LossKind::wb}, context(p, make_crisscross_unit_square(1)));
        const MlpParams small = init(2, 4, 8);
        Eigen::VectorXd g;
        loss.evaluate(small, &g);
        double grad_worst = 0.0;
        int compared = 0;
        for (int k = 0; k < small.size(); ++k) {
            MlpParams a = small, b = small;
            a.flat[k] += 1e-6;
            b.flat[k] -= 1e-6;
            const double fd = (loss.evaluate(a).value - loss.evaluate(b).value) / 2e-6;
            if (std::abs(fd) <= 1e-8) continue;
            grad_worst = std::max(grad_worst, std::abs(g[k] - fd) / std::abs(fd));
            ++compared;
        }
        r.pass = jet_worst < 1e-5 && grad_worst < 1e-4;
        r.detail = "jet max rel error " + fmt(jet_worst) + " (tol 1e-5); L_wb gradient max rel error " + fmt(grad_worst) +
                   " over " + std::to_string(compared) + "/" + std::to_string(small.size()) + " components (tol 1e-4)";
    });
}

inline Result mesh_properties()
{
    return timed(7, "NVB conformity and area conservation", [](Result& r) {
        std::mt19937_64 rng(7);
        int nonconforming = 0;
        double area_worst = 0.0;
        for (int seq = 0; seq < 200; ++seq) {
            Mesh m = seq % 3 == 0 ? make_lshape_rotated(0) : make_crisscross_unit_square(1 + seq % 3);
            const double area = m.domain_area();
            for (int step = 0; step < 4; ++step) {
                std::uniform_int_distribution<int> pick(0, m.num_elements() - 1);
                Marking marked;
                for (int k = 0; k < 1 + seq % 4; ++k) marked.push_back(pick(rng));
                m = refine_nvb(m, marked);
                if (!oracle::is_conforming(m)) ++nonconforming;
                area_worst = std::max(area_worst, std::abs(m.domain_area() - area));
            }
        }
        r.pass = nonconforming == 0 && area_worst <= 1e-12;
        r.detail = std::to_string(nonconforming) + " nonconforming meshes in 200 sequences; max area drift " +
                   fmt(area_worst) + " (tol 1e-12)";
    });
}

inline std::vector<Result> run_fast(const Options& opt, std::ostream& os)
{
    std::vector<Result> out;
    for (auto fn : {std::function<Result()>(strong_identity), std::function<Result()>(broken_characterization),
                    std::function<Result()>(dense_oracle), std::function<Result()>(consistency_at_solution),
                    std::function<Result()>([&] { return quadrature_exactness(opt.corrupt_quadrature); }),
                    std::function<Result()>(derivative_correctness), std::function<Result()>(mesh_properties)}) {
        out.push_back(fn());
        print(os, out.back());
    }
    return out;
}

// ---------------------------------------------------------------------------------------------
// Training criteria

/// Ratios sqrt(L)/error over the iterations [first, last] (1-based) that carry an error value.
inline std::vector<double> ratios(const TrainResult& r, int first, int last)
{
    std::vector<double> out;
    for (const auto& rec : r.telemetry)
        if (rec.iter >= first && rec.iter <= last && std::isfinite(rec.ratio)) out.push_back(rec.ratio);
    return out;
}

inline double min_of(const std::vector<double>& v) { return v.empty() ? NAN : *std::min_element(v.begin(), v.end()); }
inline double max_of(const std::vector<double>& v) { return v.empty() ? NAN : *std::max_element(v.begin(), v.end()); }
inline double mean_of(const std::vector<double>& v)
{
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? NAN : s / static_cast<double>(v.size());
}

inline RunConfig training_config(Experiment e, const Options& opt, const std::string& sub)
{
    RunConfig c = RunConfig::defaults(e);
    c.output_dir = opt.out_dir + "/" + sub;
    c.error_every = 1;
    return c;
}

struct SmoothRuns {
    std::optional<ExperimentOutcome> outcome;
    double initial_error = 0.0;
};

inline Result smooth_surrogate(const Options& opt, SmoothRuns& runs)
{
    return timed(8, "smooth problem with L_wb (1500 iterations)", [&](Result& r) {
        RunConfig c = training_config(Experiment::eta_vs_etarho, opt, "eta_vs_etarho");
        c.iterations = 1500;
        const ExperimentSetup setup = experiment_setup(c);
        runs.initial_error = ErrorEvaluator(*setup.problem, setup.error_mesh).h1_error(init(c.layers, c.width, c.seed));
        runs.outcome = run_experiment(c, opt.log);
        const auto& wb = runs.outcome->run("wb");
        const double reduction = wb.final_error / runs.initial_error;
        const auto tail = ratios(wb.result, c.iterations - 199, c.iterations);
        const bool band = tail.size() == 200 && min_of(tail) >= 0.8 && max_of(tail) <= 5.0;
        r.pass = reduction <= 0.1 && band;
        r.detail = "error " + fmt(runs.initial_error) + " -> " + fmt(wb.final_error) + " (factor " + fmt(reduction) +
                   ", need <= 0.1); ratio over final 200 in [" + fixed(min_of(tail)) + ", " + fixed(max_of(tail)) +
                   "] (band [0.8, 5])";
    });
}

inline Result eta_only_surrogate(const SmoothRuns& runs)
{
    return timed(9, "L_wb vs eta-only loss", [&](Result& r) {
        if (!runs.outcome) throw std::runtime_error("criterion 8 runs unavailable");
        const auto& wb = runs.outcome->run("wb");
        const auto& eta = runs.outcome->run("wb_eta_only");
        const int n = runs.outcome->config.iterations;
        const double wb_ratio = mean_of(ratios(wb.result, n - 199, n));
        const double eta_ratio = mean_of(ratios(eta.result, n - 199, n));
        r.pass = wb.final_error < eta.final_error && eta_ratio < wb_ratio;
        r.detail = "final error wb " + fmt(wb.final_error) + " vs eta-only " + fmt(eta.final_error) +
                   "; mean ratio over final 200: wb " + fixed(wb_ratio) + ", eta-only " + fixed(eta_ratio);
    });
}

inline Result adaptive_surrogate(const Options& opt)
{
    return timed(10, "adaptive quadrature from 4 triangles (3000 iterations)", [&](Result& r) {
        RunConfig c = training_config(Experiment::adaptive_quadrature, opt, "adaptive_quadrature");
        c.iterations = 3000;
        const auto out = run_experiment(c, opt.log);
        const auto& ad = out.run("wb_adaptive");
        const auto& fx = out.run("wb_fixed");
        const double final_ratio = ad.final_ratio.value_or(NAN);
        const double fixed_min = min_of(ratios(fx.result, 1, c.iterations));
        r.pass = ad.result.refinements >= 1 && final_ratio >= 0.8 && final_ratio <= 4.0 && fixed_min < 0.5;
        r.detail = std::to_string(ad.result.refinements) + " refinements (" + std::to_string(ad.result.mesh.num_elements()) +
                   " elements); final adaptive ratio " + fixed(final_ratio) + " (band [0.8, 4]); fixed-mesh min ratio " +
                   fixed(fixed_min) + " (need < 0.5)";
    });
}

inline Result lshape_surrogate(const Options& opt)
{
    return timed(11, "L-shape robustness (4000 iterations)", [&](Result& r) {
        RunConfig c = training_config(Experiment::lshape, opt, "lshape");
        c.iterations = 4000;
        const auto out = run_experiment(c, opt.log);
        const auto& ad = out.run("wb_adaptive");
        const auto& fx = out.run("wb_fixed");
        const double ad_min = min_of(ratios(ad.result, 3 * c.iterations / 4 + 1, c.iterations));
        const double fx_min = min_of(ratios(fx.result, 1, c.iterations));
        // Refined elements: generation above every element of the start mesh.
        const Mesh start = experiment_setup(c).start_mesh;
        int start_gen = 0;
        for (const Triangle& t : start.triangles()) start_gen = std::max(start_gen, t.generation);
        int refined = 0, near = 0;
        for (int e = 0; e < ad.result.mesh.num_elements(); ++e) {
            if (ad.result.mesh.triangles()[e].generation <= start_gen) continue;
            ++refined;
            near += ad.result.mesh.centroid(e).norm() < 0.25;
        }
        const double share = refined ? static_cast<double>(near) / refined : 0.0;
        r.pass = ad_min > 0.5 && fx_min < 0.1 && share >= 0.3;
        r.detail = "adaptive min ratio over final quarter " + fixed(ad_min) + " (need > 0.5); fixed-mesh min ratio " +
                   fixed(fx_min) + " (need < 0.1); " + fixed(100 * share) + "% of " +
                   std::to_string(refined) + " refined elements within 0.25 of the corner (need >= 30%)";
    });
}

inline std::vector<Result> run_training(const Options& opt, std::ostream& os)
{
    std::vector<Result> out;
    SmoothRuns smooth;
    out.push_back(smooth_surrogate(opt, smooth));
    print(os, out.back());
    out.push_back(eta_only_surrogate(smooth));
    print(os, out.back());
    out.push_back(adaptive_surrogate(opt));
    print(os, out.back());
    out.push_back(lshape_surrogate(opt));
    print(os, out.back());
    return out;
}

inline bool all_pass(const std::vector<Result>& v)
{
    return std::all_of(v.begin(), v.end(), [](const Result& r) { return r.pass; });
}

}  // namespace acceptance
