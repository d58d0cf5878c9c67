#pragma once

#include <nnest/estimators.hpp>
#include <nnest/network.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>

namespace nnest {

enum class LossKind { wb, br, pmod, pinn, wb_eta_only };

inline std::string to_string(LossKind k)
{
    switch (k) {
    case LossKind::wb: return "wb";
    case LossKind::br: return "br";
    case LossKind::pmod: return "pmod";
    case LossKind::pinn: return "pinn";
    case LossKind::wb_eta_only: return "wb_eta_only";
    }
    return "unknown";
}

inline LossKind loss_kind_from_string(const std::string& s)
{
    for (LossKind k : {LossKind::wb, LossKind::br, LossKind::pmod, LossKind::pinn, LossKind::wb_eta_only})
        if (to_string(k) == s) return k;
    throw std::invalid_argument("unknown loss kind '" + s + "'");
}

/**
 * Loss functional selection. The polynomial degrees are fixed by the kind (wb: k = m = 0,
 * br: k = 1, pmod: k = 0, boundary: lowest-order Raviart-Thomas). The pinn sample counts default
 * to the quadrature-node counts of the mesh and alpha defaults to the boundary count.
 */
struct LossSpec {
    LossKind kind = LossKind::wb;
    std::uint64_t seed = 0;
    int interior_samples = 0;
    int boundary_samples = 0;
    double alpha = 0.0;

    bool estimator_based() const { return kind != LossKind::pinn; }
};

struct LossEvaluation {
    double value = 0.0;
    std::optional<EstimatorReport> report;  ///< estimator-based kinds
    std::vector<double> per_element;        ///< local contributions L[T], summing to value
    double interior_term = std::numeric_limits<double>::quiet_NaN();
    double boundary_term = std::numeric_limits<double>::quiet_NaN();
    int num_interior = 0;
    int num_boundary = 0;
};

/// Points at which a loss samples its trial function.
struct EvaluationPoints {
    std::vector<Point> volume;
    std::vector<Point> boundary;
};

/// Trial function jets: the network, or mask * network when a mask is given.
inline FieldSamples trial_samples(const MlpParams& params, const std::optional<SmoothField>& mask,
                                  const EvaluationPoints& pts)
{
    std::vector<Point> all = pts.volume;
    all.insert(all.end(), pts.boundary.begin(), pts.boundary.end());
    std::vector<Jet2> jets = forward_jets(params, all);
    if (mask)
        for (std::size_t i = 0; i < all.size(); ++i) jets[i] = multiply((*mask)(all[i]), jets[i]);
    FieldSamples s;
    s.volume.assign(jets.begin(), jets.begin() + pts.volume.size());
    s.boundary.assign(jets.begin() + pts.volume.size(), jets.end());
    return s;
}

/// Parameter gradient of sum <adjoint, jets> for the trial function of trial_samples().
inline Eigen::VectorXd trial_pullback(const MlpParams& params, const std::optional<SmoothField>& mask,
                                      const EvaluationPoints& pts, const FieldSamples& adjoint)
{
    std::vector<Point> all = pts.volume;
    all.insert(all.end(), pts.boundary.begin(), pts.boundary.end());
    std::vector<Jet2> cot = adjoint.volume;
    cot.insert(cot.end(), adjoint.boundary.begin(), adjoint.boundary.end());
    if (mask)
        for (std::size_t i = 0; i < all.size(); ++i) cot[i] = multiply_pullback((*mask)(all[i]), cot[i]);
    return jet_vjp(params, all, cot);
}

/// Uniform samples in the mesh domain and on its boundary; deterministic in (seed, round).
inline EvaluationPoints uniform_samples(const Mesh& mesh, int n_interior, int n_boundary, std::uint64_t seed,
                                        std::uint64_t round)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(round), static_cast<std::uint32_t>(round >> 32)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> areas(mesh.num_elements()), lengths(mesh.num_boundary_facets());
    for (int e = 0; e < mesh.num_elements(); ++e) areas[e] = mesh.area(e);
    for (int k = 0; k < mesh.num_boundary_facets(); ++k) lengths[k] = mesh.facet_length(k);
    std::discrete_distribution<int> pick_element(areas.begin(), areas.end());
    std::discrete_distribution<int> pick_facet(lengths.begin(), lengths.end());
    EvaluationPoints pts;
    pts.volume.reserve(n_interior);
    for (int i = 0; i < n_interior; ++i) {
        const auto p = mesh.corners(pick_element(rng));
        double a = unit(rng), b = unit(rng);
        if (a + b > 1.0) {
            a = 1.0 - a;
            b = 1.0 - b;
        }
        pts.volume.push_back(p[0] + a * (p[1] - p[0]) + b * (p[2] - p[0]));
    }
    pts.boundary.reserve(n_boundary);
    for (int i = 0; i < n_boundary; ++i) {
        const auto& f = mesh.boundary_facets()[pick_facet(rng)];
        const Point& a = mesh.vertices()[f.vertices[0]];
        const Point& b = mesh.vertices()[f.vertices[1]];
        pts.boundary.push_back(a + unit(rng) * (b - a));
    }
    return pts;
}

/**
 * One training loss on a fixed context (mesh, rules, problem). Estimator-based kinds sample the
 * trial function at the quadrature points of the context; pinn draws fresh uniform samples per
 * round.
 */
class Loss {
public:
    Loss(LossSpec spec, std::shared_ptr<const EstimatorContext> ctx, std::optional<SmoothField> mask = {})
        : _spec(spec), _ctx(std::move(ctx)), _mask(std::move(mask))
    {
    }

    const LossSpec& spec() const { return _spec; }
    const EstimatorContext& context() const { return *_ctx; }
    std::shared_ptr<const EstimatorContext> context_ptr() const { return _ctx; }
    const std::optional<SmoothField>& mask() const { return _mask; }

    int interior_samples() const
    {
        return _spec.interior_samples > 0 ? _spec.interior_samples : _ctx->points().num_volume();
    }
    int boundary_samples() const
    {
        return _spec.boundary_samples > 0 ? _spec.boundary_samples : _ctx->points().num_boundary();
    }
    double alpha() const { return _spec.alpha > 0.0 ? _spec.alpha : boundary_samples(); }

    EvaluationPoints points(std::uint64_t round = 0) const
    {
        if (_spec.kind == LossKind::pinn)
            return uniform_samples(_ctx->mesh(), interior_samples(), boundary_samples(), _spec.seed, round);
        return {_ctx->points().volume_points, _ctx->points().boundary_points};
    }

    /// Loss of a trial function sampled at points(round); accumulates d(loss)/d(jets) into adjoint.
    LossEvaluation evaluate_samples(const FieldSamples& w, FieldSamples* adjoint, std::uint64_t round = 0) const
    {
        if (_spec.kind == LossKind::pinn) return pinn(w, adjoint, points(round));
        LossEvaluation out;
        const auto& ctx = *_ctx;
        PartResult eo, ro;
        Formulation form = Formulation::weak_bubble;
        switch (_spec.kind) {
        case LossKind::wb:
            eo = eta_omega_weak(ctx, w, WeakSpace::bubble, adjoint);
            ro = rho_omega_weak(ctx, w, WeakSpace::bubble, adjoint);
            break;
        case LossKind::wb_eta_only:
            eo = eta_omega_weak(ctx, w, WeakSpace::bubble, adjoint);
            ro = rho_omega_weak(ctx, w, WeakSpace::bubble, nullptr);
            break;
        case LossKind::br:
            form = Formulation::broken;
            eo = eta_omega_broken(ctx, w, adjoint);
            ro = rho_omega_broken(ctx, w, adjoint);
            break;
        case LossKind::pmod:
            form = Formulation::strong;
            std::tie(eo, ro) = eta_rho_strong(ctx, w, 0, adjoint);
            break;
        case LossKind::pinn: break;
        }
        const PartResult eg = eta_gamma_hdiv(ctx, w, adjoint);
        const bool eta_only = _spec.kind == LossKind::wb_eta_only;
        const PartResult rg = rho_gamma(ctx, w, eta_only ? nullptr : adjoint);
        out.report = localize(ctx, form, eo, ro, eg, rg);
        const auto& rep = *out.report;
        out.per_element.resize(rep.num_elements);
        for (int e = 0; e < rep.num_elements; ++e) {
            const auto& c = rep.per_element[e];
            out.per_element[e] = eta_only ? c.eta_omega2 + c.eta_gamma2 : c.total();
        }
        out.value = eta_only ? rep.eta_omega * rep.eta_omega + rep.eta_gamma * rep.eta_gamma : rep.sum_of_squares();
        return out;
    }

    LossEvaluation evaluate(const SmoothField& w, std::uint64_t round = 0) const
    {
        const auto pts = points(round);
        FieldSamples s;
        for (const auto& x : pts.volume) s.volume.push_back(w(x));
        for (const auto& x : pts.boundary) s.boundary.push_back(w(x));
        return evaluate_samples(s, nullptr, round);
    }

    /// Loss of the network (times the mask, if any) and, when grad is given, its parameter gradient.
    LossEvaluation evaluate(const MlpParams& params, Eigen::VectorXd* grad = nullptr, std::uint64_t round = 0) const
    {
        const auto pts = points(round);
        const FieldSamples w = trial_samples(params, _mask, pts);
        if (!grad) return evaluate_samples(w, nullptr, round);
        FieldSamples adjoint = FieldSamples::zeros(static_cast<int>(w.volume.size()), static_cast<int>(w.boundary.size()));
        LossEvaluation out = evaluate_samples(w, &adjoint, round);
        *grad = trial_pullback(params, _mask, pts, adjoint);
        return out;
    }

private:
    LossEvaluation pinn(const FieldSamples& w, FieldSamples* adjoint, const EvaluationPoints& pts) const
    {
        const auto& problem = _ctx->problem();
        const double area = _ctx->mesh().domain_area();
        const int n = static_cast<int>(pts.volume.size());
        const int m = static_cast<int>(pts.boundary.size());
        LossEvaluation out;
        out.num_interior = n;
        out.num_boundary = m;
        double si = 0.0, sb = 0.0;
        for (int j = 0; j < n; ++j) {
            const ResidualForm form = residual_form(problem, pts.volume[j]);
            const double r = form.apply(w.volume[j]);
            si += r * r;
            if (adjoint) adjoint->volume[j] += form.pullback(2.0 * area / n * r);
        }
        const double a = alpha();
        for (int k = 0; k < m; ++k) {
            const double d = w.boundary[k].value - problem.dirichlet(pts.boundary[k]).value;
            sb += d * d;
            if (adjoint) adjoint->boundary[k].value += 2.0 * a / m * d;
        }
        out.interior_term = n > 0 ? area / n * si : 0.0;
        out.boundary_term = m > 0 ? a / m * sb : 0.0;
        out.value = out.interior_term + out.boundary_term;
        return out;
    }

    LossSpec _spec;
    std::shared_ptr<const EstimatorContext> _ctx;
    std::optional<SmoothField> _mask;
};

/// Exact gradient of the loss with respect to the flat network parameters.
inline Eigen::VectorXd param_gradient(const MlpParams& params, const Loss& loss, std::uint64_t round = 0)
{
    Eigen::VectorXd g;
    loss.evaluate(params, &g, round);
    return g;
}

/// H1 error of network trial functions against the exact solution, on a fixed evaluation mesh.
class ErrorEvaluator {
public:
    ErrorEvaluator(const ProblemData& problem, const Mesh& mesh, RuleKind kind = RuleKind::high)
    {
        if (!problem.exact_solution) throw std::invalid_argument("problem has no exact solution");
        const auto qp = make_quadrature_points(mesh, kind);
        _points = qp.volume_points;
        _weights = qp.volume_weights;
        _exact.reserve(_points.size());
        for (const auto& x : _points) _exact.push_back((*problem.exact_solution)(x));
    }

    double h1_error(const std::vector<Jet2>& w) const
    {
        double s = 0.0;
        for (std::size_t i = 0; i < _points.size(); ++i) {
            const double dv = _exact[i].value - w[i].value;
            s += _weights[i] * ((_exact[i].grad - w[i].grad).squaredNorm() + dv * dv);
        }
        return std::sqrt(s);
    }

    double h1_error(const MlpParams& params, const std::optional<SmoothField>& mask = {}) const
    {
        return h1_error(trial_samples(params, mask, {_points, {}}).volume);
    }

    double h1_error(const SmoothField& w) const
    {
        std::vector<Jet2> jets;
        jets.reserve(_points.size());
        for (const auto& x : _points) jets.push_back(w(x));
        return h1_error(jets);
    }

    int size() const { return static_cast<int>(_points.size()); }

private:
    std::vector<Point> _points;
    std::vector<double> _weights;
    std::vector<Jet2> _exact;
};

/// sqrt(loss) / error, or nullopt when the error is below 1e-14.
inline std::optional<double> loss_error_ratio(double loss, double error)
{
    if (!(error >= 1e-14)) return std::nullopt;
    return std::sqrt(std::max(0.0, loss)) / error;
}

}  // namespace nnest
