#pragma once

#include <nnest/fespace.hpp>
#include <nnest/problem.hpp>

#include <cmath>
#include <memory>
#include <string>
#include <vector>

namespace nnest {

/// Jets of a trial function at the volume and boundary quadrature points of a context.
struct FieldSamples {
    std::vector<Jet2> volume;
    std::vector<Jet2> boundary;

    static FieldSamples zeros(int num_volume, int num_boundary)
    {
        return {std::vector<Jet2>(num_volume), std::vector<Jet2>(num_boundary)};
    }
};

/**
 * Problem data, mesh, test spaces and one pair of quadrature rules, with every coefficient
 * pre-evaluated at the quadrature points. Estimators are pure functions of a context and the
 * jets of the trial function at its points.
 */
class EstimatorContext {
public:
    EstimatorContext(std::shared_ptr<const ProblemData> problem, std::shared_ptr<const TestSpaces> spaces,
                     RuleKind kind)
        : EstimatorContext(std::move(problem), std::move(spaces), tri_rule(kind), seg_rule(kind))
    {
        _kind = kind;
    }

    EstimatorContext(std::shared_ptr<const ProblemData> problem, std::shared_ptr<const TestSpaces> spaces,
                     TriangleRule vrule, SegmentRule brule)
        : _problem(std::move(problem)), _spaces(std::move(spaces))
    {
        const Mesh& m = mesh();
        _points = make_quadrature_points(m, std::move(vrule), std::move(brule));
        const int nv = _points.num_volume();
        _forms.reserve(nv);
        _diffusion.reserve(nv);
        _advection.reserve(nv);
        _reaction.reserve(nv);
        for (const auto& x : _points.volume_points) {
            _forms.push_back(residual_form(*_problem, x));
            _diffusion.push_back(_problem->diffusion(x));
            _advection.push_back(_problem->advection(x));
            _reaction.push_back(_problem->reaction(x));
        }
        _element_h = mesh_size(m);
        const int nb = _points.boundary_per_facet();
        for (int k = 0; k < m.num_boundary_facets(); ++k) {
            const auto& f = m.boundary_facets()[k];
            const Point d = m.vertices()[f.vertices[1]] - m.vertices()[f.vertices[0]];
            _facet_h.push_back(d.norm());
            _tangents.push_back(d.normalized());
            for (int q = 0; q < nb; ++q) _dirichlet.push_back(_problem->dirichlet(_points.boundary_points[k * nb + q]));
        }
    }

    const ProblemData& problem() const { return *_problem; }
    std::shared_ptr<const ProblemData> problem_ptr() const { return _problem; }
    const TestSpaces& spaces() const { return *_spaces; }
    std::shared_ptr<const TestSpaces> spaces_ptr() const { return _spaces; }
    const Mesh& mesh() const { return _spaces->mesh(); }
    const QuadraturePoints& points() const { return _points; }
    RuleKind rule_kind() const { return _kind; }

    const std::vector<ResidualForm>& residual_forms() const { return _forms; }
    const std::vector<Eigen::Matrix2d>& diffusion() const { return _diffusion; }
    const std::vector<Eigen::Vector2d>& advection() const { return _advection; }
    const std::vector<double>& reaction() const { return _reaction; }
    const std::vector<Jet2>& dirichlet() const { return _dirichlet; }
    const std::vector<Eigen::Vector2d>& facet_tangents() const { return _tangents; }
    const std::vector<double>& element_h() const { return _element_h; }
    const std::vector<double>& facet_h() const { return _facet_h; }

    FieldSamples sample(const SmoothField& w) const
    {
        FieldSamples s;
        s.volume.reserve(_points.num_volume());
        for (const auto& x : _points.volume_points) s.volume.push_back(w(x));
        s.boundary.reserve(_points.num_boundary());
        for (const auto& x : _points.boundary_points) s.boundary.push_back(w(x));
        return s;
    }

    /// Strong residual f + div(A grad w) - beta . grad w - c w at every volume point.
    std::vector<double> residual_values(const FieldSamples& w) const
    {
        std::vector<double> r(_forms.size());
        for (std::size_t i = 0; i < r.size(); ++i) r[i] = _forms[i].apply(w.volume[i]);
        return r;
    }

private:
    std::shared_ptr<const ProblemData> _problem;
    std::shared_ptr<const TestSpaces> _spaces;
    RuleKind _kind = RuleKind::standard;
    QuadraturePoints _points;
    std::vector<ResidualForm> _forms;
    std::vector<Eigen::Matrix2d> _diffusion;
    std::vector<Eigen::Vector2d> _advection;
    std::vector<double> _reaction;
    std::vector<Jet2> _dirichlet;
    std::vector<Eigen::Vector2d> _tangents;
    std::vector<double> _element_h;
    std::vector<double> _facet_h;
};

/**
 * One estimator part: its value, the per-element squared contributions (summing to value^2)
 * and, for dual-norm parts, the coefficients of the discrete Riesz representative.
 */
struct PartResult {
    double value = 0.0;
    std::vector<double> local_sq;
    Eigen::VectorXd representative;
};

/**
 * Every estimator below optionally accumulates `scale * d(value^2)/d(jets)` into `adjoint`,
 * which must have the shape of the samples. The Riesz matrices do not depend on the trial
 * function, so for dual norms d(r.P^{-1}r) = 2 (P^{-1}r) . dr.
 */
enum class WeakSpace { lagrange, bubble };

namespace detail {
inline double local_energy(const Eigen::MatrixXd& gram, const DofMap& map, int e, const Eigen::VectorXd& x)
{
    Eigen::VectorXd xl = Eigen::VectorXd::Zero(map.local_size);
    for (int i = 0; i < map.local_size; ++i)
        if (map.element_dofs[e][i] >= 0) xl[i] = x[map.element_dofs[e][i]];
    return xl.dot(gram * xl);
}

inline PartResult localize_representative(const EstimatorContext& ctx, SpaceKind kind, const Eigen::VectorXd& r)
{
    const auto& spaces = ctx.spaces();
    const auto dn = dual_norm(spaces.riesz(kind), r);
    PartResult out;
    out.value = dn.value;
    out.representative = dn.representative;
    const auto& map = spaces.dofs(kind);
    const auto& grams = spaces.element_grams(kind);
    out.local_sq.resize(ctx.mesh().num_elements());
    for (int e = 0; e < ctx.mesh().num_elements(); ++e)
        out.local_sq[e] = local_energy(grams[e], map, e, dn.representative);
    return out;
}

/// Sum_T weight_T * ||values||^2_T with the volume quadrature.
inline PartResult weighted_volume_norm(const EstimatorContext& ctx, const std::vector<double>& values,
                                       const std::vector<double>& element_weight, FieldSamples* adjoint, double scale)
{
    const auto& qp = ctx.points();
    const int nq = qp.volume_per_element();
    PartResult out;
    out.local_sq.assign(ctx.mesh().num_elements(), 0.0);
    double total = 0.0;
    for (int e = 0; e < ctx.mesh().num_elements(); ++e) {
        double s = 0.0;
        for (int q = 0; q < nq; ++q) {
            const int i = e * nq + q;
            s += qp.volume_weights[i] * values[i] * values[i];
            if (adjoint) {
                const double c = scale * 2.0 * element_weight[e] * qp.volume_weights[i] * values[i];
                adjoint->volume[i] += ctx.residual_forms()[i].pullback(c);
            }
        }
        out.local_sq[e] = element_weight[e] * s;
        total += out.local_sq[e];
    }
    out.value = std::sqrt(total);
    return out;
}
}  // namespace detail

/**
 * Volume dual norm for the weak formulation: sup over the test space of
 * (<f,v> - <A grad w, grad v> - <beta.grad w + c w, v>) / ||grad v||. Test functions vanish on the
 * boundary and w is globally smooth, so the functional equals v -> <r(w), v>; that form is used
 * because it is exactly zero at the solution under any quadrature.
 */
inline PartResult eta_omega_weak(const EstimatorContext& ctx, const FieldSamples& w, WeakSpace space,
                                 FieldSamples* adjoint = nullptr, double scale = 1.0)
{
    const SpaceKind kind = space == WeakSpace::lagrange ? SpaceKind::lagrange_h10_p1 : SpaceKind::bubble_enriched_p1_b0;
    const auto& map = ctx.spaces().dofs(kind);
    const auto& mesh = ctx.mesh();
    const auto& qp = ctx.points();
    const int nq = qp.volume_per_element();
    const auto res = ctx.residual_values(w);

    auto test_value = [&](int e, int q, auto&& fn) {
        const auto b = scalar_basis(kind, barycentric_gradients(mesh.corners(e)), qp.volume_rule.points[q]);
        const auto& dofs = map.element_dofs[e];
        for (int k = 0; k < map.local_size; ++k)
            if (dofs[k] >= 0) fn(dofs[k], b.value[k]);
    };

    Eigen::VectorXd r = Eigen::VectorXd::Zero(map.dim);
    for (int e = 0; e < mesh.num_elements(); ++e)
        for (int q = 0; q < nq; ++q) {
            const int i = e * nq + q;
            test_value(e, q, [&](int dof, double v) { r[dof] += qp.volume_weights[i] * res[i] * v; });
        }
    PartResult out = detail::localize_representative(ctx, kind, r);

    if (adjoint) {
        const Eigen::VectorXd& x = out.representative;
        for (int e = 0; e < mesh.num_elements(); ++e)
            for (int q = 0; q < nq; ++q) {
                const int i = e * nq + q;
                double phi = 0.0;
                test_value(e, q, [&](int dof, double v) { phi += x[dof] * v; });
                adjoint->volume[i] += ctx.residual_forms()[i].pullback(scale * 2.0 * qp.volume_weights[i] * phi);
            }
    }
    return out;
}

/**
 * Volume remainder for the weak formulation with a smooth trial function (no jump terms):
 * lagrange: sqrt(sum_T h_T^2 ||r||_T^2); bubble: the same with (1 - pi^0) r.
 */
inline PartResult rho_omega_weak(const EstimatorContext& ctx, const FieldSamples& w, WeakSpace space,
                                 FieldSamples* adjoint = nullptr, double scale = 1.0)
{
    std::vector<double> r = ctx.residual_values(w);
    if (space == WeakSpace::bubble) {
        const auto mean = project_values(ctx.points(), r, 0);
        for (std::size_t i = 0; i < r.size(); ++i) r[i] -= mean[i];
    }
    std::vector<double> h2 = ctx.element_h();
    for (auto& h : h2) h *= h;
    return detail::weighted_volume_norm(ctx, r, h2, adjoint, scale);
}

/**
 * Volume dual norm for the broken formulation with P1 test functions in the broken H1 norm. For
 * a globally smooth trial function the functional reduces to v -> <r_T(w), v>.
 */
inline PartResult eta_omega_broken(const EstimatorContext& ctx, const FieldSamples& w, FieldSamples* adjoint = nullptr,
                                   double scale = 1.0)
{
    constexpr SpaceKind kind = SpaceKind::broken_p1;
    const auto& map = ctx.spaces().dofs(kind);
    const auto& qp = ctx.points();
    const int nq = qp.volume_per_element();
    const auto res = ctx.residual_values(w);
    Eigen::VectorXd r = Eigen::VectorXd::Zero(map.dim);
    for (int e = 0; e < ctx.mesh().num_elements(); ++e)
        for (int q = 0; q < nq; ++q) {
            const int i = e * nq + q;
            for (int k = 0; k < 3; ++k)
                r[map.element_dofs[e][k]] += qp.volume_weights[i] * res[i] * qp.volume_rule.points[q][k];
        }
    PartResult out = detail::localize_representative(ctx, kind, r);
    if (adjoint) {
        const Eigen::VectorXd& x = out.representative;
        for (int e = 0; e < ctx.mesh().num_elements(); ++e)
            for (int q = 0; q < nq; ++q) {
                const int i = e * nq + q;
                const auto& l = qp.volume_rule.points[q];
                const auto& d = map.element_dofs[e];
                const double phi = x[d[0]] * l[0] + x[d[1]] * l[1] + x[d[2]] * l[2];
                adjoint->volume[i] += ctx.residual_forms()[i].pullback(scale * 2.0 * qp.volume_weights[i] * phi);
            }
    }
    return out;
}

/// sqrt(sum_T h_T^2 ||(1 - pi^1) r||_T^2).
inline PartResult rho_omega_broken(const EstimatorContext& ctx, const FieldSamples& w, FieldSamples* adjoint = nullptr,
                                   double scale = 1.0)
{
    std::vector<double> r = ctx.residual_values(w);
    const auto p1 = project_values(ctx.points(), r, 1);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= p1[i];
    std::vector<double> h2 = ctx.element_h();
    for (auto& h : h2) h *= h;
    return detail::weighted_volume_norm(ctx, r, h2, adjoint, scale);
}

/// The two computable terms equivalent to the broken volume dual norm.
struct BrokenEquivalence {
    double mean_part = 0.0;       ///< ||pi^0 r||
    double oscillation_part = 0.0;  ///< ||h (1 - pi^0) pi^1 r||
};

inline BrokenEquivalence eta_omega_broken_equiv(const EstimatorContext& ctx, const FieldSamples& w)
{
    const auto r = ctx.residual_values(w);
    const auto p0 = project_values(ctx.points(), r, 0);
    const auto p1 = project_values(ctx.points(), r, 1);
    std::vector<double> osc(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) osc[i] = p1[i] - p0[i];
    const std::vector<double> ones(ctx.mesh().num_elements(), 1.0);
    std::vector<double> h2 = ctx.element_h();
    for (auto& h : h2) h *= h;
    BrokenEquivalence out;
    out.mean_part = detail::weighted_volume_norm(ctx, p0, ones, nullptr, 0.0).value;
    out.oscillation_part = detail::weighted_volume_norm(ctx, osc, h2, nullptr, 0.0).value;
    return out;
}

/// Strong formulation: eta = ||pi^k r||, rho = ||(1 - pi^k) r||.
inline std::pair<PartResult, PartResult> eta_rho_strong(const EstimatorContext& ctx, const FieldSamples& w, int k = 0,
                                                        FieldSamples* adjoint = nullptr, double eta_scale = 1.0,
                                                        double rho_scale = 1.0)
{
    const auto r = ctx.residual_values(w);
    const auto pr = project_values(ctx.points(), r, k);
    std::vector<double> rest(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) rest[i] = r[i] - pr[i];
    const std::vector<double> ones(ctx.mesh().num_elements(), 1.0);
    return {detail::weighted_volume_norm(ctx, pr, ones, adjoint, eta_scale),
            detail::weighted_volume_norm(ctx, rest, ones, adjoint, rho_scale)};
}

/**
 * Boundary dual norm: sup over RT0 of <w - g, tau.n> / ||tau||_{H(div)}. The functional only
 * touches boundary-edge dofs but the representative spreads through the whole domain.
 */
inline PartResult eta_gamma_hdiv(const EstimatorContext& ctx, const FieldSamples& w, FieldSamples* adjoint = nullptr,
                                 double scale = 1.0)
{
    const auto& mesh = ctx.mesh();
    const auto& map = ctx.spaces().dofs(SpaceKind::rt0);
    const auto& qp = ctx.points();
    const int nb = qp.boundary_per_facet();
    auto facet_sign = [&](int k) {
        const int e = mesh.boundary_facets()[k].element;
        const int ed = mesh.facet_edges()[k];
        int local = 0;
        while (mesh.element_edges()[e][local] != ed) ++local;
        return map.element_signs[e][local];
    };
    Eigen::VectorXd r = Eigen::VectorXd::Zero(map.dim);
    for (int k = 0; k < mesh.num_boundary_facets(); ++k) {
        const double s = facet_sign(k);
        double acc = 0.0;
        for (int q = 0; q < nb; ++q) {
            const int i = k * nb + q;
            acc += qp.boundary_weights[i] * (w.boundary[i].value - ctx.dirichlet()[i].value);
        }
        r[mesh.facet_edges()[k]] += s * acc;
    }
    PartResult out = detail::localize_representative(ctx, SpaceKind::rt0, r);
    if (adjoint) {
        for (int k = 0; k < mesh.num_boundary_facets(); ++k) {
            const double flux = facet_sign(k) * out.representative[mesh.facet_edges()[k]];
            for (int q = 0; q < nb; ++q) {
                const int i = k * nb + q;
                adjoint->boundary[i].value += scale * 2.0 * qp.boundary_weights[i] * flux;
            }
        }
    }
    return out;
}

namespace detail {
/// sum_F (a_F ||w - g||_F^2 + b_F ||d/dt (w - g)||_F^2), attributed to the parent elements.
inline PartResult boundary_norm(const EstimatorContext& ctx, const FieldSamples& w, const std::vector<double>& value_weight,
                                const std::vector<double>& tangent_weight, FieldSamples* adjoint, double scale)
{
    const auto& mesh = ctx.mesh();
    const auto& qp = ctx.points();
    const int nb = qp.boundary_per_facet();
    PartResult out;
    out.local_sq.assign(mesh.num_elements(), 0.0);
    double total = 0.0;
    for (int k = 0; k < mesh.num_boundary_facets(); ++k) {
        const Eigen::Vector2d& t = ctx.facet_tangents()[k];
        double s = 0.0;
        for (int q = 0; q < nb; ++q) {
            const int i = k * nb + q;
            const double wq = qp.boundary_weights[i];
            const double dv = w.boundary[i].value - ctx.dirichlet()[i].value;
            const double dt = t.dot(w.boundary[i].grad - ctx.dirichlet()[i].grad);
            s += wq * (value_weight[k] * dv * dv + tangent_weight[k] * dt * dt);
            if (adjoint) {
                adjoint->boundary[i].value += scale * 2.0 * wq * value_weight[k] * dv;
                adjoint->boundary[i].grad += (scale * 2.0 * wq * tangent_weight[k] * dt) * t;
            }
        }
        out.local_sq[mesh.boundary_facets()[k].element] += s;
        total += s;
    }
    out.value = std::sqrt(total);
    return out;
}
}  // namespace detail

/// ||h_F^{1/2} d/dt (w - g)||_Gamma.
inline PartResult rho_gamma(const EstimatorContext& ctx, const FieldSamples& w, FieldSamples* adjoint = nullptr,
                            double scale = 1.0)
{
    const std::vector<double> zero(ctx.facet_h().size(), 0.0);
    return detail::boundary_norm(ctx, w, zero, ctx.facet_h(), adjoint, scale);
}

/// sqrt(||h_F^{-1/2} (w - g)||^2 + ||h_F^{1/2} d/dt (w - g)||^2): upper bound for the trace error.
inline PartResult pinn_boundary_bound(const EstimatorContext& ctx, const FieldSamples& w,
                                      FieldSamples* adjoint = nullptr, double scale = 1.0)
{
    std::vector<double> inv_h = ctx.facet_h();
    for (auto& h : inv_h) h = 1.0 / h;
    return detail::boundary_norm(ctx, w, inv_h, ctx.facet_h(), adjoint, scale);
}

enum class Formulation { weak_lagrange, weak_bubble, broken, strong };

inline std::string to_string(Formulation f)
{
    switch (f) {
    case Formulation::weak_lagrange: return "weak_lagrange";
    case Formulation::weak_bubble: return "weak_bubble";
    case Formulation::broken: return "broken";
    case Formulation::strong: return "strong";
    }
    return "unknown";
}

struct LocalContribution {
    double eta_omega2 = 0.0;
    double rho_omega2 = 0.0;
    double eta_gamma2 = 0.0;
    double rho_gamma2 = 0.0;

    double total() const { return eta_omega2 + rho_omega2 + eta_gamma2 + rho_gamma2; }
};

struct EstimatorReport {
    double eta_omega = 0.0;
    double rho_omega = 0.0;
    double eta_gamma = 0.0;
    double rho_gamma = 0.0;
    std::vector<LocalContribution> per_element;
    Formulation formulation = Formulation::weak_bubble;
    int num_elements = 0;
    std::string quadrature;

    double eta() const { return std::hypot(eta_omega, eta_gamma); }
    double rho() const { return std::hypot(rho_omega, rho_gamma); }
    double sum_of_squares() const
    {
        return eta_omega * eta_omega + rho_omega * rho_omega + eta_gamma * eta_gamma + rho_gamma * rho_gamma;
    }
};

/// Collects four parts into a report with per-element squared contributions.
inline EstimatorReport localize(const EstimatorContext& ctx, Formulation formulation, const PartResult& eta_omega,
                                const PartResult& rho_omega, const PartResult& eta_gamma, const PartResult& rho_gamma)
{
    EstimatorReport rep;
    rep.formulation = formulation;
    rep.num_elements = ctx.mesh().num_elements();
    rep.quadrature = ctx.rule_kind() == RuleKind::standard ? "standard" : "high";
    rep.eta_omega = eta_omega.value;
    rep.rho_omega = rho_omega.value;
    rep.eta_gamma = eta_gamma.value;
    rep.rho_gamma = rho_gamma.value;
    rep.per_element.resize(rep.num_elements);
    for (int e = 0; e < rep.num_elements; ++e) {
        rep.per_element[e] = {eta_omega.local_sq[e], rho_omega.local_sq[e], eta_gamma.local_sq[e],
                              rho_gamma.local_sq[e]};
    }
    return rep;
}

/// All four parts of one formulation. `adjoint` receives d(sum of squares)/d(jets) when given.
inline EstimatorReport estimate(const EstimatorContext& ctx, const FieldSamples& w, Formulation formulation,
                                FieldSamples* adjoint = nullptr)
{
    PartResult eo, ro;
    switch (formulation) {
    case Formulation::weak_lagrange:
        eo = eta_omega_weak(ctx, w, WeakSpace::lagrange, adjoint);
        ro = rho_omega_weak(ctx, w, WeakSpace::lagrange, adjoint);
        break;
    case Formulation::weak_bubble:
        eo = eta_omega_weak(ctx, w, WeakSpace::bubble, adjoint);
        ro = rho_omega_weak(ctx, w, WeakSpace::bubble, adjoint);
        break;
    case Formulation::broken:
        eo = eta_omega_broken(ctx, w, adjoint);
        ro = rho_omega_broken(ctx, w, adjoint);
        break;
    case Formulation::strong: std::tie(eo, ro) = eta_rho_strong(ctx, w, 0, adjoint); break;
    }
    const PartResult eg = eta_gamma_hdiv(ctx, w, adjoint);
    const PartResult rg = rho_gamma(ctx, w, adjoint);
    return localize(ctx, formulation, eo, ro, eg, rg);
}

/// Convenience: builds a context for (problem, mesh, rule) and evaluates `w` at its points.
inline EstimatorReport estimate(const ProblemData& problem, const SmoothField& w, const Mesh& mesh, RuleKind kind,
                                Formulation formulation)
{
    EstimatorContext ctx(std::make_shared<ProblemData>(problem), std::make_shared<TestSpaces>(mesh), kind);
    return estimate(ctx, ctx.sample(w), formulation);
}

}  // namespace nnest
