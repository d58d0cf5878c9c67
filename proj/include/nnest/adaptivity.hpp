#pragma once

#include <nnest/lbfgs.hpp>
#include <nnest/losses.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>

namespace nnest {

struct AdaptConfig {
    bool enabled = true;
    double tau1 = 0.3;
    double tau2 = 0.7;
    int max_elements = 20000;

    void validate() const
    {
        if (!(tau1 > 0.0 && tau1 < 1.0) || !(tau2 > 0.0 && tau2 < 1.0))
            throw std::invalid_argument("adaptivity parameters must lie in (0, 1)");
    }
};

struct TrainOptions {
    int iterations = 1000;
    double loss_threshold = 0.0;  ///< stop once the loss drops below this value
    int error_every = 1;          ///< H1 error evaluation period; 0 disables it
    LbfgsOptions lbfgs;
};

struct IterationRecord {
    int iter = 0;
    double wall_time_s = 0.0;
    double loss = 0.0;
    double eta_omega = std::numeric_limits<double>::quiet_NaN();
    double rho_omega = std::numeric_limits<double>::quiet_NaN();
    double eta_gamma = std::numeric_limits<double>::quiet_NaN();
    double rho_gamma = std::numeric_limits<double>::quiet_NaN();
    double h1_error = std::numeric_limits<double>::quiet_NaN();
    double ratio = std::numeric_limits<double>::quiet_NaN();
    int n_elements = 0;
    int n_quad_volume = 0;
    int n_quad_boundary = 0;
    bool refined = false;
};

inline constexpr const char* telemetry_header =
    "iter,wall_time_s,loss,eta_omega,rho_omega,eta_gamma,rho_gamma,h1_error,ratio,n_elements,n_quad_volume,"
    "n_quad_boundary,refined_flag";

inline void write_telemetry_row(std::ostream& os, const IterationRecord& r)
{
    os << std::setprecision(17) << r.iter << ',' << r.wall_time_s << ',' << r.loss << ',' << r.eta_omega << ','
       << r.rho_omega << ',' << r.eta_gamma << ',' << r.rho_gamma << ',' << r.h1_error << ',' << r.ratio << ','
       << r.n_elements << ',' << r.n_quad_volume << ',' << r.n_quad_boundary << ',' << (r.refined ? 1 : 0) << '\n';
}

/// Appends one CSV row per iteration, flushing after each.
class TelemetryWriter {
public:
    explicit TelemetryWriter(const std::string& path) : _out(path)
    {
        if (!_out) throw std::runtime_error("cannot open telemetry file " + path);
        _out << telemetry_header << '\n';
    }

    void append(const IterationRecord& r)
    {
        write_telemetry_row(_out, r);
        _out.flush();
    }

private:
    std::ofstream _out;
};

/**
 * Elements whose local discrepancy |L[T] - Lhat[T]| exceeds tau2 * Lhat[T] * M, where M is the
 * largest relative local discrepancy. Elements with Lhat[T] <= 1e-14 * Lhat are never marked.
 */
inline Marking mark_discrepancy(const std::vector<double>& local, const std::vector<double>& local_high,
                                double total_high, double tau2)
{
    const double floor = 1e-14 * total_high;
    double m = 0.0;
    for (std::size_t t = 0; t < local.size(); ++t)
        if (local_high[t] > floor) m = std::max(m, std::abs(local[t] - local_high[t]) / local_high[t]);
    Marking marked;
    for (std::size_t t = 0; t < local.size(); ++t)
        if (local_high[t] > floor && std::abs(local[t] - local_high[t]) > tau2 * local_high[t] * m)
            marked.push_back(static_cast<int>(t));
    return marked;
}

struct TrainResult {
    MlpParams params;
    Mesh mesh;
    std::vector<IterationRecord> telemetry;
    int refinements = 0;
    bool cap_reached = false;
};

struct TrainSetup {
    std::shared_ptr<const ProblemData> problem;
    LossSpec loss;
    std::optional<SmoothField> mask;
    AdaptConfig adapt;
    TrainOptions options;
    const ErrorEvaluator* error = nullptr;                   ///< optional H1 error evaluation
    std::function<void(const IterationRecord&)> on_iteration;  ///< optional telemetry sink
};

/**
 * Training with quadrature-driven mesh refinement: after every optimizer step the loss is
 * evaluated with the standard and the high rules; a global relative discrepancy above tau1 marks
 * elements by their local discrepancy and refines them. The optimizer history is cleared after
 * each refinement. With adaptivity disabled this is plain training on a fixed mesh.
 */
inline TrainResult train_adaptive(MlpParams params, Mesh mesh, const TrainSetup& setup)
{
    const bool adaptive = setup.adapt.enabled && setup.loss.estimator_based();
    if (adaptive) setup.adapt.validate();
    const auto start = std::chrono::steady_clock::now();

    std::shared_ptr<const EstimatorContext> ctx, ctx_high;
    std::optional<Loss> loss, loss_high;
    auto rebuild = [&](const Mesh& m) {
        auto spaces = std::make_shared<const TestSpaces>(m);
        ctx = std::make_shared<const EstimatorContext>(setup.problem, spaces, RuleKind::standard);
        loss.emplace(setup.loss, ctx, setup.mask);
        if (adaptive) {
            ctx_high = std::make_shared<const EstimatorContext>(setup.problem, spaces, RuleKind::high);
            loss_high.emplace(setup.loss, ctx_high, setup.mask);
        }
    };
    rebuild(mesh);

    TrainResult result;
    LbfgsState state;
    Eigen::VectorXd x = params.flat;
    Eigen::VectorXd g;
    double f = 0.0;
    bool have_fg = false;

    for (int it = 1; it <= setup.options.iterations; ++it) {
        const std::uint64_t round = static_cast<std::uint64_t>(it);
        std::optional<LossEvaluation> last;
        MlpParams trial = params;
        LossAndGrad fg = [&](const Eigen::VectorXd& xt, Eigen::VectorXd& gt) {
            trial.flat = xt;
            last = loss->evaluate(trial, &gt, round);
            return last->value;
        };
        if (!have_fg || setup.loss.kind == LossKind::pinn) {
            g.resize(x.size());
            f = fg(x, g);
        }
        LbfgsStep step = lbfgs_step(state, x, f, g, fg, setup.options.lbfgs);
        if (step.line_search_failed && state.history() > 0) {
            state.clear();
            const Eigen::VectorXd d = -g / std::max(1.0, g.norm());
            step = armijo_search(x, f, g, d, fg, setup.options.lbfgs);
        }
        if (step.line_search_failed || step.step_length == 0.0) {
            trial.flat = x;
            last = loss->evaluate(trial, nullptr, round);
        }
        x = step.params;
        f = step.loss;
        g = step.grad;
        have_fg = true;
        params.flat = x;

        IterationRecord rec;
        rec.iter = it;
        rec.loss = last->value;
        if (last->report) {
            rec.eta_omega = last->report->eta_omega;
            rec.rho_omega = last->report->rho_omega;
            rec.eta_gamma = last->report->eta_gamma;
            rec.rho_gamma = last->report->rho_gamma;
        }
        rec.n_elements = mesh.num_elements();
        rec.n_quad_volume = ctx->points().num_volume();
        rec.n_quad_boundary = ctx->points().num_boundary();
        if (setup.error && setup.options.error_every > 0 &&
            (it % setup.options.error_every == 0 || it == 1 || it == setup.options.iterations)) {
            rec.h1_error = setup.error->h1_error(params, setup.mask);
            if (auto r = loss_error_ratio(rec.loss, rec.h1_error)) rec.ratio = *r;
        }

        if (adaptive && !result.cap_reached) {
            const LossEvaluation high = loss_high->evaluate(params, nullptr, round);
            if (std::abs(last->value - high.value) > setup.adapt.tau1 * high.value) {
                const Marking marked = mark_discrepancy(last->per_element, high.per_element, high.value, setup.adapt.tau2);
                if (!marked.empty()) {
                    Mesh refined = refine_nvb(mesh, marked);
                    if (refined.num_elements() > setup.adapt.max_elements) {
                        result.cap_reached = true;
                    } else {
                        mesh = std::move(refined);
                        rebuild(mesh);
                        state.clear();
                        have_fg = false;
                        rec.refined = true;
                        ++result.refinements;
                    }
                }
            }
        }
        rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (setup.on_iteration) setup.on_iteration(rec);
        result.telemetry.push_back(rec);
        if (setup.options.loss_threshold > 0.0 && rec.loss < setup.options.loss_threshold) break;
    }
    result.params = std::move(params);
    result.mesh = std::move(mesh);
    return result;
}

}  // namespace nnest
