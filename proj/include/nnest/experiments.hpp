#pragma once

#include <nnest/adaptivity.hpp>
#include <nnest/config.hpp>
#include <nnest/io.hpp>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

namespace nnest {

/// phi(x, y) = x(1-x)y(1-y): vanishes on the boundary of the unit square.
inline Jet2 unit_square_mask(const Point& x)
{
    const double a = x.x() * (1 - x.x()), b = x.y() * (1 - x.y());
    const double da = 1 - 2 * x.x(), db = 1 - 2 * x.y();
    Jet2 j;
    j.value = a * b;
    j.grad = Eigen::Vector2d(da * b, a * db);
    j.hess = {-2 * b, da * db, -2 * a};
    return j;
}

/// Problem, start mesh and H1-error evaluation mesh of an experiment.
struct ExperimentSetup {
    std::shared_ptr<const ProblemData> problem;
    Mesh start_mesh;
    Mesh error_mesh;
};

inline ExperimentSetup experiment_setup(const RunConfig& c)
{
    ExperimentSetup s;
    switch (c.experiment) {
    case Experiment::smooth_compare:
    case Experiment::eta_vs_etarho:
    case Experiment::adaptive_quadrature:
        s.problem = std::make_shared<const ProblemData>(manufactured(ManufacturedCase::smooth_square));
        s.start_mesh = make_crisscross_unit_square(c.mesh_n);
        s.error_mesh = refine_uniform(make_crisscross_unit_square(1), 4);
        break;
    case Experiment::enforce_bc:
        s.problem = std::make_shared<const ProblemData>(manufactured(ManufacturedCase::boundary_layer, c.epsilon));
        s.start_mesh = make_boundary_layer_mesh();
        s.error_mesh = s.start_mesh;
        break;
    case Experiment::lshape:
        s.problem = std::make_shared<const ProblemData>(manufactured(ManufacturedCase::lshape_singular));
        s.start_mesh = make_lshape_rotated(c.lshape_refinements);
        s.error_mesh = refine_towards_point(make_lshape_rotated(2), Point(0, 0), 4);
        break;
    }
    return s;
}

/// One training run of an experiment.
struct RunSpec {
    std::string label;
    LossKind loss = LossKind::wb;
    bool masked = false;
    bool adaptive = false;
};

inline std::vector<RunSpec> experiment_runs(const RunConfig& c)
{
    std::vector<RunSpec> runs;
    for (LossKind k : c.losses) {
        const std::string name = to_string(k);
        if (c.experiment == Experiment::enforce_bc) {
            runs.push_back({name + "_plain", k, false, false});
            runs.push_back({name + "_masked", k, true, false});
        } else if (c.adaptive) {
            runs.push_back({name + "_adaptive", k, false, true});
            if (c.fixed_twin) runs.push_back({name + "_fixed", k, false, false});
        } else {
            runs.push_back({name, k, false, false});
        }
    }
    return runs;
}

struct RunOutcome {
    RunSpec spec;
    TrainResult result;
    EstimatorReport final_report;
    double final_loss = 0.0;
    double final_error = 0.0;
    std::optional<double> final_ratio;
};

struct ExperimentOutcome {
    RunConfig config;
    std::vector<RunOutcome> runs;

    const RunOutcome& run(const std::string& label) const
    {
        for (const auto& r : runs)
            if (r.spec.label == label) return r;
        throw std::out_of_range("no run labelled " + label);
    }
};

inline Formulation report_formulation(LossKind k)
{
    switch (k) {
    case LossKind::br: return Formulation::broken;
    case LossKind::pmod: return Formulation::strong;
    default: return Formulation::weak_bubble;
    }
}

/// Vega-Lite specification plotting H1 error and ratio over iterations from a telemetry CSV.
inline nlohmann::json plot_spec(const std::string& csv_name, const std::string& title)
{
    using nlohmann::json;
    auto panel = [&](const std::string& field, const std::string& label, bool log) {
        json y = {{"field", field}, {"type", "quantitative"}, {"title", label}};
        if (log) y["scale"] = {{"type", "log"}};
        return json{{"transform", json::array({{{"filter", "isFinite(datum." + field + ")"}}})},
                    {"mark", "line"},
                    {"encoding", {{"x", {{"field", "iter"}, {"type", "quantitative"}, {"title", "iteration"}}}, {"y", y}}},
                    {"width", 480},
                    {"height", 240}};
    };
    return {{"$schema", "https://vega.github.io/schema/vega-lite/v5.json"},
            {"title", title},
            {"data",
             {{"url", csv_name},
              {"format",
               {{"type", "csv"},
                {"parse", {{"iter", "number"}, {"loss", "number"}, {"h1_error", "number"}, {"ratio", "number"},
                           {"n_elements", "number"}}}}}}},
            {"vconcat", json::array({panel("h1_error", "H1 error", true), panel("ratio", "sqrt(loss) / H1 error", false),
                                     panel("n_elements", "elements", false)})}};
}

/**
 * Runs every training run of an experiment. With `write_files`, each run leaves
 * <label>.csv, <label>.vl.json, <label>_report.json, <label>.mesh and <label>.ckpt in the output
 * directory, plus summary.json for the experiment.
 */
inline ExperimentOutcome run_experiment(const RunConfig& c, std::ostream* log = nullptr, bool write_files = true)
{
    namespace fs = std::filesystem;
    const ExperimentSetup setup = experiment_setup(c);
    const ErrorEvaluator error(*setup.problem, setup.error_mesh);
    const fs::path out(c.output_dir);
    if (write_files) fs::create_directories(out);

    ExperimentOutcome outcome;
    outcome.config = c;
    nlohmann::json summary = {{"config", c.to_json()}, {"runs", nlohmann::json::array()}};

    for (const RunSpec& spec : experiment_runs(c)) {
        TrainSetup ts;
        ts.problem = setup.problem;
        ts.loss = {spec.loss, c.sampling_seed};
        if (spec.masked) ts.mask = SmoothField(unit_square_mask);
        ts.adapt.enabled = spec.adaptive;
        ts.adapt.tau1 = c.tau1;
        ts.adapt.tau2 = c.tau2;
        ts.adapt.max_elements = c.max_elements;
        ts.options.iterations = c.iterations;
        ts.options.loss_threshold = c.loss_threshold;
        ts.options.error_every = c.error_every;
        ts.error = &error;

        std::unique_ptr<TelemetryWriter> csv;
        if (write_files) csv = std::make_unique<TelemetryWriter>((out / (spec.label + ".csv")).string());
        const int progress_every = std::max(1, c.iterations / 10);
        ts.on_iteration = [&](const IterationRecord& r) {
            if (csv) csv->append(r);
            if (log && (r.iter % progress_every == 0 || r.iter == 1))
                *log << spec.label << " iter " << r.iter << " loss " << r.loss << " h1_error " << r.h1_error
                     << " elements " << r.n_elements << std::endl;
        };
        if (log) *log << "run " << spec.label << " (" << to_string(c.experiment) << ")" << std::endl;

        RunOutcome ro;
        ro.spec = spec;
        ro.result = train_adaptive(init(c.layers, c.width, c.seed), setup.start_mesh, ts);
        csv.reset();

        const auto ctx = std::make_shared<const EstimatorContext>(
            setup.problem, std::make_shared<const TestSpaces>(ro.result.mesh), RuleKind::standard);
        const FieldSamples w = trial_samples(ro.result.params, ts.mask,
                                             {ctx->points().volume_points, ctx->points().boundary_points});
        ro.final_report = estimate(*ctx, w, report_formulation(spec.loss));
        ro.final_loss = ro.result.telemetry.empty() ? 0.0 : ro.result.telemetry.back().loss;
        ro.final_error = error.h1_error(ro.result.params, ts.mask);
        ro.final_ratio = loss_error_ratio(ro.final_loss, ro.final_error);

        const nlohmann::json final = {{"loss", ro.final_loss},
                                      {"h1_error", ro.final_error},
                                      {"ratio", ro.final_ratio ? nlohmann::json(*ro.final_ratio) : nlohmann::json()},
                                      {"iterations", static_cast<int>(ro.result.telemetry.size())},
                                      {"n_elements", ro.result.mesh.num_elements()},
                                      {"refinements", ro.result.refinements},
                                      {"refinement_cap_reached", ro.result.cap_reached}};
        if (write_files) {
            const std::string csv_name = spec.label + ".csv";
            std::ofstream(out / (spec.label + ".vl.json")) << plot_spec(csv_name, to_string(c.experiment) + ": " + spec.label).dump(2) << '\n';
            const nlohmann::json report = {{"run", spec.label},
                                           {"loss", to_string(spec.loss)},
                                           {"masked", spec.masked},
                                           {"adaptive", spec.adaptive},
                                           {"final", final},
                                           {"estimator", to_json(ro.final_report)}};
            std::ofstream(out / (spec.label + "_report.json")) << report.dump(2) << '\n';
            save_mesh((out / (spec.label + ".mesh")).string(), ro.result.mesh);
            save_checkpoint((out / (spec.label + ".ckpt")).string(),
                            {ro.result.params, static_cast<int>(ro.result.telemetry.size()), ro.result.mesh});
        }
        summary["runs"].push_back({{"run", spec.label}, {"final", final}});
        outcome.runs.push_back(std::move(ro));
    }
    if (write_files) std::ofstream(out / "summary.json") << summary.dump(2) << '\n';
    return outcome;
}

}  // namespace nnest
