#include <nnest/experiments.hpp>

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace nnest;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("nnest_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::vector<std::string> read_lines(const fs::path& p)
{
    std::ifstream in(p);
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    return lines;
}

}  // namespace

TEST(Config, EmptyConfigRunsSmoothCompareDefaults)
{
    const RunConfig c = parse_config("{}");
    EXPECT_EQ(c.experiment, Experiment::smooth_compare);
    EXPECT_EQ(c.layers, 5);
    EXPECT_EQ(c.width, 20);
    EXPECT_EQ(c.mesh_n, 4);
    EXPECT_EQ(c.losses.size(), 4u);
    EXPECT_FALSE(c.adaptive);
}

TEST(Config, ExperimentDefaults)
{
    const RunConfig l = parse_config(R"({"experiment": "lshape"})");
    EXPECT_EQ(l.layers, 8);
    EXPECT_EQ(l.width, 20);
    EXPECT_EQ(l.tau1, 0.2);
    EXPECT_EQ(l.tau2, 0.75);
    EXPECT_TRUE(l.adaptive);
    EXPECT_EQ(param_count(l.layers, l.width), 3021);
    const RunConfig b = parse_config(R"({"experiment": "enforce_bc"})");
    EXPECT_EQ(param_count(b.layers, b.width), 3841);
    const RunConfig a = parse_config(R"({"experiment": "adaptive_quadrature"})");
    EXPECT_EQ(a.mesh_n, 1);
    EXPECT_EQ(a.tau1, 0.3);
    EXPECT_EQ(a.tau2, 0.7);
    const RunConfig e = parse_config(R"({"experiment": "eta_vs_etarho"})");
    EXPECT_EQ(e.losses, (std::vector<LossKind>{LossKind::wb, LossKind::wb_eta_only}));
}

TEST(Config, OverridesApply)
{
    const RunConfig c = parse_config(R"({"iterations": 12, "losses": ["pinn", "br"], "seed": 9, "output_dir": "x",
                                         "tau1": 0.5, "adaptive": false})");
    EXPECT_EQ(c.iterations, 12);
    EXPECT_EQ(c.losses, (std::vector<LossKind>{LossKind::pinn, LossKind::br}));
    EXPECT_EQ(c.seed, 9u);
    EXPECT_EQ(c.output_dir, "x");
    EXPECT_EQ(c.tau1, 0.5);
    // Round trip through the JSON form.
    const RunConfig d = parse_config(c.to_json().dump());
    EXPECT_EQ(d.to_json(), c.to_json());
}

TEST(Config, RejectsBadInputWithLineAndField)
{
    auto message = [](const std::string& text) {
        try {
            parse_config(text);
        } catch (const config_error& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    EXPECT_NE(message("{\n  \"layers\": 3,\n  \"widht\": 4\n}").find("line 3, field 'widht': unknown key"), std::string::npos);
    EXPECT_NE(message(R"({"layers": "five"})").find("field 'layers': expected an integer"), std::string::npos);
    EXPECT_NE(message(R"({"tau1": 1.5})").find("field 'tau1': value out of range"), std::string::npos);
    EXPECT_NE(message(R"({"experiment": "nope"})").find("unknown experiment"), std::string::npos);
    EXPECT_NE(message(R"({"losses": ["wb", "wb"]})").find("duplicate"), std::string::npos);
    EXPECT_NE(message(R"({"losses": ["xx"]})").find("unknown loss kind"), std::string::npos);
    EXPECT_NE(message(R"({"adaptive": true, "losses": ["pinn"]})").find("field 'adaptive'"), std::string::npos);
    EXPECT_NE(message("[1, 2]").find("top level"), std::string::npos);
    EXPECT_NE(message("{").find("malformed"), std::string::npos);
}

TEST(Io, MeshTextRoundTripPreservesRefinement)
{
    const Mesh m = refine_nvb(make_lshape_rotated(0), std::vector<int>{1, 4});
    std::stringstream ss;
    write_mesh(ss, m);
    const Mesh r = read_mesh(ss);
    ASSERT_EQ(r.num_elements(), m.num_elements());
    EXPECT_EQ(r.vertices(), m.vertices());
    for (int e = 0; e < m.num_elements(); ++e) {
        EXPECT_EQ(r.triangles()[e].vertices, m.triangles()[e].vertices);
        EXPECT_EQ(r.triangles()[e].generation, m.triangles()[e].generation);
    }
    // Refining after the round trip gives the same mesh.
    const Mesh a = refine_nvb(m, std::vector<int>{0, 3}), b = refine_nvb(r, std::vector<int>{0, 3});
    EXPECT_EQ(a.vertices(), b.vertices());
    std::stringstream bad("nnest-mesh 1\nvertices 3\n0 0\n1 0\n");
    EXPECT_THROW(read_mesh(bad), io_error);
}

TEST(Io, CheckpointRoundTrip)
{
    Checkpoint c{init(2, 5, 77), 123, refine_nvb(make_crisscross_unit_square(2), std::vector<int>{2})};
    std::stringstream ss;
    write_checkpoint(ss, c);
    const Checkpoint r = read_checkpoint(ss);
    EXPECT_EQ(r.params.widths, c.params.widths);
    EXPECT_EQ(r.params.seed, 77u);
    EXPECT_EQ(r.params.flat, c.params.flat);
    EXPECT_EQ(r.iteration, 123);
    EXPECT_EQ(r.mesh.vertices(), c.mesh.vertices());
    EXPECT_EQ(r.mesh.num_elements(), c.mesh.num_elements());
    std::stringstream truncated(ss.str().substr(0, ss.str().size() - 5));
    EXPECT_THROW(read_checkpoint(truncated), io_error);
    std::stringstream garbage("{\"format\": \"other\"}\n");
    EXPECT_THROW(read_checkpoint(garbage), io_error);
}

TEST(Io, ReportJson)
{
    const ProblemData p = manufactured(ManufacturedCase::smooth_square);
    const auto rep = estimate(p, detail::zero_field, make_crisscross_unit_square(2), RuleKind::standard, Formulation::broken);
    const auto j = to_json(rep);
    EXPECT_EQ(j["formulation"], "broken");
    EXPECT_EQ(j["per_element"].size(), 16u);
    EXPECT_DOUBLE_EQ(j["upper_bound_eta_plus_rho"].get<double>(), rep.eta() + rep.rho());
}

TEST(Experiments, RunLabels)
{
    auto labels = [](const RunConfig& c) {
        std::vector<std::string> out;
        for (const auto& r : experiment_runs(c)) out.push_back(r.label);
        return out;
    };
    EXPECT_EQ(labels(RunConfig::defaults(Experiment::smooth_compare)), (std::vector<std::string>{"wb", "br", "pmod", "pinn"}));
    EXPECT_EQ(labels(RunConfig::defaults(Experiment::enforce_bc)), (std::vector<std::string>{"wb_plain", "wb_masked"}));
    EXPECT_EQ(labels(RunConfig::defaults(Experiment::lshape)), (std::vector<std::string>{"wb_adaptive", "wb_fixed"}));
}

TEST(Experiments, MaskJet)
{
    const Point x(0.3, 0.8);
    const Jet2 m = unit_square_mask(x);
    const double h = 1e-5;
    auto v = [](const Point& y) { return unit_square_mask(y).value; };
    EXPECT_NEAR(m.grad.x(), (v(x + Point(h, 0)) - v(x - Point(h, 0))) / (2 * h), 1e-9);
    EXPECT_NEAR(m.grad.y(), (v(x + Point(0, h)) - v(x - Point(0, h))) / (2 * h), 1e-9);
    EXPECT_NEAR(m.hess[1], (unit_square_mask(x + Point(0, h)).grad.x() - unit_square_mask(x - Point(0, h)).grad.x()) / (2 * h), 1e-8);
    EXPECT_EQ(unit_square_mask(Point(0.0, 0.4)).value, 0.0);
    EXPECT_EQ(unit_square_mask(Point(0.4, 1.0)).value, 0.0);
}

TEST(Experiments, SmoothCompareArtifacts)
{
    const fs::path dir = temp_dir("smooth");
    RunConfig c = parse_config(R"({"iterations": 3, "layers": 1, "width": 4, "error_every": 1})");
    c.output_dir = dir.string();
    const auto out = run_experiment(c);
    ASSERT_EQ(out.runs.size(), 4u);
    for (const std::string label : {"wb", "br", "pmod", "pinn"}) {
        const auto lines = read_lines(dir / (label + ".csv"));
        ASSERT_EQ(lines.size(), 4u) << label;
        EXPECT_EQ(lines[0], telemetry_header);
        EXPECT_EQ(lines[1].substr(0, 2), "1,");
        EXPECT_TRUE(fs::exists(dir / (label + ".vl.json")));
        EXPECT_TRUE(fs::exists(dir / (label + "_report.json")));
        EXPECT_TRUE(fs::exists(dir / (label + ".mesh")));
        const Checkpoint ck = load_checkpoint((dir / (label + ".ckpt")).string());
        EXPECT_EQ(ck.params.flat, out.run(label).result.params.flat);
        EXPECT_EQ(ck.mesh.num_elements(), 64);
    }
    EXPECT_TRUE(fs::exists(dir / "summary.json"));
    // Same config, same seed: identical parameters.
    const auto again = run_experiment(c, nullptr, false);
    for (std::size_t i = 0; i < out.runs.size(); ++i)
        EXPECT_EQ(again.runs[i].result.params.flat, out.runs[i].result.params.flat);
    fs::remove_all(dir);
}

TEST(Experiments, AdaptiveQuadratureStartsWith24And16Nodes)
{
    RunConfig c = parse_config(R"({"experiment": "adaptive_quadrature", "iterations": 2, "layers": 1, "width": 3})");
    const auto out = run_experiment(c, nullptr, false);
    for (const auto& r : out.runs) {
        EXPECT_EQ(r.result.telemetry.front().n_quad_volume, 24);
        EXPECT_EQ(r.result.telemetry.front().n_quad_boundary, 16);
    }
}

TEST(Experiments, MaskedRunHasZeroBoundaryEstimators)
{
    RunConfig c = parse_config(R"({"experiment": "enforce_bc", "iterations": 3, "layers": 1, "width": 3, "error_every": 0})");
    const auto out = run_experiment(c, nullptr, false);
    for (const auto& rec : out.run("wb_masked").result.telemetry) {
        EXPECT_EQ(rec.eta_gamma, 0.0);
        EXPECT_EQ(rec.rho_gamma, 0.0);
    }
    EXPECT_GT(out.run("wb_plain").result.telemetry.front().eta_gamma, 0.0);
}
