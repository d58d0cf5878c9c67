#include "acceptance.hpp"

#include <nnest/experiments.hpp>
#include <nnest/io.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

int cmd_run(const std::string& config_path)
{
    std::ifstream in(config_path);
    if (!in) {
        std::cerr << "error: cannot read config " << config_path << "\n";
        return 2;
    }
    std::stringstream text;
    text << in.rdbuf();
    nnest::RunConfig config;
    try {
        config = nnest::parse_config(text.str());
    } catch (const nnest::config_error& e) {
        std::cerr << "error: " << config_path << ": " << e.what() << "\n";
        return 2;
    }
    const auto outcome = nnest::run_experiment(config, &std::cerr);
    for (const auto& r : outcome.runs) {
        std::cout << r.spec.label << ": loss " << r.final_loss << ", H1 error " << r.final_error << ", ratio "
                  << (r.final_ratio ? std::to_string(*r.final_ratio) : std::string("n/a")) << ", elements "
                  << r.result.mesh.num_elements() << "\n";
    }
    std::cout << "artifacts in " << config.output_dir << "\n";
    return 0;
}

/// Runs the unit-test binary built next to this executable, if present.
int run_unit_suites(const char* argv0)
{
    const fs::path self = fs::absolute(argv0);
    const fs::path tests = self.parent_path() / "nnest_tests";
    if (!fs::exists(tests)) {
        std::cout << "[SKIP] module invariant suites: " << tests.string() << " not found" << std::endl;
        return 0;
    }
    const std::string cmd = "\"" + tests.string() + "\" --gtest_brief=1 > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    std::cout << (status == 0 ? "[PASS]" : "[FAIL]") << " module invariant suites (" << tests.filename().string() << ")"
              << std::endl;
    return status == 0 ? 0 : 1;
}

int cmd_verify(const char* argv0, const std::string& group, acceptance::Options opt, bool skip_unit)
{
    bool ok = true;
    if (!skip_unit) ok = run_unit_suites(argv0) == 0;
    std::vector<acceptance::Result> results;
    if (group != "training") {
        const auto r = acceptance::run_fast(opt, std::cout);
        results.insert(results.end(), r.begin(), r.end());
    }
    if (group != "fast") {
        const auto r = acceptance::run_training(opt, std::cout);
        results.insert(results.end(), r.begin(), r.end());
    }
    ok = ok && acceptance::all_pass(results);
    std::cout << (ok ? "verify: pass" : "verify: FAIL") << std::endl;
    return ok ? 0 : 1;
}

int cmd_export_mesh(const std::string& in, const std::string& out)
{
    const nnest::Checkpoint c = nnest::load_checkpoint(in);
    std::ofstream os(out);
    if (!os) {
        std::cerr << "error: cannot write " << out << "\n";
        return 2;
    }
    if (fs::path(out).extension() == ".vtk") nnest::write_mesh_vtk(os, c.mesh);
    else nnest::write_mesh(os, c.mesh);
    std::cout << "wrote " << c.mesh.num_elements() << " elements to " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Certified a posteriori error estimates as training losses for neural PDE solvers"};
    app.require_subcommand(1);

    std::string config_path;
    auto* run = app.add_subcommand("run", "train the runs of one experiment described by a JSON config");
    run->add_option("--config", config_path, "flat JSON config; {} runs smooth_compare with defaults")->required();

    std::string group = "all";
    acceptance::Options opt;
    opt.out_dir = "verify_runs";
    bool skip_unit = false, quiet = false;
    auto* verify = app.add_subcommand("verify", "run the invariant suites and acceptance criteria");
    verify->add_option("--group", group, "fast, training or all")->check(CLI::IsMember({"fast", "training", "all"}));
    verify->add_option("--out", opt.out_dir, "directory for training artifacts");
    verify->add_flag("--corrupt-quadrature", opt.corrupt_quadrature, "negative control: perturb a quadrature weight");
    verify->add_flag("--skip-unit", skip_unit, "do not run the unit-test binary");
    verify->add_flag("--quiet", quiet, "suppress training progress");

    std::string in, out;
    auto* exp = app.add_subcommand("export-mesh", "write the mesh stored in a checkpoint");
    exp->add_option("--in", in, "checkpoint file")->required()->check(CLI::ExistingFile);
    exp->add_option("--out", out, "output path; .vtk selects legacy VTK, anything else the text format")->required();

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run) return cmd_run(config_path);
        if (*verify) {
            if (!quiet) opt.log = &std::cerr;
            return cmd_verify(argv[0], group, opt, skip_unit);
        }
        if (*exp) return cmd_export_mesh(in, out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
