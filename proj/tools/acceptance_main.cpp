#include "acceptance.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv)
{
    CLI::App app{"Acceptance criteria: one pass/fail line per criterion"};
    std::string group = "all";
    acceptance::Options opt;
    bool quiet = false;
    app.add_option("--group", group, "fast (criteria 1-7), training (8-11) or all")
        ->check(CLI::IsMember({"fast", "training", "all"}));
    app.add_option("--out", opt.out_dir, "directory for training artifacts");
    app.add_flag("--corrupt-quadrature", opt.corrupt_quadrature, "perturb a quadrature weight (negative control)");
    app.add_flag("--quiet", quiet, "suppress training progress");
    CLI11_PARSE(app, argc, argv);
    if (!quiet) opt.log = &std::cerr;

    std::vector<acceptance::Result> results;
    if (group != "training") {
        const auto r = acceptance::run_fast(opt, std::cout);
        results.insert(results.end(), r.begin(), r.end());
    }
    if (group != "fast") {
        const auto r = acceptance::run_training(opt, std::cout);
        results.insert(results.end(), r.begin(), r.end());
    }
    const auto passed = std::count_if(results.begin(), results.end(), [](const auto& r) { return r.pass; });
    std::cout << passed << "/" << results.size() << " criteria passed" << std::endl;
    return acceptance::all_pass(results) ? 0 : 1;
}
