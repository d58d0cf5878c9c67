// Estimates the error of a perturbed exact solution with all four formulations and prints the
// two-sided bounds next to the true H1 error.

#include <nnest/estimators.hpp>

#include <cstdio>

int main()
{
    using namespace nnest;
    const ProblemData problem = manufactured(ManufacturedCase::smooth_square);
    const SmoothField w = [](const Point& x) {
        Jet2 j = smooth_square_solution(x);
        j.value += 0.05 * x.x() * x.y();
        j.grad += 0.05 * Eigen::Vector2d(x.y(), x.x());
        j.hess[1] += 0.05;
        return j;
    };
    const double error = h1_error(problem, w, refine_uniform(make_crisscross_unit_square(8), 2), tri_rule(RuleKind::high));
    std::printf("true H1 error %.6e\n", error);
    for (int n : {2, 4, 8, 16}) {
        const Mesh mesh = make_crisscross_unit_square(n);
        for (auto f : {Formulation::weak_lagrange, Formulation::weak_bubble, Formulation::broken, Formulation::strong}) {
            const auto rep = estimate(problem, w, mesh, RuleKind::standard, f);
            std::printf("n=%2d %-13s eta %.4e  eta+rho %.4e\n", n, to_string(f).c_str(), rep.eta(),
                        rep.eta() + rep.rho());
        }
    }
}
