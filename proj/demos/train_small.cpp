// Trains a small network with the weak bubble loss and adaptive quadrature, printing progress.

#include <nnest/adaptivity.hpp>

#include <cstdio>

int main()
{
    using namespace nnest;
    TrainSetup setup;
    setup.problem = std::make_shared<const ProblemData>(manufactured(ManufacturedCase::smooth_square));
    setup.loss.kind = LossKind::wb;
    setup.options.iterations = 300;
    setup.options.error_every = 50;
    const ErrorEvaluator error(*setup.problem, refine_uniform(make_crisscross_unit_square(1), 4));
    setup.error = &error;
    setup.on_iteration = [](const IterationRecord& r) {
        if (r.iter % 50 == 0 || r.refined)
            std::printf("iter %4d  loss %.4e  H1 error %.4e  elements %d%s\n", r.iter, r.loss, r.h1_error, r.n_elements,
                        r.refined ? "  (refined)" : "");
    };
    const TrainResult result = train_adaptive(init(3, 16, 1), make_crisscross_unit_square(1), setup);
    std::printf("final mesh %d elements after %d refinements\n", result.mesh.num_elements(), result.refinements);
}
