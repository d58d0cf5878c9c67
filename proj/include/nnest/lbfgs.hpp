#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <vector>

namespace nnest {

struct LbfgsOptions {
    int memory = 10;
    double armijo_c1 = 1e-4;
    int max_trials = 30;
};

/// Curvature history and counters of one L-BFGS run.
struct LbfgsState {
    std::deque<Eigen::VectorXd> s;
    std::deque<Eigen::VectorXd> y;
    int iteration = 0;
    int line_search_failures = 0;
    int skipped_pairs = 0;
    int last_trials = 0;

    void clear()
    {
        s.clear();
        y.clear();
    }
    int history() const { return static_cast<int>(s.size()); }
};

/// f(x), writing grad f(x) into the second argument.
using LossAndGrad = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct LbfgsStep {
    Eigen::VectorXd params;
    Eigen::VectorXd grad;
    double loss = 0.0;
    double step_length = 0.0;
    bool line_search_failed = false;
};

/// Two-loop recursion: approximately -H^{-1} g.
inline Eigen::VectorXd lbfgs_direction(const LbfgsState& state, const Eigen::VectorXd& g)
{
    const int m = state.history();
    Eigen::VectorXd q = g;
    std::vector<double> alpha(m), rho(m);
    for (int i = m - 1; i >= 0; --i) {
        rho[i] = 1.0 / state.y[i].dot(state.s[i]);
        alpha[i] = rho[i] * state.s[i].dot(q);
        q -= alpha[i] * state.y[i];
    }
    if (m > 0) q *= state.s[m - 1].dot(state.y[m - 1]) / state.y[m - 1].squaredNorm();
    for (int i = 0; i < m; ++i) {
        const double beta = rho[i] * state.y[i].dot(q);
        q += (alpha[i] - beta) * state.s[i];
    }
    return -q;
}

/// Backtracking (halving) line search enforcing the Armijo condition along d.
inline LbfgsStep armijo_search(const Eigen::VectorXd& x, double f, const Eigen::VectorXd& g, const Eigen::VectorXd& d,
                               const LossAndGrad& fg, const LbfgsOptions& opt, int* trials = nullptr)
{
    const double slope = g.dot(d);
    LbfgsStep out;
    out.params = x;
    out.grad = g;
    out.loss = f;
    double t = 1.0;
    for (int k = 0; k < opt.max_trials; ++k, t *= 0.5) {
        Eigen::VectorXd xt = x + t * d;
        Eigen::VectorXd gt(x.size());
        const double ft = fg(xt, gt);
        if (trials) *trials = k + 1;
        if (std::isfinite(ft) && ft <= f + opt.armijo_c1 * t * slope) {
            out.params = std::move(xt);
            out.grad = std::move(gt);
            out.loss = ft;
            out.step_length = t;
            return out;
        }
    }
    out.line_search_failed = true;
    return out;
}

/**
 * One L-BFGS iteration from x with known loss f and gradient g. On line-search failure the
 * parameters are returned unchanged with the flag set.
 */
inline LbfgsStep lbfgs_step(LbfgsState& state, const Eigen::VectorXd& x, double f, const Eigen::VectorXd& g,
                            const LossAndGrad& fg, const LbfgsOptions& opt = {})
{
    ++state.iteration;
    if (g.squaredNorm() == 0.0) return {x, g, f, 0.0, false};
    Eigen::VectorXd d = lbfgs_direction(state, g);
    if (!(d.dot(g) < 0.0)) {
        state.clear();
        d = -g;
    }
    if (state.history() == 0) d /= std::max(1.0, d.norm());
    LbfgsStep step = armijo_search(x, f, g, d, fg, opt, &state.last_trials);
    if (step.line_search_failed) {
        ++state.line_search_failures;
        return step;
    }
    Eigen::VectorXd s = step.params - x;
    Eigen::VectorXd y = step.grad - g;
    if (s.dot(y) > 0.0) {
        state.s.push_back(std::move(s));
        state.y.push_back(std::move(y));
        if (state.history() > opt.memory) {
            state.s.pop_front();
            state.y.pop_front();
        }
    } else {
        ++state.skipped_pairs;
    }
    return step;
}

}  // namespace nnest
