#pragma once

// =============================================================================
// Equilibrium solver: minimize W over the positive orthant by damped Newton
// descent with an Armijo backtracking line search and a gradient fallback
// wherever the Hessian is not positive definite.
// =============================================================================

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "dcgrad/errors.hpp"
#include "dcgrad/potential.hpp"

namespace dcgrad {

struct SolverConfig {
    enum class Method { Newton, GradientDescent };

    double tol_grad_inf = 1e-10;
    int max_iter = 100;
    double backtrack_shrink = 0.5;
    double sufficient_decrease = 1e-4;
    Eigen::VectorXd initial_v; // empty -> all ones (nominal voltage)
    Method method = Method::Newton;
};

struct EquilibriumResult {
    Eigen::VectorXd v_eq;
    double w_at_eq = 0.0;
    double residual_inf = 0.0;
    int iterations = 0;
    std::vector<IterationRecord> trace;
    double hessian_lambda_min_at_eq = 0.0;
    bool certified = false; // Hessian positive definite at v_eq
};

/// Finds the critical point of W reachable by descent from the start point.
/// Iterates are kept strictly positive by capping each step so no component
/// loses more than 90% of its value before the line search runs.
/// Throws ConvergenceError (carrying the trace) if max_iter is exhausted or
/// the line search cannot make progress.
inline EquilibriumResult solve_equilibrium(const GridModel& model, const SolverConfig& cfg = {}) {
    const Eigen::Index n = model.n();
    if (!(cfg.tol_grad_inf > 0.0)) throw ValidationError("solver: tolerance must be > 0");
    if (cfg.max_iter < 1) throw ValidationError("solver: max_iter must be >= 1");
    if (!(cfg.backtrack_shrink > 0.0 && cfg.backtrack_shrink < 1.0))
        throw ValidationError("solver: backtracking shrink factor must be in (0,1)");

    Eigen::VectorXd v = cfg.initial_v.size() ? cfg.initial_v : Eigen::VectorXd::Ones(n);
    if (v.size() != n) throw ValidationError("solver: initial point size mismatch");
    detail::require_positive(v);

    std::vector<IterationRecord> trace;
    trace.reserve(static_cast<std::size_t>(cfg.max_iter));

    double w = potential_w(model, v);
    for (int iter = 0; iter < cfg.max_iter; ++iter) {
        const Eigen::VectorXd grad = gradient_w(model, v);
        const double residual = grad.lpNorm<Eigen::Infinity>();
        if (residual <= cfg.tol_grad_inf) {
            EquilibriumResult result;
            result.v_eq = v;
            result.w_at_eq = w;
            result.residual_inf = residual;
            result.iterations = iter;
            result.trace = std::move(trace);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hessian_w(model, v),
                                                               Eigen::EigenvaluesOnly);
            result.hessian_lambda_min_at_eq = eig.eigenvalues().minCoeff();
            result.certified = result.hessian_lambda_min_at_eq > 0.0;
            return result;
        }

        Eigen::VectorXd direction;
        if (cfg.method == SolverConfig::Method::Newton) {
            Eigen::LLT<Eigen::MatrixXd> llt(hessian_w(model, v));
            if (llt.info() == Eigen::Success)
                direction = llt.solve(-grad);
            else
                direction = -grad; // outside the convex region: plain descent
        } else {
            direction = -grad;
        }

        // cap the step so every iterate keeps v_i >= 0.1 * previous v_i
        double step = 1.0;
        for (Eigen::Index i = 0; i < n; ++i)
            if (direction[i] < 0.0) step = std::min(step, 0.9 * v[i] / -direction[i]);

        const double slope = grad.dot(direction);
        // tolerate rounding noise in W near convergence, where the true
        // decrease per step falls below the representable resolution of W
        const double w_noise =
            4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(w));
        double w_next = 0.0;
        bool accepted = false;
        while (step >= 1e-16) {
            w_next = potential_w(model, v + step * direction);
            if (w_next <= w + cfg.sufficient_decrease * step * slope + w_noise) {
                accepted = true;
                break;
            }
            step *= cfg.backtrack_shrink;
        }
        if (!accepted)
            throw ConvergenceError(
                "equilibrium solve stalled: line search found no acceptable step "
                "(residual " + std::to_string(residual) + "); the model may have no "
                "equilibrium in the positive orthant",
                std::move(trace));

        v += step * direction;
        w = w_next;
        trace.push_back({residual, step, w});
    }
    throw ConvergenceError("equilibrium solve did not converge within " +
                               std::to_string(cfg.max_iter) + " iterations",
                           std::move(trace));
}

struct UniquenessReport {
    bool all_converged_to_same = false;
    double spread = 0.0; // max pairwise inf-distance between solutions
    int n_starts = 0;
    std::vector<Eigen::VectorXd> solutions;
};

/// Theorem-2 style probe: solve from random starts inside [box_lo, box_hi]
/// and report the max pairwise distance of the solutions. Solver failures
/// propagate. Deterministic for a fixed seed.
inline UniquenessReport uniqueness_probe(const GridModel& model, const SolverConfig& cfg,
                                         int n_starts, const Eigen::VectorXd& box_lo,
                                         const Eigen::VectorXd& box_hi, std::uint64_t seed = 42) {
    const Eigen::Index n = model.n();
    if (n_starts < 1) throw ValidationError("uniqueness probe: need at least one start");
    if (box_lo.size() != n || box_hi.size() != n)
        throw ValidationError("uniqueness probe: box size mismatch");
    for (Eigen::Index i = 0; i < n; ++i)
        if (!(box_lo[i] > 0.0) || !(box_hi[i] >= box_lo[i]))
            throw ValidationError("uniqueness probe: box must satisfy 0 < lo <= hi");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    UniquenessReport report;
    report.n_starts = n_starts;
    report.solutions.reserve(static_cast<std::size_t>(n_starts));
    for (int s = 0; s < n_starts; ++s) {
        Eigen::VectorXd start(n);
        for (Eigen::Index i = 0; i < n; ++i)
            start[i] = box_lo[i] + (box_hi[i] - box_lo[i]) * unit(rng);
        SolverConfig local = cfg;
        local.initial_v = start;
        report.solutions.push_back(solve_equilibrium(model, local).v_eq);
    }
    double spread = 0.0;
    for (std::size_t a = 0; a < report.solutions.size(); ++a)
        for (std::size_t b = a + 1; b < report.solutions.size(); ++b)
            spread = std::max(
                spread, (report.solutions[a] - report.solutions[b]).lpNorm<Eigen::Infinity>());
    report.spread = spread;
    report.all_converged_to_same = spread <= 1e-6;
    return report;
}

} // namespace dcgrad
