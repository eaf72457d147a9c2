#pragma once

// =============================================================================
// Region of attraction estimation in x = 1/v^2 coordinates.
//
// The convexity condition (P+K)X + G + K >= mu I is linear in x, and its
// smallest eigenvalue over an axis-aligned box is attained at a single
// corner: load-like coordinates (p+k < 0) bind at the top face, generator
// coordinates at the bottom face (raising a non-negative diagonal entry
// cannot decrease the smallest eigenvalue). That makes cube feasibility a
// monotone predicate of the load-face position, so the largest certified
// cube is found by bisection on alpha instead of a general SDP solve.
// Load faces map back to per-node minimum voltages v_min = x^{-1/2};
// unconstrained (generator-like) coordinates report v_min = 0.
// =============================================================================

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "dcgrad/equilibrium.hpp"
#include "dcgrad/errors.hpp"
#include "dcgrad/potential.hpp"

namespace dcgrad {

struct RoaConfig {
    double mu = 1e-6;       // strong convexity level
    double alpha_tol = 1e-9; // bisection width on the cube face
    double alpha_cap = 1e6;  // treat faces beyond this as unbounded
};

struct RoaEstimate {
    double alpha = 0.0;
    Eigen::VectorXd x_star; // binding corner in x coordinates
    Eigen::VectorXd v_min;  // per-node under-voltage thresholds (0 = unconstrained)
    double lambda_min_at_corner = 0.0;
    bool unbounded = false; // whole positive orthant certified (generation case)
};

/// x_i = 1/v_i^2; domain: strictly positive.
inline Eigen::VectorXd x_of_v(const Eigen::VectorXd& v) {
    detail::require_positive(v);
    return v.array().square().inverse().matrix();
}

/// v_i = 1/sqrt(x_i); domain: strictly positive.
inline Eigen::VectorXd v_of_x(const Eigen::VectorXd& x) {
    detail::require_positive(x);
    return x.array().rsqrt().matrix();
}

struct FeasibilityWitness {
    bool feasible = false;
    Eigen::VectorXd witness_x;
    double lambda_min = 0.0;
};

/// Checks the convexity condition at the binding corner of the cube with
/// face position alpha: x_i = max(alpha, x_tilde_i) in every coordinate
/// (top face for loads, bottom face for generators). Reads only G, p, k.
inline FeasibilityWitness feasibility_oracle(const GridModel& model,
                                             const Eigen::VectorXd& x_tilde, double alpha,
                                             double mu) {
    const Eigen::Index n = model.n();
    if (x_tilde.size() != n) throw ValidationError("feasibility oracle: x_tilde size mismatch");
    detail::require_positive(x_tilde);
    if (!(alpha >= 0.0)) throw ValidationError("feasibility oracle: alpha must be >= 0");

    Eigen::VectorXd corner = x_tilde.cwiseMax(alpha);
    Eigen::MatrixXd lmi = model.G;
    lmi.diagonal() += ((model.p + model.k).array() * corner.array() + model.k.array()).matrix();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(lmi, Eigen::EigenvaluesOnly);
    const double lambda_min = eig.eigenvalues().minCoeff();
    return {lambda_min >= mu, std::move(corner), lambda_min};
}

/// Largest certified cube around the equilibrium: bisection on the face
/// position alpha. Requires the equilibrium itself to satisfy the convexity
/// condition at level mu. The result never depends on the master voltage.
inline RoaEstimate estimate_roa(const GridModel& model, const EquilibriumResult& eq,
                                const RoaConfig& cfg = {}) {
    if (!(cfg.mu > 0.0)) throw ValidationError("roa: mu must be > 0");
    if (!(cfg.alpha_tol > 0.0)) throw ValidationError("roa: alpha_tol must be > 0");

    const Eigen::VectorXd x_tilde = x_of_v(eq.v_eq);
    if (!(cfg.alpha_cap > x_tilde.maxCoeff()))
        throw ValidationError("roa: alpha_cap must exceed every equilibrium x_i");

    const FeasibilityWitness at_eq = feasibility_oracle(model, x_tilde, 0.0, cfg.mu);
    if (!at_eq.feasible)
        throw CertificationError(
            "equilibrium not certified at level mu (lambda_min at x_tilde = " +
            std::to_string(at_eq.lambda_min) + ")");

    RoaEstimate estimate;
    const FeasibilityWitness at_cap = feasibility_oracle(model, x_tilde, cfg.alpha_cap, cfg.mu);
    if (at_cap.feasible) {
        estimate.alpha = cfg.alpha_cap;
        estimate.x_star = at_cap.witness_x;
        estimate.lambda_min_at_corner = at_cap.lambda_min;
        estimate.unbounded = true;
        estimate.v_min = Eigen::VectorXd::Zero(model.n());
        return estimate;
    }

    double lo = 0.0; // feasible
    double hi = cfg.alpha_cap; // infeasible
    while (hi - lo > cfg.alpha_tol) {
        const double mid = 0.5 * (lo + hi);
        if (feasibility_oracle(model, x_tilde, mid, cfg.mu).feasible)
            lo = mid;
        else
            hi = mid;
    }

    const FeasibilityWitness witness = feasibility_oracle(model, x_tilde, lo, cfg.mu);
    estimate.alpha = lo;
    estimate.x_star = witness.witness_x;
    estimate.lambda_min_at_corner = witness.lambda_min;
    estimate.unbounded = false;
    estimate.v_min.resize(model.n());
    for (Eigen::Index i = 0; i < model.n(); ++i) {
        const double injection = model.p[i] + model.k[i];
        estimate.v_min[i] = injection < 0.0 ? 1.0 / std::sqrt(estimate.x_star[i]) : 0.0;
    }
    return estimate;
}

/// Hypercube membership in voltage coordinates: v_i >= v_min_i, v_i > 0.
inline bool membership(const GridModel& model, const RoaEstimate& estimate,
                       const Eigen::VectorXd& v) {
    if (v.size() != model.n() || estimate.v_min.size() != model.n())
        throw ValidationError("membership: size mismatch");
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (!(v[i] > 0.0) || v[i] < estimate.v_min[i]) return false;
    return true;
}

} // namespace dcgrad
