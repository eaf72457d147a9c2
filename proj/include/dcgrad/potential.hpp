#pragma once

// =============================================================================
// Potential function of the grid dynamics.
//
// The nodal dynamics form a gradient system M dv/dt = -grad W with
// M = diag(c_i) and
//
//   W(v) = sum_i [ -(p_i + k_i) ln v_i + g0_i v0 v_i + 1/2 k_i v_i^2 ]
//        + 1/2 v^T G v
//
// Two droop variants are exposed: the gradient-consistent flow above, and
// the literal per-terminal current balance with droop term k(1-v)/v. They
// coincide for k = 0 and at v = 1; all stability certificates are stated
// for the gradient-consistent variant.
// =============================================================================

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>

#include "dcgrad/grid_model.hpp"

namespace dcgrad {

enum class DroopVariant { GradientConsistent, PaperEq1 };

inline const char* to_string(DroopVariant variant) {
    return variant == DroopVariant::GradientConsistent ? "gradient" : "eq1";
}

namespace detail {

inline void require_positive(const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (!(v[i] > 0.0))
            throw std::domain_error("voltage state must be strictly positive (entry " +
                                    std::to_string(i) + " is " + std::to_string(v[i]) + ")");
}

inline void require_size(const GridModel& model, const Eigen::VectorXd& v) {
    if (v.size() != model.n())
        throw std::invalid_argument("voltage vector has size " + std::to_string(v.size()) +
                                    ", model has " + std::to_string(model.n()) + " terminals");
}

inline Eigen::VectorXd gradient_core(const GridModel& model, const Eigen::VectorXd& v) {
    return (-(model.p + model.k).array() / v.array() + model.g0.array() * model.v0 +
            model.k.array() * v.array())
               .matrix() +
           model.G * v;
}

} // namespace detail

/// Potential value W(v). Domain: v strictly positive.
inline double potential_w(const GridModel& model, const Eigen::VectorXd& v) {
    detail::require_size(model, v);
    detail::require_positive(v);
    const double separable =
        (-(model.p + model.k).array() * v.array().log() +
         model.g0.array() * model.v0 * v.array() + 0.5 * model.k.array() * v.array().square())
            .sum();
    return separable + 0.5 * v.dot(model.G * v);
}

/// Gradient dW/dv_i = -(p_i+k_i)/v_i + g0_i v0 + (G v)_i + k_i v_i.
inline Eigen::VectorXd gradient_w(const GridModel& model, const Eigen::VectorXd& v) {
    detail::require_size(model, v);
    detail::require_positive(v);
    return detail::gradient_core(model, v);
}

/// Hessian (P+K) diag(1/v_i^2) + G + K; symmetric by construction.
inline Eigen::MatrixXd hessian_w(const GridModel& model, const Eigen::VectorXd& v) {
    detail::require_size(model, v);
    detail::require_positive(v);
    Eigen::MatrixXd hess = model.G;
    hess.diagonal() += ((model.p + model.k).array() / v.array().square() + model.k.array()).matrix();
    return hess;
}

/// W, gradient and Hessian at one point.
struct PotentialEvaluation {
    double w = 0.0;
    Eigen::VectorXd grad;
    Eigen::MatrixXd hess;
};

inline PotentialEvaluation evaluate_potential(const GridModel& model, const Eigen::VectorXd& v) {
    return {potential_w(model, v), gradient_w(model, v), hessian_w(model, v)};
}

namespace detail {

/// Non-throwing right side for integrator stage evaluations: any
/// non-positive voltage yields NaN so the step controller rejects the step.
inline Eigen::VectorXd dynamics_rhs_guarded(const GridModel& model, const Eigen::VectorXd& v,
                                            DroopVariant variant) noexcept {
    const Eigen::Index n = v.size();
    for (Eigen::Index i = 0; i < n; ++i)
        if (!(v[i] > 0.0))
            return Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
    if (variant == DroopVariant::GradientConsistent) {
        const Eigen::VectorXd grad = gradient_core(model, v);
        return (-grad.array() / model.c.array()).matrix();
    }
    // literal current balance: (p + k(1-v))/v - g0 v0 - (G v)
    const Eigen::VectorXd net =
        ((model.p.array() + model.k.array() * (1.0 - v.array())) / v.array() -
         model.g0.array() * model.v0)
            .matrix() -
        model.G * v;
    return (net.array() / model.c.array()).matrix();
}

} // namespace detail

/// dv/dt for the selected droop variant. GradientConsistent is exactly
/// -M^{-1} grad W; PaperEq1 is the literal per-terminal current balance.
inline Eigen::VectorXd dynamics_rhs(const GridModel& model, const Eigen::VectorXd& v,
                                    DroopVariant variant) {
    detail::require_size(model, v);
    detail::require_positive(v);
    return detail::dynamics_rhs_guarded(model, v, variant);
}

struct ConvexityCertificate {
    bool certified = false;
    double lambda_min = 0.0;
};

/// Pointwise strong convexity check: lambda_min(hessian W(v)) >= mu.
inline ConvexityCertificate convexity_certificate(const GridModel& model, const Eigen::VectorXd& v,
                                                  double mu) {
    const Eigen::MatrixXd hess = hessian_w(model, v);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hess, Eigen::EigenvaluesOnly);
    const double lambda_min = eig.eigenvalues().minCoeff();
    return {lambda_min >= mu, lambda_min};
}

} // namespace dcgrad
