#pragma once

// Shared test utilities: programmatic model builders, seeded random model
// generation, and the independent oracles (reference potential evaluator,
// finite differences) the numeric checks compare against.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "dcgrad/dcgrad.hpp"

namespace testutil {

using dcgrad::GridModel;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline std::string fixture(const std::string& name) {
    return std::string(DCGRAD_FIXTURE_DIR) + "/" + name;
}

struct PuLine {
    int from;
    int to;
    double g; // branch conductance, pu
};

/// Builds a model straight from per-unit branch conductances; every
/// non-master node must have a terminal entry.
inline GridModel make_model(const std::vector<PuLine>& lines,
                            const std::vector<dcgrad::TerminalParams>& terminals, double v0 = 1.0,
                            bool island = false) {
    std::vector<dcgrad::Line> ls;
    ls.reserve(lines.size());
    for (const PuLine& line : lines)
        ls.push_back({line.from, line.to, 1.0 / line.g, dcgrad::ResistanceUnit::PerUnit});
    const MatrixXd full = dcgrad::build_full_conductance(ls, {});
    std::vector<int> keep{0};
    for (const auto& term : terminals) keep.push_back(term.node);
    return dcgrad::assemble_model(dcgrad::kron_reduce(full, keep), terminals, v0, island);
}

/// The shipped two-terminal fixture, built programmatically (chain 0-1-2,
/// g = 5 and 6 pu; load -0.6 at node 1, generation 0.2 at node 2).
inline GridModel twonode() {
    return make_model({{0, 1, 5.0}, {1, 2, 6.0}},
                      {{1, -0.6, 0.05, 2e-3}, {2, 0.2, 0.05, 1.8e-3}});
}

/// Random connected model over nodes 0..n, every non-master node a terminal.
inline GridModel random_model(std::mt19937_64& rng, int n, bool with_droop = true,
                              bool generation_only = false) {
    std::uniform_real_distribution<double> g_dist(0.5, 5.0);
    std::uniform_real_distribution<double> p_dist(generation_only ? 0.05 : -0.5, 0.5);
    std::uniform_real_distribution<double> k_dist(0.0, 0.2);
    std::uniform_real_distribution<double> c_dist(1e-3, 1e-2);
    std::uniform_real_distribution<double> v0_dist(0.9, 1.1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<PuLine> lines;
    for (int node = 1; node <= n; ++node) {
        std::uniform_int_distribution<int> pick(0, node - 1);
        lines.push_back({pick(rng), node, g_dist(rng)});
    }
    for (int node = 2; node <= n; ++node)
        if (unit(rng) < 0.3) {
            std::uniform_int_distribution<int> pick(0, node - 2);
            const int other = pick(rng);
            lines.push_back({other, node, g_dist(rng)});
        }

    std::vector<dcgrad::TerminalParams> terminals;
    for (int node = 1; node <= n; ++node) {
        dcgrad::TerminalParams term;
        term.node = node;
        term.p = p_dist(rng);
        term.k = with_droop && unit(rng) < 0.5 ? k_dist(rng) : 0.0;
        term.c = c_dist(rng);
        terminals.push_back(term);
    }
    return make_model(lines, terminals, v0_dist(rng));
}

inline VectorXd random_point(std::mt19937_64& rng, Eigen::Index n, double lo = 0.5,
                             double hi = 1.5) {
    std::uniform_real_distribution<double> dist(lo, hi);
    VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = dist(rng);
    return v;
}

/// Plain-loop reimplementation of the potential, kept deliberately separate
/// from the library's vectorized evaluation.
inline double reference_w(const GridModel& model, const VectorXd& v) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < model.n(); ++i)
        acc += -(model.p[i] + model.k[i]) * std::log(v[i]) + model.g0[i] * model.v0 * v[i] +
               0.5 * model.k[i] * v[i] * v[i];
    for (Eigen::Index i = 0; i < model.n(); ++i)
        for (Eigen::Index j = 0; j < model.n(); ++j) acc += 0.5 * model.G(i, j) * v[i] * v[j];
    return acc;
}

/// Central finite differences of a scalar function.
inline VectorXd fd_gradient(const std::function<double(const VectorXd&)>& f, const VectorXd& v,
                            double h = 1e-5) {
    VectorXd grad(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        VectorXd hi = v, lo = v;
        const double step = h * std::max(1.0, std::abs(v[i]));
        hi[i] += step;
        lo[i] -= step;
        grad[i] = (f(hi) - f(lo)) / (2.0 * step);
    }
    return grad;
}

/// Central finite differences of a vector function (column j = df/dv_j).
inline MatrixXd fd_jacobian(const std::function<VectorXd(const VectorXd&)>& f, const VectorXd& v,
                            double h = 1e-5) {
    MatrixXd jac(v.size(), v.size());
    for (Eigen::Index j = 0; j < v.size(); ++j) {
        VectorXd hi = v, lo = v;
        const double step = h * std::max(1.0, std::abs(v[j]));
        hi[j] += step;
        lo[j] -= step;
        jac.col(j) = (f(hi) - f(lo)) / (2.0 * step);
    }
    return jac;
}

inline double rel_err_inf(const VectorXd& got, const VectorXd& want) {
    return (got - want).lpNorm<Eigen::Infinity>() / std::max(1.0, want.lpNorm<Eigen::Infinity>());
}

inline double rel_err_inf(const MatrixXd& got, const MatrixXd& want) {
    return (got - want).cwiseAbs().maxCoeff() / std::max(1.0, want.cwiseAbs().maxCoeff());
}

} // namespace testutil
