#pragma once

// =============================================================================
// Grid model construction: nodal conductance assembly, Kron reduction and
// per-unit conversion for dc microgrids with constant power terminals.
//
// Node 0 is the master (constant voltage v0). Every other retained node
// carries a constant power terminal with droop control. Passive junction
// nodes and constant conductance loads are folded into the network and
// eliminated by Kron reduction, so the final model sees only the master
// coupling vector g0 and the terminal conductance block G.
// =============================================================================

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dcgrad/errors.hpp"

namespace dcgrad {

struct PerUnitBase {
    double v_base = 380.0;  // volts
    double s_base = 1000.0; // watts

    double r_base() const { return v_base * v_base / s_base; }

    void validate() const {
        if (!(v_base > 0.0) || !std::isfinite(v_base))
            throw ValidationError("per-unit base: v_base must be a positive finite voltage");
        if (!(s_base > 0.0) || !std::isfinite(s_base))
            throw ValidationError("per-unit base: s_base must be a positive finite power");
    }
};

enum class ResistanceUnit { Ohm, PerUnit };

struct Line {
    int from = 0;
    int to = 0;
    double resistance = 0.0;
    ResistanceUnit unit = ResistanceUnit::Ohm;
};

/// Constant conductance (linear) load attached to a node.
struct Shunt {
    int node = 0;
    double g_pu = 0.0;
};

struct TerminalParams {
    int node = 0;
    double p = 0.0;  // per-unit power, > 0 generation, < 0 load
    double k = 0.0;  // per-unit droop gain, >= 0
    double c = 1e-3; // per-unit capacitance time constant, seconds
};

/// Reduced network model: everything the stability machinery consumes.
/// Row/column i of G corresponds to terminals[i]; terminals are sorted by
/// node id. g0 holds the (non-positive) coupling entries toward the master,
/// so that with p = k = 0 and flat voltage v = v0*1 the dynamics vanish.
struct GridModel {
    Eigen::MatrixXd G;
    Eigen::VectorXd g0;
    double v0 = 1.0;
    bool island = false;
    std::vector<TerminalParams> terminals;
    PerUnitBase base;

    // p/k/c mirrored into vectors aligned with G for the numeric paths.
    Eigen::VectorXd p;
    Eigen::VectorXd k;
    Eigen::VectorXd c;

    Eigen::Index n() const { return G.rows(); }
};

namespace detail {

inline std::string join_ids(const std::vector<int>& ids) {
    std::ostringstream os;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) os << ", ";
        os << ids[i];
    }
    return os.str();
}

} // namespace detail

/// Builds the grounded-Laplacian conductance matrix over node ids {0..max}:
/// diagonal = sum of incident branch (plus shunt) conductances, off-diagonal
/// = -branch conductance, everything per-unit. Rejects non-positive
/// resistances and disconnected graphs, naming the stranded component.
inline Eigen::MatrixXd build_full_conductance(const std::vector<Line>& lines,
                                              const PerUnitBase& base,
                                              const std::vector<Shunt>& shunts = {}) {
    base.validate();
    if (lines.empty()) throw ValidationError("grid description has no lines");

    int max_node = 0;
    for (const Line& line : lines) {
        if (line.from < 0 || line.to < 0)
            throw ValidationError("line endpoints must be non-negative node ids");
        if (line.from == line.to)
            throw ValidationError("line connects node " + std::to_string(line.from) + " to itself");
        if (!(line.resistance > 0.0) || !std::isfinite(line.resistance))
            throw ValidationError("line " + std::to_string(line.from) + "-" +
                                  std::to_string(line.to) + " has non-positive resistance");
        max_node = std::max({max_node, line.from, line.to});
    }
    for (const Shunt& s : shunts) {
        if (s.node < 0 || s.node > max_node)
            throw ValidationError("shunt references unknown node " + std::to_string(s.node));
        if (!(s.g_pu > 0.0) || !std::isfinite(s.g_pu))
            throw ValidationError("shunt at node " + std::to_string(s.node) +
                                  " has non-positive conductance");
    }

    const int m = max_node + 1;
    Eigen::MatrixXd conductance = Eigen::MatrixXd::Zero(m, m);
    for (const Line& line : lines) {
        const double r_pu = line.unit == ResistanceUnit::Ohm
                                ? line.resistance / base.r_base()
                                : line.resistance;
        const double g = 1.0 / r_pu;
        conductance(line.from, line.from) += g;
        conductance(line.to, line.to) += g;
        conductance(line.from, line.to) -= g;
        conductance(line.to, line.from) -= g;
    }
    for (const Shunt& s : shunts) conductance(s.node, s.node) += s.g_pu;

    // connectivity over {0..max}: every node must reach the master
    std::vector<int> parent(m);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&parent](int a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    };
    for (const Line& line : lines) parent[find(line.from)] = find(line.to);
    std::vector<int> stranded;
    for (int node = 0; node < m; ++node)
        if (find(node) != find(0)) stranded.push_back(node);
    if (!stranded.empty())
        throw ValidationError("grid graph is disconnected: nodes {" + detail::join_ids(stranded) +
                              "} have no path to the master (node 0)");
    return conductance;
}

/// Schur-complement elimination of all nodes not in `keep`:
/// Y_kk - Y_ke * Y_ee^{-1} * Y_ek, rows/cols ordered by ascending kept id.
/// Port behavior at the kept nodes is preserved.
inline Eigen::MatrixXd kron_reduce(const Eigen::MatrixXd& conductance, std::vector<int> keep) {
    const Eigen::Index m = conductance.rows();
    if (conductance.cols() != m) throw ValidationError("kron_reduce: matrix must be square");

    std::sort(keep.begin(), keep.end());
    keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
    if (keep.empty()) throw ValidationError("kron_reduce: must keep at least one node");
    if (keep.front() < 0 || keep.back() >= m)
        throw ValidationError("kron_reduce: kept node id out of range");

    std::vector<char> is_kept(static_cast<std::size_t>(m), 0);
    for (int id : keep) is_kept[static_cast<std::size_t>(id)] = 1;
    std::vector<int> elim;
    for (int id = 0; id < m; ++id)
        if (!is_kept[static_cast<std::size_t>(id)]) elim.push_back(id);
    if (elim.empty()) return conductance;

    const auto nk = static_cast<Eigen::Index>(keep.size());
    const auto ne = static_cast<Eigen::Index>(elim.size());
    Eigen::MatrixXd y_kk(nk, nk), y_ke(nk, ne), y_ee(ne, ne);
    for (Eigen::Index i = 0; i < nk; ++i) {
        for (Eigen::Index j = 0; j < nk; ++j) y_kk(i, j) = conductance(keep[i], keep[j]);
        for (Eigen::Index j = 0; j < ne; ++j) y_ke(i, j) = conductance(keep[i], elim[j]);
    }
    for (Eigen::Index i = 0; i < ne; ++i)
        for (Eigen::Index j = 0; j < ne; ++j) y_ee(i, j) = conductance(elim[i], elim[j]);

    Eigen::FullPivLU<Eigen::MatrixXd> lu(y_ee);
    if (!lu.isInvertible())
        throw ValidationError("kron_reduce: eliminated block is singular (floating subnetwork)");

    Eigen::MatrixXd reduced = y_kk - y_ke * lu.solve(y_ke.transpose());
    reduced = 0.5 * (reduced + reduced.transpose()).eval(); // symmetrize roundoff
    return reduced;
}

/// Assembles the GridModel from a conductance matrix already reduced to
/// {0} ∪ terminal nodes (ascending id order). G is the terminal block and
/// g0 the master column restricted to terminal rows; islanding zeroes g0.
/// Rejects models whose G block is not positive definite.
inline GridModel assemble_model(const Eigen::MatrixXd& reduced,
                                std::vector<TerminalParams> terminals,
                                double v0,
                                bool island,
                                const PerUnitBase& base = {}) {
    if (terminals.empty()) throw ValidationError("model needs at least one terminal");
    std::sort(terminals.begin(), terminals.end(),
              [](const TerminalParams& a, const TerminalParams& b) { return a.node < b.node; });
    for (std::size_t i = 0; i + 1 < terminals.size(); ++i)
        if (terminals[i].node == terminals[i + 1].node)
            throw ValidationError("terminal node " + std::to_string(terminals[i].node) +
                                  " appears more than once");
    for (const TerminalParams& t : terminals) {
        if (t.node <= 0)
            throw ValidationError("terminal node ids must be positive (node 0 is the master)");
        if (!(t.c > 0.0) || !std::isfinite(t.c))
            throw ValidationError("terminal " + std::to_string(t.node) +
                                  ": capacitance time constant must be > 0");
        if (t.k < 0.0 || !std::isfinite(t.k))
            throw ValidationError("terminal " + std::to_string(t.node) + ": droop gain must be >= 0");
        if (!std::isfinite(t.p))
            throw ValidationError("terminal " + std::to_string(t.node) + ": power must be finite");
    }

    const auto n = static_cast<Eigen::Index>(terminals.size());
    if (reduced.rows() != n + 1 || reduced.cols() != n + 1)
        throw ValidationError("assemble_model: reduced matrix must cover the master plus " +
                              std::to_string(terminals.size()) + " terminals");
    if (!reduced.isApprox(reduced.transpose(), 1e-12))
        throw ValidationError("assemble_model: conductance matrix is not symmetric");
    if (!(v0 >= 0.0) || !std::isfinite(v0))
        throw ValidationError("master voltage v0 must be finite and non-negative");

    GridModel model;
    model.G = reduced.bottomRightCorner(n, n);
    model.g0 = reduced.block(1, 0, n, 1);
    model.v0 = v0;
    model.island = island;
    model.terminals = std::move(terminals);
    model.base = base;
    if (island) model.g0.setZero();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(model.G, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() <= 0.0)
        throw ValidationError("model rejected: terminal conductance block G is not positive definite");

    model.p.resize(n);
    model.k.resize(n);
    model.c.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        model.p[i] = model.terminals[static_cast<std::size_t>(i)].p;
        model.k[i] = model.terminals[static_cast<std::size_t>(i)].k;
        model.c[i] = model.terminals[static_cast<std::size_t>(i)].c;
    }
    return model;
}

} // namespace dcgrad
