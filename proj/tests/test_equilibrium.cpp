#include <catch2/catch_amalgamated.hpp>

#include "dcgrad/dcgrad.hpp"
#include "helpers.hpp"

#include <random>

using namespace dcgrad;
using Catch::Approx;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("flat zero-power grid settles at the nominal voltage", "[equilibrium]") {
    const GridModel model = load_grid_file(testutil::fixture("flat.json"));
    const EquilibriumResult eq = solve_equilibrium(model);
    REQUIRE((eq.v_eq - VectorXd::Ones(model.n())).lpNorm<Eigen::Infinity>() <= 1e-12);
    REQUIRE(eq.certified);
}

TEST_CASE("scalar load matches the closed-form root", "[equilibrium]") {
    // v(1 - v) = 0.1875 has roots 0.75 and 0.25; descent from 1 picks 0.75
    const GridModel model = load_grid_file(testutil::fixture("scalar_load.json"));
    const EquilibriumResult eq = solve_equilibrium(model);
    REQUIRE(eq.v_eq[0] == Approx(0.75).margin(1e-10));
    REQUIRE(0.75 * (1.0 - 0.75) == Approx(0.1875));
}

TEST_CASE("two-node equilibrium agrees with a brute-force scan of W", "[equilibrium][oracle]") {
    const GridModel model = testutil::twonode();
    const EquilibriumResult eq = solve_equilibrium(model);

    // exhaustive 1e-3 grid over [0.5, 1.5]^2
    double best_w = std::numeric_limits<double>::infinity();
    VectorXd best(2);
    for (int i = 0; i <= 1000; ++i)
        for (int j = 0; j <= 1000; ++j) {
            VectorXd v(2);
            v << 0.5 + i * 1e-3, 0.5 + j * 1e-3;
            const double w = potential_w(model, v);
            if (w < best_w) {
                best_w = w;
                best = v;
            }
        }
    REQUIRE((eq.v_eq - best).lpNorm<Eigen::Infinity>() <= 1e-3);

    // frozen regression values
    REQUIRE(eq.v_eq[0] == Approx(0.913622470).margin(1e-6));
    REQUIRE(eq.v_eq[1] == Approx(0.949587918).margin(1e-6));
    REQUIRE(eq.w_at_eq == Approx(best_w).margin(1e-5));
}

TEST_CASE("W decreases across accepted iterations", "[equilibrium]") {
    const GridModel model = testutil::twonode();
    SolverConfig cfg;
    VectorXd start(2);
    start << 1.45, 0.55;
    cfg.initial_v = start;
    const EquilibriumResult eq = solve_equilibrium(model, cfg);
    REQUIRE(eq.trace.size() >= 2);
    for (std::size_t i = 0; i + 1 < eq.trace.size(); ++i)
        REQUIRE(eq.trace[i + 1].w <
                eq.trace[i].w + 1e-12 * std::max(1.0, std::abs(eq.trace[i].w)));
}

TEST_CASE("result invariants hold on all shipped fixtures", "[equilibrium]") {
    const char* names[] = {"flat.json",     "scalar_load.json", "scalar_roa.json",
                           "twonode.json",  "fivenode.json",    "allgen.json",
                           "tennode.json"};
    for (const char* name : names) {
        INFO(name);
        const GridModel model = load_grid_file(testutil::fixture(name));
        const EquilibriumResult eq = solve_equilibrium(model);
        REQUIRE(eq.residual_inf <= 1e-10);
        REQUIRE((eq.v_eq.array() > 0.0).all());
        REQUIRE(eq.hessian_lambda_min_at_eq > 0.0);
        REQUIRE(eq.certified);
        REQUIRE(eq.iterations <= 20); // newton from all-ones, quadratic convergence
    }
}

TEST_CASE("iteration budget exhaustion reports the trace", "[equilibrium][errors]") {
    const GridModel model = testutil::twonode();
    SolverConfig cfg;
    cfg.max_iter = 1;
    try {
        solve_equilibrium(model, cfg);
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& err) {
        REQUIRE(err.trace.size() == 1);
        REQUIRE(err.trace[0].residual_inf > 0.0);
    }
}

TEST_CASE("plain gradient descent solves the scalar fixture", "[equilibrium]") {
    const GridModel model = load_grid_file(testutil::fixture("scalar_load.json"));
    SolverConfig cfg;
    cfg.method = SolverConfig::Method::GradientDescent;
    cfg.max_iter = 500;
    const EquilibriumResult eq = solve_equilibrium(model, cfg);
    REQUIRE(eq.v_eq[0] == Approx(0.75).margin(1e-9));
}

TEST_CASE("equilibrium is invariant under uniform scaling of the model", "[equilibrium]") {
    const GridModel base = testutil::twonode();
    const EquilibriumResult eq_base = solve_equilibrium(base);
    for (double scale : {0.5, 3.7}) {
        GridModel scaled = base;
        scaled.G *= scale;
        scaled.g0 *= scale;
        scaled.p *= scale;
        scaled.k *= scale;
        const EquilibriumResult eq_scaled = solve_equilibrium(scaled);
        REQUIRE((eq_scaled.v_eq - eq_base.v_eq).lpNorm<Eigen::Infinity>() < 1e-9);
    }
}

TEST_CASE("multi-start probe finds a single equilibrium", "[equilibrium][uniqueness]") {
    const GridModel model = testutil::twonode();
    const VectorXd lo = VectorXd::Constant(2, 0.5);
    const VectorXd hi = VectorXd::Constant(2, 1.5);
    const UniquenessReport report = uniqueness_probe(model, {}, 50, lo, hi, 42);
    REQUIRE(report.spread <= 1e-8);
    REQUIRE(report.all_converged_to_same);

    const UniquenessReport single = uniqueness_probe(model, {}, 1, lo, hi, 42);
    REQUIRE(single.spread == 0.0);
}

TEST_CASE("generation-only grids converge from anywhere in the orthant",
          "[equilibrium][uniqueness]") {
    std::mt19937_64 rng(2024);
    const GridModel model = testutil::random_model(rng, 5, true, true);
    const VectorXd lo = VectorXd::Constant(5, 0.2);
    const VectorXd hi = VectorXd::Constant(5, 3.0);
    const UniquenessReport report = uniqueness_probe(model, {}, 20, lo, hi, 7);
    REQUIRE(report.spread <= 1e-8);
}

TEST_CASE("solver input validation", "[equilibrium][errors]") {
    const GridModel model = testutil::twonode();
    SolverConfig cfg;
    cfg.initial_v = VectorXd::Zero(2);
    REQUIRE_THROWS_AS(solve_equilibrium(model, cfg), std::domain_error);
    cfg.initial_v = VectorXd::Ones(3);
    REQUIRE_THROWS_AS(solve_equilibrium(model, cfg), ValidationError);
    REQUIRE_THROWS_AS(
        uniqueness_probe(model, {}, 3, VectorXd::Zero(2), VectorXd::Ones(2), 1),
        ValidationError);
}
