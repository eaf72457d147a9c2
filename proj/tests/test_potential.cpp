#include <catch2/catch_amalgamated.hpp>

#include "dcgrad/dcgrad.hpp"
#include "helpers.hpp"

#include <random>

using namespace dcgrad;
using Catch::Approx;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {
GridModel scalar_model(double p, double k = 0.0, double v0 = 1.0) {
    return testutil::make_model({{0, 1, 1.0}}, {{1, p, k, 1e-3}}, v0);
}
} // namespace

TEST_CASE("potential value by direct substitution", "[potential]") {
    const GridModel model = scalar_model(0.0);
    // W(v) = -v + v^2/2 for p = k = 0, g = 1, g0 = -1, v0 = 1
    REQUIRE(potential_w(model, VectorXd::Ones(1)) == Approx(-0.5).margin(1e-15));
    REQUIRE(potential_w(model, VectorXd::Constant(1, 2.0)) == Approx(0.0).margin(1e-15));
}

TEST_CASE("potential matches an independent evaluator", "[potential]") {
    const GridModel model = testutil::twonode();
    std::mt19937_64 rng(21);
    for (int i = 0; i < 20; ++i) {
        const VectorXd v = testutil::random_point(rng, model.n());
        const double got = potential_w(model, v);
        const double want = testutil::reference_w(model, v);
        REQUIRE(got == Approx(want).epsilon(1e-12).margin(1e-12));
    }
}

TEST_CASE("gradient vanishes at the flat scalar equilibrium", "[potential]") {
    const GridModel model = scalar_model(0.0);
    REQUIRE(gradient_w(model, VectorXd::Ones(1))[0] == 0.0);
}

TEST_CASE("gradient vanishes at a solved equilibrium", "[potential]") {
    const GridModel model = testutil::twonode();
    const EquilibriumResult eq = solve_equilibrium(model);
    REQUIRE(gradient_w(model, eq.v_eq).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("gradient agrees with central differences of W", "[potential][oracle]") {
    std::mt19937_64 rng(33);
    std::uniform_int_distribution<int> n_dist(1, 10);
    for (int trial = 0; trial < 20; ++trial) {
        const GridModel model = testutil::random_model(rng, n_dist(rng));
        const VectorXd v = testutil::random_point(rng, model.n());
        const VectorXd analytic = gradient_w(model, v);
        const VectorXd numeric = testutil::fd_gradient(
            [&](const VectorXd& point) { return potential_w(model, point); }, v);
        REQUIRE(testutil::rel_err_inf(analytic, numeric) < 1e-6);
    }
}

TEST_CASE("hessian equals G when power and droop vanish", "[potential]") {
    const GridModel model = testutil::make_model(
        {{0, 1, 2.0}, {1, 2, 3.0}}, {{1, 0.0, 0.0, 1e-3}, {2, 0.0, 0.0, 1e-3}});
    std::mt19937_64 rng(5);
    const VectorXd v = testutil::random_point(rng, 2);
    REQUIRE((hessian_w(model, v) - model.G).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("hessian scalar case", "[potential]") {
    const GridModel model = scalar_model(-0.5);
    REQUIRE(hessian_w(model, VectorXd::Ones(1))(0, 0) == Approx(0.5).margin(1e-15));
}

TEST_CASE("hessian agrees with finite differences of the gradient", "[potential][oracle]") {
    std::mt19937_64 rng(47);
    std::uniform_int_distribution<int> n_dist(1, 10);
    for (int trial = 0; trial < 20; ++trial) {
        const GridModel model = testutil::random_model(rng, n_dist(rng));
        const VectorXd v = testutil::random_point(rng, model.n());
        const MatrixXd analytic = hessian_w(model, v);
        const MatrixXd numeric = testutil::fd_jacobian(
            [&](const VectorXd& point) { return gradient_w(model, point); }, v);
        REQUIRE(testutil::rel_err_inf(analytic, numeric) < 1e-5);
    }
}

TEST_CASE("hessian is symmetric and matches the entrywise formula", "[potential]") {
    std::mt19937_64 rng(59);
    for (int trial = 0; trial < 10; ++trial) {
        const GridModel model = testutil::random_model(rng, 6);
        const VectorXd v = testutil::random_point(rng, model.n());
        const MatrixXd hess = hessian_w(model, v);
        REQUIRE((hess - hess.transpose()).cwiseAbs().maxCoeff() < 1e-12);

        MatrixXd entrywise(model.n(), model.n());
        for (Eigen::Index i = 0; i < model.n(); ++i)
            for (Eigen::Index j = 0; j < model.n(); ++j) {
                entrywise(i, j) = model.G(i, j);
                if (i == j)
                    entrywise(i, j) +=
                        (model.p[i] + model.k[i]) / (v[i] * v[i]) + model.k[i];
            }
        REQUIRE((hess - entrywise).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("droop variants agree when k is zero", "[potential][dynamics]") {
    std::mt19937_64 rng(71);
    const GridModel model = testutil::random_model(rng, 4, false);
    for (int i = 0; i < 10; ++i) {
        const VectorXd v = testutil::random_point(rng, model.n());
        const VectorXd a = dynamics_rhs(model, v, DroopVariant::GradientConsistent);
        const VectorXd b = dynamics_rhs(model, v, DroopVariant::PaperEq1);
        REQUIRE(testutil::rel_err_inf(a, b) < 1e-13);
    }
}

TEST_CASE("droop variants agree at nominal voltage for any droop gain", "[potential][dynamics]") {
    std::mt19937_64 rng(83);
    for (int trial = 0; trial < 10; ++trial) {
        const GridModel model = testutil::random_model(rng, 5, true);
        const VectorXd ones = VectorXd::Ones(model.n());
        const VectorXd a = dynamics_rhs(model, ones, DroopVariant::GradientConsistent);
        const VectorXd b = dynamics_rhs(model, ones, DroopVariant::PaperEq1);
        REQUIRE(testutil::rel_err_inf(a, b) < 1e-13);
    }
}

TEST_CASE("gradient-consistent dynamics are exactly the scaled negative gradient",
          "[potential][dynamics]") {
    std::mt19937_64 rng(97);
    for (int trial = 0; trial < 20; ++trial) {
        const GridModel model = testutil::random_model(rng, 6);
        const VectorXd v = testutil::random_point(rng, model.n());
        const VectorXd rhs = dynamics_rhs(model, v, DroopVariant::GradientConsistent);
        const VectorXd grad = gradient_w(model, v);
        for (Eigen::Index i = 0; i < model.n(); ++i)
            REQUIRE(rhs[i] == -grad[i] / model.c[i]);
    }
}

TEST_CASE("convexity certificate scalar cases", "[potential][certificate]") {
    const GridModel model = scalar_model(-0.5);

    const auto at_one = convexity_certificate(model, VectorXd::Ones(1), 0.1);
    REQUIRE(at_one.lambda_min == Approx(0.5).margin(1e-14));
    REQUIRE(at_one.certified);

    const auto at_half = convexity_certificate(model, VectorXd::Constant(1, 0.5), 0.1);
    REQUIRE(at_half.lambda_min == Approx(-1.0).margin(1e-12));
    REQUIRE_FALSE(at_half.certified);
}

TEST_CASE("generation-only models stay convex everywhere", "[potential][certificate][property]") {
    std::mt19937_64 rng(111);
    for (int trial = 0; trial < 10; ++trial) {
        const GridModel model = testutil::random_model(rng, 5, false, true);
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(model.G, Eigen::EigenvaluesOnly);
        const double lambda_g = eig.eigenvalues().minCoeff();
        const VectorXd v = testutil::random_point(rng, model.n(), 0.1, 3.0);
        const auto cert = convexity_certificate(model, v, lambda_g);
        REQUIRE(cert.lambda_min >= lambda_g - 1e-12);
        REQUIRE(cert.certified);
    }
}

TEST_CASE("non-positive voltages are rejected", "[potential][errors]") {
    const GridModel model = testutil::twonode();
    VectorXd bad(2);
    bad << 1.0, 0.0;
    REQUIRE_THROWS_AS(potential_w(model, bad), std::domain_error);
    REQUIRE_THROWS_AS(gradient_w(model, bad), std::domain_error);
    REQUIRE_THROWS_AS(hessian_w(model, bad), std::domain_error);
    REQUIRE_THROWS_AS(dynamics_rhs(model, bad, DroopVariant::PaperEq1), std::domain_error);
    REQUIRE_THROWS_AS(potential_w(model, VectorXd::Ones(3)), std::invalid_argument);
}
