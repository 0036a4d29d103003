#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <complex>
#include <random>

#include "rer/lti.hpp"
#include "test_util.hpp"

using namespace rer;
using testutil::randn;
using testutil::random_stable;

namespace {
StateSpace delay_1() {
    // G(z) = 1/z
    StateSpace s;
    s.A = Eigen::MatrixXd::Zero(1, 1);
    s.B = Eigen::MatrixXd::Ones(1, 1);
    s.C = Eigen::MatrixXd::Ones(1, 1);
    s.D = Eigen::MatrixXd::Zero(1, 1);
    return s;
}
}  // namespace

TEST_CASE("eval_transfer on the unit delay") {
    StateSpace s = delay_1();
    CHECK(std::abs(eval_transfer(s, 0.0)(0, 0) - 1.0) < 1e-15);
    // 1/e^{j pi/2} = -j
    CHECK(std::abs(eval_transfer(s, M_PI / 2)(0, 0) - std::complex<double>(0, -1)) <
          1e-15);
}

TEST_CASE("resonant block peaks at its pole argument") {
    StateSpace bank = build_filterbank({{0.9 * std::cos(0.52), 0.9 * std::sin(0.52)},
                                        {0.9 * std::cos(0.52), -0.9 * std::sin(0.52)}},
                                       1);
    double at_pole = eval_transfer(bank, 0.52).norm();
    double best = 0.0;
    for (int k = 1; k <= 1024; ++k) {
        double th = -M_PI + 2 * M_PI * k / 1024.0;
        best = std::max(best, eval_transfer(bank, th).norm());
    }
    CHECK(at_pole >= best * (1.0 - 1e-3));
}

TEST_CASE("eval_transfer rejects a pole on the circle") {
    StateSpace s = delay_1();
    s.A(0, 0) = 1.0;
    CHECK_THROWS_AS(eval_transfer(s, 0.0), std::domain_error);
}

TEST_CASE("discrete Lyapunov closed forms") {
    Eigen::MatrixXd I3 = Eigen::MatrixXd::Identity(3, 3);
    CHECK((solve_discrete_lyapunov(Eigen::MatrixXd::Zero(3, 3), I3) - I3).norm() <
          1e-14);

    Eigen::MatrixXd F(1, 1), Q(1, 1);
    F << 0.5;
    Q << 1.0;
    // geometric series: sum 0.25^k = 1/(1 - 0.25)
    CHECK(solve_discrete_lyapunov(F, Q)(0, 0) == doctest::Approx(4.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("Lyapunov solution matches the truncated series") {
    std::mt19937 rng(7);
    Eigen::MatrixXd F = random_stable(rng, 4, 0.6);
    Eigen::MatrixXd B = randn(rng, 4, 2);
    Eigen::MatrixXd Q = B * B.transpose();
    Eigen::MatrixXd X = solve_discrete_lyapunov(F, Q);
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(4, 4);
    Eigen::MatrixXd Fk = Eigen::MatrixXd::Identity(4, 4);
    for (int k = 0; k < 200; ++k) {
        S += Fk * Q * Fk.transpose();
        Fk = F * Fk;
    }
    CHECK((X - S).norm() < 1e-12 * S.norm());
}

TEST_CASE("Lyapunov residual bound over random systems") {
    std::mt19937 rng(11);
    std::uniform_int_distribution<int> pick_n(1, 20);
    std::uniform_real_distribution<double> pick_r(0.05, 0.97);
    for (int trial = 0; trial < 1000; ++trial) {
        int n = pick_n(rng);
        Eigen::MatrixXd F = random_stable(rng, n, pick_r(rng));
        Eigen::MatrixXd Q = randn(rng, n, n);
        Q = (0.5 * (Q + Q.transpose())).eval();
        Eigen::MatrixXd X = solve_discrete_lyapunov(F, Q);
        double res = (X - F * X * F.transpose() - Q).norm();
        REQUIRE(res <= 1e-10 * (1.0 + Q.norm()));
        REQUIRE((X - X.transpose()).norm() == 0.0);
    }
}

TEST_CASE("Lyapunov rejects unstable F") {
    Eigen::MatrixXd F(1, 1), Q(1, 1);
    F << 1.01;
    Q << 1.0;
    CHECK_THROWS_AS(solve_discrete_lyapunov(F, Q), std::domain_error);
}

TEST_CASE("two-sided Stein solve") {
    std::mt19937 rng(13);
    Eigen::MatrixXd F = random_stable(rng, 5, 0.8);
    Eigen::MatrixXd G = random_stable(rng, 3, 0.7);
    Eigen::MatrixXd Q = randn(rng, 5, 3);
    Eigen::MatrixXd X = solve_stein(F, G, Q);
    CHECK((X - F * X * G.transpose() - Q).norm() < 1e-11 * (1.0 + Q.norm()));
}

TEST_CASE("reachability gramian") {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(1, 1);
    Eigen::MatrixXd B = Eigen::MatrixXd::Ones(1, 1);
    CHECK(reachability_gramian(A, B)(0, 0) == doctest::Approx(1.0));

    // repeated pole, single input aligned with one mode only: unreachable
    Eigen::MatrixXd A2 = 0.5 * Eigen::MatrixXd::Identity(2, 2);
    Eigen::MatrixXd B2(2, 1);
    B2 << 1, 0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(reachability_gramian(A2, B2));
    CHECK(es.eigenvalues().minCoeff() < 1e-12);

    StateSpace bank = build_filterbank(
        {{0.0, 0.0},
         {0.85, 0.0},
         {-0.85, 0.0},
         {0.9 * std::cos(0.42), 0.9 * std::sin(0.42)},
         {0.9 * std::cos(0.42), -0.9 * std::sin(0.42)},
         {0.9 * std::cos(0.44), 0.9 * std::sin(0.44)},
         {0.9 * std::cos(0.44), -0.9 * std::sin(0.44)},
         {0.9 * std::cos(0.46), 0.9 * std::sin(0.46)},
         {0.9 * std::cos(0.46), -0.9 * std::sin(0.46)},
         {0.9 * std::cos(0.48), 0.9 * std::sin(0.48)},
         {0.9 * std::cos(0.48), -0.9 * std::sin(0.48)},
         {0.9 * std::cos(0.50), 0.9 * std::sin(0.50)},
         {0.9 * std::cos(0.50), -0.9 * std::sin(0.50)}},
        1);
    REQUIRE(bank.order() == 13);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eb(
        reachability_gramian(bank.A, bank.B));
    CHECK(eb.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("series against pointwise products") {
    StateSpace d1 = delay_1();

    SUBCASE("identity pass-through") {
        StateSpace id = static_gain(Eigen::MatrixXd::Identity(1, 1));
        CHECK(testutil::max_transfer_gap(series(d1, id), d1) < 1e-15);
        CHECK(testutil::max_transfer_gap(series(id, d1), d1) < 1e-15);
    }

    SUBCASE("static gain upstream of a delay") {
        Eigen::MatrixXd sigma(1, 1);
        sigma << 2.5;
        StateSpace g = series(static_gain(sigma), d1);  // 2.5 / z
        CHECK(std::abs(eval_transfer(g, 0.3)(0, 0) -
                       2.5 / std::exp(std::complex<double>(0, 0.3))) < 1e-14);
    }

    SUBCASE("random cascade equals the product on a grid") {
        std::mt19937 rng(5);
        StateSpace a{random_stable(rng, 4, 0.8), randn(rng, 4, 2), randn(rng, 3, 4),
                     randn(rng, 3, 2)};
        StateSpace b{random_stable(rng, 3, 0.7), randn(rng, 3, 3), randn(rng, 2, 3),
                     randn(rng, 2, 3)};
        StateSpace ab = series(a, b);  // b(z) a(z)
        double worst = 0.0;
        for (int k = 1; k <= 1024; ++k) {
            double th = -M_PI + 2 * M_PI * k / 1024.0;
            worst = std::max(worst, (eval_transfer(ab, th) -
                                     eval_transfer(b, th) * eval_transfer(a, th))
                                        .cwiseAbs()
                                        .maxCoeff());
        }
        CHECK(worst < 1e-12);
    }

    SUBCASE("associativity up to state reordering") {
        std::mt19937 rng(9);
        StateSpace a{random_stable(rng, 3, 0.8), randn(rng, 3, 2), randn(rng, 2, 3),
                     randn(rng, 2, 2)};
        StateSpace b{random_stable(rng, 2, 0.6), randn(rng, 2, 2), randn(rng, 2, 2),
                     randn(rng, 2, 2)};
        StateSpace c{random_stable(rng, 4, 0.7), randn(rng, 4, 2), randn(rng, 2, 4),
                     randn(rng, 2, 2)};
        CHECK(testutil::max_transfer_gap(series(series(a, b), c),
                                         series(a, series(b, c))) < 1e-12);
    }

    SUBCASE("dimension mismatch throws") {
        StateSpace wide{Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Ones(1, 2),
                        Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Zero(1, 2)};
        CHECK_THROWS_AS(series(wide, wide), std::invalid_argument);
    }
}

TEST_CASE("filter bank construction") {
    SUBCASE("single integrator-like pole") {
        StateSpace s = build_filterbank({{0.0, 0.0}}, 1);
        CHECK(s.A(0, 0) == 0.0);
        CHECK(s.B(0, 0) == 1.0);
        CHECK(s.order() == 1);
    }

    SUBCASE("multichannel bank: four pairs at radius 0.7") {
        std::vector<std::complex<double>> poles;
        for (int k = 1; k <= 4; ++k) {
            double w = k * M_PI / 5;
            poles.emplace_back(0.7 * std::cos(w), 0.7 * std::sin(w));
            poles.emplace_back(0.7 * std::cos(w), -0.7 * std::sin(w));
        }
        StateSpace s = build_filterbank(poles, 2);
        REQUIRE(s.order() == 8);
        CHECK(s.B.cols() == 2);
        CHECK(is_stable(s.A));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
            reachability_gramian(s.A, s.B));
        CHECK(es.eigenvalues().minCoeff() > 0.0);
        // block structure: eigenvalues are exactly the requested poles
        Eigen::VectorXcd ev = s.A.eigenvalues();
        std::vector<double> args;
        for (int i = 0; i < 8; ++i) {
            CHECK(std::abs(std::abs(ev(i)) - 0.7) < 1e-12);
        }
    }

    SUBCASE("rejects pole outside the disk") {
        CHECK_THROWS_AS(build_filterbank({{1.0, 0.0}}, 1), std::invalid_argument);
        CHECK_THROWS_AS(build_filterbank({{0.8, 0.7}, {0.8, -0.7}}, 1),
                        std::invalid_argument);  // modulus > 1
    }

    SUBCASE("rejects an unpaired complex pole") {
        CHECK_THROWS_AS(build_filterbank({{0.5, 0.5}}, 1), std::invalid_argument);
    }
}
