#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "rer/spectra.hpp"
#include "test_util.hpp"

using namespace rer;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;

namespace {

constexpr double kPi = std::numbers::pi;

// W(z) = 1 + 0.5 z^{-1}, so Phi(theta) = 1.25 + cos(theta)
SpectralDensity ma1_density() {
    StateSpace w;
    w.A = MatrixXd::Zero(1, 1);
    w.B = MatrixXd::Ones(1, 1);
    w.C = MatrixXd::Constant(1, 1, 0.5);
    w.D = MatrixXd::Ones(1, 1);
    return SpectralDensity::factor(w);
}

// W(z) = z / (z - 0.5): unit-variance innovations AR(1)
SpectralDensity ar1_density() {
    StateSpace w;
    w.A = MatrixXd::Constant(1, 1, 0.5);
    w.B = MatrixXd::Ones(1, 1);
    w.C = MatrixXd::Constant(1, 1, 0.5);
    w.D = MatrixXd::Ones(1, 1);
    return SpectralDensity::factor(w);
}

SpectralDensity const_scalar(double v) {
    return SpectralDensity::constant(MatrixXd::Constant(1, 1, v));
}

// random stable factor with dominant D, which keeps the zeros inside the
// unit circle (checked by the caller where that matters)
SpectralDensity random_factor(std::mt19937& rng, int n, int m) {
    StateSpace w;
    w.A = testutil::random_stable(rng, n, 0.8);
    w.B = testutil::randn(rng, n, m);
    w.C = 0.3 * testutil::randn(rng, m, n);
    w.D = testutil::randn(rng, m, m) + 3.0 * MatrixXd::Identity(m, m);
    return SpectralDensity::factor(w);
}

SpectralDensity random_minphase_factor(std::mt19937& rng, int n, int m) {
    for (int tries = 0; tries < 50; ++tries) {
        SpectralDensity d = random_factor(rng, n, m);
        const StateSpace& w = d.W;
        if (spectral_radius(w.A - w.B * w.D.inverse() * w.C) < 0.95) return d;
    }
    throw std::runtime_error("could not draw a minimum-phase factor");
}

std::vector<double> uniform_nodes(int m) {
    std::vector<double> th(m);
    for (int k = 0; k < m; ++k) th[k] = -kPi + 2.0 * kPi * (k + 1) / m;
    return th;
}

SpectralDensity sample_to_grid(const SpectralDensity& phi, int m) {
    auto nodes = uniform_nodes(m);
    std::vector<MatrixXcd> vals(nodes.size());
    for (std::size_t j = 0; j < nodes.size(); ++j) vals[j] = eval_density(phi, nodes[j]);
    return SpectralDensity::grid(nodes, vals);
}

}  // namespace

TEST_CASE("moving-average density evaluates to 1.25 + cos(theta)") {
    SpectralDensity phi = ma1_density();
    for (double th : {0.0, 0.3, kPi / 2, -1.1, kPi}) {
        CHECK(std::abs(eval_density(phi, th)(0, 0) -
                       std::complex<double>(1.25 + std::cos(th), 0.0)) < 1e-12);
    }
    CHECK(std::real(eval_density(phi, 0.0)(0, 0)) == doctest::Approx(2.25));
}

TEST_CASE("factor construction rejects bad data") {
    StateSpace w;
    w.A = MatrixXd::Constant(1, 1, 1.0);  // pole on the circle
    w.B = w.C = w.D = MatrixXd::Ones(1, 1);
    CHECK_THROWS_AS((void)SpectralDensity::factor(w), std::invalid_argument);

    w.A = MatrixXd::Constant(1, 1, 0.5);
    w.D = MatrixXd::Zero(1, 1);  // singular D
    CHECK_THROWS_AS((void)SpectralDensity::factor(w), std::invalid_argument);

    StateSpace rect;
    rect.A = MatrixXd::Zero(1, 1);
    rect.B = MatrixXd::Ones(1, 2);
    rect.C = MatrixXd::Ones(1, 1);
    rect.D = MatrixXd::Ones(1, 2);
    CHECK_THROWS_AS((void)SpectralDensity::factor(rect), std::invalid_argument);

    CHECK_THROWS_AS((void)SpectralDensity::constant(-MatrixXd::Identity(2, 2)),
                    std::domain_error);
}

TEST_CASE("real factor densities satisfy Phi(-theta) = conj(Phi(theta))") {
    std::mt19937 rng(11);
    SpectralDensity phi = random_factor(rng, 4, 2);
    std::uniform_real_distribution<double> ang(-kPi, kPi);
    for (int k = 0; k < 25; ++k) {
        double th = ang(rng);
        MatrixXcd a = eval_density(phi, th);
        MatrixXcd b = eval_density(phi, -th);
        CHECK((a - b.conjugate()).norm() < 1e-12 * (1.0 + a.norm()));
        CHECK((a - a.adjoint()).norm() < 1e-12 * (1.0 + a.norm()));
    }
}

TEST_CASE("grid form") {
    SUBCASE("nearest-node lookup with wrap-around") {
        std::vector<double> nodes = {-kPi / 2, 0.0, kPi / 2, kPi};
        std::vector<MatrixXcd> vals;
        for (int k = 1; k <= 4; ++k) vals.push_back(MatrixXcd::Constant(1, 1, k));
        SpectralDensity g = SpectralDensity::grid(nodes, vals);
        CHECK(std::real(eval_density(g, 0.0)(0, 0)) == doctest::Approx(2.0));
        CHECK(std::real(eval_density(g, 0.1)(0, 0)) == doctest::Approx(2.0));
        CHECK(std::real(eval_density(g, 0.8)(0, 0)) == doctest::Approx(3.0));
        CHECK(std::real(eval_density(g, 3.2)(0, 0)) == doctest::Approx(4.0));
        CHECK(std::real(eval_density(g, -kPi)(0, 0)) == doctest::Approx(4.0));
    }
    SUBCASE("construction validates nodes and values") {
        auto nodes = uniform_nodes(8);
        std::vector<MatrixXcd> vals(8, MatrixXcd::Identity(2, 2));
        CHECK_NOTHROW((void)SpectralDensity::grid(nodes, vals));

        auto bad_nodes = nodes;
        bad_nodes[3] += 0.01;
        CHECK_THROWS_AS((void)SpectralDensity::grid(bad_nodes, vals),
                        std::invalid_argument);

        auto bad_vals = vals;
        bad_vals[2](0, 1) = std::complex<double>(0.0, 1.0);  // not Hermitian
        CHECK_THROWS_AS((void)SpectralDensity::grid(nodes, bad_vals),
                        std::invalid_argument);

        auto neg_vals = vals;
        neg_vals[5] = -MatrixXcd::Identity(2, 2);
        CHECK_THROWS_AS((void)SpectralDensity::grid(nodes, neg_vals),
                        std::domain_error);
    }
    SUBCASE("pairs of grids must share the node set") {
        SpectralDensity a = sample_to_grid(ma1_density(), 512);
        SpectralDensity b = sample_to_grid(const_scalar(1.0), 256);
        CHECK_THROWS_AS((void)d_rer(a, b), std::invalid_argument);
    }
    SUBCASE("grid and factor inputs agree with the closed form") {
        SpectralDensity ga = sample_to_grid(ma1_density(), 512);
        SpectralDensity gb = sample_to_grid(const_scalar(1.0), 512);
        CHECK(std::abs(d_rer(ga, gb) - 0.125) < 1e-9);
        CHECK(std::abs(d_rer(ma1_density(), gb) - 0.125) < 1e-9);
    }
}

TEST_CASE("divergence closed forms and properties") {
    SUBCASE("moving-average versus flat reference") {
        // mean(phi) = 1.25, mean(log phi) = 0, so the value is (1.25 - 1)/2
        CHECK(std::abs(d_rer(ma1_density(), const_scalar(1.0)) - 0.125) < 1e-10);
        CHECK(std::abs(itakura_saito(ma1_density(), const_scalar(1.0)) - 0.25) < 1e-10);
    }
    SUBCASE("scalar divergence is half the Itakura-Saito distance") {
        double d = d_rer(ma1_density(), ar1_density());
        double is = itakura_saito(ma1_density(), ar1_density());
        CHECK(std::abs(d - 0.5 * is) < 1e-10);
    }
    SUBCASE("identical arguments give zero") {
        CHECK(std::abs(d_rer(ma1_density(), ma1_density())) < 1e-12);
        std::mt19937 rng(3);
        SpectralDensity phi = random_factor(rng, 3, 2);
        CHECK(std::abs(d_rer(phi, phi)) < 1e-12);
    }
    SUBCASE("nonnegative on random pairs") {
        std::mt19937 rng(17);
        for (int k = 0; k < 10; ++k) {
            SpectralDensity a = random_factor(rng, 3, 2);
            SpectralDensity b = random_factor(rng, 2, 2);
            CHECK(d_rer(a, b) >= -1e-12);
        }
    }
    SUBCASE("constant pair matches the static divergence") {
        MatrixXd p(2, 2), q(2, 2);
        p << 2, 1, 1, 2;
        q = MatrixXd::Identity(2, 2);
        double expect = 0.5 * circular_gauss_kl(p.cast<std::complex<double>>(),
                                                q.cast<std::complex<double>>());
        CHECK(std::abs(d_rer(SpectralDensity::constant(p), SpectralDensity::constant(q)) -
                       expect) < 1e-12);
    }
    SUBCASE("invariant under constant congruence") {
        std::mt19937 rng(29);
        SpectralDensity a = random_factor(rng, 3, 2);
        SpectralDensity b = random_factor(rng, 2, 2);
        double base = d_rer(a, b);
        MatrixXd t(2, 2);
        t << 2.0, 0.5, -0.3, 1.0;
        auto congruent = [&](const SpectralDensity& d) {
            StateSpace w = d.W;
            w.C = t * w.C;
            w.D = t * w.D;
            return SpectralDensity::factor(w);
        };
        CHECK(std::abs(d_rer(congruent(a), congruent(b)) - base) <
              1e-8 * (1.0 + std::abs(base)));
    }
    SUBCASE("Itakura-Saito is scale invariant and scalar only") {
        SpectralDensity phi = ma1_density(), psi = ar1_density();
        auto scale4 = [](const SpectralDensity& d) {
            StateSpace w = d.W;
            w.C *= 2.0;
            w.D *= 2.0;
            return SpectralDensity::factor(w);
        };
        CHECK(std::abs(itakura_saito(scale4(phi), scale4(psi)) -
                       itakura_saito(phi, psi)) < 1e-10);
        std::mt19937 rng(5);
        SpectralDensity mv = random_factor(rng, 2, 2);
        CHECK_THROWS_AS((void)itakura_saito(mv, mv), std::invalid_argument);
    }
}

TEST_CASE("time-domain rate agrees with the spectral divergence") {
    CHECK(std::abs(rer_time_domain(ma1_density(), const_scalar(1.0)) - 0.125) < 1e-10);
    std::mt19937 rng(41);
    for (int k = 0; k < 5; ++k) {
        SpectralDensity a = random_factor(rng, 3, 2);
        SpectralDensity b = random_factor(rng, 2, 2);
        double d = d_rer(a, b);
        CHECK(std::abs(rer_time_domain(a, b) - d) < 1e-9 * (1.0 + std::abs(d)));
    }
}

TEST_CASE("entropy rate") {
    const double half_log_2pie = 0.5 * std::log(2.0 * kPi * std::numbers::e);
    // both factors have unit innovation variance
    CHECK(std::abs(entropy_rate(ma1_density()) - half_log_2pie) < 1e-10);
    CHECK(std::abs(entropy_rate(ar1_density()) - half_log_2pie) < 1e-10);
    CHECK(std::abs(entropy_rate(const_scalar(4.0)) -
                   (half_log_2pie + 0.5 * std::log(4.0))) < 1e-12);
    SpectralDensity g = sample_to_grid(const_scalar(4.0), 128);
    CHECK(std::abs(entropy_rate(g) - (half_log_2pie + 0.5 * std::log(4.0))) < 1e-12);
}

TEST_CASE("geometric-mean identity for minimum-phase factors") {
    std::mt19937 rng(59);
    std::vector<SpectralDensity> cases = {ma1_density(), ar1_density(),
                                          random_minphase_factor(rng, 3, 2),
                                          random_minphase_factor(rng, 4, 3)};
    for (const SpectralDensity& phi : cases) {
        const StateSpace& w = phi.W;
        const int m = phi.dim();
        double mean_logdet =
            2.0 * (entropy_rate(phi) - 0.5 * m * std::log(2.0 * kPi * std::numbers::e));
        double lhs = std::exp(mean_logdet);
        double rhs = (w.D * w.D.transpose()).determinant();
        CHECK(std::abs(lhs - rhs) < 1e-8 * (1.0 + std::abs(rhs)));
    }
}

TEST_CASE("spectral increment covariance") {
    SUBCASE("scalar antiderivative 1.25 theta + sin theta") {
        IncrementCovariance inc = increment_covariance(ma1_density(), 0.0, kPi / 4);
        double expect = 1.25 * kPi / 4 + std::sin(kPi / 4);
        CHECK(std::abs(std::real(inc.Q(0, 0)) - expect) < 1e-10);
        CHECK(std::abs(std::imag(inc.Q(0, 0))) < 1e-12);
    }
    SUBCASE("additive over adjacent intervals") {
        std::mt19937 rng(71);
        SpectralDensity phi = random_factor(rng, 4, 2);
        MatrixXcd whole = increment_covariance(phi, -1.0, 2.0).Q;
        MatrixXcd split = increment_covariance(phi, -1.0, 0.5).Q +
                          increment_covariance(phi, 0.5, 2.0).Q;
        CHECK((whole - split).norm() < 1e-9 * (1.0 + whole.norm()));
    }
    SUBCASE("full-circle integral equals the process covariance") {
        std::mt19937 rng(73);
        SpectralDensity phi = random_factor(rng, 3, 2);
        const StateSpace& w = phi.W;
        MatrixXd cov = w.D * w.D.transpose() +
                       w.C * reachability_gramian(w.A, w.B) * w.C.transpose();
        MatrixXcd q = increment_covariance(phi, -kPi, kPi).Q / (2.0 * kPi);
        CHECK((q - cov.cast<std::complex<double>>()).norm() < 1e-9 * (1.0 + cov.norm()));
    }
    SUBCASE("empty interval is rejected") {
        CHECK_THROWS_AS((void)increment_covariance(ma1_density(), 1.0, 1.0),
                        std::invalid_argument);
    }
}

TEST_CASE("circular Gaussian divergence") {
    MatrixXcd two = MatrixXcd::Constant(1, 1, 2.0);
    MatrixXcd one = MatrixXcd::Identity(1, 1);
    CHECK(std::abs(circular_gauss_kl(two, one) - (1.0 - std::log(2.0))) < 1e-14);
    CHECK(std::abs(circular_gauss_kl(two, two)) < 1e-14);
    MatrixXcd p(2, 2);
    p << 2, 1, 1, 2;
    CHECK(std::abs(circular_gauss_kl(p, MatrixXcd::Identity(2, 2)) -
                   (2.0 - std::log(3.0))) < 1e-12);
    CHECK_THROWS_AS((void)circular_gauss_kl(-two, one), std::domain_error);
}

TEST_CASE("partitioned spectral rate") {
    SUBCASE("constant pair is exact at every partition size") {
        SpectralDensity y = const_scalar(2.0), z = const_scalar(1.0);
        const double expect = 0.5 * (1.0 - std::log(2.0));
        for (int n : {1, 2, 5, 17}) {
            CHECK(std::abs(spectral_rer_partition(y, z, n) - expect) < 1e-12);
        }
    }
    SUBCASE("refinement converges to the time-domain rate") {
        SpectralDensity y = ma1_density(), z = const_scalar(1.0);
        const double limit = rer_time_domain(y, z);
        double e8 = std::abs(spectral_rer_partition(y, z, 8) - limit);
        double e16 = std::abs(spectral_rer_partition(y, z, 16) - limit);
        double e32 = std::abs(spectral_rer_partition(y, z, 32) - limit);
        CHECK(e16 <= 0.3 * e8 + 1e-14);
        CHECK(e32 <= 0.3 * e16 + 1e-14);
        CHECK(e32 < 1e-3);
    }
    SUBCASE("at least one cell is required") {
        CHECK_THROWS_AS(
            (void)spectral_rer_partition(const_scalar(1.0), const_scalar(1.0), 0),
            std::invalid_argument);
    }
}

TEST_CASE("autoregressive prior fit") {
    SUBCASE("order zero returns the sample covariance") {
        std::mt19937 rng(101);
        MatrixXd data = testutil::randn(rng, 500, 2);
        SpectralDensity d = fit_ar_prior(data, 0);
        MatrixXd s = data.transpose() * data / 500.0;
        CHECK(d.W.order() == 0);
        CHECK((eval_density(d, 1.234) - s.cast<std::complex<double>>()).norm() < 1e-12);
    }
    SUBCASE("recovers a scalar coefficient") {
        std::mt19937 rng(103);
        std::normal_distribution<double> nd;
        const int t_len = 100000;
        MatrixXd data(t_len, 1);
        double y = 0.0;
        for (int t = 0; t < t_len; ++t) {
            y = 0.5 * y + nd(rng);
            data(t, 0) = y;
        }
        SpectralDensity d = fit_ar_prior(data, 1);
        CHECK(d.W.order() == 1);
        CHECK(d.W.A(0, 0) == doctest::Approx(0.5).epsilon(0.1));
        CHECK(d.W.D(0, 0) == doctest::Approx(1.0).epsilon(0.1));
    }
    SUBCASE("recovers a bivariate coefficient matrix") {
        std::mt19937 rng(107);
        const int t_len = 200000;
        MatrixXd a(2, 2);
        a << 0.5, 0.2, -0.1, 0.3;
        MatrixXd data(t_len, 2);
        Eigen::Vector2d y = Eigen::Vector2d::Zero();
        std::normal_distribution<double> nd;
        for (int t = 0; t < t_len; ++t) {
            Eigen::Vector2d e(nd(rng), nd(rng));
            y = a * y + e;
            data.row(t) = y.transpose();
        }
        SpectralDensity d = fit_ar_prior(data, 1);
        CHECK((d.W.C.leftCols(2) - a).norm() < 0.02);
        CHECK((d.W.D * d.W.D.transpose() - MatrixXd::Identity(2, 2)).norm() < 0.05);
    }
    SUBCASE("explosive scalar data is reflected inside the circle") {
        std::mt19937 rng(109);
        std::normal_distribution<double> nd;
        MatrixXd data(300, 1);
        double y = 0.1;
        for (int t = 0; t < 300; ++t) {
            y = 1.05 * y + nd(rng);
            data(t, 0) = y;
        }
        SpectralDensity d = fit_ar_prior(data, 1);
        double rho = spectral_radius(d.W.A);
        CHECK(rho < 1.0);
        CHECK(rho > 0.90);
        CHECK(rho < 0.99);
    }
    SUBCASE("explosive bivariate data is shrunk to the stability margin") {
        std::mt19937 rng(113);
        std::normal_distribution<double> nd;
        MatrixXd data(300, 2);
        Eigen::Vector2d y(0.1, -0.1);
        for (int t = 0; t < 300; ++t) {
            Eigen::Vector2d e(nd(rng), nd(rng));
            y = 1.03 * y + e;
            data.row(t) = y.transpose();
        }
        SpectralDensity d = fit_ar_prior(data, 1);
        CHECK(std::abs(spectral_radius(d.W.A) - (1.0 - 1e-3)) < 1e-9);
    }
    SUBCASE("degenerate channels are rejected") {
        std::mt19937 rng(127);
        MatrixXd one = testutil::randn(rng, 400, 1);
        MatrixXd data(400, 2);
        data.col(0) = one;
        data.col(1) = 2.0 * one;
        CHECK_THROWS_AS((void)fit_ar_prior(data, 1), std::domain_error);
    }
    SUBCASE("sample count must exceed the parameter count") {
        MatrixXd data = MatrixXd::Ones(4, 1);
        CHECK_THROWS_AS((void)fit_ar_prior(data, 3), std::invalid_argument);
    }
}
