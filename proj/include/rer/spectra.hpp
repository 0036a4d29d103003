#pragma once

#include <Eigen/Dense>
#include <vector>

#include "rer/lti.hpp"

namespace rer {

// Hermitian positive definite matrix function on the unit circle.
// Factor form: Phi(theta) = W(e^{j theta}) W(e^{j theta})* with W stable,
// minimum phase and square invertible D. Grid form: values on M uniform
// angles in (-pi, pi], nearest-node semantics between nodes.
struct SpectralDensity {
    enum class Form { factor, grid };

    Form form = Form::factor;
    StateSpace W;                           // factor form only
    std::vector<double> theta;              // grid form nodes, ascending
    std::vector<Eigen::MatrixXcd> values;   // grid form values, Hermitian PD

    int dim() const;

    static SpectralDensity factor(StateSpace w);
    // constant density cov (PD); W is the static lower Cholesky factor
    static SpectralDensity constant(const Eigen::MatrixXd& cov);
    static SpectralDensity grid(std::vector<double> nodes,
                                std::vector<Eigen::MatrixXcd> vals);
};

// Covariance of the spectral increment over [theta_a, theta_b):
// Q = int_a^b Phi(e^{j xi}) dxi.
struct IncrementCovariance {
    double theta_a = 0.0;
    double theta_b = 0.0;
    Eigen::MatrixXcd Q;
};

Eigen::MatrixXcd eval_density(const SpectralDensity& phi, double theta);

// (1/4pi) int { log det(Phi^{-1} Psi) + tr[Psi^{-1}(Phi - Psi)] } dtheta
double d_rer(const SpectralDensity& phi, const SpectralDensity& psi);

// scalar densities: (1/2pi) int { phi/psi - log(phi/psi) - 1 } dtheta
double itakura_saito(const SpectralDensity& phi, const SpectralDensity& psi);

// (m/2) log(2 pi e) + (1/4pi) int log det Phi dtheta
double entropy_rate(const SpectralDensity& phi);

// (1/4pi) int { log det(Phi_y^{-1} Phi_z) + tr[Phi_z^{-1} Phi_y] - m } dtheta
double rer_time_domain(const SpectralDensity& phi_y, const SpectralDensity& phi_z);

IncrementCovariance increment_covariance(const SpectralDensity& phi,
                                         double theta_a, double theta_b);

// log det(P^{-1} Q) + tr(Q^{-1} P) - m for Hermitian PD P, Q
double circular_gauss_kl(const Eigen::MatrixXcd& P, const Eigen::MatrixXcd& Q);

// (1/2n) sum_k kl(Q_y(theta_k, theta_{k+1}), Q_z(theta_k, theta_{k+1})),
// theta_k = pi k / n; approaches rer_time_domain as n grows
double spectral_rer_partition(const SpectralDensity& phi_y,
                              const SpectralDensity& phi_z, int n);

// Least-squares vector AR(p) fit of T x m data rows; returns the factor
// W(z) = (I - sum A_i z^{-i})^{-1} L with L the innovation Cholesky factor.
// Falls back to order p-1 on a rank-deficient regression; repairs an
// unstable fit (root reflection for m = 1, per-lag shrinkage otherwise).
SpectralDensity fit_ar_prior(const Eigen::MatrixXd& data, int order);

}  // namespace rer
