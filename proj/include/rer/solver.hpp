#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "rer/factor.hpp"
#include "rer/gamma.hpp"
#include "rer/lti.hpp"
#include "rer/spectra.hpp"

namespace rer {

struct SolverOptions {
    double tol = 1e-9;          // stop when the projected gradient norm drops below this
    int max_iter = 100;
    double armijo_alpha = 0.3;  // sufficient-decrease fraction for the line search
    int grid_size = 2048;       // reporting grid density for emitted spectra
};

// Sigma cannot be matched by any spectrum through the given bank.
struct InfeasibleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The Newton iteration failed; the message carries the iterate trace.
struct ConvergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NewtonStep {
    Eigen::VectorXd alpha;     // step coordinates in the range basis
    Eigen::MatrixXd delta;     // sum_k alpha_k sigma_k
    double directional = 0.0;  // <grad, delta>, negative along a descent direction
};

struct OptimalSpectrum {
    SpectralDensity phi;   // factor form, stable and minimum phase
    int degree = 0;        // realized factor state dimension
    int degree_bound = 0;  // structural cap: prior factor order + twice the bank order
};

struct RerSolution {
    Eigen::MatrixXd lambda;             // optimal multiplier, original coordinates
    Eigen::MatrixXd lambda_normalized;  // the multiplier of the normalized problem
    SpectralDensity phi;                // optimal spectrum, factor form
    int degree = 0;
    int degree_bound = 0;
    int iterations = 0;
    bool floor_stop = false;  // stopped because the dual value hit rounding resolution
    double dual_value = 0.0;
    double gradient_norm = 0.0;
    double residual = 0.0;  // ||Gamma(phi) - Sigma||_F / ||Sigma||_F, original coordinates
    std::vector<double> dual_history;
    std::vector<double> gradient_history;
    std::vector<double> step_history;
};

// J(Lambda) = tr Lambda - integral log det (I + G1* Lambda G1), the integral
// evaluated exactly from the factorization certificate.
double dual_value(const Eigen::MatrixXd& lambda, const RiccatiCertificate& cert);

// Gradient of J restricted to Range(Gamma): -proj(Y).
Eigen::MatrixXd dual_gradient(const GammaBasis& basis, const WhitenedFilter& wf);

// Newton step: solve M alpha = y with M_kj = <sigma_k, Y_j> and y_k = <Y, sigma_k>.
// M is symmetric positive definite on the range basis; a factorization failure or a
// relative solve residual above 1e-9 throws std::runtime_error.
NewtonStep newton_direction(const StateSpace& g1, const RiccatiCertificate& cert,
                            const WhitenedFilter& wf, const GammaBasis& basis);

// Largest t in {1, 1/2, 1/4, ...} such that lambda + t * delta still admits the
// spectral factorization and decreases J by at least armijo_alpha * t * directional.
// Throws ConvergenceError after 60 failed halvings.
double backtrack(const StateSpace& g1, const Eigen::MatrixXd& lambda,
                 const NewtonStep& step, double j_current, double armijo_alpha);

// Phi = W_psi (I + G1* Lambda G1)^{-1} W_psi*, realized as W W* with W of state
// dimension (bank order + prior factor order). The prior must be minimum phase.
OptimalSpectrum optimal_spectrum(const Eigen::MatrixXd& lambda, const StateSpace& bank,
                                 const SpectralDensity& psi);

// Full pipeline: normalize Sigma to the identity, build G1 = G' W_psi, Newton-iterate
// the dual from Lambda = 0, de-normalize, assemble the optimal spectrum. The bank must
// be in state form (zI - A)^{-1} B (C = I, D = 0) as produced by build_filterbank.
RerSolution solve_rer(const StateSpace& bank, const SpectralDensity& psi,
                      const Eigen::MatrixXd& sigma, const SolverOptions& opt = {});

}  // namespace rer
