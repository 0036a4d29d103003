#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "rer/lti.hpp"
#include "rer/spectra.hpp"

namespace rer {

// Isometric vectorization of a symmetric matrix: upper triangle row by row,
// off-diagonal entries scaled by sqrt(2) so that dot(vec a, vec b) = tr(ab).
Eigen::VectorXd vec_sym(const Eigen::MatrixXd& s);
Eigen::MatrixXd unvec_sym(const Eigen::VectorXd& v, int n);

// Generators of the range of the constraint map Sigma -> int G Phi G*,
// plus an orthonormal coordinate map for the trace inner product.
struct GammaBasis {
    std::vector<Eigen::MatrixXd> sigma;  // selected generators, symmetric
    Eigen::MatrixXd onb;                 // vec_sym coords, orthonormal columns
    int count() const { return static_cast<int>(sigma.size()); }
    int states() const { return sigma.empty() ? 0 : static_cast<int>(sigma[0].rows()); }
};

struct FeasibilityResult {
    std::optional<Eigen::MatrixXd> H;  // m x n witness when feasible
    double residual = 0.0;
};

struct FeasibleCovariance {
    Eigen::MatrixXd Sigma;  // symmetric PD constraint target
    Eigen::MatrixXd H;      // m x n feasibility witness
};

// Change of coordinates G -> Sigma^{-1/2} G turning the constraint into
// "state covariance = I"; lambda_original = isqrt * lambda_normalized * isqrt.
struct NormalizedProblem {
    Eigen::MatrixXd A, B;
    Eigen::MatrixXd sqrt;   // Sigma^{1/2}
    Eigen::MatrixXd isqrt;  // Sigma^{-1/2}
};

// int G Phi G* over the normalized circle measure; exact state-covariance
// route for factor densities, node sum for grid densities
Eigen::MatrixXd gamma_apply(const StateSpace& bank, const SpectralDensity& phi);

// least-squares witness for Sigma - A Sigma A' = B H + H' B'; feasible iff
// the residual is within 1e-9 (1 + |Sigma|)
FeasibilityResult feasibility_solve(const Eigen::MatrixXd& A,
                                    const Eigen::MatrixXd& B,
                                    const Eigen::MatrixXd& Sigma);

// m*n canonical generators, rank-revealing selection, optional +alpha I
// shift that makes every element PD (valid when I is itself in the range)
GammaBasis range_gamma_basis(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                             bool shift_pd = true);

// orthogonal projection onto span(basis) in the trace inner product
Eigen::MatrixXd project_range(const GammaBasis& basis, const Eigen::MatrixXd& m);

// KL-closest feasible covariance to a raw sample covariance, solved by a
// damped Newton method in basis coordinates
FeasibleCovariance project_covariance(const Eigen::MatrixXd& A,
                                      const Eigen::MatrixXd& B,
                                      const Eigen::MatrixXd& Sigma_hat);

NormalizedProblem normalize_problem(const Eigen::MatrixXd& A,
                                    const Eigen::MatrixXd& B,
                                    const Eigen::MatrixXd& Sigma);

}  // namespace rer
