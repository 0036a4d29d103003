#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

namespace rer {

// Real discrete-time state-space quadruple: G(z) = C (zI - A)^{-1} B + D.
// A zero-state system (A is 0x0) represents a constant transfer function D.
struct StateSpace {
    Eigen::MatrixXd A, B, C, D;

    int order() const { return static_cast<int>(A.rows()); }
    int inputs() const { return static_cast<int>(D.cols()); }
    int outputs() const { return static_cast<int>(D.rows()); }
};

// Throws std::invalid_argument when the four blocks have inconsistent sizes.
void check_dims(const StateSpace& sys);

// Identity feedthrough with no state, G(z) = I_m.
StateSpace static_gain(const Eigen::MatrixXd& D);

double spectral_radius(const Eigen::MatrixXd& A);
bool is_stable(const Eigen::MatrixXd& A, double margin = 0.0);

// C (e^{j theta} I - A)^{-1} B + D. Throws if e^{j theta} is (numerically)
// an eigenvalue of A.
Eigen::MatrixXcd eval_transfer(const StateSpace& sys, double theta);

// X - F X G^T = Q, solved as a dense linear system in the n*n unknowns.
Eigen::MatrixXd solve_stein(const Eigen::MatrixXd& F, const Eigen::MatrixXd& G,
                            const Eigen::MatrixXd& Q);

// X - F X F^T = Q for stable F and symmetric Q; result symmetrized.
Eigen::MatrixXd solve_discrete_lyapunov(const Eigen::MatrixXd& F,
                                        const Eigen::MatrixXd& Q);

// Solution of X - A X A^T = B B^T; positive definite iff (A,B) reachable.
Eigen::MatrixXd reachability_gramian(const Eigen::MatrixXd& A,
                                     const Eigen::MatrixXd& B);

// Cascade second(first(u)): transfer equals second(z) * first(z).
// State of the composite is [x_second; x_first].
StateSpace series(const StateSpace& first, const StateSpace& second);

// Block-diagonal bank with C = I, D = 0 and B = ones(n, m).
// Real poles give 1x1 blocks; complex poles must appear in conjugate pairs,
// each pair r e^{+-jw} realized as the real block
//   [[ r cos w, r sin w],
//    [-r sin w, r cos w]].
// Throws on a pole with modulus >= 1 or an unpaired complex pole.
StateSpace build_filterbank(const std::vector<std::complex<double>>& poles,
                            int m);

}  // namespace rer
