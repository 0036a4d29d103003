#pragma once

#include <Eigen/Dense>
#include <optional>

#include "rer/lti.hpp"

namespace rer {

// Stabilizing solution of P = A'PA - A'PB(B'PB + I)^{-1}B'PA + C'LC for the
// weighted spectrum Q(z) = I + G*(z) L G(z). Existence certifies that Q
// admits a stable minimum-phase factor, i.e. that L is an admissible
// multiplier. Absence is a value the line search consumes, not a fault.
struct RiccatiCertificate {
    Eigen::MatrixXd P;  // symmetric stabilizing solution
    Eigen::MatrixXd K;  // feedback gain (B'PB + I)^{-1} B'PA
    Eigen::MatrixXd Z;  // closed loop A - BK, spectral radius < 1
    Eigen::MatrixXd S;  // B'PB + I, positive definite
};

namespace detail {

struct DareSolution {
    Eigen::MatrixXd P, K, Z, S;  // S = R + B'PB
};

// control-form DARE P = A'PA - A'PB(R + B'PB)^{-1}B'PA + Q with general
// (possibly indefinite) symmetric Q and invertible symmetric R
std::optional<Eigen::MatrixXd> dare_doubling(const Eigen::MatrixXd& A,
                                             const Eigen::MatrixXd& B,
                                             const Eigen::MatrixXd& Q,
                                             const Eigen::MatrixXd& R);
// ordered generalized Schur decomposition of the extended pencil
std::optional<Eigen::MatrixXd> dare_qz(const Eigen::MatrixXd& A,
                                       const Eigen::MatrixXd& B,
                                       const Eigen::MatrixXd& Q,
                                       const Eigen::MatrixXd& R);
double dare_residual(const Eigen::MatrixXd& P, const Eigen::MatrixXd& A,
                     const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                     const Eigen::MatrixXd& R);
// doubling first, Schur fallback, Newton refinement, strict acceptance
std::optional<DareSolution> solve_dare_control(const Eigen::MatrixXd& A,
                                               const Eigen::MatrixXd& B,
                                               const Eigen::MatrixXd& Q,
                                               const Eigen::MatrixXd& R);

}  // namespace detail

// certificate for Q(z) = I + G1*(z) lambda G1(z); empty when no stabilizing
// solution exists (lambda outside the admissible set)
std::optional<RiccatiCertificate> solve_dare(const StateSpace& g1,
                                             const Eigen::MatrixXd& lambda);

// stable minimum-phase Delta with Delta* Delta = I + G1* lambda G1:
// Delta(z) = S^{-1/2} B'PA (zI - A)^{-1} B + S^{1/2}
StateSpace spectral_factor_delta(const StateSpace& g1,
                                 const RiccatiCertificate& cert);

// closed form of the circle mean of log det(I + G1* lambda G1)
double logdet_integral(const RiccatiCertificate& cert);

// whitened closed-loop filter W_Y = C1 (zI - Z)^{-1} B1 S^{-1/2} and the
// gradient integral Y = mean(W_Y W_Y*) - I
struct WhitenedFilter {
    Eigen::MatrixXd Y;          // C1 R C1' - I
    Eigen::MatrixXd B;          // B1 S^{-1/2}
    Eigen::MatrixXd state_cov;  // R solving R - Z R Z' = B B'
};

WhitenedFilter compute_Y(const StateSpace& g1, const RiccatiCertificate& cert);

// Hessian integral Y_k = mean(W_Y W_Y* Sigma_k W_Y W_Y*), evaluated by
// factoring the inner density W_Y* Sigma_k W_Y and solving the cascade
// Lyapunov equation blockwise; falls back to quadrature with a warning on
// stderr if the inner factorization fails
Eigen::MatrixXd compute_Yk(const StateSpace& g1, const RiccatiCertificate& cert,
                           const WhitenedFilter& wf,
                           const Eigen::MatrixXd& sigma_k);

// independent additive-decomposition route to the same integral, used to
// cross-check the cascade route
Eigen::MatrixXd compute_Yk_additive(const StateSpace& g1,
                                    const RiccatiCertificate& cert,
                                    const WhitenedFilter& wf,
                                    const Eigen::MatrixXd& sigma_k);

}  // namespace rer
