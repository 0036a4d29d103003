#include "rer/lti.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

namespace rer {

void check_dims(const StateSpace& sys) {
    const auto n = sys.A.rows();
    if (sys.A.cols() != n) throw std::invalid_argument("A must be square");
    if (sys.B.rows() != n) throw std::invalid_argument("B row count != state dim");
    if (sys.C.cols() != n) throw std::invalid_argument("C col count != state dim");
    if (sys.D.rows() != sys.C.rows() || sys.D.cols() != sys.B.cols())
        throw std::invalid_argument("D size inconsistent with B, C");
}

StateSpace static_gain(const Eigen::MatrixXd& D) {
    StateSpace s;
    s.A.resize(0, 0);
    s.B.resize(0, D.cols());
    s.C.resize(D.rows(), 0);
    s.D = D;
    return s;
}

double spectral_radius(const Eigen::MatrixXd& A) {
    if (A.rows() == 0) return 0.0;
    return A.eigenvalues().cwiseAbs().maxCoeff();
}

bool is_stable(const Eigen::MatrixXd& A, double margin) {
    return spectral_radius(A) < 1.0 - margin;
}

Eigen::MatrixXcd eval_transfer(const StateSpace& sys, double theta) {
    const int n = sys.order();
    const std::complex<double> z(std::cos(theta), std::sin(theta));
    if (n == 0) return sys.D.cast<std::complex<double>>();
    Eigen::MatrixXcd R = z * Eigen::MatrixXcd::Identity(n, n) - sys.A;
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(R);
    // |det| ~ prod |z - eig_i|; a vanishing determinant means a pole on the circle
    if (std::abs(lu.determinant()) < 1e-300)
        throw std::domain_error("eval_transfer: eigenvalue of A on the unit circle");
    return sys.C * lu.solve(sys.B.cast<std::complex<double>>()) + sys.D;
}

Eigen::MatrixXd solve_stein(const Eigen::MatrixXd& F, const Eigen::MatrixXd& G,
                            const Eigen::MatrixXd& Q) {
    const int p = static_cast<int>(F.rows());
    const int q = static_cast<int>(G.rows());
    if (F.cols() != p || G.cols() != q || Q.rows() != p || Q.cols() != q)
        throw std::invalid_argument("solve_stein: size mismatch");
    if (p == 0 || q == 0) return Eigen::MatrixXd(p, q);
    // Schur-reduce both coefficients and back-substitute column by column;
    // O(p^3 + q^3) against the O((pq)^3) of the naive Kronecker solve.
    Eigen::ComplexSchur<Eigen::MatrixXcd> sf(F.cast<std::complex<double>>(), true);
    Eigen::ComplexSchur<Eigen::MatrixXcd> sh(G.transpose().cast<std::complex<double>>(), true);
    if (sf.info() != Eigen::Success || sh.info() != Eigen::Success)
        throw std::runtime_error("solve_stein: Schur reduction failed");
    const Eigen::MatrixXcd& tf = sf.matrixT();
    const Eigen::MatrixXcd& th = sh.matrixT();
    Eigen::MatrixXcd qt = sf.matrixU().adjoint() * Q * sh.matrixU();
    // (I - th_jj T_F) xt_j = qt_j + T_F sum_{i<j} th_ij xt_i, both T's upper triangular
    Eigen::MatrixXcd xt(p, q);
    Eigen::MatrixXcd lhs(p, p);
    for (int j = 0; j < q; ++j) {
        Eigen::VectorXcd rhs = qt.col(j);
        if (j > 0) rhs += tf * (xt.leftCols(j) * th.block(0, j, j, 1));
        lhs = -th(j, j) * tf;
        lhs.diagonal().array() += 1.0;
        xt.col(j) = lhs.triangularView<Eigen::Upper>().solve(rhs);
    }
    return (sf.matrixU() * xt * sh.matrixU().adjoint()).real();
}

Eigen::MatrixXd solve_discrete_lyapunov(const Eigen::MatrixXd& F,
                                        const Eigen::MatrixXd& Q) {
    if (F.rows() != F.cols() || Q.rows() != F.rows() || Q.cols() != F.cols())
        throw std::invalid_argument("solve_discrete_lyapunov: size mismatch");
    if (!is_stable(F))
        throw std::domain_error("solve_discrete_lyapunov: F is not stable");
    Eigen::MatrixXd X = solve_stein(F, F, Q);
    return 0.5 * (X + X.transpose());
}

Eigen::MatrixXd reachability_gramian(const Eigen::MatrixXd& A,
                                     const Eigen::MatrixXd& B) {
    return solve_discrete_lyapunov(A, B * B.transpose());
}

StateSpace series(const StateSpace& first, const StateSpace& second) {
    check_dims(first);
    check_dims(second);
    if (second.inputs() != first.outputs())
        throw std::invalid_argument("series: inner dimensions do not match");
    const int n1 = second.order(), n2 = first.order();
    StateSpace s;
    s.A.setZero(n1 + n2, n1 + n2);
    s.A.topLeftCorner(n1, n1) = second.A;
    s.A.topRightCorner(n1, n2) = second.B * first.C;
    s.A.bottomRightCorner(n2, n2) = first.A;
    s.B.resize(n1 + n2, first.inputs());
    s.B.topRows(n1) = second.B * first.D;
    s.B.bottomRows(n2) = first.B;
    s.C.resize(second.outputs(), n1 + n2);
    s.C.leftCols(n1) = second.C;
    s.C.rightCols(n2) = second.D * first.C;
    s.D = second.D * first.D;
    return s;
}

StateSpace build_filterbank(const std::vector<std::complex<double>>& poles,
                            int m) {
    if (m < 1) throw std::invalid_argument("build_filterbank: channel count < 1");
    constexpr double kPairTol = 1e-12;
    std::vector<double> real_poles;
    std::vector<std::complex<double>> pending;  // positive-imaginary representatives
    for (const auto& p : poles) {
        if (std::abs(p) >= 1.0)
            throw std::invalid_argument("build_filterbank: pole modulus >= 1");
        if (std::abs(p.imag()) <= kPairTol) {
            real_poles.push_back(p.real());
            continue;
        }
        // match against an already-seen conjugate
        auto it = pending.begin();
        for (; it != pending.end(); ++it)
            if (std::abs(*it - std::conj(p)) <= kPairTol * (1.0 + std::abs(p))) break;
        if (it != pending.end())
            pending.erase(it);
        else
            pending.push_back(p);
    }
    // whatever is left unmatched had no conjugate partner
    std::vector<std::complex<double>> pairs;
    for (const auto& p : poles) {
        if (std::abs(p.imag()) <= kPairTol) continue;
        if (p.imag() > 0) pairs.push_back(p);
    }
    if (2 * pairs.size() + real_poles.size() != poles.size() || !pending.empty())
        throw std::invalid_argument("build_filterbank: unpaired complex pole");

    const int n = static_cast<int>(real_poles.size() + 2 * pairs.size());
    StateSpace s;
    s.A.setZero(n, n);
    int i = 0;
    for (double p : real_poles) s.A(i, i) = p, ++i;
    for (const auto& p : pairs) {
        const double r = std::abs(p), w = std::arg(p);
        s.A(i, i) = r * std::cos(w);
        s.A(i, i + 1) = r * std::sin(w);
        s.A(i + 1, i) = -r * std::sin(w);
        s.A(i + 1, i + 1) = r * std::cos(w);
        i += 2;
    }
    s.B = Eigen::MatrixXd::Ones(n, m);
    s.C = Eigen::MatrixXd::Identity(n, n);
    s.D = Eigen::MatrixXd::Zero(n, m);
    return s;
}

}  // namespace rer
