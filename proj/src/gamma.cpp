#include "rer/gamma.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace rer {
namespace {

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) {
    return 0.5 * (m + m.transpose());
}

// stacked vec_sym columns of a generator list
Eigen::MatrixXd vec_stack(const std::vector<Eigen::MatrixXd>& gens) {
    const int d = static_cast<int>(vec_sym(gens.front()).size());
    Eigen::MatrixXd v(d, static_cast<int>(gens.size()));
    for (std::size_t k = 0; k < gens.size(); ++k) v.col(k) = vec_sym(gens[k]);
    return v;
}

}  // namespace

Eigen::VectorXd vec_sym(const Eigen::MatrixXd& s) {
    const int n = static_cast<int>(s.rows());
    const double r2 = std::sqrt(2.0);
    Eigen::VectorXd v(n * (n + 1) / 2);
    int k = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) v(k++) = s(i, j) * (i == j ? 1.0 : r2);
    return v;
}

Eigen::MatrixXd unvec_sym(const Eigen::VectorXd& v, int n) {
    const double r2 = std::sqrt(2.0);
    Eigen::MatrixXd s(n, n);
    int k = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            double x = v(k++) / (i == j ? 1.0 : r2);
            s(i, j) = x;
            s(j, i) = x;
        }
    return s;
}

Eigen::MatrixXd gamma_apply(const StateSpace& bank, const SpectralDensity& phi) {
    check_dims(bank);
    if (bank.inputs() != phi.dim())
        throw std::invalid_argument("bank inputs must match the density dimension");
    if (phi.form == SpectralDensity::Form::factor) {
        StateSpace casc = series(phi.W, bank);
        Eigen::MatrixXd x = reachability_gramian(casc.A, casc.B);
        return symmetrize(casc.C * x * casc.C.transpose() +
                          casc.D * casc.D.transpose());
    }
    const int n = bank.outputs();
    Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(n, n);
    for (std::size_t k = 0; k < phi.theta.size(); ++k) {
        Eigen::MatrixXcd g = eval_transfer(bank, phi.theta[k]);
        acc += g * phi.values[k] * g.adjoint();
    }
    acc /= static_cast<double>(phi.theta.size());
    return symmetrize(acc.real());
}

FeasibilityResult feasibility_solve(const Eigen::MatrixXd& A,
                                    const Eigen::MatrixXd& B,
                                    const Eigen::MatrixXd& Sigma) {
    const int n = static_cast<int>(A.rows());
    const int m = static_cast<int>(B.cols());
    if (A.cols() != n || B.rows() != n || Sigma.rows() != n || Sigma.cols() != n)
        throw std::invalid_argument("dimension mismatch");
    if ((Sigma - Sigma.transpose()).norm() > 1e-9 * (1.0 + Sigma.norm()))
        throw std::invalid_argument("Sigma must be symmetric");

    // columns: vec_sym(B E_ij + E_ji B') for each H entry, row-major in (i, j)
    Eigen::MatrixXd lhs(n * (n + 1) / 2, m * n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            Eigen::MatrixXd outer = Eigen::MatrixXd::Zero(n, n);
            outer.col(j) = B.col(i);
            lhs.col(i * n + j) = vec_sym(outer + outer.transpose());
        }
    Eigen::MatrixXd rhs_mat = symmetrize(Sigma - A * Sigma * A.transpose());
    // minimum-norm least squares; rank-revealing QR is reliable here where the
    // divide-and-conquer SVD solve has been observed to return grossly
    // inaccurate solutions on well-conditioned tall systems
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(lhs);
    Eigen::VectorXd h = cod.solve(vec_sym(rhs_mat));

    Eigen::MatrixXd witness(m, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) witness(i, j) = h(i * n + j);

    FeasibilityResult out;
    out.residual =
        (rhs_mat - (B * witness + witness.transpose() * B.transpose())).norm();
    if (out.residual <= 1e-9 * (1.0 + Sigma.norm())) out.H = witness;
    return out;
}

GammaBasis range_gamma_basis(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                             bool shift_pd) {
    const int n = static_cast<int>(A.rows());
    const int m = static_cast<int>(B.cols());
    if (A.cols() != n || B.rows() != n) throw std::invalid_argument("dimension mismatch");

    std::vector<Eigen::MatrixXd> gens;
    gens.reserve(static_cast<std::size_t>(m) * n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            Eigen::MatrixXd outer = Eigen::MatrixXd::Zero(n, n);
            outer.col(j) = B.col(i);
            gens.push_back(solve_discrete_lyapunov(A, outer + outer.transpose()));
        }

    Eigen::MatrixXd v = vec_stack(gens);
    for (int k = 0; k < v.cols(); ++k)
        v.col(k) /= std::max(v.col(k).norm(), 1e-300);

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(v);
    Eigen::VectorXd rdiag =
        qr.matrixR().diagonal().head(std::min(v.rows(), v.cols())).cwiseAbs();
    int rank = 0;
    if (rdiag.size() > 0 && rdiag(0) > 0.0)
        while (rank < rdiag.size() && rdiag(rank) > 1e-10 * rdiag(0)) ++rank;

    GammaBasis basis;
    for (int k = 0; k < rank; ++k) {
        Eigen::MatrixXd s = gens[qr.colsPermutation().indices()(k)];
        if (shift_pd) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
            s += (1.0 + std::max(0.0, -es.eigenvalues().minCoeff())) *
                 Eigen::MatrixXd::Identity(n, n);
        }
        basis.sigma.push_back(std::move(s));
    }
    if (basis.sigma.empty()) throw std::runtime_error("range basis is empty");

    Eigen::MatrixXd stack = vec_stack(basis.sigma);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> onb_qr(stack);
    Eigen::VectorXd rd = onb_qr.matrixR()
                             .diagonal()
                             .head(static_cast<Eigen::Index>(basis.sigma.size()))
                             .cwiseAbs();
    if (rd(rd.size() - 1) <= 1e-12 * rd(0))
        throw std::runtime_error("range basis is numerically degenerate");
    basis.onb = onb_qr.householderQ() *
                Eigen::MatrixXd::Identity(stack.rows(), stack.cols());
    return basis;
}

Eigen::MatrixXd project_range(const GammaBasis& basis, const Eigen::MatrixXd& m) {
    if (m.rows() != basis.states() || m.cols() != basis.states())
        throw std::invalid_argument("dimension mismatch");
    Eigen::VectorXd v = vec_sym(symmetrize(m));
    return unvec_sym(basis.onb * (basis.onb.transpose() * v),
                     static_cast<int>(m.rows()));
}

FeasibleCovariance project_covariance(const Eigen::MatrixXd& A,
                                      const Eigen::MatrixXd& B,
                                      const Eigen::MatrixXd& Sigma_hat) {
    const int n = static_cast<int>(A.rows());
    Eigen::LLT<Eigen::MatrixXd> llt_hat(symmetrize(Sigma_hat));
    if (Sigma_hat.rows() != n || Sigma_hat.cols() != n ||
        llt_hat.info() != Eigen::Success)
        throw std::domain_error("sample covariance must be symmetric PD");
    Eigen::MatrixXd hat_inv =
        llt_hat.solve(Eigen::MatrixXd::Identity(n, n));

    GammaBasis basis = range_gamma_basis(A, B, /*shift_pd=*/false);
    const int nb = basis.count();
    Eigen::MatrixXd vb = vec_stack(basis.sigma);

    // start from the feasible point Gamma(I), rescaled to the sample trace
    Eigen::MatrixXd g0 = solve_discrete_lyapunov(A, symmetrize(B * B.transpose()));
    Eigen::VectorXd c =
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(vb).solve(
            vec_sym(g0)) *
        (Sigma_hat.trace() / g0.trace());

    auto assemble = [&](const Eigen::VectorXd& coef) {
        Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
        for (int k = 0; k < nb; ++k) s += coef(k) * basis.sigma[k];
        return s;
    };
    const double logdet_hat = std::log(Sigma_hat.determinant());
    auto objective = [&](const Eigen::VectorXd& coef) {
        Eigen::MatrixXd s = assemble(coef);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
        if (es.eigenvalues().minCoeff() <= 0.0)
            return std::numeric_limits<double>::infinity();
        double logdet_s = es.eigenvalues().array().log().sum();
        return 0.5 * (logdet_hat - logdet_s + (hat_inv * s).trace() - n);
    };

    const double gtol = 1e-11 * std::max(1.0, hat_inv.norm());
    std::ostringstream trace;
    double gnorm = 0.0;
    for (int it = 0; it < 100; ++it) {
        Eigen::MatrixXd s = assemble(c);
        Eigen::MatrixXd s_inv = s.llt().solve(Eigen::MatrixXd::Identity(n, n));
        Eigen::VectorXd g(nb);
        for (int k = 0; k < nb; ++k)
            g(k) = 0.5 * ((hat_inv - s_inv) * basis.sigma[k]).trace();
        gnorm = g.norm();
        trace << "  it " << it << ": f=" << objective(c) << " |g|=" << gnorm << "\n";
        if (gnorm <= gtol) break;

        std::vector<Eigen::MatrixXd> t(nb);
        for (int k = 0; k < nb; ++k) t[k] = s_inv * basis.sigma[k];
        Eigen::MatrixXd hess(nb, nb);
        for (int i = 0; i < nb; ++i)
            for (int j = 0; j <= i; ++j) {
                double v = 0.5 * (t[i] * t[j]).trace();
                hess(i, j) = v;
                hess(j, i) = v;
            }
        Eigen::VectorXd d = hess.ldlt().solve(-g);
        double f0 = objective(c), dd = g.dot(d), t_step = 1.0;
        for (int half = 0; half < 60; ++half) {
            if (objective(c + t_step * d) < f0 + 0.3 * t_step * dd) break;
            t_step *= 0.5;
        }
        c += t_step * d;
    }
    if (gnorm > 1e-8 * std::max(1.0, hat_inv.norm()))
        throw std::runtime_error("covariance projection did not converge:\n" +
                                 trace.str());

    FeasibleCovariance out;
    out.Sigma = symmetrize(assemble(c));
    FeasibilityResult fr = feasibility_solve(A, B, out.Sigma);
    if (!fr.H)
        throw std::runtime_error("projected covariance lost feasibility, residual " +
                                 std::to_string(fr.residual));
    out.H = *fr.H;
    return out;
}

NormalizedProblem normalize_problem(const Eigen::MatrixXd& A,
                                    const Eigen::MatrixXd& B,
                                    const Eigen::MatrixXd& Sigma) {
    const int n = static_cast<int>(A.rows());
    if (Sigma.rows() != n || Sigma.cols() != n ||
        (Sigma - Sigma.transpose()).norm() > 1e-9 * (1.0 + Sigma.norm()))
        throw std::invalid_argument("Sigma must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(Sigma));
    if (es.eigenvalues().minCoeff() <= 0.0)
        throw std::domain_error("Sigma must be positive definite");
    Eigen::ArrayXd w = es.eigenvalues().array();
    NormalizedProblem out;
    out.sqrt = es.eigenvectors() * w.sqrt().matrix().asDiagonal() *
               es.eigenvectors().transpose();
    out.isqrt = es.eigenvectors() * w.rsqrt().matrix().asDiagonal() *
                es.eigenvectors().transpose();
    out.A = out.isqrt * A * out.sqrt;
    out.B = out.isqrt * B;
    return out;
}

}  // namespace rer
