#include "rer/solver.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <utility>

namespace rer {

namespace {

Eigen::MatrixXd sym(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

Eigen::MatrixXd combo(const GammaBasis& basis, const Eigen::VectorXd& coords) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(basis.states(), basis.states());
    for (int k = 0; k < basis.count(); ++k) out += coords[k] * basis.sigma[k];
    return out;
}

std::string iterate_trace(const std::vector<double>& j, const std::vector<double>& gn,
                          const std::vector<double>& t) {
    std::ostringstream os;
    os << "iter  dual_value              grad_norm   step";
    char line[96];
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (i < t.size())
            std::snprintf(line, sizeof(line), "\n%-5zu % .15e  %.3e  %.4g", i, j[i], gn[i],
                          t[i]);
        else
            std::snprintf(line, sizeof(line), "\n%-5zu % .15e  %.3e  -", i, j[i], gn[i]);
        os << line;
    }
    return os.str();
}

// Zero dynamics of the prior factor; its stability makes W_psi minimum phase,
// which the optimal-factor construction needs to come out stable.
Eigen::MatrixXd prior_zero_dynamics(const StateSpace& w) {
    return w.A - w.B * Eigen::PartialPivLU<Eigen::MatrixXd>(w.D).solve(w.C);
}

}  // namespace

double dual_value(const Eigen::MatrixXd& lambda, const RiccatiCertificate& cert) {
    return lambda.trace() - logdet_integral(cert);
}

Eigen::MatrixXd dual_gradient(const GammaBasis& basis, const WhitenedFilter& wf) {
    return -project_range(basis, wf.Y);
}

NewtonStep newton_direction(const StateSpace& g1, const RiccatiCertificate& cert,
                            const WhitenedFilter& wf, const GammaBasis& basis) {
    const int nb = basis.count();
    if (nb == 0) throw std::invalid_argument("newton_direction: empty basis");
    Eigen::MatrixXd m(nb, nb);
    Eigen::VectorXd y(nb);
    for (int j = 0; j < nb; ++j) {
        Eigen::MatrixXd yj = compute_Yk(g1, cert, wf, basis.sigma[j]);
        for (int k = 0; k < nb; ++k) m(k, j) = basis.sigma[k].cwiseProduct(yj).sum();
        y[j] = wf.Y.cwiseProduct(basis.sigma[j]).sum();
    }
    m = sym(m);
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("newton_direction: Hessian system is not positive definite");
    Eigen::VectorXd alpha = llt.solve(y);
    alpha += llt.solve(y - m * alpha);
    const double rel = (m * alpha - y).norm() / std::max(1.0, y.norm());
    if (!alpha.allFinite() || rel > 1e-9)
        throw std::runtime_error("newton_direction: Hessian system solve failed, residual " +
                                 std::to_string(rel));
    NewtonStep step;
    step.alpha = alpha;
    step.delta = combo(basis, alpha);
    step.directional = -wf.Y.cwiseProduct(step.delta).sum();
    return step;
}

double backtrack(const StateSpace& g1, const Eigen::MatrixXd& lambda, const NewtonStep& step,
                 double j_current, double armijo_alpha) {
    double t = 1.0;
    for (int h = 0; h < 60; ++h) {
        Eigen::MatrixXd cand = lambda + t * step.delta;
        auto cert = solve_dare(g1, cand);
        if (cert) {
            const double j2 = dual_value(cand, *cert);
            if (j2 < j_current + armijo_alpha * t * step.directional) return t;
        }
        t *= 0.5;
    }
    throw ConvergenceError("backtrack: no acceptable step after 60 halvings");
}

OptimalSpectrum optimal_spectrum(const Eigen::MatrixXd& lambda, const StateSpace& bank,
                                 const SpectralDensity& psi) {
    if (psi.form != SpectralDensity::Form::factor)
        throw std::invalid_argument("optimal_spectrum: prior must be in factor form");
    const StateSpace& w = psi.W;
    const int n = bank.order();
    const int q = w.order();
    const int m = bank.inputs();
    if (w.outputs() != m)
        throw std::invalid_argument("optimal_spectrum: prior dimension must match the bank inputs");
    if (lambda.rows() != n || lambda.cols() != n)
        throw std::invalid_argument("optimal_spectrum: multiplier size must match the bank order");
    if (bank.D.cwiseAbs().maxCoeff() != 0.0)
        throw std::invalid_argument("optimal_spectrum: bank must be strictly proper");
    const Eigen::MatrixXd zero_dyn = prior_zero_dynamics(w);
    if (q > 0 && !is_stable(zero_dyn))
        throw std::invalid_argument("optimal_spectrum: prior factor must be minimum phase");

    const StateSpace g1 = series(w, bank);  // composite state [bank; prior]
    const auto cert = solve_dare(g1, sym(lambda));
    if (!cert)
        throw std::domain_error(
            "optimal_spectrum: multiplier does not admit a spectral factorization");
    const StateSpace delta = spectral_factor_delta(g1, *cert);

    // Phi = (W_psi Delta^{-1})(W_psi Delta^{-1})*. The cascade Delta W_psi^{-1} keeps
    // only n + q states: the prior states inside Delta ride the same trajectory as the
    // inverse's, so the pair cancels before any realization is formed.
    Eigen::PartialPivLU<Eigen::MatrixXd> dlu(w.D);
    const Eigen::MatrixXd dwi_c = dlu.solve(w.C);
    const Eigen::MatrixXd dwi = dlu.inverse();

    Eigen::MatrixXd am = Eigen::MatrixXd::Zero(n + q, n + q);
    am.topLeftCorner(n, n) = bank.A;
    am.bottomRightCorner(q, q) = zero_dyn;
    Eigen::MatrixXd bm(n + q, m);
    bm.topRows(n) = bank.B;
    bm.bottomRows(q) = w.B * dwi;
    Eigen::MatrixXd cm(m, n + q);
    cm.leftCols(n) = delta.C.leftCols(n);
    cm.rightCols(q) = delta.C.rightCols(q) - delta.D * dwi_c;
    const Eigen::MatrixXd dm = delta.D * dwi;

    const Eigen::MatrixXd dmi = Eigen::PartialPivLU<Eigen::MatrixXd>(dm).inverse();
    StateSpace wopt;
    wopt.A = am - bm * dmi * cm;
    wopt.B = bm * dmi;
    wopt.C = -dmi * cm;
    wopt.D = dmi;

    OptimalSpectrum out;
    out.phi = SpectralDensity::factor(std::move(wopt));
    out.degree = n + q;
    out.degree_bound = q + 2 * n;
    return out;
}

RerSolution solve_rer(const StateSpace& bank, const SpectralDensity& psi,
                      const Eigen::MatrixXd& sigma, const SolverOptions& opt) {
    check_dims(bank);
    const int n = bank.order();
    const int m = bank.inputs();
    if (!is_stable(bank.A)) throw std::invalid_argument("solve_rer: bank must be stable");
    if ((bank.C - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() != 0.0 ||
        bank.D.cwiseAbs().maxCoeff() != 0.0)
        throw std::invalid_argument("solve_rer: bank must be in state form (zI - A)^{-1} B");
    if (psi.form != SpectralDensity::Form::factor)
        throw std::invalid_argument("solve_rer: prior must be in factor form");
    if (psi.dim() != m)
        throw std::invalid_argument("solve_rer: prior dimension must match the bank inputs");
    if (sigma.rows() != n || sigma.cols() != n)
        throw std::invalid_argument("solve_rer: covariance size must match the bank order");
    if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() >
        1e-8 * std::max(1.0, sigma.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("solve_rer: covariance must be symmetric");
    if (psi.W.order() > 0 && !is_stable(prior_zero_dynamics(psi.W)))
        throw std::invalid_argument("solve_rer: prior factor must be minimum phase");

    const Eigen::MatrixXd sig = sym(sigma);
    if (Eigen::LLT<Eigen::MatrixXd>(sig).info() != Eigen::Success)
        throw InfeasibleError("solve_rer: covariance must be positive definite");
    const FeasibilityResult feas = feasibility_solve(bank.A, bank.B, sig);
    if (!feas.H)
        throw InfeasibleError("solve_rer: covariance is not attainable through the bank, "
                              "feasibility residual " +
                              std::to_string(feas.residual));

    const NormalizedProblem norm = normalize_problem(bank.A, bank.B, sig);
    StateSpace gp;
    gp.A = norm.A;
    gp.B = norm.B;
    gp.C = Eigen::MatrixXd::Identity(n, n);
    gp.D = Eigen::MatrixXd::Zero(n, m);
    const StateSpace g1 = series(psi.W, gp);
    const GammaBasis basis = range_gamma_basis(norm.A, norm.B, true);

    Eigen::VectorXd coords = Eigen::VectorXd::Zero(basis.count());
    std::vector<double> j_hist, gn_hist, t_hist;
    Eigen::MatrixXd lam = Eigen::MatrixXd::Zero(n, n);
    double j_cur = 0.0;
    double gn = 0.0;
    bool converged = false;
    bool floor_stop = false;
    int iters = 0;
    const double floor_eps = 64.0 * std::numeric_limits<double>::epsilon();

    for (int it = 0; it < opt.max_iter; ++it) {
        lam = combo(basis, coords);
        const auto cert = solve_dare(g1, lam);
        if (!cert)
            throw ConvergenceError("solve_rer: factorization lost at an accepted iterate\n" +
                                   iterate_trace(j_hist, gn_hist, t_hist));
        j_cur = dual_value(lam, *cert);
        const WhitenedFilter wf = compute_Y(g1, *cert);
        gn = project_range(basis, wf.Y).norm();
        j_hist.push_back(j_cur);
        gn_hist.push_back(gn);
        if (gn <= opt.tol) {
            converged = true;
            iters = it;
            break;
        }

        const NewtonStep step = newton_direction(g1, *cert, wf, basis);
        if (std::abs(step.directional) <= floor_eps * std::max(1.0, std::abs(j_cur))) {
            // J cannot resolve further descent at working precision. Keep the full
            // step only if it still shrinks the gradient, otherwise stop here.
            bool accepted = false;
            const auto c2 = solve_dare(g1, lam + step.delta);
            if (c2) {
                const WhitenedFilter wf2 = compute_Y(g1, *c2);
                if (project_range(basis, wf2.Y).norm() < 0.9 * gn) {
                    coords += step.alpha;
                    t_hist.push_back(1.0);
                    iters = it + 1;
                    accepted = true;
                }
            }
            if (accepted) continue;
            converged = true;
            floor_stop = true;
            iters = it;
            break;
        }

        double t = 1.0;
        try {
            t = backtrack(g1, lam, step, j_cur, opt.armijo_alpha);
        } catch (const ConvergenceError& e) {
            throw ConvergenceError(std::string(e.what()) + "\n" +
                                   iterate_trace(j_hist, gn_hist, t_hist));
        }
        coords += t * step.alpha;
        t_hist.push_back(t);
        iters = it + 1;
    }
    if (!converged)
        throw ConvergenceError("solve_rer: gradient tolerance not reached in " +
                               std::to_string(opt.max_iter) + " iterations\n" +
                               iterate_trace(j_hist, gn_hist, t_hist));

    OptimalSpectrum os = optimal_spectrum(lam, gp, psi);

    RerSolution sol;
    sol.lambda = sym(norm.isqrt * lam * norm.isqrt);
    sol.lambda_normalized = lam;
    sol.phi = std::move(os.phi);
    sol.degree = os.degree;
    sol.degree_bound = os.degree_bound;
    sol.iterations = iters;
    sol.floor_stop = floor_stop;
    sol.dual_value = j_cur;
    sol.gradient_norm = gn;
    sol.residual = (gamma_apply(bank, sol.phi) - sig).norm() / sig.norm();
    sol.dual_history = std::move(j_hist);
    sol.gradient_history = std::move(gn_hist);
    sol.step_history = std::move(t_hist);
    return sol;
}

}  // namespace rer
