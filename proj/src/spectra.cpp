#include "rer/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace rer {
namespace {

constexpr double kPi = std::numbers::pi;

double wrap_angle(double theta) {
    // map into (-pi, pi]
    double t = std::remainder(theta, 2.0 * kPi);
    if (t <= -kPi) t += 2.0 * kPi;
    return t;
}

[[noreturn]] void throw_not_pd(const char* what, double theta) {
    std::ostringstream os;
    os << what << " not positive definite at theta = " << theta;
    throw std::domain_error(os.str());
}

// log det of a Hermitian PD matrix via Cholesky; nullopt-style failure
// is reported through the ok flag so callers can name the angle.
double logdet_pd(const Eigen::MatrixXcd& P, bool* ok) {
    Eigen::LLT<Eigen::MatrixXcd> llt(P);
    if (llt.info() != Eigen::Success) {
        *ok = false;
        return 0.0;
    }
    *ok = true;
    double s = 0.0;
    const auto& L = llt.matrixL();
    for (int i = 0; i < P.rows(); ++i) s += std::log(std::real(L(i, i)));
    return 2.0 * s;
}

// Quadrature nodes. Grid-form inputs pin the node set; factor-only
// integrals use M uniform angles with node doubling until the mean
// stabilizes to 1e-10 relative (cap 2^16).
struct QuadPlan {
    std::vector<double> nodes;  // empty: doubling rule
};

std::vector<double> uniform_nodes(int m) {
    std::vector<double> th(m);
    for (int k = 0; k < m; ++k) th[k] = -kPi + 2.0 * kPi * (k + 1) / m;
    return th;
}

QuadPlan quad_plan(std::initializer_list<const SpectralDensity*> ds) {
    QuadPlan plan;
    for (const SpectralDensity* d : ds) {
        if (d->form != SpectralDensity::Form::grid) continue;
        if (plan.nodes.empty()) {
            plan.nodes = d->theta;
            continue;
        }
        bool same = plan.nodes.size() == d->theta.size();
        for (std::size_t j = 0; same && j < plan.nodes.size(); ++j)
            same = std::abs(plan.nodes[j] - d->theta[j]) <= 1e-9;
        if (!same)
            throw std::invalid_argument(
                "grid-form densities must share the same angle grid");
    }
    return plan;
}

template <typename F>
double circle_mean(F&& integrand, const QuadPlan& plan) {
    if (!plan.nodes.empty()) {
        double s = 0.0;
        for (double th : plan.nodes) s += integrand(th);
        return s / static_cast<double>(plan.nodes.size());
    }
    auto mean_at = [&](int m) {
        double s = 0.0;
        for (int k = 0; k < m; ++k) s += integrand(-kPi + 2.0 * kPi * (k + 1) / m);
        return s / m;
    };
    double prev = mean_at(2048);
    for (int m = 4096; m <= 65536; m *= 2) {
        double cur = mean_at(m);
        if (std::abs(cur - prev) <= 1e-10 * std::max(1.0, std::abs(cur))) return cur;
        prev = cur;
    }
    return prev;
}

// 8-point Gauss-Legendre on [-1, 1]
constexpr double kGlNode[4] = {0.1834346424956498, 0.5255324099163290,
                               0.7966664774136267, 0.9602898564975363};
constexpr double kGlWeight[4] = {0.3626837833783620, 0.3137066458778873,
                                 0.2223810344533745, 0.1012285362903763};

Eigen::MatrixXcd gl8(const SpectralDensity& phi, double a, double b) {
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(phi.dim(), phi.dim());
    for (int i = 0; i < 4; ++i) {
        acc += kGlWeight[i] * (eval_density(phi, c - h * kGlNode[i]) +
                               eval_density(phi, c + h * kGlNode[i]));
    }
    return h * acc;
}

Eigen::MatrixXcd refine_increment(const SpectralDensity& phi, double a, double b,
                                  const Eigen::MatrixXcd& coarse, double tol,
                                  int depth) {
    const double mid = 0.5 * (a + b);
    Eigen::MatrixXcd left = gl8(phi, a, mid);
    Eigen::MatrixXcd right = gl8(phi, mid, b);
    Eigen::MatrixXcd fine = left + right;
    if ((fine - coarse).norm() <= tol || depth >= 30) return fine;
    return refine_increment(phi, a, mid, left, 0.5 * tol, depth + 1) +
           refine_increment(phi, mid, b, right, 0.5 * tol, depth + 1);
}

Eigen::VectorXcd poly_from_roots(const Eigen::VectorXcd& roots) {
    // monic coefficients c with z^p + c_1 z^{p-1} + ... + c_p
    Eigen::VectorXcd c = Eigen::VectorXcd::Zero(roots.size() + 1);
    c(0) = 1.0;
    for (int i = 0; i < roots.size(); ++i)
        for (int k = i + 1; k >= 1; --k) c(k) -= roots(i) * c(k - 1);
    return c;
}

Eigen::MatrixXd companion_of(const std::vector<Eigen::MatrixXd>& lag, int m) {
    const int p = static_cast<int>(lag.size());
    Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(m * p, m * p);
    for (int i = 0; i < p; ++i) comp.block(0, m * i, m, m) = lag[i];
    if (p > 1)
        comp.block(m, 0, m * (p - 1), m * (p - 1)) =
            Eigen::MatrixXd::Identity(m * (p - 1), m * (p - 1));
    return comp;
}

}  // namespace

int SpectralDensity::dim() const {
    if (form == Form::factor) return W.outputs();
    return values.empty() ? 0 : static_cast<int>(values.front().rows());
}

SpectralDensity SpectralDensity::factor(StateSpace w) {
    check_dims(w);
    if (w.outputs() != w.inputs())
        throw std::invalid_argument("spectral factor must be square");
    if (!is_stable(w.A)) throw std::invalid_argument("spectral factor must be stable");
    Eigen::FullPivLU<Eigen::MatrixXd> lu(w.D);
    if (!lu.isInvertible())
        throw std::invalid_argument("spectral factor needs invertible D");
    SpectralDensity d;
    d.form = Form::factor;
    d.W = std::move(w);
    return d;
}

SpectralDensity SpectralDensity::constant(const Eigen::MatrixXd& cov) {
    if (cov.rows() != cov.cols() || cov.rows() < 1)
        throw std::invalid_argument("covariance must be square");
    if ((cov - cov.transpose()).norm() > 1e-10 * (1.0 + cov.norm()))
        throw std::invalid_argument("covariance must be symmetric");
    Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (cov + cov.transpose()));
    if (llt.info() != Eigen::Success)
        throw std::domain_error("covariance must be positive definite");
    return factor(static_gain(Eigen::MatrixXd(llt.matrixL())));
}

SpectralDensity SpectralDensity::grid(std::vector<double> nodes,
                                      std::vector<Eigen::MatrixXcd> vals) {
    const int m = static_cast<int>(nodes.size());
    if (m < 1 || vals.size() != nodes.size())
        throw std::invalid_argument("grid needs one value per node");
    const double h = 2.0 * kPi / m;
    for (int j = 0; j < m; ++j) {
        if (std::abs(nodes[j] - (nodes[0] + j * h)) > 1e-9)
            throw std::invalid_argument("grid nodes must be uniform on the circle");
    }
    if (nodes.front() <= -kPi - 1e-9 || nodes.back() > kPi + 1e-9)
        throw std::invalid_argument("grid nodes must lie in (-pi, pi]");
    const int dim = static_cast<int>(vals.front().rows());
    for (int j = 0; j < m; ++j) {
        if (vals[j].rows() != dim || vals[j].cols() != dim)
            throw std::invalid_argument("grid values must share one square size");
        if ((vals[j] - vals[j].adjoint()).norm() > 1e-8 * (1.0 + vals[j].norm()))
            throw std::invalid_argument("grid values must be Hermitian");
        vals[j] = 0.5 * (vals[j] + vals[j].adjoint());
        Eigen::LLT<Eigen::MatrixXcd> llt(vals[j]);
        if (llt.info() != Eigen::Success) throw_not_pd("grid value", nodes[j]);
    }
    SpectralDensity d;
    d.form = Form::grid;
    d.theta = std::move(nodes);
    d.values = std::move(vals);
    return d;
}

Eigen::MatrixXcd eval_density(const SpectralDensity& phi, double theta) {
    if (phi.form == SpectralDensity::Form::factor) {
        Eigen::MatrixXcd h = eval_transfer(phi.W, theta);
        return h * h.adjoint();
    }
    const int m = static_cast<int>(phi.theta.size());
    const double h = 2.0 * kPi / m;
    double t = wrap_angle(theta);
    long j = std::lround((t - phi.theta.front()) / h);
    j = ((j % m) + m) % m;
    return phi.values[static_cast<std::size_t>(j)];
}

double d_rer(const SpectralDensity& phi, const SpectralDensity& psi) {
    if (phi.dim() != psi.dim())
        throw std::invalid_argument("densities must share one dimension");
    const int m = phi.dim();
    QuadPlan plan = quad_plan({&phi, &psi});
    auto integrand = [&](double th) {
        Eigen::MatrixXcd p = eval_density(phi, th);
        Eigen::MatrixXcd q = eval_density(psi, th);
        bool ok = false;
        double ldp = logdet_pd(p, &ok);
        if (!ok) throw_not_pd("first density", th);
        Eigen::LLT<Eigen::MatrixXcd> lq(q);
        if (lq.info() != Eigen::Success) throw_not_pd("second density", th);
        double ldq = 0.0;
        for (int i = 0; i < m; ++i)
            ldq += 2.0 * std::log(std::real(lq.matrixLLT()(i, i)));
        double tr = std::real(lq.solve(p).trace());
        return (ldq - ldp) + tr - m;
    };
    return 0.5 * circle_mean(integrand, plan);
}

double itakura_saito(const SpectralDensity& phi, const SpectralDensity& psi) {
    if (phi.dim() != 1 || psi.dim() != 1)
        throw std::invalid_argument("itakura_saito is defined for scalar densities");
    QuadPlan plan = quad_plan({&phi, &psi});
    auto integrand = [&](double th) {
        double p = std::real(eval_density(phi, th)(0, 0));
        double q = std::real(eval_density(psi, th)(0, 0));
        if (p <= 0.0) throw_not_pd("first density", th);
        if (q <= 0.0) throw_not_pd("second density", th);
        double r = p / q;
        return r - std::log(r) - 1.0;
    };
    return circle_mean(integrand, plan);
}

double entropy_rate(const SpectralDensity& phi) {
    const int m = phi.dim();
    QuadPlan plan = quad_plan({&phi});
    auto integrand = [&](double th) {
        bool ok = false;
        double ld = logdet_pd(eval_density(phi, th), &ok);
        if (!ok) throw_not_pd("density", th);
        return ld;
    };
    double mean_logdet = circle_mean(integrand, plan);
    return 0.5 * m * std::log(2.0 * kPi * std::numbers::e) + 0.5 * mean_logdet;
}

double rer_time_domain(const SpectralDensity& phi_y, const SpectralDensity& phi_z) {
    if (phi_y.dim() != phi_z.dim())
        throw std::invalid_argument("densities must share one dimension");
    QuadPlan plan = quad_plan({&phi_y, &phi_z});
    // whitened-eigenvalue route: with lambda_i the eigenvalues of
    // L^{-1} Phi_y L^{-*}, Phi_z = L L*, the integrand is
    // sum_i (lambda_i - log lambda_i - 1)
    auto integrand = [&](double th) {
        Eigen::MatrixXcd p = eval_density(phi_y, th);
        Eigen::MatrixXcd q = eval_density(phi_z, th);
        Eigen::LLT<Eigen::MatrixXcd> lq(q);
        if (lq.info() != Eigen::Success) throw_not_pd("second density", th);
        Eigen::MatrixXcd L = lq.matrixL();
        Eigen::MatrixXcd x = L.triangularView<Eigen::Lower>().solve(p);
        x = L.triangularView<Eigen::Lower>()
                .solve(x.adjoint().eval())
                .adjoint();
        x = 0.5 * (x + x.adjoint()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(x);
        double s = 0.0;
        for (int i = 0; i < x.rows(); ++i) {
            double lam = es.eigenvalues()(i);
            if (lam <= 0.0) throw_not_pd("first density", th);
            s += lam - std::log(lam) - 1.0;
        }
        return s;
    };
    return 0.5 * circle_mean(integrand, plan);
}

IncrementCovariance increment_covariance(const SpectralDensity& phi,
                                         double theta_a, double theta_b) {
    if (!(theta_a < theta_b))
        throw std::invalid_argument("increment interval must be nonempty");
    IncrementCovariance inc;
    inc.theta_a = theta_a;
    inc.theta_b = theta_b;
    Eigen::MatrixXcd coarse = gl8(phi, theta_a, theta_b);
    double tol = 1e-12 * std::max(1.0, coarse.norm());
    Eigen::MatrixXcd q = refine_increment(phi, theta_a, theta_b, coarse, tol, 0);
    inc.Q = 0.5 * (q + q.adjoint());
    return inc;
}

double circular_gauss_kl(const Eigen::MatrixXcd& P, const Eigen::MatrixXcd& Q) {
    if (P.rows() != P.cols() || Q.rows() != Q.cols() || P.rows() != Q.rows())
        throw std::invalid_argument("covariances must be square of equal size");
    const int m = static_cast<int>(P.rows());
    bool okp = false, okq = false;
    double ldp = logdet_pd(P, &okp);
    Eigen::LLT<Eigen::MatrixXcd> lq(Q);
    if (!okp || lq.info() != Eigen::Success)
        throw std::domain_error("circular_gauss_kl needs positive definite inputs");
    double ldq = 0.0;
    for (int i = 0; i < m; ++i)
        ldq += 2.0 * std::log(std::real(lq.matrixLLT()(i, i)));
    return (ldq - ldp) + std::real(lq.solve(P).trace()) - m;
}

double spectral_rer_partition(const SpectralDensity& phi_y,
                              const SpectralDensity& phi_z, int n) {
    if (n < 1) throw std::invalid_argument("partition needs at least one cell");
    if (phi_y.dim() != phi_z.dim())
        throw std::invalid_argument("densities must share one dimension");
    double acc = 0.0;
    for (int k = 0; k < n; ++k) {
        const double a = kPi * k / n, b = kPi * (k + 1) / n;
        Eigen::MatrixXcd qy = increment_covariance(phi_y, a, b).Q;
        Eigen::MatrixXcd qz = increment_covariance(phi_z, a, b).Q;
        acc += circular_gauss_kl(qy, qz);
    }
    return acc / (2.0 * n);
}

SpectralDensity fit_ar_prior(const Eigen::MatrixXd& data, int order) {
    const int t_len = static_cast<int>(data.rows());
    const int m = static_cast<int>(data.cols());
    if (m < 1) throw std::invalid_argument("data needs at least one channel");
    if (order < 0) throw std::invalid_argument("order must be nonnegative");
    if (t_len <= m * order + m)
        throw std::invalid_argument("too few samples for the requested order");

    if (order == 0) {
        Eigen::MatrixXd s = data.transpose() * data / t_len;
        return SpectralDensity::constant(s);
    }

    const int p = order;
    const int rows = t_len - p;
    Eigen::MatrixXd x(rows, m * p), y(rows, m);
    for (int t = p; t < t_len; ++t) {
        y.row(t - p) = data.row(t);
        for (int i = 0; i < p; ++i) x.block(t - p, m * i, 1, m) = data.row(t - 1 - i);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < m * p) return fit_ar_prior(data, p - 1);
    Eigen::MatrixXd coef = qr.solve(y);  // m*p x m
    Eigen::MatrixXd resid = y - x * coef;
    Eigen::MatrixXd sigma_e = resid.transpose() * resid / rows;

    std::vector<Eigen::MatrixXd> lag(p);
    for (int i = 0; i < p; ++i) lag[i] = coef.block(m * i, 0, m, m).transpose();

    Eigen::MatrixXd comp = companion_of(lag, m);
    double rho = spectral_radius(comp);
    if (rho >= 1.0 - 1e-6) {
        if (m == 1) {
            Eigen::VectorXcd roots = comp.eigenvalues();
            for (int i = 0; i < roots.size(); ++i)
                if (std::abs(roots(i)) > 1.0) roots(i) = 1.0 / std::conj(roots(i));
            double r2 = roots.cwiseAbs().maxCoeff();
            if (r2 >= 1.0 - 1e-6) roots *= (1.0 - 1e-3) / r2;
            Eigen::VectorXcd c = poly_from_roots(roots);
            for (int i = 0; i < p; ++i)
                lag[i] = Eigen::MatrixXd::Constant(1, 1, -std::real(c(i + 1)));
        } else {
            const double c = (1.0 - 1e-3) / rho;
            double f = 1.0;
            for (int i = 0; i < p; ++i) {
                f *= c;
                lag[i] *= f;
            }
        }
        comp = companion_of(lag, m);
    }

    Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (sigma_e + sigma_e.transpose()));
    if (llt.info() != Eigen::Success)
        throw std::domain_error("innovation covariance is not positive definite");
    Eigen::MatrixXd el = llt.matrixL();

    StateSpace w;
    w.A = comp;
    w.B = Eigen::MatrixXd::Zero(m * p, m);
    w.B.topRows(m) = el;
    w.C = Eigen::MatrixXd(m, m * p);
    for (int i = 0; i < p; ++i) w.C.block(0, m * i, m, m) = lag[i];
    w.D = el;
    return SpectralDensity::factor(std::move(w));
}

}  // namespace rer
