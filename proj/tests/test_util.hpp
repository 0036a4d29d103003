#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <random>
#include <stdexcept>
#include <vector>

#include "rer/lti.hpp"

// Shared helpers for the unit tests: deterministic gaussian matrices and
// random stable systems.
namespace testutil {

inline Eigen::MatrixXd randn(std::mt19937& rng, int r, int c) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd M(r, c);
    for (int j = 0; j < c; ++j)
        for (int i = 0; i < r; ++i) M(i, j) = g(rng);
    return M;
}

inline Eigen::MatrixXd random_stable(std::mt19937& rng, int n, double radius) {
    Eigen::MatrixXd A = randn(rng, n, n);
    double rho = rer::spectral_radius(A);
    if (rho > 0) A *= radius / rho;
    return A;
}

inline Eigen::MatrixXd random_spd(std::mt19937& rng, int n, double shift = 0.5) {
    Eigen::MatrixXd M = randn(rng, n, n);
    return M * M.transpose() + shift * Eigen::MatrixXd::Identity(n, n);
}

// Random stable spectral factor with stable zero dynamics (redrawn until the
// inverse is stable too), suitable wherever a coercive density is needed.
inline rer::StateSpace random_minphase(std::mt19937& rng, int states, int m,
                                       double radius = 0.6) {
    for (int tries = 0; tries < 64; ++tries) {
        rer::StateSpace w;
        w.A = random_stable(rng, states, radius);
        w.B = randn(rng, states, m);
        w.C = 0.3 * randn(rng, m, states);
        w.D = Eigen::MatrixXd::Identity(m, m) + 0.2 * randn(rng, m, m);
        Eigen::FullPivLU<Eigen::MatrixXd> lu(w.D);
        if (!lu.isInvertible()) continue;
        if (rer::spectral_radius(w.A - w.B * lu.solve(w.C)) < 0.95) return w;
    }
    throw std::runtime_error("random_minphase: no admissible draw");
}

struct Peak {
    double theta;
    double value;
    double prominence;
};

// Strict local maxima of a sampled scalar curve restricted to theta in
// (lo, hi), each with its topographic prominence inside the band: the drop
// from the peak to the higher of the two saddles separating it from taller
// terrain (or from the band minimum when no taller sample exists).
inline std::vector<Peak> band_peaks(const Eigen::VectorXd& theta,
                                    const Eigen::VectorXd& value, double lo,
                                    double hi) {
    const int n = static_cast<int>(theta.size());
    int a = -1, b = -1;
    for (int i = 0; i < n; ++i)
        if (lo < theta[i] && theta[i] < hi) {
            if (a < 0) a = i;
            b = i;
        }
    std::vector<Peak> out;
    if (a < 0 || b - a < 2) return out;
    for (int p = a + 1; p < b; ++p) {
        if (!(value[p] > value[p - 1] && value[p] > value[p + 1])) continue;
        bool found_left = false, found_right = false;
        double left = value[p], right = value[p];
        for (int i = p - 1; i >= a; --i) {
            left = std::min(left, value[i]);
            if (value[i] > value[p]) {
                found_left = true;
                break;
            }
        }
        for (int i = p + 1; i <= b; ++i) {
            right = std::min(right, value[i]);
            if (value[i] > value[p]) {
                found_right = true;
                break;
            }
        }
        double saddle;
        if (found_left && found_right)
            saddle = std::max(left, right);
        else if (found_left)
            saddle = left;
        else if (found_right)
            saddle = right;
        else
            saddle = value.segment(a, b - a + 1).minCoeff();
        out.push_back({theta[p], value[p], value[p] - saddle});
    }
    return out;
}

// Peaks kept by the detection rule used throughout the line experiments:
// prominence at least `frac` of the tallest in-band sample, sorted by theta.
inline std::vector<Peak> prominent_peaks(const Eigen::VectorXd& theta,
                                         const Eigen::VectorXd& value, double lo,
                                         double hi, double frac) {
    std::vector<Peak> all = band_peaks(theta, value, lo, hi);
    double vmax = 0.0;
    for (const Peak& p : all) vmax = std::max(vmax, p.value);
    std::vector<Peak> kept;
    for (const Peak& p : all)
        if (p.prominence >= frac * vmax) kept.push_back(p);
    return kept;
}

// max_theta |f(theta)| disagreement helper: largest entrywise abs difference
// of two transfer functions over a uniform grid on (-pi, pi].
inline double max_transfer_gap(const rer::StateSpace& a, const rer::StateSpace& b,
                               int grid = 1024) {
    double worst = 0.0;
    for (int k = 1; k <= grid; ++k) {
        double th = -M_PI + 2.0 * M_PI * k / grid;
        worst = std::max(worst, (rer::eval_transfer(a, th) - rer::eval_transfer(b, th))
                                    .cwiseAbs()
                                    .maxCoeff());
    }
    return worst;
}

}  // namespace testutil
