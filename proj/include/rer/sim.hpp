#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "rer/lti.hpp"
#include "rer/spectra.hpp"

namespace rer {

// Two sinusoids in colored noise:
//   y(t) = a sin(w1 t + phi1) + a sin(w2 t + phi2) + z(t),
//   z(t) = 0.8 z(t-1) + 0.5 v(t) + 0.25 v(t-1),
// phases and v i.i.d. standard normal, ARMA recursion warmed up over 1000
// discarded samples. Deterministic in the seed.
Eigen::VectorXd gen_lines_in_noise(int n_samples, double w1, double w2,
                                   std::uint32_t seed, double amplitude = 0.5);

// Random m x m shaping filter of the given state order. One complex pole pair
// is pinned at pole_radius * e^{+-j pole_angle} and one transmission-zero pair
// at zero_radius * e^{+-j zero_angle} (zero_radius 0 drops the zero pair, as
// in a pure resonator); the remaining order-2 states get random strictly
// stable poles (radius uniform on [0, 0.9]) with Gaussian input/output maps.
// Unstable draws are rejected and retried a bounded number of times.
StateSpace gen_shaping_filter(int order, double pole_radius, double pole_angle,
                              double zero_radius, double zero_angle, int m,
                              std::uint32_t seed);

// Response of a stable filter to i.i.d. standard normal input from zero
// state, one output row per step, after discarding a ceil(5/(1 - rho(A)))
// warm-up so the retained rows are close to stationary.
Eigen::MatrixXd simulate_filter(const StateSpace& w, int n_samples,
                                std::uint32_t seed);

// Sample average of x x^T along the bank state recursion x(k+1) = Ax(k) +
// By(k), x(0) = 0, with the first ceil(5/(1 - rho(A))) states discarded as
// transient. Throws when no samples survive the discard.
Eigen::MatrixXd sample_state_covariance(const StateSpace& bank,
                                        const Eigen::MatrixXd& data);

// Pointwise mean over runs of the largest singular value of (estimate -
// truth) on the grid. Grid-form densities must carry exactly this grid.
Eigen::VectorXd avg_error_curve(
    const std::vector<std::pair<SpectralDensity, SpectralDensity>>& runs,
    const Eigen::VectorXd& grid);

// Worker count for Monte Carlo loops: RER_THREADS when set to a positive
// integer, hardware concurrency otherwise.
int thread_budget();

// Runs fn(0) ... fn(count - 1), spread over at most thread_budget() workers.
// Each call must write only to its own output slot; the schedule never
// affects results. The first exception thrown by any run is rethrown.
void parallel_runs(int count, const std::function<void(int)>& fn);

}  // namespace rer
