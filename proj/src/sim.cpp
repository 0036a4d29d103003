#include "rer/sim.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <random>
#include <stdexcept>
#include <thread>

namespace rer {
namespace {

constexpr double kPi = 3.14159265358979323846;

Eigen::MatrixXd randn(std::mt19937& rng, int rows, int cols) {
    std::normal_distribution<double> gauss;
    Eigen::MatrixXd out(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) out(i, j) = gauss(rng);
    return out;
}

int transient_length(const Eigen::MatrixXd& A) {
    return static_cast<int>(std::ceil(5.0 / (1.0 - spectral_radius(A))));
}

}  // namespace

Eigen::VectorXd gen_lines_in_noise(int n_samples, double w1, double w2,
                                   std::uint32_t seed, double amplitude) {
    if (n_samples < 1)
        throw std::invalid_argument("gen_lines_in_noise: need at least one sample");

    std::mt19937 rng(seed);
    std::normal_distribution<double> gauss;
    const double phi1 = gauss(rng);
    const double phi2 = gauss(rng);

    const int burn_in = 1000;
    double z = 0.0;
    double v_prev = 0.0;
    Eigen::VectorXd y(n_samples);
    for (int t = -burn_in; t < n_samples; ++t) {
        const double v = gauss(rng);
        z = 0.8 * z + 0.5 * v + 0.25 * v_prev;
        v_prev = v;
        if (t >= 0)
            y[t] = amplitude * (std::sin(w1 * (t + 1) + phi1) +
                                std::sin(w2 * (t + 1) + phi2)) +
                   z;
    }
    return y;
}

StateSpace gen_shaping_filter(int order, double pole_radius, double pole_angle,
                              double zero_radius, double zero_angle, int m,
                              std::uint32_t seed) {
    if (order < 2)
        throw std::invalid_argument("gen_shaping_filter: order must be at least 2");
    if (m < 1)
        throw std::invalid_argument("gen_shaping_filter: need at least one channel");
    if (!(pole_radius >= 0.0 && pole_radius < 1.0))
        throw std::invalid_argument(
            "gen_shaping_filter: pole pair must be strictly inside the unit disk");
    if (!(zero_radius >= 0.0 && zero_radius <= 1.0))
        throw std::invalid_argument(
            "gen_shaping_filter: zero pair must stay in the closed unit disk");

    // biquad carrying the pinned pair, (z^2 + n1 z + n2) / (z^2 + d1 z + d2)
    // in controllable canonical form
    const double d1 = -2.0 * pole_radius * std::cos(pole_angle);
    const double d2 = pole_radius * pole_radius;
    const double n1 = -2.0 * zero_radius * std::cos(zero_angle);
    const double n2 = zero_radius * zero_radius;
    StateSpace biquad;
    biquad.A = (Eigen::MatrixXd(2, 2) << -d1, -d2, 1.0, 0.0).finished();
    biquad.B = (Eigen::MatrixXd(2, 1) << 1.0, 0.0).finished();
    biquad.C = (Eigen::MatrixXd(1, 2) << n1 - d1, n2 - d2).finished();
    biquad.D = Eigen::MatrixXd::Identity(1, 1);

    // the pinned section acts on channel 1 only, the rest pass through
    StateSpace pinned;
    pinned.A = biquad.A;
    pinned.B = Eigen::MatrixXd::Zero(2, m);
    pinned.B.col(0) = biquad.B;
    pinned.C = Eigen::MatrixXd::Zero(m, 2);
    pinned.C.row(0) = biquad.C;
    pinned.D = Eigen::MatrixXd::Identity(m, m);

    const int extra = order - 2;
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> radius(0.0, 0.9);
    std::uniform_real_distribution<double> angle(0.0, kPi);

    for (int tries = 0; tries < 100; ++tries) {
        StateSpace core;
        core.A = Eigen::MatrixXd::Zero(extra, extra);
        int k = 0;
        for (; k + 1 < extra; k += 2) {
            const double r = radius(rng);
            const double w = angle(rng);
            core.A(k, k) = r * std::cos(w);
            core.A(k, k + 1) = r * std::sin(w);
            core.A(k + 1, k) = -r * std::sin(w);
            core.A(k + 1, k + 1) = r * std::cos(w);
        }
        if (k < extra)  // odd leftover becomes one real pole
            core.A(k, k) = radius(rng) * std::cos(angle(rng));
        core.B = randn(rng, extra, m);
        core.C = randn(rng, m, extra) / std::sqrt(static_cast<double>(std::max(1, extra)));
        core.D = randn(rng, m, m) + 2.0 * Eigen::MatrixXd::Identity(m, m);

        StateSpace w = series(core, pinned);
        if (is_stable(w.A, 1e-9)) return w;
    }
    throw std::runtime_error("gen_shaping_filter: no stable draw after 100 tries");
}

Eigen::MatrixXd simulate_filter(const StateSpace& w, int n_samples,
                                std::uint32_t seed) {
    if (!is_stable(w.A))
        throw std::invalid_argument("simulate_filter: filter must be stable");
    if (n_samples < 1)
        throw std::invalid_argument("simulate_filter: need at least one sample");

    std::mt19937 rng(seed);
    const int warm_up = transient_length(w.A);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(w.order());
    Eigen::MatrixXd out(n_samples, w.outputs());
    for (int t = -warm_up; t < n_samples; ++t) {
        const Eigen::VectorXd e = randn(rng, w.inputs(), 1).col(0);
        if (t >= 0) out.row(t) = (w.C * x + w.D * e).transpose();
        x = w.A * x + w.B * e;
    }
    return out;
}

Eigen::MatrixXd sample_state_covariance(const StateSpace& bank,
                                        const Eigen::MatrixXd& data) {
    if (!is_stable(bank.A))
        throw std::invalid_argument("sample_state_covariance: bank must be stable");
    if (data.cols() != bank.inputs())
        throw std::invalid_argument(
            "sample_state_covariance: data channel count does not match the bank");

    const int n_samples = static_cast<int>(data.rows());
    const int transient = transient_length(bank.A);
    if (n_samples <= transient)
        throw std::invalid_argument(
            "sample_state_covariance: no samples survive the transient discard");

    Eigen::VectorXd x = Eigen::VectorXd::Zero(bank.order());
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(bank.order(), bank.order());
    for (int k = 0; k < n_samples; ++k) {
        x = bank.A * x + bank.B * data.row(k).transpose();
        if (k >= transient) acc.selfadjointView<Eigen::Lower>().rankUpdate(x);
    }
    acc.triangularView<Eigen::StrictlyUpper>() =
        acc.triangularView<Eigen::StrictlyLower>().transpose();
    return acc / static_cast<double>(n_samples - transient);
}

Eigen::VectorXd avg_error_curve(
    const std::vector<std::pair<SpectralDensity, SpectralDensity>>& runs,
    const Eigen::VectorXd& grid) {
    if (runs.empty()) throw std::invalid_argument("avg_error_curve: no runs");
    if (grid.size() == 0) throw std::invalid_argument("avg_error_curve: empty grid");

    auto check_grid = [&grid](const SpectralDensity& phi) {
        if (phi.form != SpectralDensity::Form::grid) return;
        if (static_cast<Eigen::Index>(phi.theta.size()) != grid.size())
            throw std::invalid_argument("avg_error_curve: grid mismatch");
        for (Eigen::Index i = 0; i < grid.size(); ++i)
            if (std::abs(phi.theta[i] - grid[i]) > 1e-12)
                throw std::invalid_argument("avg_error_curve: grid mismatch");
    };
    for (const auto& [est, truth] : runs) {
        if (est.dim() != truth.dim())
            throw std::invalid_argument("avg_error_curve: dimension mismatch");
        check_grid(est);
        check_grid(truth);
    }

    Eigen::VectorXd curve = Eigen::VectorXd::Zero(grid.size());
    for (const auto& [est, truth] : runs) {
        for (Eigen::Index i = 0; i < grid.size(); ++i) {
            Eigen::MatrixXcd diff =
                eval_density(est, grid[i]) - eval_density(truth, grid[i]);
            diff = 0.5 * (diff + diff.adjoint()).eval();
            curve[i] += diff.selfadjointView<Eigen::Lower>().operatorNorm();
        }
    }
    return curve / static_cast<double>(runs.size());
}

int thread_budget() {
    const unsigned hw = std::thread::hardware_concurrency();
    int budget = hw > 0 ? static_cast<int>(hw) : 1;
    if (const char* env = std::getenv("RER_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1 && v <= 256)
            budget = static_cast<int>(v);
    }
    return budget;
}

void parallel_runs(int count, const std::function<void(int)>& fn) {
    if (count <= 0) return;
    const int workers = std::min(count, thread_budget());
    if (workers <= 1) {
        for (int r = 0; r < count; ++r) fn(r);
        return;
    }

    std::atomic<int> next{0};
    std::mutex failure_lock;
    std::exception_ptr failure;
    auto drain = [&] {
        for (;;) {
            const int r = next.fetch_add(1);
            if (r >= count) return;
            try {
                fn(r);
            } catch (...) {
                std::lock_guard<std::mutex> hold(failure_lock);
                if (!failure) failure = std::current_exception();
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int i = 0; i < workers; ++i) pool.emplace_back(drain);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace rer
