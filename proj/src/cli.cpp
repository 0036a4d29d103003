#include "rer/cli.hpp"

#include <cerrno>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rer/gamma.hpp"
#include "rer/sim.hpp"
#include "rer/solver.hpp"

namespace rer {
namespace {

using nlohmann::json;

constexpr double kPi = 3.14159265358979323846;

std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

long elapsed_ms(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - t0)
        .count();
}

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open '" + path + "'");
    return json::parse(in);
}

void save_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << text;
    out.flush();
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

double parse_double(const std::string& token, const std::string& where) {
    const char* s = token.c_str();
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(s, &end);
    if (end == s || *end != '\0' || errno == ERANGE)
        throw std::invalid_argument(where + ": bad number '" + token + "'");
    return v;
}

Eigen::MatrixXd read_data_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open '" + path + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            if (in.eof()) break;
            throw std::invalid_argument(path + ": empty row");
        }
        std::vector<double> row;
        std::size_t pos = 0;
        for (;;) {
            const std::size_t comma = line.find(',', pos);
            row.push_back(parse_double(
                line.substr(pos, comma == std::string::npos ? std::string::npos
                                                            : comma - pos),
                path));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw std::invalid_argument(path + ": rows have mixed widths");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::invalid_argument(path + ": no data rows");

    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(rows.front().size()));
    for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = rows[i][j];
    return out;
}

std::string fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open '" + path + "'");
    std::uint64_t h = 1469598103934665603ull;
    char c;
    while (in.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

Eigen::MatrixXd matrix_from_json(const json& j, const std::string& what) {
    if (!j.is_array()) throw std::invalid_argument(what + ": expected rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    if (rows == 0) return Eigen::MatrixXd(0, 0);
    if (!j[0].is_array()) throw std::invalid_argument(what + ": rows must be arrays");
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        if (!j[i].is_array() || static_cast<Eigen::Index>(j[i].size()) != cols)
            throw std::invalid_argument(what + ": rows have mixed widths");
        for (Eigen::Index k = 0; k < cols; ++k) {
            if (!j[i][k].is_number())
                throw std::invalid_argument(what + ": non-numeric entry");
            m(i, k) = j[i][k].get<double>();
        }
    }
    return m;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
        rows.push_back(std::move(row));
    }
    return rows;
}

StateSpace state_space_from_json(const json& j) {
    StateSpace w;
    w.D = matrix_from_json(j.at("D"), "factor D");
    const Eigen::Index m = w.D.rows();
    if (m == 0 || w.D.cols() != m)
        throw std::invalid_argument("factor: D must be square and nonempty");
    w.A = matrix_from_json(j.value("A", json::array()), "factor A");
    const Eigen::Index n = w.A.rows();
    if (w.A.cols() != n) throw std::invalid_argument("factor: A must be square");
    if (n == 0) {
        w.B = Eigen::MatrixXd(0, m);
        w.C = Eigen::MatrixXd(m, 0);
    } else {
        w.B = matrix_from_json(j.at("B"), "factor B");
        w.C = matrix_from_json(j.at("C"), "factor C");
        if (w.B.rows() != n || w.B.cols() != m || w.C.rows() != m || w.C.cols() != n)
            throw std::invalid_argument("factor: inconsistent dimensions");
    }
    return w;
}

json state_space_to_json(const StateSpace& w) {
    return json{{"A", matrix_to_json(w.A)},
                {"B", matrix_to_json(w.B)},
                {"C", matrix_to_json(w.C)},
                {"D", matrix_to_json(w.D)}};
}

SpectralDensity density_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "constant")
        return SpectralDensity::constant(matrix_from_json(j.at("cov"), "cov"));
    if (kind == "factor") {
        if (j.contains("path"))
            return SpectralDensity::factor(
                state_space_from_json(load_json(j.at("path").get<std::string>())));
        return SpectralDensity::factor(state_space_from_json(j));
    }
    throw std::invalid_argument("density kind must be 'constant' or 'factor'");
}

// The echo is what the manifest stores: file references are replaced by the
// loaded content so the manifest never depends on local paths.
SpectralDensity resolve_prior(const json& spec, const Eigen::MatrixXd& data,
                              json& echo) {
    const std::string kind = spec.at("kind").get<std::string>();
    if (kind == "constant") {
        Eigen::MatrixXd cov =
            data.transpose() * data / static_cast<double>(data.rows());
        cov = 0.5 * (cov + cov.transpose()).eval();
        echo = json{{"kind", "constant"}};
        return SpectralDensity::constant(cov);
    }
    if (kind == "ar") {
        const int order = spec.at("order").get<int>();
        echo = json{{"kind", "ar"}, {"order", order}};
        return fit_ar_prior(data, order);
    }
    if (kind == "factor") {
        StateSpace w =
            spec.contains("path")
                ? state_space_from_json(load_json(spec.at("path").get<std::string>()))
                : state_space_from_json(spec);
        echo = state_space_to_json(w);
        echo["kind"] = "factor";
        return SpectralDensity::factor(w);
    }
    throw std::invalid_argument("prior kind must be 'constant', 'ar' or 'factor'");
}

SolverOptions merge_options(const json* cfg, const CliOverrides& ov) {
    SolverOptions opt;
    if (cfg && cfg->contains("solver")) {
        const json& s = cfg->at("solver");
        opt.tol = s.value("tol", opt.tol);
        opt.max_iter = s.value("max_iter", opt.max_iter);
        opt.armijo_alpha = s.value("armijo_alpha", opt.armijo_alpha);
        opt.grid_size = s.value("grid_size", opt.grid_size);
    }
    if (ov.tol) opt.tol = *ov.tol;
    if (ov.max_iter) opt.max_iter = *ov.max_iter;
    return opt;
}

json options_echo(const SolverOptions& opt) {
    return json{{"tol", opt.tol},
                {"max_iter", opt.max_iter},
                {"armijo_alpha", opt.armijo_alpha},
                {"grid_size", opt.grid_size}};
}

json run_result_json(const RerSolution& sol) {
    return json{{"iterations", sol.iterations},
                {"dual_value", sol.dual_value},
                {"gradient_norm", sol.gradient_norm},
                {"residual", sol.residual},
                {"degree", sol.degree},
                {"degree_bound", sol.degree_bound},
                {"floor_stop", sol.floor_stop}};
}

// plotting grid clear of the endpoints where line spectra degenerate
Eigen::VectorXd half_circle_grid(int size) {
    if (size < 2) throw std::invalid_argument("grid size must be at least 2");
    Eigen::VectorXd g(size);
    const double lo = 1e-3;
    const double hi = kPi - 1e-3;
    for (int i = 0; i < size; ++i) g[i] = lo + (hi - lo) * i / (size - 1);
    return g;
}

std::vector<std::complex<double>> line_bank_poles(double radius) {
    std::vector<std::complex<double>> p = {{0.0, 0.0}, {0.85, 0.0}, {-0.85, 0.0}};
    for (double a : {0.42, 0.44, 0.46, 0.48, 0.50}) {
        p.emplace_back(radius * std::cos(a), radius * std::sin(a));
        p.emplace_back(radius * std::cos(a), -radius * std::sin(a));
    }
    return p;
}

std::vector<std::complex<double>> shaping_bank_poles() {
    std::vector<std::complex<double>> p;
    for (int k = 1; k <= 4; ++k) {
        const double a = kPi * k / 5.0;
        p.emplace_back(0.7 * std::cos(a), 0.7 * std::sin(a));
        p.emplace_back(0.7 * std::cos(a), -0.7 * std::sin(a));
    }
    return p;
}

std::string run_name(int r) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "run_%03d.csv", r);
    return buf;
}

int simulate_lines(const char* name, double w1, double w2, double radius,
                   std::uint32_t default_seed, const CliOverrides& ov,
                   const std::string& out_dir) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint32_t seed = ov.seed.value_or(default_seed);
    const int runs = ov.runs.value_or(1);
    const int grid_size = ov.grid.value_or(4096);
    const int n_samples = 300;
    if (runs < 1) throw std::invalid_argument("runs must be positive");
    const SolverOptions opt = merge_options(nullptr, ov);

    std::filesystem::create_directories(out_dir);
    const StateSpace bank = build_filterbank(line_bank_poles(radius), 1);
    const Eigen::VectorXd grid = half_circle_grid(grid_size);

    std::vector<json> results(runs);
    parallel_runs(runs, [&](int r) {
        const std::uint32_t run_seed = seed + static_cast<std::uint32_t>(r);
        const Eigen::MatrixXd data = gen_lines_in_noise(n_samples, w1, w2, run_seed);
        const Eigen::MatrixXd cov =
            data.transpose() * data / static_cast<double>(n_samples);
        const SpectralDensity psi = SpectralDensity::constant(cov);
        const Eigen::MatrixXd sig = sample_state_covariance(bank, data);
        const FeasibleCovariance fc = project_covariance(bank.A, bank.B, sig);
        try {
            const RerSolution sol = solve_rer(bank, psi, fc.Sigma, opt);
            write_spectrum_csv(out_dir + "/" + run_name(r),
                               sample_density(sol.phi, grid));
            results[r] = run_result_json(sol);
            results[r]["seed"] = run_seed;
            results[r]["converged"] = true;
        } catch (const ConvergenceError& e) {
            results[r] = json{{"seed", run_seed}, {"converged", false},
                              {"error", e.what()}};
        }
    });

    int converged = 0;
    for (const json& r : results) converged += r.at("converged").get<bool>() ? 1 : 0;

    json manifest;
    manifest["kind"] = "simulate";
    manifest["experiment"] = name;
    manifest["params"] = json{{"w1", w1},
                              {"w2", w2},
                              {"bank_radius", radius},
                              {"n_samples", n_samples},
                              {"prior", "constant"}};
    manifest["seed"] = seed;
    manifest["runs"] = runs;
    manifest["grid"] = grid_size;
    manifest["solver"] = options_echo(opt);
    manifest["converged_runs"] = converged;
    manifest["results"] = results;
    manifest["wall_ms"] = elapsed_ms(t0);
    save_text(out_dir + "/manifest.json", manifest.dump(2) + "\n");
    return converged > 0 ? kExitOk : kExitNoConvergence;
}

int simulate_shaping(const CliOverrides& ov, const std::string& out_dir) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint32_t seed = ov.seed.value_or(3000u);
    const int runs = ov.runs.value_or(50);
    const int grid_size = ov.grid.value_or(400);
    const int n_samples = 300;
    if (runs < 1) throw std::invalid_argument("runs must be positive");
    const SolverOptions opt = merge_options(nullptr, ov);

    std::filesystem::create_directories(out_dir);
    const StateSpace bank = build_filterbank(shaping_bank_poles(), 2);
    const Eigen::VectorXd grid = half_circle_grid(grid_size);

    std::vector<json> results(runs);
    std::vector<std::optional<SpectralDensity>> est(runs), prior(runs), truth(runs);
    parallel_runs(runs, [&](int r) {
        const std::uint32_t run_seed = seed + static_cast<std::uint32_t>(r);
        const StateSpace w =
            gen_shaping_filter(40, 0.9, 0.52, 1.0 - 1e-5, 0.2, 2, run_seed);
        const Eigen::MatrixXd data =
            simulate_filter(w, n_samples, run_seed + 7000000u);
        const SpectralDensity psi = fit_ar_prior(data, 3);
        const Eigen::MatrixXd sig = sample_state_covariance(bank, data);
        const FeasibleCovariance fc = project_covariance(bank.A, bank.B, sig);
        try {
            const RerSolution sol = solve_rer(bank, psi, fc.Sigma, opt);
            write_spectrum_csv(out_dir + "/" + run_name(r),
                               sample_density(sol.phi, grid));
            est[r] = sol.phi;
            prior[r] = psi;
            truth[r] = SpectralDensity::factor(w);
            results[r] = run_result_json(sol);
            results[r]["seed"] = run_seed;
            results[r]["converged"] = true;
        } catch (const ConvergenceError& e) {
            results[r] = json{{"seed", run_seed}, {"converged", false},
                              {"error", e.what()}};
        }
    });

    std::vector<std::pair<SpectralDensity, SpectralDensity>> est_runs, prior_runs;
    for (int r = 0; r < runs; ++r) {
        if (!est[r]) continue;
        est_runs.push_back({*est[r], *truth[r]});
        prior_runs.push_back({*prior[r], *truth[r]});
    }

    if (!est_runs.empty()) {
        const Eigen::VectorXd e_est = avg_error_curve(est_runs, grid);
        const Eigen::VectorXd e_prior = avg_error_curve(prior_runs, grid);
        std::string text;
        for (Eigen::Index i = 0; i < grid.size(); ++i) {
            text += fmt17(grid[i]);
            text += ',';
            text += fmt17(e_est[i]);
            text += ',';
            text += fmt17(e_prior[i]);
            text += '\n';
        }
        save_text(out_dir + "/error_curve.csv", text);
    }

    json manifest;
    manifest["kind"] = "simulate";
    manifest["experiment"] = "shaping";
    manifest["params"] = json{{"filter_order", 40},
                              {"pole", json::array({0.9, 0.52})},
                              {"zero", json::array({1.0 - 1e-5, 0.2})},
                              {"channels", 2},
                              {"n_samples", n_samples},
                              {"bank_radius", 0.7},
                              {"prior", json{{"kind", "ar"}, {"order", 3}}}};
    manifest["seed"] = seed;
    manifest["runs"] = runs;
    manifest["grid"] = grid_size;
    manifest["solver"] = options_echo(opt);
    manifest["converged_runs"] = static_cast<int>(est_runs.size());
    manifest["results"] = results;
    manifest["wall_ms"] = elapsed_ms(t0);
    save_text(out_dir + "/manifest.json", manifest.dump(2) + "\n");
    return est_runs.empty() ? kExitNoConvergence : kExitOk;
}

}  // namespace

SpectrumTable sample_density(const SpectralDensity& phi, const Eigen::VectorXd& grid) {
    SpectrumTable t;
    t.theta = grid;
    t.values.reserve(static_cast<std::size_t>(grid.size()));
    for (Eigen::Index i = 0; i < grid.size(); ++i)
        t.values.push_back(eval_density(phi, grid[i]));
    return t;
}

void write_spectrum_csv(const std::string& path, const SpectrumTable& table) {
    if (table.theta.size() != static_cast<Eigen::Index>(table.values.size()) ||
        table.values.empty())
        throw std::invalid_argument("write_spectrum_csv: one value per node required");
    const Eigen::Index m = table.values.front().rows();
    std::string text;
    for (Eigen::Index i = 0; i < table.theta.size(); ++i) {
        const Eigen::MatrixXcd& v = table.values[i];
        if (v.rows() != m || v.cols() != m)
            throw std::invalid_argument("write_spectrum_csv: mixed value sizes");
        text += fmt17(table.theta[i]);
        for (Eigen::Index r = 0; r < m; ++r)
            for (Eigen::Index c = 0; c < m; ++c) {
                text += ',';
                text += fmt17(v(r, c).real());
                text += ',';
                text += fmt17(v(r, c).imag());
            }
        text += '\n';
    }
    save_text(path, text);
}

SpectrumTable read_spectrum_csv(const std::string& path) {
    const Eigen::MatrixXd raw = read_data_csv(path);
    const Eigen::Index cols = raw.cols();
    const Eigen::Index m = static_cast<Eigen::Index>(
        std::lround(std::sqrt((static_cast<double>(cols) - 1.0) / 2.0)));
    if (cols < 3 || 1 + 2 * m * m != cols)
        throw std::invalid_argument(path + ": not a spectrum table");
    SpectrumTable t;
    t.theta = raw.col(0);
    t.values.reserve(static_cast<std::size_t>(raw.rows()));
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
        Eigen::MatrixXcd v(m, m);
        Eigen::Index k = 1;
        for (Eigen::Index r = 0; r < m; ++r)
            for (Eigen::Index c = 0; c < m; ++c) {
                v(r, c) = std::complex<double>(raw(i, k), raw(i, k + 1));
                k += 2;
            }
        t.values.push_back(std::move(v));
    }
    return t;
}

int cmd_estimate(const std::string& config_path, const std::string& data_path,
                 const std::string& out_path, const CliOverrides& overrides) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
        const json cfg = load_json(config_path);
        const Eigen::MatrixXd data = read_data_csv(data_path);
        const int m = static_cast<int>(data.cols());

        const json& jp = cfg.at("bank").at("poles");
        if (!jp.is_array() || jp.empty())
            throw std::invalid_argument("config: bank.poles must be a nonempty array");
        std::vector<std::complex<double>> poles;
        json poles_echo = json::array();
        for (const json& p : jp) {
            if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
                throw std::invalid_argument("config: each pole is [re, im]");
            poles.emplace_back(p[0].get<double>(), p[1].get<double>());
            poles_echo.push_back(json::array({p[0].get<double>(), p[1].get<double>()}));
        }
        const StateSpace bank = build_filterbank(poles, m);

        const SolverOptions opt = merge_options(&cfg, overrides);
        const int grid_size = overrides.grid.value_or(cfg.value("grid", 4096));

        json prior_echo;
        const SpectralDensity psi = resolve_prior(cfg.at("prior"), data, prior_echo);

        const Eigen::MatrixXd sigma_hat = sample_state_covariance(bank, data);
        const FeasibleCovariance fc = project_covariance(bank.A, bank.B, sigma_hat);
        const RerSolution sol = solve_rer(bank, psi, fc.Sigma, opt);

        write_spectrum_csv(out_path, sample_density(sol.phi, half_circle_grid(grid_size)));

        json manifest;
        manifest["kind"] = "estimate";
        manifest["config"] = json{{"bank", json{{"poles", poles_echo}}},
                                  {"prior", prior_echo},
                                  {"solver", options_echo(opt)},
                                  {"grid", grid_size}};
        manifest["data"] = json{{"rows", data.rows()},
                                {"cols", m},
                                {"fnv1a64", fnv1a64_file(data_path)}};
        manifest["result"] = run_result_json(sol);
        manifest["wall_ms"] = elapsed_ms(t0);
        save_text(out_path + ".manifest.json", manifest.dump(2) + "\n");
        return kExitOk;
    } catch (const InfeasibleError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInfeasible;
    } catch (const ConvergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNoConvergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadInput;
    }
}

int cmd_simulate(const std::string& experiment, const CliOverrides& overrides,
                 const std::string& out_dir) {
    try {
        if (experiment == "lines")
            return simulate_lines("lines", 0.42, 0.53, 0.9, 1000u, overrides, out_dir);
        if (experiment == "lines-close")
            return simulate_lines("lines-close", 0.45, 0.47, 0.95, 2000u, overrides,
                                  out_dir);
        if (experiment == "shaping") return simulate_shaping(overrides, out_dir);
        throw std::invalid_argument("unknown experiment '" + experiment +
                                    "' (expected lines, lines-close or shaping)");
    } catch (const InfeasibleError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInfeasible;
    } catch (const ConvergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNoConvergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadInput;
    }
}

int cmd_verify_theorem(const std::string& phi_y_path, const std::string& phi_z_path,
                       const std::vector<int>& n_list, std::ostream& table) {
    try {
        if (n_list.empty())
            throw std::invalid_argument("verify-theorem: empty n list");
        for (int n : n_list)
            if (n < 1) throw std::invalid_argument("verify-theorem: n must be positive");
        const SpectralDensity phi_y = density_from_json(load_json(phi_y_path));
        const SpectralDensity phi_z = density_from_json(load_json(phi_z_path));

        const double td = rer_time_domain(phi_y, phi_z);
        std::vector<double> gaps;
        table << "n        partition              time_domain            gap\n";
        for (int n : n_list) {
            const double part = spectral_rer_partition(phi_y, phi_z, n);
            const double gap = std::abs(part - td);
            gaps.push_back(gap);
            char line[160];
            std::snprintf(line, sizeof(line), "%-8d % .15e % .15e %.3e\n", n, part,
                          td, gap);
            table << line;
        }

        bool ok = gaps.back() <= 1e-3;
        for (std::size_t i = n_list.size() / 2; i + 1 < gaps.size(); ++i)
            if (gaps[i + 1] > gaps[i] + 1e-12) ok = false;
        return ok ? kExitOk : kExitTheoremGap;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadInput;
    }
}

}  // namespace rer
