#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rer/spectra.hpp"

namespace rer {

// Flag-level overrides layered on top of config or experiment defaults.
struct CliOverrides {
    std::optional<std::uint32_t> seed;
    std::optional<int> runs;
    std::optional<int> grid;
    std::optional<double> tol;
    std::optional<int> max_iter;
};

// Density samples ready for CSV emission: column 1 = theta, then dim^2
// (Re, Im) pairs of the matrix value in row-major order, no header.
struct SpectrumTable {
    Eigen::VectorXd theta;
    std::vector<Eigen::MatrixXcd> values;
};

SpectrumTable sample_density(const SpectralDensity& phi, const Eigen::VectorXd& grid);

// Doubles rendered with %.17g, so write -> read -> write reproduces the
// file byte for byte.
void write_spectrum_csv(const std::string& path, const SpectrumTable& table);
SpectrumTable read_spectrum_csv(const std::string& path);

inline constexpr int kExitOk = 0;
inline constexpr int kExitBadInput = 2;
inline constexpr int kExitInfeasible = 3;
inline constexpr int kExitNoConvergence = 4;
inline constexpr int kExitTheoremGap = 5;

// Estimate a spectrum from a data CSV (one row per step, m columns) and a
// JSON config naming bank poles, prior and tolerances. Writes the sampled
// estimate to out_path and a manifest to out_path + ".manifest.json".
int cmd_estimate(const std::string& config_path, const std::string& data_path,
                 const std::string& out_path, const CliOverrides& overrides = {});

// Run a canned experiment ("lines", "lines-close" or "shaping") into out_dir:
// per-run spectrum CSVs, an error-curve CSV for the shaping study, and a
// manifest covering every run.
int cmd_simulate(const std::string& experiment, const CliOverrides& overrides,
                 const std::string& out_dir);

// Compare the partition sum against the time-domain divergence for two
// densities given as JSON files, printing one table row per n. Exit 0 when
// the gap decreases over the trailing half of the list and ends <= 1e-3.
int cmd_verify_theorem(const std::string& phi_y_path, const std::string& phi_z_path,
                       const std::vector<int>& n_list, std::ostream& table);

}  // namespace rer
