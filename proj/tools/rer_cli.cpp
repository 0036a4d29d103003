#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rer/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Spectral estimation by relative-entropy-rate minimization"};
    app.require_subcommand(1);

    rer::CliOverrides ov;
    std::string config, data, out, experiment, out_dir, phi_y, phi_z;
    std::vector<int> n_list = {8, 16, 32, 64, 128, 256, 512, 1024};

    CLI::App* est = app.add_subcommand(
        "estimate", "Estimate a spectrum from data under a JSON config");
    est->add_option("--config", config, "config JSON path")->required();
    est->add_option("--data", data, "data CSV path, one row per step")->required();
    est->add_option("--out", out, "output spectrum CSV path")->required();
    est->add_option("--grid", ov.grid, "output grid size");
    est->add_option("--tol", ov.tol, "gradient-norm stopping tolerance");
    est->add_option("--max-iter", ov.max_iter, "iteration cap");

    CLI::App* sim = app.add_subcommand(
        "simulate", "Run a canned experiment: lines, lines-close or shaping");
    sim->add_option("experiment", experiment, "experiment name")->required();
    sim->add_option("--out", out_dir, "output directory")->required();
    sim->add_option("--seed", ov.seed, "base seed (run r uses seed + r)");
    sim->add_option("--runs", ov.runs, "number of Monte Carlo runs");
    sim->add_option("--grid", ov.grid, "output grid size");
    sim->add_option("--tol", ov.tol, "gradient-norm stopping tolerance");
    sim->add_option("--max-iter", ov.max_iter, "iteration cap");

    CLI::App* ver = app.add_subcommand(
        "verify-theorem",
        "Tabulate the partition sum against the time-domain divergence");
    ver->add_option("--phi-y", phi_y, "first density JSON path")->required();
    ver->add_option("--phi-z", phi_z, "second density JSON path")->required();
    ver->add_option("--n", n_list, "partition sizes")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : rer::kExitBadInput;
    }

    if (est->parsed()) return rer::cmd_estimate(config, data, out, ov);
    if (sim->parsed()) return rer::cmd_simulate(experiment, ov, out_dir);
    return rer::cmd_verify_theorem(phi_y, phi_z, n_list, std::cout);
}
