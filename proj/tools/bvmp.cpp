// Command-line driver: bvmp {solve|sweep-p|sweep-beta|verify|export} --config FILE [flags]

#include "bvmp/cli_io.hpp"
#include "bvmp/error.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Mountain-pass solutions of the discontinuous p-Laplacian problem and their BV limits"};
    app.set_version_flag("--version", bvmp::kVersion);
    app.require_subcommand(1);
    app.fallthrough();   // global flags may follow the subcommand

    std::string config, out, snapshots, snapshot, from;
    int threads = -1;
    bool echo = false;
    app.add_option("--config", config, "configuration file (key = value)")->required()->check(CLI::ExistingFile);
    app.add_option("--out", out, "output directory (overrides out.dir)");
    app.add_option("--threads", threads, "OpenMP threads, 0 = runtime default")->check(CLI::NonNegativeNumber);
    app.add_option("--snapshots", snapshots, "field snapshots to write")
        ->check(CLI::IsMember({"none", "final", "all"}));
    app.add_flag("--echo", echo, "print the effective configuration before running");

    auto* solve = app.add_subcommand("solve", "single mountain-pass solve and certificate");
    auto* sweep_p = app.add_subcommand("sweep-p", "continuation p -> 1 at fixed beta");
    auto* sweep_beta = app.add_subcommand("sweep-beta", "p-sweeps for every beta in the schedule, then beta -> 0");
    auto* verify = app.add_subcommand("verify", "certify a stored (u, z, rho) snapshot");
    verify->add_option("--snapshot", snapshot, "directory holding mesh.txt, field_u.csv, flux_z.csv, rho.csv")
        ->required()
        ->check(CLI::ExistingDirectory);
    auto* exp = app.add_subcommand("export", "re-emit every table listed in a manifest");
    exp->add_option("--from", from, "directory holding manifest.json")->required()->check(CLI::ExistingDirectory);

    CLI11_PARSE(app, argc, argv);

    bvmp::RunConfig cfg;
    try {
        cfg = bvmp::parse_config(config);
    } catch (const bvmp::Error& e) {
        std::cerr << fmt::format("error [{}]: {}\n", e.code(), e.what());
        if (!out.empty()) bvmp::write_error_record(out, "config", e.code(), e.what());
        return bvmp::kExitError;
    }
    if (!out.empty()) cfg.out_dir = out;
    if (threads >= 0) cfg.threads = threads;
    if (snapshots == "none") cfg.snapshots = bvmp::Snapshots::none;
    if (snapshots == "final") cfg.snapshots = bvmp::Snapshots::final;
    if (snapshots == "all") cfg.snapshots = bvmp::Snapshots::all;
    if (echo) std::cout << bvmp::config_echo(cfg) << std::flush;

    int code = bvmp::kExitError;
    if (solve->parsed()) code = bvmp::cmd_solve(cfg);
    else if (sweep_p->parsed()) code = bvmp::cmd_sweep_p(cfg);
    else if (sweep_beta->parsed()) code = bvmp::cmd_sweep_beta(cfg);
    else if (verify->parsed()) code = bvmp::cmd_verify(cfg, snapshot);
    else if (exp->parsed()) code = bvmp::cmd_export(cfg, from);

    if (code == bvmp::kExitError) std::cerr << fmt::format("failed; see {}/error.json\n", cfg.out_dir.string());
    else if (code == bvmp::kExitChecks) std::cerr << fmt::format("checks failed; see {}/manifest.json\n", cfg.out_dir.string());
    return code;
}
