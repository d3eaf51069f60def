#pragma once

// Configuration, bit-stable table and snapshot files, run manifests, and the
// five command drivers used by the command-line tool.

#include "bvmp/continuation.hpp"
#include "bvmp/mesh.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace bvmp {

inline constexpr const char* kVersion = "1.0.0";

enum class Snapshots { none, final, all };

struct RunConfig {
    Domain domain = Domain::rectangle(1.0, 1.0);
    int nx = 16;
    int ny = 16;
    ProblemParams params{};
    std::optional<double> beta0;       // unset: 0.5 * peak of a coarse beta = 0 pre-run
    int coarse = 0;                    // pre-run subdivisions; 0 means max(nx/2, 2)
    Schedule schedule{};
    std::filesystem::path out_dir = "out";
    Snapshots snapshots = Snapshots::final;
    int threads = 0;
    std::map<std::string, std::string> explicit_keys;  // as written in the file
};

/// Flat "key = value" text with section prefixes; '#' starts a comment.
/// Unknown keys, malformed lines and constraint violations throw Error("config").
RunConfig parse_config_text(const std::string& text, const std::string& origin = "<string>");
RunConfig parse_config(const std::filesystem::path& path);

/// Every key with its effective value, one "key = value" line each, sorted.
std::string config_echo(const RunConfig& cfg);

/// Fixed 17-significant-digit formatting used by every table.
std::string fmt_real(double x);

std::string sha256_hex(const std::filesystem::path& path);

// Snapshot files. Field rows: node, x, y, value, value_lo (the low-order part
// keeps double-double fields exact on round trip).
void write_field_csv(const std::filesystem::path& path, const FeField& u);
FeField read_field_csv(const std::filesystem::path& path, const MeshPtr& mesh);
void write_flux_csv(const std::filesystem::path& path, const FluxField& z);
FluxField read_flux_csv(const std::filesystem::path& path, const MeshPtr& mesh);
void write_rho_csv(const std::filesystem::path& path, const SelectionField& rho);
/// Nodal rho values as stored (one per node).
std::vector<double> read_rho_csv(const std::filesystem::path& path, std::size_t num_nodes);

void write_sweep_p_csv(const std::filesystem::path& path, const std::vector<RunRecord>& records,
                       const std::vector<double>& lr);
void write_sweep_beta_csv(const std::filesystem::path& path, const BetaSweepResult& r, const Schedule& s);

struct StageStatus {
    std::string name;
    std::string status;   // "ok", "checks_failed" or "error"
    std::string detail;
};

/// Manifest of one command run: config echo, version, timestamps, stages and
/// a SHA-256 for every file written.
class RunManifest {
public:
    RunManifest(std::string command, const RunConfig& cfg);

    void stage(std::string name, std::string status, std::string detail = {});
    /// Records a file (relative to the output directory) with its hash.
    void add_file(const std::filesystem::path& relative);
    void write(const std::filesystem::path& out_dir);

    const std::vector<std::string>& files() const { return files_; }

private:
    std::string command_;
    std::string echo_;
    std::string started_;
    std::filesystem::path out_dir_;
    std::vector<StageStatus> stages_;
    std::vector<std::string> files_;
    std::vector<std::string> hashes_;
};

/// Exit codes of the drivers.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitChecks = 2;

int cmd_solve(const RunConfig& cfg);
int cmd_sweep_p(const RunConfig& cfg);
int cmd_sweep_beta(const RunConfig& cfg);
/// Certifies the stored triple field_u.csv / flux_z.csv / rho.csv in `snapshot`.
int cmd_verify(const RunConfig& cfg, const std::filesystem::path& snapshot);
/// Re-reads every table listed in `from`/manifest.json, checks its hash and
/// re-emits it canonically into the output directory.
int cmd_export(const RunConfig& cfg, const std::filesystem::path& from);

/// Writes error.json ({code, message, stage}) into the output directory.
void write_error_record(const std::filesystem::path& out_dir, const std::string& stage, const std::string& code,
                        const std::string& message);

}  // namespace bvmp
