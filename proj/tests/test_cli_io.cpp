#include "bvmp/cli_io.hpp"
#include "bvmp/error.hpp"
#include "bvmp/mpass.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace bvmp;
namespace fs = std::filesystem;

namespace {
fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("bvmp_test_cli_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json load_json(const fs::path& p) {
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

const char* kModel = R"(# 1D model problem
domain.kind = interval
domain.nx = 16
params.q = 1.5
params.p_bar = 1.25
params.beta0 = 100
schedule.p = 1.25, 1.15, 1.05
schedule.beta = 0.2
schedule.flux_tol = 0.5
)";
}  // namespace

TEST_CASE("minimal config takes every default") {
    const RunConfig c = parse_config_text("domain.kind = rectangle\nparams.q = 1.5\nschedule.beta = 0.3, 0.1, 0\n");
    CHECK(c.domain.kind == DomainKind::rectangle);
    CHECK(c.nx == 16);
    CHECK(c.params.dim == 2);
    CHECK(c.params.beta == 0.3);
    CHECK(c.params.p == c.params.p_bar);
    CHECK(!c.beta0);
    CHECK(c.schedule.p == std::vector<double>{1.25, 1.125, 1.0625, 1.03125, 1.015625, 1.0078125});
    CHECK(c.schedule.solver.m == MpassConfig{}.m);
    const std::string echo = config_echo(c);
    CHECK(echo.find("params.beta0 = auto\n") != std::string::npos);
    CHECK(echo.find("solver.metric = hessian\n") != std::string::npos);
    CHECK(echo.find("schedule.beta = 0.29999999999999999, 0.10000000000000001, 0\n") != std::string::npos);
    // the echo is itself a valid config that reproduces the same echo
    CHECK(config_echo(parse_config_text(echo)) == echo);
}

TEST_CASE("constraint violations name the key and the invariant") {
    CHECK_THROWS_WITH_AS(parse_config_text("domain.kind = rectangle\nparams.q = 2.5\n"),
                         doctest::Contains("params.q: q must satisfy 1 < q < N/(N-1)"), Error);
    CHECK_THROWS_WITH_AS(parse_config_text("params.q = 1.5\nparams.p_bar = 1.6\n"),
                         doctest::Contains("params.p_bar: p_bar must satisfy 1 < p_bar < q"), Error);
    CHECK_THROWS_WITH_AS(parse_config_text("params.q = 1.5\nschedule.p = 1.1, 1.2\n"), doctest::Contains("schedule.p"), Error);
    CHECK_THROWS_WITH_AS(parse_config_text("params.beta0 = 0.1\nschedule.beta = 0.2\n"),
                         doctest::Contains("params.beta0"), Error);
    CHECK_THROWS_WITH_AS(parse_config_text("domain.nx = 1\n"), doctest::Contains("domain.nx"), Error);
    CHECK_THROWS_WITH_AS(parse_config_text("solver.m = 3\n"), doctest::Contains("solver"), Error);
    CHECK_THROWS_WITH_AS(parse_config_text("schedule.lr = 1, 2.5\n"), doctest::Contains("schedule.lr"), Error);
}

TEST_CASE("parse errors carry the line number") {
    CHECK_THROWS_WITH_AS(parse_config_text("params.q = 1.5\n\n# note\nparams.qq = 1\n", "run.cfg"),
                         doctest::Contains("run.cfg:4: unknown key 'params.qq'"), Error);
    CHECK_THROWS_WITH_AS(parse_config_text("params.q 1.5\n"), doctest::Contains("<string>:1: expected 'key = value'"), Error);
    CHECK_THROWS_WITH_AS(parse_config_text("params.q = 1.5x\n"), doctest::Contains("<string>:1: params.q"), Error);
    CHECK_THROWS_WITH_AS(parse_config_text("domain.nx = 8\ndomain.nx = 9\n"), doctest::Contains(":2: duplicate key"), Error);
    CHECK_THROWS_WITH_AS(parse_config_text("out.snapshots = some\n"), doctest::Contains("none, final or all"), Error);
    CHECK_THROWS_WITH_AS(parse_config("/nonexistent/bvmp.cfg"), doctest::Contains("cannot open"), Error);
    try {
        parse_config_text("bogus = 1\n");
    } catch (const Error& e) {
        CHECK(e.code() == "config");
    }
}

TEST_CASE("number formatting and hashing") {
    CHECK(fmt_real(0.1) == "0.10000000000000001");
    CHECK(fmt_real(1.0) == "1");
    CHECK(fmt_real(-2.5e-300) == "-2.5e-300");
    CHECK(fmt_real(1.0 / 3.0) == "0.33333333333333331");
    CHECK(fmt_real(std::numeric_limits<double>::quiet_NaN()) == "nan");
    const fs::path dir = scratch("hash");
    fs::create_directories(dir);
    std::ofstream(dir / "abc.txt", std::ios::binary) << "abc";
    CHECK(sha256_hex(dir / "abc.txt") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("snapshot tables round trip exactly") {
    const fs::path dir = scratch("roundtrip");
    fs::create_directories(dir);
    const MeshPtr m = build_rect_mesh(1.0, 1.0, 5, 4);
    std::vector<double> hi(m->num_nodes(), 0.0), lo(m->num_nodes(), 0.0);
    for (int i : m->interior_nodes()) {
        hi[i] = std::sqrt(2.0) * i + 1.0 / 3.0;
        lo[i] = 1e-17 * (i % 5) - 3e-18;
    }
    const FeField u(m, hi, lo, true);
    write_field_csv(dir / "u.csv", u);
    const FeField r = read_field_csv(dir / "u.csv", m);
    CHECK(std::equal(r.values().begin(), r.values().end(), u.values().begin()));
    CHECK(std::equal(r.low().begin(), r.low().end(), u.low().begin()));
    CHECK(r.dirichlet());

    const FluxField z = extract_flux(u, 1.3);
    write_flux_csv(dir / "z.csv", z);
    const FluxField zr = read_flux_csv(dir / "z.csv", m);
    for (std::size_t e = 0; e < m->num_elements(); ++e) CHECK(zr[e] == z[e]);

    ProblemParams P;
    P.q = 1.5;
    P.beta = 3.0;
    const SelectionField rho = selection_rho(u, P);
    write_rho_csv(dir / "rho.csv", rho);
    const auto rr = read_rho_csv(dir / "rho.csv", m->num_nodes());
    CHECK(std::equal(rr.begin(), rr.end(), rho.nodal().begin()));

    // second write of the re-read data is byte-identical
    write_field_csv(dir / "u2.csv", r);
    CHECK(slurp(dir / "u.csv") == slurp(dir / "u2.csv"));
    CHECK(slurp(dir / "u.csv").rfind("# bvmp 1.0.0 field columns=node,x,y,value,value_lo\n", 0) == 0);

    CHECK_THROWS_AS(read_field_csv(dir / "u.csv", build_rect_mesh(1.0, 1.0, 3, 3)), Error);
    CHECK_THROWS_AS(read_flux_csv(dir / "missing.csv", m), Error);
}

TEST_CASE("solve on the two-element model matches the segment oracle") {
    RunConfig cfg = parse_config_text(
        "domain.kind = interval\ndomain.nx = 2\nparams.q = 1.8\nparams.p_bar = 1.5\nparams.beta = 0.2\n");
    cfg.out_dir = scratch("solve");
    REQUIRE(cmd_solve(cfg) == kExitOk);
    const auto solve = load_json(cfg.out_dir / "solve.json");
    const MeshPtr line = build_interval_mesh(1.0, 2);
    const FeField e = find_endpoint(cfg.params.with_beta(solve["beta0"].get<double>()), line, default_bump(line));
    const OracleResult o = brute_saddle_oracle(cfg.params, line, e, 2001);
    CHECK(solve["c"].get<double>() == doctest::Approx(o.level).epsilon(1e-4));
    CHECK(solve["endpoint"]["p_over_p_minus_1"].get<double>() == doctest::Approx(3.0));
    const auto manifest = load_json(cfg.out_dir / "manifest.json");
    for (const auto& f : manifest["files"])
        CHECK(sha256_hex(cfg.out_dir / f["path"].get<std::string>()) == f["sha256"].get<std::string>());
    CHECK(manifest["version"] == kVersion);
    CHECK(manifest["config"]["params.q"] == "1.8");
}

TEST_CASE("sweep, verify, corrupt, export") {
    RunConfig cfg = parse_config_text(kModel);
    cfg.out_dir = scratch("sweep_a");
    REQUIRE(cmd_sweep_p(cfg) == kExitOk);
    for (const char* f : {"mesh.txt", "sweep_p.csv", "trace.csv", "certificate.json", "limit_report.json",
                          "field_u.csv", "flux_z.csv", "rho.csv", "manifest.json"})
        CHECK_MESSAGE(fs::exists(cfg.out_dir / f), f);

    SUBCASE("identical configs give identical bytes") {
        RunConfig again = cfg;
        again.out_dir = scratch("sweep_b");
        REQUIRE(cmd_sweep_p(again) == kExitOk);
        for (const char* f : {"sweep_p.csv", "trace.csv", "certificate.json", "limit_report.json", "field_u.csv"})
            CHECK_MESSAGE(slurp(cfg.out_dir / f) == slurp(again.out_dir / f), f);
    }
    SUBCASE("untampered snapshot passes every certificate residual") {
        RunConfig v = cfg;
        v.out_dir = scratch("verify_ok");
        CHECK(cmd_verify(v, cfg.out_dir) == kExitOk);
        const auto cert = load_json(v.out_dir / "certificate.json");
        CHECK(cert["all_pass"] == true);
    }
    SUBCASE("flux scaled by 1.5 fails residual (iii)") {
        const fs::path bad = scratch("tampered");
        fs::create_directories(bad);
        for (const char* f : {"mesh.txt", "field_u.csv", "rho.csv", "snapshot.json"}) fs::copy_file(cfg.out_dir / f, bad / f);
        std::ifstream mi(cfg.out_dir / "mesh.txt");
        const MeshPtr m = read_mesh(mi);
        write_flux_csv(bad / "flux_z.csv", read_flux_csv(cfg.out_dir / "flux_z.csv", m).scaled(1.5));
        RunConfig v = cfg;
        v.out_dir = scratch("verify_bad");
        CHECK(cmd_verify(v, bad) == kExitChecks);
        const auto cert = load_json(v.out_dir / "certificate.json");
        CHECK(cert["flux_excess"]["pass"] == false);
        CHECK(cert["clarke_violation"]["pass"] == true);
    }
    SUBCASE("export re-emits every table unchanged") {
        RunConfig x = cfg;
        x.out_dir = scratch("export");
        CHECK(cmd_export(x, cfg.out_dir) == kExitOk);
        for (const char* f : {"sweep_p.csv", "field_u.csv", "flux_z.csv", "rho.csv", "mesh.txt"})
            CHECK_MESSAGE(slurp(cfg.out_dir / f) == slurp(x.out_dir / f), f);
    }
    SUBCASE("export refuses a file whose hash changed") {
        const fs::path copy = scratch("export_src");
        fs::copy(cfg.out_dir, copy, fs::copy_options::recursive);
        std::ofstream(copy / "sweep_p.csv", std::ios::app) << "garbage\n";
        RunConfig x = cfg;
        x.out_dir = scratch("export_bad");
        CHECK(cmd_export(x, copy) == kExitError);
        CHECK(load_json(x.out_dir / "error.json")["code"] == "io");
    }
}

TEST_CASE("a failing stage leaves an error record and partial outputs") {
    RunConfig cfg = parse_config_text(std::string(kModel) + "solver.max_iter = 3\n");
    cfg.out_dir = scratch("budget");
    CHECK(cmd_sweep_p(cfg) == kExitError);
    const auto err = load_json(cfg.out_dir / "error.json");
    CHECK(err["code"] == "budget");
    CHECK(err["stage"] == "sweep");
    CHECK(fs::exists(cfg.out_dir / "sweep_p.csv"));
    const auto manifest = load_json(cfg.out_dir / "manifest.json");
    bool saw_error = false;
    for (const auto& s : manifest["stages"]) saw_error = saw_error || s["status"] == "error";
    CHECK(saw_error);
}
