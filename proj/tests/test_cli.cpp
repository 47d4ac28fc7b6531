#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bhh/cli.hpp"
#include "bhh/errors.hpp"
#include "bhh/simulate.hpp"

using namespace bhh;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("bhh_cli_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path write_config(const fs::path& dir, const std::string& text) {
    const auto p = dir / "run.cfg";
    std::ofstream(p) << text;
    return p;
}

struct Outcome {
    int status = 0;
    std::string out;
    std::string err;
};

Outcome invoke(const std::string& command, const fs::path& dir, const std::string& config,
               std::optional<std::uint64_t> seed = std::nullopt, bool dry = false) {
    cli::Invocation inv;
    inv.command = command;
    inv.config_path = write_config(dir, config).string();
    inv.out_dir = (dir / "out").string();
    inv.seed = seed;
    inv.dry_run = dry;
    std::ostringstream out;
    std::ostringstream err;
    Outcome o;
    o.status = cli::run(inv, out, err);
    o.out = out.str();
    o.err = err.str();
    return o;
}

nlohmann::json manifest(const fs::path& dir) { return nlohmann::json::parse(slurp(dir / "out" / "manifest.json")); }

}  // namespace

TEST_CASE("config parsing") {
    const auto c = cli::Config::parse("# comment\nengine.d = 2   # trailing\n\nhit.eps = 0.2, 0.1\n", "f.cfg");
    CHECK(c.get_int("engine.d", 1) == 2);
    CHECK(c.line_of("engine.d") == 2);
    CHECK(c.get_list("hit.eps", {}) == std::vector<double>{0.2, 0.1});
    CHECK(c.get_double("engine.T", 1.5) == 1.5);

    try {
        (void)cli::Config::parse("engine.d = 1\nengine.d = 2\n", "f.cfg");
        FAIL("duplicate accepted");
    } catch (const cli::ConfigFileError& e) {
        CHECK(e.line() == 2);
        CHECK(std::string(e.what()).find("f.cfg:2:") == 0);
    }
    CHECK_THROWS_AS(cli::Config::parse("engine.d 1\n"), cli::ConfigFileError);
    CHECK_THROWS_AS(cli::Config::parse("engine..d = 1\n"), cli::ConfigFileError);
    const auto bad = cli::Config::parse("\n\nengine.T = abc\n", "g.cfg");
    try {
        (void)bad.get_double("engine.T", 1.0);
        FAIL("bad number accepted");
    } catch (const cli::ConfigFileError& e) {
        CHECK(e.line() == 3);
    }
}

TEST_CASE("target parsing") {
    CHECK(cli::parse_target("point(0,0)").dim() == 2);
    const auto b = cli::parse_target("ball(0,0,0;0.5)");
    CHECK(b.distance(std::vector<double>{1.0, 0.0, 0.0}) == doctest::Approx(0.5));
    const auto u = cli::parse_target("box(0;1) + point(3)");
    CHECK(u.distance(std::vector<double>{3.0}) == 0.0);
    CHECK(u.distance(std::vector<double>{2.0}) == doctest::Approx(1.0));
    CHECK_THROWS(cli::parse_target("ball(0,0)"));
    CHECK_THROWS(cli::parse_target("blob(1)"));
    CHECK_THROWS(cli::parse_target("ball(0;-1)"));
}

TEST_CASE("unknown command prints usage with exit 64") {
    cli::Invocation inv;
    inv.command = "frobnicate";
    std::ostringstream out;
    std::ostringstream err;
    CHECK(cli::run(inv, out, err) == cli::kExitUsage);
    CHECK(err.str().find("usage:") != std::string::npos);
}

TEST_CASE("argument parsing") {
    std::ostringstream out;
    std::ostringstream err;
    const char* help[] = {"bhh", "--help"};
    CHECK(cli::main_entry(2, const_cast<char**>(help), out, err) == cli::kExitOk);
    const char* bad[] = {"bhh", "cov", "--no-such-flag"};
    CHECK(cli::main_entry(3, const_cast<char**>(bad), out, err) == cli::kExitUsage);
    const char* none[] = {"bhh"};
    CHECK(cli::main_entry(1, const_cast<char**>(none), out, err) == cli::kExitUsage);
}

TEST_CASE("dimension four is rejected with the well-posedness range") {
    const auto dir = scratch("d4");
    const auto o = invoke("verify-bounds", dir, "# header\nengine.d = 4\n");
    CHECK(o.status == cli::kExitValidation);
    CHECK(o.err.find(":2:") != std::string::npos);
    CHECK(o.err.find("d = 1, 2, 3") != std::string::npos);
    CHECK(manifest(dir)["exit_status"] == 1);
}

TEST_CASE("validation errors are line anchored") {
    const auto dir = scratch("anchored");
    auto o = invoke("cov", dir, "engine.d = 1\nregion.t0 = 0\n");
    CHECK(o.status == cli::kExitValidation);
    CHECK(o.err.find(":2: region.t0") != std::string::npos);
    o = invoke("cov", dir, "engine.d = 1\n\nengine.typo = 3\n");
    CHECK(o.status == cli::kExitValidation);
    CHECK(o.err.find(":3: engine.typo: unknown key") != std::string::npos);
    o = invoke("polarity", dir, "polarity.eps = 0.1, 0.2\n");
    CHECK(o.status == cli::kExitValidation);
    o = invoke("cov", dir, "engine.quad_rel_tol = 0\n");
    CHECK(o.status == cli::kExitValidation);
    o = invoke("dim", dir, "dim.D = 3\n");
    CHECK(o.status == cli::kExitValidation);
}

TEST_CASE("verify-bounds writes CSV, JSON and a manifest whose digests match") {
    const auto dir = scratch("verify");
    const auto o = invoke("verify-bounds", dir, "scan.pairs = 50\n");
    REQUIRE(o.status == cli::kExitOk);
    const auto m = manifest(dir);
    CHECK(m["command"] == "verify-bounds");
    CHECK(m["config"]["engine.d"] == 1);
    CHECK(m["config"]["region.t0"] == 0.5);
    CHECK(m["seed"] == 1);
    REQUIRE(m["outputs"].size() == 2);
    for (const auto& f : m["outputs"]) {
        const auto bytes = slurp(dir / "out" / f["file"].get<std::string>());
        CHECK(f["sha256"] == sim::sha256_hex(bytes));
    }
    const auto csv = slurp(dir / "out" / "envelope.csv");
    CHECK(csv.find("seed") != std::string::npos);
    CHECK(csv.find("k_max") != std::string::npos);
}

TEST_CASE("same config and seed give byte-identical CSV") {
    const std::string cfg = "hit.replicates = 100\nhit.n_times = 8\nhit.n_side = 8\nhit.D = 2\n";
    const auto a = scratch("det_a");
    const auto b = scratch("det_b");
    REQUIRE(invoke("polarity", a, cfg, 42).status == 0);
    REQUIRE(invoke("polarity", b, cfg, 42).status == 0);
    CHECK(slurp(a / "out" / "polarity.csv") == slurp(b / "out" / "polarity.csv"));
    CHECK(manifest(a)["seed"] == 42);
    REQUIRE(invoke("simulate", a, "sim.n_times = 4\nsim.n_side = 4\n", 3).status == 0);
    REQUIRE(invoke("simulate", b, "sim.n_times = 4\nsim.n_side = 4\n", 3).status == 0);
    CHECK(slurp(a / "out" / "field.csv") == slurp(b / "out" / "field.csv"));
    const auto s = sim::read_field_sample((a / "out" / "field.bhhf").string());
    CHECK(s.seed == 3);
    CHECK(s.values.size() == 16);
}

TEST_CASE("dry run validates without computing") {
    const auto dir = scratch("dry");
    const auto o = invoke("dim", dir, "dim.n_times = 100000000\n", std::nullopt, true);
    CHECK(o.status == cli::kExitOk);
    const auto m = manifest(dir);
    CHECK(m["dry_run"] == true);
    CHECK(m["outputs"].empty());
    CHECK(invoke("capacity", dir, "capacity.side = -1\n", std::nullopt, true).status == cli::kExitValidation);
}

TEST_CASE("every command runs on a small configuration") {
    const std::string cfg =
        "hit.replicates = 100\nhit.n_times = 8\nhit.n_side = 8\nscan.pairs = 20\ncapacity.side = 0.1\n"
        "dim.n_times = 1000\ndim.n_side = 10\ndim.nu = 3, 3.5, 4\nappendix.vectors = 20\nsim.n_times = 4\n"
        "sim.n_side = 4\ncov.n_times = 2\ncov.n_side = 2\n";
    for (const auto& c : cli::commands()) {
        CAPTURE(c);
        const auto dir = scratch("all_" + c);
        const auto o = invoke(c, dir, cfg);
        CHECK(o.status == cli::kExitOk);
        CHECK(!manifest(dir)["outputs"].empty());
    }
}
