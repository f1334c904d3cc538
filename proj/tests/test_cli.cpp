#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "lpsv/io.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
    const char* p = std::getenv("LPSV_CLI_PATH");
    REQUIRE(p != nullptr);
    return p;
}

fs::path scratch_dir() {
    const fs::path dir = fs::temp_directory_path() / "lpsv_cli_test";
    fs::create_directories(dir);
    return dir;
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = cli_path() + " " + args + " >" + log.string() +
                            " 2>" + log.string() + ".err";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

// a fast scenario: tiny portfolio, tiny grid, all three core tasks
std::string small_scenario(const std::string& out_dir, bool with_seed = true,
                           const std::string& extra = "") {
    std::string s = R"({
  "label": "cli-smoke",
  "coefficients": {"k": 1.0, "theta": 0.2, "xi": 0.4, "r": 0.05,
                   "rho1": 0.3, "rho2": 0.2, "rho3": 0.5},
  "vol_preset": "ou",
  "initial": {"type": "product", "x_scale": 0.5, "y_mean": 0.2, "y_std": 0.1},
  "horizon": 0.1,
  "n_steps": 50,
  "particles": 500,)";
    if (with_seed) s += "\n  \"seed\": 42,";
    s += R"(
  "solver": {"dx": 0.05, "dy": 0.05, "x_max": 3.0, "y_min": -1.0, "y_max": 1.5},
  "tasks": ["simulate", "solve", "compare"],
  "compare_tolerance": 0.05,
  "output_dir": ")" + out_dir + "\"" + extra + "\n}\n";
    return s;
}

} // namespace

TEST_CASE("validate accepts a good scenario and run produces the artifacts") {
    const fs::path dir = scratch_dir();
    const fs::path cfg = dir / "good.json";
    const fs::path out = dir / "run1";
    fs::remove_all(out);
    write_file(cfg, small_scenario(out.string()));

    REQUIRE(run_cli("validate " + cfg.string(), dir / "validate.log") == 0);
    REQUIRE(run_cli("run " + cfg.string(), dir / "run.log") == 0);

    const std::string loss = slurp(out / "loss.csv");
    REQUIRE(loss.rfind("t,loss\n", 0) == 0);
    // header + one line per grid time (t = 0 .. n_steps)
    REQUIRE(std::count(loss.begin(), loss.end(), '\n') == 1 + 50 + 1);
    REQUIRE(fs::exists(out / "spde_loss.csv"));
    REQUIRE(fs::exists(out / "grid.csv"));
    REQUIRE(fs::exists(out / "grid.lpsv"));
    REQUIRE(fs::exists(out / "manifest.json"));

    // the comparison report lands in reports.jsonl with a verdict
    const std::string reports = slurp(out / "reports.jsonl");
    const auto rep = nlohmann::json::parse(reports.substr(0, reports.find('\n')));
    REQUIRE(rep.contains("passed"));
    REQUIRE(rep.contains("observed"));

    // the manifest records the config hash and the output files
    const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
    REQUIRE(manifest.at("config_fnv1a").get<std::uint64_t>() ==
            lpsv::fnv1a_hash(small_scenario(out.string())));
    bool lists_loss = false;
    for (const auto& f : manifest.at("files"))
        if (f.get<std::string>() == "loss.csv") lists_loss = true;
    REQUIRE(lists_loss);
}

TEST_CASE("runs are reproducible and the seed override changes them") {
    const fs::path dir = scratch_dir();
    const fs::path cfg = dir / "repro.json";
    const fs::path out_a = dir / "repro_a";
    const fs::path out_b = dir / "repro_b";
    const fs::path out_c = dir / "repro_c";
    for (const auto& d : {out_a, out_b, out_c}) fs::remove_all(d);
    write_file(cfg, small_scenario("unused"));

    REQUIRE(run_cli("run " + cfg.string() + " --out " + out_a.string(),
                    dir / "a.log") == 0);
    REQUIRE(run_cli("run " + cfg.string() + " --out " + out_b.string(),
                    dir / "b.log") == 0);
    REQUIRE(run_cli("run " + cfg.string() + " --out " + out_c.string() +
                        " --seed-override 777",
                    dir / "c.log") == 0);
    REQUIRE(slurp(out_a / "loss.csv") == slurp(out_b / "loss.csv"));
    REQUIRE(slurp(out_a / "loss.csv") != slurp(out_c / "loss.csv"));
}

TEST_CASE("bad configurations exit with code 1 and a JSON diagnostic") {
    const fs::path dir = scratch_dir();

    SECTION("out-of-range correlation names the field") {
        const fs::path cfg = dir / "bad_rho1.json";
        std::string text = small_scenario((dir / "x").string());
        const auto pos = text.find("\"rho1\": 0.3");
        text.replace(pos, 11, "\"rho1\": 1.5");
        write_file(cfg, text);
        REQUIRE(run_cli("validate " + cfg.string(), dir / "r1.log") == 1);
        const std::string err = slurp(fs::path(dir / "r1.log.err"));
        const auto j = nlohmann::json::parse(err);
        REQUIRE(j.at("error") == "validation");
        REQUIRE(j.at("message").get<std::string>().find("rho1") !=
                std::string::npos);
    }
    SECTION("unknown keys are rejected") {
        const fs::path cfg = dir / "bad_key.json";
        write_file(cfg, small_scenario((dir / "x").string(), true,
                                       ",\n  \"particel_count\": 7"));
        REQUIRE(run_cli("validate " + cfg.string(), dir / "k.log") == 1);
        REQUIRE(slurp(fs::path(dir / "k.log.err")).find("particel_count") !=
                std::string::npos);
    }
    SECTION("stochastic tasks without a seed are rejected") {
        const fs::path cfg = dir / "no_seed.json";
        write_file(cfg, small_scenario((dir / "x").string(), false));
        REQUIRE(run_cli("validate " + cfg.string(), dir / "s.log") == 1);
        REQUIRE(slurp(fs::path(dir / "s.log.err")).find("seed") !=
                std::string::npos);
    }
    SECTION("unreadable input exits 2") {
        REQUIRE(run_cli("run " + (dir / "missing.json").string(),
                        dir / "m.log") == 2);
    }
}

TEST_CASE("csv and manifest writers") {
    const fs::path dir = scratch_dir();
    lpsv::write_loss_csv(dir / "unit_loss.csv", {0.0, 0.5, 1.0},
                         {0.0, 0.25, 0.5});
    const std::string text = slurp(dir / "unit_loss.csv");
    REQUIRE(text == "t,loss\n0,0\n0.5,0.25\n1,0.5\n");
    REQUIRE_THROWS_AS(lpsv::write_loss_csv(dir / "u.csv", {0.0}, {0.0, 1.0}),
                      lpsv::ShapeError);

    // FNV-1a reference values
    REQUIRE(lpsv::fnv1a_hash("") == 14695981039346656037ull);
    REQUIRE(lpsv::fnv1a_hash("a") == 12638187200555641996ull);

    lpsv::write_manifest(dir, "{}", {1, 2}, {"a.csv"});
    const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
    REQUIRE(m.at("format_version") == 1);
    REQUIRE(m.at("seeds").size() == 2);
}
