#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "robusta/dataset.hpp"
#include "robusta/surfaces.hpp"
#include "robusta/trees.hpp"

using namespace robusta;
namespace fs = std::filesystem;

namespace {

// The binary under test arrives as the last ctest argument; doctest leaves
// non-option arguments alone, so recover it from the process command line.
const std::string& cli_path() {
    static const std::string path = [] {
        std::ifstream in("/proc/self/cmdline", std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        const std::string raw = buf.str();
        std::vector<std::string> args;
        std::size_t start = 0;
        while (start < raw.size()) {
            const std::size_t stop = raw.find('\0', start);
            args.push_back(raw.substr(start, stop - start));
            if (stop == std::string::npos) break;
            start = stop + 1;
        }
        while (!args.empty() && args.back().empty()) args.pop_back();
        return args.empty() ? std::string() : args.back();
    }();
    return path;
}

std::string shell_quote(const fs::path& p) { return "'" + p.string() + "'"; }

int run_cli(const std::string& args, std::string& output) {
    const std::string command = shell_quote(cli_path()) + " " + args + " 2>&1";
    FILE* pipe = popen(command.c_str(), "r");
    REQUIRE(pipe != nullptr);
    output.clear();
    char chunk[4096];
    std::size_t got = 0;
    while ((got = fread(chunk, 1, sizeof chunk, pipe)) > 0) output.append(chunk, got);
    const int status = pclose(pipe);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct Fixture {
    fs::path dir, csv, schema, noise, delta_noise;
};

const Fixture& fixture() {
    static const Fixture fx = [] {
        Fixture f;
        f.dir = fs::temp_directory_path() / "robusta_cli_test";
        fs::remove_all(f.dir);
        fs::create_directories(f.dir);

        const Dataset grid = sample_grid(Surface::make(SurfaceName::cliff, 2), 8);
        f.csv = f.dir / "grid.csv";
        grid.save_csv(f.csv);
        f.schema = f.dir / "schema.json";
        std::ofstream(f.schema) << grid.schema_json();

        f.noise = f.dir / "noise.json";
        std::ofstream(f.noise) << R"({"models": [
            {"column": "x0", "kind": "normal", "std_dev": 0.3},
            {"column": "x1", "kind": "normal", "std_dev": 0.3}]})";
        f.delta_noise = f.dir / "delta.json";
        std::ofstream(f.delta_noise) << R"({"models": []})";
        return f;
    }();
    return fx;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
    return parse_csv(slurp(path));
}

} // namespace

TEST_CASE("the binary under test is reachable") {
    REQUIRE_FALSE(cli_path().empty());
    REQUIRE(fs::exists(cli_path()));
}

TEST_CASE("reweight scores a table and flags the extremes") {
    const Fixture& fx = fixture();
    const fs::path out = fx.dir / "reweight_out";
    std::string text;
    const int code = run_cli("reweight --dataset " + shell_quote(fx.csv) + " --schema " +
                                 shell_quote(fx.schema) + " --noise " + shell_quote(fx.noise) +
                                 " --seed 3 --out " + shell_quote(out),
                             text);
    CHECK(code == 0);
    CHECK(text.find("rows: 64") != std::string::npos);

    const auto rows = read_csv(out / "merits.csv");
    REQUIRE(rows.size() == 65); // header + one line per input row
    const auto& header = rows[0];
    REQUIRE(header.size() == 9);
    CHECK(header[0] == "row");
    CHECK(header[4] == "expectation");
    CHECK(header[7] == "best_min");
    int n_min = 0, n_max = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        n_min += rows[i][7] == "1";
        n_max += rows[i][8] == "1";
    }
    CHECK(n_min == 1);
    CHECK(n_max == 1);

    SUBCASE("thread count does not change the bytes") {
        const fs::path out4 = fx.dir / "reweight_out4";
        std::string text4;
        CHECK(run_cli("reweight --dataset " + shell_quote(fx.csv) + " --schema " +
                          shell_quote(fx.schema) + " --noise " + shell_quote(fx.noise) +
                          " --seed 3 --threads 4 --out " + shell_quote(out4),
                      text4) == 0);
        CHECK(slurp(out4 / "merits.csv") == slurp(out / "merits.csv"));
    }
}

TEST_CASE("delta noise reproduces the fitted targets") {
    const Fixture& fx = fixture();
    const fs::path out = fx.dir / "delta_out";
    std::string text;
    REQUIRE(run_cli("reweight --dataset " + shell_quote(fx.csv) + " --schema " +
                        shell_quote(fx.schema) + " --noise " + shell_quote(fx.delta_noise) +
                        " --out " + shell_quote(out),
                    text) == 0);
    const auto rows = read_csv(out / "merits.csv");
    REQUIRE(rows.size() == 65);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        // single unpruned tree interpolates, so expectation == target
        const double target = std::stod(rows[i][3]);
        const double expectation = std::stod(rows[i][4]);
        CHECK(expectation == doctest::Approx(target).epsilon(1e-12));
        CHECK(std::stod(rows[i][5]) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    }
}

TEST_CASE("surrogate export round-trips through the library") {
    const Fixture& fx = fixture();
    const fs::path out = fx.dir / "surrogate_out";
    std::string text;
    const int code = run_cli(
        "surrogate --dataset " + shell_quote(fx.csv) + " --schema " + shell_quote(fx.schema) +
            " --trees '{\"kind\": \"extra_trees\", \"n_trees\": 3}' --seed 11 --out " +
            shell_quote(out),
        text);
    CHECK(code == 0);
    CHECK(text.find("trees: 3") != std::string::npos);

    const std::string file_text = slurp(out / "forest.json");
    const Forest parsed = forest_from_json(file_text);
    CHECK(parsed.n_trees() == 3);

    // the same data, params and seed reproduce the export byte for byte
    TreeParams params;
    params.kind = TreeKind::extra_trees;
    params.n_trees = 3;
    params.rng_seed = 11;
    const Forest local = fit(Dataset::load(fx.csv, fx.schema), params);
    CHECK(file_text == forest_to_json(local) + "\n");
}

TEST_CASE("campaign runs end to end and reruns identically") {
    const Fixture& fx = fixture();
    const fs::path out1 = fx.dir / "campaign1";
    const fs::path out2 = fx.dir / "campaign2";
    const std::string args =
        "campaign --label S5 --planner sobol --budget 24 --seed 9 --out ";
    std::string text;
    REQUIRE(run_cli(args + shell_quote(out1), text) == 0);
    CHECK(text.find("iterations: 24") != std::string::npos);
    REQUIRE(run_cli(args + shell_quote(out2), text) == 0);

    CHECK(slurp(out1 / "campaign.csv") == slurp(out2 / "campaign.csv"));
    const auto summary = nlohmann::json::parse(slurp(out1 / "summary.json"));
    CHECK(summary.at("spec_label") == "S5");
    CHECK(summary.at("planner") == "sobol");
    CHECK(summary.at("n_iterations") == 24);
    CHECK(summary.at("golem_on") == true);
}

TEST_CASE("usage and input errors exit with code 2") {
    const Fixture& fx = fixture();
    std::string text;

    SUBCASE("no subcommand") {
        CHECK(run_cli("", text) == 2);
    }
    SUBCASE("missing required option") {
        CHECK(run_cli("reweight --dataset " + shell_quote(fx.csv), text) == 2);
        CHECK(text.find("--schema") != std::string::npos);
    }
    SUBCASE("nonexistent schema file names the path") {
        const fs::path ghost = fx.dir / "missing_schema.json";
        CHECK(run_cli("reweight --dataset " + shell_quote(fx.csv) + " --schema " +
                          shell_quote(ghost) + " --noise " + shell_quote(fx.noise),
                      text) == 2);
        CHECK(text.find("missing_schema.json") != std::string::npos);
    }
    SUBCASE("unknown benchmark label") {
        CHECK(run_cli("campaign --label S9 --out " + shell_quote(fx.dir / "x"), text) == 2);
    }
    SUBCASE("malformed noise spec") {
        const fs::path bad = fx.dir / "bad_noise.json";
        std::ofstream(bad) << R"({"models": [{"column": "x0", "kind": "warp"}]})";
        CHECK(run_cli("reweight --dataset " + shell_quote(fx.csv) + " --schema " +
                          shell_quote(fx.schema) + " --noise " + shell_quote(bad),
                      text) == 2);
        CHECK(text.find("error") != std::string::npos);
    }
    SUBCASE("unknown planner") {
        CHECK(run_cli("campaign --label S1 --planner bayes --out " +
                          shell_quote(fx.dir / "x"),
                      text) == 2);
    }
}
