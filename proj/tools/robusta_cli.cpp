#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "robusta/campaign.hpp"
#include "robusta/common.hpp"
#include "robusta/dataset.hpp"
#include "robusta/estimator.hpp"
#include "robusta/noise.hpp"
#include "robusta/scalarize.hpp"
#include "robusta/surfaces.hpp"
#include "robusta/trees.hpp"

namespace {

using namespace robusta;
namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInputError("cannot open file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Accepts inline JSON ("{...}") or a path to a JSON file. Fields: kind,
// n_trees, max_depth (null or absent for unbounded), min_samples_leaf,
// rng_seed (defaults to --seed).
TreeParams parse_tree_params(const std::string& arg, std::uint64_t seed) {
    TreeParams params;
    params.rng_seed = seed;
    if (arg.empty()) return params;
    const std::string text = arg.front() == '{' ? arg : read_file(arg);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
        params.kind = tree_kind_from_string(j.value("kind", "regression_tree"));
        params.n_trees = j.value("n_trees", 1);
        if (j.contains("max_depth") && !j.at("max_depth").is_null())
            params.max_depth = j.at("max_depth").get<int>();
        params.min_samples_leaf = j.value("min_samples_leaf", 1);
        params.rng_seed = j.value("rng_seed", seed);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInputError(std::string("invalid tree config: ") + e.what());
    }
    return params;
}

void warn_to_stderr(const std::string& message) {
    std::cerr << "warning: " << message << "\n";
}

fs::path prepare_out_dir(const std::string& out) {
    fs::path dir = out.empty() ? fs::path(".") : fs::path(out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw InvalidInputError("cannot create output directory '" + dir.string() + "'");
    return dir;
}

std::string cell_text(const Dataset& data, std::size_t row, std::size_t col) {
    const double v = data.rows[row][col];
    if (data.columns[col].kind == ColumnKind::categorical)
        return csv_escape(data.columns[col].categories[static_cast<std::size_t>(v)]);
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}

// ---------------------------------------------------------------- reweight

struct CommonArgs {
    std::string dataset, schema, noise, trees, out;
    std::uint64_t seed = 0;
    int threads = 1;
};

int reweight_cmd(const CommonArgs& args) {
    Dataset data = Dataset::load(args.dataset, args.schema);
    const auto noise = load_noise_spec(read_file(args.noise), data.columns);
    const TreeParams params = parse_tree_params(args.trees, args.seed);
    const Forest forest = fit(data, params);
    const ReweightResult result =
        reweight(data, forest, noise, args.threads, warn_to_stderr);

    const fs::path dir = prepare_out_dir(args.out);
    const fs::path csv = dir / "merits.csv";
    std::ofstream outf(csv);
    if (!outf) throw InvalidInputError("cannot open '" + csv.string() + "' for writing");
    outf.precision(17);
    outf << "row";
    for (const auto& c : data.columns) outf << ',' << csv_escape(c.name);
    outf << ',' << csv_escape(data.target_name)
         << ",expectation,output_std,expectation_std,best_min,best_max\n";
    for (std::size_t i = 0; i < data.n_rows(); ++i) {
        const RobustEstimate& est = result.estimates[i];
        outf << i;
        for (std::size_t d = 0; d < data.n_cols(); ++d) outf << ',' << cell_text(data, i, d);
        outf << ',' << data.targets[i] << ',' << est.expectation << ',' << est.output_std
             << ',' << est.expectation_std << ',' << (i == result.argmin ? 1 : 0) << ','
             << (i == result.argmax ? 1 : 0) << '\n';
    }
    if (!outf) throw InvalidInputError("failed writing '" + csv.string() + "'");

    std::cout << "rows: " << data.n_rows() << "\n"
              << "lowest robust merit:  row " << result.argmin << " (expectation "
              << result.estimates[result.argmin].expectation << ")\n"
              << "highest robust merit: row " << result.argmax << " (expectation "
              << result.estimates[result.argmax].expectation << ")\n"
              << "wrote " << csv.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------- surrogate

int surrogate_cmd(const CommonArgs& args) {
    Dataset data = Dataset::load(args.dataset, args.schema);
    const TreeParams params = parse_tree_params(args.trees, args.seed);
    const Forest forest = fit(data, params);

    const fs::path dir = prepare_out_dir(args.out);
    const fs::path path = dir / "forest.json";
    std::ofstream outf(path);
    if (!outf) throw InvalidInputError("cannot open '" + path.string() + "' for writing");
    outf << forest_to_json(forest) << "\n";
    if (!outf) throw InvalidInputError("failed writing '" + path.string() + "'");

    std::size_t tiles = 0;
    for (const auto& t : forest.trees) tiles += t.size();
    std::cout << "trees: " << forest.n_trees() << "\ntiles: " << tiles << "\nwrote "
              << path.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------- campaign

struct CampaignArgs {
    std::string label = "S1";
    std::string planner = "grid";
    int budget = 0;  // 0: 196 continuous, 64 discrete
    bool noisy = false;
    bool golem_off = false;
    int stride = 1;
    std::string trees, out;
    std::uint64_t seed = 0;
};

int default_budget(const BenchmarkSpec& spec, int requested) {
    if (requested > 0) return requested;
    return spec.surface.is_discrete() ? 64 : 196;
}

int campaign_cmd(const CampaignArgs& args) {
    const BenchmarkSpec spec = BenchmarkSpec::table_entry(args.label);
    PlannerConfig planner;
    planner.kind = planner_kind_from_string(args.planner);
    planner.budget = default_budget(spec, args.budget);
    planner.seed = args.seed;
    CampaignConfig config;
    config.tree_params = parse_tree_params(args.trees, args.seed);
    config.golem_on = !args.golem_off;
    config.noisy = args.noisy;
    config.seed = args.seed;
    config.regret_stride = args.stride;

    const CampaignRecord record = run_campaign(spec, planner, config);
    const fs::path dir = prepare_out_dir(args.out);
    record.save_csv(dir / "campaign.csv");
    std::ofstream outf(dir / "summary.json");
    outf << record.summary_json() << "\n";
    if (!outf) throw InvalidInputError("failed writing campaign summary");

    const std::size_t best = record.incumbent.back();
    std::cout << "iterations: " << record.n_iterations() << "\nincumbent: row " << best
              << " (observed " << record.observed[best] << ")\nwrote "
              << (dir / "campaign.csv").string() << " and " << (dir / "summary.json").string()
              << "\n";
    return 0;
}

// ---------------------------------------------------------------- benchmark

struct BenchmarkArgs {
    std::vector<std::string> labels;    // default: all S1..S8
    std::vector<std::string> planners;  // default: grid, random
    int repeats = 50;
    int budget = 0;
    int density = 200;
    int n_boot = 10000;
    bool noisy = false;
    std::string trees, out, cache_dir;
    std::uint64_t seed = 0;
};

int benchmark_cmd(const BenchmarkArgs& args) {
    const std::vector<std::string> labels =
        args.labels.empty() ? BenchmarkSpec::labels() : args.labels;
    std::vector<std::string> planners = args.planners;
    if (planners.empty()) planners = {"grid", "random"};
    if (args.repeats <= 0) throw InvalidInputError("--repeats must be positive");

    const fs::path dir = prepare_out_dir(args.out);
    const fs::path cache =
        args.cache_dir.empty() ? dir / "gt_cache" : fs::path(args.cache_dir);

    struct Row {
        std::string label, planner;
        bool golem;
        int repeat;
        double regret;
        double normalized = 0.0;
    };
    std::vector<Row> rows;
    struct Stat {
        std::string label, planner;
        ImprovementResult result;
    };
    std::vector<Stat> stats;

    for (const auto& label : labels) {
        const BenchmarkSpec spec = BenchmarkSpec::table_entry(label);
        const GroundTruth truth =
            ground_truth_cached(spec, cache, args.density, 0);
        PlannerConfig planner;
        planner.budget = default_budget(spec, args.budget);
        planner.seed = args.seed;
        CampaignConfig config;
        config.tree_params = parse_tree_params(args.trees, args.seed);
        config.noisy = args.noisy;
        config.seed = args.seed;

        const std::size_t label_begin = rows.size();
        for (const auto& planner_name : planners) {
            planner.kind = planner_kind_from_string(planner_name);
            const RepeatSummary summary =
                run_repeats(spec, planner, config, truth, args.repeats);
            for (int r = 0; r < args.repeats; ++r) {
                rows.push_back({label, planner_name, true, r, summary.regrets_with[r]});
                rows.push_back({label, planner_name, false, r, summary.regrets_without[r]});
            }
            if (args.repeats > 1) {
                stats.push_back({label, planner_name, summary.improvement});
                std::cout << label << " " << planner_name
                          << ": P(better with estimator) = " << summary.improvement.probability
                          << (summary.improvement.significant ? " (significant)"
                                                              : " (not significant)")
                          << "\n";
            } else {
                std::cout << label << " " << planner_name
                          << ": statistics suppressed (repeats=1), regret with="
                          << summary.regrets_with[0]
                          << " without=" << summary.regrets_without[0] << "\n";
            }
        }
        // regrets are comparable only within one surface
        std::vector<double> group;
        for (std::size_t i = label_begin; i < rows.size(); ++i)
            group.push_back(rows[i].regret);
        const std::vector<double> scaled = normalize_regrets(group);
        for (std::size_t i = label_begin; i < rows.size(); ++i)
            rows[i].normalized = scaled[i - label_begin];
    }

    {
        std::ofstream outf(dir / "regrets.csv");
        outf.precision(17);
        outf << "label,planner,golem,repeat,regret,normalized_regret\n";
        for (const Row& row : rows)
            outf << row.label << ',' << row.planner << ',' << (row.golem ? 1 : 0) << ','
                 << row.repeat << ',' << row.regret << ',' << row.normalized << '\n';
        if (!outf) throw InvalidInputError("failed writing regrets.csv");
    }
    if (args.repeats > 1) {
        std::ofstream outf(dir / "improvements.csv");
        outf.precision(17);
        outf << "label,planner,probability,significant\n";
        for (const Stat& s : stats)
            outf << s.label << ',' << s.planner << ',' << s.result.probability << ','
                 << (s.result.significant ? 1 : 0) << '\n';
        if (!outf) throw InvalidInputError("failed writing improvements.csv");
    }
    std::cout << "wrote " << (dir / "regrets.csv").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------- scaling

struct ScalingArgs {
    std::string out;
    std::uint64_t seed = 0;
};

struct ScaleCase {
    std::string variable;
    int n_queries, n_trees, n_train, dims;
};

double time_batch(const ScaleCase& c, std::uint64_t seed, double& leaves_out) {
    Rng rng(mix_seed(seed, 0xCA5E));
    Dataset data;
    for (int d = 0; d < c.dims; ++d)
        data.columns.push_back({"x" + std::to_string(d), ColumnKind::continuous, {}});
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < c.n_train; ++i) {
        std::vector<double> row(c.dims);
        for (double& v : row) v = unit(rng);
        data.add_row(row, unit(rng));
    }
    TreeParams params;
    params.n_trees = c.n_trees;
    params.rng_seed = seed;
    const Forest forest = fit(data, params);
    double leaves = 0.0;
    for (const auto& t : forest.trees) leaves += static_cast<double>(t.size());
    leaves_out = leaves / static_cast<double>(forest.n_trees());

    std::vector<NoiseModel> noise(c.dims, NoiseModel::make_normal(0.1));
    std::vector<std::vector<double>> queries(c.n_queries, std::vector<double>(c.dims));
    for (auto& q : queries)
        for (double& v : q) v = unit(rng);

    const auto start = std::chrono::steady_clock::now();
    const TileEvaluator evaluator(forest);
    double sink = 0.0;
    for (const auto& q : queries) sink += evaluator.estimate(q, noise).expectation;
    const auto stop = std::chrono::steady_clock::now();
    if (!std::isfinite(sink)) throw InternalConsistencyError("scaling batch produced non-finite merits");
    return std::chrono::duration<double>(stop - start).count();
}

int scaling_cmd(const ScalingArgs& args) {
    // base point: 2500 queries, 10 trees, 256 leaves per tree, 2 dims
    const ScaleCase base{"", 2500, 10, 256, 2};
    std::vector<ScaleCase> cases;
    for (int s : {1, 625, 1250, 2500, 5000})
        cases.push_back({"queries", s, base.n_trees, base.n_train, base.dims});
    for (int t : {5, 10, 20, 40})
        cases.push_back({"trees", base.n_queries, t, base.n_train, base.dims});
    for (int m : {64, 128, 256, 512})
        cases.push_back({"leaves", base.n_queries, base.n_trees, m, base.dims});
    for (int d : {1, 2, 4, 8})
        cases.push_back({"dims", base.n_queries, base.n_trees, base.n_train, d});

    double warm = 0.0;
    time_batch({"warmup", 32, 2, 32, 2}, args.seed, warm);

    const fs::path dir = prepare_out_dir(args.out);
    std::ofstream outf(dir / "scaling.csv");
    outf.precision(17);
    outf << "variable,n_queries,n_trees,leaves_per_tree,dims,seconds,microseconds_per_query\n";
    for (const ScaleCase& c : cases) {
        double leaves = 0.0;
        const double seconds = time_batch(c, args.seed, leaves);
        outf << c.variable << ',' << c.n_queries << ',' << c.n_trees << ',' << leaves << ','
             << c.dims << ',' << seconds << ','
             << seconds * 1e6 / static_cast<double>(c.n_queries) << '\n';
        std::cout << c.variable << ": S=" << c.n_queries << " T=" << c.n_trees
                  << " M=" << leaves << " D=" << c.dims << " -> " << seconds << " s\n";
    }
    if (!outf) throw InvalidInputError("failed writing scaling.csv");
    std::cout << "wrote " << (dir / "scaling.csv").string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"analytic robustness estimates for tree-ensemble surrogates"};
    app.require_subcommand(1);

    CommonArgs common;
    CampaignArgs campaign_args;
    BenchmarkArgs bench_args;
    ScalingArgs scaling_args;

    auto add_common = [&](CLI::App* sub, bool needs_noise) {
        sub->add_option("--dataset", common.dataset, "input CSV table")->required();
        sub->add_option("--schema", common.schema, "JSON sidecar describing columns")->required();
        if (needs_noise)
            sub->add_option("--noise", common.noise, "per-column noise spec JSON")->required();
        sub->add_option("--trees", common.trees, "tree params as inline JSON or a file path");
        sub->add_option("--seed", common.seed, "RNG seed");
        sub->add_option("--threads", common.threads, "worker threads for row batches");
        sub->add_option("--out", common.out, "output directory (default .)");
    };

    CLI::App* reweight_sub =
        app.add_subcommand("reweight", "re-score a result table by robust merit");
    add_common(reweight_sub, true);

    CLI::App* surrogate_sub =
        app.add_subcommand("surrogate", "fit a tree ensemble and export it as JSON");
    add_common(surrogate_sub, false);

    CLI::App* campaign_sub =
        app.add_subcommand("campaign", "run one planned optimization campaign");
    campaign_sub->add_option("--label", campaign_args.label, "benchmark label S1..S8");
    campaign_sub->add_option("--planner", campaign_args.planner,
                             "grid|random|sobol|random_edge|sobol_edge|genetic");
    campaign_sub->add_option("--budget", campaign_args.budget,
                             "evaluations (default 196 continuous, 64 discrete)");
    campaign_sub->add_flag("--noisy", campaign_args.noisy, "realize queries from the noise models");
    campaign_sub->add_flag("--no-golem", campaign_args.golem_off,
                           "pick incumbents by raw observations");
    campaign_sub->add_option("--stride", campaign_args.stride,
                             "refit every N iterations (non-adaptive planners)");
    campaign_sub->add_option("--trees", campaign_args.trees, "surrogate tree params JSON");
    campaign_sub->add_option("--seed", campaign_args.seed, "RNG seed");
    campaign_sub->add_option("--out", campaign_args.out, "output directory (default .)");

    CLI::App* benchmark_sub = app.add_subcommand(
        "benchmark", "compare planners with and without robust re-scoring");
    benchmark_sub->add_option("--label", bench_args.labels,
                              "benchmark labels (repeatable; default all)");
    benchmark_sub->add_option("--planner", bench_args.planners,
                              "planners (repeatable; default grid and random)");
    benchmark_sub->add_option("--repeats", bench_args.repeats, "campaign repeats per cell");
    benchmark_sub->add_option("--budget", bench_args.budget, "evaluations per campaign");
    benchmark_sub->add_option("--density", bench_args.density, "ground-truth grid density");
    benchmark_sub->add_option("--boot", bench_args.n_boot, "bootstrap resamples");
    benchmark_sub->add_flag("--noisy", bench_args.noisy, "realize queries from the noise models");
    benchmark_sub->add_option("--trees", bench_args.trees, "surrogate tree params JSON");
    benchmark_sub->add_option("--seed", bench_args.seed, "RNG seed");
    benchmark_sub->add_option("--cache-dir", bench_args.cache_dir,
                              "ground-truth cache directory (default <out>/gt_cache)");
    benchmark_sub->add_option("--out", bench_args.out, "output directory (default .)");

    CLI::App* scaling_sub =
        app.add_subcommand("scaling", "time estimate batches while sweeping S, T, M, D");
    scaling_sub->add_option("--seed", scaling_args.seed, "RNG seed");
    scaling_sub->add_option("--out", scaling_args.out, "output directory (default .)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*reweight_sub) return reweight_cmd(common);
        if (*surrogate_sub) return surrogate_cmd(common);
        if (*campaign_sub) return campaign_cmd(campaign_args);
        if (*benchmark_sub) return benchmark_cmd(bench_args);
        if (*scaling_sub) return scaling_cmd(scaling_args);
    } catch (const robusta::InternalConsistencyError& e) {
        std::cerr << "internal consistency failure: " << e.what() << "\n";
        return 3;
    } catch (const robusta::InvalidInputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const robusta::UnsupportedOperationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
