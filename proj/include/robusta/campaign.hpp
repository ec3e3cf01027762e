#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "robusta/scalarize.hpp"
#include "robusta/surfaces.hpp"
#include "robusta/trees.hpp"

namespace robusta {

enum class PlannerKind {
    grid,
    random,
    sobol,
    random_edge,
    sobol_edge,
    genetic,
};

std::string to_string(PlannerKind kind);
PlannerKind planner_kind_from_string(const std::string& text);

struct PlannerConfig {
    PlannerKind kind = PlannerKind::random;
    int budget = 196;
    std::uint64_t seed = 0;
    // Lattice resolution for grid and the *_edge boundary set. 0 derives it
    // from the budget as round(budget^(1/D)), i.e. 196 -> 14, 64 -> 8.
    int grid_per_dim = 0;
    // Genetic-planner knobs.
    int population = 20;
    int tournament = 3;
    double mutation_scale = 0.1;   // stddev as a fraction of the domain span
    double elite_fraction = 0.2;   // survivors carried into the breeding pool
};

// Sequential proposal interface. External optimizers plug in by implementing
// propose/observe; observe receives the merit the campaign is minimizing
// (the robust estimate when the surrogate loop is on, raw f otherwise).
class Planner {
public:
    virtual ~Planner() = default;
    virtual std::vector<double> propose() = 0;
    virtual void observe(std::span<const double> x, double merit) = 0;
    // Planners that ignore merits let the campaign skip surrogate refits on
    // thinned iterations; adaptive planners must see a fresh merit each time.
    virtual bool consumes_merits() const { return true; }
};

std::unique_ptr<Planner> make_planner(const PlannerConfig& config, const Surface& surface);

struct CampaignConfig {
    TreeParams tree_params;        // surrogate refit settings when golem_on
    Scalarizer scalarizer = Scalarizer::weighted_sum(1.0, 0.0);
    bool golem_on = true;
    bool noisy = false;            // realize queries from the noise models
    std::uint64_t seed = 0;        // drives noise realizations
    // Refit/incumbent recomputation happens every `regret_stride` iterations
    // (and on the last one). Only applies to planners that ignore merits.
    int regret_stride = 1;
};

struct CampaignRecord {
    std::string spec_label;
    std::string planner_kind;
    bool golem_on = true;
    bool noisy = false;
    std::uint64_t planner_seed = 0;
    std::uint64_t campaign_seed = 0;

    std::vector<std::vector<double>> requested;  // x_k sent to the instrument
    std::vector<std::vector<double>> realized;   // x~_k actually executed
    std::vector<double> observed;                // f at the realized point
    std::vector<double> merit;                   // merit assigned to x_k when collected
    std::vector<std::size_t> incumbent;          // best-known sample index after k+1 draws

    std::size_t n_iterations() const { return requested.size(); }

    void save_csv(const std::filesystem::path& path) const;
    std::string summary_json() const;
};

CampaignRecord run_campaign(const BenchmarkSpec& spec, const PlannerConfig& planner,
                            const CampaignConfig& config);
// External-planner variant; the planner is consumed for `budget` proposals.
CampaignRecord run_campaign(const BenchmarkSpec& spec, Planner& planner, int budget,
                            std::uint64_t planner_seed, const CampaignConfig& config);

// Sum over iterations of the true robust merit of the incumbent. With
// golem_on the incumbents stored in the record (argmin of the surrogate
// merits recomputed at each refit) are used; without, incumbents are the
// prefix-argmin of the raw observations.
double cumulative_regret(const CampaignRecord& record, const GroundTruth& truth,
                         bool golem_on);

// Min-max normalization to [0, 1]; a constant group maps to all zeros.
std::vector<double> normalize_regrets(std::span<const double> regrets);

struct ImprovementResult {
    double probability = 0.0;  // P(mean regret with < mean regret without)
    bool significant = false;  // two-sided at 0.05
};

// Bootstrap comparison of two regret samples (lower regret is better).
ImprovementResult improvement_probability(std::span<const double> with_golem,
                                          std::span<const double> without_golem,
                                          int n_boot = 10000,
                                          std::uint64_t seed = 0);

struct RepeatSummary {
    std::vector<double> regrets_with;
    std::vector<double> regrets_without;
    ImprovementResult improvement;
};

// Runs `n_repeats` independent campaigns with and without the surrogate loop,
// reseeding planner and campaign per repeat, and compares cumulative regrets.
RepeatSummary run_repeats(const BenchmarkSpec& spec, const PlannerConfig& planner,
                          const CampaignConfig& config, const GroundTruth& truth,
                          int n_repeats);

} // namespace robusta
