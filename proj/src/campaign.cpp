#include "robusta/campaign.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>

#include <boost/random/sobol.hpp>
#include <json.hpp>

#include "robusta/common.hpp"
#include "robusta/estimator.hpp"

namespace robusta {

std::string to_string(PlannerKind kind) {
    switch (kind) {
    case PlannerKind::grid: return "grid";
    case PlannerKind::random: return "random";
    case PlannerKind::sobol: return "sobol";
    case PlannerKind::random_edge: return "random_edge";
    case PlannerKind::sobol_edge: return "sobol_edge";
    case PlannerKind::genetic: return "genetic";
    }
    throw InvalidInputError("unknown planner kind");
}

PlannerKind planner_kind_from_string(const std::string& text) {
    if (text == "grid") return PlannerKind::grid;
    if (text == "random") return PlannerKind::random;
    if (text == "sobol") return PlannerKind::sobol;
    if (text == "random_edge") return PlannerKind::random_edge;
    if (text == "sobol_edge") return PlannerKind::sobol_edge;
    if (text == "genetic") return PlannerKind::genetic;
    throw InvalidInputError("unknown planner kind '" + text + "'");
}

namespace {

int derived_grid_per_dim(const PlannerConfig& config, int dims) {
    if (config.grid_per_dim > 0) return config.grid_per_dim;
    int n = static_cast<int>(std::llround(std::pow(static_cast<double>(config.budget),
                                                   1.0 / dims)));
    return std::max(2, n);
}

std::vector<std::vector<double>> lattice_points(
    const std::vector<std::vector<double>>& axes, bool boundary_only) {
    std::vector<std::vector<double>> points;
    std::vector<std::size_t> idx(axes.size(), 0);
    std::vector<double> point(axes.size());
    for (;;) {
        bool on_boundary = false;
        for (std::size_t d = 0; d < axes.size(); ++d) {
            point[d] = axes[d][idx[d]];
            on_boundary |= idx[d] == 0 || idx[d] + 1 == axes[d].size();
        }
        if (!boundary_only || on_boundary) points.push_back(point);
        std::size_t d = axes.size();
        for (;;) {
            if (d == 0) return points;
            --d;
            if (++idx[d] < axes[d].size()) break;
            idx[d] = 0;
        }
    }
}

double snap_discrete(double v, double lo, double hi) {
    return std::clamp(std::round(v), lo, hi);
}

// Exhausts a pre-shuffled list of points, then (optionally) hands over to a
// fallback sampler. Covers the grid planner and the *-edge prefixes.
class ListPlanner : public Planner {
public:
    ListPlanner(std::vector<std::vector<double>> points, std::uint64_t seed,
                std::unique_ptr<Planner> fallback)
        : points_(std::move(points)), fallback_(std::move(fallback)) {
        Rng rng(mix_seed(seed, 0x11));
        std::shuffle(points_.begin(), points_.end(), rng);
    }

    std::vector<double> propose() override {
        if (next_ < points_.size()) return points_[next_++];
        if (fallback_) return fallback_->propose();
        throw InvalidInputError("grid planner exhausted its lattice; increase the "
                                "resolution or lower the budget");
    }

    void observe(std::span<const double>, double) override {}
    bool consumes_merits() const override { return false; }

private:
    std::vector<std::vector<double>> points_;
    std::size_t next_ = 0;
    std::unique_ptr<Planner> fallback_;
};

class RandomPlanner : public Planner {
public:
    RandomPlanner(const Surface& surface, std::uint64_t seed)
        : lo_(surface.domain_lo), hi_(surface.domain_hi),
          discrete_(surface.is_discrete()), rng_(mix_seed(seed, 0x22)) {}

    std::vector<double> propose() override {
        std::vector<double> x(lo_.size());
        for (std::size_t d = 0; d < lo_.size(); ++d) {
            if (discrete_) {
                std::uniform_int_distribution<long> pick(std::lround(lo_[d]),
                                                         std::lround(hi_[d]));
                x[d] = static_cast<double>(pick(rng_));
            } else {
                x[d] = std::uniform_real_distribution<double>(lo_[d], hi_[d])(rng_);
            }
        }
        return x;
    }

    void observe(std::span<const double>, double) override {}
    bool consumes_merits() const override { return false; }

private:
    std::vector<double> lo_, hi_;
    bool discrete_;
    Rng rng_;
};

class SobolPlanner : public Planner {
public:
    SobolPlanner(const Surface& surface, std::uint64_t seed)
        : lo_(surface.domain_lo), hi_(surface.domain_hi),
          discrete_(surface.is_discrete()),
          engine_(static_cast<unsigned>(lo_.size())) {
        // Per-seed Cranley-Patterson rotation: keeps the low-discrepancy
        // structure while decorrelating repeats.
        Rng rng(mix_seed(seed, 0x33));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        shift_.resize(lo_.size());
        for (double& s : shift_) s = unit(rng);
    }

    std::vector<double> propose() override {
        const double norm =
            1.0 / (static_cast<double>(boost::random::sobol::max()) + 1.0);
        std::vector<double> x(lo_.size());
        for (std::size_t d = 0; d < lo_.size(); ++d) {
            double u = static_cast<double>(engine_()) * norm + shift_[d];
            u -= std::floor(u);
            double v = lo_[d] + u * (hi_[d] - lo_[d]);
            x[d] = discrete_ ? snap_discrete(lo_[d] + u * (hi_[d] - lo_[d] + 1.0) - 0.5,
                                             lo_[d], hi_[d])
                             : v;
        }
        return x;
    }

    void observe(std::span<const double>, double) override {}
    bool consumes_merits() const override { return false; }

private:
    std::vector<double> lo_, hi_;
    bool discrete_;
    boost::random::sobol engine_;
    std::vector<double> shift_;
};

// Generational (mu+lambda) scheme: each generation is bred from the previous
// one plus the all-time elites, with tournament selection, per-dimension
// blend crossover, and Gaussian mutation clipped to the domain.
class GeneticPlanner : public Planner {
public:
    GeneticPlanner(const Surface& surface, const PlannerConfig& config)
        : lo_(surface.domain_lo), hi_(surface.domain_hi),
          discrete_(surface.is_discrete()), population_(config.population),
          tournament_(config.tournament), mutation_scale_(config.mutation_scale),
          elite_fraction_(config.elite_fraction), rng_(mix_seed(config.seed, 0x44)) {
        if (population_ < 2) throw InvalidInputError("genetic planner needs a population of at least 2");
        if (tournament_ < 1) throw InvalidInputError("tournament size must be positive");
        if (!(mutation_scale_ >= 0.0) || !(elite_fraction_ >= 0.0) || elite_fraction_ > 1.0)
            throw InvalidInputError("invalid genetic planner parameters");
    }

    std::vector<double> propose() override {
        if (queue_.empty()) breed();
        std::vector<double> x = std::move(queue_.front());
        queue_.pop_front();
        return x;
    }

    void observe(std::span<const double> x, double merit) override {
        evaluated_.push_back({std::vector<double>(x.begin(), x.end()), merit});
        generation_.push_back(evaluated_.back());
    }

private:
    struct Individual {
        std::vector<double> x;
        double merit;
    };

    void breed() {
        if (generation_.empty()) {  // initial population is random
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            for (int i = 0; i < population_; ++i) {
                std::vector<double> x(lo_.size());
                for (std::size_t d = 0; d < lo_.size(); ++d) {
                    double v = lo_[d] + unit(rng_) * (hi_[d] - lo_[d]);
                    x[d] = discrete_ ? snap_discrete(v, lo_[d], hi_[d]) : v;
                }
                queue_.push_back(std::move(x));
            }
            return;
        }

        std::vector<Individual> pool = generation_;
        const int n_elite = static_cast<int>(
            std::ceil(elite_fraction_ * static_cast<double>(population_)));
        if (n_elite > 0) {
            std::vector<Individual> ranked = evaluated_;
            std::sort(ranked.begin(), ranked.end(),
                      [](const Individual& a, const Individual& b) {
                          return a.merit < b.merit;
                      });
            ranked.resize(std::min<std::size_t>(ranked.size(), n_elite));
            pool.insert(pool.end(), ranked.begin(), ranked.end());
        }

        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (int i = 0; i < population_; ++i) {
            const Individual& a = tournament_select(pool);
            const Individual& b = tournament_select(pool);
            std::vector<double> child(lo_.size());
            for (std::size_t d = 0; d < lo_.size(); ++d) {
                double u = unit(rng_);
                double v = a.x[d] + u * (b.x[d] - a.x[d]);
                v += gauss(rng_) * mutation_scale_ * (hi_[d] - lo_[d]);
                v = std::clamp(v, lo_[d], hi_[d]);
                child[d] = discrete_ ? snap_discrete(v, lo_[d], hi_[d]) : v;
            }
            queue_.push_back(std::move(child));
        }
        generation_.clear();
    }

    const Individual& tournament_select(const std::vector<Individual>& pool) {
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        std::size_t best = pick(rng_);
        for (int t = 1; t < tournament_; ++t) {
            std::size_t c = pick(rng_);
            if (pool[c].merit < pool[best].merit) best = c;
        }
        return pool[best];
    }

    std::vector<double> lo_, hi_;
    bool discrete_;
    int population_;
    int tournament_;
    double mutation_scale_;
    double elite_fraction_;
    Rng rng_;
    std::deque<std::vector<double>> queue_;
    std::vector<Individual> evaluated_;
    std::vector<Individual> generation_;
};

void validate_proposal(std::span<const double> x, const Surface& surface) {
    if (static_cast<int>(x.size()) != surface.dims)
        throw InvalidInputError("planner proposal dimensionality does not match the surface");
    for (int d = 0; d < surface.dims; ++d) {
        if (!std::isfinite(x[d]))
            throw InvalidInputError("planner proposed a non-finite coordinate");
        if (x[d] < surface.domain_lo[d] - 1e-9 || x[d] > surface.domain_hi[d] + 1e-9)
            throw InvalidInputError("planner proposed a point outside the optimization domain");
    }
}

} // namespace

std::unique_ptr<Planner> make_planner(const PlannerConfig& config, const Surface& surface) {
    if (config.budget <= 0) throw InvalidInputError("planner budget must be positive");
    const int per_dim = derived_grid_per_dim(config, surface.dims);
    switch (config.kind) {
    case PlannerKind::grid: {
        auto points = lattice_points(domain_axes(surface, per_dim), false);
        if (static_cast<std::size_t>(config.budget) > points.size())
            throw InvalidInputError("grid planner budget exceeds the lattice size");
        return std::make_unique<ListPlanner>(std::move(points), config.seed, nullptr);
    }
    case PlannerKind::random:
        return std::make_unique<RandomPlanner>(surface, config.seed);
    case PlannerKind::sobol:
        return std::make_unique<SobolPlanner>(surface, config.seed);
    case PlannerKind::random_edge: {
        auto edges = lattice_points(domain_axes(surface, per_dim), true);
        return std::make_unique<ListPlanner>(
            std::move(edges), config.seed,
            std::make_unique<RandomPlanner>(surface, config.seed));
    }
    case PlannerKind::sobol_edge: {
        auto edges = lattice_points(domain_axes(surface, per_dim), true);
        return std::make_unique<ListPlanner>(
            std::move(edges), config.seed,
            std::make_unique<SobolPlanner>(surface, config.seed));
    }
    case PlannerKind::genetic:
        return std::make_unique<GeneticPlanner>(surface, config);
    }
    throw InvalidInputError("unknown planner kind");
}

CampaignRecord run_campaign(const BenchmarkSpec& spec, Planner& planner, int budget,
                            std::uint64_t planner_seed, const CampaignConfig& config) {
    if (budget <= 0) throw InvalidInputError("campaign budget must be positive");
    const Surface& surface = spec.surface;
    if (static_cast<int>(spec.noise.size()) != surface.dims)
        throw InvalidInputError("benchmark noise models do not match the surface dimensionality");

    CampaignRecord rec;
    rec.spec_label = spec.label;
    rec.planner_kind = "external";
    rec.golem_on = config.golem_on;
    rec.noisy = config.noisy;
    rec.planner_seed = planner_seed;
    rec.campaign_seed = config.seed;

    Rng noise_rng(mix_seed(config.seed, 0x55));
    Dataset data;
    data.columns = surface_columns(surface);

    const bool adaptive = planner.consumes_merits();
    const int stride = std::max(1, config.regret_stride);
    std::optional<TileEvaluator> evaluator;
    std::optional<Forest> forest;
    std::vector<double> merits;  // surrogate merit of every collected point, latest refit

    for (int k = 0; k < budget; ++k) {
        std::vector<double> x = planner.propose();
        validate_proposal(x, surface);

        std::vector<double> realized = x;
        if (config.noisy)
            for (int d = 0; d < surface.dims; ++d)
                realized[d] = spec.noise[d].sample(x[d], noise_rng);
        const double f = config.noisy ? surface.eval_extended(realized) : surface.eval(x);

        rec.requested.push_back(x);
        rec.realized.push_back(std::move(realized));
        rec.observed.push_back(f);
        data.add_row(x, f);

        double merit_k;
        if (config.golem_on) {
            // Requested locations paired with (possibly noisy) observations:
            // the surrogate models what the campaign actually asked for.
            const bool refit = adaptive || k % stride == 0 || k + 1 == budget;
            if (refit) {
                forest = fit(data, config.tree_params);
                evaluator.emplace(*forest);
                merits.clear();
                for (std::size_t i = 0; i < data.n_rows(); ++i)
                    merits.push_back(scalarize(
                        config.scalarizer, evaluator->estimate(data.rows[i], spec.noise)));
            } else {
                merits.push_back(scalarize(config.scalarizer,
                                           evaluator->estimate(x, spec.noise)));
            }
            merit_k = merits.back();
            rec.incumbent.push_back(static_cast<std::size_t>(
                std::min_element(merits.begin(), merits.end()) - merits.begin()));
        } else {
            merit_k = f;
            std::size_t inc = k == 0 ? 0 : rec.incumbent.back();
            if (f < rec.observed[inc]) inc = static_cast<std::size_t>(k);
            rec.incumbent.push_back(inc);
        }
        rec.merit.push_back(merit_k);
        planner.observe(x, merit_k);
    }
    return rec;
}

CampaignRecord run_campaign(const BenchmarkSpec& spec, const PlannerConfig& planner_cfg,
                            const CampaignConfig& config) {
    auto planner = make_planner(planner_cfg, spec.surface);
    CampaignRecord rec =
        run_campaign(spec, *planner, planner_cfg.budget, planner_cfg.seed, config);
    rec.planner_kind = to_string(planner_cfg.kind);
    return rec;
}

void CampaignRecord::save_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw InvalidInputError("cannot open '" + path.string() + "' for writing");
    out.precision(17);
    const std::size_t dims = requested.empty() ? 0 : requested.front().size();
    out << "iteration";
    for (std::size_t d = 0; d < dims; ++d) out << ",requested_x" << d;
    for (std::size_t d = 0; d < dims; ++d) out << ",realized_x" << d;
    out << ",observed,merit,incumbent\n";
    for (std::size_t k = 0; k < n_iterations(); ++k) {
        out << k;
        for (double v : requested[k]) out << ',' << v;
        for (double v : realized[k]) out << ',' << v;
        out << ',' << observed[k] << ',' << merit[k] << ',' << incumbent[k] << '\n';
    }
    if (!out) throw InvalidInputError("failed writing '" + path.string() + "'");
}

std::string CampaignRecord::summary_json() const {
    nlohmann::json j;
    j["spec_label"] = spec_label;
    j["planner"] = planner_kind;
    j["golem_on"] = golem_on;
    j["noisy"] = noisy;
    j["planner_seed"] = planner_seed;
    j["campaign_seed"] = campaign_seed;
    j["n_iterations"] = n_iterations();
    if (!requested.empty()) {
        const std::size_t best = incumbent.back();
        j["best_index"] = best;
        j["best_requested"] = requested[best];
        j["best_observed"] = observed[best];
        j["best_collection_merit"] = merit[best];
    }
    return j.dump(2);
}

double cumulative_regret(const CampaignRecord& record, const GroundTruth& truth,
                         bool golem_on) {
    const std::size_t n = record.n_iterations();
    if (n == 0) throw InvalidInputError("cannot compute regret of an empty campaign");
    double total = 0.0;
    if (golem_on) {
        if (!record.golem_on)
            throw InvalidInputError("record was collected without surrogate merits; "
                                    "rerun the campaign with the estimator enabled");
        for (std::size_t k = 0; k < n; ++k)
            total += truth.lookup(record.requested[record.incumbent[k]]);
    } else {
        std::size_t inc = 0;
        for (std::size_t k = 0; k < n; ++k) {
            if (record.observed[k] < record.observed[inc]) inc = k;
            total += truth.lookup(record.requested[inc]);
        }
    }
    return total;
}

std::vector<double> normalize_regrets(std::span<const double> regrets) {
    if (regrets.empty()) return {};
    const auto [lo_it, hi_it] = std::minmax_element(regrets.begin(), regrets.end());
    const double lo = *lo_it, hi = *hi_it;
    std::vector<double> out(regrets.size(), 0.0);
    if (hi > lo)
        for (std::size_t i = 0; i < regrets.size(); ++i)
            out[i] = (regrets[i] - lo) / (hi - lo);
    return out;
}

ImprovementResult improvement_probability(std::span<const double> with_golem,
                                          std::span<const double> without_golem,
                                          int n_boot, std::uint64_t seed) {
    if (with_golem.size() < 2 || without_golem.size() < 2)
        throw InvalidInputError("improvement comparison needs at least two repeats per arm");
    if (n_boot <= 0) throw InvalidInputError("bootstrap count must be positive");
    Rng rng(mix_seed(seed, 0x66));
    std::uniform_int_distribution<std::size_t> pick_w(0, with_golem.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_o(0, without_golem.size() - 1);
    double wins = 0.0;
    for (int b = 0; b < n_boot; ++b) {
        double sw = 0.0, so = 0.0;
        for (std::size_t i = 0; i < with_golem.size(); ++i) sw += with_golem[pick_w(rng)];
        for (std::size_t i = 0; i < without_golem.size(); ++i) so += without_golem[pick_o(rng)];
        const double mw = sw / static_cast<double>(with_golem.size());
        const double mo = so / static_cast<double>(without_golem.size());
        if (mw < mo) wins += 1.0;
        else if (mw == mo) wins += 0.5;
    }
    ImprovementResult result;
    result.probability = wins / static_cast<double>(n_boot);
    result.significant = result.probability >= 0.975 || result.probability <= 0.025;
    return result;
}

RepeatSummary run_repeats(const BenchmarkSpec& spec, const PlannerConfig& planner,
                          const CampaignConfig& config, const GroundTruth& truth,
                          int n_repeats) {
    if (n_repeats <= 0) throw InvalidInputError("repeat count must be positive");
    RepeatSummary out;
    for (int r = 0; r < n_repeats; ++r) {
        PlannerConfig pc = planner;
        pc.seed = mix_seed(planner.seed, static_cast<std::uint64_t>(r));
        CampaignConfig on = config;
        on.golem_on = true;
        on.seed = mix_seed(config.seed, static_cast<std::uint64_t>(r));
        CampaignConfig off = on;
        off.golem_on = false;
        out.regrets_with.push_back(
            cumulative_regret(run_campaign(spec, pc, on), truth, true));
        out.regrets_without.push_back(
            cumulative_regret(run_campaign(spec, pc, off), truth, false));
    }
    out.improvement = improvement_probability(out.regrets_with, out.regrets_without,
                                              10000, mix_seed(config.seed, 0x77));
    return out;
}

} // namespace robusta
