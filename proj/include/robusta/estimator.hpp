#pragma once

#include <functional>
#include <span>
#include <vector>

#include "robusta/noise.hpp"
#include "robusta/trees.hpp"

namespace robusta {

// Receives human-readable diagnostics (e.g. queries that extrapolate outside
// the training range). Optional everywhere; never affects results.
using WarningSink = std::function<void(const std::string&)>;

struct RobustEstimate {
    double expectation = 0.0;     // E[f(realized x)] under the noise models
    double output_std = 0.0;      // sqrt(E[f^2] - E[f]^2), pooled over trees
    double expectation_std = 0.0; // spread of per-tree expectations
    std::vector<double> per_tree; // per-tree expectations
};

// P(realized point lands in `tile` | query): product over dimensions of the
// interval probability (numeric) or the summed category probabilities over
// the tile's category subset (categorical). Reference implementation; the
// indexed evaluator below must agree with it exactly.
double tile_probability(const Tile& tile, std::span<const double> query,
                        std::span<const NoiseModel> noise,
                        const std::vector<ColumnSpec>& columns);

// Query-time view over a forest. Single-point estimates walk every tile with
// the same arithmetic as tile_probability (cost: tiles x dims CDF pairs);
// expectation_lattice amortizes CDFs over a whole grid via a precomputed
// per-tree split-bound index, and reproduces the per-point products bit for
// bit.
class TileEvaluator {
public:
    explicit TileEvaluator(const Forest& forest);

    RobustEstimate estimate(std::span<const double> query,
                            std::span<const NoiseModel> noise,
                            const WarningSink& warn = {}) const;

    struct TreeMoments {
        std::vector<double> expectation;   // per tree
        std::vector<double> second_moment; // per tree
    };
    TreeMoments per_tree_moments(std::span<const double> query,
                                 std::span<const NoiseModel> noise) const;

    // Per-tree sums of tile probabilities; each must equal 1 up to rounding.
    std::vector<double> tile_probability_sums(std::span<const double> query,
                                              std::span<const NoiseModel> noise) const;

    // Expectations over the cartesian product of per-dimension coordinates
    // (numeric columns only, constant noise scales), row-major with the last
    // axis fastest. Shares CDF evaluations across the whole grid, which is
    // what makes dense ground-truth evaluation tractable.
    std::vector<double> expectation_lattice(const std::vector<std::vector<double>>& axes,
                                            std::span<const NoiseModel> noise) const;

    const Forest& forest() const { return *forest_; }

private:
    struct DimIndex {
        std::vector<double> bounds;        // sorted unique finite split bounds
        std::vector<std::int32_t> lo_idx;  // per tile: index into the CDF table,
        std::vector<std::int32_t> hi_idx;  // where 0 = -inf and U+1 = +inf
    };
    struct TreeIndex {
        std::vector<DimIndex> dims; // one per column; unused for categorical
    };

    void check(std::span<const double> query, std::span<const NoiseModel> noise,
               const WarningSink& warn) const;
    void accumulate(std::size_t t, std::span<const double> query,
                    std::span<const NoiseModel> noise, double& exp_sum,
                    double& sq_sum, double& prob_sum) const;

    const Forest* forest_;
    std::vector<TreeIndex> index_;
    bool any_categorical_ = false;
};

// Analytic moments of the forest prediction at `query` when each coordinate
// is jittered by its noise model. Exact sums over tiles; no sampling.
double expectation(const Forest& forest, std::span<const double> query,
                   std::span<const NoiseModel> noise);
double second_moment(const Forest& forest, std::span<const double> query,
                     std::span<const NoiseModel> noise);
RobustEstimate estimate(const Forest& forest, std::span<const double> query,
                        std::span<const NoiseModel> noise, const WarningSink& warn = {});

struct ReweightResult {
    std::vector<RobustEstimate> estimates; // one per dataset row
    std::size_t argmin = 0;                // row with the smallest expectation
    std::size_t argmax = 0;                // row with the largest expectation
};

// Re-scores every dataset row at its requested location. Rows may be
// evaluated on several threads; results are bit-identical to sequential
// evaluation because each row's summation order is fixed.
ReweightResult reweight(const Dataset& data, const Forest& forest,
                        std::span<const NoiseModel> noise, int threads = 1,
                        const WarningSink& warn = {});

// expectation - z * expectation_std (e.g. z = 1.96 for a 95% bound).
double lower_confidence_expectation(const RobustEstimate& est, double z);

} // namespace robusta
