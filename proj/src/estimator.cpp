#include "robusta/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace robusta {

namespace {

constexpr double kVarianceSlack = 1e-9;

void check_noise_compat(const std::vector<ColumnSpec>& columns,
                        std::span<const NoiseModel> noise) {
    if (noise.size() != columns.size())
        throw InvalidInputError("one noise model per column required");
    for (std::size_t d = 0; d < columns.size(); ++d) {
        const bool cat_col = columns[d].kind == ColumnKind::categorical;
        if (cat_col && !(noise[d].is_categorical() || noise[d].kind() == NoiseKind::delta))
            throw InvalidInputError("categorical column '" + columns[d].name +
                                    "' needs categorical or delta noise");
        if (!cat_col && noise[d].is_categorical())
            throw InvalidInputError("categorical noise on non-categorical column '" +
                                    columns[d].name + "'");
    }
}

void check_query_point(const std::vector<ColumnSpec>& columns,
                       std::span<const double> query) {
    if (query.size() != columns.size())
        throw InvalidInputError("query dimensionality does not match the forest");
    for (std::size_t d = 0; d < columns.size(); ++d) {
        if (!std::isfinite(query[d]))
            throw InvalidInputError("non-finite query coordinate");
        if (columns[d].kind == ColumnKind::categorical) {
            const auto n = static_cast<double>(columns[d].categories.size());
            if (query[d] != std::floor(query[d]) || query[d] < 0 || query[d] >= n)
                throw InvalidInputError("query category index out of range");
        }
    }
}

// CDF argument for a tile bound: integer kinds count lattice points below
// the bound, which is what makes half-open integer tiles partition mass.
double bound_cdf(const NoiseModel& model, double query, double bound) {
    return model.cdf(query, model.is_integer_kind() ? std::ceil(bound) - 1.0 : bound);
}

} // namespace

double tile_probability(const Tile& tile, std::span<const double> query,
                        std::span<const NoiseModel> noise,
                        const std::vector<ColumnSpec>& columns) {
    check_noise_compat(columns, noise);
    check_query_point(columns, query);
    if (tile.lo.size() != columns.size())
        throw InvalidInputError("tile dimensionality does not match the columns");

    double p = 1.0;
    for (std::size_t d = 0; d < columns.size(); ++d) {
        const NoiseModel model =
            noise[d].has_scale_hook() ? noise[d].resolved(query) : noise[d];
        double factor;
        if (!tile.cats[d].empty()) {
            const int query_cat = static_cast<int>(query[d]);
            const int n_cats = static_cast<int>(columns[d].categories.size());
            factor = 0.0;
            for (int c : tile.cats[d])
                factor += model.category_probability(query_cat, c, n_cats);
        } else {
            factor = model.interval_probability(query[d], tile.lo[d], tile.hi[d]);
        }
        p *= factor;
    }
    return p;
}

TileEvaluator::TileEvaluator(const Forest& forest) : forest_(&forest) {
    if (forest.trees.empty()) throw InvalidInputError("forest has no trees");
    const auto n_cols = forest.columns.size();
    for (const auto& c : forest.columns)
        if (c.kind == ColumnKind::categorical) any_categorical_ = true;

    index_.resize(forest.trees.size());
    for (std::size_t t = 0; t < forest.trees.size(); ++t) {
        const auto& tiles = forest.trees[t];
        TreeIndex& tidx = index_[t];
        tidx.dims.resize(n_cols);
        for (std::size_t d = 0; d < n_cols; ++d) {
            if (forest.columns[d].kind == ColumnKind::categorical) continue;
            DimIndex& dim = tidx.dims[d];
            for (const Tile& tile : tiles) {
                if (tile.lo[d] != -kInf) dim.bounds.push_back(tile.lo[d]);
                if (tile.hi[d] != kInf) dim.bounds.push_back(tile.hi[d]);
            }
            std::sort(dim.bounds.begin(), dim.bounds.end());
            dim.bounds.erase(std::unique(dim.bounds.begin(), dim.bounds.end()),
                             dim.bounds.end());
            dim.lo_idx.reserve(tiles.size());
            dim.hi_idx.reserve(tiles.size());
            const auto last = static_cast<std::int32_t>(dim.bounds.size() + 1);
            for (const Tile& tile : tiles) {
                if (tile.lo[d] == -kInf) {
                    dim.lo_idx.push_back(0);
                } else {
                    const auto it = std::lower_bound(dim.bounds.begin(), dim.bounds.end(),
                                                     tile.lo[d]);
                    dim.lo_idx.push_back(
                        static_cast<std::int32_t>(it - dim.bounds.begin()) + 1);
                }
                if (tile.hi[d] == kInf) {
                    dim.hi_idx.push_back(last);
                } else {
                    const auto it = std::lower_bound(dim.bounds.begin(), dim.bounds.end(),
                                                     tile.hi[d]);
                    dim.hi_idx.push_back(
                        static_cast<std::int32_t>(it - dim.bounds.begin()) + 1);
                }
            }
        }
    }
}

void TileEvaluator::check(std::span<const double> query, std::span<const NoiseModel> noise,
                          const WarningSink& warn) const {
    check_noise_compat(forest_->columns, noise);
    check_query_point(forest_->columns, query);
    if (!warn) return;
    for (std::size_t d = 0; d < query.size(); ++d) {
        if (forest_->columns[d].kind == ColumnKind::categorical) continue;
        if (query[d] < forest_->train_lo[d] || query[d] > forest_->train_hi[d])
            warn("query extrapolates beyond the training range on column '" +
                 forest_->columns[d].name + "' (prediction is constant out there)");
    }
}

// Per-query cost is tiles x dims CDF pairs, matching the single-tile
// reference arithmetic exactly (same calls, same order); batch grid work
// goes through expectation_lattice instead, which shares CDF evaluations.
void TileEvaluator::accumulate(std::size_t t, std::span<const double> query,
                               std::span<const NoiseModel> noise, double& exp_sum,
                               double& sq_sum, double& prob_sum) const {
    const auto& tiles = forest_->trees[t];
    const auto n_cols = forest_->columns.size();
    double e = 0.0, m2 = 0.0, ps = 0.0;
    for (const Tile& tile : tiles) {
        double p = 1.0;
        for (std::size_t d = 0; d < n_cols; ++d) {
            double factor;
            if (!tile.cats[d].empty()) {
                const int query_cat = static_cast<int>(query[d]);
                const int n_cats = static_cast<int>(forest_->columns[d].categories.size());
                factor = 0.0;
                for (int c : tile.cats[d])
                    factor += noise[d].category_probability(query_cat, c, n_cats);
            } else {
                factor = noise[d].interval_probability(query[d], tile.lo[d], tile.hi[d]);
            }
            p *= factor;
            if (p == 0.0) break;
        }
        const double v = tile.value;
        e += v * p;
        m2 += v * v * p;
        ps += p;
    }
    exp_sum = e;
    sq_sum = m2;
    prob_sum = ps;
}

TileEvaluator::TreeMoments TileEvaluator::per_tree_moments(
    std::span<const double> query, std::span<const NoiseModel> noise) const {
    check(query, noise, {});
    std::vector<NoiseModel> local;
    std::span<const NoiseModel> models = noise;
    for (const auto& m : noise)
        if (m.has_scale_hook()) {
            local.reserve(noise.size());
            for (const auto& n : noise) local.push_back(n.resolved(query));
            models = local;
            break;
        }

    TreeMoments out;
    const auto n_trees = forest_->trees.size();
    out.expectation.resize(n_trees);
    out.second_moment.resize(n_trees);
    for (std::size_t t = 0; t < n_trees; ++t) {
        double ps = 0.0;
        accumulate(t, query, models, out.expectation[t], out.second_moment[t], ps);
    }
    return out;
}

RobustEstimate TileEvaluator::estimate(std::span<const double> query,
                                       std::span<const NoiseModel> noise,
                                       const WarningSink& warn) const {
    check(query, noise, warn);
    const TreeMoments moments = per_tree_moments(query, noise);
    RobustEstimate est;
    est.per_tree = moments.expectation;
    est.expectation = mean_of(moments.expectation);
    const double m2 = mean_of(moments.second_moment);
    const double var = m2 - est.expectation * est.expectation;
    if (var < -kVarianceSlack)
        throw InternalConsistencyError("variance fell below zero beyond tolerance");
    est.output_std = std::sqrt(std::max(0.0, var));
    est.expectation_std = sample_std(est.per_tree);
    return est;
}

std::vector<double> TileEvaluator::tile_probability_sums(
    std::span<const double> query, std::span<const NoiseModel> noise) const {
    check(query, noise, {});
    std::vector<NoiseModel> local;
    std::span<const NoiseModel> models = noise;
    for (const auto& m : noise)
        if (m.has_scale_hook()) {
            local.reserve(noise.size());
            for (const auto& n : noise) local.push_back(n.resolved(query));
            models = local;
            break;
        }
    std::vector<double> sums(forest_->trees.size());
    for (std::size_t t = 0; t < forest_->trees.size(); ++t) {
        double e = 0.0, m2 = 0.0;
        accumulate(t, query, models, e, m2, sums[t]);
    }
    return sums;
}

std::vector<double> TileEvaluator::expectation_lattice(
    const std::vector<std::vector<double>>& axes,
    std::span<const NoiseModel> noise) const {
    const auto n_cols = forest_->columns.size();
    if (any_categorical_)
        throw UnsupportedOperationError(
            "lattice evaluation supports numeric columns only");
    for (const auto& m : noise)
        if (m.has_scale_hook())
            throw UnsupportedOperationError(
                "lattice evaluation requires constant noise scales");
    check_noise_compat(forest_->columns, noise);
    if (axes.size() != n_cols)
        throw InvalidInputError("one coordinate axis per column required");
    std::size_t total = 1;
    for (const auto& axis : axes) {
        if (axis.empty()) throw InvalidInputError("empty coordinate axis");
        total *= axis.size();
    }

    std::vector<double> out(total, 0.0);

    for (std::size_t t = 0; t < forest_->trees.size(); ++t) {
        const auto& tiles = forest_->trees[t];
        const auto& tidx = index_[t];
        const std::size_t n_tiles = tiles.size();

        // tables[d] is |axes[d]| rows of U_d + 2 CDF values
        std::vector<std::vector<double>> tables(n_cols);
        for (std::size_t d = 0; d < n_cols; ++d) {
            if (noise[d].kind() == NoiseKind::delta) continue;
            const auto& bounds = tidx.dims[d].bounds;
            const std::size_t width = bounds.size() + 2;
            tables[d].resize(axes[d].size() * width);
            for (std::size_t i = 0; i < axes[d].size(); ++i) {
                double* row = tables[d].data() + i * width;
                row[0] = 0.0;
                row[width - 1] = 1.0;
                for (std::size_t u = 0; u < bounds.size(); ++u)
                    row[u + 1] = bound_cdf(noise[d], axes[d][i], bounds[u]);
            }
        }

        // partial[d][m]: product of the dim<=d interval factors at the
        // current odometer coordinates; only dims right of a change are
        // refreshed. The leaf value multiplies in last, and trees pool as
        // sum-then-divide, so each lattice point reproduces the pointwise
        // estimate bit for bit.
        std::vector<std::vector<double>> partial(
            n_cols, std::vector<double>(n_tiles, 0.0));
        auto refresh = [&](std::size_t d, std::size_t i) {
            const auto& dim = tidx.dims[d];
            const std::size_t width = dim.bounds.size() + 2;
            const double* row =
                noise[d].kind() == NoiseKind::delta ? nullptr
                                                    : tables[d].data() + i * width;
            const double q = axes[d][i];
            for (std::size_t m = 0; m < n_tiles; ++m) {
                double factor;
                if (row) {
                    factor = std::clamp(row[static_cast<std::size_t>(dim.hi_idx[m])] -
                                            row[static_cast<std::size_t>(dim.lo_idx[m])],
                                        0.0, 1.0);
                } else {
                    factor = (q >= tiles[m].lo[d] && q < tiles[m].hi[d]) ? 1.0 : 0.0;
                }
                partial[d][m] = d == 0 ? factor : partial[d - 1][m] * factor;
            }
        };

        std::vector<std::size_t> idx(n_cols, 0);
        for (std::size_t d = 0; d < n_cols; ++d) refresh(d, 0);
        bool done = false;
        for (std::size_t flat = 0; !done; ++flat) {
            const auto& last = partial[n_cols - 1];
            double sum = 0.0;
            for (std::size_t m = 0; m < n_tiles; ++m) sum += tiles[m].value * last[m];
            out[flat] += sum;

            // advance the odometer, last axis fastest
            std::size_t d = n_cols;
            while (d > 0) {
                --d;
                if (++idx[d] < axes[d].size()) break;
                idx[d] = 0;
                if (d == 0) done = true;
            }
            if (!done)
                for (std::size_t e = d; e < n_cols; ++e) refresh(e, idx[e]);
        }
    }
    const double n_trees = static_cast<double>(forest_->trees.size());
    for (double& v : out) v /= n_trees;
    return out;
}

double expectation(const Forest& forest, std::span<const double> query,
                   std::span<const NoiseModel> noise) {
    return TileEvaluator(forest).estimate(query, noise).expectation;
}

double second_moment(const Forest& forest, std::span<const double> query,
                     std::span<const NoiseModel> noise) {
    const auto moments = TileEvaluator(forest).per_tree_moments(query, noise);
    return mean_of(moments.second_moment);
}

RobustEstimate estimate(const Forest& forest, std::span<const double> query,
                        std::span<const NoiseModel> noise, const WarningSink& warn) {
    return TileEvaluator(forest).estimate(query, noise, warn);
}

ReweightResult reweight(const Dataset& data, const Forest& forest,
                        std::span<const NoiseModel> noise, int threads,
                        const WarningSink& warn) {
    data.validate();
    if (data.n_cols() != forest.columns.size())
        throw InvalidInputError("dataset and forest column counts differ");
    if (threads < 1) throw InvalidInputError("threads must be positive");

    const TileEvaluator evaluator(forest);
    const auto n = data.n_rows();
    ReweightResult result;
    result.estimates.resize(n);
    std::vector<std::vector<std::string>> row_warnings(n);

    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) {
            WarningSink sink;
            if (warn)
                sink = [&row_warnings, r](const std::string& msg) {
                    row_warnings[r].push_back(msg);
                };
            result.estimates[r] = evaluator.estimate(data.rows[r], noise, sink);
        }
    };

    const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    if (n_threads <= 1) {
        work(0, n);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (n + n_threads - 1) / n_threads;
        for (std::size_t i = 0; i < n_threads; ++i) {
            const std::size_t begin = i * chunk;
            const std::size_t end = std::min(n, begin + chunk);
            if (begin >= end) break;
            pool.emplace_back(work, begin, end);
        }
        for (auto& th : pool) th.join();
    }

    if (warn)
        for (const auto& msgs : row_warnings)
            for (const auto& msg : msgs) warn(msg);

    for (std::size_t r = 1; r < n; ++r) {
        if (result.estimates[r].expectation <
            result.estimates[result.argmin].expectation)
            result.argmin = r;
        if (result.estimates[r].expectation >
            result.estimates[result.argmax].expectation)
            result.argmax = r;
    }
    return result;
}

double lower_confidence_expectation(const RobustEstimate& est, double z) {
    return est.expectation - z * est.expectation_std;
}

} // namespace robusta
