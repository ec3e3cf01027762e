#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "robusta/common.hpp"
#include "robusta/dataset.hpp"

namespace robusta {

enum class NoiseKind {
    delta,              // no noise: point mass at the query
    normal,             // Gaussian centred on the query
    truncated_normal,   // Gaussian renormalised to [lo, hi]
    uniform,            // box of total width `range` centred on the query
    gamma_bounded,      // gamma with mode at the query, support bounded on one side
    poisson_shifted,    // integer counts supported on {lo, lo+1, ...}, mode at the query
    discrete_laplace,   // symmetric two-sided geometric on the integers
    categorical_simplex // stay-probability q, remainder spread over other categories
};

std::string to_string(NoiseKind kind);

// Distribution of the realised input value conditioned on a requested query
// value, for one input dimension. Continuous and integer kinds expose a CDF
// and interval probabilities; the categorical kind exposes per-category
// probabilities instead.
class NoiseModel {
public:
    // -- factories ---------------------------------------------------------
    static NoiseModel make_delta();
    static NoiseModel make_normal(double std_dev);
    static NoiseModel make_truncated_normal(double std_dev, double lo, double hi);
    static NoiseModel make_uniform(double range);
    // One-sided bound: exactly one of lo/hi is finite. std_dev is the exact
    // standard deviation; the mode sits at the query point.
    static NoiseModel make_gamma_bounded(double std_dev, double lo, double hi);
    static NoiseModel make_poisson_shifted(double lo);
    // Optional integer support bounds renormalize the two-sided geometric the
    // same way truncated_normal renormalizes the Gaussian.
    static NoiseModel make_discrete_laplace(double std_dev, double lo = -kInf,
                                            double hi = kInf);
    static NoiseModel make_categorical(double stay_probability);

    NoiseKind kind() const { return kind_; }
    bool is_integer_kind() const {
        return kind_ == NoiseKind::poisson_shifted || kind_ == NoiseKind::discrete_laplace;
    }
    bool is_categorical() const { return kind_ == NoiseKind::categorical_simplex; }

    // P(X <= a | query). Integer kinds treat a as a real threshold over the
    // integer lattice. Throws UnsupportedOperationError for categorical.
    double cdf(double query, double a) const;

    // P(realised value lands in the tile interval [lo, hi) | query), with the
    // convention matching how tiles partition an axis: continuous kinds use
    // F(hi) - F(lo); integer kinds count lattice points in [lo, hi); delta
    // noise uses membership lo <= query < hi.
    double interval_probability(double query, double lo, double hi) const;

    // P(realised category == cat | requested category). Total probability
    // over the C categories is 1.
    double category_probability(int query_cat, int cat, int n_categories) const;

    double sample(double query, Rng& rng) const;
    int sample_category(int query_cat, int n_categories, Rng& rng) const;

    // Location-dependent scale: if set, the scale parameter used for a given
    // query point is hook(full_query) instead of the configured constant.
    // Only meaningful for kinds with a scale parameter.
    using ScaleHook = std::function<double(std::span<const double>)>;
    void set_scale_hook(ScaleHook hook);
    bool has_scale_hook() const { return static_cast<bool>(scale_hook_); }
    // A copy of this model with the scale resolved for one concrete query.
    NoiseModel resolved(std::span<const double> full_query) const;

    // -- parameter access (read-only; used by reporting and tests) ----------
    double scale() const { return scale_; }
    double lower_bound() const { return lo_; }
    double upper_bound() const { return hi_; }
    double stay_probability() const { return stay_prob_; }
    // Count rate used by the shifted Poisson kind for a given query.
    double poisson_lambda(double query) const;

private:
    NoiseModel() = default;

    NoiseKind kind_ = NoiseKind::delta;
    double scale_ = 0.0;     // std_dev or uniform range, depending on kind
    double lo_ = -kInf;      // support bound (truncated_normal, gamma, poisson)
    double hi_ = kInf;
    double stay_prob_ = 1.0; // categorical only
    double dl_q_ = 0.0;      // discrete_laplace geometric ratio, precomputed
    ScaleHook scale_hook_;

    double cdf_with_scale(double query, double a, double scale) const;
};

// Per-dimension noise configuration for a dataset: one model per column,
// parsed from a JSON document of the form
//   {"models": [{"column": "x0", "kind": "normal", "std_dev": 0.5}, ...]}
// Columns not mentioned default to delta (no noise).
std::vector<NoiseModel> load_noise_spec(const std::string& json_text,
                                        const std::vector<ColumnSpec>& columns);
std::string noise_spec_json(const std::vector<NoiseModel>& models,
                            const std::vector<ColumnSpec>& columns);

} // namespace robusta
