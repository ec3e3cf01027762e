#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "robusta/common.hpp"
#include "robusta/dataset.hpp"
#include "robusta/noise.hpp"

namespace robusta {

enum class SurfaceName { bertsimas, cliff, sine, discrete_bertsimas, discrete_cliff };

std::string to_string(SurfaceName name);
SurfaceName surface_name_from_string(const std::string& s);

// Closed-form benchmark objectives. Discrete variants live on the integer
// grid {1..22}^2, mapped linearly onto the parent continuous domain.
struct Surface {
    SurfaceName name = SurfaceName::cliff;
    int dims = 2;
    std::vector<double> domain_lo;
    std::vector<double> domain_hi;

    bool is_discrete() const {
        return name == SurfaceName::discrete_bertsimas ||
               name == SurfaceName::discrete_cliff;
    }

    // Strict evaluation: discrete surfaces only accept integer coordinates
    // inside the grid. Continuous surfaces evaluate anywhere.
    double eval(std::span<const double> x) const;
    // Continuous extension without grid checks; used to model behavior
    // beyond the optimization domain (ground truth, noisy realizations).
    double eval_extended(std::span<const double> x) const;

    static Surface make(SurfaceName name, int dims = 2);
    static Surface make(const std::string& name, int dims = 2);
};

// One of the Table-lookup benchmark configurations S1..S8: a surface plus
// per-dimension noise models. extra_dims appends noise-free dimensions to
// the S1 cliff for the high-dimensional variants.
struct BenchmarkSpec {
    std::string label;
    Surface surface;
    std::vector<NoiseModel> noise;

    static BenchmarkSpec table_entry(const std::string& label, int extra_dims = 0);
    static const std::vector<std::string>& labels(); // S1..S8
};

// Fitting-ready column metadata for a surface's input space.
std::vector<ColumnSpec> surface_columns(const Surface& surface);

// Uniformly spaced per-dimension sample coordinates over the optimization
// domain (integers for discrete surfaces; counts that do not divide the
// 21-step grid evenly are rounded to the nearest integers).
std::vector<std::vector<double>> domain_axes(const Surface& surface, int n_per_dim);

// Noiseless observations on the domain_axes lattice, as a fitting-ready
// table with columns x0..x{D-1}.
Dataset sample_grid(const Surface& surface, int n_per_dim);

// Dense-grid robust objective: a single regression tree is fitted on a grid
// extended beyond the optimization domain (clipped to the noise supports),
// and its analytic expectation is evaluated at every in-domain grid point.
struct GroundTruth {
    std::string label;
    std::vector<std::vector<double>> axes; // in-domain evaluation lattice
    std::vector<double> merits;            // robust merit per point, row-major
    std::vector<double> raw;               // objective value per point
    int grid_density = 200;
    std::uint64_t seed = 0;
    double overshoot_sigmas = 2.0;

    std::size_t n_points() const { return merits.size(); }
    std::vector<double> point(std::size_t flat) const;
    std::size_t nearest_index(std::span<const double> x) const;
    double lookup(std::span<const double> x) const; // merit at nearest point
    std::size_t robust_argmin() const;
    std::size_t raw_argmin() const;
    double merit_range() const;
    // (merit at raw minimum - merit at robust minimum) / merit range, in %
    double improvement_percent() const;

    void save_csv(const std::filesystem::path& path) const;
    static GroundTruth load_csv(const std::filesystem::path& path);
};

GroundTruth ground_truth(const BenchmarkSpec& spec, int grid_density = 200,
                         std::uint64_t seed = 0);

// Disk-cached variant keyed by (label, density, seed).
GroundTruth ground_truth_cached(const BenchmarkSpec& spec,
                                const std::filesystem::path& cache_dir,
                                int grid_density = 200, std::uint64_t seed = 0);

// Rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

} // namespace robusta
