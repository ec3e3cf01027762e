#include "robusta/surfaces.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "robusta/estimator.hpp"
#include "robusta/trees.hpp"

namespace robusta {

std::string to_string(SurfaceName name) {
    switch (name) {
        case SurfaceName::bertsimas: return "bertsimas";
        case SurfaceName::cliff: return "cliff";
        case SurfaceName::sine: return "sine";
        case SurfaceName::discrete_bertsimas: return "discrete_bertsimas";
        case SurfaceName::discrete_cliff: return "discrete_cliff";
    }
    return "?";
}

SurfaceName surface_name_from_string(const std::string& s) {
    if (s == "bertsimas") return SurfaceName::bertsimas;
    if (s == "cliff") return SurfaceName::cliff;
    if (s == "sine") return SurfaceName::sine;
    if (s == "discrete_bertsimas") return SurfaceName::discrete_bertsimas;
    if (s == "discrete_cliff") return SurfaceName::discrete_cliff;
    throw InvalidInputError("unknown surface '" + s + "'");
}

namespace {

double bertsimas_poly(double x, double y) {
    const double x2 = x * x, x3 = x2 * x, x4 = x3 * x, x5 = x4 * x, x6 = x5 * x;
    const double y2 = y * y, y3 = y2 * y, y4 = y3 * y, y5 = y4 * y, y6 = y5 * y;
    const double f = 2 * x6 - 12.2 * x5 + 21.2 * x4 + 6.2 * x - 6.4 * x3 - 4.7 * x2 +
                     y6 - 11 * y5 + 43.3 * y4 - 10 * y - 74.8 * y3 + 56.9 * y2 -
                     4.1 * x * y - 0.1 * y2 * x2 + 0.4 * y2 * x + 0.4 * x2 * y;
    return std::min(f, 80.0); // capped codomain
}

double cliff_term(double x) { return 10.0 / (1.0 + 0.3 * std::exp(6.0 * x)) + 0.2 * x * x; }

double sine_term(double x) {
    return std::sin(2.0 * std::numbers::pi * x * x) + x * x + 0.2 * x;
}

// continuous parents of the 22-point discrete grids
constexpr double kBertsimasLo[2] = {-1.0, -0.5};
constexpr double kBertsimasHi[2] = {3.2, 4.4};
constexpr double kCliffLo = 0.0;
constexpr double kCliffHi = 5.0;

double grid_to_continuous(double v, double lo, double hi) {
    return lo + (v - 1.0) * (hi - lo) / 21.0;
}

} // namespace

Surface Surface::make(SurfaceName name, int dims) {
    Surface s;
    s.name = name;
    switch (name) {
        case SurfaceName::bertsimas:
            if (dims != 2) throw InvalidInputError("bertsimas is two-dimensional");
            s.dims = 2;
            s.domain_lo = {kBertsimasLo[0], kBertsimasLo[1]};
            s.domain_hi = {kBertsimasHi[0], kBertsimasHi[1]};
            break;
        case SurfaceName::cliff:
            if (dims < 1) throw InvalidInputError("cliff needs at least one dimension");
            s.dims = dims;
            s.domain_lo.assign(static_cast<std::size_t>(dims), kCliffLo);
            s.domain_hi.assign(static_cast<std::size_t>(dims), kCliffHi);
            break;
        case SurfaceName::sine:
            if (dims < 1) throw InvalidInputError("sine needs at least one dimension");
            s.dims = dims;
            s.domain_lo.assign(static_cast<std::size_t>(dims), -1.0);
            s.domain_hi.assign(static_cast<std::size_t>(dims), 1.0);
            break;
        case SurfaceName::discrete_bertsimas:
        case SurfaceName::discrete_cliff:
            if (dims != 2)
                throw InvalidInputError("discrete surfaces are two-dimensional");
            s.dims = 2;
            s.domain_lo = {1.0, 1.0};
            s.domain_hi = {22.0, 22.0};
            break;
    }
    return s;
}

Surface Surface::make(const std::string& name, int dims) {
    return make(surface_name_from_string(name), dims);
}

double Surface::eval_extended(std::span<const double> x) const {
    if (x.size() != static_cast<std::size_t>(dims))
        throw InvalidInputError("point dimensionality does not match the surface");
    switch (name) {
        case SurfaceName::bertsimas:
            return bertsimas_poly(x[0], x[1]);
        case SurfaceName::cliff: {
            double f = 0.0;
            for (double v : x) f += cliff_term(v);
            return f;
        }
        case SurfaceName::sine: {
            double f = 0.0;
            for (double v : x) f += sine_term(v);
            return f;
        }
        case SurfaceName::discrete_bertsimas:
            return bertsimas_poly(grid_to_continuous(x[0], kBertsimasLo[0], kBertsimasHi[0]),
                                  grid_to_continuous(x[1], kBertsimasLo[1], kBertsimasHi[1]));
        case SurfaceName::discrete_cliff:
            return cliff_term(grid_to_continuous(x[0], kCliffLo, kCliffHi)) +
                   cliff_term(grid_to_continuous(x[1], kCliffLo, kCliffHi));
    }
    throw InternalConsistencyError("unreachable surface name");
}

double Surface::eval(std::span<const double> x) const {
    if (is_discrete()) {
        for (std::size_t d = 0; d < x.size() && d < 2; ++d)
            if (x[d] != std::floor(x[d]) || x[d] < 1.0 || x[d] > 22.0)
                throw InvalidInputError(
                    "discrete surfaces accept integer coordinates in 1..22 only");
    }
    return eval_extended(x);
}

const std::vector<std::string>& BenchmarkSpec::labels() {
    static const std::vector<std::string> all = {"S1", "S2", "S3", "S4",
                                                 "S5", "S6", "S7", "S8"};
    return all;
}

BenchmarkSpec BenchmarkSpec::table_entry(const std::string& label, int extra_dims) {
    if (extra_dims < 0) throw InvalidInputError("extra_dims must be non-negative");
    if (extra_dims > 0 && label != "S1")
        throw InvalidInputError("extra noise-free dimensions are an S1 variant");

    BenchmarkSpec spec;
    spec.label = label;
    if (label == "S1") {
        spec.surface = Surface::make(SurfaceName::cliff, 2 + extra_dims);
        spec.noise.assign(2, NoiseModel::make_normal(1.0));
        for (int d = 0; d < extra_dims; ++d) spec.noise.push_back(NoiseModel::make_delta());
    } else if (label == "S2") {
        spec.surface = Surface::make(SurfaceName::cliff, 2);
        spec.noise.assign(2, NoiseModel::make_gamma_bounded(2.0, -kInf, 5.0));
    } else if (label == "S3") {
        spec.surface = Surface::make(SurfaceName::bertsimas, 2);
        spec.noise.assign(2, NoiseModel::make_uniform(1.5));
    } else if (label == "S4") {
        spec.surface = Surface::make(SurfaceName::bertsimas, 2);
        spec.noise.assign(2, NoiseModel::make_normal(0.8));
    } else if (label == "S5") {
        spec.surface = Surface::make(SurfaceName::sine, 2);
        spec.noise.assign(2, NoiseModel::make_uniform(0.5));
    } else if (label == "S6") {
        spec.surface = Surface::make(SurfaceName::sine, 2);
        spec.noise.assign(2, NoiseModel::make_normal(0.2));
    } else if (label == "S7") {
        spec.surface = Surface::make(SurfaceName::discrete_cliff, 2);
        // this entry's scale of 3 is the exponential decay length of the
        // two-sided geometric (q = e^{-1/3}), not its standard deviation;
        // convert before calling the std-parametrized constructor
        const double q = std::exp(-1.0 / 3.0);
        spec.noise.assign(2, NoiseModel::make_discrete_laplace(std::sqrt(2.0 * q) / (1.0 - q)));
    } else if (label == "S8") {
        spec.surface = Surface::make(SurfaceName::discrete_bertsimas, 2);
        spec.noise.assign(2, NoiseModel::make_poisson_shifted(1.0));
    } else {
        throw InvalidInputError("unknown benchmark label '" + label + "'");
    }
    return spec;
}

std::vector<std::vector<double>> domain_axes(const Surface& surface, int n_per_dim) {
    if (n_per_dim < 2) throw InvalidInputError("need at least two points per dimension");
    std::vector<std::vector<double>> axes(static_cast<std::size_t>(surface.dims));
    for (std::size_t d = 0; d < axes.size(); ++d) {
        const double lo = surface.domain_lo[d];
        const double hi = surface.domain_hi[d];
        const double step = (hi - lo) / static_cast<double>(n_per_dim - 1);
        for (int i = 0; i < n_per_dim; ++i) {
            double v = i == n_per_dim - 1 ? hi : lo + step * i;
            if (surface.is_discrete()) v = std::round(v);
            axes[d].push_back(v);
        }
        axes[d].erase(std::unique(axes[d].begin(), axes[d].end()), axes[d].end());
    }
    return axes;
}

std::vector<ColumnSpec> surface_columns(const Surface& surface) {
    std::vector<ColumnSpec> columns;
    for (int d = 0; d < surface.dims; ++d)
        columns.push_back({"x" + std::to_string(d),
                           surface.is_discrete() ? ColumnKind::discrete
                                                 : ColumnKind::continuous,
                           {}});
    return columns;
}

namespace {

// walks a product lattice in row-major order (last axis fastest)
template <typename Fn>
void for_each_lattice_point(const std::vector<std::vector<double>>& axes, Fn&& fn) {
    std::vector<std::size_t> idx(axes.size(), 0);
    std::vector<double> point(axes.size());
    for (;;) {
        for (std::size_t d = 0; d < axes.size(); ++d) point[d] = axes[d][idx[d]];
        fn(point);
        std::size_t d = axes.size();
        for (;;) {
            if (d == 0) return;
            --d;
            if (++idx[d] < axes[d].size()) break;
            idx[d] = 0;
        }
    }
}

} // namespace

Dataset sample_grid(const Surface& surface, int n_per_dim) {
    Dataset data;
    data.columns = surface_columns(surface);
    for_each_lattice_point(domain_axes(surface, n_per_dim),
                           [&](const std::vector<double>& point) {
                               data.add_row(point, surface.eval(point));
                           });
    return data;
}

namespace {

// how far realized values can stray from an in-domain query, per dimension
double noise_reach(const NoiseModel& model, double domain_hi) {
    switch (model.kind()) {
        case NoiseKind::delta:
        case NoiseKind::categorical_simplex:
            return 0.0;
        case NoiseKind::normal:
        case NoiseKind::truncated_normal:
        case NoiseKind::gamma_bounded:
            return 2.0 * model.scale();
        case NoiseKind::uniform:
            return 0.5 * model.scale();
        case NoiseKind::discrete_laplace:
            return std::ceil(2.0 * model.scale());
        case NoiseKind::poisson_shifted:
            // widest spread occurs at the far end of the domain
            return std::ceil(2.0 * std::sqrt(model.poisson_lambda(domain_hi)));
    }
    return 0.0;
}

void clip_to_support(const NoiseModel& model, double& lo, double& hi) {
    switch (model.kind()) {
        case NoiseKind::truncated_normal:
        case NoiseKind::gamma_bounded:
        case NoiseKind::discrete_laplace:
            lo = std::max(lo, model.lower_bound());
            hi = std::min(hi, model.upper_bound());
            break;
        case NoiseKind::poisson_shifted:
            lo = std::max(lo, model.lower_bound());
            break;
        default:
            break;
    }
}

} // namespace

GroundTruth ground_truth(const BenchmarkSpec& spec, int grid_density,
                         std::uint64_t seed) {
    const Surface& surface = spec.surface;
    if (spec.noise.size() != static_cast<std::size_t>(surface.dims))
        throw InvalidInputError("benchmark spec has a wrong noise model count");
    if (!surface.is_discrete() && grid_density < 50)
        throw InvalidInputError("continuous ground truth needs density >= 50");

    const auto n_dims = static_cast<std::size_t>(surface.dims);
    std::vector<std::vector<double>> train_axes(n_dims);
    std::vector<std::vector<double>> eval_axes(n_dims);
    for (std::size_t d = 0; d < n_dims; ++d) {
        const double reach = noise_reach(spec.noise[d], surface.domain_hi[d]);
        double lo = surface.domain_lo[d] - reach;
        double hi = surface.domain_hi[d] + reach;
        clip_to_support(spec.noise[d], lo, hi);
        if (surface.is_discrete() || spec.noise[d].is_integer_kind()) {
            for (double v = std::ceil(lo); v <= std::floor(hi); v += 1.0)
                train_axes[d].push_back(v);
            for (double v = surface.domain_lo[d]; v <= surface.domain_hi[d]; v += 1.0)
                eval_axes[d].push_back(v);
        } else {
            const double step = (hi - lo) / static_cast<double>(grid_density - 1);
            for (int i = 0; i < grid_density; ++i) {
                const double v = i == grid_density - 1 ? hi : lo + step * i;
                train_axes[d].push_back(v);
                if (v >= surface.domain_lo[d] - 1e-12 && v <= surface.domain_hi[d] + 1e-12)
                    eval_axes[d].push_back(v);
            }
        }
    }

    Dataset dense;
    dense.columns = surface_columns(surface);
    for_each_lattice_point(train_axes, [&](const std::vector<double>& point) {
        dense.add_row(point, surface.eval_extended(point));
    });

    TreeParams params;
    params.kind = TreeKind::regression_tree;
    params.n_trees = 1;
    params.rng_seed = seed;
    const Forest forest = fit(dense, params);

    GroundTruth truth;
    truth.label = spec.label;
    truth.axes = eval_axes;
    truth.grid_density = grid_density;
    truth.seed = seed;
    truth.merits = TileEvaluator(forest).expectation_lattice(eval_axes, spec.noise);
    truth.raw.reserve(truth.merits.size());
    for_each_lattice_point(eval_axes, [&](const std::vector<double>& point) {
        truth.raw.push_back(surface.eval(point));
    });
    return truth;
}

std::vector<double> GroundTruth::point(std::size_t flat) const {
    std::vector<double> out(axes.size());
    for (std::size_t d = axes.size(); d-- > 0;) {
        out[d] = axes[d][flat % axes[d].size()];
        flat /= axes[d].size();
    }
    return out;
}

std::size_t GroundTruth::nearest_index(std::span<const double> x) const {
    if (x.size() != axes.size())
        throw InvalidInputError("point dimensionality does not match the ground truth");
    std::size_t flat = 0;
    for (std::size_t d = 0; d < axes.size(); ++d) {
        const auto& axis = axes[d];
        const auto it = std::lower_bound(axis.begin(), axis.end(), x[d]);
        std::size_t i = static_cast<std::size_t>(it - axis.begin());
        if (i == axis.size()) {
            i = axis.size() - 1;
        } else if (i > 0 && x[d] - axis[i - 1] <= axis[i] - x[d]) {
            i = i - 1;
        }
        flat = flat * axis.size() + i;
    }
    return flat;
}

double GroundTruth::lookup(std::span<const double> x) const {
    return merits[nearest_index(x)];
}

std::size_t GroundTruth::robust_argmin() const {
    return static_cast<std::size_t>(
        std::min_element(merits.begin(), merits.end()) - merits.begin());
}

std::size_t GroundTruth::raw_argmin() const {
    return static_cast<std::size_t>(std::min_element(raw.begin(), raw.end()) -
                                    raw.begin());
}

double GroundTruth::merit_range() const {
    const auto [lo, hi] = std::minmax_element(merits.begin(), merits.end());
    return *hi - *lo;
}

double GroundTruth::improvement_percent() const {
    const double range = merit_range();
    if (range == 0.0) return 0.0;
    return 100.0 * (merits[raw_argmin()] - merits[robust_argmin()]) / range;
}

void GroundTruth::save_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw InvalidInputError("cannot write file: " + path.string());
    out.precision(17);
    for (std::size_t d = 0; d < axes.size(); ++d) out << 'x' << d << ',';
    out << "merit,raw\n";
    for (std::size_t i = 0; i < merits.size(); ++i) {
        for (double v : point(i)) out << v << ',';
        out << merits[i] << ',' << raw[i] << '\n';
    }
}

GroundTruth GroundTruth::load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInputError("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    const auto cells = parse_csv(ss.str());
    if (cells.size() < 2 || cells.front().size() < 3)
        throw InvalidInputError("malformed ground-truth CSV: " + path.string());
    const std::size_t n_dims = cells.front().size() - 2;

    GroundTruth truth;
    truth.axes.resize(n_dims);
    std::vector<std::vector<double>> coords(cells.size() - 1);
    for (std::size_t r = 1; r < cells.size(); ++r) {
        const auto& row = cells[r];
        if (row.size() != n_dims + 2)
            throw InvalidInputError("malformed ground-truth CSV row");
        coords[r - 1].resize(n_dims);
        for (std::size_t d = 0; d < n_dims; ++d) {
            coords[r - 1][d] = std::stod(row[d]);
            truth.axes[d].push_back(coords[r - 1][d]);
        }
    }
    for (auto& axis : truth.axes) {
        std::sort(axis.begin(), axis.end());
        axis.erase(std::unique(axis.begin(), axis.end()), axis.end());
    }
    std::size_t total = 1;
    for (const auto& axis : truth.axes) total *= axis.size();
    if (total != cells.size() - 1)
        throw InvalidInputError("ground-truth CSV does not form a full lattice");

    truth.merits.assign(total, 0.0);
    truth.raw.assign(total, 0.0);
    for (std::size_t r = 1; r < cells.size(); ++r) {
        const std::size_t flat = truth.nearest_index(coords[r - 1]);
        truth.merits[flat] = std::stod(cells[r][n_dims]);
        truth.raw[flat] = std::stod(cells[r][n_dims + 1]);
    }
    return truth;
}

GroundTruth ground_truth_cached(const BenchmarkSpec& spec,
                                const std::filesystem::path& cache_dir,
                                int grid_density, std::uint64_t seed) {
    std::filesystem::create_directories(cache_dir);
    const auto path = cache_dir / (spec.label + "_d" + std::to_string(grid_density) +
                                   "_s" + std::to_string(seed) + ".csv");
    if (std::filesystem::exists(path)) {
        GroundTruth truth = GroundTruth::load_csv(path);
        truth.label = spec.label;
        truth.grid_density = grid_density;
        truth.seed = seed;
        return truth;
    }
    GroundTruth truth = ground_truth(spec, grid_density, seed);
    truth.save_csv(path);
    return truth;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0; // average, 1-based
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

} // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InvalidInputError("length mismatch");
    if (a.size() < 2) throw InvalidInputError("need at least two pairs");
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const double ma = mean_of(ra), mb = mean_of(rb);
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        const double da = ra[i] - ma, db = rb[i] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if (va == 0.0 || vb == 0.0)
        throw InvalidInputError("rank correlation undefined for constant input");
    return cov / std::sqrt(va * vb);
}

} // namespace robusta
