#include "robusta/noise.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <json.hpp>

namespace robusta {

using nlohmann::json;

namespace {

double phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
double phi_inv(double u) { return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * u); }

// Gamma shape/scale pinned so that the mode sits `mu` away from the support
// bound and the standard deviation is exactly `sigma`:
//   mode = (k - 1) * theta = mu,  var = k * theta^2 = sigma^2.
struct GammaParams { double k, theta; };
GammaParams gamma_for(double mu, double sigma) {
    const double theta = 0.5 * (-mu + std::sqrt(mu * mu + 4.0 * sigma * sigma));
    return {1.0 + mu / theta, theta};
}

// Two-sided geometric ratio with variance 2q/(1-q)^2 = sigma^2; the smaller
// root of sigma^2 q^2 - (2 sigma^2 + 2) q + sigma^2 = 0 lies in (0, 1).
double discrete_laplace_ratio(double sigma) {
    const double s2 = sigma * sigma;
    const double b = 2.0 * s2 + 2.0;
    return (b - std::sqrt(b * b - 4.0 * s2 * s2)) / (2.0 * s2);
}

void require_integer_query(double query) {
    if (std::floor(query) != query)
        throw InvalidInputError("integer noise kinds require an integer query value");
}

} // namespace

std::string to_string(NoiseKind kind) {
    switch (kind) {
        case NoiseKind::delta: return "delta";
        case NoiseKind::normal: return "normal";
        case NoiseKind::truncated_normal: return "truncated_normal";
        case NoiseKind::uniform: return "uniform";
        case NoiseKind::gamma_bounded: return "gamma_bounded";
        case NoiseKind::poisson_shifted: return "poisson_shifted";
        case NoiseKind::discrete_laplace: return "discrete_laplace";
        case NoiseKind::categorical_simplex: return "categorical";
    }
    return "?";
}

NoiseModel NoiseModel::make_delta() {
    NoiseModel m;
    m.kind_ = NoiseKind::delta;
    return m;
}

NoiseModel NoiseModel::make_normal(double std_dev) {
    if (!(std_dev > 0)) throw InvalidInputError("normal noise needs std_dev > 0");
    NoiseModel m;
    m.kind_ = NoiseKind::normal;
    m.scale_ = std_dev;
    return m;
}

NoiseModel NoiseModel::make_truncated_normal(double std_dev, double lo, double hi) {
    if (!(std_dev > 0)) throw InvalidInputError("truncated normal noise needs std_dev > 0");
    if (!(lo < hi)) throw InvalidInputError("truncation bounds must satisfy lo < hi");
    NoiseModel m;
    m.kind_ = NoiseKind::truncated_normal;
    m.scale_ = std_dev;
    m.lo_ = lo;
    m.hi_ = hi;
    return m;
}

NoiseModel NoiseModel::make_uniform(double range) {
    if (!(range > 0)) throw InvalidInputError("uniform noise needs range > 0");
    NoiseModel m;
    m.kind_ = NoiseKind::uniform;
    m.scale_ = range;
    return m;
}

NoiseModel NoiseModel::make_gamma_bounded(double std_dev, double lo, double hi) {
    if (!(std_dev > 0)) throw InvalidInputError("gamma noise needs std_dev > 0");
    const bool lo_finite = std::isfinite(lo);
    const bool hi_finite = std::isfinite(hi);
    if (lo_finite == hi_finite)
        throw InvalidInputError("gamma noise needs exactly one finite support bound");
    NoiseModel m;
    m.kind_ = NoiseKind::gamma_bounded;
    m.scale_ = std_dev;
    m.lo_ = lo_finite ? lo : -kInf;
    m.hi_ = hi_finite ? hi : kInf;
    return m;
}

NoiseModel NoiseModel::make_poisson_shifted(double lo) {
    if (!std::isfinite(lo) || std::floor(lo) != lo)
        throw InvalidInputError("shifted Poisson noise needs an integer lower bound");
    NoiseModel m;
    m.kind_ = NoiseKind::poisson_shifted;
    m.lo_ = lo;
    return m;
}

NoiseModel NoiseModel::make_discrete_laplace(double std_dev, double lo, double hi) {
    if (!(std_dev > 0)) throw InvalidInputError("discrete Laplace noise needs std_dev > 0");
    if ((std::isfinite(lo) && std::floor(lo) != lo) ||
        (std::isfinite(hi) && std::floor(hi) != hi))
        throw InvalidInputError("discrete Laplace support bounds must be integers");
    if (!(lo < hi)) throw InvalidInputError("discrete Laplace support bounds must satisfy lo < hi");
    NoiseModel m;
    m.kind_ = NoiseKind::discrete_laplace;
    m.scale_ = std_dev;
    m.lo_ = std::isfinite(lo) ? lo : -kInf;
    m.hi_ = std::isfinite(hi) ? hi : kInf;
    m.dl_q_ = discrete_laplace_ratio(std_dev);
    return m;
}

NoiseModel NoiseModel::make_categorical(double stay_probability) {
    if (!(stay_probability > 0) || stay_probability > 1)
        throw InvalidInputError("categorical noise needs stay probability in (0, 1]");
    NoiseModel m;
    m.kind_ = NoiseKind::categorical_simplex;
    m.stay_prob_ = stay_probability;
    return m;
}

double NoiseModel::poisson_lambda(double query) const {
    // Mode pinned at the query; floored so the distribution stays proper
    // when the query sits on the support bound.
    return std::max(0.5, query - lo_ + 0.5);
}

double NoiseModel::cdf(double query, double a) const {
    switch (kind_) {
        case NoiseKind::delta:
            return a >= query ? 1.0 : 0.0;
        case NoiseKind::normal:
            return phi((a - query) / scale_);
        case NoiseKind::truncated_normal: {
            if (a <= lo_) return 0.0;
            if (a >= hi_) return 1.0;
            const double flo = lo_ == -kInf ? 0.0 : phi((lo_ - query) / scale_);
            const double fhi = hi_ == kInf ? 1.0 : phi((hi_ - query) / scale_);
            const double denom = fhi - flo;
            if (!(denom > 0))
                throw InvalidInputError("no probability mass inside truncation bounds");
            return std::clamp((phi((a - query) / scale_) - flo) / denom, 0.0, 1.0);
        }
        case NoiseKind::uniform:
            return std::clamp((a - (query - 0.5 * scale_)) / scale_, 0.0, 1.0);
        case NoiseKind::gamma_bounded: {
            if (lo_ != -kInf) {
                if (query < lo_) throw InvalidInputError("query below the support bound");
                if (a <= lo_) return 0.0;
                const auto [k, theta] = gamma_for(query - lo_, scale_);
                return boost::math::gamma_p(k, (a - lo_) / theta);
            }
            if (query > hi_) throw InvalidInputError("query above the support bound");
            if (a >= hi_) return 1.0;
            const auto [k, theta] = gamma_for(hi_ - query, scale_);
            return boost::math::gamma_q(k, (hi_ - a) / theta);
        }
        case NoiseKind::poisson_shifted: {
            require_integer_query(query);
            if (query < lo_) throw InvalidInputError("query below the support bound");
            if (a < lo_) return 0.0;
            const double counts = std::floor(a - lo_);
            return boost::math::gamma_q(counts + 1.0, poisson_lambda(query));
        }
        case NoiseKind::discrete_laplace: {
            require_integer_query(query);
            const auto base = [&](double x) {
                const double m = std::floor(x) - query;
                if (m >= 0) return 1.0 - std::pow(dl_q_, m + 1.0) / (1.0 + dl_q_);
                return std::pow(dl_q_, -m) / (1.0 + dl_q_);
            };
            if (lo_ == -kInf && hi_ == kInf) return base(a);
            if (a < lo_) return 0.0;
            if (a >= hi_) return 1.0;
            const double flo = lo_ == -kInf ? 0.0 : base(lo_ - 1.0);
            const double fhi = hi_ == kInf ? 1.0 : base(hi_);
            if (!(fhi - flo > 0))
                throw InvalidInputError("no probability mass inside truncation bounds");
            return std::clamp((base(a) - flo) / (fhi - flo), 0.0, 1.0);
        }
        case NoiseKind::categorical_simplex:
            throw UnsupportedOperationError("cdf undefined for categorical noise");
    }
    throw InternalConsistencyError("unreachable noise kind");
}

double NoiseModel::interval_probability(double query, double lo, double hi) const {
    if (is_categorical())
        throw UnsupportedOperationError("interval probability undefined for categorical noise");
    if (!(lo <= hi)) throw InvalidInputError("interval bounds must satisfy lo <= hi");
    if (kind_ == NoiseKind::delta)
        return (query >= lo && query < hi) ? 1.0 : 0.0;
    if (is_integer_kind()) {
        // lattice points in [lo, hi): those <= ceil(hi)-1 minus those <= ceil(lo)-1
        const double upper = hi == kInf ? 1.0 : cdf(query, std::ceil(hi) - 1.0);
        const double lower = lo == -kInf ? 0.0 : cdf(query, std::ceil(lo) - 1.0);
        return std::clamp(upper - lower, 0.0, 1.0);
    }
    const double upper = hi == kInf ? 1.0 : cdf(query, hi);
    const double lower = lo == -kInf ? 0.0 : cdf(query, lo);
    return std::clamp(upper - lower, 0.0, 1.0);
}

double NoiseModel::category_probability(int query_cat, int cat, int n_categories) const {
    if (n_categories < 1) throw InvalidInputError("need at least one category");
    if (query_cat < 0 || query_cat >= n_categories || cat < 0 || cat >= n_categories)
        throw InvalidInputError("category index out of range");
    if (kind_ == NoiseKind::delta) return cat == query_cat ? 1.0 : 0.0;
    if (!is_categorical())
        throw UnsupportedOperationError("category probability requires categorical noise");
    if (n_categories == 1) return 1.0;
    return cat == query_cat ? stay_prob_
                            : (1.0 - stay_prob_) / static_cast<double>(n_categories - 1);
}

double NoiseModel::sample(double query, Rng& rng) const {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    switch (kind_) {
        case NoiseKind::delta:
            return query;
        case NoiseKind::normal:
            return std::normal_distribution<double>(query, scale_)(rng);
        case NoiseKind::truncated_normal: {
            const double flo = lo_ == -kInf ? 0.0 : phi((lo_ - query) / scale_);
            const double fhi = hi_ == kInf ? 1.0 : phi((hi_ - query) / scale_);
            if (!(fhi - flo > 0))
                throw InvalidInputError("no probability mass inside truncation bounds");
            const double u = flo + unit(rng) * (fhi - flo);
            return query + scale_ * phi_inv(u);
        }
        case NoiseKind::uniform:
            return query - 0.5 * scale_ + scale_ * unit(rng);
        case NoiseKind::gamma_bounded: {
            if (lo_ != -kInf) {
                if (query < lo_) throw InvalidInputError("query below the support bound");
                const auto [k, theta] = gamma_for(query - lo_, scale_);
                return lo_ + std::gamma_distribution<double>(k, theta)(rng);
            }
            if (query > hi_) throw InvalidInputError("query above the support bound");
            const auto [k, theta] = gamma_for(hi_ - query, scale_);
            return hi_ - std::gamma_distribution<double>(k, theta)(rng);
        }
        case NoiseKind::poisson_shifted: {
            require_integer_query(query);
            if (query < lo_) throw InvalidInputError("query below the support bound");
            return lo_ + static_cast<double>(
                             std::poisson_distribution<long>(poisson_lambda(query))(rng));
        }
        case NoiseKind::discrete_laplace: {
            require_integer_query(query);
            // difference of two geometrics with failure ratio q; support
            // bounds are enforced by rejection
            std::geometric_distribution<long> geom(1.0 - dl_q_);
            for (int attempt = 0; attempt < 100000; ++attempt) {
                const long g1 = geom(rng);
                const long g2 = geom(rng);
                const double v = query + static_cast<double>(g1 - g2);
                if (v >= lo_ && v <= hi_) return v;
            }
            throw InternalConsistencyError(
                "discrete Laplace rejection sampling found no in-support draw");
        }
        case NoiseKind::categorical_simplex:
            throw UnsupportedOperationError("use sample_category for categorical noise");
    }
    throw InternalConsistencyError("unreachable noise kind");
}

int NoiseModel::sample_category(int query_cat, int n_categories, Rng& rng) const {
    if (n_categories < 1) throw InvalidInputError("need at least one category");
    if (query_cat < 0 || query_cat >= n_categories)
        throw InvalidInputError("category index out of range");
    if (kind_ == NoiseKind::delta) return query_cat;
    if (!is_categorical())
        throw UnsupportedOperationError("sample_category requires categorical noise");
    if (n_categories == 1) return 0;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (unit(rng) < stay_prob_) return query_cat;
    std::uniform_int_distribution<int> other(0, n_categories - 2);
    const int k = other(rng);
    return k >= query_cat ? k + 1 : k;
}

void NoiseModel::set_scale_hook(ScaleHook hook) {
    if (kind_ == NoiseKind::delta || kind_ == NoiseKind::poisson_shifted ||
        kind_ == NoiseKind::categorical_simplex)
        throw UnsupportedOperationError("this noise kind has no scale parameter");
    scale_hook_ = std::move(hook);
}

NoiseModel NoiseModel::resolved(std::span<const double> full_query) const {
    if (!scale_hook_) return *this;
    NoiseModel m = *this;
    m.scale_hook_ = nullptr;
    m.scale_ = scale_hook_(full_query);
    if (!(m.scale_ > 0))
        throw InvalidInputError("scale hook produced a non-positive scale");
    if (kind_ == NoiseKind::discrete_laplace)
        m.dl_q_ = discrete_laplace_ratio(m.scale_);
    return m;
}

namespace {

NoiseModel parse_noise_entry(const json& entry) {
    const std::string kind = entry.at("kind").get<std::string>();
    if (kind == "delta") return NoiseModel::make_delta();
    if (kind == "normal") return NoiseModel::make_normal(entry.at("std_dev").get<double>());
    if (kind == "truncated_normal")
        return NoiseModel::make_truncated_normal(entry.at("std_dev").get<double>(),
                                                 entry.value("lo", -kInf),
                                                 entry.value("hi", kInf));
    if (kind == "uniform") return NoiseModel::make_uniform(entry.at("range").get<double>());
    if (kind == "gamma_bounded")
        return NoiseModel::make_gamma_bounded(entry.at("std_dev").get<double>(),
                                              entry.value("lo", -kInf),
                                              entry.value("hi", kInf));
    if (kind == "poisson_shifted")
        return NoiseModel::make_poisson_shifted(entry.at("lo").get<double>());
    if (kind == "discrete_laplace")
        return NoiseModel::make_discrete_laplace(entry.at("std_dev").get<double>(),
                                                 entry.value("lo", -kInf),
                                                 entry.value("hi", kInf));
    if (kind == "categorical")
        return NoiseModel::make_categorical(entry.at("stay_probability").get<double>());
    throw InvalidInputError("unknown noise kind '" + kind + "'");
}

} // namespace

std::vector<NoiseModel> load_noise_spec(const std::string& json_text,
                                        const std::vector<ColumnSpec>& columns) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw InvalidInputError(std::string("noise JSON parse failure: ") + e.what());
    }
    std::vector<NoiseModel> models(columns.size(), NoiseModel::make_delta());
    if (!doc.contains("models")) return models;
    if (!doc["models"].is_array())
        throw InvalidInputError("'models' must be an array");

    std::vector<bool> seen(columns.size(), false);
    for (const auto& entry : doc["models"]) {
        std::string col_name;
        NoiseModel model = NoiseModel::make_delta();
        try {
            col_name = entry.at("column").get<std::string>();
            model = parse_noise_entry(entry);
        } catch (const json::exception& e) {
            throw InvalidInputError(std::string("malformed noise spec entry: ") + e.what());
        }
        std::size_t idx = columns.size();
        for (std::size_t c = 0; c < columns.size(); ++c)
            if (columns[c].name == col_name) { idx = c; break; }
        if (idx == columns.size())
            throw InvalidInputError("noise spec names unknown column '" + col_name + "'");
        if (seen[idx])
            throw InvalidInputError("noise spec repeats column '" + col_name + "'");
        seen[idx] = true;

        const bool cat_col = columns[idx].kind == ColumnKind::categorical;
        if (cat_col && !(model.is_categorical() || model.kind() == NoiseKind::delta))
            throw InvalidInputError("categorical column '" + col_name +
                                    "' needs categorical or delta noise");
        if (!cat_col && model.is_categorical())
            throw InvalidInputError("categorical noise on non-categorical column '" +
                                    col_name + "'");
        if (model.is_integer_kind() && columns[idx].kind != ColumnKind::discrete)
            throw InvalidInputError("integer-valued noise on column '" + col_name +
                                    "' requires a discrete column");
        models[idx] = model;
    }
    return models;
}

std::string noise_spec_json(const std::vector<NoiseModel>& models,
                            const std::vector<ColumnSpec>& columns) {
    if (models.size() != columns.size())
        throw InvalidInputError("one noise model per column required");
    json arr = json::array();
    for (std::size_t c = 0; c < columns.size(); ++c) {
        const NoiseModel& m = models[c];
        json entry{{"column", columns[c].name}, {"kind", to_string(m.kind())}};
        switch (m.kind()) {
            case NoiseKind::delta: break;
            case NoiseKind::normal:
                entry["std_dev"] = m.scale();
                break;
            case NoiseKind::truncated_normal:
            case NoiseKind::gamma_bounded:
            case NoiseKind::discrete_laplace:
                entry["std_dev"] = m.scale();
                if (m.lower_bound() != -kInf) entry["lo"] = m.lower_bound();
                if (m.upper_bound() != kInf) entry["hi"] = m.upper_bound();
                break;
            case NoiseKind::uniform:
                entry["range"] = m.scale();
                break;
            case NoiseKind::poisson_shifted:
                entry["lo"] = m.lower_bound();
                break;
            case NoiseKind::categorical_simplex:
                entry["stay_probability"] = m.stay_probability();
                break;
        }
        arr.push_back(std::move(entry));
    }
    return json{{"models", arr}}.dump(2);
}

} // namespace robusta
