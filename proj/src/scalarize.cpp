#include "robusta/scalarize.hpp"

#include <cmath>

#include <json.hpp>

namespace robusta {

using nlohmann::json;

namespace {

// separates hierarchy tiers by more than any plausible objective magnitude
constexpr double kTierScale = 1e9;

double field_value(ObjectiveField field, const RobustEstimate& est) {
    return field == ObjectiveField::expectation ? est.expectation : est.output_std;
}

// canonical lower-is-better value
double directed(Direction direction, double v) {
    return direction == Direction::minimize ? v : -v;
}

} // namespace

Scalarizer Scalarizer::weighted_sum(double w_e, double w_std) {
    if (!std::isfinite(w_e) || !std::isfinite(w_std))
        throw InvalidInputError("weights must be finite");
    Scalarizer s;
    s.kind = ScalarizerKind::weighted_sum;
    s.w_e = w_e;
    s.w_std = w_std;
    return s;
}

Scalarizer Scalarizer::threshold_hierarchy(std::vector<HierarchyLevel> levels) {
    if (levels.empty()) throw InvalidInputError("hierarchy needs at least one level");
    for (const auto& level : levels)
        if (!std::isfinite(level.threshold))
            throw InvalidInputError("hierarchy thresholds must be finite");
    Scalarizer s;
    s.kind = ScalarizerKind::threshold_hierarchy;
    s.levels = std::move(levels);
    return s;
}

double scalarize(const Scalarizer& s, const RobustEstimate& est) {
    if (s.kind == ScalarizerKind::weighted_sum)
        return s.w_e * est.expectation + s.w_std * est.output_std;

    const auto n = s.levels.size();
    // every level but the last acts as a constraint; the first violated one
    // dominates the merit, higher tiers more strongly
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const auto& level = s.levels[i];
        const double v = directed(level.direction, field_value(level.field, est));
        const double t = directed(level.direction, level.threshold);
        if (v > t) return static_cast<double>(n - i) * kTierScale + (v - t);
    }
    const auto& last = s.levels[n - 1];
    return directed(last.direction, field_value(last.field, est));
}

namespace {

ObjectiveField field_from_string(const std::string& s) {
    if (s == "expectation") return ObjectiveField::expectation;
    if (s == "output_std") return ObjectiveField::output_std;
    throw InvalidInputError("unknown objective field '" + s + "'");
}

Direction direction_from_string(const std::string& s) {
    if (s == "minimize") return Direction::minimize;
    if (s == "maximize") return Direction::maximize;
    throw InvalidInputError("unknown direction '" + s + "'");
}

} // namespace

Scalarizer scalarizer_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidInputError(std::string("scalarizer JSON parse failure: ") + e.what());
    }
    try {
        const std::string kind = doc.at("kind").get<std::string>();
        if (kind == "weighted_sum")
            return Scalarizer::weighted_sum(doc.value("w_e", 1.0), doc.value("w_std", 0.0));
        if (kind == "threshold_hierarchy") {
            std::vector<HierarchyLevel> levels;
            for (const auto& entry : doc.at("levels")) {
                HierarchyLevel level;
                level.field = field_from_string(entry.at("field").get<std::string>());
                level.direction =
                    direction_from_string(entry.value("direction", std::string("minimize")));
                level.threshold = entry.value("threshold", 0.0);
                levels.push_back(level);
            }
            return Scalarizer::threshold_hierarchy(std::move(levels));
        }
        throw InvalidInputError("unknown scalarizer kind '" + kind + "'");
    } catch (const json::exception& e) {
        throw InvalidInputError(std::string("malformed scalarizer JSON: ") + e.what());
    }
}

std::string scalarizer_to_json(const Scalarizer& s) {
    if (s.kind == ScalarizerKind::weighted_sum)
        return json{{"kind", "weighted_sum"}, {"w_e", s.w_e}, {"w_std", s.w_std}}.dump();
    json levels = json::array();
    for (const auto& level : s.levels)
        levels.push_back(
            {{"field", level.field == ObjectiveField::expectation ? "expectation"
                                                                  : "output_std"},
             {"direction",
              level.direction == Direction::minimize ? "minimize" : "maximize"},
             {"threshold", level.threshold}});
    return json{{"kind", "threshold_hierarchy"}, {"levels", std::move(levels)}}.dump();
}

} // namespace robusta
