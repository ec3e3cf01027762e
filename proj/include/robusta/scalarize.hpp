#pragma once

#include <string>
#include <vector>

#include "robusta/common.hpp"
#include "robusta/estimator.hpp"

namespace robusta {

enum class ScalarizerKind { weighted_sum, threshold_hierarchy };

enum class ObjectiveField { expectation, output_std };
enum class Direction { minimize, maximize };

struct HierarchyLevel {
    ObjectiveField field = ObjectiveField::expectation;
    Direction direction = Direction::minimize;
    double threshold = 0.0; // satisfied when the directed value beats this
};

// Folds (expectation, output_std) into one merit where lower is better.
// weighted_sum: w_e * expectation + w_std * output_std. threshold_hierarchy:
// lexicographic-with-threshold — the first unsatisfied level dominates, and
// points satisfying every threshold rank by the last level's value.
struct Scalarizer {
    ScalarizerKind kind = ScalarizerKind::weighted_sum;
    double w_e = 1.0;
    double w_std = 0.0;
    std::vector<HierarchyLevel> levels;

    static Scalarizer weighted_sum(double w_e, double w_std);
    static Scalarizer threshold_hierarchy(std::vector<HierarchyLevel> levels);
};

double scalarize(const Scalarizer& s, const RobustEstimate& est);

// JSON form embedded in campaign configs, e.g.
//   {"kind": "weighted_sum", "w_e": 0.4, "w_std": 0.6}
//   {"kind": "threshold_hierarchy", "levels":
//     [{"field": "expectation", "direction": "maximize", "threshold": 1000},
//      {"field": "output_std", "direction": "minimize"}]}
Scalarizer scalarizer_from_json(const std::string& text);
std::string scalarizer_to_json(const Scalarizer& s);

} // namespace robusta
