#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "robusta/common.hpp"
#include "robusta/dataset.hpp"

namespace robusta {

enum class TreeKind { regression_tree, random_forest, extra_trees };

std::string to_string(TreeKind kind);
TreeKind tree_kind_from_string(const std::string& s);

struct TreeParams {
    TreeKind kind = TreeKind::regression_tree;
    int n_trees = 1;
    std::optional<int> max_depth; // absent: grow until leaves are pure
    int min_samples_leaf = 1;
    std::uint64_t rng_seed = 0;
};

// One axis-aligned cell of a tree's partition. Numeric dimensions carry a
// half-open interval [lo, hi); categorical dimensions carry the sorted set of
// category indices routed into this cell (empty for numeric dimensions).
struct Tile {
    std::vector<double> lo;
    std::vector<double> hi;
    std::vector<std::vector<int>> cats;
    double value = 0.0;

    bool contains(std::span<const double> x) const;
};

// Fitted split structure; nodes[0] is the root. A split routes left when
// x[feature] < threshold (numeric) or x[feature] == category (categorical).
struct TreeNode {
    int feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    int category = -1; // >= 0 marks a categorical one-vs-rest split
    int left = -1;
    int right = -1;
    double value = 0.0;

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;
};

struct Forest {
    std::vector<ColumnSpec> columns;
    std::vector<std::vector<Tile>> trees; // one tile partition per tree
    std::vector<Tree> structures;         // traversal form; empty after JSON load
    std::vector<double> train_lo;         // observed per-column training range,
    std::vector<double> train_hi;         // used to flag extrapolating queries

    std::size_t n_trees() const { return trees.size(); }
};

// Greedy variance-reduction fitting. Bootstrap row resampling for
// random_forest; uniformly random split thresholds for extra_trees; ties
// between equally improving splits are broken by the seeded RNG.
Forest fit(const Dataset& data, const TreeParams& params);

// Root-to-leaf walk intersecting split half-spaces. The outermost numeric
// bounds are +-infinity and every category lands in exactly one tile.
std::vector<Tile> extract_tiles(const Tree& tree, const std::vector<ColumnSpec>& columns);

double predict_tree(const Tree& tree, std::span<const double> x);
double predict_tiles(const std::vector<Tile>& tiles, std::span<const double> x);

// Mean leaf value over the ensemble at x. Throws InvalidInputError when x
// does not match the forest's column metadata.
double predict(const Forest& forest, std::span<const double> x);

// JSON round-trip: column metadata, training ranges, and the tile lists.
std::string forest_to_json(const Forest& forest);
Forest forest_from_json(const std::string& text);

} // namespace robusta
