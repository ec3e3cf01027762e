#include "robusta/trees.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

namespace robusta {

using nlohmann::json;

std::string to_string(TreeKind kind) {
    switch (kind) {
        case TreeKind::regression_tree: return "regression_tree";
        case TreeKind::random_forest: return "random_forest";
        case TreeKind::extra_trees: return "extra_trees";
    }
    return "?";
}

TreeKind tree_kind_from_string(const std::string& s) {
    if (s == "regression_tree") return TreeKind::regression_tree;
    if (s == "random_forest") return TreeKind::random_forest;
    if (s == "extra_trees") return TreeKind::extra_trees;
    throw InvalidInputError("unknown tree kind '" + s + "'");
}

bool Tile::contains(std::span<const double> x) const {
    for (std::size_t d = 0; d < lo.size(); ++d) {
        if (!cats[d].empty()) {
            const int c = static_cast<int>(x[d]);
            if (std::find(cats[d].begin(), cats[d].end(), c) == cats[d].end()) return false;
        } else if (!(x[d] >= lo[d] && x[d] < hi[d])) {
            return false;
        }
    }
    return true;
}

namespace {

struct SplitCandidate {
    int feature = -1;
    double threshold = 0.0;
    int category = -1; // >= 0 marks a categorical one-vs-rest split
};

class TreeBuilder {
public:
    TreeBuilder(const Dataset& data, const TreeParams& params, Rng rng)
        : data_(data), params_(params), rng_(std::move(rng)) {}

    Tree build(std::vector<std::size_t> rows) {
        Tree tree;
        tree.nodes.emplace_back();
        struct Task {
            int node;
            std::vector<std::size_t> rows;
            int depth;
        };
        std::vector<Task> stack;
        stack.push_back({0, std::move(rows), 0});
        while (!stack.empty()) {
            Task task = std::move(stack.back());
            stack.pop_back();
            grow(tree, task.node, task.rows, task.depth, stack);
        }
        return tree;
    }

private:
    template <typename Stack>
    void grow(Tree& tree, int node, const std::vector<std::size_t>& rows, int depth,
              Stack& stack) {
        const auto n = rows.size();
        double sum = 0.0;
        bool pure = true;
        for (std::size_t i = 0; i < n; ++i) {
            sum += data_.targets[rows[i]];
            if (data_.targets[rows[i]] != data_.targets[rows[0]]) pure = false;
        }
        const double mean = sum / static_cast<double>(n);

        const bool depth_capped = params_.max_depth && depth >= *params_.max_depth;
        if (pure || depth_capped || n < 2 * static_cast<std::size_t>(params_.min_samples_leaf)) {
            tree.nodes[node].value = mean;
            return;
        }

        const auto candidates = best_splits(rows, sum);
        if (candidates.empty()) {
            tree.nodes[node].value = mean; // e.g. duplicate x with conflicting targets
            return;
        }
        const SplitCandidate chosen =
            candidates.size() == 1
                ? candidates.front()
                : candidates[std::uniform_int_distribution<std::size_t>(
                      0, candidates.size() - 1)(rng_)];

        std::vector<std::size_t> left_rows, right_rows;
        for (std::size_t r : rows) {
            if (goes_left(chosen, data_.rows[r][static_cast<std::size_t>(chosen.feature)]))
                left_rows.push_back(r);
            else
                right_rows.push_back(r);
        }

        const int left = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        const int right = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes[node].feature = chosen.feature;
        tree.nodes[node].threshold = chosen.threshold;
        tree.nodes[node].category = chosen.category;
        tree.nodes[node].left = left;
        tree.nodes[node].right = right;
        // right pushed first so the left subtree is grown first (preorder)
        stack.push_back({right, std::move(right_rows), depth + 1});
        stack.push_back({left, std::move(left_rows), depth + 1});
    }

    static bool goes_left(const SplitCandidate& c, double value) {
        if (c.category >= 0) return static_cast<int>(value) == c.category;
        return value < c.threshold;
    }

    // All maximal variance-reduction splits; equally improving splits are
    // returned together so the caller can break the tie with the RNG.
    std::vector<SplitCandidate> best_splits(const std::vector<std::size_t>& rows,
                                            double total_sum) {
        const auto n_cols = data_.n_cols();
        std::vector<int> features(n_cols);
        std::iota(features.begin(), features.end(), 0);

        std::size_t feature_budget = n_cols;
        if (params_.kind == TreeKind::random_forest) {
            // inspect a random ordering and stop after ceil(D/3) splittable
            // features, so constant features never force a premature leaf
            std::shuffle(features.begin(), features.end(), rng_);
            feature_budget = (n_cols + 2) / 3;
        }

        const double n = static_cast<double>(rows.size());
        const double parent_score = total_sum * total_sum / n;

        std::vector<SplitCandidate> best;
        double best_gain = 0.0;
        auto offer = [&](const SplitCandidate& cand, double gain) {
            if (gain > best_gain) {
                best_gain = gain;
                best.assign(1, cand);
            } else if (gain == best_gain && !best.empty()) {
                best.push_back(cand);
            }
        };

        std::size_t splittable_seen = 0;
        for (int f : features) {
            if (splittable_seen >= feature_budget) break;
            const bool had_candidates =
                data_.columns[static_cast<std::size_t>(f)].kind == ColumnKind::categorical
                    ? scan_categorical(f, rows, total_sum, parent_score, offer)
                    : scan_numeric(f, rows, total_sum, parent_score, offer);
            if (had_candidates) ++splittable_seen;
        }
        return best;
    }

    template <typename Offer>
    bool scan_numeric(int f, const std::vector<std::size_t>& rows, double total_sum,
                      double parent_score, Offer&& offer) {
        const auto fu = static_cast<std::size_t>(f);
        std::vector<std::size_t> order(rows);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return data_.rows[a][fu] < data_.rows[b][fu];
        });
        const double vmin = data_.rows[order.front()][fu];
        const double vmax = data_.rows[order.back()][fu];
        if (vmin == vmax) return false;

        const double n = static_cast<double>(rows.size());
        const auto min_leaf = static_cast<std::size_t>(params_.min_samples_leaf);

        if (params_.kind == TreeKind::extra_trees) {
            const double t =
                std::uniform_real_distribution<double>(vmin, vmax)(rng_);
            double left_sum = 0.0;
            std::size_t left_n = 0;
            for (std::size_t r : order) {
                if (!(data_.rows[r][fu] < t)) break;
                left_sum += data_.targets[r];
                ++left_n;
            }
            const std::size_t right_n = order.size() - left_n;
            if (left_n < min_leaf || right_n < min_leaf) return true;
            const double right_sum = total_sum - left_sum;
            const double gain = left_sum * left_sum / static_cast<double>(left_n) +
                                right_sum * right_sum / static_cast<double>(right_n) -
                                parent_score;
            if (gain > 0) offer(SplitCandidate{f, t, -1}, gain);
            return true;
        }

        bool any = false;
        double left_sum = 0.0;
        for (std::size_t i = 1; i < order.size(); ++i) {
            left_sum += data_.targets[order[i - 1]];
            const double a = data_.rows[order[i - 1]][fu];
            const double b = data_.rows[order[i]][fu];
            if (a == b) continue;
            any = true;
            if (i < min_leaf || order.size() - i < min_leaf) continue;
            double t = 0.5 * (a + b);
            if (!(t > a)) t = b; // adjacent floats: keep the left side non-empty
            const double ln = static_cast<double>(i);
            const double rn = n - ln;
            const double right_sum = total_sum - left_sum;
            const double gain =
                left_sum * left_sum / ln + right_sum * right_sum / rn - parent_score;
            if (gain > 0) offer(SplitCandidate{f, t, -1}, gain);
        }
        return any;
    }

    template <typename Offer>
    bool scan_categorical(int f, const std::vector<std::size_t>& rows, double total_sum,
                          double parent_score, Offer&& offer) {
        const auto fu = static_cast<std::size_t>(f);
        const auto n_cats = data_.columns[fu].categories.size();
        std::vector<double> cat_sum(n_cats, 0.0);
        std::vector<std::size_t> cat_n(n_cats, 0);
        for (std::size_t r : rows) {
            const auto c = static_cast<std::size_t>(data_.rows[r][fu]);
            cat_sum[c] += data_.targets[r];
            ++cat_n[c];
        }
        std::vector<int> present;
        for (std::size_t c = 0; c < n_cats; ++c)
            if (cat_n[c] > 0) present.push_back(static_cast<int>(c));
        if (present.size() < 2) return false;

        const double n = static_cast<double>(rows.size());
        const auto min_leaf = static_cast<std::size_t>(params_.min_samples_leaf);

        auto gain_for = [&](int c) {
            const auto cu = static_cast<std::size_t>(c);
            const double ln = static_cast<double>(cat_n[cu]);
            const double rn = n - ln;
            const double right_sum = total_sum - cat_sum[cu];
            return cat_sum[cu] * cat_sum[cu] / ln + right_sum * right_sum / rn -
                   parent_score;
        };

        if (params_.kind == TreeKind::extra_trees) {
            const int c = present[std::uniform_int_distribution<std::size_t>(
                0, present.size() - 1)(rng_)];
            const auto cu = static_cast<std::size_t>(c);
            if (cat_n[cu] >= min_leaf && rows.size() - cat_n[cu] >= min_leaf) {
                const double gain = gain_for(c);
                if (gain > 0) offer(SplitCandidate{f, 0.0, c}, gain);
            }
            return true;
        }

        for (int c : present) {
            const auto cu = static_cast<std::size_t>(c);
            if (cat_n[cu] < min_leaf || rows.size() - cat_n[cu] < min_leaf) continue;
            const double gain = gain_for(c);
            if (gain > 0) offer(SplitCandidate{f, 0.0, c}, gain);
        }
        return true;
    }

    const Dataset& data_;
    const TreeParams& params_;
    Rng rng_;
};

} // namespace

Forest fit(const Dataset& data, const TreeParams& params) {
    data.validate();
    if (params.n_trees < 1) throw InvalidInputError("n_trees must be positive");
    if (params.min_samples_leaf < 1)
        throw InvalidInputError("min_samples_leaf must be positive");
    if (params.max_depth && *params.max_depth < 1)
        throw InvalidInputError("max_depth must be positive when given");

    Forest forest;
    forest.columns = data.columns;
    forest.train_lo.assign(data.n_cols(), kInf);
    forest.train_hi.assign(data.n_cols(), -kInf);
    for (const auto& row : data.rows)
        for (std::size_t c = 0; c < row.size(); ++c) {
            forest.train_lo[c] = std::min(forest.train_lo[c], row[c]);
            forest.train_hi[c] = std::max(forest.train_hi[c], row[c]);
        }

    const bool bootstrap = params.kind == TreeKind::random_forest;
    for (int t = 0; t < params.n_trees; ++t) {
        Rng rng(mix_seed(params.rng_seed, static_cast<std::uint64_t>(t)));
        std::vector<std::size_t> rows(data.n_rows());
        if (bootstrap) {
            std::uniform_int_distribution<std::size_t> pick(0, data.n_rows() - 1);
            for (auto& r : rows) r = pick(rng);
        } else {
            std::iota(rows.begin(), rows.end(), std::size_t{0});
        }
        TreeBuilder builder(data, params, std::move(rng));
        Tree tree = builder.build(std::move(rows));
        forest.trees.push_back(extract_tiles(tree, forest.columns));
        forest.structures.push_back(std::move(tree));
    }
    return forest;
}

std::vector<Tile> extract_tiles(const Tree& tree, const std::vector<ColumnSpec>& columns) {
    if (tree.nodes.empty()) throw InvalidInputError("tree has no nodes");
    const auto n_cols = columns.size();

    Tile root;
    root.lo.assign(n_cols, -kInf);
    root.hi.assign(n_cols, kInf);
    root.cats.resize(n_cols);
    for (std::size_t c = 0; c < n_cols; ++c)
        if (columns[c].kind == ColumnKind::categorical) {
            root.cats[c].resize(columns[c].categories.size());
            std::iota(root.cats[c].begin(), root.cats[c].end(), 0);
        }

    std::vector<Tile> tiles;
    struct Task {
        int node;
        Tile cell;
    };
    std::vector<Task> stack;
    stack.push_back({0, std::move(root)});
    while (!stack.empty()) {
        Task task = std::move(stack.back());
        stack.pop_back();
        const TreeNode& node = tree.nodes[static_cast<std::size_t>(task.node)];
        if (node.is_leaf()) {
            task.cell.value = node.value;
            tiles.push_back(std::move(task.cell));
            continue;
        }
        const auto f = static_cast<std::size_t>(node.feature);
        Tile left = task.cell;
        Tile right = std::move(task.cell);
        if (node.category >= 0) {
            auto& lc = left.cats[f];
            auto& rc = right.cats[f];
            lc.assign(1, node.category);
            rc.erase(std::remove(rc.begin(), rc.end(), node.category), rc.end());
        } else {
            left.hi[f] = node.threshold;
            right.lo[f] = node.threshold;
        }
        stack.push_back({node.right, std::move(right)});
        stack.push_back({node.left, std::move(left)});
    }
    return tiles;
}

double predict_tree(const Tree& tree, std::span<const double> x) {
    int i = 0;
    while (!tree.nodes[static_cast<std::size_t>(i)].is_leaf()) {
        const TreeNode& node = tree.nodes[static_cast<std::size_t>(i)];
        const double v = x[static_cast<std::size_t>(node.feature)];
        const bool left =
            node.category >= 0 ? static_cast<int>(v) == node.category : v < node.threshold;
        i = left ? node.left : node.right;
    }
    return tree.nodes[static_cast<std::size_t>(i)].value;
}

double predict_tiles(const std::vector<Tile>& tiles, std::span<const double> x) {
    for (const Tile& tile : tiles)
        if (tile.contains(x)) return tile.value;
    throw InternalConsistencyError("no tile contains the query point");
}

namespace {

void check_query(const Forest& forest, std::span<const double> x) {
    if (x.size() != forest.columns.size())
        throw InvalidInputError("query dimensionality does not match the forest");
    for (std::size_t c = 0; c < x.size(); ++c) {
        if (!std::isfinite(x[c]))
            throw InvalidInputError("non-finite query coordinate");
        if (forest.columns[c].kind == ColumnKind::categorical) {
            const auto n = static_cast<double>(forest.columns[c].categories.size());
            if (x[c] != std::floor(x[c]) || x[c] < 0 || x[c] >= n)
                throw InvalidInputError("query category index out of range");
        }
    }
}

} // namespace

double predict(const Forest& forest, std::span<const double> x) {
    check_query(forest, x);
    if (forest.trees.empty()) throw InvalidInputError("forest has no trees");
    double sum = 0.0;
    if (forest.structures.size() == forest.trees.size()) {
        for (const Tree& tree : forest.structures) sum += predict_tree(tree, x);
    } else {
        for (const auto& tiles : forest.trees) sum += predict_tiles(tiles, x);
    }
    return sum / static_cast<double>(forest.trees.size());
}

namespace {

json bound_to_json(double v) {
    if (v == kInf || v == -kInf) return nullptr;
    return v;
}

double bound_from_json(const json& v, double infinite) {
    return v.is_null() ? infinite : v.get<double>();
}

} // namespace

std::string forest_to_json(const Forest& forest) {
    json cols = json::array();
    for (const auto& c : forest.columns) {
        json col{{"name", c.name}, {"kind", to_string(c.kind)}};
        if (c.kind == ColumnKind::categorical) col["categories"] = c.categories;
        cols.push_back(std::move(col));
    }
    json trees = json::array();
    for (const auto& tiles : forest.trees) {
        json tree = json::array();
        for (const Tile& tile : tiles) {
            json lo = json::array(), hi = json::array(), cats = json::array();
            for (std::size_t c = 0; c < tile.lo.size(); ++c) {
                if (tile.cats[c].empty()) {
                    lo.push_back(bound_to_json(tile.lo[c]));
                    hi.push_back(bound_to_json(tile.hi[c]));
                    cats.push_back(nullptr);
                } else {
                    lo.push_back(nullptr);
                    hi.push_back(nullptr);
                    cats.push_back(tile.cats[c]);
                }
            }
            tree.push_back(json{{"lo", std::move(lo)},
                                {"hi", std::move(hi)},
                                {"cats", std::move(cats)},
                                {"value", tile.value}});
        }
        trees.push_back(std::move(tree));
    }
    return json{{"columns", std::move(cols)},
                {"train_lo", forest.train_lo},
                {"train_hi", forest.train_hi},
                {"trees", std::move(trees)}}
        .dump();
}

Forest forest_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidInputError(std::string("forest JSON parse failure: ") + e.what());
    }
    try {
        Forest forest;
        for (const auto& col : doc.at("columns")) {
            ColumnSpec spec;
            spec.name = col.at("name").get<std::string>();
            spec.kind = column_kind_from_string(col.at("kind").get<std::string>());
            if (spec.kind == ColumnKind::categorical)
                spec.categories = col.at("categories").get<std::vector<std::string>>();
            forest.columns.push_back(std::move(spec));
        }
        forest.train_lo = doc.at("train_lo").get<std::vector<double>>();
        forest.train_hi = doc.at("train_hi").get<std::vector<double>>();
        const auto n_cols = forest.columns.size();
        for (const auto& tree : doc.at("trees")) {
            std::vector<Tile> tiles;
            for (const auto& cell : tree) {
                Tile tile;
                tile.value = cell.at("value").get<double>();
                const auto& lo = cell.at("lo");
                const auto& hi = cell.at("hi");
                const auto& cats = cell.at("cats");
                if (lo.size() != n_cols || hi.size() != n_cols || cats.size() != n_cols)
                    throw InvalidInputError("tile dimensionality mismatch in forest JSON");
                for (std::size_t c = 0; c < n_cols; ++c) {
                    tile.lo.push_back(bound_from_json(lo[c], -kInf));
                    tile.hi.push_back(bound_from_json(hi[c], kInf));
                    tile.cats.push_back(cats[c].is_null() ? std::vector<int>{}
                                                          : cats[c].get<std::vector<int>>());
                }
                tiles.push_back(std::move(tile));
            }
            forest.trees.push_back(std::move(tiles));
        }
        if (forest.trees.empty()) throw InvalidInputError("forest JSON has no trees");
        return forest;
    } catch (const json::exception& e) {
        throw InvalidInputError(std::string("malformed forest JSON: ") + e.what());
    }
}

} // namespace robusta
