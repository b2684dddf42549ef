#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "annforest/vector_set.hpp"

namespace annforest {

enum class TreeType : std::uint8_t { rp, kd, pca, classification };

// Seed mixer used to derive per-tree and per-component seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

struct TreeBuildParams {
    TreeType type = TreeType::rp;
    std::size_t max_leaf_size = 128;
    std::uint32_t mtry = 0;  // classification only; 0 = use all dimensions
    std::uint32_t k = 0;     // classification only; must match the label k
    std::uint64_t seed = 0;
};

// One splitting hyperplane. Axis-aligned rules store the coordinate,
// oblique rules store the normal vector. A point routes left iff its
// projection is <= threshold.
struct SplitRule {
    enum class Kind : std::uint8_t { axis, direction };

    Kind kind = Kind::axis;
    std::uint32_t axis = 0;
    double threshold = 0.0;
    std::vector<float> direction;  // empty for axis rules

    double project(const float* x, std::size_t d) const {
        if (kind == Kind::axis) {
            return static_cast<double>(x[axis]);
        }
        double acc = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            acc += static_cast<double>(x[i]) * static_cast<double>(direction[i]);
        }
        return acc;
    }

    bool goes_left(const float* x, std::size_t d) const { return project(x, d) <= threshold; }
};

// Sparse per-leaf label statistics: N_l training points routed into the
// leaf, and for each corpus index j with a positive count, the number of
// those points that have j among their k nearest neighbors.
struct LeafLabelTable {
    std::uint32_t point_count = 0;                              // N_l
    std::vector<std::pair<std::uint32_t, std::uint32_t>> entries;  // (j, v_j), sorted by j

    std::uint64_t total_count() const {
        std::uint64_t s = 0;
        for (const auto& [j, v] : entries) s += v;
        return s;
    }
};

struct TreeNode {
    std::int32_t left = -1;   // child node ids; leaf when left < 0
    std::int32_t right = -1;
    std::int32_t leaf = -1;   // leaf id when this node is a leaf
    SplitRule rule;

    bool is_leaf() const { return left < 0; }
};

// Array-encoded binary partition tree. Every point of R^d routes to
// exactly one leaf. Immutable and shareable once built and fitted.
struct PartitionTree {
    std::size_t dim = 0;
    std::uint64_t tree_id = 0;
    double mean_point_depth = 0.0;  // build-point-weighted mean leaf depth
    std::vector<TreeNode> nodes;
    std::vector<LeafLabelTable> leaves;

    std::size_t leaf_count() const { return leaves.size(); }

    std::uint32_t leaf_of(const float* x) const {
        std::int32_t id = 0;
        while (!nodes[static_cast<std::size_t>(id)].is_leaf()) {
            const TreeNode& n = nodes[static_cast<std::size_t>(id)];
            id = n.rule.goes_left(x, dim) ? n.left : n.right;
        }
        return static_cast<std::uint32_t>(nodes[static_cast<std::size_t>(id)].leaf);
    }
};

struct BuildDiagnostics {
    std::vector<std::uint32_t> leaf_of_point;  // leaf id each build point landed in
    std::uint32_t max_depth = 0;
    std::uint32_t pca_fallbacks = 0;  // power-iteration non-convergences
};

// Builds an RP, k-d, or PCA tree by recursive median splits.
PartitionTree build_tree(const VectorSet& points, const TreeBuildParams& params,
                         BuildDiagnostics* diag = nullptr);

// Builds a supervised tree by greedily maximizing the multinomial
// log-likelihood over `mtry` sampled dimensions per node.
PartitionTree build_classification_tree(const VectorSet& points, const GroundTruth& labels,
                                        const TreeBuildParams& params,
                                        BuildDiagnostics* diag = nullptr);

// Best (dimension, threshold) for one node, exposed for verification
// against exhaustive evaluation. `criterion` is
//   sum_j v_j^L log(v_j^L / massL) + sum_j v_j^R log(v_j^R / massR)
// with 0 log 0 := 0 and massX the total label mass on side X.
struct SplitCandidate {
    bool found = false;
    std::uint32_t dim = 0;
    double threshold = 0.0;
    double criterion = 0.0;
};

SplitCandidate find_best_split(const VectorSet& points, const GroundTruth& labels,
                               std::span<const std::uint32_t> node_points,
                               std::span<const std::uint32_t> dims);

// Criterion value of an unsplit node; a split is taken only if it improves this.
double node_criterion(const GroundTruth& labels, std::span<const std::uint32_t> node_points);

// Leading eigenvector of the node points' covariance by power iteration
// (implicit matrix-vector products; tolerance 1e-6, at most 100 iterations).
struct PowerIterationResult {
    std::vector<float> direction;  // unit norm
    bool converged = false;
    int iterations = 0;
};

PowerIterationResult principal_direction(const VectorSet& points,
                                         std::span<const std::uint32_t> node_points,
                                         std::uint64_t seed);

}  // namespace annforest
