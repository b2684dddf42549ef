#include "annforest/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace annforest {

namespace {

constexpr std::uint32_t kMaxDepth = 64;

double xlogx(double v) { return v <= 0.0 ? 0.0 : v * std::log(v); }

// Median split of a node. `proj` holds (projection, point) pairs; on success
// they are reordered so the left block comes first. Fails when every point
// would land on one side (all projections equal, or equal to the median).
struct MedianSplit {
    bool ok = false;
    double threshold = 0.0;
    std::size_t left_count = 0;
};

MedianSplit median_split(std::vector<std::pair<double, std::uint32_t>>& proj) {
    std::stable_sort(proj.begin(), proj.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    const std::size_t n = proj.size();
    const double threshold = proj[(n - 1) / 2].first;
    const auto it = std::upper_bound(proj.begin(), proj.end(), threshold,
                                     [](double t, const auto& p) { return t < p.first; });
    const std::size_t left = static_cast<std::size_t>(it - proj.begin());
    if (left == 0 || left == n) {
        return {};
    }
    return {true, threshold, left};
}

// Per-dimension variance over a node's points; two-pass for stability.
void node_variances(const VectorSet& pts, std::span<const std::uint32_t> node_points,
                    std::vector<double>& mean, std::vector<double>& var) {
    const std::size_t d = pts.dim();
    mean.assign(d, 0.0);
    var.assign(d, 0.0);
    for (std::uint32_t i : node_points) {
        const float* x = pts[i];
        for (std::size_t j = 0; j < d; ++j) mean[j] += x[j];
    }
    const double inv = 1.0 / static_cast<double>(node_points.size());
    for (std::size_t j = 0; j < d; ++j) mean[j] *= inv;
    for (std::uint32_t i : node_points) {
        const float* x = pts[i];
        for (std::size_t j = 0; j < d; ++j) {
            const double c = x[j] - mean[j];
            var[j] += c * c;
        }
    }
}

// Builder for the three unsupervised tree types (recursive median splits).
struct UnsupervisedBuilder {
    const VectorSet& pts;
    const TreeBuildParams& params;
    BuildDiagnostics* diag;
    PartitionTree tree;

    std::mt19937_64 rng;      // node-level choices (kd axis, pca start)
    std::mt19937_64 dir_rng;  // RP level directions
    std::vector<std::vector<float>> level_dirs;
    std::vector<std::uint32_t> order;
    std::vector<double> mean_scratch, var_scratch;
    std::vector<std::pair<double, std::uint32_t>> proj;
    double depth_point_sum = 0.0;

    UnsupervisedBuilder(const VectorSet& p, const TreeBuildParams& prm, BuildDiagnostics* dg)
        : pts(p), params(prm), diag(dg), rng(splitmix64(prm.seed)), dir_rng(splitmix64(prm.seed ^ 0x5851f42d4c957f2dULL)) {
        tree.dim = p.dim();
        tree.tree_id = prm.seed;
        order.resize(p.size());
        std::iota(order.begin(), order.end(), 0u);
        if (diag) diag->leaf_of_point.assign(p.size(), 0);
    }

    // One fresh standard-normal direction per level, shared by all nodes of
    // that level within the tree.
    const std::vector<float>& rp_direction(std::uint32_t level) {
        std::normal_distribution<double> normal(0.0, 1.0);
        while (level_dirs.size() <= level) {
            std::vector<float>& dir = level_dirs.emplace_back(pts.dim());
            for (float& v : dir) v = static_cast<float>(normal(dir_rng));
        }
        return level_dirs[level];
    }

    std::int32_t make_leaf(std::size_t begin, std::size_t end, std::uint32_t depth) {
        const std::int32_t leaf_id = static_cast<std::int32_t>(tree.leaves.size());
        tree.leaves.emplace_back();
        TreeNode node;
        node.leaf = leaf_id;
        const std::int32_t node_id = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.push_back(std::move(node));
        if (diag) {
            for (std::size_t i = begin; i < end; ++i) {
                diag->leaf_of_point[order[i]] = static_cast<std::uint32_t>(leaf_id);
            }
            diag->max_depth = std::max(diag->max_depth, depth);
        }
        depth_point_sum += static_cast<double>(depth) * static_cast<double>(end - begin);
        return node_id;
    }

    // Picks the split axis among the top-ceil(d/10) positive-variance axes.
    // Returns false when every coordinate is constant over the node.
    bool pick_kd_axis(std::span<const std::uint32_t> node_points, std::uint32_t& axis) {
        const std::size_t d = pts.dim();
        node_variances(pts, node_points, mean_scratch, var_scratch);
        std::vector<std::uint32_t> dims(d);
        std::iota(dims.begin(), dims.end(), 0u);
        std::sort(dims.begin(), dims.end(), [&](std::uint32_t a, std::uint32_t b) {
            return var_scratch[a] > var_scratch[b] || (var_scratch[a] == var_scratch[b] && a < b);
        });
        std::size_t positive = 0;
        while (positive < d && var_scratch[dims[positive]] > 0.0) ++positive;
        if (positive == 0) return false;
        const std::size_t top = std::min(positive, (d + 9) / 10);
        axis = dims[std::uniform_int_distribution<std::size_t>(0, top - 1)(rng)];
        return true;
    }

    std::int32_t build_node(std::size_t begin, std::size_t end, std::uint32_t depth) {
        const std::size_t cnt = end - begin;
        if (cnt <= params.max_leaf_size || depth >= kMaxDepth) {
            return make_leaf(begin, end, depth);
        }
        const std::span<const std::uint32_t> node_points{order.data() + begin, cnt};

        SplitRule rule;
        switch (params.type) {
            case TreeType::rp:
                rule.kind = SplitRule::Kind::direction;
                rule.direction = rp_direction(depth);
                break;
            case TreeType::kd: {
                std::uint32_t axis = 0;
                if (!pick_kd_axis(node_points, axis)) return make_leaf(begin, end, depth);
                rule.kind = SplitRule::Kind::axis;
                rule.axis = axis;
                break;
            }
            case TreeType::pca: {
                PowerIterationResult pca = principal_direction(pts, node_points, rng());
                if (pca.converged) {
                    rule.kind = SplitRule::Kind::direction;
                    rule.direction = std::move(pca.direction);
                } else {
                    if (diag) ++diag->pca_fallbacks;
                    std::uint32_t axis = 0;
                    if (!pick_kd_axis(node_points, axis)) return make_leaf(begin, end, depth);
                    rule.kind = SplitRule::Kind::axis;
                    rule.axis = axis;
                }
                break;
            }
            case TreeType::classification:
                throw std::logic_error("build_tree: use build_classification_tree");
        }

        proj.clear();
        proj.reserve(cnt);
        for (std::uint32_t i : node_points) {
            proj.emplace_back(rule.project(pts[i], pts.dim()), i);
        }
        const MedianSplit split = median_split(proj);
        if (!split.ok) {
            return make_leaf(begin, end, depth);
        }
        for (std::size_t i = 0; i < cnt; ++i) order[begin + i] = proj[i].second;
        rule.threshold = split.threshold;

        const std::int32_t node_id = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.emplace_back();
        const std::size_t mid = begin + split.left_count;
        const std::int32_t left = build_node(begin, mid, depth + 1);
        const std::int32_t right = build_node(mid, end, depth + 1);
        TreeNode& node = tree.nodes[static_cast<std::size_t>(node_id)];
        node.left = left;
        node.right = right;
        node.rule = std::move(rule);
        return node_id;
    }

    PartitionTree run() {
        build_node(0, pts.size(), 0);
        tree.mean_point_depth = depth_point_sum / static_cast<double>(pts.size());
        return std::move(tree);
    }
};

// Scratch for the incremental split sweep: dense count arrays indexed by
// label plus a touched-list, so per-node cost scales with the labels
// actually present, not the label-space size.
struct SplitScratch {
    std::vector<std::uint32_t> parent, left, right;
    std::vector<std::uint32_t> touched;
    std::vector<std::pair<float, std::uint32_t>> vals;

    void ensure(std::size_t label_space) {
        if (parent.size() < label_space) {
            parent.resize(label_space, 0);
            left.resize(label_space, 0);
            right.resize(label_space, 0);
        }
    }
};

SplitCandidate best_split_impl(const VectorSet& pts, const GroundTruth& labels,
                               std::span<const std::uint32_t> node_points,
                               std::span<const std::uint32_t> dims, SplitScratch& s,
                               double* parent_criterion_out) {
    const std::size_t cnt = node_points.size();
    const std::uint32_t k = labels.k;

    s.touched.clear();
    for (std::uint32_t i : node_points) {
        for (std::uint32_t j : labels.rows[i].indices) {
            if (s.parent[j]++ == 0) s.touched.push_back(j);
        }
    }
    double parent_sum = 0.0;
    for (std::uint32_t j : s.touched) parent_sum += xlogx(s.parent[j]);
    const double mass = static_cast<double>(k) * static_cast<double>(cnt);
    if (parent_criterion_out) *parent_criterion_out = parent_sum - xlogx(mass);

    SplitCandidate best;
    for (std::uint32_t dim : dims) {
        s.vals.clear();
        s.vals.reserve(cnt);
        for (std::uint32_t i : node_points) s.vals.emplace_back(pts[i][dim], i);
        std::stable_sort(s.vals.begin(), s.vals.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });

        for (std::uint32_t j : s.touched) {
            s.left[j] = 0;
            s.right[j] = s.parent[j];
        }
        // Sweep left over sorted projections, moving one point (its k labels)
        // at a time; evaluate at midpoints between distinct values.
        double sum_left = 0.0, sum_right = parent_sum;
        double mass_left = 0.0, mass_right = mass;
        for (std::size_t pos = 0; pos + 1 < cnt; ++pos) {
            const std::uint32_t i = s.vals[pos].second;
            for (std::uint32_t j : labels.rows[i].indices) {
                sum_left += xlogx(s.left[j] + 1.0) - xlogx(s.left[j]);
                ++s.left[j];
                sum_right += xlogx(s.right[j] - 1.0) - xlogx(s.right[j]);
                --s.right[j];
            }
            mass_left += k;
            mass_right -= k;
            if (s.vals[pos].first < s.vals[pos + 1].first) {
                const double crit =
                    sum_left - xlogx(mass_left) + sum_right - xlogx(mass_right);
                if (!best.found || crit > best.criterion) {
                    best.found = true;
                    best.dim = dim;
                    best.threshold = 0.5 * (static_cast<double>(s.vals[pos].first) +
                                            static_cast<double>(s.vals[pos + 1].first));
                    best.criterion = crit;
                }
            }
        }
    }

    for (std::uint32_t j : s.touched) {
        s.parent[j] = 0;
        s.left[j] = 0;
        s.right[j] = 0;
    }
    return best;
}

std::size_t label_space_size(const GroundTruth& labels) {
    std::uint32_t max_label = 0;
    for (const NeighborList& row : labels.rows) {
        for (std::uint32_t j : row.indices) max_label = std::max(max_label, j);
    }
    return static_cast<std::size_t>(max_label) + 1;
}

struct ClassificationBuilder {
    const VectorSet& pts;
    const GroundTruth& labels;
    const TreeBuildParams& params;
    BuildDiagnostics* diag;
    PartitionTree tree;

    std::mt19937_64 rng;
    std::vector<std::uint32_t> order;
    std::vector<std::uint32_t> all_dims;
    std::vector<std::uint32_t> dim_sample;
    SplitScratch scratch;
    double depth_point_sum = 0.0;

    ClassificationBuilder(const VectorSet& p, const GroundTruth& lbl, const TreeBuildParams& prm,
                          BuildDiagnostics* dg)
        : pts(p), labels(lbl), params(prm), diag(dg), rng(splitmix64(prm.seed)) {
        tree.dim = p.dim();
        tree.tree_id = prm.seed;
        order.resize(p.size());
        std::iota(order.begin(), order.end(), 0u);
        all_dims.resize(p.dim());
        std::iota(all_dims.begin(), all_dims.end(), 0u);
        scratch.ensure(label_space_size(lbl));
        if (diag) diag->leaf_of_point.assign(p.size(), 0);
    }

    std::int32_t make_leaf(std::size_t begin, std::size_t end, std::uint32_t depth) {
        const std::int32_t leaf_id = static_cast<std::int32_t>(tree.leaves.size());
        tree.leaves.emplace_back();
        TreeNode node;
        node.leaf = leaf_id;
        const std::int32_t node_id = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.push_back(std::move(node));
        if (diag) {
            for (std::size_t i = begin; i < end; ++i) {
                diag->leaf_of_point[order[i]] = static_cast<std::uint32_t>(leaf_id);
            }
            diag->max_depth = std::max(diag->max_depth, depth);
        }
        depth_point_sum += static_cast<double>(depth) * static_cast<double>(end - begin);
        return node_id;
    }

    std::span<const std::uint32_t> sample_dims() {
        const std::size_t d = pts.dim();
        if (params.mtry == 0 || params.mtry >= d) {
            return all_dims;
        }
        dim_sample.clear();
        std::sample(all_dims.begin(), all_dims.end(), std::back_inserter(dim_sample),
                    params.mtry, rng);
        return dim_sample;
    }

    std::int32_t build_node(std::size_t begin, std::size_t end, std::uint32_t depth) {
        const std::size_t cnt = end - begin;
        if (cnt <= params.max_leaf_size || depth >= kMaxDepth) {
            return make_leaf(begin, end, depth);
        }
        const std::span<const std::uint32_t> node_points{order.data() + begin, cnt};

        double parent_crit = 0.0;
        const SplitCandidate best =
            best_split_impl(pts, labels, node_points, sample_dims(), scratch, &parent_crit);
        const double tol = 1e-9 * (1.0 + std::abs(parent_crit));
        if (!best.found || best.criterion <= parent_crit + tol) {
            return make_leaf(begin, end, depth);
        }

        const auto mid_it = std::stable_partition(
            order.begin() + static_cast<std::ptrdiff_t>(begin),
            order.begin() + static_cast<std::ptrdiff_t>(end),
            [&](std::uint32_t i) { return pts[i][best.dim] <= best.threshold; });
        const std::size_t mid = static_cast<std::size_t>(mid_it - order.begin());
        if (mid == begin || mid == end) {
            return make_leaf(begin, end, depth);
        }

        SplitRule rule;
        rule.kind = SplitRule::Kind::axis;
        rule.axis = best.dim;
        rule.threshold = best.threshold;

        const std::int32_t node_id = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.emplace_back();
        const std::int32_t left = build_node(begin, mid, depth + 1);
        const std::int32_t right = build_node(mid, end, depth + 1);
        TreeNode& node = tree.nodes[static_cast<std::size_t>(node_id)];
        node.left = left;
        node.right = right;
        node.rule = std::move(rule);
        return node_id;
    }

    PartitionTree run() {
        build_node(0, pts.size(), 0);
        tree.mean_point_depth = depth_point_sum / static_cast<double>(pts.size());
        return std::move(tree);
    }
};

}  // namespace

PartitionTree build_tree(const VectorSet& points, const TreeBuildParams& params,
                         BuildDiagnostics* diag) {
    if (points.size() < 1) {
        throw std::invalid_argument("build_tree: empty point set");
    }
    if (params.max_leaf_size < 1) {
        throw std::invalid_argument("build_tree: max_leaf_size must be >= 1");
    }
    UnsupervisedBuilder builder(points, params, diag);
    return builder.run();
}

PartitionTree build_classification_tree(const VectorSet& points, const GroundTruth& labels,
                                        const TreeBuildParams& params, BuildDiagnostics* diag) {
    if (labels.rows.size() != points.size()) {
        throw std::invalid_argument("build_classification_tree: labels misaligned with points");
    }
    if (params.k != 0 && params.k != labels.k) {
        throw std::invalid_argument("build_classification_tree: params.k != labels.k");
    }
    if (params.max_leaf_size < 1) {
        throw std::invalid_argument("build_classification_tree: max_leaf_size must be >= 1");
    }
    for (std::size_t i = 0; i < labels.rows.size(); ++i) {
        if (labels.rows[i].indices.empty()) {
            throw std::invalid_argument("build_classification_tree: empty label row " +
                                        std::to_string(i));
        }
    }
    ClassificationBuilder builder(points, labels, params, diag);
    return builder.run();
}

SplitCandidate find_best_split(const VectorSet& points, const GroundTruth& labels,
                               std::span<const std::uint32_t> node_points,
                               std::span<const std::uint32_t> dims) {
    SplitScratch scratch;
    scratch.ensure(label_space_size(labels));
    return best_split_impl(points, labels, node_points, dims, scratch, nullptr);
}

double node_criterion(const GroundTruth& labels, std::span<const std::uint32_t> node_points) {
    std::vector<std::uint32_t> counts;
    std::vector<std::uint32_t> seen;
    counts.resize(label_space_size(labels), 0);
    for (std::uint32_t i : node_points) {
        for (std::uint32_t j : labels.rows[i].indices) {
            if (counts[j]++ == 0) seen.push_back(j);
        }
    }
    double sum = 0.0;
    for (std::uint32_t j : seen) sum += xlogx(counts[j]);
    const double mass = static_cast<double>(labels.k) * static_cast<double>(node_points.size());
    return sum - xlogx(mass);
}

PowerIterationResult principal_direction(const VectorSet& points,
                                         std::span<const std::uint32_t> node_points,
                                         std::uint64_t seed) {
    if (node_points.empty()) {
        throw std::invalid_argument("principal_direction: empty node");
    }
    const std::size_t d = points.dim();
    const std::size_t cnt = node_points.size();

    std::vector<double> mean(d, 0.0);
    for (std::uint32_t i : node_points) {
        const float* x = points[i];
        for (std::size_t j = 0; j < d; ++j) mean[j] += x[j];
    }
    for (double& v : mean) v /= static_cast<double>(cnt);

    std::mt19937_64 rng(splitmix64(seed));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(d);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (double& x : v) {
            x = normal(rng);
            norm += x * x;
        }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;

    PowerIterationResult result;
    std::vector<double> w(d);
    // v <- normalize(Xc^T (Xc v)) without forming the covariance matrix.
    for (int it = 1; it <= 100; ++it) {
        std::fill(w.begin(), w.end(), 0.0);
        for (std::uint32_t i : node_points) {
            const float* x = points[i];
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += (x[j] - mean[j]) * v[j];
            for (std::size_t j = 0; j < d; ++j) w[j] += s * (x[j] - mean[j]);
        }
        double wn = 0.0;
        for (double x : w) wn += x * x;
        wn = std::sqrt(wn);
        result.iterations = it;
        if (wn == 0.0) break;  // zero covariance; cannot converge
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += w[j] * v[j] / wn;
        const double sign = dot < 0.0 ? -1.0 : 1.0;
        double diff = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double next = sign * w[j] / wn;
            const double delta = next - v[j];
            diff += delta * delta;
            v[j] = next;
        }
        if (std::sqrt(diff) < 1e-6) {
            result.converged = true;
            break;
        }
    }

    result.direction.resize(d);
    for (std::size_t j = 0; j < d; ++j) result.direction[j] = static_cast<float>(v[j]);
    return result;
}

}  // namespace annforest
