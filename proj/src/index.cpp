#include "annforest/index.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>

namespace annforest {

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t ns_since(Clock::time_point t0) {
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count());
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::uint64_t tree_seed(std::uint64_t base, std::uint32_t t) {
    return splitmix64(base ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(t) + 1)));
}

}  // namespace

EnsembleIndex build_index(std::shared_ptr<const VectorSet> corpus, const VectorSet* training,
                          const IndexParams& params, const GroundTruth* train_labels,
                          BuildStats* stats) {
    if (!corpus) {
        throw std::invalid_argument("build_index: null corpus");
    }
    if (params.num_trees < 1) {
        throw std::invalid_argument("build_index: need at least one tree");
    }
    const VectorSet& train = training ? *training : *corpus;
    if (train.dim() != corpus->dim()) {
        throw std::invalid_argument("build_index: training/corpus dimension mismatch");
    }
    if (params.mode == IndexMode::classification && (params.k < 1 || params.k > corpus->size())) {
        throw std::invalid_argument("build_index: need 1 <= k <= corpus size");
    }

    EnsembleIndex index;
    index.mode = params.mode;
    index.corpus = corpus;
    index.trees.resize(params.num_trees);

    if (params.mode == IndexMode::voting) {
        const auto t0 = Clock::now();
        std::vector<BuildDiagnostics> diags(params.num_trees);
        const std::int64_t nt = params.num_trees;
#pragma omp parallel for schedule(dynamic)
        for (std::int64_t t = 0; t < nt; ++t) {
            TreeBuildParams tp = params.tree;
            tp.seed = tree_seed(params.tree.seed, static_cast<std::uint32_t>(t));
            index.trees[static_cast<std::size_t>(t)] =
                build_tree(*corpus, tp, &diags[static_cast<std::size_t>(t)]);
        }
        index = make_voting_index(std::move(index.trees), corpus);
        if (stats) {
            stats->build_seconds = seconds_since(t0);
            for (std::size_t t = 0; t < index.trees.size(); ++t) {
                stats->mean_tree_depth += index.trees[t].mean_point_depth;
                stats->pca_fallbacks += diags[t].pca_fallbacks;
            }
            stats->mean_tree_depth /= static_cast<double>(index.trees.size());
        }
        return index;
    }

    const auto gt0 = Clock::now();
    GroundTruth computed;
    const GroundTruth* labels = train_labels;
    if (!labels) {
        computed = exact_knn(*corpus, train, params.k);
        labels = &computed;
    }
    if (labels->k != params.k || labels->rows.size() != train.size()) {
        throw std::invalid_argument("build_index: training labels do not match (k, training size)");
    }
    const double gt_seconds = seconds_since(gt0);

    const auto t0 = Clock::now();
    std::vector<BuildDiagnostics> diags(params.num_trees);
    const std::int64_t nt = params.num_trees;
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t t = 0; t < nt; ++t) {
        TreeBuildParams tp = params.tree;
        tp.seed = tree_seed(params.tree.seed, static_cast<std::uint32_t>(t));
        tp.k = params.k;
        PartitionTree& tree = index.trees[static_cast<std::size_t>(t)];
        if (params.tree.type == TreeType::classification) {
            tree = build_classification_tree(train, *labels, tp, &diags[static_cast<std::size_t>(t)]);
        } else {
            tree = build_tree(train, tp, &diags[static_cast<std::size_t>(t)]);
        }
        fit_leaf_tables(tree, train, *labels);
    }
    index.label_k = params.k;

    if (stats) {
        stats->groundtruth_seconds = train_labels ? 0.0 : gt_seconds;
        stats->build_seconds = seconds_since(t0);
        for (std::size_t t = 0; t < index.trees.size(); ++t) {
            stats->mean_tree_depth += index.trees[t].mean_point_depth;
            stats->pca_fallbacks += diags[t].pca_fallbacks;
        }
        stats->mean_tree_depth /= static_cast<double>(index.trees.size());
    }
    return index;
}

QueryResult query(const EnsembleIndex& index, const float* x, std::uint32_t k,
                  const SelectionParams& selection, ScoreAccumulator& scratch) {
    if (k < 1) {
        throw std::invalid_argument("query: k must be >= 1");
    }
    QueryResult result;
    const VectorSet& corpus = *index.corpus;
    const std::size_t d = corpus.dim();

    const auto route0 = Clock::now();
    thread_local std::vector<std::uint32_t> landing;
    landing.clear();
    landing.reserve(index.tree_count());
    for (const PartitionTree& tree : index.trees) {
        landing.push_back(tree.leaf_of(x));
    }
    result.route_ns = ns_since(route0);

    const auto score0 = Clock::now();
    scratch.reset(corpus.size());
    const double inv_trees = 1.0 / static_cast<double>(index.tree_count());
    for (std::size_t t = 0; t < index.trees.size(); ++t) {
        const LeafLabelTable& table = index.trees[t].leaves[landing[t]];
        if (table.point_count == 0) continue;
        if (selection.scale == ScoreScale::raw_count) {
            for (const auto& [j, v] : table.entries) scratch.add(j, static_cast<double>(v));
        } else {
            const double w = inv_trees / static_cast<double>(table.point_count);
            for (const auto& [j, v] : table.entries) scratch.add(j, static_cast<double>(v) * w);
        }
    }
    result.score_ns = ns_since(score0);

    const auto select0 = Clock::now();
    const std::vector<std::uint32_t> candidates = select_from_scores(scratch, selection);
    result.select_ns = ns_since(select0);
    result.candidate_count = candidates.size();

    const auto rerank0 = Clock::now();
    struct Hit {
        double dist;
        std::uint32_t idx;
        bool operator<(const Hit& o) const {
            return dist < o.dist || (dist == o.dist && idx < o.idx);
        }
    };
    thread_local std::vector<Hit> hits;
    hits.clear();
    hits.reserve(candidates.size());
    for (std::uint32_t j : candidates) {
        hits.push_back(Hit{squared_distance(x, corpus[j], d), j});
    }
    const std::size_t keep = std::min<std::size_t>(k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end());
    result.neighbors.indices.reserve(keep);
    result.neighbors.sq_dists.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) {
        result.neighbors.indices.push_back(hits[i].idx);
        result.neighbors.sq_dists.push_back(hits[i].dist);
    }
    result.rerank_ns = ns_since(rerank0);
    return result;
}

QueryResult query(const EnsembleIndex& index, const float* x, std::uint32_t k,
                  const SelectionParams& selection) {
    ScoreAccumulator scratch(index.corpus_size());
    return query(index, x, k, selection, scratch);
}

}  // namespace annforest
