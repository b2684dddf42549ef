#pragma once

#include <cstdint>
#include <memory>

#include "annforest/knn.hpp"
#include "annforest/model.hpp"
#include "annforest/tree.hpp"

namespace annforest {

struct IndexParams {
    TreeBuildParams tree;
    std::uint32_t num_trees = 8;
    std::uint32_t k = 10;
    IndexMode mode = IndexMode::classification;
    SelectionParams selection;  // defaults used by query when none are given
};

struct QueryResult {
    NeighborList neighbors;
    std::size_t candidate_count = 0;
    std::uint64_t route_ns = 0;
    std::uint64_t score_ns = 0;
    std::uint64_t select_ns = 0;
    std::uint64_t rerank_ns = 0;

    bool operator==(const QueryResult& other) const {
        return neighbors == other.neighbors && candidate_count == other.candidate_count;
    }
};

struct BuildStats {
    double groundtruth_seconds = 0.0;
    double build_seconds = 0.0;      // trees + table fitting, excluding ground truth
    double mean_tree_depth = 0.0;    // point-weighted, averaged over trees
    std::uint32_t pca_fallbacks = 0;
};

// Builds the full index: exact k-nn labels for the training set (corpus
// doubles as the training set when none is given), T trees built in
// parallel with per-tree seeds, leaf tables fitted. In voting mode the
// trees are built on the corpus and tables record leaf membership.
// `train_labels`, when given, skips the ground-truth pass (cache hit).
EnsembleIndex build_index(std::shared_ptr<const VectorSet> corpus, const VectorSet* training,
                          const IndexParams& params, const GroundTruth* train_labels = nullptr,
                          BuildStats* stats = nullptr);

// Candidate selection followed by exact re-ranking. Returns at most k
// neighbors; fewer when the candidate set is smaller than k (no padding).
QueryResult query(const EnsembleIndex& index, const float* x, std::uint32_t k,
                  const SelectionParams& selection, ScoreAccumulator& scratch);

QueryResult query(const EnsembleIndex& index, const float* x, std::uint32_t k,
                  const SelectionParams& selection);

}  // namespace annforest
