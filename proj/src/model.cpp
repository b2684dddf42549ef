#include "annforest/model.hpp"

#include <algorithm>
#include <stdexcept>

namespace annforest {

void fit_leaf_tables(PartitionTree& tree, const VectorSet& train, const GroundTruth& labels) {
    if (labels.rows.size() != train.size()) {
        throw std::invalid_argument("fit_leaf_tables: labels misaligned with training set");
    }
    if (tree.dim != train.dim()) {
        throw std::invalid_argument("fit_leaf_tables: dimension mismatch");
    }

    std::vector<std::vector<std::uint32_t>> leaf_labels(tree.leaf_count());
    std::vector<std::uint32_t> leaf_points(tree.leaf_count(), 0);
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (labels.rows[i].indices.empty()) {
            throw std::invalid_argument("fit_leaf_tables: empty label row " + std::to_string(i));
        }
        const std::uint32_t l = tree.leaf_of(train[i]);
        ++leaf_points[l];
        auto& bucket = leaf_labels[l];
        bucket.insert(bucket.end(), labels.rows[i].indices.begin(), labels.rows[i].indices.end());
    }

    for (std::size_t l = 0; l < tree.leaf_count(); ++l) {
        LeafLabelTable& table = tree.leaves[l];
        table.point_count = leaf_points[l];
        table.entries.clear();
        auto& bucket = leaf_labels[l];
        std::sort(bucket.begin(), bucket.end());
        for (std::size_t i = 0; i < bucket.size();) {
            std::size_t run = i;
            while (run < bucket.size() && bucket[run] == bucket[i]) ++run;
            table.entries.emplace_back(bucket[i], static_cast<std::uint32_t>(run - i));
            i = run;
        }
    }
}

EnsembleIndex make_voting_index(std::vector<PartitionTree> trees,
                                std::shared_ptr<const VectorSet> corpus) {
    if (trees.empty() || !corpus) {
        throw std::invalid_argument("make_voting_index: need trees and a corpus");
    }
    for (PartitionTree& tree : trees) {
        if (tree.dim != corpus->dim()) {
            throw std::invalid_argument("make_voting_index: tree/corpus dimension mismatch");
        }
        std::vector<std::vector<std::uint32_t>> members(tree.leaf_count());
        for (std::uint32_t j = 0; j < corpus->size(); ++j) {
            members[tree.leaf_of((*corpus)[j])].push_back(j);
        }
        for (std::size_t l = 0; l < tree.leaf_count(); ++l) {
            LeafLabelTable& table = tree.leaves[l];
            table.point_count = static_cast<std::uint32_t>(members[l].size());
            table.entries.clear();
            table.entries.reserve(members[l].size());
            for (std::uint32_t j : members[l]) table.entries.emplace_back(j, 1u);
        }
    }
    EnsembleIndex index;
    index.trees = std::move(trees);
    index.label_k = 1;
    index.mode = IndexMode::voting;
    index.corpus = std::move(corpus);
    return index;
}

void accumulate_scores(const EnsembleIndex& index, const float* x, ScoreScale scale,
                       ScoreAccumulator& acc) {
    const double inv_trees = 1.0 / static_cast<double>(index.tree_count());
    for (const PartitionTree& tree : index.trees) {
        const LeafLabelTable& table = tree.leaves[tree.leaf_of(x)];
        if (table.point_count == 0) continue;  // empty leaf contributes 0 to the mean
        if (scale == ScoreScale::raw_count) {
            for (const auto& [j, v] : table.entries) {
                acc.add(j, static_cast<double>(v));
            }
        } else {
            const double w = inv_trees / static_cast<double>(table.point_count);
            for (const auto& [j, v] : table.entries) {
                acc.add(j, static_cast<double>(v) * w);
            }
        }
    }
}

std::vector<std::pair<std::uint32_t, double>> estimate_probabilities(const EnsembleIndex& index,
                                                                     const float* x,
                                                                     ScoreScale scale) {
    ScoreAccumulator acc(index.corpus_size());
    accumulate_scores(index, x, scale, acc);
    std::vector<std::pair<std::uint32_t, double>> out;
    out.reserve(acc.touched().size());
    for (std::uint32_t j : acc.touched()) out.emplace_back(j, acc.score(j));
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::uint32_t> select_from_scores(const ScoreAccumulator& acc,
                                              const SelectionParams& params) {
    if (params.tau < 0.0) {
        throw std::invalid_argument("select_from_scores: tau must be >= 0");
    }
    std::vector<std::uint32_t> out;
    for (std::uint32_t j : acc.touched()) {
        if (acc.score(j) > params.tau) out.push_back(j);
    }
    if (params.max_candidates && out.size() > *params.max_candidates) {
        std::sort(out.begin(), out.end(), [&](std::uint32_t a, std::uint32_t b) {
            const double sa = acc.score(a), sb = acc.score(b);
            return sa > sb || (sa == sb && a < b);
        });
        out.resize(*params.max_candidates);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::uint32_t> select_candidates(const EnsembleIndex& index, const float* x,
                                             const SelectionParams& params,
                                             ScoreAccumulator& scratch) {
    scratch.reset(index.corpus_size());
    accumulate_scores(index, x, params.scale, scratch);
    return select_from_scores(scratch, params);
}

}  // namespace annforest
