#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "annforest/tree.hpp"
#include "annforest/vector_set.hpp"

namespace annforest {

// Score scale used at query time. `mean_probability` averages the per-tree
// leaf probability estimates v/N over the ensemble; `raw_count` sums the
// unnormalized label counts.
enum class ScoreScale : std::uint8_t { mean_probability, raw_count };

enum class IndexMode : std::uint8_t { classification, voting };

struct SelectionParams {
    double tau = 0.0;  // strict threshold: keep labels with score > tau
    ScoreScale scale = ScoreScale::mean_probability;
    std::optional<std::size_t> max_candidates;
};

// Reusable dense accumulator with a touched-list so per-query cost is
// proportional to the number of labels actually scored, not to the corpus
// size. One instance per thread; never shared concurrently.
class ScoreAccumulator {
  public:
    ScoreAccumulator() = default;
    explicit ScoreAccumulator(std::size_t label_space): score_(label_space, 0.0) {}

    void reset(std::size_t label_space) {
        clear();
        if (score_.size() < label_space) score_.resize(label_space, 0.0);
    }

    void add(std::uint32_t j, double w) {
        if (score_[j] == 0.0) touched_.push_back(j);
        score_[j] += w;
    }

    void clear() {
        for (std::uint32_t j : touched_) score_[j] = 0.0;
        touched_.clear();
    }

    double score(std::uint32_t j) const { return score_[j]; }
    std::span<const std::uint32_t> touched() const { return touched_; }
    std::size_t label_space() const { return score_.size(); }

  private:
    std::vector<double> score_;
    std::vector<std::uint32_t> touched_;
};

// T fitted trees over one corpus. Immutable after construction;
// concurrent queries are safe as long as each uses its own accumulator.
struct EnsembleIndex {
    std::vector<PartitionTree> trees;
    std::uint32_t label_k = 0;  // k the tables were fitted with (1 in voting mode)
    IndexMode mode = IndexMode::classification;
    std::shared_ptr<const VectorSet> corpus;

    std::size_t tree_count() const { return trees.size(); }
    std::size_t dim() const { return corpus ? corpus->dim() : 0; }
    std::size_t corpus_size() const { return corpus ? corpus->size() : 0; }
};

// Populates the leaf tables of a built tree by routing every training point
// and counting its labels. A leaf no training point reaches keeps an empty
// table and contributes score 0.
void fit_leaf_tables(PartitionTree& tree, const VectorSet& train, const GroundTruth& labels);

// Voting/lookup construction: leaf tables record corpus membership with
// unit counts (the k=1 self-label special case).
EnsembleIndex make_voting_index(std::vector<PartitionTree> trees,
                                std::shared_ptr<const VectorSet> corpus);

// Routes x through every tree and accumulates label scores on the chosen
// scale. The accumulator must already be reset to the corpus size.
void accumulate_scores(const EnsembleIndex& index, const float* x, ScoreScale scale,
                       ScoreAccumulator& acc);

// Sparse probability/score estimates for x, sorted by corpus index.
std::vector<std::pair<std::uint32_t, double>> estimate_probabilities(
    const EnsembleIndex& index, const float* x, ScoreScale scale = ScoreScale::mean_probability);

// Labels with score strictly greater than tau, sorted ascending by index.
// Under max_candidates the top-scoring labels are kept, ties broken by
// lower index.
std::vector<std::uint32_t> select_from_scores(const ScoreAccumulator& acc,
                                              const SelectionParams& params);

std::vector<std::uint32_t> select_candidates(const EnsembleIndex& index, const float* x,
                                             const SelectionParams& params,
                                             ScoreAccumulator& scratch);

}  // namespace annforest
