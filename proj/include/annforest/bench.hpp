#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "annforest/index.hpp"

namespace annforest {

// One grid-search measurement: a (configuration, tau) operating point with
// its mean recall and mean single-threaded query time over the test set.
struct BenchmarkRecord {
    std::string algorithm;  // rf-rp | rf-kd | rf-pca | rf-class | vote-* | lookup-*
    std::uint32_t trees = 0;
    std::uint32_t leaf = 0;
    std::uint32_t mtry = 0;
    double tau = 0.0;
    ScoreScale scale = ScoreScale::mean_probability;
    double recall = 0.0;
    double qtime = 0.0;       // mean seconds per query
    double candidates = 0.0;  // mean candidate-set size
    double build_seconds = 0.0;
    std::uint64_t seed = 0;
    double sigma = 0.0;       // distribution-shift experiment only
    double multiplier = 0.0;  // training-scale experiment only
    double mean_depth = 0.0;
    std::uint64_t corpus_digest = 0;
    std::uint64_t train_digest = 0;
};

struct OperatingPoint {
    double candidates = 0.0;
    double recall = 0.0;
};

struct GridSpec {
    std::vector<TreeType> types{TreeType::rp};
    std::vector<IndexMode> modes{IndexMode::classification};
    std::vector<std::uint32_t> tree_counts{8, 32, 128};
    std::vector<std::uint32_t> leaf_sizes{32, 128, 512};
    std::vector<std::uint32_t> mtrys{0};  // classification only; 0 = all dimensions
    std::vector<ScoreScale> scales{ScoreScale::mean_probability};
    std::vector<double> taus;  // empty = scale-relative automatic grid
    std::size_t tau_levels = 16;
    std::vector<std::uint64_t> seeds{1};
    std::uint32_t k = 10;
};

std::string tree_type_name(TreeType type);
TreeType parse_tree_type(const std::string& name);
std::string scale_name(ScoreScale scale);
ScoreScale parse_scale(const std::string& name);
std::string algorithm_tag(IndexMode mode, TreeType type, double tau);

// tau values spanning the observed positive-score range: 0 plus quantiles
// of per-label scores collected from the sample queries. For raw_count
// voting indexes integer thresholds 0..T-1 are the natural grid instead.
std::vector<double> auto_tau_grid(const EnsembleIndex& index, const VectorSet& sample,
                                  ScoreScale scale, std::size_t levels);

// Recall / candidate-count curve over a tau grid, one scoring pass per
// query (no timing). Points are ordered like `taus`.
std::vector<OperatingPoint> sweep_tau(const EnsembleIndex& index, const VectorSet& queries,
                                      const GroundTruth& gt, ScoreScale scale,
                                      std::span<const double> taus);

// Timed version: one warm-up pass, then a timed single-threaded query loop
// per tau. Fills algorithm tags and hyperparameters from the arguments.
std::vector<BenchmarkRecord> measure_curve(const EnsembleIndex& index, const VectorSet& queries,
                                           const GroundTruth& gt, ScoreScale scale,
                                           std::span<const double> taus, std::uint32_t k,
                                           TreeType type, std::uint32_t leaf, std::uint32_t mtry,
                                           std::uint64_t seed, double build_seconds);

std::vector<BenchmarkRecord> run_grid(std::shared_ptr<const VectorSet> corpus,
                                      const VectorSet* training, const VectorSet& test,
                                      const GroundTruth& test_gt, const GridSpec& grid,
                                      std::ostream* log = nullptr);

// Records not dominated in (recall, qtime); sorted by recall ascending,
// strictly increasing in both coordinates.
std::vector<BenchmarkRecord> pareto_frontier(std::vector<BenchmarkRecord> records);

// Piecewise-linear recall at a target candidate count (clamped at the ends).
double interp_recall(std::vector<OperatingPoint> curve, double target_candidates);

struct ShiftConfig {
    std::size_t corpus_n = 10000;
    std::size_t dim = 50;
    std::size_t train_n = 10000;
    std::size_t test_n = 100;
    std::vector<double> sigmas{1.0, 2.5, 5.0};
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    // Modest ensemble capacity: with large leaves or many trees the
    // corpus-trained baseline's dense self-label tables dominate even when
    // the query distribution matches, hiding the adaptation effect this
    // experiment measures.
    std::uint32_t trees = 8;
    std::size_t leaf = 32;
    std::uint32_t mtry = 0;  // 0 = ceil(sqrt(d))
    std::uint32_t k = 10;
    std::size_t tau_levels = 20;
};

// Query-distribution-trained vs corpus-trained RF-CLASS on a uniform corpus
// with Gaussian queries of varying concentration.
std::vector<BenchmarkRecord> run_shift_experiment(const ShiftConfig& config,
                                                  std::ostream* log = nullptr);

struct ScaleConfig {
    std::size_t corpus_n = 10000;
    std::size_t dim = 50;
    std::size_t test_n = 1000;
    std::vector<std::size_t> multipliers{1, 4, 16};
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::uint32_t trees = 16;
    std::size_t leaf = 64;
    std::uint32_t mtry = 0;
    std::uint32_t k = 10;
    double sigma = 1.0;
    std::size_t tau_levels = 20;
};

// RF-CLASS with training sets of multiplier * corpus_n points drawn from
// the corpus distribution (multiplier 1 is the corpus-as-training baseline).
std::vector<BenchmarkRecord> run_scale_experiment(const ScaleConfig& config,
                                                  std::ostream* log = nullptr);

void write_grid_csv(const std::filesystem::path& path,
                    const std::vector<BenchmarkRecord>& records);
std::vector<BenchmarkRecord> read_grid_csv(const std::filesystem::path& path);
void write_shift_csv(const std::filesystem::path& path,
                     const std::vector<BenchmarkRecord>& records);
void write_scale_csv(const std::filesystem::path& path,
                     const std::vector<BenchmarkRecord>& records);

}  // namespace annforest
