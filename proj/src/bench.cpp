#include "annforest/bench.hpp"

#include "annforest/dataio.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace annforest {

namespace {

using Clock = std::chrono::steady_clock;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::uint32_t resolve_mtry(std::uint32_t mtry, std::size_t d) {
    if (mtry == 0 || mtry > d) return static_cast<std::uint32_t>(d);
    return mtry;
}

std::uint32_t default_class_mtry(std::size_t d) {
    return static_cast<std::uint32_t>(std::ceil(std::sqrt(static_cast<double>(d))));
}

}  // namespace

std::string tree_type_name(TreeType type) {
    switch (type) {
        case TreeType::rp: return "rp";
        case TreeType::kd: return "kd";
        case TreeType::pca: return "pca";
        case TreeType::classification: return "class";
    }
    throw std::logic_error("unknown tree type");
}

TreeType parse_tree_type(const std::string& name) {
    if (name == "rp") return TreeType::rp;
    if (name == "kd") return TreeType::kd;
    if (name == "pca") return TreeType::pca;
    if (name == "class" || name == "classification") return TreeType::classification;
    throw std::invalid_argument("unknown tree type: " + name);
}

std::string scale_name(ScoreScale scale) {
    return scale == ScoreScale::raw_count ? "raw_count" : "mean_probability";
}

ScoreScale parse_scale(const std::string& name) {
    if (name == "raw_count") return ScoreScale::raw_count;
    if (name == "mean_probability") return ScoreScale::mean_probability;
    throw std::invalid_argument("unknown scale: " + name);
}

std::string algorithm_tag(IndexMode mode, TreeType type, double tau) {
    if (mode == IndexMode::voting) {
        return (tau == 0.0 ? "lookup-" : "vote-") + tree_type_name(type);
    }
    return "rf-" + tree_type_name(type);
}

std::vector<double> auto_tau_grid(const EnsembleIndex& index, const VectorSet& sample,
                                  ScoreScale scale, std::size_t levels) {
    std::vector<double> scores;
    ScoreAccumulator acc(index.corpus_size());
    const std::size_t n = std::min<std::size_t>(sample.size(), 100);
    for (std::size_t i = 0; i < n; ++i) {
        acc.reset(index.corpus_size());
        accumulate_scores(index, sample[i], scale, acc);
        for (std::uint32_t j : acc.touched()) scores.push_back(acc.score(j));
    }
    std::vector<double> taus{0.0};
    if (!scores.empty() && levels > 0) {
        std::sort(scores.begin(), scores.end());
        for (std::size_t i = 1; i <= levels; ++i) {
            const double q = static_cast<double>(i) / static_cast<double>(levels + 1);
            taus.push_back(scores[static_cast<std::size_t>(q * static_cast<double>(scores.size() - 1))]);
        }
    }
    std::sort(taus.begin(), taus.end());
    taus.erase(std::unique(taus.begin(), taus.end()), taus.end());
    return taus;
}

std::vector<OperatingPoint> sweep_tau(const EnsembleIndex& index, const VectorSet& queries,
                                      const GroundTruth& gt, ScoreScale scale,
                                      std::span<const double> taus) {
    if (gt.rows.size() != queries.size()) {
        throw std::invalid_argument("sweep_tau: ground truth misaligned with queries");
    }
    const std::size_t m = index.corpus_size();
    std::vector<OperatingPoint> out(taus.size());
    ScoreAccumulator acc(m);
    std::vector<char> is_truth(m, 0);
    for (std::size_t q = 0; q < queries.size(); ++q) {
        acc.reset(m);
        accumulate_scores(index, queries[q], scale, acc);
        const NeighborList& truth = gt.rows[q];
        for (std::uint32_t j : truth.indices) is_truth[j] = 1;
        for (std::size_t t = 0; t < taus.size(); ++t) {
            std::size_t cand = 0, hits = 0;
            for (std::uint32_t j : acc.touched()) {
                if (acc.score(j) > taus[t]) {
                    ++cand;
                    hits += is_truth[j];
                }
            }
            out[t].candidates += static_cast<double>(cand);
            out[t].recall += static_cast<double>(hits) / static_cast<double>(truth.size());
        }
        for (std::uint32_t j : truth.indices) is_truth[j] = 0;
    }
    const double inv = 1.0 / static_cast<double>(queries.size());
    for (OperatingPoint& p : out) {
        p.candidates *= inv;
        p.recall *= inv;
    }
    return out;
}

std::vector<BenchmarkRecord> measure_curve(const EnsembleIndex& index, const VectorSet& queries,
                                           const GroundTruth& gt, ScoreScale scale,
                                           std::span<const double> taus, std::uint32_t k,
                                           TreeType type, std::uint32_t leaf, std::uint32_t mtry,
                                           std::uint64_t seed, double build_seconds) {
    if (gt.rows.size() != queries.size()) {
        throw std::invalid_argument("measure_curve: ground truth misaligned with queries");
    }
    std::vector<BenchmarkRecord> records;
    ScoreAccumulator scratch(index.corpus_size());
    std::vector<std::uint32_t> sorted;

    SelectionParams warm{taus.empty() ? 0.0 : taus.front(), scale, std::nullopt};
    for (std::size_t q = 0; q < queries.size(); ++q) {
        (void)query(index, queries[q], k, warm, scratch);  // warm-up, untimed
    }

    for (double tau : taus) {
        const SelectionParams sel{tau, scale, std::nullopt};
        double sum_recall = 0.0, sum_cand = 0.0;
        const auto t0 = Clock::now();
        for (std::size_t q = 0; q < queries.size(); ++q) {
            const QueryResult res = query(index, queries[q], k, sel, scratch);
            sorted.assign(res.neighbors.indices.begin(), res.neighbors.indices.end());
            std::sort(sorted.begin(), sorted.end());
            sum_recall += recall(sorted, gt.rows[q]);
            sum_cand += static_cast<double>(res.candidate_count);
        }
        const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();

        BenchmarkRecord rec;
        rec.algorithm = algorithm_tag(index.mode, type, tau);
        rec.trees = static_cast<std::uint32_t>(index.tree_count());
        rec.leaf = leaf;
        rec.mtry = mtry;
        rec.tau = tau;
        rec.scale = scale;
        rec.recall = sum_recall / static_cast<double>(queries.size());
        rec.qtime = elapsed / static_cast<double>(queries.size());
        rec.candidates = sum_cand / static_cast<double>(queries.size());
        rec.build_seconds = build_seconds;
        rec.seed = seed;
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<BenchmarkRecord> run_grid(std::shared_ptr<const VectorSet> corpus,
                                      const VectorSet* training, const VectorSet& test,
                                      const GroundTruth& test_gt, const GridSpec& grid,
                                      std::ostream* log) {
    const VectorSet& train = training ? *training : *corpus;
    std::vector<BenchmarkRecord> out;

    if (grid.k < 1 || grid.k > corpus->size()) {
        throw std::invalid_argument("run_grid: need 1 <= k <= corpus size");
    }

    GroundTruth train_gt;  // computed on first classification-mode configuration
    bool have_train_gt = false;

    for (std::uint64_t seed : grid.seeds) {
        for (IndexMode mode : grid.modes) {
            for (TreeType type : grid.types) {
                if (mode == IndexMode::voting && type == TreeType::classification) {
                    if (log) *log << "skip: voting mode with classification trees\n";
                    continue;
                }
                for (std::uint32_t trees : grid.tree_counts) {
                    for (std::uint32_t leaf : grid.leaf_sizes) {
                        for (std::uint32_t mtry : grid.mtrys) {
                            if (type == TreeType::classification && mtry > corpus->dim()) {
                                if (log) *log << "skip: mtry " << mtry << " > d\n";
                                continue;
                            }
                            // voting search is defined on raw counts only
                            const std::vector<ScoreScale> scales =
                                mode == IndexMode::voting
                                    ? std::vector<ScoreScale>{ScoreScale::raw_count}
                                    : grid.scales;
                            for (ScoreScale scale : scales) {
                                if (mode == IndexMode::classification && !have_train_gt) {
                                    train_gt = exact_knn(*corpus, train, grid.k);
                                    have_train_gt = true;
                                }
                                IndexParams params;
                                params.tree.type = type;
                                params.tree.max_leaf_size = leaf;
                                params.tree.mtry = resolve_mtry(mtry, corpus->dim());
                                params.tree.seed = seed;
                                params.num_trees = trees;
                                params.k = grid.k;
                                params.mode = mode;
                                BuildStats stats;
                                const EnsembleIndex index =
                                    build_index(corpus, training, params,
                                                mode == IndexMode::classification ? &train_gt : nullptr,
                                                &stats);

                                std::vector<double> taus = grid.taus;
                                if (taus.empty()) {
                                    if (mode == IndexMode::voting) {
                                        const std::uint32_t step =
                                            std::max<std::uint32_t>(1, trees / 32);
                                        for (std::uint32_t t = 0; t < trees; t += step) {
                                            taus.push_back(t);
                                        }
                                    } else {
                                        taus = auto_tau_grid(index, test, scale, grid.tau_levels);
                                    }
                                }
                                auto records = measure_curve(index, test, test_gt, scale, taus,
                                                             grid.k, type, leaf, params.tree.mtry,
                                                             seed, stats.build_seconds);
                                for (BenchmarkRecord& rec : records) {
                                    rec.mean_depth = stats.mean_tree_depth;
                                    rec.corpus_digest = corpus->digest();
                                    rec.train_digest = train.digest();
                                }
                                if (log) {
                                    *log << algorithm_tag(mode, type, 1) << " T=" << trees
                                         << " leaf=" << leaf << " seed=" << seed << ": "
                                         << records.size() << " operating points\n";
                                }
                                out.insert(out.end(), records.begin(), records.end());
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

std::vector<BenchmarkRecord> pareto_frontier(std::vector<BenchmarkRecord> records) {
    if (records.empty()) {
        throw std::invalid_argument("pareto_frontier: empty record list");
    }
    std::sort(records.begin(), records.end(), [](const BenchmarkRecord& a, const BenchmarkRecord& b) {
        if (a.qtime != b.qtime) return a.qtime < b.qtime;
        if (a.recall != b.recall) return a.recall > b.recall;
        return a.algorithm < b.algorithm;
    });
    std::vector<BenchmarkRecord> frontier;
    double best_recall = -1.0;
    for (BenchmarkRecord& rec : records) {
        if (rec.recall > best_recall) {
            best_recall = rec.recall;
            frontier.push_back(std::move(rec));
        }
    }
    return frontier;  // qtime ascending, hence recall ascending
}

double interp_recall(std::vector<OperatingPoint> curve, double target_candidates) {
    if (curve.empty()) {
        throw std::invalid_argument("interp_recall: empty curve");
    }
    std::sort(curve.begin(), curve.end(), [](const OperatingPoint& a, const OperatingPoint& b) {
        return a.candidates < b.candidates;
    });
    if (target_candidates <= curve.front().candidates) return curve.front().recall;
    if (target_candidates >= curve.back().candidates) return curve.back().recall;
    for (std::size_t i = 1; i < curve.size(); ++i) {
        if (target_candidates <= curve[i].candidates) {
            const double x0 = curve[i - 1].candidates, x1 = curve[i].candidates;
            const double y0 = curve[i - 1].recall, y1 = curve[i].recall;
            if (x1 == x0) return std::max(y0, y1);
            const double w = (target_candidates - x0) / (x1 - x0);
            return y0 + w * (y1 - y0);
        }
    }
    return curve.back().recall;
}

std::vector<BenchmarkRecord> run_shift_experiment(const ShiftConfig& config, std::ostream* log) {
    std::vector<BenchmarkRecord> out;
    const std::uint32_t mtry =
        config.mtry != 0 ? config.mtry : default_class_mtry(config.dim);

    for (std::uint64_t seed : config.seeds) {
        auto corpus = std::make_shared<VectorSet>(generate_uniform(
            config.corpus_n, config.dim, -10.0, 10.0, splitmix64(seed ^ 0x11)));
        GroundTruth corpus_gt;  // corpus-as-training labels, shared across sigmas
        bool have_corpus_gt = false;

        for (std::size_t si = 0; si < config.sigmas.size(); ++si) {
            const double sigma = config.sigmas[si];
            const VectorSet train = generate_gaussian(config.train_n, config.dim, sigma,
                                                      splitmix64(seed ^ (0x22 + si)));
            const VectorSet test = generate_gaussian(config.test_n, config.dim, sigma,
                                                     splitmix64(seed ^ (0x33 + si)));
            const GroundTruth test_gt = exact_knn(*corpus, test, config.k);

            IndexParams params;
            params.tree.type = TreeType::classification;
            params.tree.max_leaf_size = config.leaf;
            params.tree.mtry = mtry;
            params.tree.seed = seed;
            params.num_trees = config.trees;
            params.k = config.k;

            // Model fit to a sample from the query distribution.
            {
                const GroundTruth train_gt = exact_knn(*corpus, train, config.k);
                BuildStats stats;
                const EnsembleIndex index = build_index(corpus, &train, params, &train_gt, &stats);
                const auto taus = auto_tau_grid(index, test, ScoreScale::mean_probability,
                                                config.tau_levels);
                auto records = measure_curve(index, test, test_gt, ScoreScale::mean_probability,
                                             taus, config.k, TreeType::classification,
                                             static_cast<std::uint32_t>(config.leaf), mtry, seed,
                                             stats.build_seconds);
                for (BenchmarkRecord& rec : records) {
                    rec.sigma = sigma;
                    rec.mean_depth = stats.mean_tree_depth;
                    rec.corpus_digest = corpus->digest();
                    rec.train_digest = train.digest();
                }
                out.insert(out.end(), records.begin(), records.end());
            }

            // Model fit to the corpus.
            {
                if (!have_corpus_gt) {
                    corpus_gt = exact_knn(*corpus, *corpus, config.k);
                    have_corpus_gt = true;
                }
                BuildStats stats;
                const EnsembleIndex index = build_index(corpus, nullptr, params, &corpus_gt, &stats);
                const auto taus = auto_tau_grid(index, test, ScoreScale::mean_probability,
                                                config.tau_levels);
                auto records = measure_curve(index, test, test_gt, ScoreScale::mean_probability,
                                             taus, config.k, TreeType::classification,
                                             static_cast<std::uint32_t>(config.leaf), mtry, seed,
                                             stats.build_seconds);
                for (BenchmarkRecord& rec : records) {
                    rec.algorithm = "rf-class-corpus";
                    rec.sigma = sigma;
                    rec.mean_depth = stats.mean_tree_depth;
                    rec.corpus_digest = corpus->digest();
                    rec.train_digest = corpus->digest();
                }
                out.insert(out.end(), records.begin(), records.end());
            }
            if (log) *log << "shift: seed " << seed << " sigma " << sigma << " done\n";
        }
    }
    return out;
}

std::vector<BenchmarkRecord> run_scale_experiment(const ScaleConfig& config, std::ostream* log) {
    std::vector<BenchmarkRecord> out;
    if (config.multipliers.empty()) {
        throw std::invalid_argument("run_scale_experiment: no multipliers");
    }
    const std::size_t max_mult = *std::max_element(config.multipliers.begin(),
                                                   config.multipliers.end());
    const std::uint32_t mtry =
        config.mtry != 0 ? config.mtry : default_class_mtry(config.dim);

    for (std::uint64_t seed : config.seeds) {
        auto corpus = std::make_shared<VectorSet>(generate_gaussian(
            config.corpus_n, config.dim, config.sigma, splitmix64(seed ^ 0x51)));
        const VectorSet test = generate_gaussian(config.test_n, config.dim, config.sigma,
                                                 splitmix64(seed ^ 0x52));
        const GroundTruth test_gt = exact_knn(*corpus, test, config.k);

        // Training sets are nested: the corpus first, then extra draws from
        // the same distribution. Labels are per point, so the full ground
        // truth is computed once and sliced per multiplier.
        std::vector<float> full_data = corpus->data();
        if (max_mult > 1) {
            const VectorSet extra =
                generate_gaussian((max_mult - 1) * config.corpus_n, config.dim, config.sigma,
                                  splitmix64(seed ^ 0x53));
            full_data.insert(full_data.end(), extra.data().begin(), extra.data().end());
        }
        const VectorSet full_train(max_mult * config.corpus_n, config.dim, std::move(full_data));
        const GroundTruth full_gt = exact_knn(*corpus, full_train, config.k);

        for (std::size_t mult : config.multipliers) {
            const std::size_t n_train = mult * config.corpus_n;
            const VectorSet train(n_train, config.dim,
                                  {full_train.data().begin(),
                                   full_train.data().begin() +
                                       static_cast<std::ptrdiff_t>(n_train * config.dim)});
            GroundTruth train_gt;
            train_gt.k = config.k;
            train_gt.rows.assign(full_gt.rows.begin(),
                                 full_gt.rows.begin() + static_cast<std::ptrdiff_t>(n_train));

            IndexParams params;
            params.tree.type = TreeType::classification;
            params.tree.max_leaf_size = config.leaf;
            params.tree.mtry = mtry;
            params.tree.seed = seed;
            params.num_trees = config.trees;
            params.k = config.k;
            BuildStats stats;
            const EnsembleIndex index = build_index(corpus, &train, params, &train_gt, &stats);

            const auto taus =
                auto_tau_grid(index, test, ScoreScale::mean_probability, config.tau_levels);
            auto records = measure_curve(index, test, test_gt, ScoreScale::mean_probability, taus,
                                         config.k, TreeType::classification,
                                         static_cast<std::uint32_t>(config.leaf), mtry, seed,
                                         stats.build_seconds);
            for (BenchmarkRecord& rec : records) {
                rec.multiplier = static_cast<double>(mult);
                rec.mean_depth = stats.mean_tree_depth;
                rec.corpus_digest = corpus->digest();
                rec.train_digest = train.digest();
            }
            out.insert(out.end(), records.begin(), records.end());
            if (log) *log << "scale: seed " << seed << " multiplier " << mult << " done\n";
        }
    }
    return out;
}

namespace {

const char* kGridHeader =
    "algorithm,T,leaf,a,tau,scale,recall,qtime,candidates,build_time,seed,corpus_digest,train_digest";

}  // namespace

void write_grid_csv(const std::filesystem::path& path,
                    const std::vector<BenchmarkRecord>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << kGridHeader << "\n";
    for (const BenchmarkRecord& r : records) {
        out << r.algorithm << ',' << r.trees << ',' << r.leaf << ',' << r.mtry << ','
            << fmt(r.tau) << ',' << scale_name(r.scale) << ',' << fmt(r.recall) << ','
            << fmt(r.qtime) << ',' << fmt(r.candidates) << ',' << fmt(r.build_seconds) << ','
            << r.seed << ',' << r.corpus_digest << ',' << r.train_digest << "\n";
    }
}

std::vector<BenchmarkRecord> read_grid_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kGridHeader) {
        throw std::runtime_error(path.string() + ": unrecognized CSV header");
    }
    std::vector<BenchmarkRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 13) {
            throw std::runtime_error(path.string() + ": malformed CSV row: " + line);
        }
        BenchmarkRecord r;
        r.algorithm = fields[0];
        r.trees = static_cast<std::uint32_t>(std::stoul(fields[1]));
        r.leaf = static_cast<std::uint32_t>(std::stoul(fields[2]));
        r.mtry = static_cast<std::uint32_t>(std::stoul(fields[3]));
        r.tau = std::stod(fields[4]);
        r.scale = parse_scale(fields[5]);
        r.recall = std::stod(fields[6]);
        r.qtime = std::stod(fields[7]);
        r.candidates = std::stod(fields[8]);
        r.build_seconds = std::stod(fields[9]);
        r.seed = std::stoull(fields[10]);
        r.corpus_digest = std::stoull(fields[11]);
        r.train_digest = std::stoull(fields[12]);
        records.push_back(std::move(r));
    }
    return records;
}

void write_shift_csv(const std::filesystem::path& path,
                     const std::vector<BenchmarkRecord>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "sigma,algorithm,T,leaf,a,tau,scale,recall,qtime,candidates,seed\n";
    for (const BenchmarkRecord& r : records) {
        out << fmt(r.sigma) << ',' << r.algorithm << ',' << r.trees << ',' << r.leaf << ','
            << r.mtry << ',' << fmt(r.tau) << ',' << scale_name(r.scale) << ',' << fmt(r.recall)
            << ',' << fmt(r.qtime) << ',' << fmt(r.candidates) << ',' << r.seed << "\n";
    }
}

void write_scale_csv(const std::filesystem::path& path,
                     const std::vector<BenchmarkRecord>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "multiplier,algorithm,T,leaf,a,tau,scale,recall,qtime,candidates,seed,mean_depth\n";
    for (const BenchmarkRecord& r : records) {
        out << fmt(r.multiplier) << ',' << r.algorithm << ',' << r.trees << ',' << r.leaf << ','
            << r.mtry << ',' << fmt(r.tau) << ',' << scale_name(r.scale) << ',' << fmt(r.recall)
            << ',' << fmt(r.qtime) << ',' << fmt(r.candidates) << ',' << r.seed << ','
            << fmt(r.mean_depth) << "\n";
    }
}

}  // namespace annforest
