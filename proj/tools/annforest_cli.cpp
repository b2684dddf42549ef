// Command-line front end: ground-truth generation, index build/query, the
// hyperparameter grid search, the two synthetic experiments, and Pareto
// frontier extraction from a grid CSV.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "annforest/bench.hpp"
#include "annforest/dataio.hpp"
#include "annforest/index.hpp"

using namespace annforest;

namespace {

std::shared_ptr<VectorSet> load_shared(const std::string& spec) {
    return std::make_shared<VectorSet>(load_dataset(parse_dataset_spec(spec)));
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) parts.push_back(item);
    }
    return parts;
}

struct BuildFlags {
    std::string corpus;
    std::string train;
    std::string type = "rp";
    std::string mode = "classification";
    std::uint32_t trees = 8;
    std::uint32_t leaf = 128;
    std::uint32_t mtry = 0;
    std::uint32_t k = 10;
    std::uint64_t seed = 1;
};

void add_build_flags(CLI::App* cmd, BuildFlags& flags) {
    cmd->add_option("--corpus", flags.corpus,
                    "corpus dataset: path.fvecs | path.bvecs | raw:path:d | "
                    "uniform:n:d:lo:hi:seed | gaussian:n:d:sigma:seed")
        ->required();
    cmd->add_option("--train", flags.train,
                    "training dataset (defaults to the corpus itself)");
    cmd->add_option("--type", flags.type, "tree type: rp | kd | pca | class");
    cmd->add_option("--mode", flags.mode, "index mode: classification | voting");
    cmd->add_option("-T,--trees", flags.trees, "number of trees");
    cmd->add_option("--leaf", flags.leaf, "maximum leaf size");
    cmd->add_option("-a,--mtry", flags.mtry,
                    "dimensions sampled per classification split (0 = all)");
    cmd->add_option("-k", flags.k, "number of nearest neighbors");
    cmd->add_option("--seed", flags.seed, "base random seed");
}

IndexParams to_index_params(const BuildFlags& flags) {
    IndexParams params;
    params.tree.type = parse_tree_type(flags.type);
    params.tree.max_leaf_size = flags.leaf;
    params.tree.mtry = flags.mtry;
    params.tree.seed = flags.seed;
    params.num_trees = flags.trees;
    params.k = flags.k;
    if (flags.mode == "voting") {
        params.mode = IndexMode::voting;
    } else if (flags.mode != "classification") {
        throw CLI::ValidationError("--mode", "expected classification or voting");
    }
    return params;
}

int run(int argc, char** argv) {
    CLI::App app{"tree-ensemble approximate nearest neighbor search"};
    app.require_subcommand(1);

    // groundtruth
    std::string gt_corpus, gt_queries, gt_out, gt_cache;
    std::uint32_t gt_k = 10;
    CLI::App* groundtruth = app.add_subcommand("groundtruth", "exact k-nn of a query set");
    groundtruth->add_option("--corpus", gt_corpus, "corpus dataset")->required();
    groundtruth->add_option("--queries", gt_queries, "query dataset")->required();
    groundtruth->add_option("-k", gt_k, "neighbors per query");
    groundtruth->add_option("-o,--out", gt_out, "output ground-truth file")->required();
    groundtruth->add_option("--cache", gt_cache, "reuse/populate a ground-truth cache directory");

    // build
    BuildFlags build_flags;
    std::string build_out, build_labels;
    CLI::App* build = app.add_subcommand("build", "build and save an index");
    add_build_flags(build, build_flags);
    build->add_option("-o,--out", build_out, "output index file")->required();
    build->add_option("--labels", build_labels,
                      "precomputed training ground truth (skips the exact k-nn pass)");

    // query
    std::string q_index, q_corpus, q_queries, q_gt, q_scale = "mean_probability";
    std::uint32_t q_k = 10;
    double q_tau = 0.0;
    CLI::App* query_cmd = app.add_subcommand("query", "run queries against a saved index");
    query_cmd->add_option("--index", q_index, "index file from `build`")->required();
    query_cmd->add_option("--corpus", q_corpus, "corpus the index was built on")->required();
    query_cmd->add_option("--queries", q_queries, "query dataset")->required();
    query_cmd->add_option("--groundtruth", q_gt, "ground-truth file for recall reporting");
    query_cmd->add_option("-k", q_k, "neighbors per query");
    query_cmd->add_option("--tau", q_tau, "score threshold (strict)");
    query_cmd->add_option("--scale", q_scale, "score scale: mean_probability | raw_count");

    // grid
    BuildFlags grid_flags;  // reused for k only
    std::string g_corpus, g_train, g_queries, g_out;
    std::string g_types = "rp", g_modes = "classification", g_scales = "mean_probability";
    std::string g_trees = "8,32,128", g_leafs = "32,128,512", g_mtrys = "0", g_seeds = "1";
    std::string g_taus;
    std::size_t g_tau_levels = 16;
    std::uint32_t g_k = 10;
    bool g_verbose = false;
    CLI::App* grid = app.add_subcommand("grid", "hyperparameter grid search");
    grid->add_option("--corpus", g_corpus, "corpus dataset")->required();
    grid->add_option("--train", g_train, "training dataset (defaults to the corpus)");
    grid->add_option("--queries", g_queries, "test query dataset")->required();
    grid->add_option("--types", g_types, "comma list of tree types");
    grid->add_option("--modes", g_modes, "comma list of index modes");
    grid->add_option("--trees", g_trees, "comma list of tree counts");
    grid->add_option("--leafs", g_leafs, "comma list of leaf sizes");
    grid->add_option("--mtrys", g_mtrys, "comma list of a values (0 = all dimensions)");
    grid->add_option("--scales", g_scales, "comma list of score scales");
    grid->add_option("--taus", g_taus, "explicit comma list of tau values");
    grid->add_option("--tau-levels", g_tau_levels, "automatic tau grid resolution");
    grid->add_option("--seeds", g_seeds, "comma list of seeds");
    grid->add_option("-k", g_k, "neighbors per query");
    grid->add_option("-o,--out", g_out, "output CSV path")->required();
    grid->add_flag("-v,--verbose", g_verbose, "log per-configuration progress");

    // shift-exp
    ShiftConfig shift_cfg;
    std::string sh_out, sh_sigmas = "1,2.5,5", sh_seeds = "1,2,3,4,5";
    CLI::App* shift = app.add_subcommand(
        "shift-exp", "query-distribution vs corpus training under distribution shift");
    shift->add_option("--corpus-n", shift_cfg.corpus_n, "corpus size");
    shift->add_option("-d,--dim", shift_cfg.dim, "dimension");
    shift->add_option("--train-n", shift_cfg.train_n, "training sample size");
    shift->add_option("--test-n", shift_cfg.test_n, "test query count");
    shift->add_option("--sigmas", sh_sigmas, "comma list of query standard deviations");
    shift->add_option("--seeds", sh_seeds, "comma list of seeds");
    shift->add_option("-T,--trees", shift_cfg.trees, "number of trees");
    shift->add_option("--leaf", shift_cfg.leaf, "maximum leaf size");
    shift->add_option("-k", shift_cfg.k, "neighbors per query");
    shift->add_option("-o,--out", sh_out, "output CSV path")->required();

    // scale-exp
    ScaleConfig scale_cfg;
    std::string sc_out, sc_mults = "1,4,16", sc_seeds = "1,2,3,4,5";
    CLI::App* scale = app.add_subcommand("scale-exp", "effect of training set size");
    scale->add_option("--corpus-n", scale_cfg.corpus_n, "corpus size");
    scale->add_option("-d,--dim", scale_cfg.dim, "dimension");
    scale->add_option("--test-n", scale_cfg.test_n, "test query count");
    scale->add_option("--multipliers", sc_mults, "comma list of training size multipliers");
    scale->add_option("--seeds", sc_seeds, "comma list of seeds");
    scale->add_option("-T,--trees", scale_cfg.trees, "number of trees");
    scale->add_option("--leaf", scale_cfg.leaf, "maximum leaf size");
    scale->add_option("--sigma", scale_cfg.sigma, "data standard deviation");
    scale->add_option("-k", scale_cfg.k, "neighbors per query");
    scale->add_option("-o,--out", sc_out, "output CSV path")->required();

    // pareto
    std::string p_in, p_out;
    CLI::App* pareto = app.add_subcommand("pareto", "extract the Pareto frontier of a grid CSV");
    pareto->add_option("-i,--in", p_in, "grid CSV from `grid`")->required();
    pareto->add_option("-o,--out", p_out, "output CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    if (groundtruth->parsed()) {
        const VectorSet corpus = load_dataset(parse_dataset_spec(gt_corpus));
        const VectorSet queries = load_dataset(parse_dataset_spec(gt_queries));
        const GroundTruth gt = gt_cache.empty()
                                   ? exact_knn(corpus, queries, gt_k)
                                   : cached_exact_knn(corpus, queries, gt_k, gt_cache);
        save_ground_truth(gt, gt_out);
        std::cout << "wrote " << gt.rows.size() << " rows of " << gt.k << "-nn to " << gt_out
                  << "\n";
        return 0;
    }

    if (build->parsed()) {
        auto corpus = load_shared(build_flags.corpus);
        std::shared_ptr<VectorSet> train;
        if (!build_flags.train.empty()) train = load_shared(build_flags.train);
        GroundTruth labels;
        const GroundTruth* labels_ptr = nullptr;
        if (!build_labels.empty()) {
            labels = load_ground_truth(build_labels);
            labels_ptr = &labels;
        }
        BuildStats stats;
        const EnsembleIndex index =
            build_index(corpus, train.get(), to_index_params(build_flags), labels_ptr, &stats);
        save_index(index, build_out);
        std::printf("built %zu trees in %.3f s (ground truth %.3f s, mean depth %.2f); wrote %s\n",
                    index.tree_count(), stats.build_seconds, stats.groundtruth_seconds,
                    stats.mean_tree_depth, build_out.c_str());
        return 0;
    }

    if (query_cmd->parsed()) {
        auto corpus = load_shared(q_corpus);
        const EnsembleIndex index = load_index(q_index, corpus);
        const VectorSet queries = load_dataset(parse_dataset_spec(q_queries));
        GroundTruth gt;
        if (!q_gt.empty()) gt = load_ground_truth(q_gt);

        SelectionParams sel;
        sel.tau = q_tau;
        sel.scale = parse_scale(q_scale);
        ScoreAccumulator scratch(index.corpus_size());
        double sum_cand = 0, sum_recall = 0, sum_time = 0;
        std::vector<std::uint32_t> sorted;
        for (std::size_t q = 0; q < queries.size(); ++q) {
            const QueryResult res = query(index, queries[q], q_k, sel, scratch);
            sum_cand += static_cast<double>(res.candidate_count);
            sum_time += static_cast<double>(res.route_ns + res.score_ns + res.select_ns +
                                            res.rerank_ns) *
                        1e-9;
            if (!gt.rows.empty()) {
                if (gt.rows.size() != queries.size()) {
                    throw std::runtime_error("ground truth does not match the query count");
                }
                sorted.assign(res.neighbors.indices.begin(), res.neighbors.indices.end());
                std::sort(sorted.begin(), sorted.end());
                sum_recall += recall(sorted, gt.rows[q]);
            }
        }
        const double n = static_cast<double>(queries.size());
        std::printf("queries: %zu  mean candidates: %.1f  mean query time: %.3g s\n",
                    queries.size(), sum_cand / n, sum_time / n);
        if (!gt.rows.empty()) std::printf("mean recall: %.4f\n", sum_recall / n);
        return 0;
    }

    if (grid->parsed()) {
        auto corpus = load_shared(g_corpus);
        std::shared_ptr<VectorSet> train;
        if (!g_train.empty()) train = load_shared(g_train);
        const VectorSet queries = load_dataset(parse_dataset_spec(g_queries));
        const GroundTruth test_gt = exact_knn(*corpus, queries, g_k);

        GridSpec spec;
        spec.k = g_k;
        spec.tau_levels = g_tau_levels;
        spec.types.clear();
        for (const auto& t : split_list(g_types)) spec.types.push_back(parse_tree_type(t));
        spec.modes.clear();
        for (const auto& m : split_list(g_modes)) {
            if (m == "classification") {
                spec.modes.push_back(IndexMode::classification);
            } else if (m == "voting") {
                spec.modes.push_back(IndexMode::voting);
            } else {
                throw std::runtime_error("unknown mode: " + m);
            }
        }
        spec.tree_counts.clear();
        for (const auto& v : split_list(g_trees))
            spec.tree_counts.push_back(static_cast<std::uint32_t>(std::stoul(v)));
        spec.leaf_sizes.clear();
        for (const auto& v : split_list(g_leafs))
            spec.leaf_sizes.push_back(static_cast<std::uint32_t>(std::stoul(v)));
        spec.mtrys.clear();
        for (const auto& v : split_list(g_mtrys))
            spec.mtrys.push_back(static_cast<std::uint32_t>(std::stoul(v)));
        spec.scales.clear();
        for (const auto& s : split_list(g_scales)) spec.scales.push_back(parse_scale(s));
        spec.taus.clear();
        for (const auto& v : split_list(g_taus)) spec.taus.push_back(std::stod(v));
        spec.seeds.clear();
        for (const auto& v : split_list(g_seeds)) spec.seeds.push_back(std::stoull(v));

        const auto records =
            run_grid(corpus, train.get(), queries, test_gt, spec, g_verbose ? &std::cerr : nullptr);
        write_grid_csv(g_out, records);
        std::cout << "wrote " << records.size() << " records to " << g_out << "\n";
        return 0;
    }

    if (shift->parsed()) {
        shift_cfg.sigmas.clear();
        for (const auto& v : split_list(sh_sigmas)) shift_cfg.sigmas.push_back(std::stod(v));
        shift_cfg.seeds.clear();
        for (const auto& v : split_list(sh_seeds)) shift_cfg.seeds.push_back(std::stoull(v));
        const auto records = run_shift_experiment(shift_cfg, &std::cerr);
        write_shift_csv(sh_out, records);
        std::cout << "wrote " << records.size() << " records to " << sh_out << "\n";
        return 0;
    }

    if (scale->parsed()) {
        scale_cfg.multipliers.clear();
        for (const auto& v : split_list(sc_mults)) scale_cfg.multipliers.push_back(std::stoull(v));
        scale_cfg.seeds.clear();
        for (const auto& v : split_list(sc_seeds)) scale_cfg.seeds.push_back(std::stoull(v));
        const auto records = run_scale_experiment(scale_cfg, &std::cerr);
        write_scale_csv(sc_out, records);
        std::cout << "wrote " << records.size() << " records to " << sc_out << "\n";
        return 0;
    }

    if (pareto->parsed()) {
        const auto records = read_grid_csv(p_in);
        const auto frontier = pareto_frontier(records);
        write_grid_csv(p_out, frontier);
        std::cout << "kept " << frontier.size() << " of " << records.size() << " records in "
                  << p_out << "\n";
        return 0;
    }

    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
