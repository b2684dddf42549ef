#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <vector>

#include "annforest/bench.hpp"

using namespace annforest;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        std::mt19937_64 rng(std::random_device{}());
        path = fs::temp_directory_path() / ("annforest_bench_" + std::to_string(rng()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

std::shared_ptr<VectorSet> random_set(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<float> data(n * d);
    for (float& v : data) v = static_cast<float>(dist(rng));
    return std::make_shared<VectorSet>(n, d, std::move(data));
}

std::string first_line(const fs::path& path) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    return line;
}

BenchmarkRecord point(double recall, double qtime) {
    BenchmarkRecord r;
    r.recall = recall;
    r.qtime = qtime;
    return r;
}

}  // namespace

TEST_CASE("name/parse round trips") {
    for (TreeType type : {TreeType::rp, TreeType::kd, TreeType::pca, TreeType::classification}) {
        CHECK(parse_tree_type(tree_type_name(type)) == type);
    }
    CHECK(parse_tree_type("classification") == TreeType::classification);
    CHECK_THROWS_AS(parse_tree_type("oak"), std::invalid_argument);
    for (ScoreScale scale : {ScoreScale::mean_probability, ScoreScale::raw_count}) {
        CHECK(parse_scale(scale_name(scale)) == scale);
    }
    CHECK_THROWS_AS(parse_scale("log"), std::invalid_argument);
}

TEST_CASE("algorithm tags distinguish lookup, voting, and model search") {
    CHECK(algorithm_tag(IndexMode::voting, TreeType::rp, 0.0) == "lookup-rp");
    CHECK(algorithm_tag(IndexMode::voting, TreeType::rp, 2.0) == "vote-rp");
    CHECK(algorithm_tag(IndexMode::classification, TreeType::classification, 0.0) == "rf-class");
    CHECK(algorithm_tag(IndexMode::classification, TreeType::kd, 0.5) == "rf-kd");
}

TEST_CASE("automatic tau grid starts at zero, sorted and deduplicated") {
    const auto corpus = random_set(300, 5, 1);
    IndexParams params;
    params.tree.max_leaf_size = 32;
    params.tree.seed = 2;
    params.num_trees = 4;
    params.k = 5;
    const EnsembleIndex index = build_index(corpus, nullptr, params);
    const auto sample = random_set(40, 5, 3);
    const auto taus = auto_tau_grid(index, *sample, ScoreScale::mean_probability, 8);
    REQUIRE(!taus.empty());
    CHECK(taus.front() == 0.0);
    CHECK(std::is_sorted(taus.begin(), taus.end()));
    CHECK(std::adjacent_find(taus.begin(), taus.end()) == taus.end());
    for (double t : taus) CHECK(t <= 1.0);
}

TEST_CASE("tau sweep agrees with per-tau candidate selection") {
    const auto corpus = random_set(400, 6, 11);
    IndexParams params;
    params.tree.type = TreeType::kd;
    params.tree.max_leaf_size = 32;
    params.tree.seed = 12;
    params.num_trees = 5;
    params.k = 8;
    const EnsembleIndex index = build_index(corpus, nullptr, params);
    const auto test = random_set(20, 6, 13);
    const GroundTruth gt = exact_knn(*corpus, *test, params.k);

    const std::vector<double> taus{0.0, 0.05, 0.1, 0.25, 0.6};
    const auto curve = sweep_tau(index, *test, gt, ScoreScale::mean_probability, taus);
    REQUIRE(curve.size() == taus.size());

    ScoreAccumulator scratch;
    for (std::size_t t = 0; t < taus.size(); ++t) {
        double cand = 0, rec = 0;
        for (std::size_t q = 0; q < test->size(); ++q) {
            SelectionParams sel;
            sel.tau = taus[t];
            const auto selected = select_candidates(index, (*test)[q], sel, scratch);
            cand += static_cast<double>(selected.size());
            rec += recall(selected, gt.rows[q]);
        }
        cand /= static_cast<double>(test->size());
        rec /= static_cast<double>(test->size());
        CHECK(curve[t].candidates == doctest::Approx(cand).epsilon(1e-12));
        CHECK(curve[t].recall == doctest::Approx(rec).epsilon(1e-12));
        if (t > 0) {
            CHECK(curve[t].candidates <= curve[t - 1].candidates);
            CHECK(curve[t].recall <= curve[t - 1].recall);
        }
    }
}

TEST_CASE("measured curves carry tags, bounded recall, and positive times") {
    const auto corpus = random_set(300, 4, 21);
    IndexParams params;
    params.tree.max_leaf_size = 32;
    params.tree.seed = 22;
    params.num_trees = 4;
    params.k = 5;
    const EnsembleIndex index = build_index(corpus, nullptr, params);
    const auto test = random_set(15, 4, 23);
    const GroundTruth gt = exact_knn(*corpus, *test, params.k);
    const std::vector<double> taus{0.0, 0.2};
    const auto records = measure_curve(index, *test, gt, ScoreScale::mean_probability, taus,
                                       params.k, TreeType::rp, 32, 4, 7, 1.25);
    REQUIRE(records.size() == 2);
    for (const BenchmarkRecord& r : records) {
        CHECK(r.algorithm == "rf-rp");
        CHECK(r.trees == 4);
        CHECK(r.leaf == 32);
        CHECK(r.mtry == 4);
        CHECK(r.seed == 7);
        CHECK(r.build_seconds == 1.25);
        CHECK(r.recall >= 0.0);
        CHECK(r.recall <= 1.0);
        CHECK(r.qtime > 0.0);
        CHECK(r.candidates >= 0.0);
    }
    CHECK(records[0].tau == 0.0);
    CHECK(records[1].tau == 0.2);
    CHECK(records[1].candidates <= records[0].candidates);
}

TEST_CASE("pareto frontier keeps only undominated points, strictly increasing") {
    std::vector<BenchmarkRecord> records;
    records.push_back(point(0.50, 1.0));
    records.push_back(point(0.40, 2.0));  // dominated: slower and worse
    records.push_back(point(0.80, 3.0));
    records.push_back(point(0.80, 4.0));  // dominated: same recall, slower
    records.push_back(point(0.95, 5.0));
    records.push_back(point(0.10, 0.5));

    const auto frontier = pareto_frontier(records);
    REQUIRE(frontier.size() == 4);
    CHECK(frontier[0].recall == 0.10);
    CHECK(frontier[1].recall == 0.50);
    CHECK(frontier[2].recall == 0.80);
    CHECK(frontier[3].recall == 0.95);
    for (std::size_t i = 1; i < frontier.size(); ++i) {
        CHECK(frontier[i].qtime > frontier[i - 1].qtime);
        CHECK(frontier[i].recall > frontier[i - 1].recall);
    }
    CHECK_THROWS_AS(pareto_frontier({}), std::invalid_argument);
}

TEST_CASE("recall interpolation clamps at the ends and is linear inside") {
    std::vector<OperatingPoint> curve{{100.0, 0.9}, {10.0, 0.3}, {50.0, 0.7}};
    CHECK(interp_recall(curve, 5.0) == 0.3);
    CHECK(interp_recall(curve, 200.0) == 0.9);
    CHECK(interp_recall(curve, 30.0) == doctest::Approx(0.5));
    CHECK(interp_recall(curve, 75.0) == doctest::Approx(0.8));
    CHECK(interp_recall(curve, 50.0) == doctest::Approx(0.7));
    CHECK_THROWS_AS(interp_recall({}, 1.0), std::invalid_argument);
}

TEST_CASE("grid CSV round trip preserves every field bit for bit") {
    TempDir tmp;
    std::vector<BenchmarkRecord> records;
    BenchmarkRecord r;
    r.algorithm = "rf-pca";
    r.trees = 32;
    r.leaf = 128;
    r.mtry = 8;
    r.tau = 1.0 / 3.0;
    r.scale = ScoreScale::raw_count;
    r.recall = 0.123456789012345678;
    r.qtime = 3.5e-5;
    r.candidates = 217.25;
    r.build_seconds = 12.75;
    r.seed = 42;
    r.corpus_digest = 0xdeadbeefcafef00dULL;
    r.train_digest = 17;
    records.push_back(r);

    const fs::path path = tmp.path / "grid.csv";
    write_grid_csv(path, records);
    CHECK(first_line(path) ==
          "algorithm,T,leaf,a,tau,scale,recall,qtime,candidates,build_time,seed,corpus_digest,"
          "train_digest");
    const auto loaded = read_grid_csv(path);
    REQUIRE(loaded.size() == 1);
    CHECK(loaded[0].algorithm == r.algorithm);
    CHECK(loaded[0].trees == r.trees);
    CHECK(loaded[0].leaf == r.leaf);
    CHECK(loaded[0].mtry == r.mtry);
    CHECK(loaded[0].tau == r.tau);
    CHECK(loaded[0].scale == r.scale);
    CHECK(loaded[0].recall == r.recall);
    CHECK(loaded[0].qtime == r.qtime);
    CHECK(loaded[0].candidates == r.candidates);
    CHECK(loaded[0].build_seconds == r.build_seconds);
    CHECK(loaded[0].seed == r.seed);
    CHECK(loaded[0].corpus_digest == r.corpus_digest);
    CHECK(loaded[0].train_digest == r.train_digest);

    std::ofstream(path) << "nope\n";
    CHECK_THROWS_AS(read_grid_csv(path), std::runtime_error);
}

TEST_CASE("shift and scale CSV headers are pinned") {
    TempDir tmp;
    BenchmarkRecord r;
    r.algorithm = "rf-class";
    r.sigma = 2.5;
    r.multiplier = 4.0;
    const std::vector<BenchmarkRecord> records{r};

    const fs::path shift = tmp.path / "shift.csv";
    write_shift_csv(shift, records);
    CHECK(first_line(shift) == "sigma,algorithm,T,leaf,a,tau,scale,recall,qtime,candidates,seed");

    const fs::path scale = tmp.path / "scale.csv";
    write_scale_csv(scale, records);
    CHECK(first_line(scale) ==
          "multiplier,algorithm,T,leaf,a,tau,scale,recall,qtime,candidates,seed,mean_depth");
}

TEST_CASE("a small grid run produces one curve per configuration") {
    const auto corpus = random_set(400, 6, 31);
    const auto test = random_set(20, 6, 32);
    const GroundTruth test_gt = exact_knn(*corpus, *test, 5);

    GridSpec grid;
    grid.types = {TreeType::rp};
    grid.modes = {IndexMode::classification, IndexMode::voting};
    grid.tree_counts = {4};
    grid.leaf_sizes = {32};
    grid.tau_levels = 4;
    grid.k = 5;
    std::ostringstream log;
    const auto records = run_grid(corpus, nullptr, *test, test_gt, grid, &log);
    REQUIRE(!records.empty());
    bool saw_rf = false, saw_lookup = false, saw_vote = false;
    for (const BenchmarkRecord& r : records) {
        CHECK(r.recall >= 0.0);
        CHECK(r.recall <= 1.0);
        CHECK(r.trees == 4);
        CHECK(r.leaf == 32);
        CHECK(r.corpus_digest == corpus->digest());
        saw_rf = saw_rf || r.algorithm == "rf-rp";
        saw_lookup = saw_lookup || r.algorithm == "lookup-rp";
        saw_vote = saw_vote || r.algorithm == "vote-rp";
    }
    CHECK(saw_rf);
    CHECK(saw_lookup);
    CHECK(saw_vote);
}
