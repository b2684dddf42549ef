// Compares the OpenMP kernels against their serial reference
// implementations: exact k-nn and the per-tree ensemble build. Prints a
// table of wall times and the speedup, and verifies both paths agree.

#include <chrono>
#include <cstdio>
#include <memory>
#include <random>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "annforest/index.hpp"
#include "annforest/knn.hpp"

using namespace annforest;

namespace {

using Clock = std::chrono::steady_clock;

VectorSet random_set(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<float> data(n * d);
    for (float& v : data) v = static_cast<float>(dist(rng));
    return VectorSet(n, d, std::move(data));
}

template <typename F>
double timed(F&& f) {
    const auto t0 = Clock::now();
    f();
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP enabled, max threads: %d\n\n", omp_get_max_threads());
#else
    std::printf("OpenMP not available; parallel kernels run serially\n\n");
#endif

    std::printf("%-28s %10s %10s %8s  %s\n", "kernel", "serial(s)", "parallel", "speedup",
                "agreement");

    {
        const VectorSet corpus = random_set(20000, 64, 1);
        const VectorSet queries = random_set(500, 64, 2);
        GroundTruth serial, parallel;
        const double ts = timed([&] { serial = exact_knn_serial(corpus, queries, 10); });
        const double tp = timed([&] { parallel = exact_knn(corpus, queries, 10); });
        bool same = serial.rows.size() == parallel.rows.size();
        for (std::size_t i = 0; same && i < serial.rows.size(); ++i) {
            same = serial.rows[i] == parallel.rows[i];
        }
        std::printf("%-28s %10.3f %10.3f %7.2fx  %s\n", "exact 10-nn 20k x 500 d=64", ts, tp,
                    ts / tp, same ? "identical" : "MISMATCH");
        if (!same) return 1;
    }

    {
        const auto corpus = std::make_shared<VectorSet>(random_set(20000, 32, 3));
        IndexParams params;
        params.tree.type = TreeType::rp;
        params.tree.max_leaf_size = 128;
        params.tree.seed = 4;
        params.num_trees = 16;
        params.k = 10;
        const GroundTruth labels = exact_knn(*corpus, *corpus, params.k);

        // serial reference: a plain loop over the same amount of tree work
        const double ts = timed([&] {
            for (std::uint32_t t = 0; t < params.num_trees; ++t) {
                TreeBuildParams tp = params.tree;
                tp.seed = splitmix64(params.tree.seed + t);
                PartitionTree tree = build_tree(*corpus, tp);
                fit_leaf_tables(tree, *corpus, labels);
            }
        });

        // parallel path: build_index's OpenMP loop over trees, run twice to
        // confirm the result does not depend on scheduling
        EnsembleIndex a, b;
        const double tp = timed([&] { a = build_index(corpus, nullptr, params, &labels); });
        b = build_index(corpus, nullptr, params, &labels);
        const VectorSet probe = random_set(200, 32, 5);
        bool same = true;
        for (std::size_t t = 0; same && t < a.trees.size(); ++t) {
            for (std::size_t i = 0; same && i < probe.size(); ++i) {
                same = a.trees[t].leaf_of(probe[i]) == b.trees[t].leaf_of(probe[i]);
            }
        }
        std::printf("%-28s %10.3f %10.3f %7.2fx  %s\n", "rp forest build 20k (T=16)", ts, tp,
                    ts / tp, same ? "deterministic" : "MISMATCH");
        if (!same) return 1;
    }

    return 0;
}
