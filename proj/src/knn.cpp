#include "annforest/knn.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace annforest {

namespace {

void check_knn_args(const VectorSet& corpus, const VectorSet& queries, std::uint32_t k) {
    if (corpus.dim() != queries.dim()) {
        throw std::invalid_argument("exact_knn: corpus and query dimensions differ");
    }
    if (k < 1 || k > corpus.size()) {
        throw std::invalid_argument("exact_knn: need 1 <= k <= corpus size");
    }
}

// (distance, index) ordering with deterministic tie-break by lower index.
struct Hit {
    double dist;
    std::uint32_t idx;

    bool operator<(const Hit& o) const { return dist < o.dist || (dist == o.dist && idx < o.idx); }
};

NeighborList knn_one(const VectorSet& corpus, const float* q, std::uint32_t k) {
    const std::size_t m = corpus.size();
    const std::size_t d = corpus.dim();

    // Max-heap of the k best hits seen so far; heap top is the current worst.
    std::vector<Hit> heap;
    heap.reserve(k);
    for (std::uint32_t j = 0; j < m; ++j) {
        const float* p = corpus[j];
        if (heap.size() < k) {
            heap.push_back(Hit{squared_distance(q, p, d), j});
            std::push_heap(heap.begin(), heap.end());
            continue;
        }
        // Partial sums only grow, so a point whose prefix distance already
        // exceeds the current k-th best can be dropped without changing the
        // result. The chunked accumulation order matches squared_distance,
        // so surviving distances are bit-identical to the full computation.
        const double bound = heap.front().dist;
        double acc = 0.0;
        std::size_t i = 0;
        while (i < d) {
            const std::size_t stop = std::min(d, i + 16);
            for (; i < stop; ++i) {
                const double diff = static_cast<double>(q[i]) - static_cast<double>(p[i]);
                acc += diff * diff;
            }
            if (acc > bound) break;
        }
        if (acc > bound) continue;
        const Hit h{acc, j};
        if (h < heap.front()) {
            std::pop_heap(heap.begin(), heap.end());
            heap.back() = h;
            std::push_heap(heap.begin(), heap.end());
        }
    }
    std::sort_heap(heap.begin(), heap.end());

    NeighborList out;
    out.indices.reserve(k);
    out.sq_dists.reserve(k);
    for (const Hit& h : heap) {
        out.indices.push_back(h.idx);
        out.sq_dists.push_back(h.dist);
    }
    return out;
}

}  // namespace

GroundTruth exact_knn(const VectorSet& corpus, const VectorSet& queries, std::uint32_t k) {
    check_knn_args(corpus, queries, k);
    GroundTruth gt;
    gt.k = k;
    gt.rows.resize(queries.size());
    const std::int64_t nq = static_cast<std::int64_t>(queries.size());
#pragma omp parallel for schedule(dynamic, 8)
    for (std::int64_t i = 0; i < nq; ++i) {
        gt.rows[static_cast<std::size_t>(i)] = knn_one(corpus, queries[static_cast<std::size_t>(i)], k);
    }
    return gt;
}

GroundTruth exact_knn_serial(const VectorSet& corpus, const VectorSet& queries, std::uint32_t k) {
    check_knn_args(corpus, queries, k);
    const std::size_t m = corpus.size();
    const std::size_t d = corpus.dim();

    GroundTruth gt;
    gt.k = k;
    gt.rows.resize(queries.size());

    std::vector<Hit> all(m);
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const float* q = queries[i];
        for (std::uint32_t j = 0; j < m; ++j) {
            all[j] = Hit{squared_distance(q, corpus[j], d), j};
        }
        std::partial_sort(all.begin(), all.begin() + k, all.end());
        NeighborList& row = gt.rows[i];
        row.indices.resize(k);
        row.sq_dists.resize(k);
        for (std::uint32_t j = 0; j < k; ++j) {
            row.indices[j] = all[j].idx;
            row.sq_dists[j] = all[j].dist;
        }
    }
    return gt;
}

double recall(std::span<const std::uint32_t> result_sorted, const NeighborList& truth) {
    if (truth.size() == 0) {
        throw std::invalid_argument("recall: empty truth row");
    }
    std::size_t hits = 0;
    for (std::uint32_t j : truth.indices) {
        if (std::binary_search(result_sorted.begin(), result_sorted.end(), j)) {
            ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

}  // namespace annforest
