#pragma once

#include <cstdint>
#include <span>

#include "annforest/vector_set.hpp"

namespace annforest {

// Squared Euclidean distance, accumulated in 64-bit.
// Monotone-equivalent to the Euclidean distance, so it is used for all
// internal comparisons.
inline double squared_distance(const float* a, const float* b, std::size_t d) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += diff * diff;
    }
    return acc;
}

inline double squared_distance(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("squared_distance: dimension mismatch");
    }
    return squared_distance(a.data(), b.data(), a.size());
}

// Brute-force exact k-nn of every query against the corpus.
// Ties broken by lower corpus index; results are independent of thread count
// (queries are embarrassingly parallel). Heap-based, OpenMP over queries.
GroundTruth exact_knn(const VectorSet& corpus, const VectorSet& queries, std::uint32_t k);

// Serial reference implementation: full distance vector + stable sort.
// Kept as the independent oracle for exact_knn and for kernel benchmarks.
GroundTruth exact_knn_serial(const VectorSet& corpus, const VectorSet& queries, std::uint32_t k);

// Fraction of the true k neighbors present in `result` (sorted ascending).
double recall(std::span<const std::uint32_t> result_sorted, const NeighborList& truth);

}  // namespace annforest
