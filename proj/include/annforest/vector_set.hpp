#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace annforest {

// Dense row-major collection of d-dimensional float32 points.
// Immutable after construction; safe to share across threads.
class VectorSet {
  public:
    VectorSet() = default;

    VectorSet(std::size_t n, std::size_t d, std::vector<float> data): n_(n), d_(d), data_(std::move(data)) {
        if (n_ < 1 || d_ < 1) {
            throw std::invalid_argument("VectorSet: need n >= 1 and d >= 1");
        }
        if (data_.size() != n_ * d_) {
            throw std::invalid_argument("VectorSet: data size does not match n*d");
        }
        for (std::size_t i = 0; i < data_.size(); ++i) {
            if (!std::isfinite(data_[i])) {
                throw std::invalid_argument("VectorSet: non-finite value at flat offset " + std::to_string(i));
            }
        }
    }

    std::size_t size() const { return n_; }
    std::size_t dim() const { return d_; }

    const float* operator[](std::size_t i) const { return data_.data() + i * d_; }
    std::span<const float> row(std::size_t i) const { return {data_.data() + i * d_, d_}; }

    const std::vector<float>& data() const { return data_; }

    // FNV-1a over the raw bytes; used as a cache key and for CSV provenance.
    std::uint64_t digest() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        const auto* bytes = reinterpret_cast<const unsigned char*>(data_.data());
        for (std::size_t i = 0; i < data_.size() * sizeof(float); ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
        h ^= n_;
        h *= 0x100000001b3ULL;
        h ^= d_;
        h *= 0x100000001b3ULL;
        return h;
    }

  private:
    std::size_t n_ = 0;
    std::size_t d_ = 0;
    std::vector<float> data_;
};

// k nearest corpus indices of one point, ascending dissimilarity,
// ties broken by lower corpus index. Dissimilarities are squared
// Euclidean distances; take a square root only when reporting.
struct NeighborList {
    std::vector<std::uint32_t> indices;
    std::vector<double> sq_dists;

    std::size_t size() const { return indices.size(); }

    bool operator==(const NeighborList& other) const = default;
};

// Exact k-nn of every training/test point: the sparse form of the
// binary label vectors (row i has label j iff j is among i's true
// k nearest corpus points).
struct GroundTruth {
    std::uint32_t k = 0;
    std::vector<NeighborList> rows;

    std::size_t size() const { return rows.size(); }
};

}  // namespace annforest
