#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <variant>

#include "annforest/model.hpp"
#include "annforest/vector_set.hpp"

namespace annforest {

enum class FileFormat : std::uint8_t { fvecs, bvecs, raw_f32 };

struct FileSource {
    std::filesystem::path path;
    FileFormat format = FileFormat::fvecs;
    std::size_t dim = 0;  // raw_f32 only
};

struct SyntheticRecipe {
    enum class Kind : std::uint8_t { uniform, gaussian };
    Kind kind = Kind::uniform;
    std::size_t n = 0;
    std::size_t d = 0;
    double lo = -1.0, hi = 1.0;  // uniform
    double sigma = 1.0;          // gaussian
    std::uint64_t seed = 0;
};

struct DatasetSpec {
    std::variant<FileSource, SyntheticRecipe> source;
};

// Accepts "path.fvecs", "path.bvecs", "raw:path:d",
// "uniform:n:d:lo:hi:seed", and "gaussian:n:d:sigma:seed".
DatasetSpec parse_dataset_spec(const std::string& text);

VectorSet load_dataset(const DatasetSpec& spec);

// fvecs: repeated [d: int32 LE][d x float32 LE] records; bvecs widens
// bytes to reals. All records must share d; errors name the bad record.
VectorSet read_fvecs(const std::filesystem::path& path);
VectorSet read_bvecs(const std::filesystem::path& path);
VectorSet read_raw_f32(const std::filesystem::path& path, std::size_t dim);
void write_fvecs(const std::filesystem::path& path, const VectorSet& vs);

VectorSet generate_uniform(std::size_t n, std::size_t d, double lo, double hi, std::uint64_t seed);
VectorSet generate_gaussian(std::size_t n, std::size_t d, double sigma, std::uint64_t seed);

// Versioned little-endian index container with delta-encoded leaf tables
// and a trailing CRC-32. The corpus itself is not stored; load verifies
// the supplied corpus matches the recorded (m, d).
void save_index(const EnsembleIndex& index, const std::filesystem::path& path);
EnsembleIndex load_index(const std::filesystem::path& path,
                         std::shared_ptr<const VectorSet> corpus);

void save_ground_truth(const GroundTruth& gt, const std::filesystem::path& path);
GroundTruth load_ground_truth(const std::filesystem::path& path);

// Exact k-nn with a file cache keyed by (corpus digest, query digest, k).
GroundTruth cached_exact_knn(const VectorSet& corpus, const VectorSet& queries, std::uint32_t k,
                             const std::filesystem::path& cache_dir);

std::uint32_t crc32(const unsigned char* data, std::size_t size);

}  // namespace annforest
