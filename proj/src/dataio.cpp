#include "annforest/dataio.hpp"

#include "annforest/knn.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace annforest {

namespace {

[[noreturn]] void io_error(const std::string& msg) { throw std::runtime_error(msg); }

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) io_error("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) io_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) io_error("short write to " + path.string());
}

// Little-endian append/parse helpers; all container formats go through
// these so ingestion is identical on any platform.
struct Writer {
    std::vector<unsigned char> buf;

    void u8(std::uint8_t v) { buf.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
};

struct Reader {
    const unsigned char* data;
    std::size_t size;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > size) io_error("truncated file");
    }
    std::uint8_t u8() {
        need(1);
        return data[pos++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
};

constexpr std::uint32_t kIndexMagic = 0x58464e41u;   // "ANFX"
constexpr std::uint32_t kGtMagic = 0x54474e41u;      // "ANGT"
constexpr std::uint32_t kFormatVersion = 1;

void finish_with_crc(Writer& w, const std::filesystem::path& path) {
    const std::uint32_t crc = crc32(w.buf.data(), w.buf.size());
    w.u32(crc);
    write_file(path, w.buf);
}

Reader open_with_crc(const std::vector<unsigned char>& bytes, std::uint32_t magic,
                     const std::filesystem::path& path) {
    if (bytes.size() < 12) io_error("truncated file " + path.string());
    Reader r{bytes.data(), bytes.size() - 4};
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i) {
        stored |= static_cast<std::uint32_t>(bytes[bytes.size() - 4 + static_cast<std::size_t>(i)])
                  << (8 * i);
    }
    if (crc32(bytes.data(), bytes.size() - 4) != stored) {
        io_error("checksum failure in " + path.string());
    }
    if (r.u32() != magic) io_error("bad magic in " + path.string());
    if (r.u32() != kFormatVersion) io_error("unsupported version in " + path.string());
    return r;
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, sep)) parts.push_back(item);
    return parts;
}

}  // namespace

std::uint32_t crc32(const unsigned char* data, std::size_t size) {
    static const std::array<std::uint32_t, 256> table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int b = 0; b < 8; ++b) c = (c & 1) ? (0xedb88320u ^ (c >> 1)) : (c >> 1);
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = 0xffffffffu;
    for (std::size_t i = 0; i < size; ++i) {
        crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
    }
    return crc ^ 0xffffffffu;
}

DatasetSpec parse_dataset_spec(const std::string& text) {
    DatasetSpec spec;
    const auto parts = split(text, ':');
    if (!parts.empty() && parts[0] == "uniform") {
        if (parts.size() != 6) io_error("uniform recipe needs uniform:n:d:lo:hi:seed");
        SyntheticRecipe r;
        r.kind = SyntheticRecipe::Kind::uniform;
        r.n = std::stoull(parts[1]);
        r.d = std::stoull(parts[2]);
        r.lo = std::stod(parts[3]);
        r.hi = std::stod(parts[4]);
        r.seed = std::stoull(parts[5]);
        if (r.n < 1 || r.d < 1 || !(r.lo < r.hi)) io_error("invalid uniform recipe: " + text);
        spec.source = r;
        return spec;
    }
    if (!parts.empty() && parts[0] == "gaussian") {
        if (parts.size() != 5) io_error("gaussian recipe needs gaussian:n:d:sigma:seed");
        SyntheticRecipe r;
        r.kind = SyntheticRecipe::Kind::gaussian;
        r.n = std::stoull(parts[1]);
        r.d = std::stoull(parts[2]);
        r.sigma = std::stod(parts[3]);
        r.seed = std::stoull(parts[4]);
        if (r.n < 1 || r.d < 1 || !(r.sigma > 0)) io_error("invalid gaussian recipe: " + text);
        spec.source = r;
        return spec;
    }
    if (!parts.empty() && parts[0] == "raw") {
        if (parts.size() < 3) io_error("raw source needs raw:path:d");
        FileSource f;
        f.format = FileFormat::raw_f32;
        f.dim = std::stoull(parts.back());
        std::string path = parts[1];
        for (std::size_t i = 2; i + 1 < parts.size(); ++i) path += ":" + parts[i];
        f.path = path;
        spec.source = f;
        return spec;
    }
    FileSource f;
    f.path = text;
    const std::string ext = f.path.extension().string();
    if (ext == ".fvecs") {
        f.format = FileFormat::fvecs;
    } else if (ext == ".bvecs") {
        f.format = FileFormat::bvecs;
    } else {
        io_error("unrecognized dataset spec: " + text);
    }
    spec.source = f;
    return spec;
}

VectorSet load_dataset(const DatasetSpec& spec) {
    if (const auto* f = std::get_if<FileSource>(&spec.source)) {
        switch (f->format) {
            case FileFormat::fvecs: return read_fvecs(f->path);
            case FileFormat::bvecs: return read_bvecs(f->path);
            case FileFormat::raw_f32: return read_raw_f32(f->path, f->dim);
        }
        io_error("unknown file format");
    }
    const auto& r = std::get<SyntheticRecipe>(spec.source);
    return r.kind == SyntheticRecipe::Kind::uniform
               ? generate_uniform(r.n, r.d, r.lo, r.hi, r.seed)
               : generate_gaussian(r.n, r.d, r.sigma, r.seed);
}

namespace {

VectorSet read_vec_records(const std::filesystem::path& path, bool bytes_per_component) {
    const std::vector<unsigned char> bytes = read_file(path);
    Reader r{bytes.data(), bytes.size()};
    std::vector<float> data;
    std::size_t n = 0;
    std::size_t d = 0;
    while (r.pos < r.size) {
        const std::uint32_t rec_d = r.u32();
        if (rec_d < 1) io_error(path.string() + ": record " + std::to_string(n) + " has d = 0");
        if (n == 0) {
            d = rec_d;
        } else if (rec_d != d) {
            io_error(path.string() + ": record " + std::to_string(n) + " has inconsistent d " +
                     std::to_string(rec_d) + " (expected " + std::to_string(d) + ")");
        }
        for (std::uint32_t i = 0; i < rec_d; ++i) {
            const float v = bytes_per_component ? static_cast<float>(r.u8()) : r.f32();
            if (!std::isfinite(v)) {
                io_error(path.string() + ": non-finite value in record " + std::to_string(n));
            }
            data.push_back(v);
        }
        ++n;
    }
    if (n == 0) io_error(path.string() + ": empty vector file");
    return VectorSet(n, d, std::move(data));
}

}  // namespace

VectorSet read_fvecs(const std::filesystem::path& path) { return read_vec_records(path, false); }
VectorSet read_bvecs(const std::filesystem::path& path) { return read_vec_records(path, true); }

VectorSet read_raw_f32(const std::filesystem::path& path, std::size_t dim) {
    if (dim < 1) io_error("raw-f32 reader needs d >= 1");
    const std::vector<unsigned char> bytes = read_file(path);
    if (bytes.empty() || bytes.size() % (4 * dim) != 0) {
        io_error(path.string() + ": size is not a multiple of 4*d");
    }
    Reader r{bytes.data(), bytes.size()};
    const std::size_t n = bytes.size() / (4 * dim);
    std::vector<float> data(n * dim);
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = r.f32();
        if (!std::isfinite(data[i])) {
            io_error(path.string() + ": non-finite value in record " + std::to_string(i / dim));
        }
    }
    return VectorSet(n, dim, std::move(data));
}

void write_fvecs(const std::filesystem::path& path, const VectorSet& vs) {
    Writer w;
    for (std::size_t i = 0; i < vs.size(); ++i) {
        w.u32(static_cast<std::uint32_t>(vs.dim()));
        for (float v : vs.row(i)) w.f32(v);
    }
    write_file(path, w.buf);
}

VectorSet generate_uniform(std::size_t n, std::size_t d, double lo, double hi,
                           std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<float> data(n * d);
    for (float& v : data) v = static_cast<float>(dist(rng));
    return VectorSet(n, d, std::move(data));
}

VectorSet generate_gaussian(std::size_t n, std::size_t d, double sigma, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, sigma);
    std::vector<float> data(n * d);
    for (float& v : data) v = static_cast<float>(dist(rng));
    return VectorSet(n, d, std::move(data));
}

void save_index(const EnsembleIndex& index, const std::filesystem::path& path) {
    Writer w;
    w.u32(kIndexMagic);
    w.u32(kFormatVersion);
    w.u8(static_cast<std::uint8_t>(index.mode));
    w.u32(index.label_k);
    w.u32(static_cast<std::uint32_t>(index.tree_count()));
    w.u32(static_cast<std::uint32_t>(index.dim()));
    w.u32(static_cast<std::uint32_t>(index.corpus_size()));
    for (const PartitionTree& tree : index.trees) {
        w.u64(tree.tree_id);
        w.f64(tree.mean_point_depth);
        w.u32(static_cast<std::uint32_t>(tree.nodes.size()));
        for (const TreeNode& node : tree.nodes) {
            w.i32(node.left);
            w.i32(node.right);
            w.i32(node.leaf);
            w.u8(static_cast<std::uint8_t>(node.rule.kind));
            w.u32(node.rule.axis);
            w.f64(node.rule.threshold);
            w.u32(static_cast<std::uint32_t>(node.rule.direction.size()));
            for (float v : node.rule.direction) w.f32(v);
        }
        w.u32(static_cast<std::uint32_t>(tree.leaves.size()));
        for (const LeafLabelTable& leaf : tree.leaves) {
            w.u32(leaf.point_count);
            w.u32(static_cast<std::uint32_t>(leaf.entries.size()));
            std::uint32_t prev = 0;
            for (const auto& [j, v] : leaf.entries) {
                w.u32(j - prev);  // entries sorted by j, so deltas are small
                w.u32(v);
                prev = j;
            }
        }
    }
    finish_with_crc(w, path);
}

EnsembleIndex load_index(const std::filesystem::path& path,
                         std::shared_ptr<const VectorSet> corpus) {
    if (!corpus) io_error("load_index: null corpus");
    const std::vector<unsigned char> bytes = read_file(path);
    Reader r = open_with_crc(bytes, kIndexMagic, path);

    EnsembleIndex index;
    index.mode = static_cast<IndexMode>(r.u8());
    index.label_k = r.u32();
    const std::uint32_t trees = r.u32();
    const std::uint32_t d = r.u32();
    const std::uint32_t m = r.u32();
    if (d != corpus->dim() || m != corpus->size()) {
        io_error(path.string() + ": index was built for a different corpus (m, d mismatch)");
    }
    index.corpus = std::move(corpus);
    index.trees.resize(trees);
    for (PartitionTree& tree : index.trees) {
        tree.dim = d;
        tree.tree_id = r.u64();
        tree.mean_point_depth = r.f64();
        tree.nodes.resize(r.u32());
        for (TreeNode& node : tree.nodes) {
            node.left = r.i32();
            node.right = r.i32();
            node.leaf = r.i32();
            node.rule.kind = static_cast<SplitRule::Kind>(r.u8());
            node.rule.axis = r.u32();
            node.rule.threshold = r.f64();
            node.rule.direction.resize(r.u32());
            for (float& v : node.rule.direction) v = r.f32();
        }
        tree.leaves.resize(r.u32());
        for (LeafLabelTable& leaf : tree.leaves) {
            leaf.point_count = r.u32();
            leaf.entries.resize(r.u32());
            std::uint32_t prev = 0;
            for (auto& [j, v] : leaf.entries) {
                prev += r.u32();
                j = prev;
                v = r.u32();
            }
        }
    }
    if (r.pos != r.size) io_error(path.string() + ": trailing bytes");
    return index;
}

void save_ground_truth(const GroundTruth& gt, const std::filesystem::path& path) {
    Writer w;
    w.u32(kGtMagic);
    w.u32(kFormatVersion);
    w.u32(gt.k);
    w.u32(static_cast<std::uint32_t>(gt.rows.size()));
    for (const NeighborList& row : gt.rows) {
        w.u32(static_cast<std::uint32_t>(row.size()));
        for (std::uint32_t j : row.indices) w.u32(j);
        for (double dist : row.sq_dists) w.f64(dist);
    }
    finish_with_crc(w, path);
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
    const std::vector<unsigned char> bytes = read_file(path);
    Reader r = open_with_crc(bytes, kGtMagic, path);
    GroundTruth gt;
    gt.k = r.u32();
    gt.rows.resize(r.u32());
    for (NeighborList& row : gt.rows) {
        const std::uint32_t len = r.u32();
        row.indices.resize(len);
        row.sq_dists.resize(len);
        for (std::uint32_t& j : row.indices) j = r.u32();
        for (double& dist : row.sq_dists) dist = r.f64();
    }
    if (r.pos != r.size) io_error(path.string() + ": trailing bytes");
    return gt;
}

GroundTruth cached_exact_knn(const VectorSet& corpus, const VectorSet& queries, std::uint32_t k,
                             const std::filesystem::path& cache_dir) {
    std::filesystem::create_directories(cache_dir);
    std::uint64_t key = corpus.digest();
    key = splitmix64(key ^ queries.digest());
    key = splitmix64(key ^ k);
    char name[32];
    std::snprintf(name, sizeof(name), "gt_%016llx.bin", static_cast<unsigned long long>(key));
    const std::filesystem::path path = cache_dir / name;
    if (std::filesystem::exists(path)) {
        return load_ground_truth(path);
    }
    GroundTruth gt = exact_knn(corpus, queries, k);
    save_ground_truth(gt, path);
    return gt;
}

}  // namespace annforest
