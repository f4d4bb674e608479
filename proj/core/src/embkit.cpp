#include "recbm/embkit.hpp"

#include "recbm/error.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace recbm {

namespace {

constexpr std::array<char, 4> kMagic = {'E', 'M', 'B', '1'};
constexpr std::size_t kHeaderBytes = 4 + 8 + 8;

static_assert(std::endian::native == std::endian::little, "only little-endian hosts are supported");

void put_u64(std::ostream& os, std::uint64_t v) {
    std::array<char, 8> buf{};
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(buf.data(), buf.size());
}

std::uint64_t get_u64(const char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> data, std::string tag)
    : rows_(rows), dim_(dim), data_(std::move(data)), tag_(std::move(tag)) {
    if (data_.size() != rows_ * dim_) {
        throw ShapeError(fmt::format("matrix data length {} does not equal {} x {}", data_.size(), rows_, dim_));
    }
}

Eigen::MatrixXd EmbeddingMatrix::to_eigen() const {
    Eigen::MatrixXd out(rows_, dim_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < dim_; ++c) out(r, c) = data_[r * dim_ + c];
    return out;
}

Eigen::VectorXd EmbeddingMatrix::row_eigen(std::size_t r) const {
    Eigen::VectorXd v(dim_);
    for (std::size_t c = 0; c < dim_; ++c) v(c) = data_[r * dim_ + c];
    return v;
}

EmbeddingMatrix EmbeddingMatrix::from_eigen(const Eigen::MatrixXd& m, std::string tag) {
    std::vector<float> data(static_cast<std::size_t>(m.rows() * m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) data[r * m.cols() + c] = static_cast<float>(m(r, c));
    return EmbeddingMatrix(m.rows(), m.cols(), std::move(data), std::move(tag));
}

std::optional<std::size_t> first_non_finite_row(const EmbeddingMatrix& m) {
    const auto data = m.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!std::isfinite(data[i])) return i / m.dim();
    }
    return std::nullopt;
}

std::optional<std::size_t> first_zero_row(const EmbeddingMatrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        bool zero = true;
        for (float v : m.row(r)) {
            if (v != 0.0f) {
                zero = false;
                break;
            }
        }
        if (zero) return r;
    }
    return std::nullopt;
}

void write_matrix(const EmbeddingMatrix& m, const std::filesystem::path& path) {
    if (m.rows() == 0 || m.dim() == 0) throw ConfigError("empty matrix rejected");
    if (auto r = first_non_finite_row(m)) throw FormatError(fmt::format("non-finite value at row {}", *r));

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw StorageError(fmt::format("cannot open {} for writing", path.string()));
    os.write(kMagic.data(), kMagic.size());
    put_u64(os, m.rows());
    put_u64(os, m.dim());
    const auto data = m.data();
    os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size_bytes()));
    os.flush();
    if (!os) throw StorageError(fmt::format("write failed for {}", path.string()));
}

EmbeddingMatrix read_matrix(const std::filesystem::path& path, const ReadOptions& opts) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw StorageError(fmt::format("cannot open {}", path.string()));
    std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());

    if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
        throw FormatError(fmt::format("unrecognized format: {}", path.string()));
    }
    const std::uint64_t rows = get_u64(bytes.data() + 4);
    const std::uint64_t dim = get_u64(bytes.data() + 12);
    if (rows == 0 || dim == 0) throw FormatError(fmt::format("empty matrix rejected: {}", path.string()));
    // Guard the multiplication against absurd headers before allocating.
    if (dim > (std::uint64_t{1} << 40) / rows) {
        throw FormatError(fmt::format("size mismatch: header declares {} x {} in {}", rows, dim, path.string()));
    }
    const std::uint64_t expected = kHeaderBytes + rows * dim * sizeof(float);
    if (bytes.size() != expected) {
        throw FormatError(fmt::format("size mismatch: expected {} bytes, found {} in {}", expected, bytes.size(),
                                      path.string()));
    }

    std::vector<float> data(rows * dim);
    std::memcpy(data.data(), bytes.data() + kHeaderBytes, data.size() * sizeof(float));
    EmbeddingMatrix m(rows, dim, std::move(data), path.string());
    if (auto r = first_non_finite_row(m)) {
        throw FormatError(fmt::format("non-finite value at row {} in {}", *r, path.string()));
    }
    if (opts.reject_zero_rows) {
        if (auto r = first_zero_row(m)) {
            throw FormatError(fmt::format("degenerate embedding at row {} in {}", *r, path.string()));
        }
    }
    return m;
}

EmbeddingMatrix normalize_rows(const EmbeddingMatrix& m) {
    std::vector<float> out(m.data().begin(), m.data().end());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        double sq = 0.0;
        for (float v : m.row(r)) sq += static_cast<double>(v) * v;
        if (sq == 0.0) throw ConfigError(fmt::format("degenerate embedding at row {}", r));
        const double norm = std::sqrt(sq);
        for (std::size_t c = 0; c < m.dim(); ++c) {
            out[r * m.dim() + c] = static_cast<float>(m.at(r, c) / norm);
        }
    }
    return EmbeddingMatrix(m.rows(), m.dim(), std::move(out), m.tag());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw StorageError(fmt::format("cannot open manifest {}", path.string()));
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(fmt::format("manifest {} is not valid JSON: {}", path.string(), e.what()));
    }
    const auto base = path.parent_path();
    DatasetManifest m;
    try {
        m.embeddings = resolve(base, doc.at("embeddings").get<std::string>());
        m.labels = resolve(base, doc.at("labels").get<std::string>());
        m.classes = doc.at("classes").get<std::vector<std::string>>();
        m.split = doc.value("split", std::string{});
        if (doc.contains("images")) m.images = resolve(base, doc.at("images").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(fmt::format("manifest {} is missing a field: {}", path.string(), e.what()));
    }
    return m;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    nlohmann::json doc;
    doc["embeddings"] = manifest.embeddings.string();
    doc["labels"] = manifest.labels.string();
    doc["classes"] = manifest.classes;
    doc["split"] = manifest.split;
    if (manifest.images) doc["images"] = manifest.images->string();
    std::ofstream os(path);
    if (!os) throw StorageError(fmt::format("cannot open {} for writing", path.string()));
    os << doc.dump(2) << '\n';
}

std::vector<int> read_labels(const std::filesystem::path& path) {
    std::vector<int> labels;
    std::size_t line_no = 0;
    for (const auto& line : read_lines(path)) {
        ++line_no;
        std::istringstream ss(line);
        long long v = 0;
        std::string rest;
        if (!(ss >> v) || (ss >> rest) || v < 0 || v > std::numeric_limits<int>::max()) {
            throw FormatError(fmt::format("bad label '{}' on line {} of {}", line, line_no, path.string()));
        }
        labels.push_back(static_cast<int>(v));
    }
    return labels;
}

void write_labels(std::span<const int> labels, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw StorageError(fmt::format("cannot open {} for writing", path.string()));
    for (int l : labels) os << l << '\n';
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw StorageError(fmt::format("cannot open {}", path.string()));
    std::vector<std::string> out;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        out.push_back(line);
    }
    return out;
}

void write_lines(std::span<const std::string> lines, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw StorageError(fmt::format("cannot open {} for writing", path.string()));
    for (const auto& l : lines) os << l << '\n';
}

Dataset load_dataset(const DatasetManifest& manifest) {
    Dataset ds;
    ds.embeddings = normalize_rows(read_matrix(manifest.embeddings));
    ds.labels = read_labels(manifest.labels);
    ds.classes = manifest.classes;
    if (ds.classes.empty()) throw ConfigError("manifest lists no classes");
    if (ds.labels.size() != ds.embeddings.rows()) {
        throw ConfigError(fmt::format("label count {} does not equal embedding rows {}", ds.labels.size(),
                                      ds.embeddings.rows()));
    }
    for (std::size_t i = 0; i < ds.labels.size(); ++i) {
        if (static_cast<std::size_t>(ds.labels[i]) >= ds.classes.size()) {
            throw ConfigError(fmt::format("label {} at row {} is outside the {} classes", ds.labels[i], i,
                                          ds.classes.size()));
        }
    }
    if (manifest.images) {
        const auto base = manifest.images->parent_path();
        for (const auto& line : read_lines(*manifest.images)) ds.images.push_back(resolve(base, line));
        if (ds.images.size() != ds.embeddings.rows()) {
            throw ConfigError(fmt::format("image list has {} entries for {} embedding rows", ds.images.size(),
                                          ds.embeddings.rows()));
        }
    }
    return ds;
}

}  // namespace recbm
