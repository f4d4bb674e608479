#pragma once

// Embedding matrices and dataset manifests.
//
// On-disk `.emb` layout (all little-endian):
//    magic  "EMB1"       4 bytes
//    rows   uint64       8 bytes
//    dim    uint64       8 bytes
//    data   float32      rows * dim * 4 bytes, row-major

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace recbm {

class EmbeddingMatrix {
public:
    EmbeddingMatrix() = default;
    EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> data, std::string tag = {});

    std::size_t rows() const { return rows_; }
    std::size_t dim() const { return dim_; }
    bool empty() const { return rows_ == 0; }
    const std::string& tag() const { return tag_; }
    void set_tag(std::string tag) { tag_ = std::move(tag); }

    std::span<const float> data() const { return data_; }
    std::span<const float> row(std::size_t r) const { return {data_.data() + r * dim_, dim_}; }
    float at(std::size_t r, std::size_t c) const { return data_[r * dim_ + c]; }

    /// Widened copy for numerical work (rows x dim).
    Eigen::MatrixXd to_eigen() const;
    Eigen::VectorXd row_eigen(std::size_t r) const;
    static EmbeddingMatrix from_eigen(const Eigen::MatrixXd& m, std::string tag = {});

    friend bool operator==(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
        return a.rows_ == b.rows_ && a.dim_ == b.dim_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t dim_ = 0;
    std::vector<float> data_;
    std::string tag_;
};

struct ReadOptions {
    // Parameter matrices (e.g. a zero-initialised head) legitimately contain zero rows.
    bool reject_zero_rows = true;
};

/// Throws ConfigError for an empty matrix, FormatError for non-finite values,
/// StorageError when the file cannot be written.
void write_matrix(const EmbeddingMatrix& m, const std::filesystem::path& path);

EmbeddingMatrix read_matrix(const std::filesystem::path& path, const ReadOptions& opts = {});

/// Divides each row by its L2 norm (accumulated in double).
EmbeddingMatrix normalize_rows(const EmbeddingMatrix& m);

/// First non-finite value, as a row index.
std::optional<std::size_t> first_non_finite_row(const EmbeddingMatrix& m);
std::optional<std::size_t> first_zero_row(const EmbeddingMatrix& m);

struct DatasetManifest {
    std::filesystem::path embeddings;
    std::filesystem::path labels;
    std::vector<std::string> classes;
    std::string split;
    // Optional per-row image file list, needed only for concept labeling.
    std::optional<std::filesystem::path> images;
};

/// Manifest is a JSON object with keys `embeddings`, `labels`, `classes`,
/// `split` and optionally `images`. Relative paths resolve against the
/// manifest's directory.
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

std::vector<int> read_labels(const std::filesystem::path& path);
void write_labels(std::span<const int> labels, const std::filesystem::path& path);

/// One entry per line; blank lines are skipped.
std::vector<std::string> read_lines(const std::filesystem::path& path);
void write_lines(std::span<const std::string> lines, const std::filesystem::path& path);

struct Dataset {
    EmbeddingMatrix embeddings;  // L2-normalised
    std::vector<int> labels;
    std::vector<std::string> classes;
    std::vector<std::filesystem::path> images;  // empty unless the manifest lists them
};

/// Loads and validates a dataset: label count equals row count, every label
/// indexes the class list, rows are normalised at ingestion.
Dataset load_dataset(const DatasetManifest& manifest);

}  // namespace recbm
