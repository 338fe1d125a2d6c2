#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cmxqe/common.hpp"
#include "cmxqe/dataset.hpp"
#include "cmxqe/embeddings.hpp"

namespace cmxqe {

/// Segment order of a fused row, each kClsDim wide.
enum class Segment : std::size_t { SynEn = 0, SynHi = 1, HumAvgEn = 2, HumAvgHi = 3 };

constexpr std::size_t segment_offset(Segment s) { return static_cast<std::size_t>(s) * kClsDim; }

struct FusedFeature {
  std::string record_id;
  std::vector<float> values;  // kFusedDim, layout [syn-en | syn-hi | hum-avg-en | hum-avg-hi]

  std::span<const float> segment(Segment s) const {
    return std::span<const float>(values).subspan(segment_offset(s), kClsDim);
  }
};

/// Row-major N x kFusedDim design matrix with positional labels. Labels are
/// class indices 0..9; natural labels are class + label_offset(task).
struct FeatureMatrix {
  Task task = Task::Rating;
  std::vector<std::string> record_ids;
  std::vector<float> values;
  std::vector<int> labels;

  std::size_t rows() const { return record_ids.size(); }
  static constexpr std::size_t cols() { return kFusedDim; }

  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(values).subspan(i * kFusedDim, kFusedDim);
  }
  int natural_label(std::size_t i) const { return labels[i] + label_offset(task); }
  std::vector<int> natural_labels() const;

  void push_back(const FusedFeature& feature, int class_index);
};

/// Elementwise mean over every hum:{pair_id}:{i}:{ctx} vector, summed in
/// ascending index order in double precision. Throws NoHumanVectors.
EmbeddingVector average_human_vectors(const EmbeddingStore& store, std::string_view pair_id, Context context);

/// Throws DimMismatch unless all four inputs are kClsDim long.
FusedFeature assemble_feature(const LabeledRecord& record, std::span<const float> syn_en,
                              std::span<const float> syn_hi, std::span<const float> hum_en_avg,
                              std::span<const float> hum_hi_avg);

/// One row per record in input order. Every missing synthetic key and every
/// (pair, context) without human vectors is collected into one MissingKey.
FeatureMatrix build_feature_matrix(std::span<const LabeledRecord> records, const EmbeddingStore& syn_store,
                                   const EmbeddingStore& hum_store, Task task);

/// Persists rows as CLSV (dim kFusedDim, key = record_id) plus a JSON sidecar
/// holding the task, labels on the natural scale and the row order.
void write_feature_matrix(const FeatureMatrix& matrix, const std::filesystem::path& clsv_path);
FeatureMatrix read_feature_matrix(const std::filesystem::path& clsv_path);

std::filesystem::path labels_sidecar_path(const std::filesystem::path& clsv_path);

/// Sidecar JSON: {"task": ..., "labels": {record_id: label}, "row_order": [...]}.
struct LabelFile {
  Task task = Task::Rating;
  std::vector<std::string> row_order;
  std::vector<int> labels;  // natural scale, aligned with row_order
};

LabelFile read_label_file(const std::filesystem::path& path);
void write_label_file(const LabelFile& labels, const std::filesystem::path& path);

}  // namespace cmxqe
