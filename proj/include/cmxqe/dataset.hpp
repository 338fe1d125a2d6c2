#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cmxqe/common.hpp"

namespace cmxqe {

inline constexpr int kMinRating = 1;
inline constexpr int kMaxRating = 10;

enum class Generator { WAC, PAC };

std::string_view to_string(Generator generator);
std::optional<Generator> parse_generator(std::string_view name);

/// One English-Hindi pair and its human-written Hinglish references.
struct SentencePairRecord {
  std::string pair_id;
  std::string english_text;
  std::string hindi_text;
  std::vector<std::string> human_hinglish;

  bool operator==(const SentencePairRecord&) const = default;
};

/// One machine-generated Hinglish sentence with its two annotator ratings.
/// The provided_* fields hold the dataset's own label columns when present.
struct SyntheticRecord {
  std::string record_id;
  std::string pair_id;
  Generator generator = Generator::WAC;
  std::string hinglish_text;
  int rating1 = kMinRating;
  int rating2 = kMinRating;
  std::optional<int> provided_average_rating;
  std::optional<int> provided_disagreement;

  bool operator==(const SyntheticRecord&) const = default;
};

struct LabeledRecord {
  SyntheticRecord record;
  int average_rating = kMinRating;  // 1..10
  int disagreement = 0;             // 0..9

  /// Label on the task's natural scale.
  int label(Task task) const { return task == Task::Rating ? average_rating : disagreement; }

  bool operator==(const LabeledRecord&) const = default;
};

/// A skipped input row. `line` is the 1-based physical line of the row start
/// for CSV, and the 1-based array position for JSON.
struct MalformedRow {
  std::size_t line = 0;
  std::string reason;
};

struct ParsedDataset {
  std::vector<SentencePairRecord> pairs;
  std::vector<SyntheticRecord> synthetic;
  std::vector<MalformedRow> errors;
};

enum class DataFormat { Csv, Json };

/// Parses the canonical HinGE layout. Bad rows are skipped and collected in
/// `errors`; an unreadable file or a header lacking required columns throws.
ParsedDataset parse_hinge(const std::filesystem::path& path, DataFormat format);

/// Format chosen from the file extension (.json -> JSON, anything else CSV).
ParsedDataset parse_hinge(const std::filesystem::path& path);

/// round-half-up((r1 + r2) / 2); throws OutOfRange outside [1, 10].
int compute_average_rating(int rating1, int rating2);

/// |r1 - r2|; throws OutOfRange outside [1, 10].
int compute_disagreement(int rating1, int rating2);

struct LabelMismatch {
  std::string record_id;
  std::string field;  // "average_rating" or "disagreement"
  int provided = 0;
  int recomputed = 0;
};

struct LabelingResult {
  std::vector<LabeledRecord> records;
  std::vector<LabelMismatch> mismatches;
};

/// Recomputes both labels for every record, preserving order. Mismatches
/// against provided columns are reported; recomputed values win.
LabelingResult label_records(std::span<const SyntheticRecord> synthetic);

struct SplitFractions {
  double train = 0.8;
  double validation = 0.0;
  double test = 0.2;

  bool operator==(const SplitFractions&) const = default;
};

struct DatasetSplit {
  std::vector<LabeledRecord> train;
  std::vector<LabeledRecord> validation;
  std::vector<LabeledRecord> test;
  std::uint64_t seed = 0;
  SplitFractions fractions;
};

/// Seeded split stratified on the label of `stratify_on`. Every class with at
/// least three members lands in each split whose fraction is positive. Split
/// sizes follow largest-remainder rounding of the fractions over the whole
/// input and only drift from it when that presence rule cannot be met by
/// trading members between classes. Each split keeps input order.
DatasetSplit split_dataset(std::span<const LabeledRecord> records, std::uint64_t seed,
                           SplitFractions fractions, Task stratify_on);

struct Violation {
  std::string kind;
  std::string id;
  std::string message;
};

struct ValidationReport {
  std::size_t pair_count = 0;
  std::size_t human_sentence_count = 0;
  std::size_t synthetic_count = 0;
  std::size_t wac_count = 0;
  std::size_t pac_count = 0;
  std::vector<Violation> violations;
  std::vector<MalformedRow> malformed_rows;

  // Audit of the dataset's own label columns against the recomputed labels.
  std::size_t average_rating_checked = 0;
  std::size_t average_rating_mismatches = 0;
  std::size_t disagreement_checked = 0;
  std::size_t disagreement_mismatches = 0;
  std::vector<LabelMismatch> label_mismatches;

  /// True when there are neither invariant violations nor skipped rows.
  bool clean() const { return violations.empty() && malformed_rows.empty(); }

  nlohmann::json to_json() const;
};

ValidationReport validate_dataset(std::span<const SentencePairRecord> pairs,
                                  std::span<const SyntheticRecord> synthetic);

/// Also carries the parse errors into the report.
ValidationReport validate_dataset(const ParsedDataset& parsed);

}  // namespace cmxqe
