#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>

#include <json.hpp>

#include "cmxqe/common.hpp"
#include "cmxqe/dataset.hpp"
#include "cmxqe/metrics.hpp"
#include "cmxqe/nn.hpp"

namespace cmxqe::pipeline {

/// `deterministic:<seed>` or `files:<dir>`; the directory holds the four
/// CLSV files named below.
struct ProviderSpec {
  std::variant<DeterministicProvider, std::filesystem::path> source;

  static ProviderSpec parse(std::string_view text);
  std::string to_string() const;
};

inline constexpr const char* kSynEnFile = "syn_en.clsv";
inline constexpr const char* kSynHiFile = "syn_hi.clsv";
inline constexpr const char* kHumEnFile = "hum_en.clsv";
inline constexpr const char* kHumHiFile = "hum_hi.clsv";

enum class SplitSelector { All, Train, Validation, Test };
std::optional<SplitSelector> parse_split_selector(std::string_view name);

/// Flat JSON document; every field optional except dataset and out_dir:
///   {"dataset", "out_dir", "provider", "split_seed", "fractions": [tr, va, te],
///    "seed", "epochs_rating", "epochs_disagreement", "lr", "batch_size"}
struct PipelineConfig {
  std::filesystem::path dataset;
  std::filesystem::path out_dir;
  std::string provider = "deterministic:0";
  std::uint64_t split_seed = 42;
  SplitFractions fractions;
  std::uint64_t seed = 0;
  std::optional<int> epochs_rating;
  std::optional<int> epochs_disagreement;
  std::optional<double> learning_rate;
  std::optional<std::size_t> batch_size;

  static PipelineConfig from_json(const nlohmann::json& doc);
  static PipelineConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  nn::TrainConfig train_config(Task task) const;
};

/// Parsed and labeled dataset; parse errors are kept for reporting.
struct LoadedDataset {
  ParsedDataset parsed;
  std::vector<LabeledRecord> labeled;
};

LoadedDataset load_dataset(const std::filesystem::path& path);

/// Records routed to one split (All returns every record).
std::vector<LabeledRecord> select_split(const std::vector<LabeledRecord>& records, SplitSelector selector,
                                        std::uint64_t split_seed, SplitFractions fractions, Task task);

// Each command writes its machine-readable result to `out` and returns the
// process exit code. Library errors propagate as cmxqe::Error.

int cmd_validate(const std::filesystem::path& dataset, std::ostream& out);

int cmd_embed(const std::filesystem::path& dataset, const ProviderSpec& provider,
              const std::filesystem::path& out_dir, std::ostream& out);

struct FuseOptions {
  SplitSelector split = SplitSelector::All;
  std::uint64_t split_seed = 42;
  SplitFractions fractions;
};

int cmd_fuse(const std::filesystem::path& dataset, const std::filesystem::path& embeddings_dir, Task task,
             const std::filesystem::path& out_matrix, const FuseOptions& options, std::ostream& out);

/// Writes the checkpoint and `<checkpoint>.trace.csv`.
int cmd_train(const std::filesystem::path& matrix_path, const nn::TrainConfig& config,
              const std::filesystem::path& out_checkpoint, std::ostream& out);

std::filesystem::path trace_path_for(const std::filesystem::path& checkpoint);

/// Writes predictions as a label file (same schema as the matrix sidecar).
int cmd_predict(const std::filesystem::path& checkpoint, const std::filesystem::path& matrix_path,
                const std::filesystem::path& out_labels, std::ostream& out);

/// Scores predictions against `gold_labels`, or the matrix's own labels when
/// no gold file is given.
int cmd_evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& matrix_path,
                 const std::optional<std::filesystem::path>& gold_labels, std::ostream& out);

metrics::MetricReport evaluate_checkpoint(const std::filesystem::path& checkpoint,
                                          const std::filesystem::path& matrix_path,
                                          const std::optional<std::filesystem::path>& gold_labels);

/// validate -> embed -> per task: fuse train/test -> train -> evaluate.
/// Artifacts land under config.out_dir; summary.json holds both reports.
int cmd_run_all(const PipelineConfig& config, std::ostream& out);

}  // namespace cmxqe::pipeline
