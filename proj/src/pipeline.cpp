#include "cmxqe/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "cmxqe/embeddings.hpp"
#include "cmxqe/error.hpp"
#include "cmxqe/fusion.hpp"
#include "cmxqe/io.hpp"
#include "cmxqe/log.hpp"

namespace cmxqe::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<EmbeddingRequest> synthetic_requests(const LoadedDataset& data, Context context) {
  std::unordered_map<std::string, const SentencePairRecord*> pairs;
  for (const auto& pair : data.parsed.pairs) pairs.emplace(pair.pair_id, &pair);
  std::vector<EmbeddingRequest> requests;
  requests.reserve(data.parsed.synthetic.size());
  for (const auto& rec : data.parsed.synthetic) {
    const auto it = pairs.find(rec.pair_id);
    if (it == pairs.end()) {
      throw Error(ErrorKind::MissingKey, "record '" + rec.record_id + "' references unknown pair '" + rec.pair_id + "'");
    }
    const auto& pair = *it->second;
    requests.push_back({EmbeddingKey::synthetic(rec.record_id, context),
                        context == Context::En ? pair.english_text : pair.hindi_text, rec.hinglish_text});
  }
  return requests;
}

std::vector<EmbeddingRequest> human_requests(const LoadedDataset& data, Context context) {
  std::vector<EmbeddingRequest> requests;
  for (const auto& pair : data.parsed.pairs) {
    for (std::size_t i = 0; i < pair.human_hinglish.size(); ++i) {
      requests.push_back({EmbeddingKey::human(pair.pair_id, static_cast<std::uint32_t>(i), context),
                          context == Context::En ? pair.english_text : pair.hindi_text, pair.human_hinglish[i]});
    }
  }
  return requests;
}

std::uint64_t parse_u64(std::string_view text, std::string_view what) {
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
    throw Error(ErrorKind::InvalidArgument, "bad " + std::string(what) + ": '" + std::string(text) + "'");
  }
  return value;
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());
}

}  // namespace

ProviderSpec ProviderSpec::parse(std::string_view text) {
  constexpr std::string_view kDeterministic = "deterministic:";
  constexpr std::string_view kFiles = "files:";
  if (text.rfind(kDeterministic, 0) == 0) {
    return ProviderSpec{DeterministicProvider{parse_u64(text.substr(kDeterministic.size()), "provider seed")}};
  }
  if (text.rfind(kFiles, 0) == 0 && text.size() > kFiles.size()) {
    return ProviderSpec{fs::path(std::string(text.substr(kFiles.size())))};
  }
  throw Error(ErrorKind::InvalidArgument,
              "provider must be deterministic:<seed> or files:<dir>, got '" + std::string(text) + "'");
}

std::string ProviderSpec::to_string() const {
  if (const auto* det = std::get_if<DeterministicProvider>(&source)) {
    return "deterministic:" + std::to_string(det->seed);
  }
  return "files:" + std::get<fs::path>(source).string();
}

std::optional<SplitSelector> parse_split_selector(std::string_view name) {
  if (name == "all") return SplitSelector::All;
  if (name == "train") return SplitSelector::Train;
  if (name == "validation") return SplitSelector::Validation;
  if (name == "test") return SplitSelector::Test;
  return std::nullopt;
}

PipelineConfig PipelineConfig::from_json(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorKind::InvalidArgument, "config must be a JSON object");
  PipelineConfig cfg;
  try {
    if (doc.contains("dataset")) cfg.dataset = doc["dataset"].get<std::string>();
    if (doc.contains("out_dir")) cfg.out_dir = doc["out_dir"].get<std::string>();
    if (doc.contains("provider")) cfg.provider = doc["provider"].get<std::string>();
    if (doc.contains("split_seed")) cfg.split_seed = doc["split_seed"].get<std::uint64_t>();
    if (doc.contains("fractions")) {
      const auto f = doc["fractions"].get<std::vector<double>>();
      if (f.size() != 3) throw Error(ErrorKind::InvalidArgument, "fractions must have three entries");
      cfg.fractions = {f[0], f[1], f[2]};
    }
    if (doc.contains("seed")) cfg.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("epochs_rating")) cfg.epochs_rating = doc["epochs_rating"].get<int>();
    if (doc.contains("epochs_disagreement")) cfg.epochs_disagreement = doc["epochs_disagreement"].get<int>();
    if (doc.contains("lr")) cfg.learning_rate = doc["lr"].get<double>();
    if (doc.contains("batch_size")) cfg.batch_size = doc["batch_size"].get<std::size_t>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("config: ") + e.what());
  }
  return cfg;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  const auto doc = json::parse(io::read_file(path), nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorKind::InvalidArgument, path.string() + ": not valid JSON");
  return from_json(doc);
}

json PipelineConfig::to_json() const {
  json doc{{"dataset", dataset.string()},
           {"out_dir", out_dir.string()},
           {"provider", provider},
           {"split_seed", split_seed},
           {"fractions", {fractions.train, fractions.validation, fractions.test}},
           {"seed", seed}};
  if (epochs_rating) doc["epochs_rating"] = *epochs_rating;
  if (epochs_disagreement) doc["epochs_disagreement"] = *epochs_disagreement;
  if (learning_rate) doc["lr"] = *learning_rate;
  if (batch_size) doc["batch_size"] = *batch_size;
  return doc;
}

nn::TrainConfig PipelineConfig::train_config(Task task) const {
  nn::TrainConfig cfg;
  cfg.task = task;
  cfg.seed = seed;
  cfg.epochs = task == Task::Rating ? epochs_rating : epochs_disagreement;
  if (learning_rate) cfg.learning_rate = *learning_rate;
  if (batch_size) cfg.batch_size = *batch_size;
  return cfg;
}

LoadedDataset load_dataset(const fs::path& path) {
  LoadedDataset data;
  data.parsed = parse_hinge(path);
  for (const auto& err : data.parsed.errors) {
    logger().warn("{}:{}: skipped row: {}", path.string(), err.line, err.reason);
  }
  auto labeling = label_records(data.parsed.synthetic);
  for (const auto& m : labeling.mismatches) {
    logger().warn("record {}: provided {} {} differs from recomputed {}", m.record_id, m.field, m.provided,
                  m.recomputed);
  }
  data.labeled = std::move(labeling.records);
  return data;
}

std::vector<LabeledRecord> select_split(const std::vector<LabeledRecord>& records, SplitSelector selector,
                                        std::uint64_t split_seed, SplitFractions fractions, Task task) {
  if (selector == SplitSelector::All) return records;
  auto split = split_dataset(records, split_seed, fractions, task);
  switch (selector) {
    case SplitSelector::Train: return std::move(split.train);
    case SplitSelector::Validation: return std::move(split.validation);
    default: return std::move(split.test);
  }
}

int cmd_validate(const fs::path& dataset, std::ostream& out) {
  const auto parsed = parse_hinge(dataset);
  const auto report = validate_dataset(parsed);
  out << report.to_json().dump(2) << "\n";
  if (!report.clean()) {
    logger().warn("{}: {} violation(s), {} malformed row(s)", dataset.string(), report.violations.size(),
                  report.malformed_rows.size());
    return kExitFindings;
  }
  return kExitOk;
}

int cmd_embed(const fs::path& dataset, const ProviderSpec& provider, const fs::path& out_dir, std::ostream& out) {
  const auto data = load_dataset(dataset);
  ensure_directory(out_dir);

  struct Target {
    const char* file;
    std::vector<EmbeddingRequest> requests;
  };
  std::vector<Target> targets;
  targets.push_back({kSynEnFile, synthetic_requests(data, Context::En)});
  targets.push_back({kSynHiFile, synthetic_requests(data, Context::Hi)});
  targets.push_back({kHumEnFile, human_requests(data, Context::En)});
  targets.push_back({kHumHiFile, human_requests(data, Context::Hi)});

  json counts = json::object();
  for (const auto& target : targets) {
    EmbeddingStore store;
    if (const auto* dir = std::get_if<fs::path>(&provider.source)) {
      const auto source = *dir / target.file;
      if (!target.requests.empty() && !fs::exists(source)) {
        std::string listed;
        const std::size_t shown = std::min<std::size_t>(target.requests.size(), 5);
        for (std::size_t i = 0; i < shown; ++i) listed += (i ? ", " : "") + target.requests[i].key.render();
        if (shown < target.requests.size()) listed += ", ... (" + std::to_string(target.requests.size()) + " in all)";
        throw Error(ErrorKind::MissingKey, source.string() + " does not exist; missing " + listed);
      }
      store = provide_embeddings(FileProvider{source}, target.requests);
    } else {
      store = provide_embeddings(std::get<DeterministicProvider>(provider.source), target.requests);
    }
    write_clsv(store, out_dir / target.file);
    logger().info("wrote {} vectors to {}", store.size(), (out_dir / target.file).string());
    counts[target.file] = store.size();
  }
  out << json{{"provider", provider.to_string()}, {"out_dir", out_dir.string()}, {"counts", counts}}.dump(2)
      << "\n";
  return kExitOk;
}

int cmd_fuse(const fs::path& dataset, const fs::path& embeddings_dir, Task task, const fs::path& out_matrix,
             const FuseOptions& options, std::ostream& out) {
  const auto data = load_dataset(dataset);
  if (data.labeled.empty()) throw Error(ErrorKind::EmptyDataset, dataset.string() + " has no synthetic records");
  const auto records = select_split(data.labeled, options.split, options.split_seed, options.fractions, task);

  auto load_pair = [&](const char* en_file, const char* hi_file) {
    auto merged = read_clsv(embeddings_dir / en_file, kClsDim);
    const auto hi = read_clsv(embeddings_dir / hi_file, kClsDim);
    for (const auto& [key, values] : hi.entries()) merged.insert(key, values);
    return merged;
  };
  const auto syn = load_pair(kSynEnFile, kSynHiFile);
  const auto hum = load_pair(kHumEnFile, kHumHiFile);

  const auto matrix = build_feature_matrix(records, syn, hum, task);
  if (out_matrix.has_parent_path()) ensure_directory(out_matrix.parent_path());
  write_feature_matrix(matrix, out_matrix);
  logger().info("fused {} rows x {} columns into {}", matrix.rows(), FeatureMatrix::cols(), out_matrix.string());
  out << json{{"task", std::string(to_string(task))},
              {"rows", matrix.rows()},
              {"cols", FeatureMatrix::cols()},
              {"matrix", out_matrix.string()},
              {"labels", labels_sidecar_path(out_matrix).string()}}
             .dump(2)
      << "\n";
  return kExitOk;
}

fs::path trace_path_for(const fs::path& checkpoint) {
  auto path = checkpoint;
  path += ".trace.csv";
  return path;
}

int cmd_train(const fs::path& matrix_path, const nn::TrainConfig& config, const fs::path& out_checkpoint,
              std::ostream& out) {
  const auto matrix = read_feature_matrix(matrix_path);
  logger().info("training {} model on {} rows for {} epoch(s), lr {}, batch {}", to_string(config.task),
                matrix.rows(), config.resolved_epochs(), config.learning_rate, config.batch_size);
  auto result = nn::train(config, matrix, [](int epoch, double loss) {
    logger().info("epoch {} mean loss {:.6f}", epoch, loss);
  });
  nn::TrainConfig stored = config;
  stored.epochs = config.resolved_epochs();
  if (out_checkpoint.has_parent_path()) ensure_directory(out_checkpoint.parent_path());
  nn::save_checkpoint(nn::Checkpoint{std::move(result.model), stored, result.loss_trace}, out_checkpoint);
  io::write_file(trace_path_for(out_checkpoint), nn::loss_trace_csv(result.loss_trace));
  out << json{{"task", std::string(to_string(config.task))},
              {"checkpoint", out_checkpoint.string()},
              {"epochs", result.loss_trace.size()},
              {"loss_trace", result.loss_trace}}
             .dump(2)
      << "\n";
  return kExitOk;
}

int cmd_predict(const fs::path& checkpoint, const fs::path& matrix_path, const fs::path& out_labels,
                std::ostream& out) {
  const auto ckpt = nn::load_checkpoint(checkpoint);
  const auto matrix = read_feature_matrix(matrix_path);
  if (ckpt.config.task != matrix.task) {
    throw Error(ErrorKind::TaskMismatch, "checkpoint is a " + std::string(to_string(ckpt.config.task)) +
                                             " model, matrix holds " + std::string(to_string(matrix.task)) + " rows");
  }
  const auto predictions = nn::predict(ckpt.model, matrix);
  write_label_file(LabelFile{matrix.task, matrix.record_ids, predictions}, out_labels);
  out << json{{"task", std::string(to_string(matrix.task))},
              {"rows", predictions.size()},
              {"predictions", out_labels.string()}}
             .dump(2)
      << "\n";
  return kExitOk;
}

metrics::MetricReport evaluate_checkpoint(const fs::path& checkpoint, const fs::path& matrix_path,
                                          const std::optional<fs::path>& gold_labels) {
  const auto ckpt = nn::load_checkpoint(checkpoint);
  const auto matrix = read_feature_matrix(matrix_path);
  if (ckpt.config.task != matrix.task) {
    throw Error(ErrorKind::TaskMismatch, "checkpoint is a " + std::string(to_string(ckpt.config.task)) +
                                             " model, matrix holds " + std::string(to_string(matrix.task)) + " rows");
  }
  const auto predictions = nn::predict(ckpt.model, matrix);

  std::vector<int> gold;
  if (gold_labels) {
    const auto labels = read_label_file(*gold_labels);
    if (labels.task != matrix.task) {
      throw Error(ErrorKind::TaskMismatch, "gold labels are for " + std::string(to_string(labels.task)));
    }
    if (labels.row_order.size() != matrix.rows()) {
      throw Error(ErrorKind::LengthMismatch, std::to_string(labels.row_order.size()) + " gold labels for " +
                                                 std::to_string(matrix.rows()) + " rows");
    }
    std::unordered_map<std::string, int> by_id;
    for (std::size_t i = 0; i < labels.row_order.size(); ++i) by_id.emplace(labels.row_order[i], labels.labels[i]);
    gold.reserve(matrix.rows());
    for (const auto& id : matrix.record_ids) {
      const auto it = by_id.find(id);
      if (it == by_id.end()) throw Error(ErrorKind::MissingKey, "no gold label for '" + id + "'");
      gold.push_back(it->second);
    }
  } else {
    gold = matrix.natural_labels();
  }
  return metrics::evaluate(gold, predictions, matrix.task);
}

int cmd_evaluate(const fs::path& checkpoint, const fs::path& matrix_path, const std::optional<fs::path>& gold_labels,
                 std::ostream& out) {
  const auto report = evaluate_checkpoint(checkpoint, matrix_path, gold_labels);
  out << report.to_display_json() << "\n";
  return kExitOk;
}

int cmd_run_all(const PipelineConfig& config, std::ostream& out) {
  if (config.dataset.empty() || config.out_dir.empty()) {
    throw Error(ErrorKind::InvalidArgument, "run-all needs a dataset and an out_dir");
  }
  const auto provider = ProviderSpec::parse(config.provider);
  ensure_directory(config.out_dir);
  io::write_file(config.out_dir / "config.json", config.to_json().dump(2) + "\n");

  std::ostringstream sink;
  logger().info("stage validate");
  if (const int code = cmd_validate(config.dataset, sink); code != kExitOk) {
    io::write_file(config.out_dir / "validation.json", sink.str());
    return code;
  }
  io::write_file(config.out_dir / "validation.json", sink.str());

  logger().info("stage embed ({})", provider.to_string());
  const auto embeddings_dir = config.out_dir / "embeddings";
  sink.str({});
  cmd_embed(config.dataset, provider, embeddings_dir, sink);

  json summary{{"dataset", config.dataset.string()}, {"provider", provider.to_string()}};
  for (const auto task : {Task::Rating, Task::Disagreement}) {
    const auto task_name = std::string(to_string(task));
    const auto task_dir = config.out_dir / task_name;
    ensure_directory(task_dir);
    logger().info("stage fuse ({})", task_name);
    FuseOptions fuse{SplitSelector::Train, config.split_seed, config.fractions};
    cmd_fuse(config.dataset, embeddings_dir, task, task_dir / "train.clsv", fuse, sink);
    auto eval_matrix = task_dir / "test.clsv";
    if (config.fractions.test > 0.0) {
      fuse.split = SplitSelector::Test;
      cmd_fuse(config.dataset, embeddings_dir, task, eval_matrix, fuse, sink);
    } else {
      logger().warn("test fraction is 0; evaluating {} on the training split", task_name);
      eval_matrix = task_dir / "train.clsv";
    }

    logger().info("stage train ({})", task_name);
    const auto checkpoint = task_dir / "model.mlpc";
    cmd_train(task_dir / "train.clsv", config.train_config(task), checkpoint, sink);

    logger().info("stage evaluate ({})", task_name);
    const auto report = evaluate_checkpoint(checkpoint, eval_matrix, std::nullopt);
    io::write_file(task_dir / "report.json", report.to_json().dump(2) + "\n");
    summary[task_name] = report.to_json();
  }
  io::write_file(config.out_dir / "summary.json", summary.dump(2) + "\n");
  out << summary.dump(2) << "\n";
  return kExitOk;
}

}  // namespace cmxqe::pipeline
