#include "cmxqe/fusion.hpp"

#include <algorithm>
#include <map>
#include <unordered_set>

#include <json.hpp>

#include "cmxqe/error.hpp"
#include "cmxqe/io.hpp"

namespace cmxqe {

namespace {

using nlohmann::json;

int class_index_for(Task task, int natural, std::string_view record_id) {
  const int cls = natural - label_offset(task);
  if (cls < 0 || cls >= static_cast<int>(kNumClasses)) {
    throw Error(ErrorKind::LabelOutOfRange, std::string(to_string(task)) + " label " +
                                                std::to_string(natural) + " of '" +
                                                std::string(record_id) + "' outside the task range");
  }
  return cls;
}

// Human vectors for one pair/context in ascending index order.
std::vector<std::pair<std::uint32_t, const std::vector<float>*>> human_vectors_for(
    const EmbeddingStore& store, std::string_view pair_id, Context context) {
  std::string prefix = "hum:";
  prefix += pair_id;
  prefix += ':';
  std::vector<std::pair<std::uint32_t, const std::vector<float>*>> found;
  for (auto it = store.entries().lower_bound(prefix);
       it != store.entries().end() && it->first.compare(0, prefix.size(), prefix) == 0; ++it) {
    // A longer pair_id sharing this prefix fails to parse back to the same owner.
    const auto key = EmbeddingKey::parse(it->first);
    if (!key || key->source != Source::Hum || key->owner_id != pair_id || key->context != context) continue;
    found.emplace_back(*key->human_index, &it->second);
  }
  std::sort(found.begin(), found.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return found;
}

}  // namespace

std::vector<int> FeatureMatrix::natural_labels() const {
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = natural_label(i);
  return out;
}

void FeatureMatrix::push_back(const FusedFeature& feature, int class_index) {
  if (feature.values.size() != kFusedDim) {
    throw Error(ErrorKind::DimMismatch, "fused row has " + std::to_string(feature.values.size()) + " values");
  }
  record_ids.push_back(feature.record_id);
  values.insert(values.end(), feature.values.begin(), feature.values.end());
  labels.push_back(class_index);
}

EmbeddingVector average_human_vectors(const EmbeddingStore& store, std::string_view pair_id, Context context) {
  if (store.dim() != kClsDim) {
    throw Error(ErrorKind::DimMismatch,
                "human store dim " + std::to_string(store.dim()) + ", expected " + std::to_string(kClsDim));
  }
  const auto vectors = human_vectors_for(store, pair_id, context);
  if (vectors.empty()) {
    throw Error(ErrorKind::NoHumanVectors,
                "no human vectors for pair '" + std::string(pair_id) + "' (" + std::string(to_string(context)) + ")");
  }
  std::vector<double> sum(kClsDim, 0.0);
  for (const auto& [index, values] : vectors) {
    for (std::size_t i = 0; i < kClsDim; ++i) sum[i] += (*values)[i];
  }
  const double n = static_cast<double>(vectors.size());
  EmbeddingVector out{EmbeddingKey::human(std::string(pair_id), 0, context), std::vector<float>(kClsDim)};
  for (std::size_t i = 0; i < kClsDim; ++i) out.values[i] = static_cast<float>(sum[i] / n);
  return out;
}

FusedFeature assemble_feature(const LabeledRecord& record, std::span<const float> syn_en,
                              std::span<const float> syn_hi, std::span<const float> hum_en_avg,
                              std::span<const float> hum_hi_avg) {
  const std::span<const float> parts[] = {syn_en, syn_hi, hum_en_avg, hum_hi_avg};
  FusedFeature out{record.record.record_id, {}};
  out.values.reserve(kFusedDim);
  for (const auto& part : parts) {
    if (part.size() != kClsDim) {
      throw Error(ErrorKind::DimMismatch, "segment of '" + record.record.record_id + "' has " +
                                              std::to_string(part.size()) + " values, expected " +
                                              std::to_string(kClsDim));
    }
    out.values.insert(out.values.end(), part.begin(), part.end());
  }
  return out;
}

FeatureMatrix build_feature_matrix(std::span<const LabeledRecord> records, const EmbeddingStore& syn_store,
                                   const EmbeddingStore& hum_store, Task task) {
  for (const auto* store : {&syn_store, &hum_store}) {
    if (store->dim() != kClsDim) {
      throw Error(ErrorKind::DimMismatch,
                  "embedding store dim " + std::to_string(store->dim()) + ", expected " + std::to_string(kClsDim));
    }
  }

  // First pass: collect everything that is missing so the error lists it all.
  std::vector<std::string> missing;
  std::map<std::pair<std::string, Context>, std::vector<float>> averages;
  std::unordered_set<std::string> reported;
  for (const auto& rec : records) {
    for (const auto ctx : {Context::En, Context::Hi}) {
      const auto key = EmbeddingKey::synthetic(rec.record.record_id, ctx).render();
      if (!syn_store.contains(key)) missing.push_back(key);
      const auto avg_key = std::make_pair(rec.record.pair_id, ctx);
      if (averages.contains(avg_key)) continue;
      if (human_vectors_for(hum_store, rec.record.pair_id, ctx).empty()) {
        auto pattern = "hum:" + rec.record.pair_id + ":*:" + std::string(to_string(ctx));
        if (reported.insert(pattern).second) missing.push_back(std::move(pattern));
        continue;
      }
      averages.emplace(avg_key, average_human_vectors(hum_store, rec.record.pair_id, ctx).values);
    }
  }
  if (!missing.empty()) {
    std::string message = std::to_string(missing.size()) + " embedding(s) missing:";
    for (const auto& k : missing) message += " " + k;
    throw Error(ErrorKind::MissingKey, message);
  }

  FeatureMatrix matrix;
  matrix.task = task;
  matrix.record_ids.reserve(records.size());
  matrix.values.reserve(records.size() * kFusedDim);
  matrix.labels.reserve(records.size());
  for (const auto& rec : records) {
    const int cls = class_index_for(task, rec.label(task), rec.record.record_id);
    const auto feature = assemble_feature(
        rec, syn_store.at(EmbeddingKey::synthetic(rec.record.record_id, Context::En)),
        syn_store.at(EmbeddingKey::synthetic(rec.record.record_id, Context::Hi)),
        averages.at({rec.record.pair_id, Context::En}), averages.at({rec.record.pair_id, Context::Hi}));
    matrix.push_back(feature, cls);
  }
  return matrix;
}

std::filesystem::path labels_sidecar_path(const std::filesystem::path& clsv_path) {
  auto path = clsv_path;
  path.replace_extension(".labels.json");
  return path;
}

LabelFile read_label_file(const std::filesystem::path& path) {
  const auto doc = json::parse(io::read_file(path), nullptr, false);
  auto bad = [&](const std::string& why) {
    return Error(ErrorKind::InvalidArgument, path.string() + ": " + why);
  };
  if (doc.is_discarded() || !doc.is_object()) throw bad("not a JSON object");
  if (!doc.contains("task") || !doc["task"].is_string()) throw bad("missing \"task\"");
  const auto task = parse_task(doc["task"].get<std::string>());
  if (!task) throw bad("unknown task");
  if (!doc.contains("labels") || !doc["labels"].is_object()) throw bad("missing \"labels\" object");
  const auto& labels = doc["labels"];

  LabelFile out;
  out.task = *task;
  if (doc.contains("row_order")) {
    if (!doc["row_order"].is_array()) throw bad("\"row_order\" must be an array");
    for (const auto& id : doc["row_order"]) {
      if (!id.is_string()) throw bad("\"row_order\" entries must be strings");
      out.row_order.push_back(id.get<std::string>());
    }
    if (out.row_order.size() != labels.size()) {
      throw Error(ErrorKind::LengthMismatch, path.string() + ": row_order has " +
                                                 std::to_string(out.row_order.size()) + " ids, labels has " +
                                                 std::to_string(labels.size()));
    }
  } else {
    for (const auto& [id, value] : labels.items()) out.row_order.push_back(id);
  }
  for (const auto& id : out.row_order) {
    const auto it = labels.find(id);
    if (it == labels.end()) throw Error(ErrorKind::MissingKey, path.string() + ": no label for '" + id + "'");
    if (!it->is_number_integer()) throw bad("label of '" + id + "' is not an integer");
    const int natural = it->get<int>();
    class_index_for(out.task, natural, id);
    out.labels.push_back(natural);
  }
  return out;
}

void write_label_file(const LabelFile& labels, const std::filesystem::path& path) {
  json label_map = json::object();
  for (std::size_t i = 0; i < labels.row_order.size(); ++i) label_map[labels.row_order[i]] = labels.labels[i];
  const json doc{{"task", std::string(to_string(labels.task))},
                 {"labels", label_map},
                 {"row_order", labels.row_order}};
  io::write_file(path, doc.dump(2) + "\n");
}

void write_feature_matrix(const FeatureMatrix& matrix, const std::filesystem::path& clsv_path) {
  EmbeddingStore store(static_cast<std::uint32_t>(kFusedDim));
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    const auto row = matrix.row(i);
    store.insert(matrix.record_ids[i], std::vector<float>(row.begin(), row.end()));
  }
  write_clsv(store, clsv_path);
  write_label_file(LabelFile{matrix.task, matrix.record_ids, matrix.natural_labels()},
                   labels_sidecar_path(clsv_path));
}

FeatureMatrix read_feature_matrix(const std::filesystem::path& clsv_path) {
  const auto store = read_clsv(clsv_path, static_cast<std::uint32_t>(kFusedDim));
  const auto labels = read_label_file(labels_sidecar_path(clsv_path));
  if (labels.row_order.size() != store.size()) {
    throw Error(ErrorKind::LengthMismatch, clsv_path.string() + " holds " + std::to_string(store.size()) +
                                               " rows but its labels list " +
                                               std::to_string(labels.row_order.size()));
  }
  FeatureMatrix matrix;
  matrix.task = labels.task;
  for (std::size_t i = 0; i < labels.row_order.size(); ++i) {
    const auto& id = labels.row_order[i];
    const auto row = store.at(id);
    matrix.push_back(FusedFeature{id, std::vector<float>(row.begin(), row.end())},
                     labels.labels[i] - label_offset(labels.task));
  }
  return matrix;
}

}  // namespace cmxqe
