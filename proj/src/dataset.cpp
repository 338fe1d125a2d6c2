#include "cmxqe/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "cmxqe/csv.hpp"
#include "cmxqe/error.hpp"
#include "cmxqe/io.hpp"

namespace cmxqe {

namespace {

using nlohmann::json;

constexpr std::string_view kRequiredColumns[] = {
    "pair_id",    "english",           "hindi",   "human_hinglish", "record_id",
    "generator",  "synthetic_hinglish", "rating1", "rating2",
};

std::string_view trim_trailing(std::string_view s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n' ||
                        s.back() == '\v' || s.back() == '\f')) {
    s.remove_suffix(1);
  }
  return s;
}

std::string_view trim(std::string_view s) {
  s = trim_trailing(s);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

struct RowError {
  std::string reason;
};

int parse_int_field(std::string_view raw, std::string_view column) {
  const auto text = trim(raw);
  int value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc{} || ptr != end) {
    throw RowError{std::string(column) + " is not an integer: '" + std::string(raw) + "'"};
  }
  return value;
}

int parse_rating(std::string_view raw, std::string_view column) {
  const int value = parse_int_field(raw, column);
  if (value < kMinRating || value > kMaxRating) {
    throw RowError{std::string(column) + " = " + std::to_string(value) + " outside [1,10]"};
  }
  return value;
}

std::optional<int> parse_optional_int(std::string_view raw, std::string_view column) {
  if (trim(raw).empty()) return std::nullopt;
  return parse_int_field(raw, column);
}

std::vector<std::string> human_list_from_json(const json& value) {
  if (!value.is_array()) throw RowError{"human_hinglish is not a JSON array"};
  std::vector<std::string> out;
  out.reserve(value.size());
  for (const auto& item : value) {
    if (!item.is_string()) throw RowError{"human_hinglish contains a non-string entry"};
    out.emplace_back(trim_trailing(item.get_ref<const std::string&>()));
  }
  return out;
}

std::vector<std::string> human_list_from_text(std::string_view raw) {
  json parsed = json::parse(raw.begin(), raw.end(), nullptr, /*allow_exceptions=*/false);
  if (parsed.is_discarded()) throw RowError{"human_hinglish is not valid JSON"};
  return human_list_from_json(parsed);
}

// Source-format-neutral view of one row.
struct RawRow {
  std::string pair_id;
  std::string english;
  std::string hindi;
  std::vector<std::string> human;
  std::string record_id;
  std::string generator;
  std::string synthetic_hinglish;
  std::string rating1;
  std::string rating2;
  std::string average_rating;
  std::string disagreement;
};

class Assembler {
 public:
  void add(std::size_t line, RawRow row) {
    try {
      add_or_throw(row);
    } catch (const RowError& e) {
      out_.errors.push_back({line, e.reason});
    }
  }

  void reject(std::size_t line, std::string reason) { out_.errors.push_back({line, std::move(reason)}); }

  ParsedDataset finish() { return std::move(out_); }

 private:
  void add_or_throw(RawRow& row) {
    if (trim(row.pair_id).empty()) throw RowError{"empty pair_id"};

    // Validate the synthetic half before touching any state so a bad row is
    // skipped as a whole.
    std::optional<SyntheticRecord> synthetic;
    const bool pair_only = trim(row.record_id).empty() && trim(row.synthetic_hinglish).empty() &&
                           trim(row.generator).empty() && trim(row.rating1).empty() &&
                           trim(row.rating2).empty();
    if (!pair_only) {
      SyntheticRecord rec;
      rec.record_id = std::string(trim(row.record_id));
      if (rec.record_id.empty()) throw RowError{"empty record_id"};
      rec.pair_id = std::string(trim(row.pair_id));
      const auto gen = parse_generator(trim(row.generator));
      if (!gen) throw RowError{"unknown generator '" + row.generator + "'"};
      rec.generator = *gen;
      rec.hinglish_text = std::string(trim_trailing(row.synthetic_hinglish));
      rec.rating1 = parse_rating(row.rating1, "rating1");
      rec.rating2 = parse_rating(row.rating2, "rating2");
      rec.provided_average_rating = parse_optional_int(row.average_rating, "average_rating");
      rec.provided_disagreement = parse_optional_int(row.disagreement, "disagreement");
      synthetic = std::move(rec);
    }

    SentencePairRecord pair;
    pair.pair_id = std::string(trim(row.pair_id));
    pair.english_text = std::string(trim_trailing(row.english));
    pair.hindi_text = std::string(trim_trailing(row.hindi));
    pair.human_hinglish = std::move(row.human);

    const auto found = pair_index_.find(pair.pair_id);
    if (found == pair_index_.end()) {
      pair_index_.emplace(pair.pair_id, out_.pairs.size());
      out_.pairs.push_back(std::move(pair));
    } else if (!(out_.pairs[found->second] == pair)) {
      throw RowError{"pair fields conflict with an earlier row for pair_id '" + pair.pair_id + "'"};
    }
    if (synthetic) out_.synthetic.push_back(std::move(*synthetic));
  }

  ParsedDataset out_;
  std::unordered_map<std::string, std::size_t> pair_index_;
};

ParsedDataset parse_csv_dataset(const std::string& text, const std::filesystem::path& path) {
  const auto doc = csv::parse(text);
  if (doc.rows.empty()) {
    throw Error(ErrorKind::MalformedRow, path.string() + ": missing header row");
  }
  const auto& header = doc.rows.front().fields;
  std::map<std::string, std::size_t, std::less<>> columns;
  for (std::size_t i = 0; i < header.size(); ++i) {
    std::string name(trim(header[i]));
    // Tolerate a UTF-8 byte order mark on the first column.
    if (i == 0 && name.rfind("\xEF\xBB\xBF", 0) == 0) name.erase(0, 3);
    columns.emplace(std::move(name), i);
  }
  for (const auto column : kRequiredColumns) {
    if (!columns.contains(column)) {
      throw Error(ErrorKind::MalformedRow,
                  path.string() + ":1: header lacks required column '" + std::string(column) + "'");
    }
  }

  auto cell = [&](const csv::Row& row, std::string_view column) -> std::string {
    const auto it = columns.find(column);
    if (it == columns.end() || it->second >= row.fields.size()) return {};
    return row.fields[it->second];
  };

  Assembler assembler;
  for (std::size_t r = 1; r < doc.rows.size(); ++r) {
    const auto& row = doc.rows[r];
    if (row.fields.size() != header.size()) {
      assembler.reject(row.line, "expected " + std::to_string(header.size()) + " fields, found " +
                                     std::to_string(row.fields.size()));
      continue;
    }
    RawRow raw;
    raw.pair_id = cell(row, "pair_id");
    raw.english = cell(row, "english");
    raw.hindi = cell(row, "hindi");
    raw.record_id = cell(row, "record_id");
    raw.generator = cell(row, "generator");
    raw.synthetic_hinglish = cell(row, "synthetic_hinglish");
    raw.rating1 = cell(row, "rating1");
    raw.rating2 = cell(row, "rating2");
    raw.average_rating = cell(row, "average_rating");
    raw.disagreement = cell(row, "disagreement");
    try {
      raw.human = human_list_from_text(cell(row, "human_hinglish"));
    } catch (const RowError& e) {
      assembler.reject(row.line, e.reason);
      continue;
    }
    assembler.add(row.line, std::move(raw));
  }
  auto parsed = assembler.finish();
  if (doc.unterminated_quote_line != 0) {
    parsed.errors.push_back({doc.unterminated_quote_line, "unterminated quoted field"});
  }
  return parsed;
}

std::string json_scalar_text(const json& obj, const char* key, bool required) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    if (required) throw RowError{std::string("missing field '") + key + "'"};
    return {};
  }
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  throw RowError{std::string("field '") + key + "' must be a string or integer"};
}

ParsedDataset parse_json_dataset(const std::string& text, const std::filesystem::path& path) {
  json doc = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_array()) {
    throw Error(ErrorKind::MalformedRow, path.string() + ": top level must be a JSON array");
  }
  Assembler assembler;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& obj = doc[i];
    const std::size_t position = i + 1;
    RawRow raw;
    try {
      if (!obj.is_object()) throw RowError{"array element is not an object"};
      raw.pair_id = json_scalar_text(obj, "pair_id", true);
      raw.english = json_scalar_text(obj, "english", true);
      raw.hindi = json_scalar_text(obj, "hindi", true);
      const auto human = obj.find("human_hinglish");
      if (human == obj.end()) throw RowError{"missing field 'human_hinglish'"};
      raw.human = human->is_string() ? human_list_from_text(human->get<std::string>())
                                     : human_list_from_json(*human);
      raw.record_id = json_scalar_text(obj, "record_id", false);
      raw.generator = json_scalar_text(obj, "generator", false);
      raw.synthetic_hinglish = json_scalar_text(obj, "synthetic_hinglish", false);
      raw.rating1 = json_scalar_text(obj, "rating1", false);
      raw.rating2 = json_scalar_text(obj, "rating2", false);
      raw.average_rating = json_scalar_text(obj, "average_rating", false);
      raw.disagreement = json_scalar_text(obj, "disagreement", false);
    } catch (const RowError& e) {
      assembler.reject(position, e.reason);
      continue;
    }
    assembler.add(position, std::move(raw));
  }
  return assembler.finish();
}

void check_rating(int rating, const char* name) {
  if (rating < kMinRating || rating > kMaxRating) {
    throw Error(ErrorKind::OutOfRange,
                std::string(name) + " = " + std::to_string(rating) + " outside [1,10]");
  }
}

}  // namespace

std::string_view to_string(Generator generator) {
  return generator == Generator::WAC ? "WAC" : "PAC";
}

std::optional<Generator> parse_generator(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (upper == "WAC") return Generator::WAC;
  if (upper == "PAC") return Generator::PAC;
  return std::nullopt;
}

ParsedDataset parse_hinge(const std::filesystem::path& path, DataFormat format) {
  const std::string text = io::read_file(path);
  return format == DataFormat::Json ? parse_json_dataset(text, path) : parse_csv_dataset(text, path);
}

ParsedDataset parse_hinge(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return parse_hinge(path, ext == ".json" ? DataFormat::Json : DataFormat::Csv);
}

int compute_average_rating(int rating1, int rating2) {
  check_rating(rating1, "rating1");
  check_rating(rating2, "rating2");
  return (rating1 + rating2 + 1) / 2;
}

int compute_disagreement(int rating1, int rating2) {
  check_rating(rating1, "rating1");
  check_rating(rating2, "rating2");
  return rating1 > rating2 ? rating1 - rating2 : rating2 - rating1;
}

LabelingResult label_records(std::span<const SyntheticRecord> synthetic) {
  LabelingResult result;
  result.records.reserve(synthetic.size());
  for (const auto& rec : synthetic) {
    LabeledRecord labeled{rec, compute_average_rating(rec.rating1, rec.rating2),
                          compute_disagreement(rec.rating1, rec.rating2)};
    if (rec.provided_average_rating && *rec.provided_average_rating != labeled.average_rating) {
      result.mismatches.push_back(
          {rec.record_id, "average_rating", *rec.provided_average_rating, labeled.average_rating});
    }
    if (rec.provided_disagreement && *rec.provided_disagreement != labeled.disagreement) {
      result.mismatches.push_back(
          {rec.record_id, "disagreement", *rec.provided_disagreement, labeled.disagreement});
    }
    result.records.push_back(std::move(labeled));
  }
  return result;
}

DatasetSplit split_dataset(std::span<const LabeledRecord> records, std::uint64_t seed,
                           SplitFractions fractions, Task stratify_on) {
  if (records.empty()) throw Error(ErrorKind::EmptyInput, "cannot split an empty record list");
  const std::array<double, 3> frac{fractions.train, fractions.validation, fractions.test};
  for (const double f : frac) {
    if (!(f >= 0.0) || !std::isfinite(f)) {
      throw Error(ErrorKind::InvalidArgument, "split fractions must be finite and non-negative");
    }
  }
  if (std::abs(frac[0] + frac[1] + frac[2] - 1.0) > 1e-9) {
    throw Error(ErrorKind::InvalidArgument, "split fractions must sum to 1");
  }
  constexpr std::size_t kSplits = 3;

  // Largest-remainder rounding; ties go to the lower split index.
  auto apportion = [&](std::size_t n) {
    std::array<std::size_t, kSplits> counts{};
    std::array<double, kSplits> remainder{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < kSplits; ++i) {
      const double exact = static_cast<double>(n) * frac[i];
      counts[i] = static_cast<std::size_t>(std::floor(exact));
      remainder[i] = exact - static_cast<double>(counts[i]);
      assigned += counts[i];
    }
    std::array<std::size_t, kSplits> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t k = 0; assigned < n; k = (k + 1) % kSplits) {
      if (frac[order[k]] > 0.0) {
        ++counts[order[k]];
        ++assigned;
      }
    }
    return std::pair{counts, remainder};
  };

  const auto [targets, unused] = apportion(records.size());
  (void)unused;

  std::map<int, std::vector<std::size_t>> classes;
  for (std::size_t i = 0; i < records.size(); ++i) {
    classes[records[i].label(stratify_on)].push_back(i);
  }

  std::mt19937_64 rng(seed);
  struct ClassPlan {
    std::vector<std::size_t> members;
    std::array<std::size_t, kSplits> quota{};
    std::array<double, kSplits> remainder{};
  };
  std::vector<ClassPlan> plans;
  std::array<std::size_t, kSplits> floors{};
  for (auto& [label, members] : classes) {
    ClassPlan plan;
    plan.members = members;
    seeded_shuffle(plan.members, rng);
    for (std::size_t i = 0; i < kSplits; ++i) {
      const double exact = static_cast<double>(plan.members.size()) * frac[i];
      plan.quota[i] = static_cast<std::size_t>(std::floor(exact));
      plan.remainder[i] = exact - static_cast<double>(plan.quota[i]);
      floors[i] += plan.quota[i];
    }
    plans.push_back(std::move(plan));
  }

  std::array<std::size_t, kSplits> deficit{};
  for (std::size_t i = 0; i < kSplits; ++i) deficit[i] = targets[i] - floors[i];
  auto leftover = [](const ClassPlan& p) {
    return p.members.size() - (p.quota[0] + p.quota[1] + p.quota[2]);
  };

  // Hand out the rounding leftovers cell by cell, largest remainder first.
  struct Cell {
    double remainder;
    std::size_t plan;
    std::size_t split;
  };
  std::vector<Cell> cells;
  for (std::size_t c = 0; c < plans.size(); ++c) {
    for (std::size_t i = 0; i < kSplits; ++i) {
      if (frac[i] > 0.0) cells.push_back({plans[c].remainder[i], c, i});
    }
  }
  std::stable_sort(cells.begin(), cells.end(),
                   [](const Cell& a, const Cell& b) { return a.remainder > b.remainder; });
  for (const auto& cell : cells) {
    auto& plan = plans[cell.plan];
    if (leftover(plan) > 0 && deficit[cell.split] > 0) {
      ++plan.quota[cell.split];
      --deficit[cell.split];
    }
  }
  for (auto& plan : plans) {
    for (std::size_t i = 0; i < kSplits && leftover(plan) > 0; ++i) {
      while (leftover(plan) > 0 && deficit[i] > 0) {
        ++plan.quota[i];
        --deficit[i];
      }
    }
  }

  // Presence rule: classes with >= 3 members appear in every positive split.
  auto needs_presence = [](const ClassPlan& p) { return p.members.size() >= 3; };
  for (std::size_t c = 0; c < plans.size(); ++c) {
    auto& plan = plans[c];
    if (!needs_presence(plan)) continue;
    for (std::size_t i = 0; i < kSplits; ++i) {
      if (frac[i] <= 0.0 || plan.quota[i] > 0) continue;
      const auto donor = static_cast<std::size_t>(
          std::max_element(plan.quota.begin(), plan.quota.end()) - plan.quota.begin());
      if (plan.quota[donor] < 2) continue;
      --plan.quota[donor];
      ++plan.quota[i];
      // Restore global sizes by moving one member of another class back.
      for (std::size_t o = 0; o < plans.size(); ++o) {
        if (o == c) continue;
        auto& other = plans[o];
        const std::size_t floor_needed = needs_presence(other) ? 2 : 1;
        if (other.quota[i] >= floor_needed) {
          --other.quota[i];
          ++other.quota[donor];
          break;
        }
      }
    }
  }

  std::array<std::vector<std::size_t>, kSplits> picked;
  for (const auto& plan : plans) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < kSplits; ++i) {
      for (std::size_t k = 0; k < plan.quota[i]; ++k) picked[i].push_back(plan.members[pos++]);
    }
  }

  DatasetSplit split;
  split.seed = seed;
  split.fractions = fractions;
  std::array<std::vector<LabeledRecord>*, kSplits> outputs{&split.train, &split.validation,
                                                           &split.test};
  for (std::size_t i = 0; i < kSplits; ++i) {
    std::sort(picked[i].begin(), picked[i].end());
    outputs[i]->reserve(picked[i].size());
    for (const auto idx : picked[i]) outputs[i]->push_back(records[idx]);
  }
  return split;
}

ValidationReport validate_dataset(std::span<const SentencePairRecord> pairs,
                                  std::span<const SyntheticRecord> synthetic) {
  ValidationReport report;
  report.pair_count = pairs.size();
  report.synthetic_count = synthetic.size();

  std::unordered_set<std::string> pair_ids;
  for (const auto& pair : pairs) {
    report.human_sentence_count += pair.human_hinglish.size();
    if (!pair_ids.insert(pair.pair_id).second) {
      report.violations.push_back({"duplicate_pair_id", pair.pair_id, "pair_id appears more than once"});
    }
    if (pair.human_hinglish.size() < 2) {
      report.violations.push_back({"too_few_references", pair.pair_id,
                                   "fewer than 2 references (" +
                                       std::to_string(pair.human_hinglish.size()) + ")"});
    }
    if (trim(pair.english_text).empty()) {
      report.violations.push_back({"empty_english", pair.pair_id, "english text is empty"});
    }
    if (trim(pair.hindi_text).empty()) {
      report.violations.push_back({"empty_hindi", pair.pair_id, "hindi text is empty"});
    }
  }

  std::unordered_set<std::string> record_ids;
  for (const auto& rec : synthetic) {
    (rec.generator == Generator::WAC ? report.wac_count : report.pac_count) += 1;
    if (!record_ids.insert(rec.record_id).second) {
      report.violations.push_back({"duplicate_record_id", rec.record_id, "record_id appears more than once"});
    }
    if (!pair_ids.contains(rec.pair_id)) {
      report.violations.push_back(
          {"unresolved_pair_id", rec.record_id, "pair_id '" + rec.pair_id + "' has no pair record"});
    }
    const bool in_range = rec.rating1 >= kMinRating && rec.rating1 <= kMaxRating &&
                          rec.rating2 >= kMinRating && rec.rating2 <= kMaxRating;
    if (!in_range) {
      report.violations.push_back({"rating_out_of_range", rec.record_id,
                                   "ratings (" + std::to_string(rec.rating1) + ", " +
                                       std::to_string(rec.rating2) + ") outside [1,10]"});
      continue;
    }
    if (rec.provided_average_rating) {
      ++report.average_rating_checked;
      const int recomputed = compute_average_rating(rec.rating1, rec.rating2);
      if (recomputed != *rec.provided_average_rating) {
        ++report.average_rating_mismatches;
        report.label_mismatches.push_back(
            {rec.record_id, "average_rating", *rec.provided_average_rating, recomputed});
      }
    }
    if (rec.provided_disagreement) {
      ++report.disagreement_checked;
      const int recomputed = compute_disagreement(rec.rating1, rec.rating2);
      if (recomputed != *rec.provided_disagreement) {
        ++report.disagreement_mismatches;
        report.label_mismatches.push_back(
            {rec.record_id, "disagreement", *rec.provided_disagreement, recomputed});
      }
    }
  }
  return report;
}

ValidationReport validate_dataset(const ParsedDataset& parsed) {
  auto report = validate_dataset(parsed.pairs, parsed.synthetic);
  report.malformed_rows = parsed.errors;
  return report;
}

nlohmann::json ValidationReport::to_json() const {
  json violations_json = json::array();
  for (const auto& v : violations) {
    violations_json.push_back({{"kind", v.kind}, {"id", v.id}, {"message", v.message}});
  }
  json malformed_json = json::array();
  for (const auto& m : malformed_rows) {
    malformed_json.push_back({{"line", m.line}, {"reason", m.reason}});
  }
  json mismatch_json = json::array();
  for (const auto& m : label_mismatches) {
    mismatch_json.push_back({{"record_id", m.record_id},
                             {"field", m.field},
                             {"provided", m.provided},
                             {"recomputed", m.recomputed}});
  }
  return json{
      {"pair_count", pair_count},
      {"human_sentence_count", human_sentence_count},
      {"synthetic_count", synthetic_count},
      {"generator_counts", {{"WAC", wac_count}, {"PAC", pac_count}}},
      {"violation_count", violations.size()},
      {"violations", violations_json},
      {"malformed_row_count", malformed_rows.size()},
      {"malformed_rows", malformed_json},
      {"label_audit",
       {{"average_rating_checked", average_rating_checked},
        {"average_rating_mismatches", average_rating_mismatches},
        {"disagreement_checked", disagreement_checked},
        {"disagreement_mismatches", disagreement_mismatches},
        {"mismatches", mismatch_json}}},
  };
}

}  // namespace cmxqe
