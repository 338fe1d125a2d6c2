#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmxqe/dataset.hpp"
#include "cmxqe/io.hpp"
#include "support/test_support.hpp"

using namespace cmxqe;
using cmxqe::testing::error_kind_of;
using cmxqe::testing::ScratchDir;

namespace {

const std::filesystem::path kSmall = std::filesystem::path(CMXQE_TEST_DATA) / "small.csv";

const std::string kHeader =
    "pair_id,english,hindi,human_hinglish,record_id,generator,synthetic_hinglish,rating1,rating2\n";

ParsedDataset parse_text(const std::string& text, const std::string& name = "in.csv") {
  ScratchDir dir("ds");
  io::write_file(dir / name, text);
  return parse_hinge(dir / name);
}

std::vector<LabeledRecord> labeled_with(const std::vector<int>& average_ratings) {
  std::vector<LabeledRecord> out;
  for (std::size_t i = 0; i < average_ratings.size(); ++i) {
    LabeledRecord r;
    r.record.record_id = "r" + std::to_string(i);
    r.record.rating1 = r.record.rating2 = average_ratings[i];
    r.average_rating = average_ratings[i];
    out.push_back(r);
  }
  return out;
}

std::vector<std::string> ids(const std::vector<LabeledRecord>& records) {
  std::vector<std::string> out;
  for (const auto& r : records) out.push_back(r.record.record_id);
  return out;
}

// Every per-class, per-split count table reachable by assigning each record to
// a split, keeping only tables where each count is the floor or ceiling of its
// exact share, each split size is the floor or ceiling of its share, and every
// class with three or more members reaches every split with a positive fraction.
std::set<std::vector<std::size_t>> feasible_count_tables(const std::vector<int>& labels,
                                                         const SplitFractions& f) {
  const double frac[3] = {f.train, f.validation, f.test};
  std::map<int, std::size_t> class_size;
  for (int l : labels) ++class_size[l];
  std::vector<int> classes;
  for (auto& [c, n] : class_size) classes.push_back(c);

  std::set<std::vector<std::size_t>> out;
  const std::size_t n = labels.size();
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= 3;
  for (std::size_t code = 0; code < total; ++code) {
    std::vector<std::size_t> table(classes.size() * 3, 0);
    std::size_t sizes[3] = {0, 0, 0};
    std::size_t rest = code;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t split = rest % 3;
      rest /= 3;
      const auto c = std::find(classes.begin(), classes.end(), labels[i]) - classes.begin();
      ++table[static_cast<std::size_t>(c) * 3 + split];
      ++sizes[split];
    }
    bool ok = true;
    for (std::size_t s = 0; s < 3 && ok; ++s) ok = std::abs(static_cast<double>(sizes[s]) - frac[s] * n) < 1.0;
    for (std::size_t c = 0; c < classes.size() && ok; ++c) {
      const double members = static_cast<double>(class_size[classes[c]]);
      for (std::size_t s = 0; s < 3 && ok; ++s) {
        ok = std::abs(static_cast<double>(table[c * 3 + s]) - frac[s] * members) < 1.0;
        if (ok && members >= 3 && frac[s] > 0) ok = table[c * 3 + s] > 0;
      }
    }
    if (ok) out.insert(table);
  }
  return out;
}

std::vector<std::size_t> count_table(const DatasetSplit& split, const std::vector<int>& labels) {
  std::set<int> distinct(labels.begin(), labels.end());
  std::vector<int> classes(distinct.begin(), distinct.end());
  std::vector<std::size_t> table(classes.size() * 3, 0);
  const std::vector<LabeledRecord>* parts[3] = {&split.train, &split.validation, &split.test};
  for (std::size_t s = 0; s < 3; ++s)
    for (const auto& r : *parts[s]) {
      const auto c = std::find(classes.begin(), classes.end(), r.average_rating) - classes.begin();
      ++table[static_cast<std::size_t>(c) * 3 + s];
    }
  return table;
}

}  // namespace

TEST_CASE("parse the bundled csv") {
  const auto parsed = parse_hinge(kSmall);
  CHECK(parsed.errors.empty());
  REQUIRE(parsed.pairs.size() == 3);
  REQUIRE(parsed.synthetic.size() == 4);

  const auto& first = parsed.synthetic[0];
  CHECK(first.record_id == "r1");
  CHECK(first.pair_id == "p1");
  CHECK(first.generator == Generator::WAC);
  CHECK(first.rating1 == 7);
  CHECK(first.rating2 == 4);
  CHECK(first.provided_average_rating == 6);
  CHECK(first.provided_disagreement == 3);
  CHECK(parsed.synthetic[1].generator == Generator::PAC);
  CHECK(parsed.synthetic[1].rating1 == 9);
  CHECK(parsed.synthetic[1].rating2 == 7);

  const auto& p1 = parsed.pairs[0];
  CHECK(p1.english_text == "The reward of goodness shall be nothing but goodness");
  CHECK(p1.hindi_text == "अच्छाई का बदला अच्छाई के अलावा और क्या हो सकता है?");
  REQUIRE(p1.human_hinglish.size() == 3);
  CHECK(p1.human_hinglish[1] == "Goodness ka badla goodness ke siva aur kya ho sakta hai.");

  const auto again = parse_hinge(kSmall);
  CHECK(again.pairs == parsed.pairs);
  CHECK(again.synthetic == parsed.synthetic);
  CHECK(label_records(again.synthetic).records == label_records(parsed.synthetic).records);
}

TEST_CASE("json input matches csv input") {
  const auto csv = parse_hinge(kSmall);
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& rec : csv.synthetic) {
    const auto& pair = *std::find_if(csv.pairs.begin(), csv.pairs.end(),
                                     [&](const auto& p) { return p.pair_id == rec.pair_id; });
    doc.push_back({{"pair_id", pair.pair_id},
                   {"english", pair.english_text},
                   {"hindi", pair.hindi_text},
                   {"human_hinglish", pair.human_hinglish},
                   {"record_id", rec.record_id},
                   {"generator", std::string(to_string(rec.generator))},
                   {"synthetic_hinglish", rec.hinglish_text},
                   {"rating1", rec.rating1},
                   {"rating2", rec.rating2},
                   {"average_rating", *rec.provided_average_rating},
                   {"disagreement", *rec.provided_disagreement}});
  }
  const auto json = parse_text(doc.dump(2), "in.json");
  CHECK(json.errors.empty());
  CHECK(json.pairs == csv.pairs);
  CHECK(json.synthetic == csv.synthetic);

  // human_hinglish may also arrive as a JSON-encoded string.
  doc[0]["human_hinglish"] = nlohmann::json(csv.pairs[0].human_hinglish).dump();
  CHECK(parse_text(doc.dump(), "in.json").pairs == csv.pairs);

  doc[2]["rating2"] = 0;
  const auto bad = parse_text(doc.dump(), "in.json");
  CHECK(bad.synthetic.size() == 3);
  REQUIRE(bad.errors.size() == 1);
  CHECK(bad.errors[0].line == 3);

  CHECK(error_kind_of([] { parse_text("{\"not\": \"an array\"}", "in.json"); }).has_value());
}

TEST_CASE("header only gives empty lists") {
  const auto parsed = parse_text(kHeader);
  CHECK(parsed.pairs.empty());
  CHECK(parsed.synthetic.empty());
  CHECK(parsed.errors.empty());
}

TEST_CASE("bad rows are skipped and reported") {
  const std::string text = kHeader +
                           "p1,a b,c d,\"[\"\"x\"\",\"\"y\"\"]\",r1,WAC,s t,11,4\n"
                           "p1,a b,c d,\"[\"\"x\"\",\"\"y\"\"]\",r2,WAC,s t,7,4\n"
                           "p1,a b,c d,\"[\"\"x\"\",\"\"y\"\"]\",r3,XYZ,s t,7,4\n"
                           "p1,a b,c d,\"[\"\"x\"\",\"\"y\"\"]\",r4,PAC,s t,seven,4\n"
                           "p1,a b,c d,not json,r5,PAC,s t,7,4\n"
                           "p1,a b,c d,\"[\"\"x\"\",\"\"y\"\"]\",r6,PAC\n"
                           "p1,DIFFERENT,c d,\"[\"\"x\"\",\"\"y\"\"]\",r7,PAC,s t,7,4\n"
                           "p1,a b,c d,\"[\"\"x\"\",\"\"y\"\"]\",r8,PAC,s t,0,4\n";
  const auto parsed = parse_text(text);
  REQUIRE(parsed.synthetic.size() == 1);
  CHECK(parsed.synthetic[0].record_id == "r2");
  REQUIRE(parsed.errors.size() == 7);
  std::vector<std::size_t> lines;
  for (const auto& e : parsed.errors) lines.push_back(e.line);
  std::sort(lines.begin(), lines.end());
  CHECK(lines == std::vector<std::size_t>{2, 4, 5, 6, 7, 8, 9});
}

TEST_CASE("header and file errors") {
  CHECK(error_kind_of([] { parse_text("pair_id,english\np1,x\n"); }) == ErrorKind::MalformedRow);
  CHECK(error_kind_of([] { parse_text(""); }) == ErrorKind::MalformedRow);
  CHECK(error_kind_of([] { parse_hinge("/nonexistent/dir/hinge.csv"); }) == ErrorKind::UnreadableFile);
}

TEST_CASE("text is kept except for trailing whitespace") {
  const std::string text = kHeader +
                           "p1,  lead and trail   ,\"multi\nline\",\"[\"\"x \"\",\"\" y\"\"]\",r1,PAC,\"tab\t\",5,6\n"
                           "p2,e,h,\"[\"\"a\"\",\"\"b\"\"]\",r2,WAC,z,1,10\n";
  const auto parsed = parse_text(text);
  REQUIRE(parsed.errors.empty());
  REQUIRE(parsed.pairs.size() == 2);
  CHECK(parsed.pairs[0].english_text == "  lead and trail");
  CHECK(parsed.pairs[0].hindi_text == "multi\nline");
  CHECK(parsed.synthetic[0].hinglish_text == "tab");
  CHECK(parsed.synthetic[1].rating2 == 10);

  // Line numbers count physical lines; the multi-line field pushes the third row to line 5.
  const auto with_error = parse_text(text + "p3,e,h,\"[\"\"a\"\",\"\"b\"\"]\",r3,WAC,z,1,12\n");
  REQUIRE(with_error.errors.size() == 1);
  CHECK(with_error.errors[0].line == 5);
}

TEST_CASE("pair-only rows") {
  const std::string text = kHeader +
                           "p1,e,h,\"[\"\"a\"\",\"\"b\"\"]\",,,,,\n"
                           "p2,e,h,\"[\"\"a\"\",\"\"b\"\"]\",r1,WAC,z,3,4\n";
  const auto parsed = parse_text(text);
  CHECK(parsed.errors.empty());
  CHECK(parsed.pairs.size() == 2);
  CHECK(parsed.synthetic.size() == 1);
}

TEST_CASE("label rules") {
  CHECK(compute_average_rating(4, 4) == 4);
  CHECK(compute_average_rating(9, 7) == 8);
  CHECK(compute_average_rating(7, 4) == 6);
  CHECK(compute_average_rating(1, 2) == 2);
  CHECK(compute_average_rating(1, 1) == 1);
  CHECK(compute_average_rating(10, 10) == 10);
  CHECK(compute_disagreement(7, 4) == 3);
  CHECK(compute_disagreement(5, 5) == 0);
  CHECK(compute_disagreement(10, 1) == 9);
  CHECK(error_kind_of([] { compute_average_rating(0, 5); }) == ErrorKind::OutOfRange);
  CHECK(error_kind_of([] { compute_average_rating(5, 11); }) == ErrorKind::OutOfRange);
  CHECK(error_kind_of([] { compute_disagreement(11, 5); }) == ErrorKind::OutOfRange);

  for (int a = 1; a <= 10; ++a) {
    for (int b = 1; b <= 10; ++b) {
      CHECK(compute_disagreement(a, b) == compute_disagreement(b, a));
      CHECK(compute_average_rating(a, b) == compute_average_rating(b, a));
      // Half-up on the exact mean: floor((a + b + 1) / 2) as a real number.
      CHECK(compute_average_rating(a, b) == static_cast<int>(std::floor((a + b) / 2.0 + 0.5)));
      CHECK(compute_disagreement(a, b) == std::abs(a - b));
      CHECK(compute_average_rating(a, b) >= 1);
      CHECK(compute_average_rating(a, b) <= 10);
      CHECK(compute_disagreement(a, b) <= 9);
    }
  }
}

TEST_CASE("label_records") {
  CHECK(label_records({}).records.empty());

  const auto parsed = parse_hinge(kSmall);
  const auto result = label_records(parsed.synthetic);
  REQUIRE(result.records.size() == 4);
  CHECK(result.mismatches.empty());
  CHECK(result.records[0].average_rating == 6);
  CHECK(result.records[0].disagreement == 3);
  CHECK(result.records[0].label(Task::Rating) == 6);
  CHECK(result.records[0].label(Task::Disagreement) == 3);
  CHECK(result.records[3].disagreement == 9);
  for (std::size_t i = 0; i < 4; ++i) CHECK(result.records[i].record == parsed.synthetic[i]);

  SyntheticRecord eight;
  eight.record_id = "x";
  eight.rating1 = eight.rating2 = 8;
  eight.provided_average_rating = 7;
  eight.provided_disagreement = 0;
  const auto one = label_records(std::vector<SyntheticRecord>{eight});
  CHECK(one.records[0].average_rating == 8);
  CHECK(one.records[0].disagreement == 0);
  REQUIRE(one.mismatches.size() == 1);
  CHECK(one.mismatches[0].field == "average_rating");
  CHECK(one.mismatches[0].provided == 7);
  CHECK(one.mismatches[0].recomputed == 8);
}

TEST_CASE("split sizes and determinism") {
  std::vector<int> labels;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) labels.push_back(1 + static_cast<int>(rng() % 10));
  const auto records = labeled_with(labels);

  const auto a = split_dataset(records, 42, {0.8, 0.0, 0.2}, Task::Rating);
  CHECK(a.train.size() == 80);
  CHECK(a.validation.empty());
  CHECK(a.test.size() == 20);
  const auto b = split_dataset(records, 42, {0.8, 0.0, 0.2}, Task::Rating);
  CHECK(ids(a.train) == ids(b.train));
  CHECK(ids(a.test) == ids(b.test));
  const auto c = split_dataset(records, 43, {0.8, 0.0, 0.2}, Task::Rating);
  CHECK(ids(a.test) != ids(c.test));

  const auto all = split_dataset(records, 42, {1.0, 0.0, 0.0}, Task::Rating);
  CHECK(all.train.size() == 100);
  CHECK(ids(all.train) == ids(records));

  CHECK(error_kind_of([] { split_dataset({}, 1, {}, Task::Rating); }) == ErrorKind::EmptyInput);
  CHECK(error_kind_of([&] { split_dataset(records, 1, {0.5, 0.1, 0.3}, Task::Rating); }) ==
        ErrorKind::InvalidArgument);
  CHECK(error_kind_of([&] { split_dataset(records, 1, {1.2, -0.2, 0.0}, Task::Rating); }) ==
        ErrorKind::InvalidArgument);
}

TEST_CASE("split matches brute-force stratified assignment") {
  SUBCASE("ten records of one class") {
    const std::vector<int> labels(10, 4);
    const SplitFractions half{0.5, 0.0, 0.5};
    const auto feasible = feasible_count_tables(labels, half);
    REQUIRE(feasible == std::set<std::vector<std::size_t>>{{5, 0, 5}});
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto split = split_dataset(labeled_with(labels), seed, half, Task::Rating);
      CHECK(count_table(split, labels) == std::vector<std::size_t>{5, 0, 5});
    }
  }
  SUBCASE("small mixed inputs") {
    std::mt19937_64 rng(8);
    const SplitFractions options[] = {{0.5, 0.0, 0.5}, {0.7, 0.0, 0.3}, {0.6, 0.2, 0.2}};
    int compared = 0;
    for (int trial = 0; trial < 40; ++trial) {
      const std::size_t n = 6 + rng() % 4;
      std::vector<int> labels(n);
      for (auto& l : labels) l = 1 + static_cast<int>(rng() % 3);
      const auto& fractions = options[trial % 3];
      const auto feasible = feasible_count_tables(labels, fractions);
      if (feasible.empty()) continue;
      ++compared;
      const auto split = split_dataset(labeled_with(labels), rng(), fractions, Task::Rating);
      CAPTURE(trial);
      CHECK(feasible.contains(count_table(split, labels)));
    }
    CHECK(compared > 10);
  }
}

TEST_CASE("split properties") {
  std::mt19937_64 rng(99);
  const SplitFractions options[] = {{0.8, 0.0, 0.2}, {0.6, 0.2, 0.2}, {0.34, 0.33, 0.33}, {0.9, 0.1, 0.0}};
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 1 + rng() % 300;
    const Task task = trial % 2 ? Task::Rating : Task::Disagreement;
    std::vector<LabeledRecord> records;
    for (std::size_t i = 0; i < n; ++i) {
      SyntheticRecord rec;
      rec.record_id = "r" + std::to_string(i);
      // Skewed labels, like real ratings.
      rec.rating1 = 1 + static_cast<int>(std::min<std::uint64_t>(rng() % 12, 9));
      rec.rating2 = 1 + static_cast<int>(rng() % 10);
      records.push_back(label_records(std::vector<SyntheticRecord>{rec}).records[0]);
    }
    const auto& fractions = options[trial % 4];
    const auto split = split_dataset(records, rng(), fractions, task);
    CAPTURE(trial);

    std::vector<std::string> joined;
    for (const auto* part : {&split.train, &split.validation, &split.test}) {
      const auto part_ids = ids(*part);
      // Each split keeps input order.
      std::vector<std::size_t> positions;
      for (const auto& id : part_ids) positions.push_back(std::stoul(id.substr(1)));
      CHECK(std::is_sorted(positions.begin(), positions.end()));
      joined.insert(joined.end(), part_ids.begin(), part_ids.end());
    }
    auto sorted = joined;
    std::sort(sorted.begin(), sorted.end());
    auto expected = ids(records);
    std::sort(expected.begin(), expected.end());
    CHECK(sorted == expected);

    std::map<int, std::size_t> class_size;
    for (const auto& r : records) ++class_size[r.label(task)];
    const double frac[3] = {fractions.train, fractions.validation, fractions.test};
    const std::vector<LabeledRecord>* parts[3] = {&split.train, &split.validation, &split.test};
    for (std::size_t s = 0; s < 3; ++s) {
      if (frac[s] == 0.0) {
        CHECK(parts[s]->empty());
        continue;
      }
      std::set<int> present;
      for (const auto& r : *parts[s]) present.insert(r.label(task));
      for (const auto& [label, size] : class_size)
        if (size >= 3) CHECK(present.contains(label));
    }
  }
}

TEST_CASE("validation report") {
  SUBCASE("bundled file is clean") {
    const auto report = validate_dataset(parse_hinge(kSmall));
    CHECK(report.clean());
    CHECK(report.pair_count == 3);
    CHECK(report.human_sentence_count == 7);
    CHECK(report.synthetic_count == 4);
    CHECK(report.wac_count == 2);
    CHECK(report.pac_count == 2);
    CHECK(report.average_rating_checked == 4);
    CHECK(report.average_rating_mismatches == 0);
    const auto doc = report.to_json();
    CHECK(doc["pair_count"] == 3);
    CHECK(doc["violation_count"] == 0);
  }
  SUBCASE("empty dataset") {
    const auto report = validate_dataset({}, {});
    CHECK(report.clean());
    CHECK(report.pair_count == 0);
    CHECK(report.human_sentence_count == 0);
    CHECK(report.synthetic_count == 0);
  }
  SUBCASE("violations") {
    SentencePairRecord lonely{"p1", "e", "h", {"only one"}};
    SentencePairRecord blank{"p2", "  ", "h", {"a", "b"}};
    SyntheticRecord orphan;
    orphan.record_id = "r1";
    orphan.pair_id = "missing";
    orphan.rating1 = orphan.rating2 = 5;
    SyntheticRecord dup = orphan;
    dup.pair_id = "p1";
    const std::vector<SentencePairRecord> pairs{lonely, blank};
    const std::vector<SyntheticRecord> synthetic{orphan, dup};
    const auto report = validate_dataset(pairs, synthetic);
    CHECK_FALSE(report.clean());
    std::multiset<std::string> kinds;
    for (const auto& v : report.violations) kinds.insert(v.kind);
    CHECK(kinds == std::multiset<std::string>{"too_few_references", "empty_english", "unresolved_pair_id",
                                              "duplicate_record_id"});
    const auto it = std::find_if(report.violations.begin(), report.violations.end(),
                                 [](const Violation& v) { return v.kind == "too_few_references"; });
    CHECK(it->id == "p1");
    CHECK(it->message.find("fewer than 2 references") != std::string::npos);
  }
  SUBCASE("full-size synthetic corpus") {
    ScratchDir dir("full");
    const auto fx = cmxqe::testing::make_fixture({1976, 6694, 2766, 5});
    const auto parsed = parse_hinge(cmxqe::testing::write_fixture(fx, dir / "hinge.csv"));
    const auto report = validate_dataset(parsed);
    CHECK(report.clean());
    CHECK(report.pair_count == 1976);
    CHECK(report.human_sentence_count == 6694);
    CHECK(report.synthetic_count == 2766);
    CHECK(report.wac_count + report.pac_count == 2766);
    CHECK(report.average_rating_mismatches == 0);
  }
}
