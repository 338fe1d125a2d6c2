#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmxqe/fusion.hpp"
#include "cmxqe/io.hpp"
#include "cmxqe/pipeline.hpp"
#include "support/test_support.hpp"

using namespace cmxqe;
using cmxqe::testing::error_kind_of;
using cmxqe::testing::ScratchDir;
namespace fs = std::filesystem;

namespace {

const fs::path kSmall = fs::path(CMXQE_TEST_DATA) / "small.csv";

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string quote(const std::string& s) { return "'" + s + "'"; }

CliResult run_cli(const ScratchDir& dir, const std::vector<std::string>& args) {
  std::string command = quote(CMXQE_CLI);
  for (const auto& a : args) command += " " + quote(a);
  const auto out_path = dir / "cli.stdout";
  const auto err_path = dir / "cli.stderr";
  command += " > " + quote(out_path.string()) + " 2> " + quote(err_path.string());
  const int status = std::system(command.c_str());
  CliResult result;
  result.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = io::read_file(out_path);
  result.err = io::read_file(err_path);
  return result;
}

std::size_t count_lines(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

const char* kEmbedFiles[] = {pipeline::kSynEnFile, pipeline::kSynHiFile, pipeline::kHumEnFile, pipeline::kHumHiFile};

}  // namespace

TEST_CASE("validate exit codes") {
  ScratchDir dir("cli-validate");
  const auto ok = run_cli(dir, {"validate", "--dataset", kSmall.string()});
  CHECK(ok.code == 0);
  const auto report = nlohmann::json::parse(ok.out);
  CHECK(report["pair_count"] == 3);
  CHECK(report["human_sentence_count"] == 7);
  CHECK(report["synthetic_count"] == 4);

  auto text = io::read_file(kSmall);
  const std::string two_refs = R"("[""Please door band karo"",""Kripya door close karein""]")";
  const std::string one_ref = R"("[""Please door band karo""]")";
  text.replace(text.find(two_refs), two_refs.size(), one_ref);
  io::write_file(dir / "one_ref.csv", text);
  const auto findings = run_cli(dir, {"validate", "--dataset", (dir / "one_ref.csv").string()});
  CHECK(findings.code == 1);
  const auto doc = nlohmann::json::parse(findings.out);
  REQUIRE(doc["violations"].size() == 1);
  CHECK(doc["violations"][0]["id"] == "p3");
  CHECK(doc["violations"][0]["message"].get<std::string>().find("fewer than 2 references") != std::string::npos);

  CHECK(run_cli(dir, {"validate", "--dataset", (dir / "absent.csv").string()}).code == 2);
  CHECK(run_cli(dir, {"validate"}).code == 2);
  CHECK(run_cli(dir, {"no-such-command"}).code == 2);
}

TEST_CASE("embed is reproducible") {
  ScratchDir dir("cli-embed");
  const auto a = run_cli(dir, {"embed", "--dataset", kSmall.string(), "--provider", "deterministic:7", "--out-dir",
                               (dir / "a").string()});
  const auto b = run_cli(dir, {"embed", "--dataset", kSmall.string(), "--provider", "deterministic:7", "--out-dir",
                               (dir / "b").string()});
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  for (const char* file : kEmbedFiles) {
    CAPTURE(file);
    CHECK(io::read_file(dir / "a" / file) == io::read_file(dir / "b" / file));
  }
  CHECK(read_clsv(dir / "a" / pipeline::kSynEnFile).size() == 4);
  CHECK(read_clsv(dir / "a" / pipeline::kSynHiFile).size() == 4);
  CHECK(read_clsv(dir / "a" / pipeline::kHumEnFile).size() == 7);
  CHECK(read_clsv(dir / "a" / pipeline::kHumHiFile).size() == 7);
  CHECK(read_clsv(dir / "a" / pipeline::kHumHiFile).contains("hum:p1:2:hi"));

  // A files provider pointed at the output reproduces it.
  REQUIRE(run_cli(dir, {"embed", "--dataset", kSmall.string(), "--provider", "files:" + (dir / "a").string(),
                        "--out-dir", (dir / "c").string()})
              .code == 0);
  for (const char* file : kEmbedFiles) CHECK(io::read_file(dir / "a" / file) == io::read_file(dir / "c" / file));

  const auto c = run_cli(dir, {"embed", "--dataset", kSmall.string(), "--provider", "deterministic:8", "--out-dir",
                               (dir / "d").string()});
  REQUIRE(c.code == 0);
  CHECK(io::read_file(dir / "a" / pipeline::kSynEnFile) != io::read_file(dir / "d" / pipeline::kSynEnFile));

  CHECK(run_cli(dir, {"embed", "--dataset", kSmall.string(), "--provider", "bogus", "--out-dir", (dir / "e").string()})
            .code == 2);
}

TEST_CASE("fuse writes aligned slices") {
  ScratchDir dir("fuse");
  std::ostringstream sink;
  pipeline::cmd_embed(kSmall, pipeline::ProviderSpec::parse("deterministic:3"), dir / "emb", sink);
  const auto cli = run_cli(dir, {"fuse", "--dataset", kSmall.string(), "--embeddings", (dir / "emb").string(),
                                 "--task", "rating", "--out", (dir / "m.clsv").string()});
  REQUIRE(cli.code == 0);
  CHECK(nlohmann::json::parse(cli.out)["rows"] == 4);

  const auto m = read_feature_matrix(dir / "m.clsv");
  CHECK(m.task == Task::Rating);
  CHECK(m.record_ids == std::vector<std::string>{"r1", "r2", "r3", "r4"});
  CHECK(m.natural_labels() == std::vector<int>{6, 8, 5, 6});
  const auto syn_en = read_clsv(dir / "emb" / pipeline::kSynEnFile);
  const auto syn_hi = read_clsv(dir / "emb" / pipeline::kSynHiFile);
  const auto hum_en = read_clsv(dir / "emb" / pipeline::kHumEnFile);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto row = m.row(i);
    const auto se = syn_en.at("syn:" + m.record_ids[i] + ":en");
    const auto sh = syn_hi.at("syn:" + m.record_ids[i] + ":hi");
    CHECK(std::equal(se.begin(), se.end(), row.begin()));
    CHECK(std::equal(sh.begin(), sh.end(), row.begin() + kClsDim));
  }
  // r3 belongs to p2, which has two references.
  const auto h0 = hum_en.at("hum:p2:0:en");
  const auto h1 = hum_en.at("hum:p2:1:en");
  const auto r3 = m.row(2);
  for (std::size_t d = 0; d < kClsDim; ++d)
    CHECK(r3[2 * kClsDim + d] == static_cast<float>((static_cast<double>(h0[d]) + h1[d]) / 2));

  SUBCASE("splits partition the rows") {
    pipeline::FuseOptions train{pipeline::SplitSelector::Train, 42, {0.5, 0.0, 0.5}};
    pipeline::FuseOptions test = train;
    test.split = pipeline::SplitSelector::Test;
    pipeline::cmd_fuse(kSmall, dir / "emb", Task::Disagreement, dir / "train.clsv", train, sink);
    pipeline::cmd_fuse(kSmall, dir / "emb", Task::Disagreement, dir / "test.clsv", test, sink);
    auto ids = read_feature_matrix(dir / "train.clsv").record_ids;
    const auto test_ids = read_feature_matrix(dir / "test.clsv").record_ids;
    CHECK(ids.size() == 2);
    ids.insert(ids.end(), test_ids.begin(), test_ids.end());
    std::sort(ids.begin(), ids.end());
    CHECK(ids == std::vector<std::string>{"r1", "r2", "r3", "r4"});
  }
  SUBCASE("empty dataset") {
    const auto text = io::read_file(kSmall);
    io::write_file(dir / "empty.csv", text.substr(0, text.find('\n') + 1));
    CHECK(error_kind_of([&] {
            pipeline::cmd_fuse(dir / "empty.csv", dir / "emb", Task::Rating, dir / "e.clsv", {}, sink);
          }) == ErrorKind::EmptyDataset);
    CHECK(run_cli(dir, {"fuse", "--dataset", (dir / "empty.csv").string(), "--embeddings", (dir / "emb").string(),
                        "--task", "rating", "--out", (dir / "e.clsv").string()})
              .code == 2);
  }
  SUBCASE("missing vectors") {
    fs::remove(dir / "emb" / pipeline::kHumHiFile);
    CHECK(error_kind_of([&] {
            pipeline::cmd_fuse(kSmall, dir / "emb", Task::Rating, dir / "x.clsv", {}, sink);
          }) == ErrorKind::UnreadableFile);
    EmbeddingStore partial(kClsDim);
    partial.insert("hum:p1:0:hi", std::vector<float>(kClsDim, 0.5f));
    write_clsv(partial, dir / "emb" / pipeline::kHumHiFile);
    try {
      pipeline::cmd_fuse(kSmall, dir / "emb", Task::Rating, dir / "x.clsv", {}, sink);
      FAIL("expected MissingKey");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::MissingKey);
      CHECK(std::string(e.what()).find("hum:p2:*:hi") != std::string::npos);
      CHECK(std::string(e.what()).find("hum:p3:*:hi") != std::string::npos);
    }
  }
}

TEST_CASE("train, predict and evaluate through the cli") {
  ScratchDir dir("cli-train");
  std::ostringstream sink;
  pipeline::cmd_embed(kSmall, pipeline::ProviderSpec::parse("deterministic:1"), dir / "emb", sink);
  for (const char* task : {"rating", "disagreement"}) {
    const auto out = (dir / (std::string(task) + ".clsv")).string();
    REQUIRE(run_cli(dir, {"fuse", "--dataset", kSmall.string(), "--embeddings", (dir / "emb").string(), "--task",
                          task, "--out", out})
                .code == 0);
  }

  const auto rating = run_cli(dir, {"train", "--matrix", (dir / "rating.clsv").string(), "--task", "rating", "--out",
                                    (dir / "rating.mlpc").string(), "--seed", "5"});
  REQUIRE(rating.code == 0);
  const auto trace = io::read_file(pipeline::trace_path_for(dir / "rating.mlpc"));
  CHECK(trace.rfind("epoch,mean_loss\n", 0) == 0);
  CHECK(count_lines(trace) == 1 + 3);
  CHECK(nlohmann::json::parse(rating.out)["epochs"] == 3);

  const auto dis = run_cli(dir, {"train", "--matrix", (dir / "disagreement.clsv").string(), "--task",
                                 "disagreement", "--out", (dir / "dis.mlpc").string()});
  REQUIRE(dis.code == 0);
  CHECK(count_lines(io::read_file(pipeline::trace_path_for(dir / "dis.mlpc"))) == 1 + 10);

  REQUIRE(run_cli(dir, {"train", "--matrix", (dir / "rating.clsv").string(), "--task", "rating", "--out",
                        (dir / "again.mlpc").string(), "--seed", "5"})
              .code == 0);
  CHECK(io::read_file(dir / "rating.mlpc") == io::read_file(dir / "again.mlpc"));

  CHECK(run_cli(dir, {"train", "--matrix", (dir / "rating.clsv").string(), "--task", "disagreement", "--out",
                      (dir / "wrong.mlpc").string()})
            .code == 2);
  CHECK(run_cli(dir, {"train", "--matrix", (dir / "rating.clsv").string(), "--task", "bogus", "--out",
                      (dir / "wrong.mlpc").string()})
            .code == 2);

  const auto predicted = run_cli(dir, {"predict", "--checkpoint", (dir / "rating.mlpc").string(), "--matrix",
                                       (dir / "rating.clsv").string(), "--out", (dir / "pred.json").string()});
  REQUIRE(predicted.code == 0);
  const auto preds = read_label_file(dir / "pred.json");
  CHECK(preds.row_order == std::vector<std::string>{"r1", "r2", "r3", "r4"});
  for (int label : preds.labels) {
    CHECK(label >= 1);
    CHECK(label <= 10);
  }

  const auto evaluated = run_cli(dir, {"evaluate", "--checkpoint", (dir / "rating.mlpc").string(), "--matrix",
                                       (dir / "rating.clsv").string(), "--gold", (dir / "pred.json").string()});
  REQUIRE(evaluated.code == 0);
  const auto report = nlohmann::json::parse(evaluated.out);
  CHECK(report["f1_micro"] == 1.0);
  CHECK(report["mse"] == 0.0);
  CHECK(report["n"] == 4);
  CHECK(evaluated.out.find("\"mse\": 0.000000") != std::string::npos);

  auto short_gold = preds;
  short_gold.row_order.pop_back();
  short_gold.labels.pop_back();
  write_label_file(short_gold, dir / "short.json");
  CHECK(run_cli(dir, {"evaluate", "--checkpoint", (dir / "rating.mlpc").string(), "--matrix",
                      (dir / "rating.clsv").string(), "--gold", (dir / "short.json").string()})
            .code == 2);

  auto corrupt = io::read_file(dir / "rating.mlpc");
  corrupt[16] = static_cast<char>(corrupt[16] + 1);
  io::write_file(dir / "corrupt.mlpc", corrupt);
  CHECK(run_cli(dir, {"evaluate", "--checkpoint", (dir / "corrupt.mlpc").string(), "--matrix",
                      (dir / "rating.clsv").string()})
            .code == 2);
}

TEST_CASE("non-finite training loss exits with the numerical code") {
  ScratchDir dir("nan");
  FeatureMatrix m;
  m.task = Task::Rating;
  for (int i = 0; i < 3; ++i) {
    FusedFeature f{"r" + std::to_string(i), std::vector<float>(kFusedDim, i % 2 ? 3e38f : -3e38f)};
    m.push_back(f, i);
  }
  write_feature_matrix(m, dir / "huge.clsv");
  const auto result = run_cli(dir, {"train", "--matrix", (dir / "huge.clsv").string(), "--task", "rating", "--out",
                                    (dir / "m.mlpc").string(), "--epochs", "1"});
  CHECK(result.code == 3);
  CHECK(result.err.find("NonFiniteLoss") != std::string::npos);
}

TEST_CASE("config file") {
  pipeline::PipelineConfig cfg;
  cfg.dataset = "data.csv";
  cfg.out_dir = "out";
  cfg.provider = "deterministic:9";
  cfg.fractions = {0.7, 0.1, 0.2};
  cfg.epochs_rating = 2;
  cfg.learning_rate = 1e-4;
  const auto back = pipeline::PipelineConfig::from_json(nlohmann::json::parse(cfg.to_json().dump()));
  CHECK(back.to_json() == cfg.to_json());
  CHECK(back.train_config(Task::Rating).resolved_epochs() == 2);
  CHECK(back.train_config(Task::Disagreement).resolved_epochs() == 10);
  CHECK(back.train_config(Task::Rating).learning_rate == 1e-4);
  CHECK(error_kind_of([] { pipeline::PipelineConfig::from_json(nlohmann::json::array()); }) ==
        ErrorKind::InvalidArgument);
  CHECK(error_kind_of([] { pipeline::PipelineConfig::from_json({{"seed", "x"}}); }) == ErrorKind::InvalidArgument);

  CHECK(pipeline::ProviderSpec::parse("deterministic:12").to_string() == "deterministic:12");
  CHECK(pipeline::ProviderSpec::parse("files:/tmp/x").to_string() == "files:/tmp/x");
  CHECK(error_kind_of([] { pipeline::ProviderSpec::parse("deterministic:abc"); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("run-all is deterministic and equals the manual stages") {
  ScratchDir dir("runall");
  nlohmann::json cfg{{"dataset", kSmall.string()},
                     {"out_dir", (dir / "one").string()},
                     {"provider", "deterministic:4"},
                     {"fractions", {0.5, 0.0, 0.5}},
                     {"seed", 11},
                     {"epochs_disagreement", 2}};
  io::write_file(dir / "cfg.json", cfg.dump());

  const auto first = run_cli(dir, {"run-all", "--config", (dir / "cfg.json").string()});
  REQUIRE(first.code == 0);
  const auto second =
      run_cli(dir, {"run-all", "--config", (dir / "cfg.json").string(), "--out-dir", (dir / "two").string()});
  REQUIRE(second.code == 0);
  CHECK(first.out == second.out);
  const auto summary = nlohmann::json::parse(first.out);
  CHECK(summary.contains("rating"));
  CHECK(summary.contains("disagreement"));
  CHECK(summary["rating"]["n"] == 2);
  for (const char* task : {"rating", "disagreement"}) {
    for (const char* file : {"model.mlpc", "train.clsv", "test.clsv", "report.json"}) {
      CAPTURE(file);
      CHECK(io::read_file(dir / "one" / task / file) == io::read_file(dir / "two" / task / file));
    }
  }
  CHECK(io::read_file(dir / "one" / "summary.json") == first.out);
  CHECK(count_lines(io::read_file(dir / "one" / "rating" / "model.mlpc.trace.csv")) == 1 + 3);
  CHECK(count_lines(io::read_file(dir / "one" / "disagreement" / "model.mlpc.trace.csv")) == 1 + 2);

  // The same stages by hand.
  const auto manual = dir / "manual";
  REQUIRE(run_cli(dir, {"embed", "--dataset", kSmall.string(), "--provider", "deterministic:4", "--out-dir",
                        (manual / "emb").string()})
              .code == 0);
  for (const char* file : kEmbedFiles)
    CHECK(io::read_file(manual / "emb" / file) == io::read_file(dir / "one" / "embeddings" / file));
  for (const std::string task : {"rating", "disagreement"}) {
    const auto tdir = manual / task;
    for (const std::string split : {"train", "test"}) {
      REQUIRE(run_cli(dir, {"fuse", "--dataset", kSmall.string(), "--embeddings", (manual / "emb").string(), "--task",
                            task, "--split", split, "--split-seed", "42", "--fractions", "0.5", "0", "0.5", "--out",
                            (tdir / (split + ".clsv")).string()})
                  .code == 0);
    }
    std::vector<std::string> train_args{"train", "--matrix", (tdir / "train.clsv").string(), "--task", task,
                                        "--out", (tdir / "model.mlpc").string(), "--seed", "11"};
    if (task == "disagreement") {
      train_args.push_back("--epochs");
      train_args.push_back("2");
    }
    REQUIRE(run_cli(dir, train_args).code == 0);
    CHECK(io::read_file(tdir / "model.mlpc") == io::read_file(dir / "one" / task / "model.mlpc"));
    const auto evaluated = run_cli(dir, {"evaluate", "--checkpoint", (tdir / "model.mlpc").string(), "--matrix",
                                         (tdir / "test.clsv").string()});
    REQUIRE(evaluated.code == 0);
    const auto report = nlohmann::json::parse(evaluated.out);
    for (const char* key : {"n", "f1_micro", "f1_macro", "f1_weighted", "cohens_kappa", "mse"})
      CHECK(report[key].get<double>() == doctest::Approx(summary[task][key].get<double>()).epsilon(1e-6));
  }
}

TEST_CASE("run-all stops at the failing stage") {
  ScratchDir dir("runall-fail");
  std::ostringstream sink;
  pipeline::cmd_embed(kSmall, pipeline::ProviderSpec::parse("deterministic:2"), dir / "vectors", sink);
  fs::remove(dir / "vectors" / pipeline::kHumHiFile);

  pipeline::PipelineConfig cfg;
  cfg.dataset = kSmall;
  cfg.out_dir = dir / "out";
  cfg.provider = "files:" + (dir / "vectors").string();
  try {
    pipeline::cmd_run_all(cfg, sink);
    FAIL("expected MissingKey");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MissingKey);
    CHECK(std::string(e.what()).find("hum_hi.clsv") != std::string::npos);
  }
  CHECK_FALSE(fs::exists(dir / "out" / "rating"));
  CHECK(run_cli(dir, {"run-all", "--dataset", kSmall.string(), "--out-dir", (dir / "out2").string(), "--provider",
                      cfg.provider})
            .code == 2);

  auto text = io::read_file(kSmall);
  text += "p9,e,h,\"[\"\"only\"\"]\",r9,WAC,z,3,4,4,1\n";
  io::write_file(dir / "bad.csv", text);
  const auto findings = run_cli(dir, {"run-all", "--dataset", (dir / "bad.csv").string(), "--out-dir",
                                      (dir / "out3").string()});
  CHECK(findings.code == 1);
  CHECK_FALSE(fs::exists(dir / "out3" / "embeddings"));
}
