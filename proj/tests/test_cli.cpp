#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lmg/cli.hpp"

using namespace lmg;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result lmg_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

const std::vector<std::string> kTinyModel{"--set", "word_embed_dim=8",  "--set", "encoder_hidden=6",
                                          "--set", "decoder_hidden=6",  "--set", "attention_dim=6",
                                          "--set", "char_feature_dim=4", "--set", "char_filter_sizes=2,4",
                                          "--set", "max_decode_len=12"};

class Cli : public ::testing::Test {
protected:
  void SetUp() override {
    setenv("LMG_LOG_LEVEL", "warn", 1);
    dir_ = fs::temp_directory_path() /
           ("lmg_cli_" + std::to_string(::getpid()) + "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string synth(std::size_t routes, const std::string& name = "corpus.jsonl") {
    const auto r = lmg_run({"synth", "--out", path(name), "--routes", std::to_string(routes), "--seed", "4",
                            "--max-sentences", "2", "--max-clauses", "2"});
    EXPECT_EQ(r.code, 0) << r.err;
    return path(name);
  }

  Result train(const std::string& corpus, const std::string& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"train", "--corpus", corpus, "--out", out, "--epochs", "2", "--seed", "9"};
    args.insert(args.end(), kTinyModel.begin(), kTinyModel.end());
    args.insert(args.end(), extra.begin(), extra.end());
    return lmg_run(args);
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, SynthIsDeterministic) {
  const auto a = synth(6, "a.jsonl");
  const auto b = synth(6, "b.jsonl");
  EXPECT_EQ(slurp(a), slurp(b));
  const auto corpus = load_corpus(a);
  EXPECT_EQ(corpus.route_ids().size(), 6u);
}

TEST_F(Cli, GradcheckListsEveryParameterAndPasses) {
  const auto r = lmg_run({"gradcheck"});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
  const LandmarkModel model(ModelConfig::width4(), 1);
  for (const auto& e : model.params().entries()) EXPECT_NE(r.out.find(e.name), std::string::npos) << e.name;
}

TEST_F(Cli, GradcheckWithBrokenBackwardFails) {
  const auto r = lmg_run({"gradcheck", "--break-backward", "lstm_cell"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("FAIL"), std::string::npos);
}

TEST_F(Cli, TrainWritesCheckpointsAndIsReproducible) {
  const auto corpus = synth(10);
  const auto r1 = train(corpus, path("run1"));
  ASSERT_EQ(r1.code, 0) << r1.err;
  for (const char* f : {"epoch_01.ckpt", "epoch_02.ckpt", "final.ckpt", "loss_log.tsv", "config.txt"}) {
    EXPECT_TRUE(fs::exists(dir_ / "run1" / f)) << f;
  }
  EXPECT_EQ(count_lines(dir_ / "run1" / "loss_log.tsv"), 3u);
  const auto cfg = slurp(dir_ / "run1" / "config.txt");
  EXPECT_NE(cfg.find("word_embed_dim = 8"), std::string::npos) << cfg;
  EXPECT_NE(cfg.find("dropout_in = 0.2\n"), std::string::npos) << cfg;

  ASSERT_EQ(train(corpus, path("run2")).code, 0);
  EXPECT_EQ(slurp(dir_ / "run1" / "final.ckpt"), slurp(dir_ / "run2" / "final.ckpt"));
}

TEST_F(Cli, MissingEmbeddingsIsUsageError) {
  const auto corpus = synth(3);
  const auto r = train(corpus, path("run"), {"--embeddings", path("nope.vec")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find(path("nope.vec")), std::string::npos) << r.err;
}

TEST_F(Cli, PredictEvaluateAndExport) {
  const auto corpus = synth(10);
  ASSERT_EQ(train(corpus, path("run")).code, 0);
  const auto p = lmg_run({"predict", "--checkpoint", path("run/final.ckpt"), "--corpus", corpus, "--out", path("pred")});
  ASSERT_EQ(p.code, 0) << p.err;

  const auto gold = load_corpus(corpus);
  EXPECT_EQ(count_lines(dir_ / "pred" / "predictions.jsonl"), gold.size());
  EXPECT_TRUE(fs::exists(dir_ / "pred" / "config.txt"));
  std::size_t expected_dots = gold.size();
  std::map<std::string, int> per_route;
  for (const auto& ins : gold.instructions) {
    ++per_route[ins.route_id];
    EXPECT_TRUE(fs::exists(dir_ / "pred" / "dot" / (cli::sentence_file_stem(ins.route_id, ins.sentence_id) + ".dot")));
  }
  for (const auto& [rid, n] : per_route) {
    if (n > 1) {
      ++expected_dots;
      EXPECT_TRUE(fs::exists(dir_ / "pred" / "dot" / (cli::safe_name(rid) + ".dot"))) << rid;
    }
  }
  std::size_t dots = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "pred" / "dot")) dots += e.path().extension() == ".dot";
  EXPECT_EQ(dots, expected_dots);
  EXPECT_EQ(count_lines(dir_ / "pred" / "graphs.jsonl"), expected_dots);

  const auto e = lmg_run({"evaluate", "--gold", corpus, "--pred", path("pred/predictions.jsonl"), "--out",
                          path("report.json"), "--json"});
  ASSERT_EQ(e.code, 0) << e.err;
  const auto report = nlohmann::json::parse(slurp(dir_ / "report.json"));
  for (const char* key : {"action_accuracy", "goal_accuracy", "spans", "graph_similarity"}) {
    EXPECT_TRUE(report["mean"].contains(key)) << key;
  }
  EXPECT_TRUE(fs::exists(path("report.json.config.txt")));

  const auto x = lmg_run({"export-dot", "--records", path("pred/predictions.jsonl"), "--corpus", corpus, "--out",
                          path("export")});
  ASSERT_EQ(x.code, 0) << x.err;
  for (const auto& ent : fs::directory_iterator(dir_ / "export")) {
    EXPECT_EQ(slurp(ent.path()), slurp(dir_ / "pred" / "dot" / ent.path().filename())) << ent.path();
  }
}

TEST_F(Cli, EvaluatePerfectPredictionsAndEmptyFile) {
  const auto corpus = synth(4);
  {
    std::ofstream out(path("gold_preds.jsonl"));
    for (const auto& ins : load_corpus(corpus).instructions) {
      out << prediction_to_json(PredictionRecord{ins.route_id, ins.sentence_id, *ins.gold_actions, *ins.gold_states,
                                                 false})
                 .dump()
          << "\n";
    }
  }
  const auto r = lmg_run({"evaluate", "--gold", corpus, "--pred", path("gold_preds.jsonl"), "--json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = nlohmann::json::parse(r.out);
  EXPECT_EQ(report["mean"]["action_accuracy"], 1.0);
  EXPECT_EQ(report["mean"]["graph_similarity"]["route"]["sim"], 1.0);
  EXPECT_EQ(report["mean"]["spans"]["step"]["f1"], 1.0);

  const auto text = lmg_run({"evaluate", "--gold", corpus, "--pred", path("gold_preds.jsonl")});
  EXPECT_NE(text.out.find("action accuracy: 100.0"), std::string::npos) << text.out;

  std::ofstream(path("empty.jsonl")).close();
  EXPECT_EQ(lmg_run({"evaluate", "--gold", corpus, "--pred", path("empty.jsonl")}).code, 2);
}

TEST_F(Cli, CheckpointProblemsAreReported) {
  const auto corpus = synth(10);
  ASSERT_EQ(train(corpus, path("run")).code, 0);
  std::vector<std::string> args{"predict", "--checkpoint", path("run/final.ckpt"), "--corpus", corpus, "--out",
                                path("pred"), "--set", "encoder_hidden=7"};
  const auto mismatch = lmg_run(args);
  EXPECT_EQ(mismatch.code, 2);
  EXPECT_NE(mismatch.err.find("enc.fw.W"), std::string::npos) << mismatch.err;
  EXPECT_NE(mismatch.err.find("[28x"), std::string::npos) << mismatch.err;
  EXPECT_NE(mismatch.err.find("[24x"), std::string::npos) << mismatch.err;

  auto bytes = slurp(dir_ / "run" / "final.ckpt");
  bytes[bytes.size() - 5] ^= 0x10;
  std::ofstream(path("bad.ckpt"), std::ios::binary) << bytes;
  const auto corrupt =
      lmg_run({"predict", "--checkpoint", path("bad.ckpt"), "--corpus", corpus, "--out", path("pred2")});
  EXPECT_EQ(corrupt.code, 2);
  EXPECT_NE(corrupt.err.find("hash"), std::string::npos) << corrupt.err;
}

TEST_F(Cli, ExportDotForLongSentence) {
  nlohmann::ordered_json rec;
  rec["route_id"] = "long1";
  rec["sentence_id"] = 0;
  rec["text"] =
      "Go away from the lamp to the intersection of the red brick and wood. Take a left onto the wood. "
      "Position one is one section down at the bench.";
  rec["actions"] = {"f", "l", "f", "STOP"};
  auto row = [](std::initializer_list<std::pair<int, int>> spans) {
    std::vector<int> v(32, 0);
    for (auto [b, e] : spans) {
      for (int i = b; i < e; ++i) v[static_cast<std::size_t>(i)] = 1;
    }
    return v;
  };
  rec["states"] = {row({{3, 5}, {6, 14}}), row({{19, 21}}), row({{29, 31}}), row({})};
  std::ofstream(path("long1.jsonl")) << rec.dump() << "\n";

  const auto a = lmg_run({"export-dot", "--records", path("long1.jsonl"), "--out", path("dot1")});
  ASSERT_EQ(a.code, 0) << a.err;
  const auto dot = slurp(dir_ / "dot1" / "long1_0.dot");
  for (const char* box : {"the lamp", "the intersection of the red brick and wood", "the wood", "the bench"}) {
    EXPECT_NE(dot.find(std::string("label=\"") + box + "\""), std::string::npos) << box << "\n" << dot;
  }
  EXPECT_NE(dot.find("[label=\"l\"]"), std::string::npos);

  ASSERT_EQ(lmg_run({"export-dot", "--records", path("long1.jsonl"), "--out", path("dot1")}).code, 0);
  EXPECT_EQ(slurp(dir_ / "dot1" / "long1_0.dot"), dot);

  std::ofstream(path("empty.jsonl")).close();
  const auto empty = lmg_run({"export-dot", "--records", path("empty.jsonl"), "--out", path("dot2")});
  EXPECT_EQ(empty.code, 0);
  EXPECT_NE(empty.out.find("wrote 0 DOT"), std::string::npos);

  const auto pred = prediction_to_json(PredictionRecord{"ghost", 0, {Action::Stop}, {std::vector<std::uint8_t>(32)}, false});
  std::ofstream(path("ghost.jsonl")) << pred.dump() << "\n";
  const auto unknown =
      lmg_run({"export-dot", "--records", path("ghost.jsonl"), "--corpus", path("long1.jsonl"), "--out", path("dot3")});
  EXPECT_EQ(unknown.code, 2);
  EXPECT_NE(unknown.err.find("ghost"), std::string::npos);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(lmg_run({}).code, 2);
  EXPECT_EQ(lmg_run({"frobnicate"}).code, 2);
  EXPECT_EQ(lmg_run({"train", "--out", path("x")}).code, 2);
  EXPECT_EQ(lmg_run({"train", "--corpus", path("missing.jsonl"), "--out", path("x")}).code, 2);
  const auto corpus = synth(3);
  EXPECT_EQ(train(corpus, path("x"), {"--set", "no_such_key=1"}).code, 2);
}

TEST_F(Cli, BinaryExitCodes) {
  auto status = [](const std::string& cmd) {
    const int raw = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  };
  const std::string bin = LMG_CLI_PATH;
  EXPECT_EQ(status(bin + " --help"), 0);
  EXPECT_EQ(status(bin + " bogus"), 2);
  EXPECT_EQ(status(bin + " gradcheck"), 0);
  EXPECT_EQ(status(bin + " gradcheck --break-backward lstm_cell"), 1);
}
