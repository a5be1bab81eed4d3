#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "lmg/corpus.hpp"

using namespace lmg;

namespace {

std::vector<std::string> texts(const std::vector<Token>& toks) {
  std::vector<std::string> out;
  for (const auto& t : toks) out.push_back(t.text);
  return out;
}

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
  const auto dir = std::filesystem::temp_directory_path() / "lmg_test_corpus";
  std::filesystem::create_directories(dir);
  const auto path = dir / name;
  std::ofstream(path) << content;
  return path;
}

std::string states_json(std::size_t steps, std::size_t n) {
  std::string row = "[";
  for (std::size_t i = 0; i < n; ++i) row += i ? ",0" : "0";
  row += "]";
  std::string out = "[";
  for (std::size_t t = 0; t < steps; ++t) out += (t ? "," : "") + row;
  return out + "]";
}

}  // namespace

TEST(Tokenize, SplitsWordsAndPunctuation) {
  EXPECT_EQ(texts(tokenize("Take a left.")), (std::vector<std::string>{"Take", "a", "left", "."}));
  EXPECT_EQ(texts(tokenize("black easel,")), (std::vector<std::string>{"black", "easel", ","}));
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_TRUE(tokenize("   \t ").empty());
}

TEST(Tokenize, KeepsCaseAndIndexesTokens) {
  const auto toks = tokenize("Go to the Coat rack, then stop.");
  ASSERT_EQ(toks.size(), 9u);
  EXPECT_EQ(toks[3].text, "Coat");
  for (std::size_t i = 0; i < toks.size(); ++i) EXPECT_EQ(toks[i].index, i);
}

TEST(Tokenize, NonAsciiBytesStayInsideWords) {
  EXPECT_EQ(texts(tokenize("caf\xc3\xa9 ok")), (std::vector<std::string>{"caf\xc3\xa9", "ok"}));
}

TEST(SentenceStarts, SplitsAfterSentenceFinalPunctuation) {
  const auto toks = tokenize("Walk forward. Turn left!");
  EXPECT_EQ(sentence_starts(toks), (std::vector<std::size_t>{0, 3}));
}

TEST(LoadCorpus, ParsesTwoRecords) {
  const std::string text =
      R"({"route_id":"r1","sentence_id":0,"text":"Walk forward.","actions":["f","STOP"],"states":)" +
      states_json(2, 3) + "}\n" + R"({"route_id":"r1","sentence_id":1,"text":"Stop here."})" + "\n";
  const auto path = temp_file("two.jsonl", text);
  const Corpus c = load_corpus(path.string());
  ASSERT_EQ(c.size(), 2u);
  EXPECT_TRUE(c.instructions[0].has_gold());
  EXPECT_FALSE(c.instructions[1].has_gold());
  EXPECT_EQ(*c.instructions[0].gold_actions, (ActionSeq{Action::Forward, Action::Stop}));
}

TEST(LoadCorpus, LengthMismatchNamesRoute) {
  const std::string text = R"({"route_id":"route-77","sentence_id":0,"text":"a b","actions":["f","f","STOP"],"states":)" +
                           states_json(2, 2) + "}\n";
  std::istringstream in(text);
  try {
    parse_corpus(in, "mem");
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("route-77"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("mem:1"), std::string::npos);
  }
}

TEST(LoadCorpus, UnknownActionIsRejected) {
  std::istringstream in(R"({"route_id":"r","sentence_id":0,"text":"go","actions":["travel","STOP"]})");
  try {
    parse_corpus(in, "mem");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("travel"), std::string::npos);
  }
}

TEST(LoadCorpus, MalformedLineReportsLineNumber) {
  std::istringstream in(R"({"route_id":"r","sentence_id":0,"text":"go"})"
                        "\n\n{not json}\n");
  try {
    parse_corpus(in, "file.jsonl");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("file.jsonl:3"), std::string::npos);
  }
}

TEST(LoadCorpus, StopOnlyAllowedAtTheEnd) {
  std::istringstream mid(R"({"route_id":"r","sentence_id":0,"text":"go","actions":["STOP","f"],"states":[[0],[0]]})");
  EXPECT_THROW(parse_corpus(mid), ValidationError);
  std::istringstream missing(R"({"route_id":"r","sentence_id":0,"text":"go","actions":["f"],"states":[[0]]})");
  EXPECT_THROW(parse_corpus(missing), ValidationError);
}

TEST(LoadCorpus, StateLengthMustMatchTokens) {
  std::istringstream in(R"({"route_id":"r","sentence_id":0,"text":"go now","actions":["STOP"],"states":[[0]]})");
  EXPECT_THROW(parse_corpus(in), ValidationError);
}

TEST(LoadCorpus, PoseAndGoalFields) {
  std::istringstream in(
      R"({"route_id":"r","sentence_id":0,"text":"go","start_pose":[1,2,0,3],"goal_xyz":[4,5,6]})");
  const auto c = parse_corpus(in);
  ASSERT_TRUE(c.instructions[0].start_pose);
  EXPECT_EQ(c.instructions[0].start_pose->heading, Heading::West);
  EXPECT_EQ(*c.instructions[0].goal_xyz, (GridPoint{4, 5, 6}));
  std::istringstream bad(R"({"route_id":"r","sentence_id":0,"text":"go","start_pose":[1,2,0,7]})");
  EXPECT_THROW(parse_corpus(bad), ParseError);
}

TEST(LoadCorpus, SerializationRoundTripsRecordForRecord) {
  const std::string text =
      R"({"route_id":"r1","sentence_id":0,"text":"Walk to the lamp.","tokens":["Walk","to","the","lamp","."],"pos":["VERB","ADP","DET","NOUN","PUNCT"],"actions":["f","STOP"],"states":[[0,0,1,1,0],[0,0,0,0,0]],"start_pose":[0,0,0,1],"goal_xyz":[1,0,0]})"
      "\n"
      R"({"route_id":"r2","sentence_id":3,"text":"Turn left."})"
      "\n";
  std::istringstream in(text);
  const Corpus c = parse_corpus(in);
  EXPECT_EQ(serialize_corpus(c), text);
  std::istringstream again(serialize_corpus(c));
  EXPECT_EQ(parse_corpus(again).instructions, c.instructions);
}

TEST(MapSailActions, ExpandsTravel) {
  const std::vector<SailAction> travel{{"travel", 3}};
  EXPECT_EQ(map_sail_actions(travel), (ActionSeq{Action::Forward, Action::Forward, Action::Forward, Action::Stop}));
  const std::vector<SailAction> null_only{{"null", 0}};
  EXPECT_EQ(map_sail_actions(null_only), (ActionSeq{Action::Stand, Action::Stop}));
  const std::vector<SailAction> mixed{{"turn_left", 0}, {"travel", 1}};
  EXPECT_EQ(map_sail_actions(mixed), (ActionSeq{Action::Left, Action::Forward, Action::Stop}));
}

TEST(MapSailActions, RejectsNonPositiveTravel) {
  const std::vector<SailAction> zero{{"travel", 0}};
  EXPECT_THROW(map_sail_actions(zero), ValidationError);
  const std::vector<SailAction> neg{{"travel", -2}};
  EXPECT_THROW(map_sail_actions(neg), ValidationError);
}

TEST(MapSailActions, LengthIsOnePlusExpandedSteps) {
  Rng rng(11);
  const char* names[] = {"travel", "turn_left", "turn_right", "null"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<SailAction> seq;
    std::size_t expected = 1;
    const auto n = rng.below(6);
    for (std::size_t i = 0; i < n; ++i) {
      SailAction a{names[rng.below(4)], 0};
      if (a.name == "travel") a.steps = 1 + static_cast<int>(rng.below(5));
      expected += a.name == "travel" ? static_cast<std::size_t>(a.steps) : 1;
      seq.push_back(a);
    }
    EXPECT_EQ(map_sail_actions(seq).size(), expected);
  }
}

TEST(Embeddings, FileVectorsPassThroughAndOovIsSeeded) {
  std::string line = "the";
  std::vector<double> expected;
  for (int i = 0; i < 300; ++i) {
    expected.push_back(0.001 * i - 0.1);
    std::ostringstream os;
    os.precision(17);
    os << ' ' << expected.back();
    line += os.str();
  }
  const auto path = temp_file("emb.txt", "2 300\n" + line + "\n");
  Vocabulary vocab(300);
  vocab.add("the");
  vocab.add("zebra");
  const auto v1 = load_embeddings(path.string(), vocab, 7);
  const auto row = v1.embedding(v1.id("the"));
  for (std::size_t i = 0; i < 300; ++i) EXPECT_DOUBLE_EQ(row[i], expected[i]);
  const auto v2 = load_embeddings(path.string(), vocab, 7);
  const auto a = v1.embedding(v1.id("zebra")), b = v2.embedding(v2.id("zebra"));
  EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
  for (double x : a) {
    EXPECT_GE(x, -0.05);
    EXPECT_LT(x, 0.05);
  }
}

TEST(Embeddings, WrongDimensionNamesTheWord) {
  std::string line = "easel";
  for (int i = 0; i < 299; ++i) line += " 0.5";
  const auto path = temp_file("short.txt", line + "\n");
  Vocabulary vocab(300);
  try {
    load_embeddings(path.string(), vocab, 7);
    FAIL() << "expected a dimension error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("easel"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("299"), std::string::npos);
  }
}

TEST(Vocabulary, UnknownWordIsIdZero) {
  Vocabulary v(4);
  EXPECT_EQ(v.id("never-seen"), Vocabulary::kUnknownId);
  EXPECT_EQ(v.words().front(), "<unk>");
  const auto id = v.add("lamp");
  EXPECT_EQ(v.id("lamp"), id);
  EXPECT_EQ(v.add("lamp"), id);
}

TEST(Folds, OneHundredRoutesSplitEightyTenTen) {
  const Corpus c = make_folds(generate_synthetic(100, 5), 9);
  ASSERT_EQ(c.folds.size(), 3u);
  std::set<std::string> prev_tests;
  for (const auto& f : c.folds) {
    std::set<std::string> tr, dv, te;
    for (auto i : f.train) tr.insert(c.instructions[i].route_id);
    for (auto i : f.dev) dv.insert(c.instructions[i].route_id);
    for (auto i : f.test) te.insert(c.instructions[i].route_id);
    EXPECT_EQ(tr.size(), 80u);
    EXPECT_EQ(dv.size(), 10u);
    EXPECT_EQ(te.size(), 10u);
    EXPECT_EQ(f.train.size() + f.dev.size() + f.test.size(), c.size());
    for (const auto& r : te) {
      EXPECT_FALSE(tr.count(r) || dv.count(r));
      EXPECT_FALSE(prev_tests.count(r)) << "test sets of different folds overlap";
    }
    for (const auto& r : dv) EXPECT_FALSE(tr.count(r));
    prev_tests.insert(te.begin(), te.end());
  }
}

TEST(Folds, DeterministicUnderSeed) {
  const Corpus base = generate_synthetic(30, 2);
  EXPECT_EQ(make_folds(base, 4).folds, make_folds(base, 4).folds);
  EXPECT_NE(make_folds(base, 4).folds, make_folds(base, 5).folds);
}

TEST(Folds, TooFewRoutesIsAnError) { EXPECT_THROW(make_folds(generate_synthetic(5, 1), 1), ValidationError); }

TEST(Synthetic, StatesMarkExactlyTheLandmarkTokens) {
  static const std::set<std::string> landmark_words{"lamp",  "bench",  "fountain", "black", "easel",  "coat",
                                                    "rack",  "red",    "chair",    "blue",  "door",   "wooden",
                                                    "sofa",  "large",  "window",   "corner", "small", "table",
                                                    "wall"};
  const Corpus c = generate_synthetic(40, 1);
  for (const auto& ins : c.instructions) {
    ASSERT_TRUE(ins.has_gold());
    std::vector<int> covered(ins.size(), 0);
    for (const auto& s : *ins.gold_states) {
      for (std::size_t i = 0; i < s.size(); ++i) covered[i] |= s[i];
    }
    for (std::size_t i = 0; i < ins.size(); ++i) {
      const auto& w = ins.tokens[i].text;
      if (landmark_words.count(w)) {
        EXPECT_TRUE(covered[i]) << record_label(ins) << " token " << w;
      }
      if (covered[i]) {
        EXPECT_TRUE(landmark_words.count(w) || w == "the" || w == "stairs") << w;
      }
    }
  }
}

TEST(Synthetic, DeterministicAndRoundTrips) {
  const Corpus a = generate_synthetic(10, 1), b = generate_synthetic(10, 1);
  EXPECT_EQ(serialize_corpus(a), serialize_corpus(b));
  std::istringstream in(serialize_corpus(a));
  EXPECT_EQ(parse_corpus(in).instructions, a.instructions);
}

TEST(Synthetic, VocabularyIsSmall) {
  const Corpus c = generate_synthetic(300, 3);
  std::set<std::string> words;
  for (const auto& ins : c.instructions) {
    for (const auto& t : ins.tokens) words.insert(t.text);
  }
  EXPECT_LE(words.size(), 60u);
}
