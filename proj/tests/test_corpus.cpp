#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "attnaudit/corpus.hpp"
#include "attnaudit/util.hpp"

using namespace attnaudit;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("attnaudit_corpus_" + name);
}

using Words = std::vector<std::string>;

}  // namespace

TEST(Tokenize, EmptyText) { EXPECT_TRUE(tokenize("").empty()); }

TEST(Tokenize, SplitsPunctuationAndLowercases) {
  EXPECT_EQ(tokenize("Sed dolorem, sed."), (Words{"sed", "dolorem", ",", "sed", "."}));
}

TEST(Tokenize, KeepsDigitsBeforeNormalization) {
  EXPECT_EQ(tokenize("BP 120/80"), (Words{"bp", "120", "/", "80"}));
}

TEST(Tokenize, DropsEmptyTokens) {
  EXPECT_EQ(tokenize("  a\t\n b  "), (Words{"a", "b"}));
}

TEST(NormalizeToken, Cases) {
  const Vocabulary v = build_vocab(Words{"alpha beta"});
  EXPECT_EQ(normalize_token("120", v), Vocabulary::kNumber);
  EXPECT_EQ(normalize_token("x9y", v), Vocabulary::kNumber);
  EXPECT_EQ(normalize_token("alpha", v), *v.find("alpha"));
  EXPECT_EQ(normalize_token("zzqxunseen", v), Vocabulary::kUnk);
}

TEST(NormalizeToken, IsIdempotent) {
  const Vocabulary v = build_vocab(Words{"alpha beta 12 gamma"});
  for (const std::string tok : {"alpha", "12", "zzz", "gamma", "<unk>", "qqq"}) {
    const TokenIndex once = normalize_token(tok, v);
    EXPECT_EQ(normalize_token(v.word(once), v), once) << tok;
  }
}

TEST(BuildVocab, MinCountFilters) {
  const Vocabulary v = build_vocab(Words{"a a b"}, 2);
  EXPECT_EQ(v.words(), (Words{"<pad>", "<unk>", "qqq", "a"}));
}

TEST(BuildVocab, SingleWord) {
  EXPECT_TRUE(build_vocab(Words{"a"}, 1).find("a").has_value());
}

TEST(BuildVocab, EmptyCorpusIsAnError) {
  EXPECT_THROW(build_vocab(Words{}, 1), ValidationError);
  EXPECT_THROW(build_vocab(Words{"a"}, 0), ValidationError);
}

TEST(BuildVocab, OrderIsCountThenLexicographic) {
  const Vocabulary v = build_vocab(Words{"c b b a a d 7"});
  EXPECT_EQ(v.words(), (Words{"<pad>", "<unk>", "qqq", "a", "b", "c", "d"}));
}

TEST(BuildVocab, Deterministic) {
  const Words corpus{"the quick brown fox", "jumps over the lazy dog 42"};
  EXPECT_EQ(build_vocab(corpus), build_vocab(corpus));
  EXPECT_EQ(build_vocab(corpus).hash(), build_vocab(corpus).hash());
}

TEST(Vocabulary, BijectiveAndJsonRoundTrip) {
  const Vocabulary v = build_vocab(Words{"one two two three three three"});
  for (std::size_t i = 0; i < v.size(); ++i)
    EXPECT_EQ(*v.find(v.word(static_cast<TokenIndex>(i))), static_cast<TokenIndex>(i));
  EXPECT_EQ(Vocabulary::from_json(v.to_json()), v);
}

TEST(Vocabulary, RejectsMissingReservedWords) {
  EXPECT_THROW(Vocabulary::from_words({"a", "b"}), ValidationError);
  EXPECT_THROW(Vocabulary::from_words({"<pad>", "<unk>", "qqq", "a", "a"}), ValidationError);
}

TEST(EncodeDecode, RoundTripUpToNormalization) {
  const Vocabulary v = build_vocab(Words{"Lorem ipsum dolor sit amet."});
  const std::string text = "Lorem 2020 ipsum unseen amet .";
  const auto decoded = decode(encode(text, v), v);
  EXPECT_EQ(decoded, (Words{"lorem", "qqq", "ipsum", "<unk>", "amet", "."}));
}

TEST(LoadEmbeddings, CopiesFileRowsVerbatim) {
  const Vocabulary v = build_vocab(Words{"alpha beta"});
  const auto path = temp_path("emb.txt");
  write_file(path, "2 3\nalpha 0.125 -2.5 1e-3\ngamma 1 2 3\n");
  const auto m = load_embeddings(path, v, 3, 9);
  const std::size_t a = static_cast<std::size_t>(*v.find("alpha"));
  EXPECT_EQ(m.values.at(a, 0), 0.125);
  EXPECT_EQ(m.values.at(a, 1), -2.5);
  EXPECT_EQ(m.values.at(a, 2), 1e-3);
  EXPECT_EQ(m.provenance[a], RowProvenance::pretrained);
  EXPECT_EQ(m.provenance[static_cast<std::size_t>(*v.find("beta"))], RowProvenance::gaussian_init);
  EXPECT_EQ(m.provenance[0], RowProvenance::padding);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(m.values.at(0, c), 0.0);
}

TEST(LoadEmbeddings, MalformedRowNamesLine) {
  const Vocabulary v = build_vocab(Words{"alpha"});
  const auto path = temp_path("bad.txt");
  write_file(path, "alpha 1 2 3\nbeta 1 x 3\n");
  try {
    load_embeddings(path, v, 3, 1);
    FAIL() << "expected an error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  write_file(path, "alpha 1 2\n");
  EXPECT_THROW(load_embeddings(path, v, 3, 1), ValidationError);
}

TEST(LoadEmbeddings, NoFileMeansGaussianAndIsDeterministic) {
  const Vocabulary v = build_vocab(Words{"a b c d"});
  const auto m1 = load_embeddings("none", v, 4, 5);
  const auto m2 = load_embeddings("", v, 4, 5);
  EXPECT_EQ(m1.values, m2.values);
  for (std::size_t r = 1; r < v.size(); ++r) EXPECT_EQ(m1.provenance[r], RowProvenance::gaussian_init);
  EXPECT_NE(load_embeddings("none", v, 4, 6).values, m1.values);
}

TEST(LoadEmbeddings, GaussianRowsHaveStandardMoments) {
  const Vocabulary v = build_vocab(Words{"a b c d e f g h i j"});
  const auto m = load_embeddings("none", v, 300, 123);
  ASSERT_TRUE(m.values.all_finite());
  for (std::size_t r = 1; r < v.size(); ++r) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t c = 0; c < 300; ++c) mean += m.values.at(r, c);
    mean /= 300.0;
    for (std::size_t c = 0; c < 300; ++c) sq += std::pow(m.values.at(r, c) - mean, 2);
    const double var = sq / 299.0;
    EXPECT_GT(mean, -0.5);
    EXPECT_LT(mean, 0.5);
    EXPECT_GT(var, 0.5);
    EXPECT_LT(var, 1.5);
  }
}

TEST(Synthetic, LabelsMatchTriggerPresence) {
  SyntheticCorpusParams p;
  p.n_docs = 10;
  p.doc_len = 20;
  p.vocab_size = 30;
  p.seed = 4;
  const Dataset d = generate_synthetic_corpus(p);
  const TokenIndex trig = *d.vocabulary.find("trigger");
  int positives = 0;
  for (const auto& doc : d.documents) {
    const bool present = std::find(doc.tokens.begin(), doc.tokens.end(), trig) != doc.tokens.end();
    EXPECT_EQ(doc.labels[0], present ? 1 : 0);
    positives += doc.labels[0];
  }
  EXPECT_EQ(positives, 5);
}

TEST(Synthetic, DeterministicUnderSeed) {
  SyntheticCorpusParams p;
  p.n_docs = 50;
  p.doc_len = 15;
  p.vocab_size = 40;
  p.seed = 77;
  EXPECT_EQ(to_jsonl(generate_synthetic_corpus(p)), to_jsonl(generate_synthetic_corpus(p)));
  auto q = p;
  q.seed = 78;
  EXPECT_NE(to_jsonl(generate_synthetic_corpus(p)), to_jsonl(generate_synthetic_corpus(q)));
}

TEST(Synthetic, FullScaleStatistics) {
  SyntheticCorpusParams p;  // 2000 docs, length 200, vocab 100
  p.seed = 2;
  const Dataset d = generate_synthetic_corpus(p);
  EXPECT_EQ(d.documents.size(), 2000u);
  EXPECT_EQ(d.vocabulary.size(), 100u);
  EXPECT_EQ(d.split(Split::train).size(), 1400u);
  EXPECT_EQ(d.split(Split::dev).size(), 200u);
  EXPECT_EQ(d.split(Split::test).size(), 400u);
  std::set<std::string> ids;
  int positives = 0;
  for (const auto& doc : d.documents) {
    EXPECT_EQ(doc.tokens.size(), 200u);
    for (auto t : doc.tokens) {
      EXPECT_GE(t, 3);
      EXPECT_LT(static_cast<std::size_t>(t), d.vocabulary.size());
    }
    ids.insert(doc.id);
    positives += doc.labels[0];
  }
  EXPECT_EQ(ids.size(), 2000u);
  EXPECT_EQ(positives, 1000);
  EXPECT_NO_THROW(d.validate());
}

TEST(Synthetic, PerTriggerMultilabel) {
  SyntheticCorpusParams p;
  p.n_docs = 200;
  p.doc_len = 12;
  p.vocab_size = 40;
  p.trigger_words = {"ta", "tb", "tc"};
  p.label_rule = LabelRule::per_trigger;
  p.seed = 3;
  const Dataset d = generate_synthetic_corpus(p);
  ASSERT_EQ(d.label_count, 3u);
  for (const auto& doc : d.documents)
    for (std::size_t l = 0; l < 3; ++l) {
      const TokenIndex t = *d.vocabulary.find(p.trigger_words[l]);
      const bool present = std::find(doc.tokens.begin(), doc.tokens.end(), t) != doc.tokens.end();
      EXPECT_EQ(doc.labels[l], present ? 1 : 0);
    }
}

TEST(Synthetic, InfeasibleParameters) {
  SyntheticCorpusParams p;
  p.vocab_size = 4;  // 3 reserved + 1 trigger leaves no filler
  EXPECT_THROW(generate_synthetic_corpus(p), ValidationError);
  p.vocab_size = 100;
  p.doc_len = 0;
  EXPECT_THROW(generate_synthetic_corpus(p), ValidationError);
}

TEST(Jsonl, SingleLine) {
  const Dataset d = parse_jsonl(R"({"id":"a","text":"x y","labels":[1],"split":"train"})" "\n");
  EXPECT_EQ(d.label_count, 1u);
  EXPECT_EQ(d.documents.size(), 1u);
}

TEST(Jsonl, ArityMismatchNamesLine) {
  const std::string text =
      "{\"id\":\"a\",\"text\":\"x\",\"labels\":[1,0]}\n{\"id\":\"b\",\"text\":\"y\",\"labels\":[1]}\n";
  try {
    parse_jsonl(text);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Jsonl, MalformedJsonNamesLine) {
  try {
    parse_jsonl("{\"id\":\"a\",\"text\":\"x\",\"labels\":[1]}\n{oops\n");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Jsonl, HashSplitIs70_10_20) {
  std::string text;
  for (int i = 0; i < 100; ++i)
    text += "{\"id\":\"doc" + std::to_string(i) + "\",\"text\":\"w" + std::string(1, char('a' + i % 26)) +
            " z\",\"labels\":[" + std::to_string(i % 2) + "]}\n";
  const Dataset d = parse_jsonl(text);
  EXPECT_NEAR(static_cast<double>(d.split(Split::train).size()), 70.0, 1.0);
  EXPECT_NEAR(static_cast<double>(d.split(Split::dev).size()), 10.0, 1.0);
  EXPECT_NEAR(static_cast<double>(d.split(Split::test).size()), 20.0, 1.0);
}

TEST(Jsonl, RoundTripThroughFile) {
  SyntheticCorpusParams p;
  p.n_docs = 30;
  p.doc_len = 8;
  p.vocab_size = 20;
  p.seed = 1;
  const Dataset d = generate_synthetic_corpus(p);
  const auto path = temp_path("ds.jsonl");
  write_file(path, to_jsonl(d));
  JsonlOptions opt;
  opt.vocabulary = &d.vocabulary;
  const Dataset back = load_jsonl(path, opt);
  ASSERT_EQ(back.documents.size(), d.documents.size());
  for (std::size_t i = 0; i < d.documents.size(); ++i) {
    EXPECT_EQ(back.documents[i].tokens, d.documents[i].tokens);
    EXPECT_EQ(back.documents[i].labels, d.documents[i].labels);
    EXPECT_EQ(back.documents[i].split, d.documents[i].split);
  }
}

TEST(DatasetValidate, RequiresBothClassesInTrain) {
  const Dataset d = parse_jsonl(
      "{\"id\":\"a\",\"text\":\"x\",\"labels\":[1],\"split\":\"train\"}\n"
      "{\"id\":\"b\",\"text\":\"y\",\"labels\":[1],\"split\":\"train\"}\n");
  EXPECT_THROW(d.validate(), ValidationError);
}
