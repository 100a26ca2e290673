#include <gtest/gtest.h>

#include <set>

#include "iclr/corpus.hpp"
#include "iclr/error.hpp"
#include "iclr/prompting.hpp"
#include "iclr/rng.hpp"
#include "iclr/text.hpp"
#include "iclr/victim.hpp"
#include "support.hpp"

using namespace iclr;
using iclr::fixture::TempDir;

TEST(Text, Utf8RoundTrip) {
  const std::string s = "ｍaglev technicaⅼly naïve";
  EXPECT_EQ(encode_utf8(decode_utf8(s)), s);
  EXPECT_EQ(decode_utf8("ａ").size(), 1u);
}

TEST(Text, LowerCoversLatinGreekCyrillicFullwidth) {
  EXPECT_EQ(to_lower("GREAT Film"), "great film");
  EXPECT_EQ(to_lower("ÉTÉ ΑΒΓ ДОМ ＡＢ"), "été αβγ дом ａｂ");
}

TEST(Text, SplitAndJoin) {
  EXPECT_EQ(split_words("  a\tb \n c  "), (std::vector<std::string>{"a", "b", "c"}));
  const std::vector<std::string> words{"a", "", "b"};
  EXPECT_EQ(join_words(words), "a b");
  EXPECT_EQ(trim("  x y \n"), "x y");
}

TEST(Text, WordTokenizerDropsPunctuationKeepsApostrophes) {
  WordTokenizer tok;
  EXPECT_EQ(tok.tokenize("It's GREAT, isn't it? -- yes!"),
            (std::vector<std::string>{"it's", "great", "isn't", "it", "yes"}));
  EXPECT_EQ(tok.tokenize("'quoted' words"), (std::vector<std::string>{"quoted", "words"}));
  EXPECT_TRUE(tok.tokenize("... !!").empty());
}

TEST(Text, WordpieceGreedyLongestMatch) {
  WordpieceTokenizer tok({"un", "##aff", "##able", "great", "##ly"});
  EXPECT_EQ(tok.tokenize("unaffable greatly xyz"),
            (std::vector<std::string>{"un", "##aff", "##able", "great", "##ly", "[UNK]"}));
}

TEST(Text, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Rng, DerivedSeedsAreStableAndDistinct) {
  EXPECT_EQ(derive_seed(42, "te001"), derive_seed(42, "te001"));
  EXPECT_NE(derive_seed(42, "te001"), derive_seed(42, "te002"));
  EXPECT_NE(derive_seed(42, "te001"), derive_seed(43, "te001"));
}

TEST(Rng, UniformIndexInRangeAndCoversAll) {
  Rng rng(7);
  std::vector<int> hits(5, 0);
  for (int i = 0; i < 5000; ++i) {
    const auto v = rng.uniform_index(5);
    ASSERT_LT(v, 5u);
    ++hits[v];
  }
  for (int h : hits) EXPECT_GT(h, 800);
}

TEST(Corpus, LoadsSingleAndPairLines) {
  TempDir dir;
  fixture::write_file(dir / "s.jsonl", R"({"id":"a1","text":"great phone","label":1})" "\n");
  fixture::write_file(dir / "p.jsonl", R"({"id":"r1","premise":"p...","hypothesis":"h...","label":0})" "\n");
  const LabelSpace labels({"negative", "positive"});
  const auto s = load_dataset(dir / "s.jsonl", SegmentShape::single, labels);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].id, "a1");
  EXPECT_EQ(s[0].text, "great phone");
  EXPECT_EQ(s[0].label, 1);
  EXPECT_EQ(s[0].shape(), SegmentShape::single);
  const auto p = load_dataset(dir / "p.jsonl", SegmentShape::pair, labels);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].shape(), SegmentShape::pair);
  EXPECT_EQ(*p[0].premise, "p...");
  EXPECT_EQ(*p[0].hypothesis, "h...");
}

TEST(Corpus, LoadsEveryLineOfALargePairFile) {
  TempDir dir;
  std::string body;
  for (int i = 0; i < 872; ++i) {
    body += R"({"id":"t)" + std::to_string(i) + R"(","premise":"a b","hypothesis":"c","label":)" +
            std::to_string(i % 2) + "}\n";
  }
  fixture::write_file(dir / "rte.jsonl", body);
  EXPECT_EQ(load_dataset(dir / "rte.jsonl", SegmentShape::pair, LabelSpace({"false", "true"})).size(),
            872u);
}

TEST(Corpus, LabelWordsAndErrors) {
  TempDir dir;
  const LabelSpace labels({"negative", "positive"});
  fixture::write_file(dir / "w.jsonl", R"({"id":"a","text":"x","label":"Positive"})" "\n");
  EXPECT_EQ(load_dataset(dir / "w.jsonl", SegmentShape::single, labels)[0].label, 1);

  fixture::write_file(dir / "bad_label.jsonl", R"({"id":"a","text":"x","label":5})" "\n");
  EXPECT_THROW(load_dataset(dir / "bad_label.jsonl", SegmentShape::single, labels), ConfigError);
  fixture::write_file(dir / "dup.jsonl",
                      R"({"id":"a","text":"x","label":0})" "\n" R"({"id":"a","text":"y","label":1})" "\n");
  EXPECT_THROW(load_dataset(dir / "dup.jsonl", SegmentShape::single, labels), ConfigError);
  fixture::write_file(dir / "shape.jsonl", R"({"id":"a","premise":"x","hypothesis":"y","label":0})" "\n");
  EXPECT_THROW(load_dataset(dir / "shape.jsonl", SegmentShape::single, labels), ConfigError);
  fixture::write_file(dir / "junk.jsonl", "{not json\n");
  EXPECT_THROW(load_dataset(dir / "junk.jsonl", SegmentShape::single, labels), ConfigError);
  EXPECT_THROW(load_dataset(dir / "missing.jsonl", SegmentShape::single, labels), ConfigError);
}

TEST(Corpus, SaveLoadRoundTripKeepsOrigin) {
  TempDir dir;
  auto a = fixture::ex("a", "good film", 1);
  auto b = fixture::ex("a~bugger", "go od film", 1);
  b.origin_id = "a";
  save_dataset(dir / "d.jsonl", {a, b});
  const auto back = load_dataset(dir / "d.jsonl", SegmentShape::single, LabelSpace({"n", "p"}));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0], a);
  EXPECT_EQ(back[1], b);
  EXPECT_EQ(back[1].lineage(), "a");
}

TEST(Corpus, RendersShippedTemplates) {
  const auto tasks = load_tasks(fixture::data_dir() / "templates.ini");
  const Task& sst = tasks.at("sst2");
  EXPECT_EQ(render_demo(fixture::ex("x", "the film is powerful", 1), sst.tmpl, sst.labels),
            "Review: the film is powerful\nSentiment: positive");
  const std::string neg = render_demo(fixture::ex("y", "dull", 0), sst.tmpl, sst.labels);
  EXPECT_TRUE(neg.ends_with("Sentiment: negative"));

  const Task& rte = tasks.at("rte");
  const std::string r = render_demo(fixture::pair_ex("r", "A man is due in court.", "He is free.", 1),
                                    rte.tmpl, rte.labels);
  EXPECT_NE(r.find("True or False?"), std::string::npos);
  EXPECT_TRUE(r.ends_with("true"));
}

TEST(Corpus, PlaceholdersInsideValuesStayLiteral) {
  const Task t = fixture::sentiment_task();
  EXPECT_EQ(render_demo(fixture::ex("x", "say {label} {text}", 0), t.tmpl, t.labels),
            "Review: say {label} {text}\nSentiment: negative");
}

TEST(Corpus, TemplateValidation) {
  Template bad;
  bad.demo_pattern = "{premise} {label}";
  bad.query_pattern = "{premise}";
  bad.shape = SegmentShape::single;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW(LabelSpace({"a", "A"}), ConfigError);
  EXPECT_THROW(LabelSpace(std::vector<std::string>{}), ConfigError);
}

TEST(Prompting, SamplingIsBalancedAndDeterministic) {
  std::vector<LabeledExample> pool;
  for (int i = 0; i < 40; ++i) pool.push_back(fixture::ex("p" + std::to_string(i), "t", i % 4 == 0 ? 1 : 0));
  EXPECT_TRUE(sample_demos_random(pool, 0, 1, true, 2).empty());
  const auto a = sample_demos_random(pool, 8, 5, true, 2);
  const auto b = sample_demos_random(pool, 8, 5, true, 2);
  ASSERT_EQ(a.size(), 8u);
  EXPECT_EQ(a, b);
  int pos = 0;
  std::set<std::string> ids;
  for (const auto& d : a) {
    pos += d.label;
    ids.insert(d.id);
  }
  EXPECT_EQ(pos, 4);
  EXPECT_EQ(ids.size(), 8u);
  EXPECT_NE(sample_demos_random(pool, 8, 6, true, 2), a);
}

TEST(Prompting, OddBalancedCountsDifferByOne) {
  std::vector<LabeledExample> pool;
  for (int i = 0; i < 30; ++i) pool.push_back(fixture::ex("p" + std::to_string(i), "t", i % 3));
  const auto d = sample_demos_random(pool, 7, 3, true, 3);
  std::vector<int> counts(3, 0);
  for (const auto& e : d) ++counts[e.label];
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  EXPECT_LE(*hi - *lo, 1);
}

TEST(Prompting, BuildPromptOrderAndOneShotLayout) {
  const auto tasks = load_tasks(fixture::data_dir() / "templates.ini");
  const Task& sst = tasks.at("sst2");
  const auto demo = fixture::ex("d", "contains no wit , only labored gags", 0);
  const auto test = fixture::ex("t", "the film is powerful , accessible and funny .", 1);
  EXPECT_EQ(build_prompt(make_prompt({}, test, sst)),
            "Review: the film is powerful , accessible and funny .\nSentiment:");
  EXPECT_EQ(build_prompt(make_prompt({demo}, test, sst)),
            "Review: contains no wit , only labored gags\nSentiment: negative\n"
            "Review: the film is powerful , accessible and funny .\nSentiment:");

  const auto d2 = fixture::ex("d2", "second one", 1);
  const std::string two = build_prompt(make_prompt({demo, d2}, test, sst));
  const auto p1 = two.find("contains no wit");
  const auto p2 = two.find("second one");
  const auto pq = two.find("the film is powerful");
  EXPECT_LT(p1, p2);
  EXPECT_LT(p2, pq);

  const Task& mnli = tasks.at("mnli");
  const std::string m = build_prompt(make_prompt({}, fixture::pair_ex("m", "p", "h", 0), mnli));
  EXPECT_TRUE(m.starts_with("Instruction: Please identify"));
}

TEST(Prompting, ClassifyTieBreaksToSmallestLabel) {
  const Task t = fixture::sentiment_task();
  const auto spec = make_prompt({}, fixture::ex("t", "x", 0), t);
  ConstantVictim uniform(Eigen::Vector2d(0.5, 0.5), {"negative", "positive"});
  EXPECT_EQ(classify(spec, uniform).first, 0);
  ConstantVictim skew(Eigen::Vector2d(0.3, 0.7), {"negative", "positive"});
  EXPECT_EQ(classify(spec, skew).first, 1);
}

TEST(Prompting, ShapeMismatchIsAConfigError) {
  const Task t = fixture::sentiment_task();
  auto spec = make_prompt({fixture::pair_ex("d", "p", "h", 0)}, fixture::ex("t", "x", 0), t);
  EXPECT_THROW(spec.validate(), ConfigError);
}
