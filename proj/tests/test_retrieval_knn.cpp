#include <gtest/gtest.h>

#include <random>

#include "iclr/distribution.hpp"
#include "iclr/error.hpp"
#include "iclr/knn_icl.hpp"
#include "iclr/retrieval.hpp"
#include "iclr/victim.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace iclr;

namespace {

std::vector<std::vector<std::string>> tokenize_all(const std::vector<std::string>& texts) {
  std::vector<std::vector<std::string>> out;
  for (const auto& t : texts) out.push_back(tokenize(t));
  return out;
}

DemoPool pool_of(const std::vector<std::string>& texts) {
  std::vector<LabeledExample> ex;
  for (std::size_t i = 0; i < texts.size(); ++i) ex.push_back(fixture::ex("d" + std::to_string(i), texts[i], static_cast<int>(i % 2)));
  return DemoPool(ex);
}

}  // namespace

TEST(Bm25, NoSharedTermScoresZero) {
  const Bm25Index idx(tokenize_all({"a b", "c d"}));
  const std::vector<std::string> q{"z"};
  EXPECT_EQ(idx.score(q, 0), 0.0);
  EXPECT_EQ(idx.score_all(q), (std::vector<double>{0.0, 0.0}));
}

TEST(Bm25, TinyCorpusMatchesFormula) {
  const auto docs = tokenize_all({"a b", "a a c", "d"});
  const Bm25Index idx(docs);
  const std::vector<std::string> q{"a"};
  const auto want = oracle::bm25(docs, q);
  const auto got = idx.score_all(q);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(got[i], want[i]);
  // df(a)=2, N=3: idf = ln(1 + 1.5/2.5); avgdl = 2
  const double idf = std::log(1.0 + 1.5 / 2.5);
  EXPECT_NEAR(got[0], idf * 2.5 / (1.0 + 1.5), 1e-12);
  EXPECT_NEAR(got[1], idf * 2.0 * 2.5 / (2.0 + 1.5 * (0.25 + 0.75 * 1.5)), 1e-12);
  EXPECT_EQ(got[2], 0.0);
  const auto top = retrieve_topk(pool_of({"a b", "a a c", "d"}), fixture::ex("q", "a", 0), {.k = 1});
  EXPECT_EQ(top.indices, std::vector<std::size_t>{1});
}

TEST(Bm25, DuplicatingADocumentChangesDf) {
  auto docs = tokenize_all({"a b", "a a c", "d"});
  docs.push_back(docs[0]);
  const Bm25Index idx(docs);
  const std::vector<std::string> q{"a", "b"};
  const auto want = oracle::bm25(docs, q);
  const auto got = idx.score_all(q);
  for (std::size_t i = 0; i < docs.size(); ++i) EXPECT_DOUBLE_EQ(got[i], want[i]);
  EXPECT_EQ(idx.postings().at("a").size(), 3u);
}

TEST(Bm25, SingleDocScoreAgreesWithScoreAll) {
  std::mt19937_64 gen(3);
  std::vector<std::vector<std::string>> docs;
  for (int i = 0; i < 50; ++i) docs.push_back(fixture::random_words(gen, 1 + gen() % 12));
  const Bm25Index idx(docs);
  const auto q = fixture::random_words(gen, 5);
  const auto all = idx.score_all(q);
  for (std::size_t d = 0; d < docs.size(); ++d) EXPECT_DOUBLE_EQ(idx.score(q, d), all[d]);
}

TEST(Bm25, JsonRoundTrip) {
  const Bm25Index idx(tokenize_all({"a b", "a a c", "d"}));
  const Bm25Index back = Bm25Index::from_json(idx.to_json());
  EXPECT_EQ(back.postings(), idx.postings());
  EXPECT_EQ(back.doc_lengths(), idx.doc_lengths());
  EXPECT_DOUBLE_EQ(back.avg_len(), idx.avg_len());
}

TEST(Retrieval, RandomPoolsMatchBruteForce) {
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 1 + gen() % 120;
    std::vector<std::string> texts;
    for (std::size_t i = 0; i < n; ++i) texts.push_back(join_words(fixture::random_words(gen, 1 + gen() % 10, 25)));
    const DemoPool pool = embed_pool(pool_of(texts), std::make_shared<HashingEmbedder>(64));
    const auto query = fixture::ex("q", join_words(fixture::random_words(gen, 1 + gen() % 6, 25)), 0);
    const std::size_t k = 1 + gen() % 10;

    const auto bm = oracle::bm25(tokenize_all(texts), tokenize(query.text));
    EXPECT_EQ(retrieve_topk(pool, query, {.k = k}).indices, oracle::topk(bm, k));

    std::vector<std::map<std::size_t, long>> counts;
    for (const auto& t : texts) counts.push_back(oracle::hashed_counts(t, 64));
    EXPECT_EQ(retrieve_topk(pool, query, {.k = k, .method = RetrievalMethod::embedding}).indices,
              oracle::cosine_topk(counts, oracle::hashed_counts(query.text, 64), k));
  }
}

TEST(Retrieval, SelfQueryRanksFirstWithEmbeddings) {
  const DemoPool pool = embed_pool(pool_of({"the plot was dull", "a lovely film", "rain all day"}),
                                   std::make_shared<HashingEmbedder>(128));
  const auto r = retrieve_topk(pool, fixture::ex("q", "a lovely film", 0), {.k = 1, .method = RetrievalMethod::embedding});
  EXPECT_EQ(r.indices, std::vector<std::size_t>{1});
  const auto s = similarity_scores(pool, fixture::ex("q", "a lovely film", 0), RetrievalMethod::embedding);
  EXPECT_NEAR(s[1], 1.0, 1e-12);
  EXPECT_GE(s[1], s[0]);
}

TEST(Retrieval, EmbeddingRowsAreUnitAndDeterministic) {
  const DemoPool pool = embed_pool(pool_of({"same text", "same text", "", "other words here"}),
                                   std::make_shared<HashingEmbedder>(32));
  for (Eigen::Index r = 0; r < pool.embeddings().rows(); ++r) EXPECT_NEAR(pool.embeddings().row(r).norm(), 1.0, 1e-6);
  EXPECT_EQ(pool.embeddings().row(0), pool.embeddings().row(1));
}

TEST(Retrieval, LineageDedupKeepsOneVariant) {
  auto e1 = fixture::ex("e1", "great great film", 1);
  auto v1 = fixture::ex("e1~bugger", "great great fi lm", 1);
  v1.origin_id = "e1";
  auto e2 = fixture::ex("e2", "great plot", 0);
  const DemoPool pool({e1, v1, e2});
  const auto q = fixture::ex("q", "great great film", 1);
  const auto plain = retrieve_topk(pool, q, {.k = 2});
  EXPECT_EQ(plain.indices, (std::vector<std::size_t>{0, 1}));
  const auto dedup = retrieve_topk(pool, q, {.k = 2, .dedup_by_origin = true});
  EXPECT_EQ(dedup.indices, (std::vector<std::size_t>{0, 2}));
  const auto excl = retrieve_topk(pool, q, {.k = 3, .exclude_lineage = std::string("e1")});
  EXPECT_EQ(excl.indices, std::vector<std::size_t>{2});
  EXPECT_TRUE(excl.short_of_k);
}

TEST(Retrieval, LargePoolReturnsExactlyK) {
  std::mt19937_64 gen(1);
  std::vector<std::string> texts;
  for (int i = 0; i < 7293; ++i) texts.push_back(join_words(fixture::random_words(gen, 8, 400)));
  const auto r = retrieve_topk(pool_of(texts), fixture::ex("q", texts[5], 0), {.k = 8});
  EXPECT_EQ(r.indices.size(), 8u);
  EXPECT_FALSE(r.short_of_k);
}

TEST(Retrieval, ErrorsAndIndexFile) {
  EXPECT_THROW(retrieve_topk(DemoPool{}, fixture::ex("q", "x", 0), {.k = 1}), ConfigError);
  EXPECT_THROW(retrieve_topk(pool_of({"a"}), fixture::ex("q", "x", 0), {.k = 0}), ConfigError);
  EXPECT_THROW(retrieve_topk(pool_of({"a"}), fixture::ex("q", "x", 0), {.k = 1, .method = RetrievalMethod::embedding}),
               ConfigError);
  fixture::TempDir dir;
  const DemoPool pool = pool_of({"a b", "b c"});
  save_index(dir / "i1.json", pool);
  save_index(dir / "i2.json", pool_of({"a b", "b c"}));
  EXPECT_EQ(fixture::read_file(dir / "i1.json"), fixture::read_file(dir / "i2.json"));
  EXPECT_EQ(load_index(dir / "i1.json").postings(), pool.index().postings());
}

TEST(Retrieval, MergedPoolReembeds) {
  const DemoPool base = embed_pool(pool_of({"a b", "c d"}), std::make_shared<HashingEmbedder>(16));
  const DemoPool m = base.merged({fixture::ex("x", "e f", 1)});
  EXPECT_EQ(m.size(), 3u);
  ASSERT_TRUE(m.has_embeddings());
  EXPECT_EQ(m.embeddings().rows(), 3);
  EXPECT_EQ(m.index().num_docs(), 3u);
}

// ---------------------------------------------------------------------------

TEST(Kl, KnownValueAndIdentity) {
  EXPECT_NEAR(kl_divergence(Eigen::Vector2d(0.7, 0.3), Eigen::Vector2d(0.5, 0.5)),
              0.7 * std::log(1.4) + 0.3 * std::log(0.6), 1e-9);
  EXPECT_NEAR(kl_divergence(Eigen::Vector2d(0.7, 0.3), Eigen::Vector2d(0.5, 0.5)), 0.0823, 1e-4);
  EXPECT_NEAR(kl_divergence(Eigen::Vector3d(0.2, 0.3, 0.5), Eigen::Vector3d(0.2, 0.3, 0.5)), 0.0, 1e-12);
  const double inf_guard = kl_divergence(Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(1.0, 0.0));
  EXPECT_TRUE(std::isfinite(inf_guard));
  EXPECT_GT(inf_guard, 0.0);
}

TEST(Kl, MatchesOracleAndIsNonNegative) {
  std::mt19937_64 gen(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    Eigen::VectorXd p(4), q(4);
    for (int j = 0; j < 4; ++j) {
      p(j) = u(gen) < 0.1 ? 0.0 : u(gen);
      q(j) = u(gen) < 0.1 ? 0.0 : u(gen);
    }
    if (p.sum() == 0.0) p(0) = 1.0;
    if (q.sum() == 0.0) q(0) = 1.0;
    p /= p.sum();
    q /= q.sum();
    const double d = kl_divergence(p, q);
    ASSERT_GE(d, -1e-15);
    ASSERT_NEAR(d, oracle::kl(p, q), 1e-9);
  }
}

namespace {

Datastore store_of(const std::vector<Eigen::Vector2d>& keys, const std::vector<int>& values, std::size_t m,
                   double alpha = 0.2) {
  Datastore s;
  s.vocab = {"negative", "positive"};
  s.keys.resize(static_cast<Eigen::Index>(keys.size()), 2);
  for (std::size_t i = 0; i < keys.size(); ++i) s.keys.row(static_cast<Eigen::Index>(i)) = keys[i].transpose();
  s.values = values;
  for (std::size_t i = 0; i < keys.size(); ++i) s.source_ids.push_back("s" + std::to_string(i));
  s.m = m;
  s.alpha = alpha;
  return s;
}

}  // namespace

TEST(Knn, InterpolationHandExample) {
  const auto store = store_of({{0.5, 0.5}, {0.6, 0.4}, {0.1, 0.9}}, {1, 1, 0}, 2, 0.2);
  const KeyDistribution key{{"negative", "positive"}, Eigen::Vector2d(0.6, 0.4)};
  const auto pred = knn_predict(key, {Eigen::Vector2d(0.6, 0.4)}, store);
  EXPECT_EQ(pred.neighbors, (std::vector<std::size_t>{1, 0}));
  EXPECT_NEAR(pred.dist[0], 0.48, 1e-12);
  EXPECT_NEAR(pred.dist[1], 0.52, 1e-12);
  EXPECT_EQ(pred.label, 1);
}

TEST(Knn, AlphaZeroIgnoresNeighbours) {
  const auto store = store_of({{0.6, 0.4}, {0.6, 0.4}}, {1, 1}, 2, 0.0);
  const KeyDistribution key{{"negative", "positive"}, Eigen::Vector2d(0.6, 0.4)};
  EXPECT_EQ(knn_predict(key, {Eigen::Vector2d(0.6, 0.4)}, store).label, 0);
}

TEST(Knn, AllEntriesAsNeighboursGivesGlobalHistogram) {
  const auto store = store_of({{0.6, 0.4}, {0.1, 0.9}, {0.3, 0.7}, {0.9, 0.1}}, {1, 0, 1, 1}, 4, 1.0);
  const KeyDistribution key{{"negative", "positive"}, Eigen::Vector2d(0.5, 0.5)};
  const auto pred = knn_predict(key, {Eigen::Vector2d(0.5, 0.5)}, store);
  EXPECT_NEAR(pred.dist[0], 0.25, 1e-12);
  EXPECT_NEAR(pred.dist[1], 0.75, 1e-12);
}

TEST(Knn, NeighboursMatchBruteForce) {
  std::mt19937_64 gen(29);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + gen() % 300;
    std::vector<Eigen::Vector2d> keys;
    std::vector<int> values;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = (gen() % 4 == 0) ? 0.25 : u(gen);
      keys.emplace_back(a, 1.0 - a);
      values.push_back(static_cast<int>(gen() % 2));
    }
    const std::size_t m = 1 + gen() % n;
    const auto store = store_of(keys, values, m);
    const double t = u(gen);
    const KeyDistribution key{store.vocab, Eigen::Vector2d(t, 1.0 - t)};
    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) dist[i] = oracle::kl(key.probs, keys[i]);
    EXPECT_EQ(nearest_neighbors(key, store, m), oracle::nearest(dist, m));
  }
}

TEST(Knn, ErrorsOnBadInputs) {
  const auto store = store_of({{0.5, 0.5}}, {1}, 1);
  const KeyDistribution key{{"negative", "positive"}, Eigen::Vector2d(0.5, 0.5)};
  EXPECT_THROW(nearest_neighbors(key, store, 2), ConfigError);
  EXPECT_THROW(nearest_neighbors({{"a", "b"}, Eigen::Vector2d(0.5, 0.5)}, store, 1), ConfigError);
  EXPECT_THROW(nearest_neighbors(key, Datastore{}, 1), ConfigError);
}

TEST(Knn, BuildDatastoreKeepsOrderAndValues) {
  const Task t = fixture::sentiment_task();
  ToyVictim v(fixture::sentiment_toy(), 2);
  std::vector<LabeledExample> train;
  std::mt19937_64 gen(2);
  for (int i = 0; i < 64; ++i) {
    train.push_back(fixture::ex("t" + std::to_string(i),
                                (i % 2 ? "great " : "awful ") + join_words(fixture::random_words(gen, 4)), i % 2));
  }
  train.push_back(fixture::ex("dupA", "same words here", 0));
  train.push_back(fixture::ex("dupB", "same words here", 1));
  const auto anchors = choose_anchors(train, t.labels, 42);
  ASSERT_EQ(anchors.size(), 2u);
  EXPECT_EQ(anchors[0].label, 0);
  EXPECT_EQ(anchors[1].label, 1);
  const auto serial = build_datastore(train, anchors, t, v, default_neighbors(8), 0.2, 1);
  const auto parallel = build_datastore(train, anchors, t, v, default_neighbors(8), 0.2, 8);
  ASSERT_EQ(serial.size(), 66u);
  EXPECT_EQ(serial.m, 4u);
  EXPECT_EQ(serial.keys, parallel.keys);
  EXPECT_EQ(serial.values, parallel.values);
  EXPECT_EQ(serial.source_ids, parallel.source_ids);
  for (std::size_t i = 0; i < 64; ++i) {
    EXPECT_EQ(serial.values[i], train[i].label);
    EXPECT_TRUE(is_probability_vector(serial.keys.row(static_cast<Eigen::Index>(i)).transpose()));
  }
  EXPECT_EQ(serial.keys.row(64), serial.keys.row(65));
  EXPECT_NE(serial.values[64], serial.values[65]);

  const auto one = build_datastore({train[0]}, anchors, t, v, 1);
  EXPECT_EQ(one.size(), 1u);
  EXPECT_EQ(one.values[0], train[0].label);

  const auto back = datastore_from_json(to_json(serial), t.labels);
  EXPECT_EQ(back.keys, serial.keys);
  EXPECT_EQ(back.values, serial.values);
  EXPECT_EQ(back.m, serial.m);
  EXPECT_EQ(back.anchors, serial.anchors);
}

TEST(Knn, DefaultNeighbours) {
  EXPECT_EQ(default_neighbors(8), 4u);
  EXPECT_EQ(default_neighbors(1), 1u);
  EXPECT_EQ(default_neighbors(0), 1u);
}
