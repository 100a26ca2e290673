#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "iclr/distribution.hpp"
#include "iclr/error.hpp"
#include "iclr/parallel.hpp"
#include "iclr/remote.hpp"
#include "iclr/victim.hpp"
#include "support.hpp"

// after Eigen: <resolv.h> defines a _res macro
#include <httplib.h>

using namespace iclr;

namespace {

// Independent evaluation of the toy score for two labels.
Eigen::Vector2d toy_oracle(const std::vector<std::string>& test_tokens,
                           const std::vector<std::pair<std::vector<std::string>, int>>& demos,
                           const Lexicon& lex, double lambda, double mu, double temp) {
  double z[2] = {0.0, 0.0};
  for (const auto& t : test_tokens) {
    auto it = lex.find(t);
    if (it == lex.end()) continue;
    z[0] += lambda * it->second[0];
    z[1] += lambda * it->second[1];
  }
  const std::set<std::string> ts(test_tokens.begin(), test_tokens.end());
  for (const auto& [toks, y] : demos) {
    const std::set<std::string> ds(toks.begin(), toks.end());
    std::size_t inter = 0;
    for (const auto& t : ds) inter += ts.count(t);
    const std::size_t uni = ts.size() + ds.size() - inter;
    z[y] += mu * (uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni));
  }
  const double a = std::exp(z[0] / temp), b = std::exp(z[1] / temp);
  return {a / (a + b), b / (a + b)};
}

}  // namespace

TEST(Distribution, SoftmaxAndArgmax) {
  const Eigen::VectorXd p = softmax(Eigen::Vector2d(0.0, 2.0));
  EXPECT_NEAR(p(0), 0.1192, 1e-4);
  EXPECT_NEAR(p(1), 0.8808, 1e-4);
  EXPECT_TRUE(is_probability_vector(p));
  EXPECT_EQ(LabelDistribution{Eigen::Vector3d(0.4, 0.2, 0.4)}.argmax(), 0);
  const Eigen::VectorXd big = softmax(Eigen::Vector2d(1000.0, 1001.0));
  EXPECT_TRUE(big.allFinite());
  EXPECT_NEAR(total_variation({Eigen::Vector2d(0.2, 0.8)}, {Eigen::Vector2d(0.5, 0.5)}), 0.3, 1e-12);
}

TEST(ToyVictim, EmptyLexiconNoDemosIsUniform) {
  ToyVictimConfig cfg;
  const auto d = toy_score("anything at all", {}, cfg, 3);
  for (int y = 0; y < 3; ++y) EXPECT_NEAR(d[y], 1.0 / 3.0, 1e-12);
}

TEST(ToyVictim, SingleLexiconEntryGivesSoftmaxOfWeights) {
  ToyVictimConfig cfg;
  cfg.lexicon = {{"great", {0.0, 2.0}}};
  const auto d = toy_score("great phone", {}, cfg, 2);
  EXPECT_NEAR(d[0], 0.1192, 1e-4);
  EXPECT_NEAR(d[1], 0.8808, 1e-4);
}

TEST(ToyVictim, OverlappingPositiveDemosFavourPositive) {
  ToyVictimConfig cfg;
  // test {a, b}, demo {a, c}: jaccard 1/3; demo {a, b, c, d}: 0.5
  const std::vector<VotingDemo> demos{{"a b c d", 1}, {"a b c d", 1}};
  const auto d = toy_score("a b", demos, cfg, 2);
  EXPECT_GT(d[1], d[0]);
  EXPECT_DOUBLE_EQ(jaccard(std::vector<std::string>{"a", "b"},
                           std::vector<std::string>{"a", "b", "c", "d"}),
                   0.5);
}

TEST(ToyVictim, ZeroWeightsGiveUniform) {
  auto cfg = fixture::sentiment_toy(0.0, 0.0);
  const std::vector<VotingDemo> demos{{"great great", 1}};
  const auto d = toy_score("great film", demos, cfg, 2);
  EXPECT_NEAR(d[0], 0.5, 1e-12);
}

TEST(ToyVictim, LabelSwapMovesExactlyOneVote) {
  auto cfg = fixture::sentiment_toy(1.0, 2.0);
  const std::string test = "a great film about love";
  std::vector<VotingDemo> demos{{"a boring film", 0}, {"great acting", 1}};
  const auto before = toy_score(test, demos, cfg, 2);
  demos[0].label = 1;
  const auto after = toy_score(test, demos, cfg, 2);
  const double j = jaccard(tokenize("a boring film"), tokenize(test));
  const double shift_before = std::log(before[1] / before[0]);
  const double shift_after = std::log(after[1] / after[0]);
  EXPECT_NEAR(shift_after - shift_before, 2.0 * cfg.mu_demo * j, 1e-12);
}

TEST(ToyVictim, DuplicateDemoDoublesItsVote) {
  ToyVictimConfig cfg;
  const auto one = toy_score("x y", std::vector<VotingDemo>{{"x z", 1}}, cfg, 2);
  const auto two = toy_score("x y", std::vector<VotingDemo>{{"x z", 1}, {"x z", 1}}, cfg, 2);
  EXPECT_NEAR(std::log(two[1] / two[0]), 2.0 * std::log(one[1] / one[0]), 1e-12);
}

TEST(ToyVictim, PlaceholderLabelCastsNoVote) {
  ToyVictimConfig cfg;
  const auto d = toy_score("x y", std::vector<VotingDemo>{{"x y", std::nullopt}}, cfg, 2);
  EXPECT_NEAR(d[0], 0.5, 1e-12);
}

TEST(ToyVictim, MatchesIndependentOracleOnRandomInputs) {
  std::mt19937_64 gen(11);
  const auto cfg0 = fixture::sentiment_toy();
  std::vector<std::string> vocab{"great", "bad", "film", "plot", "love", "awful", "a", "the"};
  std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1), len(1, 6), nd(0, 5);
  std::uniform_real_distribution<double> w(0.1, 3.0);
  for (int trial = 0; trial < 300; ++trial) {
    auto cfg = cfg0;
    cfg.lambda_lex = w(gen);
    cfg.mu_demo = w(gen);
    cfg.temperature = w(gen);
    auto sentence = [&] {
      std::vector<std::string> t;
      for (std::size_t i = len(gen); i > 0; --i) t.push_back(vocab[pick(gen)]);
      return t;
    };
    const auto test = sentence();
    std::vector<VotingDemo> demos;
    std::vector<std::pair<std::vector<std::string>, int>> odemos;
    for (std::size_t i = nd(gen); i > 0; --i) {
      const auto s = sentence();
      const int y = static_cast<int>(gen() % 2);
      demos.push_back({join_words(s), y});
      odemos.emplace_back(s, y);
    }
    const auto got = toy_score(join_words(test), demos, cfg, 2);
    const auto want = toy_oracle(test, odemos, cfg.lexicon, cfg.lambda_lex, cfg.mu_demo, cfg.temperature);
    ASSERT_NEAR(got[0], want(0), 1e-12);
    ASSERT_NEAR(got[1], want(1), 1e-12);
  }
}

TEST(ToyVictim, AddingAVotingDemoNeverLowersItsLabel) {
  std::mt19937_64 gen(5);
  const auto cfg = fixture::sentiment_toy();
  for (int trial = 0; trial < 500; ++trial) {
    const auto test = join_words(fixture::random_words(gen, 6, 12));
    std::vector<VotingDemo> demos;
    for (int i = 0; i < 3; ++i) demos.push_back({join_words(fixture::random_words(gen, 5, 12)), static_cast<int>(gen() % 2)});
    const auto before = toy_score(test, demos, cfg, 2);
    const int y = static_cast<int>(gen() % 2);
    demos.push_back({join_words(fixture::random_words(gen, 5, 12)), y});
    const auto after = toy_score(test, demos, cfg, 2);
    ASSERT_GE(after[y], before[y] - 1e-15);
  }
}

TEST(ToyVictim, ArgmaxInvariantUnderTemperature) {
  std::mt19937_64 gen(9);
  for (int trial = 0; trial < 200; ++trial) {
    auto cfg = fixture::sentiment_toy();
    const auto test = "great " + join_words(fixture::random_words(gen, 4, 6)) + " bad";
    std::vector<VotingDemo> demos{{join_words(fixture::random_words(gen, 4, 6)), 0}};
    const int base = toy_score(test, demos, cfg, 2).argmax();
    cfg.temperature = 0.05 + static_cast<double>(gen() % 1000) / 100.0;
    ASSERT_EQ(toy_score(test, demos, cfg, 2).argmax(), base);
  }
}

TEST(ToyVictim, KeyDistributionOverLabelWordsEqualsLabelDistribution) {
  const Task t = fixture::sentiment_task();
  ToyVictim v(fixture::sentiment_toy(), 2);
  const auto spec = make_prompt({fixture::ex("d", "a great film", 1)}, fixture::ex("t", "great plot", 1), t);
  const auto lab = v.predict_label_distribution(spec);
  const auto key = v.predict_key_distribution(spec);
  EXPECT_EQ(key.vocab, t.labels.words());
  EXPECT_TRUE(key.probs.isApprox(lab.probs, 1e-15));
}

TEST(ToyVictim, ConfigValidation) {
  ToyVictimConfig cfg;
  cfg.temperature = 0.0;
  EXPECT_THROW(cfg.validate(2), ConfigError);
  cfg.temperature = 1.0;
  cfg.lexicon = {{"x", {1.0}}};
  EXPECT_THROW(cfg.validate(2), ConfigError);
}

// ---------------------------------------------------------------------------
// Remote completion client

namespace {

class ScriptedTransport : public HttpTransport {
 public:
  explicit ScriptedTransport(std::vector<HttpResponse> script) : script_(std::move(script)) {}
  HttpResponse post(const std::string& path, const std::string& body,
                    const HttpHeaders& headers) const override {
    std::lock_guard lock(mu_);
    paths.push_back(path);
    bodies.push_back(body);
    last_headers = headers;
    const std::size_t i = std::min(calls++, script_.size() - 1);
    if (script_[i].status == 0) throw RuntimeFailure("victim", "connection refused");
    return script_[i];
  }
  mutable std::vector<std::string> paths;
  mutable std::vector<std::string> bodies;
  mutable HttpHeaders last_headers;
  mutable std::size_t calls = 0;

 private:
  std::vector<HttpResponse> script_;
  mutable std::mutex mu_;
};

std::string completion(const nlohmann::json& top) {
  nlohmann::json j;
  j["choices"] = nlohmann::json::array({{{"text", " true"}, {"logprobs", {{"top_logprobs", {top}}}}}});
  return j.dump();
}

RemoteConfig remote_cfg() {
  RemoteConfig c;
  c.base_url = "http://localhost:1";
  c.model = "test-model";
  c.api_key_env = "ICLR_TEST_KEY_UNSET";
  c.logprobs = 5;
  c.max_retries = 3;
  c.initial_backoff = std::chrono::milliseconds(100);
  return c;
}

}  // namespace

TEST(Remote, ExponentiatesAndNormalisesLabelLogprobs) {
  auto tr = std::make_shared<ScriptedTransport>(
      std::vector<HttpResponse>{{200, completion({{" true", -0.1}, {" false", -2.4}, {" maybe", -5.0}})}});
  RemoteVictim v(remote_cfg(), tr);
  const Task t = fixture::pair_task();
  const auto d = v.predict_label_distribution(make_prompt({}, fixture::pair_ex("q", "p", "h", 0), t));
  const double a = std::exp(-0.1), b = std::exp(-2.4);
  EXPECT_NEAR(d[0], a / (a + b), 1e-12);
  EXPECT_NEAR(d[1], b / (a + b), 1e-12);

  const auto req = nlohmann::json::parse(tr->bodies.at(0));
  EXPECT_EQ(req["model"], "test-model");
  EXPECT_EQ(req["max_tokens"], 1);
  EXPECT_EQ(req["temperature"], 0);
  EXPECT_EQ(req["logprobs"], 5);
  EXPECT_TRUE(req["prompt"].get<std::string>().ends_with("True or False?\nAnswer:"));
  EXPECT_EQ(tr->paths.at(0), "/v1/completions");
}

TEST(Remote, MissingLabelWordGetsTheFloor) {
  const auto p = restrict_logprobs({{" true", -0.5}, {"other", -1.0}}, {"true", "false"});
  EXPECT_NEAR(p.sum(), 1.0, 1e-15);
  const double a = std::exp(-0.5);
  EXPECT_NEAR(p(1), kMissingLogprobFloor / (a + kMissingLogprobFloor), 1e-15);
  EXPECT_THROW(restrict_logprobs({{"other", -1.0}}, {"true", "false"}), RuntimeFailure);
}

TEST(Remote, DuplicateSpellingsAreSummed) {
  const auto p = restrict_logprobs({{" True", std::log(0.2)}, {"true", std::log(0.2)}, {" false", std::log(0.4)}},
                                   {"true", "false"});
  EXPECT_NEAR(p(0), 0.5, 1e-12);
}

TEST(Remote, RetriesTransientFailuresWithDoublingBackoff) {
  const std::string ok = completion({{" true", -0.1}, {" false", -2.4}});
  auto tr = std::make_shared<ScriptedTransport>(
      std::vector<HttpResponse>{{503, "busy"}, {0, ""}, {429, "slow down"}, {200, ok}});
  std::vector<long> sleeps;
  RemoteVictim v(remote_cfg(), tr, [&](std::chrono::milliseconds d) { sleeps.push_back(d.count()); });
  const Task t = fixture::pair_task();
  EXPECT_NO_THROW(v.predict_label_distribution(make_prompt({}, fixture::pair_ex("q", "p", "h", 0), t)));
  EXPECT_EQ(tr->calls, 4u);
  EXPECT_EQ(sleeps, (std::vector<long>{100, 200, 400}));
}

TEST(Remote, GivesUpAfterMaxRetriesAndOnClientErrors) {
  const Task t = fixture::pair_task();
  const auto spec = make_prompt({}, fixture::pair_ex("q", "p", "h", 0), t);
  auto busy = std::make_shared<ScriptedTransport>(std::vector<HttpResponse>{{500, "x"}});
  RemoteVictim v1(remote_cfg(), busy, [](auto) {});
  EXPECT_THROW(v1.predict_label_distribution(spec), RuntimeFailure);
  EXPECT_EQ(busy->calls, 4u);

  auto denied = std::make_shared<ScriptedTransport>(std::vector<HttpResponse>{{401, "no"}});
  RemoteVictim v2(remote_cfg(), denied, [](auto) {});
  EXPECT_THROW(v2.predict_label_distribution(spec), RuntimeFailure);
  EXPECT_EQ(denied->calls, 1u);

  auto junk = std::make_shared<ScriptedTransport>(std::vector<HttpResponse>{{200, R"({"choices":[{"text":"x"}]})"}});
  RemoteVictim v3(remote_cfg(), junk, [](auto) {});
  EXPECT_THROW(v3.predict_label_distribution(spec), RuntimeFailure);
}

TEST(Remote, SendsBearerTokenFromEnvironment) {
  ::setenv("ICLR_TEST_KEY_SET", "sekrit", 1);
  auto cfg = remote_cfg();
  cfg.api_key_env = "ICLR_TEST_KEY_SET";
  auto tr = std::make_shared<ScriptedTransport>(
      std::vector<HttpResponse>{{200, completion({{" true", -0.1}, {" false", -2.4}})}});
  RemoteVictim v(cfg, tr);
  v.predict_label_distribution(make_prompt({}, fixture::pair_ex("q", "p", "h", 0), fixture::pair_task()));
  ASSERT_EQ(tr->last_headers.size(), 1u);
  EXPECT_EQ(tr->last_headers[0].second, "Bearer sekrit");
  ::unsetenv("ICLR_TEST_KEY_SET");
}

TEST(Remote, KeyDistributionIncludesExtraTokens) {
  auto cfg = remote_cfg();
  cfg.extra_key_tokens = {"maybe"};
  auto tr = std::make_shared<ScriptedTransport>(
      std::vector<HttpResponse>{{200, completion({{" true", -0.1}, {" false", -2.4}, {" maybe", -1.0}})}});
  RemoteVictim v(cfg, tr);
  const auto k = v.predict_key_distribution(make_prompt({}, fixture::pair_ex("q", "p", "h", 0), fixture::pair_task()));
  ASSERT_EQ(k.vocab, (std::vector<std::string>{"true", "false", "maybe"}));
  EXPECT_TRUE(is_probability_vector(k.probs));
  EXPECT_GT(k.probs(2), k.probs(1));
}

TEST(Remote, TalksToARealHttpServerAndBoundsConcurrency) {
  httplib::Server server;
  std::atomic<int> active{0}, peak{0}, hits{0};
  server.Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
    const int now = ++active;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    const auto body = nlohmann::json::parse(req.body);
    const bool positive = body["prompt"].get<std::string>().find("yes") != std::string::npos;
    res.set_content(completion(positive ? nlohmann::json{{" true", -0.1}, {" false", -2.4}}
                                        : nlohmann::json{{" true", -2.4}, {" false", -0.1}}),
                    "application/json");
    ++hits;
    --active;
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  auto cfg = remote_cfg();
  cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
  cfg.max_in_flight = 2;
  RemoteVictim v(cfg, std::make_shared<HttplibTransport>(cfg.base_url, std::chrono::seconds(5)));
  const Task t = fixture::pair_task();
  std::vector<int> labels(8, -1);
  parallel_for(8, 8, [&](std::size_t i) {
    const auto spec = make_prompt({}, fixture::pair_ex("q", "p", i % 2 ? "yes" : "no", 0), t);
    labels[i] = v.predict_label_distribution(spec).argmax();
  });
  server.stop();
  th.join();
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(labels[i], i % 2 ? 0 : 1);
  EXPECT_EQ(hits.load(), 8);
  EXPECT_LE(peak.load(), 2);
}

TEST(Remote, RejectsBadUrls) {
  EXPECT_THROW(HttplibTransport("localhost:80"), ConfigError);
  auto cfg = remote_cfg();
  cfg.max_in_flight = 0;
  EXPECT_THROW(RemoteVictim(cfg, std::make_shared<ScriptedTransport>(std::vector<HttpResponse>{{200, ""}})),
               ConfigError);
}
