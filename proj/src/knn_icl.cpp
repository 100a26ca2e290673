#include "iclr/knn_icl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "iclr/error.hpp"
#include "iclr/parallel.hpp"
#include "iclr/prompting.hpp"
#include "iclr/rng.hpp"
#include "iclr/victim.hpp"

namespace iclr {

std::size_t default_neighbors(std::size_t shots) { return std::max<std::size_t>(1, shots / 2); }

std::vector<LabeledExample> choose_anchors(const std::vector<LabeledExample>& pool,
                                           const LabelSpace& labels, std::uint64_t seed) {
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span(order));
  std::vector<std::optional<std::size_t>> pick(labels.size());
  for (std::size_t idx : order) {
    const int y = pool[idx].label;
    if (labels.valid(y) && !pick[y]) pick[y] = idx;
  }
  std::vector<LabeledExample> out;
  for (std::size_t y = 0; y < labels.size(); ++y) {
    if (!pick[y]) throw ConfigError("knn_icl", "no pool example for label " + labels.word(static_cast<int>(y)));
    out.push_back(pool[*pick[y]]);
  }
  return out;
}

Datastore build_datastore(const std::vector<LabeledExample>& train,
                          const std::vector<LabeledExample>& anchors, const Task& task,
                          const Victim& victim, std::size_t m, double alpha, std::size_t workers) {
  if (train.empty()) throw ConfigError("knn_icl", "training set is empty");
  if (m == 0) throw ConfigError("knn_icl", "m must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("knn_icl", "alpha must lie in [0, 1]");
  if (anchors.size() != task.labels.size()) {
    throw ConfigError("knn_icl", "anchors must hold exactly one demo per label");
  }
  std::vector<bool> seen(task.labels.size(), false);
  for (const auto& a : anchors) {
    if (!task.labels.valid(a.label) || seen[a.label]) {
      throw ConfigError("knn_icl", "anchors must hold exactly one demo per label");
    }
    seen[a.label] = true;
  }

  std::vector<KeyDistribution> keys(train.size());
  parallel_for(train.size(), workers, [&](std::size_t i) {
    try {
      keys[i] = victim.predict_key_distribution(make_prompt(anchors, train[i], task));
    } catch (const Error& e) {
      throw RuntimeFailure("knn_icl", "datastore entry " + train[i].id + ": " + e.what());
    }
  });

  Datastore store;
  store.vocab = keys.front().vocab;
  store.alpha = alpha;
  store.m = m;
  store.anchors = anchors;
  store.keys.resize(static_cast<Eigen::Index>(train.size()),
                    static_cast<Eigen::Index>(store.vocab.size()));
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (keys[i].vocab != store.vocab) {
      throw RuntimeFailure("knn_icl", "datastore entry " + train[i].id + " has a different key vocabulary");
    }
    store.keys.row(static_cast<Eigen::Index>(i)) = keys[i].probs.transpose();
    store.values.push_back(train[i].label);
    store.source_ids.push_back(train[i].id);
  }
  return store;
}

double kl_divergence(const Eigen::Ref<const Eigen::VectorXd>& p,
                     const Eigen::Ref<const Eigen::VectorXd>& q) {
  if (p.size() != q.size()) throw ConfigError("knn_icl", "KL of vectors with different sizes");
  // plain loops: equal rows must give equal distances whatever their alignment
  double sp = 0.0, sq = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    sp += p(i) + kKlSmoothing;
    sq += q(i) + kKlSmoothing;
  }
  double d = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double a = (p(i) + kKlSmoothing) / sp;
    const double b = (q(i) + kKlSmoothing) / sq;
    d += a * std::log(a / b);
  }
  return d;
}

double kl_divergence(const KeyDistribution& p, const KeyDistribution& q) {
  if (p.vocab != q.vocab) throw ConfigError("knn_icl", "KL of distributions over different vocabularies");
  return kl_divergence(p.probs, q.probs);
}

std::vector<std::size_t> nearest_neighbors(const KeyDistribution& test_key, const Datastore& store,
                                           std::size_t m) {
  if (store.size() == 0) throw ConfigError("knn_icl", "datastore is empty");
  if (m == 0 || m > store.size()) {
    throw ConfigError("knn_icl", "m=" + std::to_string(m) + " does not fit a datastore of " +
                                     std::to_string(store.size()));
  }
  if (test_key.vocab != store.vocab) throw ConfigError("knn_icl", "test key vocabulary differs from the datastore");
  std::vector<double> dist(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    dist[i] = kl_divergence(test_key.probs, store.keys.row(static_cast<Eigen::Index>(i)).transpose());
  }
  std::vector<std::size_t> idx(store.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
                    });
  idx.resize(m);
  return idx;
}

KnnPrediction knn_predict(const KeyDistribution& test_key, const LabelDistribution& lm_dist,
                          const Datastore& store) {
  KnnPrediction out;
  out.neighbors = nearest_neighbors(test_key, store, store.m);
  Eigen::VectorXd votes = Eigen::VectorXd::Zero(lm_dist.probs.size());
  for (std::size_t n : out.neighbors) {
    const int y = store.values[n];
    if (y < 0 || y >= votes.size()) throw ConfigError("knn_icl", "datastore value out of range");
    votes(y) += 1.0;
  }
  votes /= static_cast<double>(out.neighbors.size());
  out.dist.probs = (1.0 - store.alpha) * lm_dist.probs + store.alpha * votes;
  out.label = out.dist.argmax();
  return out;
}

nlohmann::json to_json(const Datastore& store) {
  nlohmann::json j;
  j["vocab"] = store.vocab;
  j["alpha"] = store.alpha;
  j["m"] = store.m;
  nlohmann::json anchors = nlohmann::json::array();
  for (const auto& a : store.anchors) anchors.push_back(to_json(a));
  j["anchors"] = std::move(anchors);
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto row = store.keys.row(static_cast<Eigen::Index>(i));
    entries.push_back({{"source_id", store.source_ids[i]},
                       {"value", store.values[i]},
                       {"probs", std::vector<double>(row.data(), row.data() + row.size())}});
  }
  j["entries"] = std::move(entries);
  return j;
}

Datastore datastore_from_json(const nlohmann::json& j, const LabelSpace& labels) {
  Datastore store;
  try {
    store.vocab = j.at("vocab").get<std::vector<std::string>>();
    store.alpha = j.at("alpha").get<double>();
    store.m = j.at("m").get<std::size_t>();
    for (const auto& a : j.at("anchors")) store.anchors.push_back(example_from_json(a, labels));
    const auto& entries = j.at("entries");
    store.keys.resize(static_cast<Eigen::Index>(entries.size()),
                      static_cast<Eigen::Index>(store.vocab.size()));
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto probs = entries[i].at("probs").get<std::vector<double>>();
      if (probs.size() != store.vocab.size()) throw ConfigError("knn_icl", "datastore key has the wrong length");
      for (std::size_t c = 0; c < probs.size(); ++c) {
        store.keys(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = probs[c];
      }
      store.values.push_back(entries[i].at("value").get<int>());
      store.source_ids.push_back(entries[i].at("source_id").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("knn_icl", std::string("malformed datastore: ") + e.what());
  }
  return store;
}

void save_datastore(const std::filesystem::path& path, const Datastore& store) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("knn_icl", "cannot write " + path.string());
  out << to_json(store).dump() << '\n';
}

}  // namespace iclr
