#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iclr/corpus.hpp"
#include "iclr/distribution.hpp"
#include "iclr/retrieval.hpp"

namespace iclr {

class Victim;

/// Smoothing added to both arguments of kl_divergence before renormalising.
constexpr double kKlSmoothing = 1e-10;
constexpr double kDefaultKnnAlpha = 0.2;

/// kNN-ICL datastore: one (key, label) entry per training example. Keys are
/// rows of `keys`, all over `vocab`.
struct Datastore {
  std::vector<std::string> vocab;
  RowMatrix keys;
  std::vector<int> values;
  std::vector<std::string> source_ids;
  /// One demonstration per label, used in every datastore prompt.
  std::vector<LabeledExample> anchors;
  double alpha = kDefaultKnnAlpha;
  std::size_t m = 1;

  std::size_t size() const { return values.size(); }
  KeyDistribution key(std::size_t i) const { return {vocab, keys.row(i).transpose()}; }
};

/// m = k/2, at least 1.
std::size_t default_neighbors(std::size_t shots);

/// First pool example of each label after a seeded shuffle.
std::vector<LabeledExample> choose_anchors(const std::vector<LabeledExample>& pool,
                                           const LabelSpace& labels, std::uint64_t seed);

/// Queries the victim with anchors ⊕ x_i for every training example.
/// Entries keep input order even when `workers` > 1.
Datastore build_datastore(const std::vector<LabeledExample>& train,
                          const std::vector<LabeledExample>& anchors, const Task& task,
                          const Victim& victim, std::size_t m,
                          double alpha = kDefaultKnnAlpha, std::size_t workers = 1);

/// D_KL(p || q) in nats with kKlSmoothing applied to both arguments.
double kl_divergence(const Eigen::Ref<const Eigen::VectorXd>& p,
                     const Eigen::Ref<const Eigen::VectorXd>& q);
/// Throws ConfigError when the vocabularies differ.
double kl_divergence(const KeyDistribution& p, const KeyDistribution& q);

/// Indices of the m entries with the smallest D_KL(test || key); ties go to
/// the smaller entry index. Result is sorted by (distance, index).
std::vector<std::size_t> nearest_neighbors(const KeyDistribution& test_key,
                                           const Datastore& store, std::size_t m);

struct KnnPrediction {
  int label = 0;
  LabelDistribution dist;
  std::vector<std::size_t> neighbors;
};

/// final = (1 - α)·lm_dist + α·votes, votes = neighbour label counts / m.
KnnPrediction knn_predict(const KeyDistribution& test_key, const LabelDistribution& lm_dist,
                          const Datastore& store);

nlohmann::json to_json(const Datastore& store);
Datastore datastore_from_json(const nlohmann::json& j, const LabelSpace& labels);
void save_datastore(const std::filesystem::path& path, const Datastore& store);

}  // namespace iclr
