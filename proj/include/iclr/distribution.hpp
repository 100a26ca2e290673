#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace iclr {

/// p(y | prompt) over label ids.
struct LabelDistribution {
  Eigen::VectorXd probs;

  double operator[](int label) const { return probs(label); }
  std::size_t size() const { return static_cast<std::size_t>(probs.size()); }
  /// Arg max with ties broken towards the smallest label id.
  int argmax() const;
};

/// p(v | prompt) over a fixed key vocabulary; the kNN datastore key.
struct KeyDistribution {
  std::vector<std::string> vocab;
  Eigen::VectorXd probs;
};

constexpr double kProbabilityTolerance = 1e-9;

bool is_probability_vector(const Eigen::Ref<const Eigen::VectorXd>& p,
                           double tol = kProbabilityTolerance);

/// Numerically stable softmax of logits / temperature.
Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits,
                        double temperature = 1.0);

/// Total variation distance 0.5 * sum |p - q|.
double total_variation(const LabelDistribution& p, const LabelDistribution& q);

}  // namespace iclr
