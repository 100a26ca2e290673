#include "iclr/scenario.hpp"

#include "iclr/error.hpp"
#include "iclr/victim.hpp"

namespace iclr {

Prediction evaluate_scenario(const Scenario& scenario, const Victim& victim) {
  auto [label, dist] = classify(scenario.prompt, victim);
  if (!scenario.store) return {label, std::move(dist)};
  const KeyDistribution key = victim.predict_key_distribution(scenario.prompt);
  KnnPrediction knn = knn_predict(key, dist, *scenario.store);
  return {knn.label, std::move(knn.dist)};
}

}  // namespace iclr
