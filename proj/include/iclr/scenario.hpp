#pragma once

#include <memory>

#include "iclr/knn_icl.hpp"
#include "iclr/prompting.hpp"

namespace iclr {

class Victim;

/// A fully specified classification: the prompt, plus the datastore when the
/// prediction is kNN-interpolated. Re-evaluating a Scenario is a replay.
struct Scenario {
  PromptSpec prompt;
  std::shared_ptr<const Datastore> store;
};

struct Prediction {
  int label = 0;
  LabelDistribution dist;
};

Prediction evaluate_scenario(const Scenario& scenario, const Victim& victim);

}  // namespace iclr
