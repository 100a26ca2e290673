#include "iclr/prompting.hpp"

#include <algorithm>
#include <numeric>

#include "iclr/error.hpp"
#include "iclr/rng.hpp"
#include "iclr/victim.hpp"

namespace iclr {

std::string PromptSpec::demo_label_word(std::size_t i) const {
  if (auto it = label_overrides.find(i); it != label_overrides.end()) return it->second;
  return labels.word(demos.at(i).label);
}

void PromptSpec::validate() const {
  for (const auto& d : demos) {
    if (d.shape() != tmpl.shape) {
      throw ConfigError("prompting", "demo " + d.id + " does not match the template shape");
    }
    if (!labels.valid(d.label)) {
      throw ConfigError("prompting", "demo " + d.id + " has an invalid label");
    }
  }
  if (test.shape() != tmpl.shape) {
    throw ConfigError("prompting", "test " + test.id + " does not match the template shape");
  }
}

PromptSpec make_prompt(std::vector<LabeledExample> demos, LabeledExample test, const Task& task) {
  PromptSpec spec;
  spec.instruction = task.labels.instruction();
  spec.demos = std::move(demos);
  spec.test = std::move(test);
  spec.tmpl = task.tmpl;
  spec.labels = task.labels;
  return spec;
}

std::vector<LabeledExample> sample_demos_random(const std::vector<LabeledExample>& pool,
                                                std::size_t k, std::uint64_t seed, bool balanced,
                                                std::size_t num_labels) {
  if (k == 0) return {};
  if (k > pool.size()) {
    throw ConfigError("prompting", "cannot draw " + std::to_string(k) + " demos from a pool of " +
                                       std::to_string(pool.size()));
  }
  Rng rng(seed);
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span(order));

  std::vector<LabeledExample> out;
  out.reserve(k);
  if (!balanced) {
    for (std::size_t i = 0; i < k; ++i) out.push_back(pool[order[i]]);
    return out;
  }
  if (num_labels == 0) throw ConfigError("prompting", "balanced sampling needs a label count");

  std::vector<std::size_t> label_order(num_labels);
  std::iota(label_order.begin(), label_order.end(), 0);
  rng.shuffle(std::span(label_order));
  std::vector<std::size_t> quota(num_labels, k / num_labels);
  for (std::size_t r = 0; r < k % num_labels; ++r) ++quota[label_order[r]];

  std::vector<std::size_t> available(num_labels, 0);
  for (const auto& e : pool) {
    if (e.label >= 0 && static_cast<std::size_t>(e.label) < num_labels) ++available[e.label];
  }
  for (std::size_t y = 0; y < num_labels; ++y) {
    if (available[y] < quota[y]) {
      throw ConfigError("prompting", "label " + std::to_string(y) + " has " +
                                         std::to_string(available[y]) + " pool examples, need " +
                                         std::to_string(quota[y]));
    }
  }
  for (std::size_t idx : order) {
    const auto y = static_cast<std::size_t>(pool[idx].label);
    if (y < num_labels && quota[y] > 0) {
      --quota[y];
      out.push_back(pool[idx]);
      if (out.size() == k) break;
    }
  }
  return out;
}

std::string build_prompt(const PromptSpec& spec) {
  spec.validate();
  std::string out;
  bool first = true;
  const auto append = [&](const std::string& part) {
    if (!first) out += spec.tmpl.separator;
    out += part;
    first = false;
  };
  if (spec.instruction && !spec.instruction->empty()) append(*spec.instruction);
  for (std::size_t i = 0; i < spec.demos.size(); ++i) {
    append(render_demo_with_word(spec.demos[i], spec.tmpl, spec.demo_label_word(i)));
  }
  append(render_query(spec.test, spec.tmpl));
  return out;
}

std::pair<int, LabelDistribution> classify(const PromptSpec& spec, const Victim& victim) {
  LabelDistribution dist = victim.predict_label_distribution(spec);
  if (dist.size() != spec.labels.size()) {
    throw RuntimeFailure("prompting", "victim returned " + std::to_string(dist.size()) +
                                          " probabilities for " +
                                          std::to_string(spec.labels.size()) + " labels");
  }
  const int label = dist.argmax();
  return {label, std::move(dist)};
}

}  // namespace iclr
