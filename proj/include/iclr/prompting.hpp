#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "iclr/corpus.hpp"
#include "iclr/distribution.hpp"

namespace iclr {

class Victim;

/// Prompt = instruction ⊕ demonstrations ⊕ query.
struct PromptSpec {
  std::optional<std::string> instruction;
  std::vector<LabeledExample> demos;
  /// Demo index → label word rendered instead of the verbalised label.
  /// Used for placeholder labels ("unknown") during label-importance scoring.
  std::map<std::size_t, std::string> label_overrides;
  LabeledExample test;
  Template tmpl;
  LabelSpace labels;

  /// Label word shown for demo i (override or verbaliser).
  std::string demo_label_word(std::size_t i) const;
  /// Throws ConfigError when a demo or the test does not match the template shape.
  void validate() const;
};

/// Builds a PromptSpec using the label space's instruction.
PromptSpec make_prompt(std::vector<LabeledExample> demos, LabeledExample test,
                       const Task& task);

/// Draws k demonstrations from the pool. With `balanced`, per-label counts
/// differ by at most one. Deterministic given the seed.
std::vector<LabeledExample> sample_demos_random(
    const std::vector<LabeledExample>& pool, std::size_t k, std::uint64_t seed,
    bool balanced, std::size_t num_labels);

std::string build_prompt(const PromptSpec& spec);

/// argmax p(y | prompt); ties go to the smallest label id.
std::pair<int, LabelDistribution> classify(const PromptSpec& spec,
                                           const Victim& victim);

/// Placement of retrieved demonstrations relative to the query.
enum class DemoOrder { most_similar_last, most_similar_first };

}  // namespace iclr
