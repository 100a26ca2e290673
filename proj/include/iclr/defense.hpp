#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "iclr/attacks.hpp"
#include "iclr/retrieval.hpp"

namespace iclr {

class Victim;

struct Provenance {
  std::string style;
  std::size_t edits = 0;
  bool operator==(const Provenance&) const = default;
};

/// Retrieval base for DARD: the original pool plus successful adversarial
/// variants, each linked to its origin.
struct AugmentedPool {
  DemoPool base;
  std::vector<LabeledExample> variants;
  std::map<std::string, std::vector<Provenance>> provenance;
  /// Number of distinct examples selected for attack.
  std::size_t selected = 0;
  /// base ∪ variants, re-indexed.
  DemoPool merged;
};

struct DardConfig {
  std::size_t k = 8;
  RetrievalMethod method = RetrievalMethod::bm25;
  std::vector<TestAttackStyle> styles{TestAttackStyle::bugger, TestAttackStyle::fooler};
  AttackBudget budget{0.4, 32, 5000};
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  /// Variants are appended here as JSON lines while the build runs.
  std::optional<std::filesystem::path> checkpoint;
  /// Reuse variants already present in the checkpoint.
  bool resume = false;
  /// Polled between examples; when set the build stops after flushing.
  const std::atomic<bool>* cancel = nullptr;
};

/// Union of top-k retrievals over the test set, deduplicated by id, in
/// first-retrieved order.
std::vector<std::size_t> dard_selection(const DemoPool& pool,
                                        const std::vector<LabeledExample>& test_set,
                                        std::size_t k, RetrievalMethod method);

/// Attacks every selected example in a one-shot prompt (anchor = the most
/// similar other pool example) under each style; successes become variants.
AugmentedPool dard_build(const DemoPool& pool, const std::vector<LabeledExample>& test_set,
                         const Task& task, const DardConfig& cfg,
                         const GeneratorSet& generators, const Victim& victim);

/// retrieve_topk over base ∪ variants with lineage deduplication forced on.
RetrievalResult dard_retrieve(const AugmentedPool& apool, const LabeledExample& query,
                              std::size_t k, RetrievalMethod method);

struct CheckpointEntry {
  LabeledExample variant;
  Provenance provenance;
};
std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path,
                                             const LabelSpace& labels);

enum class AugmentMode { addition, deletion };

/// Random character insertions (lowercase letter at a random position) or
/// deletions (never empties a word) per text. Labels unchanged.
DemoPool augment_random(const DemoPool& pool, AugmentMode mode, std::size_t per_text_edits,
                        std::uint64_t seed);

}  // namespace iclr
