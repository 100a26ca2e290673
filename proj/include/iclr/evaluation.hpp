#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "iclr/attacks.hpp"
#include "iclr/defense.hpp"
#include "iclr/knn_icl.hpp"
#include "iclr/prompting.hpp"
#include "iclr/retrieval.hpp"

namespace iclr {

class Victim;

enum class Method { icl, knn_icl, ricl_bm25, ricl_embed };
enum class AttackKind {
  none,
  bugger,
  fooler,
  masked,
  advicl,
  swap_labels,
  swap_labels_fix,
  irrelevant
};
enum class DefenseKind { none, dard, random_addition, random_deletion };

std::string_view to_string(Method m);
std::string_view to_string(AttackKind a);
std::string_view to_string(DefenseKind d);
Method parse_method(std::string_view name);
AttackKind parse_attack(std::string_view name);
DefenseKind parse_defense(std::string_view name);
/// Valid names, comma separated, for error messages.
std::string method_names();
std::string attack_names();
std::string defense_names();

struct RunConfig {
  std::string dataset = "synthetic";
  Task task;
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> test;
  std::vector<std::string> ood_corpus;

  Method method = Method::icl;
  std::size_t shots = 8;
  std::uint64_t seed = 42;
  bool balanced = true;
  DemoOrder order = DemoOrder::most_similar_last;

  AttackKind attack = AttackKind::none;
  /// Budget for the test-sample attacks (bugger, fooler, masked).
  AttackBudget test_budget{0.4, 32, 5000};
  /// Budget for AdvICL and the label attacks.
  AttackBudget demo_budget{0.15, 32, 5000};
  double irrelevant_rate = 0.5;

  DefenseKind defense = DefenseKind::none;
  std::vector<TestAttackStyle> dard_styles{TestAttackStyle::bugger, TestAttackStyle::fooler,
                                           TestAttackStyle::masked};
  std::size_t random_edits = 1;
  std::optional<std::filesystem::path> dard_checkpoint;

  double knn_alpha = kDefaultKnnAlpha;
  /// 0 selects shots / 2.
  std::size_t knn_m = 0;

  std::size_t workers = 1;

  GeneratorSet generators;
  std::shared_ptr<const Embedder> embedder;
  std::shared_ptr<const Tokenizer> tokenizer = default_tokenizer();
  std::shared_ptr<const Victim> victim;
  /// Victim used to build DARD variants; defaults to `victim`.
  std::shared_ptr<const Victim> dard_victim;

  void validate() const;
};

/// Everything needed to classify one test input under a method: the pool,
/// the datastore and the demo-selection policy.
class Pipeline {
 public:
  Pipeline(const RunConfig& cfg, DemoPool pool);

  /// Demonstrations for ICL are drawn with derive_seed(seed, test.id), so a
  /// perturbed test input (same id) keeps its demonstrations.
  Scenario scenario_for(const LabeledExample& test) const;
  ScenarioBuilder builder() const;

  const DemoPool& pool() const { return pool_; }
  const std::shared_ptr<const Datastore>& store() const { return store_; }

 private:
  const RunConfig* cfg_;
  DemoPool pool_;
  bool dedup_ = false;
  std::vector<LabeledExample> anchors_;
  std::shared_ptr<const Datastore> store_;
};

/// Pool after the configured defense (DARD variants or random augmentation).
DemoPool defended_pool(const RunConfig& cfg, const DemoPool& base, AugmentedPool* dard_out = nullptr);

struct CleanRun {
  double accuracy = 0.0;
  std::vector<int> predictions;
};

CleanRun run_clean(const RunConfig& cfg);

struct SampleRecord {
  std::string id;
  int gold = 0;
  int clean_pred = 0;
  std::optional<int> attack_pred;
  bool skipped = false;
  bool success = false;
  bool aborted = false;
  std::size_t edits = 0;
  std::size_t queries = 0;
  /// Test input as edited by a test-sample attack.
  std::optional<LabeledExample> perturbed_test;
};

struct RobustnessReport {
  std::string dataset;
  std::string method;
  std::string attack;
  std::string defense;
  std::size_t shots = 0;
  std::uint64_t seed = 0;
  double clean_accuracy = 0.0;
  std::optional<double> attack_accuracy;
  std::optional<double> asr;
  std::size_t n_samples = 0;
  std::size_t n_skipped = 0;
  double mean_queries = 0.0;
  std::vector<SampleRecord> samples;
  /// Full outcomes, kept in memory for replay checks (not serialised).
  std::vector<AttackOutcome> outcomes;
};

/// 100·(clean − attack)/clean; nullopt when clean is 0.
std::optional<double> attack_success_rate(double clean_accuracy, double attack_accuracy);

/// Clean run plus the configured attack. Skipped (clean-wrong) samples count
/// as wrong under attack; a failed attack counts as correct. The datastore
/// attack reports plain accuracy on the contaminated pool.
RobustnessReport run_attack(const RunConfig& cfg);

}  // namespace iclr
