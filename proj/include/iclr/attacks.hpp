#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "iclr/retrieval.hpp"
#include "iclr/scenario.hpp"

namespace iclr {

class Victim;

struct AttackBudget {
  double max_perturb_fraction = 0.15;
  std::size_t max_candidates_per_site = 32;
  std::size_t max_queries = 5000;

  void validate() const;
  /// ceil(max_perturb_fraction * n_words).
  std::size_t edit_cap(std::size_t n_words) const;
};

enum class AttackTarget { test_sample, demonstrations, labels, datastore };
std::string_view to_string(AttackTarget t);

/// Demo owner index, or kTestOwner for the test input.
constexpr int kTestOwner = -1;

struct Edit {
  int owner = kTestOwner;
  /// Word position within the attacked surface (or demo index for labels).
  std::size_t position = 0;
  std::string before;
  std::string after;
};

struct AttackOutcome {
  AttackTarget target = AttackTarget::test_sample;
  Scenario original;
  Scenario perturbed;
  int gold = 0;
  bool success = false;
  /// The original configuration was already misclassified; no attack ran.
  bool skipped = false;
  /// The victim failed mid-search; `error` holds the message.
  bool aborted = false;
  std::string error;
  std::vector<Edit> edits;
  /// Victim's label for `perturbed` (the original label when nothing was kept).
  int final_prediction = 0;
  std::size_t queries_used = 0;
  std::uint64_t seed = 0;
  /// p_gold before the search and after each accepted edit.
  std::vector<double> trajectory;
};

/// Counts scenario evaluations against a hard limit.
class QueryCounter {
 public:
  explicit QueryCounter(std::size_t limit) : limit_(limit) {}
  bool can_query() const { return used_ < limit_; }
  std::size_t used() const { return used_; }
  Prediction evaluate(const Scenario& scenario, const Victim& victim);

 private:
  std::size_t limit_;
  std::size_t used_ = 0;
};

// ---------------------------------------------------------------------------
// Candidate generation

class CandidateGenerator {
 public:
  virtual ~CandidateGenerator() = default;
  /// Replacement strings for words[site]; never contains the original word.
  virtual std::vector<std::string> candidates(std::span<const std::string> words,
                                              std::size_t site) const = 0;
};

/// Leading and trailing punctuation around a word's core.
struct WordParts {
  std::string prefix;
  std::string core;
  std::string suffix;
};
WordParts split_affixes(std::string_view word);

/// Character-confusion maps for typo bugs.
struct BugMaps {
  std::map<char32_t, std::vector<std::string>> homoglyphs;
  std::map<char32_t, std::vector<std::string>> keyboard;

  static BugMaps load(const std::filesystem::path& homoglyph_file,
                      const std::filesystem::path& keyboard_file);
  /// Loads homoglyphs.json and keyboard.json from a data directory.
  static BugMaps load_dir(const std::filesystem::path& dir);
};

/// Typo bugs from five families: space/char insertion, inner deletion,
/// adjacent swap, homoglyph substitution, keyboard-neighbour substitution.
/// Families are interleaved round-robin so a truncated list still covers
/// each of them. Deduplicated, original excluded, deterministic.
std::vector<std::string> char_bug_candidates(std::string_view token, const BugMaps& maps);

class CharBugGenerator final : public CandidateGenerator {
 public:
  explicit CharBugGenerator(BugMaps maps) : maps_(std::move(maps)) {}
  std::vector<std::string> candidates(std::span<const std::string> words,
                                      std::size_t site) const override;

 private:
  BugMaps maps_;
};

/// word → replacement list (synonym lexicon or masked-LM candidate table).
using WordTable = std::map<std::string, std::vector<std::string>>;
WordTable load_word_table(const std::filesystem::path& path);

/// Lexicon neighbours of the lowercased token, original excluded, truncated.
std::vector<std::string> synonym_candidates(std::string_view token, const WordTable& lexicon,
                                            std::size_t max_candidates);

/// Optional part-of-speech hook: tag of words[site].
using PosTagger = std::function<std::string(std::span<const std::string> words, std::size_t site)>;

/// Table-backed word substitution. With a tagger, candidates whose tag in
/// context differs from the original's are dropped.
class TableGenerator final : public CandidateGenerator {
 public:
  explicit TableGenerator(WordTable table, std::size_t max_candidates = 32,
                          PosTagger tagger = {})
      : table_(std::move(table)), max_(max_candidates), tagger_(std::move(tagger)) {}
  std::vector<std::string> candidates(std::span<const std::string> words,
                                      std::size_t site) const override;

 private:
  WordTable table_;
  std::size_t max_;
  PosTagger tagger_;
};

enum class TestAttackStyle { bugger, fooler, masked };
std::string_view to_string(TestAttackStyle s);
TestAttackStyle parse_test_attack_style(std::string_view name);

/// Generators for the three test-sample styles; `masked` may be null.
struct GeneratorSet {
  std::shared_ptr<const CandidateGenerator> bugger;
  std::shared_ptr<const CandidateGenerator> fooler;
  std::shared_ptr<const CandidateGenerator> masked;

  /// Throws ConfigError when the style's generator is not plugged in.
  const CandidateGenerator& get(TestAttackStyle style) const;
};

// ---------------------------------------------------------------------------
// Greedy word-importance search

/// Flat editable word list. Each word belongs to an owner (kTestOwner or a
/// demo index); each owner has its own edit cap.
struct WordSurface {
  std::vector<std::string> words;
  std::vector<int> owner;
  std::map<int, std::size_t> owner_cap;
};

/// Rebuilds the full classification configuration from surface words.
/// An empty word means the word is deleted.
using Materializer = std::function<Scenario(const std::vector<std::string>& words)>;

struct ImportanceRanking {
  std::vector<std::size_t> order;
  std::vector<double> scores;
};

/// importance(i) = p_gold(original) - p_gold(word i deleted); descending,
/// ties to earlier positions. Uses |words| + 1 queries when the budget allows;
/// unscored sites rank last in position order.
ImportanceRanking word_importance(const WordSurface& surface, const Materializer& materialize,
                                  int gold, const Victim& victim, QueryCounter& counter);

/// Greedy WIR: visit sites by importance, take the candidate minimising
/// p_gold, keep it only if p_gold strictly drops, stop on misclassification,
/// exhausted sites, edit caps or the query budget.
AttackOutcome greedy_wir_attack(const WordSurface& surface, const Materializer& materialize,
                                int gold, const CandidateGenerator& generator,
                                const AttackBudget& budget, const Victim& victim);

/// Builds the configuration around a (possibly perturbed) test input. For
/// retrieval methods this re-runs retrieval.
using ScenarioBuilder = std::function<Scenario(const LabeledExample& test)>;

/// Attacks the test input only; demonstrations come from `builder`.
AttackOutcome attack_test_sample(TestAttackStyle style, const LabeledExample& test,
                                 const ScenarioBuilder& builder, const GeneratorSet& generators,
                                 const AttackBudget& budget, const Victim& victim,
                                 std::uint64_t seed = 0);

/// AdvICL: typo bugs on demonstration texts (hypothesis only for pair
/// tasks), per-demo cap ceil(fraction·|demo words|), test input untouched.
AttackOutcome attack_demonstrations(const Scenario& scenario, const AttackBudget& budget,
                                    const CandidateGenerator& generator, const Victim& victim,
                                    std::uint64_t seed = 0);

/// Placeholder label used to measure label importance.
inline constexpr std::string_view kLabelPlaceholder = "unknown";

/// Swap-Labels. Ranks demos by the total-variation shift caused by replacing
/// their label with kLabelPlaceholder, then greedily flips labels (at most
/// floor(k/|Y|) demos). With `fix_distribution` every edit is a pair swap
/// that leaves the label histogram unchanged.
AttackOutcome attack_swap_labels(const Scenario& scenario, bool fix_distribution,
                                 const AttackBudget& budget, const Victim& victim,
                                 std::uint64_t seed = 0);

struct ContaminatedPool {
  DemoPool pool;
  /// Pool indices whose text was replaced, ascending.
  std::vector<std::size_t> replaced;
};

/// Replaces floor(rate·|pool|) randomly chosen examples with the unused
/// out-of-distribution sentence of closest token length (ties → earlier
/// corpus line). Labels are kept; replaced examples get origin_id.
ContaminatedPool attack_datastore_irrelevant(const DemoPool& pool,
                                             const std::vector<std::string>& ood_corpus,
                                             double rate, std::uint64_t seed);

std::vector<std::string> load_lines(const std::filesystem::path& path);

/// Re-evaluates the perturbed configuration; true if it misclassifies.
bool replay_misclassifies(const AttackOutcome& outcome, const Victim& victim);

/// Surface over the editable segments of an example (text, or premise then
/// hypothesis), all owned by `owner`.
WordSurface example_surface(const LabeledExample& example, int owner, std::size_t cap,
                            bool hypothesis_only = false);
/// Writes surface words back into the example's segments.
LabeledExample apply_surface(const LabeledExample& example, std::span<const std::string> words,
                             bool hypothesis_only = false);

}  // namespace iclr
