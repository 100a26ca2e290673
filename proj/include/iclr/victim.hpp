#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "iclr/distribution.hpp"
#include "iclr/prompting.hpp"

namespace iclr {

/// Anything that maps a prompt to a distribution over label words and over
/// a key vocabulary. Implementations must be safe to call concurrently.
class Victim {
 public:
  virtual ~Victim() = default;
  virtual LabelDistribution predict_label_distribution(const PromptSpec& prompt) const = 0;
  virtual KeyDistribution predict_key_distribution(const PromptSpec& prompt) const = 0;
};

/// Token → per-label weight vector.
using Lexicon = std::unordered_map<std::string, std::vector<double>>;

Lexicon load_lexicon(const std::filesystem::path& path);

struct ToyVictimConfig {
  Lexicon lexicon;
  double lambda_lex = 1.0;
  double mu_demo = 1.0;
  double temperature = 1.0;
  /// Extra key-vocabulary tokens appended after the label words.
  std::vector<std::string> extra_key_tokens;

  /// Throws ConfigError on temperature <= 0 or weight vectors of the wrong length.
  void validate(std::size_t num_labels) const;
};

/// A demonstration as the toy scorer sees it: its input text and the label
/// it votes for (none for placeholder labels).
struct VotingDemo {
  std::string text;
  std::optional<int> label;
};

double jaccard(std::span<const std::string> a, std::span<const std::string> b);

/// probs = softmax_y((λ·Σ_{t∈tokens(test)} lexicon[t][y]
///                    + μ·Σ_{demos labelled y} jaccard(demo, test)) / T)
LabelDistribution toy_score(std::string_view test_text,
                            std::span<const VotingDemo> demos,
                            const ToyVictimConfig& cfg, std::size_t num_labels);

/// Deterministic desk-scale victim sensitive to test tokens (lexicon),
/// demonstration overlap (votes) and demonstration labels.
class ToyVictim final : public Victim {
 public:
  ToyVictim(ToyVictimConfig cfg, std::size_t num_labels);

  LabelDistribution predict_label_distribution(const PromptSpec& prompt) const override;
  KeyDistribution predict_key_distribution(const PromptSpec& prompt) const override;

  const ToyVictimConfig& config() const { return cfg_; }

 private:
  ToyVictimConfig cfg_;
  std::size_t num_labels_;
};

/// Test helper victim: fixed distribution regardless of the prompt.
class ConstantVictim final : public Victim {
 public:
  explicit ConstantVictim(Eigen::VectorXd probs, std::vector<std::string> words)
      : probs_(std::move(probs)), words_(std::move(words)) {}
  LabelDistribution predict_label_distribution(const PromptSpec&) const override {
    return {probs_};
  }
  KeyDistribution predict_key_distribution(const PromptSpec&) const override {
    return {words_, probs_};
  }

 private:
  Eigen::VectorXd probs_;
  std::vector<std::string> words_;
};

}  // namespace iclr
