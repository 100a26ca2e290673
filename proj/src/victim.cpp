#include "iclr/victim.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "iclr/error.hpp"
#include "iclr/text.hpp"

namespace iclr {

Lexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("victim", "cannot open lexicon " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("victim", "malformed lexicon " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("victim", "lexicon must be a JSON object");
  Lexicon lex;
  for (const auto& [token, weights] : j.items()) {
    if (!weights.is_array()) throw ConfigError("victim", "lexicon entry '" + token + "' is not an array");
    lex[to_lower(token)] = weights.get<std::vector<double>>();
  }
  return lex;
}

void ToyVictimConfig::validate(std::size_t num_labels) const {
  if (!(temperature > 0.0)) throw ConfigError("victim", "temperature must be positive");
  for (const auto& [token, w] : lexicon) {
    if (w.size() != num_labels) {
      throw ConfigError("victim", "lexicon entry '" + token + "' has " + std::to_string(w.size()) +
                                      " weights, expected " + std::to_string(num_labels));
    }
  }
}

double jaccard(std::span<const std::string> a, std::span<const std::string> b) {
  const std::set<std::string> sa(a.begin(), a.end());
  const std::set<std::string> sb(b.begin(), b.end());
  if (sa.empty() && sb.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

namespace {

Eigen::VectorXd toy_logits(const std::vector<std::string>& test_tokens,
                           std::span<const VotingDemo> demos, const ToyVictimConfig& cfg,
                           std::size_t num_labels) {
  Eigen::VectorXd logits = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_labels));
  if (cfg.lambda_lex != 0.0) {
    for (const auto& t : test_tokens) {
      auto it = cfg.lexicon.find(t);
      if (it == cfg.lexicon.end()) continue;
      for (std::size_t y = 0; y < num_labels; ++y) logits(y) += cfg.lambda_lex * it->second[y];
    }
  }
  if (cfg.mu_demo != 0.0) {
    for (const auto& d : demos) {
      if (!d.label || *d.label < 0 || static_cast<std::size_t>(*d.label) >= num_labels) continue;
      logits(*d.label) += cfg.mu_demo * jaccard(tokenize(d.text), test_tokens);
    }
  }
  return logits;
}

std::vector<VotingDemo> voting_demos(const PromptSpec& prompt) {
  std::vector<VotingDemo> out;
  out.reserve(prompt.demos.size());
  for (std::size_t i = 0; i < prompt.demos.size(); ++i) {
    VotingDemo v{prompt.demos[i].input_text(), prompt.demos[i].label};
    if (auto it = prompt.label_overrides.find(i); it != prompt.label_overrides.end()) {
      v.label = prompt.labels.find(it->second);
    }
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace

LabelDistribution toy_score(std::string_view test_text, std::span<const VotingDemo> demos,
                            const ToyVictimConfig& cfg, std::size_t num_labels) {
  return {softmax(toy_logits(tokenize(test_text), demos, cfg, num_labels), cfg.temperature)};
}

ToyVictim::ToyVictim(ToyVictimConfig cfg, std::size_t num_labels)
    : cfg_(std::move(cfg)), num_labels_(num_labels) {
  if (num_labels_ == 0) throw ConfigError("victim", "toy victim needs at least one label");
  cfg_.validate(num_labels_);
}

LabelDistribution ToyVictim::predict_label_distribution(const PromptSpec& prompt) const {
  const auto demos = voting_demos(prompt);
  return toy_score(prompt.test.input_text(), demos, cfg_, num_labels_);
}

KeyDistribution ToyVictim::predict_key_distribution(const PromptSpec& prompt) const {
  const auto demos = voting_demos(prompt);
  const auto tokens = tokenize(prompt.test.input_text());
  const Eigen::VectorXd label_logits = toy_logits(tokens, demos, cfg_, num_labels_);

  KeyDistribution key;
  key.vocab = prompt.labels.words();
  const auto n = static_cast<Eigen::Index>(num_labels_ + cfg_.extra_key_tokens.size());
  Eigen::VectorXd logits(n);
  logits.head(label_logits.size()) = label_logits;
  // extra key tokens score by how often they occur in the test input
  for (std::size_t j = 0; j < cfg_.extra_key_tokens.size(); ++j) {
    const std::string tok = to_lower(cfg_.extra_key_tokens[j]);
    double count = 0.0;
    for (const auto& t : tokens) count += (t == tok) ? 1.0 : 0.0;
    logits(static_cast<Eigen::Index>(num_labels_ + j)) = cfg_.lambda_lex * count;
    key.vocab.push_back(cfg_.extra_key_tokens[j]);
  }
  key.probs = softmax(logits, cfg_.temperature);
  return key;
}

}  // namespace iclr
