#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "iclr/corpus.hpp"
#include "iclr/victim.hpp"

namespace iclr::fixture {

inline std::filesystem::path data_dir() { return ICLR_DATA_DIR; }
inline std::filesystem::path test_data_dir() { return ICLR_TEST_DATA_DIR; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("iclr_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline LabeledExample ex(std::string id, std::string text, int label) {
  LabeledExample e;
  e.id = std::move(id);
  e.text = std::move(text);
  e.label = label;
  return e;
}

inline LabeledExample pair_ex(std::string id, std::string premise, std::string hypothesis,
                              int label) {
  LabeledExample e;
  e.id = std::move(id);
  e.premise = std::move(premise);
  e.hypothesis = std::move(hypothesis);
  e.label = label;
  return e;
}

inline Task sentiment_task() {
  Task t;
  t.name = "sentiment";
  t.tmpl.demo_pattern = "Review: {text}\nSentiment: {label}";
  t.tmpl.query_pattern = "Review: {text}\nSentiment:";
  t.labels = LabelSpace({"negative", "positive"});
  return t;
}

inline Task pair_task() {
  Task t;
  t.name = "entailment";
  t.tmpl.demo_pattern = "{premise}\nQuestion: {hypothesis} True or False?\nAnswer: {label}";
  t.tmpl.query_pattern = "{premise}\nQuestion: {hypothesis} True or False?\nAnswer:";
  t.tmpl.shape = SegmentShape::pair;
  t.labels = LabelSpace({"true", "false"});
  return t;
}

inline ToyVictimConfig sentiment_toy(double lambda = 1.0, double mu = 4.0) {
  ToyVictimConfig c;
  c.lexicon = {{"great", {0.0, 1.5}}, {"good", {0.0, 1.5}},  {"love", {0.0, 1.5}},
               {"bad", {1.5, 0.0}},   {"awful", {1.5, 0.0}}, {"boring", {1.5, 0.0}}};
  c.lambda_lex = lambda;
  c.mu_demo = mu;
  return c;
}

/// Random sentences over a small vocabulary so that overlap, ties and
/// repeated tokens all occur.
inline std::vector<std::string> random_words(std::mt19937_64& gen, std::size_t n,
                                             std::size_t vocab = 30) {
  std::vector<std::string> out;
  std::uniform_int_distribution<std::size_t> pick(0, vocab - 1);
  for (std::size_t i = 0; i < n; ++i) out.push_back("w" + std::to_string(pick(gen)));
  return out;
}

}  // namespace iclr::fixture
