#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "iclr/corpus.hpp"
#include "iclr/text.hpp"

namespace iclr {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Eigen::VectorXd embed(std::string_view text) const = 0;
  virtual std::size_t dimension() const = 0;
};

/// Feature hashing of token counts into `dimension` buckets, L2-normalised.
/// Text without tokens maps to the unit vector e_0.
class HashingEmbedder final : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dimension = 256,
                           std::shared_ptr<const Tokenizer> tokenizer = default_tokenizer());
  Eigen::VectorXd embed(std::string_view text) const override;
  std::size_t dimension() const override { return dimension_; }

 private:
  std::size_t dimension_;
  std::shared_ptr<const Tokenizer> tokenizer_;
};

struct Bm25Params {
  double k1 = 1.5;
  double b = 0.75;
};

struct Posting {
  std::uint32_t doc = 0;
  std::uint32_t tf = 0;
  bool operator==(const Posting&) const = default;
};

/// Okapi BM25 over an inverted index.
class Bm25Index {
 public:
  Bm25Index() = default;
  explicit Bm25Index(const std::vector<std::vector<std::string>>& docs,
                     Bm25Params params = {});

  std::size_t num_docs() const { return doc_lengths_.size(); }
  double avg_len() const { return avg_len_; }
  const std::vector<std::uint32_t>& doc_lengths() const { return doc_lengths_; }
  const std::map<std::string, std::vector<Posting>>& postings() const { return postings_; }
  const Bm25Params& params() const { return params_; }

  /// ln(1 + (N - df + 0.5) / (df + 0.5)).
  double idf(std::size_t df) const;
  /// Contribution of one query term with frequency tf in a doc of length dl.
  double term_weight(double idf, std::uint32_t tf, std::uint32_t dl) const;

  /// Score of one document. Repeated query tokens count once per occurrence.
  double score(std::span<const std::string> query, std::size_t doc) const;
  /// Scores of all documents, accumulated through the postings lists.
  std::vector<double> score_all(std::span<const std::string> query) const;

  nlohmann::json to_json() const;
  static Bm25Index from_json(const nlohmann::json& j);

 private:
  Bm25Params params_;
  std::map<std::string, std::vector<Posting>> postings_;
  std::vector<std::uint32_t> doc_lengths_;
  double avg_len_ = 0.0;
};

/// Demonstration pool with a BM25 index and optional unit-normalised
/// embeddings. Immutable after construction; augmentation builds a new pool.
class DemoPool {
 public:
  DemoPool() = default;
  explicit DemoPool(std::vector<LabeledExample> examples,
                    std::shared_ptr<const Tokenizer> tokenizer = default_tokenizer(),
                    Bm25Params params = {});

  const std::vector<LabeledExample>& examples() const { return examples_; }
  std::size_t size() const { return examples_.size(); }
  const LabeledExample& operator[](std::size_t i) const { return examples_[i]; }
  const Bm25Index& index() const { return index_; }
  const Tokenizer& tokenizer() const { return *tokenizer_; }
  std::shared_ptr<const Tokenizer> tokenizer_ptr() const { return tokenizer_; }

  bool has_embeddings() const { return embedder_ != nullptr; }
  const RowMatrix& embeddings() const { return embeddings_; }
  const Embedder* embedder() const { return embedder_.get(); }

  /// New pool over examples() + extra; embeddings are recomputed when present.
  DemoPool merged(const std::vector<LabeledExample>& extra) const;
  /// New pool over different examples with this pool's tokenizer and embedder.
  DemoPool rebuilt(std::vector<LabeledExample> examples) const;

  friend DemoPool embed_pool(const DemoPool& pool, std::shared_ptr<const Embedder> embedder);

 private:
  std::vector<LabeledExample> examples_;
  std::shared_ptr<const Tokenizer> tokenizer_;
  Bm25Index index_;
  std::shared_ptr<const Embedder> embedder_;
  RowMatrix embeddings_;
};

/// One unit-normalised embedding row per example. Throws ConfigError if the
/// embedder returns the wrong dimension or a zero vector.
DemoPool embed_pool(const DemoPool& pool, std::shared_ptr<const Embedder> embedder);

double bm25_score(const DemoPool& pool, std::span<const std::string> query_tokens,
                  std::size_t doc);

enum class RetrievalMethod { bm25, embedding };

std::string_view to_string(RetrievalMethod m);

struct RetrievalResult {
  /// Pool indices, most similar first.
  std::vector<std::size_t> indices;
  /// Fewer than k results were available (after lineage deduplication).
  bool short_of_k = false;
};

struct RetrieveOptions {
  std::size_t k = 8;
  RetrievalMethod method = RetrievalMethod::bm25;
  bool dedup_by_origin = false;
  /// Skip every pool member of this lineage (e.g. the query itself).
  std::optional<std::string> exclude_lineage;
};

/// Top-k by descending similarity; ties broken by smaller pool index.
RetrievalResult retrieve_topk(const DemoPool& pool, const LabeledExample& query,
                              const RetrieveOptions& options);

/// Similarities of every pool member to the query (BM25 score or cosine).
std::vector<double> similarity_scores(const DemoPool& pool, const LabeledExample& query,
                                      RetrievalMethod method);

void save_index(const std::filesystem::path& path, const DemoPool& pool);
Bm25Index load_index(const std::filesystem::path& path);

}  // namespace iclr
