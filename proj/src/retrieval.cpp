#include "iclr/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "iclr/error.hpp"

namespace iclr {

HashingEmbedder::HashingEmbedder(std::size_t dimension, std::shared_ptr<const Tokenizer> tokenizer)
    : dimension_(dimension), tokenizer_(std::move(tokenizer)) {
  if (dimension_ == 0) throw ConfigError("retrieval", "embedding dimension must be positive");
  if (!tokenizer_) tokenizer_ = default_tokenizer();
}

Eigen::VectorXd HashingEmbedder::embed(std::string_view text) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dimension_));
  for (const auto& t : tokenizer_->tokenize(text)) {
    v(static_cast<Eigen::Index>(fnv1a64(t) % dimension_)) += 1.0;
  }
  const double n = v.norm();
  if (n == 0.0) {
    v(0) = 1.0;
    return v;
  }
  return v / n;
}

// ---------------------------------------------------------------------------

Bm25Index::Bm25Index(const std::vector<std::vector<std::string>>& docs, Bm25Params params)
    : params_(params) {
  doc_lengths_.reserve(docs.size());
  double total = 0.0;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    std::map<std::string, std::uint32_t> tf;
    for (const auto& t : docs[d]) ++tf[t];
    for (const auto& [term, count] : tf) {
      postings_[term].push_back({static_cast<std::uint32_t>(d), count});
    }
    doc_lengths_.push_back(static_cast<std::uint32_t>(docs[d].size()));
    total += static_cast<double>(docs[d].size());
  }
  avg_len_ = docs.empty() ? 0.0 : total / static_cast<double>(docs.size());
}

double Bm25Index::idf(std::size_t df) const {
  const double n = static_cast<double>(num_docs());
  const double d = static_cast<double>(df);
  return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

double Bm25Index::term_weight(double idf, std::uint32_t tf, std::uint32_t dl) const {
  const double f = static_cast<double>(tf);
  const double rel = avg_len_ > 0.0 ? static_cast<double>(dl) / avg_len_ : 0.0;
  return idf * f * (params_.k1 + 1.0) / (f + params_.k1 * (1.0 - params_.b + params_.b * rel));
}

double Bm25Index::score(std::span<const std::string> query, std::size_t doc) const {
  double s = 0.0;
  for (const auto& term : query) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    const auto& list = it->second;
    auto p = std::lower_bound(list.begin(), list.end(), doc,
                              [](const Posting& a, std::size_t d) { return a.doc < d; });
    if (p == list.end() || p->doc != doc) continue;
    s += term_weight(idf(list.size()), p->tf, doc_lengths_[doc]);
  }
  return s;
}

std::vector<double> Bm25Index::score_all(std::span<const std::string> query) const {
  std::vector<double> scores(num_docs(), 0.0);
  for (const auto& term : query) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    const double w_idf = idf(it->second.size());
    for (const auto& p : it->second) scores[p.doc] += term_weight(w_idf, p.tf, doc_lengths_[p.doc]);
  }
  return scores;
}

nlohmann::json Bm25Index::to_json() const {
  nlohmann::json j;
  j["k1"] = params_.k1;
  j["b"] = params_.b;
  j["avg_len"] = avg_len_;
  j["doc_lengths"] = doc_lengths_;
  nlohmann::json post = nlohmann::json::object();
  for (const auto& [term, list] : postings_) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : list) arr.push_back({p.doc, p.tf});
    post[term] = std::move(arr);
  }
  j["postings"] = std::move(post);
  return j;
}

Bm25Index Bm25Index::from_json(const nlohmann::json& j) {
  Bm25Index idx;
  try {
    idx.params_.k1 = j.at("k1").get<double>();
    idx.params_.b = j.at("b").get<double>();
    idx.doc_lengths_ = j.at("doc_lengths").get<std::vector<std::uint32_t>>();
    for (const auto& [term, arr] : j.at("postings").items()) {
      auto& list = idx.postings_[term];
      for (const auto& p : arr) list.push_back({p.at(0).get<std::uint32_t>(), p.at(1).get<std::uint32_t>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("retrieval", std::string("malformed index: ") + e.what());
  }
  double total = 0.0;
  for (auto l : idx.doc_lengths_) total += l;
  idx.avg_len_ = idx.doc_lengths_.empty() ? 0.0 : total / static_cast<double>(idx.doc_lengths_.size());
  return idx;
}

// ---------------------------------------------------------------------------

DemoPool::DemoPool(std::vector<LabeledExample> examples, std::shared_ptr<const Tokenizer> tokenizer,
                   Bm25Params params)
    : examples_(std::move(examples)), tokenizer_(std::move(tokenizer)) {
  if (!tokenizer_) tokenizer_ = default_tokenizer();
  std::vector<std::vector<std::string>> docs;
  docs.reserve(examples_.size());
  for (const auto& e : examples_) docs.push_back(tokenizer_->tokenize(e.input_text()));
  index_ = Bm25Index(docs, params);
}

DemoPool DemoPool::merged(const std::vector<LabeledExample>& extra) const {
  std::vector<LabeledExample> all = examples_;
  all.insert(all.end(), extra.begin(), extra.end());
  return rebuilt(std::move(all));
}

DemoPool DemoPool::rebuilt(std::vector<LabeledExample> examples) const {
  DemoPool out(std::move(examples), tokenizer_, index_.params());
  if (embedder_) return embed_pool(out, embedder_);
  return out;
}

DemoPool embed_pool(const DemoPool& pool, std::shared_ptr<const Embedder> embedder) {
  if (!embedder) throw ConfigError("retrieval", "embed_pool needs an embedder");
  DemoPool out = pool;
  const auto d = static_cast<Eigen::Index>(embedder->dimension());
  out.embeddings_.resize(static_cast<Eigen::Index>(pool.size()), d);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    Eigen::VectorXd v = embedder->embed(pool[i].input_text());
    if (v.size() != d) {
      throw ConfigError("retrieval", "embedder returned the wrong dimension for " + pool[i].id);
    }
    const double n = v.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw ConfigError("retrieval", "embedder returned a zero vector for " + pool[i].id);
    }
    out.embeddings_.row(static_cast<Eigen::Index>(i)) = (v / n).transpose();
  }
  out.embedder_ = std::move(embedder);
  return out;
}

double bm25_score(const DemoPool& pool, std::span<const std::string> query_tokens, std::size_t doc) {
  return pool.index().score(query_tokens, doc);
}

std::string_view to_string(RetrievalMethod m) {
  return m == RetrievalMethod::bm25 ? "bm25" : "embedding";
}

std::vector<double> similarity_scores(const DemoPool& pool, const LabeledExample& query,
                                      RetrievalMethod method) {
  if (method == RetrievalMethod::bm25) {
    const auto tokens = pool.tokenizer().tokenize(query.input_text());
    return pool.index().score_all(tokens);
  }
  if (!pool.has_embeddings()) throw ConfigError("retrieval", "pool has no embeddings");
  Eigen::VectorXd q = pool.embedder()->embed(query.input_text());
  const double n = q.norm();
  if (n > 0.0) q /= n;
  // row by row: identical rows must give bit-identical scores for tie-breaking
  std::vector<double> sims(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    sims[i] = pool.embeddings().row(static_cast<Eigen::Index>(i)).dot(q.transpose());
  }
  return sims;
}

RetrievalResult retrieve_topk(const DemoPool& pool, const LabeledExample& query,
                              const RetrieveOptions& options) {
  if (options.k == 0) throw ConfigError("retrieval", "k must be at least 1");
  if (pool.size() == 0) throw ConfigError("retrieval", "cannot retrieve from an empty pool");
  const std::vector<double> scores = similarity_scores(pool, query, options.method);
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  // scores within 1e-9 rank as ties
  std::vector<double> key(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) key[i] = std::round(scores[i] * 1e9);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key[a] > key[b]; });

  RetrievalResult out;
  std::unordered_set<std::string> lineages;
  for (std::size_t idx : order) {
    if (out.indices.size() == options.k) break;
    const auto& lin = pool[idx].lineage();
    if (options.exclude_lineage && lin == *options.exclude_lineage) continue;
    if (options.dedup_by_origin && !lineages.insert(lin).second) continue;
    out.indices.push_back(idx);
  }
  out.short_of_k = out.indices.size() < options.k;
  return out;
}

void save_index(const std::filesystem::path& path, const DemoPool& pool) {
  nlohmann::json j;
  std::vector<std::string> ids;
  ids.reserve(pool.size());
  for (const auto& e : pool.examples()) ids.push_back(e.id);
  j["ids"] = ids;
  j["bm25"] = pool.index().to_json();
  if (pool.has_embeddings()) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < pool.embeddings().rows(); ++r) {
      const auto row = pool.embeddings().row(r);
      rows.push_back(std::vector<double>(row.data(), row.data() + row.size()));
    }
    j["embeddings"] = std::move(rows);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("retrieval", "cannot write " + path.string());
  out << j.dump() << '\n';
}

Bm25Index load_index(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("retrieval", "cannot open index " + path.string());
  try {
    return Bm25Index::from_json(nlohmann::json::parse(in).at("bm25"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("retrieval", std::string("malformed index file: ") + e.what());
  }
}

}  // namespace iclr
