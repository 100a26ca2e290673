#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <semaphore>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "iclr/retrieval.hpp"
#include "iclr/victim.hpp"

namespace iclr {

struct HttpResponse {
  int status = 0;
  std::string body;
};

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

/// POST transport. Implementations throw RuntimeFailure on connection errors.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post(const std::string& path, const std::string& body,
                            const HttpHeaders& headers) const = 0;
};

/// cpp-httplib backed transport for "http://host:port" or "https://host".
class HttplibTransport final : public HttpTransport {
 public:
  explicit HttplibTransport(std::string base_url,
                            std::chrono::seconds timeout = std::chrono::seconds(60));
  HttpResponse post(const std::string& path, const std::string& body,
                    const HttpHeaders& headers) const override;

 private:
  std::string base_url_;
  std::chrono::seconds timeout_;
};

struct RemoteConfig {
  std::string base_url;
  std::string path = "/v1/completions";
  std::string model;
  /// Environment variable holding the bearer token; unset means no header.
  std::string api_key_env = "ICLR_API_KEY";
  int logprobs = 20;
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{500};
  int max_in_flight = 4;
  std::vector<std::string> extra_key_tokens;
};

/// Floor applied to label words missing from a top-L list before renormalising.
constexpr double kMissingLogprobFloor = 1e-6;

/// Parses choices[0].logprobs.top_logprobs[0] of a completion response.
/// Throws RuntimeFailure when the response carries no log-probabilities.
std::map<std::string, double> parse_top_logprobs(std::string_view body);

/// Restricts top log-probabilities to `words` (matched after trimming and
/// lowercasing; duplicates summed), floors missing entries and renormalises.
/// Throws RuntimeFailure when none of the words is present.
Eigen::VectorXd restrict_logprobs(const std::map<std::string, double>& top,
                                  const std::vector<std::string>& words);

/// Completion-API victim. One POST per prediction:
/// {model, prompt, max_tokens: 1, temperature: 0, logprobs: L}.
class RemoteVictim final : public Victim {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  RemoteVictim(RemoteConfig cfg, std::shared_ptr<const HttpTransport> transport,
               Sleeper sleeper = {});

  LabelDistribution predict_label_distribution(const PromptSpec& prompt) const override;
  KeyDistribution predict_key_distribution(const PromptSpec& prompt) const override;

  std::string request_body(const PromptSpec& prompt) const;

 private:
  std::map<std::string, double> query(const PromptSpec& prompt) const;

  RemoteConfig cfg_;
  std::shared_ptr<const HttpTransport> transport_;
  Sleeper sleeper_;
  std::unique_ptr<std::counting_semaphore<1024>> in_flight_;
};

/// Embedding endpoint client: POST {model, input} and read data[0].embedding.
class RemoteEmbedder final : public Embedder {
 public:
  RemoteEmbedder(RemoteConfig cfg, std::shared_ptr<const HttpTransport> transport,
                 std::size_t dimension);
  Eigen::VectorXd embed(std::string_view text) const override;
  std::size_t dimension() const override { return dimension_; }

 private:
  RemoteConfig cfg_;
  std::shared_ptr<const HttpTransport> transport_;
  std::size_t dimension_;
};

/// Shared retry loop: up to cfg.max_retries retries with doubling backoff.
HttpResponse post_with_retries(const HttpTransport& transport, const RemoteConfig& cfg,
                               const std::string& body,
                               const std::function<void(std::chrono::milliseconds)>& sleeper);

}  // namespace iclr
