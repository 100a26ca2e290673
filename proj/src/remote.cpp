#include "iclr/remote.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>

#include <nlohmann/json.hpp>

#include <httplib.h>

#include "iclr/error.hpp"
#include "iclr/text.hpp"

namespace iclr {

HttplibTransport::HttplibTransport(std::string base_url, std::chrono::seconds timeout)
    : base_url_(std::move(base_url)), timeout_(timeout) {
  if (base_url_.rfind("http://", 0) != 0 && base_url_.rfind("https://", 0) != 0) {
    throw ConfigError("victim", "endpoint url must start with http:// or https://: " + base_url_);
  }
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (base_url_.rfind("https://", 0) == 0) {
    throw ConfigError("victim", "https endpoints need a build with OpenSSL");
  }
#endif
}

HttpResponse HttplibTransport::post(const std::string& path, const std::string& body,
                                    const HttpHeaders& headers) const {
  httplib::Client client(base_url_);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_write_timeout(timeout_);
  httplib::Headers hs;
  for (const auto& [k, v] : headers) hs.emplace(k, v);
  auto res = client.Post(path, hs, body, "application/json");
  if (!res) {
    throw RuntimeFailure("victim", "POST " + base_url_ + path + " failed: " +
                                       httplib::to_string(res.error()));
  }
  return {res->status, res->body};
}

namespace {

HttpHeaders auth_headers(const RemoteConfig& cfg) {
  HttpHeaders hs;
  if (!cfg.api_key_env.empty()) {
    if (const char* key = std::getenv(cfg.api_key_env.c_str()); key && *key) {
      hs.emplace_back("Authorization", std::string("Bearer ") + key);
    }
  }
  return hs;
}

void default_sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

bool retryable(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace

HttpResponse post_with_retries(const HttpTransport& transport, const RemoteConfig& cfg,
                               const std::string& body,
                               const std::function<void(std::chrono::milliseconds)>& sleeper) {
  const auto headers = auth_headers(cfg);
  auto backoff = cfg.initial_backoff;
  std::string last_error;
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    if (attempt > 0) {
      if (sleeper) {
        sleeper(backoff);
      } else {
        default_sleep(backoff);
      }
      backoff *= 2;
    }
    try {
      HttpResponse res = transport.post(cfg.path, body, headers);
      if (res.status >= 200 && res.status < 300) return res;
      last_error = "HTTP " + std::to_string(res.status);
      if (!retryable(res.status)) break;
    } catch (const RuntimeFailure& e) {
      last_error = e.what();
    }
  }
  throw RuntimeFailure("victim", "request failed after retries: " + last_error);
}

std::map<std::string, double> parse_top_logprobs(std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw RuntimeFailure("victim", std::string("response is not JSON: ") + e.what());
  }
  try {
    const auto& top = j.at("choices").at(0).at("logprobs").at("top_logprobs").at(0);
    std::map<std::string, double> out;
    for (const auto& [token, lp] : top.items()) out[token] = lp.get<double>();
    if (out.empty()) throw RuntimeFailure("victim", "empty top_logprobs");
    return out;
  } catch (const nlohmann::json::exception&) {
    throw RuntimeFailure("victim", "response carries no log-probabilities");
  }
}

Eigen::VectorXd restrict_logprobs(const std::map<std::string, double>& top,
                                  const std::vector<std::string>& words) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(words.size()));
  std::vector<bool> hit(words.size(), false);
  bool any = false;
  for (const auto& [token, lp] : top) {
    const std::string key = to_lower(trim(token));
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (to_lower(trim(words[i])) == key) {
        p(static_cast<Eigen::Index>(i)) += std::exp(lp);
        hit[i] = true;
        any = true;
      }
    }
  }
  if (!any) throw RuntimeFailure("victim", "no label word among the returned tokens");
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (!hit[i]) p(static_cast<Eigen::Index>(i)) = kMissingLogprobFloor;
  }
  return p / p.sum();
}

RemoteVictim::RemoteVictim(RemoteConfig cfg, std::shared_ptr<const HttpTransport> transport,
                           Sleeper sleeper)
    : cfg_(std::move(cfg)), transport_(std::move(transport)), sleeper_(std::move(sleeper)) {
  if (!transport_) throw ConfigError("victim", "remote victim needs a transport");
  if (cfg_.logprobs < 1) throw ConfigError("victim", "logprobs must be at least 1");
  if (cfg_.max_in_flight < 1 || cfg_.max_in_flight > 1024) {
    throw ConfigError("victim", "max_in_flight must be in [1, 1024]");
  }
  if (cfg_.max_retries < 0) throw ConfigError("victim", "max_retries must be non-negative");
  in_flight_ = std::make_unique<std::counting_semaphore<1024>>(cfg_.max_in_flight);
}

std::string RemoteVictim::request_body(const PromptSpec& prompt) const {
  nlohmann::ordered_json j;
  j["model"] = cfg_.model;
  j["prompt"] = build_prompt(prompt);
  j["max_tokens"] = 1;
  j["temperature"] = 0;
  j["logprobs"] = cfg_.logprobs;
  return j.dump();
}

std::map<std::string, double> RemoteVictim::query(const PromptSpec& prompt) const {
  const std::string body = request_body(prompt);
  in_flight_->acquire();
  struct Release {
    std::counting_semaphore<1024>* s;
    ~Release() { s->release(); }
  } release{in_flight_.get()};
  const HttpResponse res = post_with_retries(*transport_, cfg_, body, sleeper_);
  return parse_top_logprobs(res.body);
}

LabelDistribution RemoteVictim::predict_label_distribution(const PromptSpec& prompt) const {
  return {restrict_logprobs(query(prompt), prompt.labels.words())};
}

KeyDistribution RemoteVictim::predict_key_distribution(const PromptSpec& prompt) const {
  KeyDistribution key;
  key.vocab = prompt.labels.words();
  key.vocab.insert(key.vocab.end(), cfg_.extra_key_tokens.begin(), cfg_.extra_key_tokens.end());
  key.probs = restrict_logprobs(query(prompt), key.vocab);
  return key;
}

RemoteEmbedder::RemoteEmbedder(RemoteConfig cfg, std::shared_ptr<const HttpTransport> transport,
                               std::size_t dimension)
    : cfg_(std::move(cfg)), transport_(std::move(transport)), dimension_(dimension) {
  if (!transport_) throw ConfigError("retrieval", "remote embedder needs a transport");
  if (dimension_ == 0) throw ConfigError("retrieval", "embedding dimension must be positive");
}

Eigen::VectorXd RemoteEmbedder::embed(std::string_view text) const {
  nlohmann::ordered_json j;
  j["model"] = cfg_.model;
  j["input"] = std::string(text);
  const HttpResponse res = post_with_retries(*transport_, cfg_, j.dump(), {});
  std::vector<double> v;
  try {
    v = nlohmann::json::parse(res.body).at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw RuntimeFailure("retrieval", std::string("malformed embedding response: ") + e.what());
  }
  if (v.size() != dimension_) {
    throw RuntimeFailure("retrieval", "embedding has dimension " + std::to_string(v.size()) +
                                          ", expected " + std::to_string(dimension_));
  }
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace iclr
