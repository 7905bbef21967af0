#pragma once
// Chat-completion client used as a live sample source.
//
// Each sample is a fresh POST with temperature > 0 so successive generations
// are independent draws. Transient failures (connection errors, HTTP 429 and
// 5xx) are retried with exponential backoff; anything still failing surfaces
// as GeneratorFailure, which aborts certification.

#include <chrono>
#include <cstdlib>
#include <deque>
#include <functional>
#include <future>
#include <string>
#include <thread>
#include <utility>

#include "cci/error.hpp"
#include "cci/generators.hpp"
#include "cci/sample.hpp"
#include "httplib.h"
#include "json.hpp"

namespace cci {

struct EndpointConfig {
  std::string url;                          // e.g. https://host/v1/chat/completions
  std::string model;
  double temperature{0.7};
  int max_tokens{64};
  std::string token_env{"CCI_API_TOKEN"};   // empty: send no Authorization header
  int timeout_ms{30000};
  int retries{2};
  int backoff_base_ms{250};

  void validate() const {
    if (url.empty()) throw InvalidArgument("endpoint url is required");
    if (url.rfind("http://", 0) != 0 && url.rfind("https://", 0) != 0) {
      throw InvalidArgument("endpoint url must start with http:// or https://");
    }
    if (!(temperature > 0.0)) {
      throw InvalidArgument("temperature must be > 0 so samples are independent");
    }
    if (max_tokens < 1) throw InvalidArgument("max_tokens must be positive");
    if (timeout_ms < 1) throw InvalidArgument("timeout_ms must be positive");
    if (retries < 0) throw InvalidArgument("retries must be non-negative");
    if (backoff_base_ms < 0) throw InvalidArgument("backoff_base_ms must be non-negative");
    if (!token_env.empty() && std::getenv(token_env.c_str()) == nullptr) {
      throw InvalidArgument("environment variable " + token_env + " is not set");
    }
  }
};

inline EndpointConfig endpoint_config_from_json(const nlohmann::json& j) {
  EndpointConfig c;
  try {
    c.url = j.at("url").get<std::string>();
    c.model = j.value("model", c.model);
    c.temperature = j.value("temperature", c.temperature);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
    c.token_env = j.value("token_env", c.token_env);
    c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
    c.retries = j.value("retries", c.retries);
    c.backoff_base_ms = j.value("backoff_base_ms", c.backoff_base_ms);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("endpoint config: ") + e.what());
  }
  return c;
}

namespace detail {

// "scheme://host[:port]" and "/path" parts of a URL.
inline std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

inline std::string extract_text(const std::string& body) {
  try {
    const auto j = nlohmann::json::parse(body);
    const auto& choice = j.at("choices").at(0);
    if (choice.contains("message")) return choice.at("message").at("content").get<std::string>();
    return choice.at("text").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("malformed completion response: ") + e.what());
  }
}

}  // namespace detail

using SleepFn = std::function<void(std::chrono::milliseconds)>;

inline void real_sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

// One completion; returns the first choice's text.
inline std::string complete(const EndpointConfig& ep, const std::string& prompt,
                            const SleepFn& sleep = real_sleep) {
  ep.validate();
  const auto [base, path] = detail::split_url(ep.url);
  const nlohmann::json request = {
      {"model", ep.model},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
      {"temperature", ep.temperature},
      {"max_tokens", ep.max_tokens}};
  const std::string body = request.dump();

  httplib::Headers headers;
  if (!ep.token_env.empty()) {
    headers.emplace("Authorization", std::string("Bearer ") + std::getenv(ep.token_env.c_str()));
  }

  std::string last_error;
  for (int attempt = 0; attempt <= ep.retries; ++attempt) {
    if (attempt > 0) sleep(std::chrono::milliseconds(ep.backoff_base_ms << (attempt - 1)));
    httplib::Client client(base);
    const auto timeout = std::chrono::milliseconds(ep.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) return detail::extract_text(res->body);
    last_error = "HTTP " + std::to_string(res->status);
    if (res->status != 429 && res->status < 500) break;
  }
  throw GeneratorFailure(ep.url + ": " + last_error + " (after " +
                         std::to_string(ep.retries + 1) + " attempts max)");
}

// Live sample source: prompt the endpoint, verify the answer.
class LlmGenerator {
 public:
  LlmGenerator(EndpointConfig endpoint, std::string prompt, VerifierSpec verifier,
               SleepFn sleep = real_sleep)
      : endpoint_(std::move(endpoint)),
        prompt_(std::move(prompt)),
        verifier_(std::move(verifier)),
        sleep_(std::move(sleep)) {
    endpoint_.validate();
    verifier_.validate();
  }

  GeneratorSample operator()() const {
    std::string text = complete(endpoint_, prompt_, sleep_);
    GeneratorSample s;
    s.violation = verify(text, verifier_);
    s.payload = std::move(text);
    return s;
  }

 private:
  EndpointConfig endpoint_;
  std::string prompt_;
  VerifierSpec verifier_;
  SleepFn sleep_;
};

// Keeps up to `depth` calls of a thread-safe source in flight and hands
// results back in issue order. Samples still in flight when the consumer
// stops are discarded.
template <typename Source>
class Prefetched {
 public:
  Prefetched(Source source, std::size_t depth) : source_(std::move(source)), depth_(depth) {
    if (depth_ == 0) throw InvalidArgument("prefetch depth must be positive");
  }
  Prefetched(const Prefetched&) = delete;
  Prefetched& operator=(const Prefetched&) = delete;
  ~Prefetched() {
    for (auto& f : inflight_) {
      if (f.valid()) f.wait();
    }
  }

  GeneratorSample operator()() {
    while (inflight_.size() < depth_) {
      inflight_.push_back(std::async(std::launch::async, [this] { return source_(); }));
    }
    auto next = std::move(inflight_.front());
    inflight_.pop_front();
    return next.get();
  }

 private:
  Source source_;
  std::size_t depth_;
  std::deque<std::future<GeneratorSample>> inflight_;
};

}  // namespace cci
