#pragma once

#include <algorithm>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "cci/llm_client.hpp"

namespace testing_support {

// Local chat-completion endpoint whose responses are scripted per test.
class MockEndpoint {
 public:
  MockEndpoint() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard<std::mutex> lock(mu_);
      requests_.push_back(req.body);
      auth_ = req.get_header_value("Authorization");
      if (responder_) {
        const auto [status, body] = responder_(req.body);
        res.status = status;
        res.set_content(body, "application/json");
        return;
      }
      const std::size_t i = std::min(requests_.size() - 1, script_.size() - 1);
      res.status = script_[i].first;
      res.set_content(script_[i].second, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockEndpoint() {
    server_.stop();
    thread_.join();
  }

  void script(std::vector<std::pair<int, std::string>> s) {
    std::lock_guard<std::mutex> lock(mu_);
    script_ = std::move(s);
    requests_.clear();
  }
  // Computes each response from the request body instead of a script.
  void respond(std::function<std::pair<int, std::string>(const std::string&)> f) {
    std::lock_guard<std::mutex> lock(mu_);
    responder_ = std::move(f);
    requests_.clear();
  }
  std::vector<std::string> requests() {
    std::lock_guard<std::mutex> lock(mu_);
    return requests_;
  }
  std::string auth() {
    std::lock_guard<std::mutex> lock(mu_);
    return auth_;
  }

  cci::EndpointConfig config() const {
    cci::EndpointConfig c;
    c.url = "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
    c.model = "test-model";
    c.temperature = 0.8;
    c.token_env = "CCI_TEST_TOKEN";
    c.timeout_ms = 2000;
    c.retries = 2;
    c.backoff_base_ms = 10;
    return c;
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_{0};
  std::mutex mu_;
  std::vector<std::pair<int, std::string>> script_{{200, "{}"}};
  std::vector<std::string> requests_;
  std::string auth_;
  std::function<std::pair<int, std::string>(const std::string&)> responder_;
};

inline std::string completion(const std::string& text) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}}}.dump();
}

}  // namespace testing_support
