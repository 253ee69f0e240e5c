#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>

#include "medfact/backend.hpp"

namespace medfact {

struct HttpEndpoint {
  std::string scheme_host_port;  // "https://api.openai.com"
  std::string path;              // "/v1/chat/completions"
};

// Splits "https://host:port/some/path" into its origin and path.
HttpEndpoint parse_url(const std::string& url);

// OpenAI-compatible /chat/completions client (OpenAI, Together AI, vLLM, ...).
// The API key is read from the named environment variable at construction
// and held only in memory.
class OpenAiChatBackend : public ChatBackend {
 public:
  struct Options {
    std::string url = "https://api.openai.com/v1/chat/completions";
    std::string model = "gpt-4o-mini";
    std::string api_key_env = "OPENAI_API_KEY";
    std::string backend_id = "openai";
    std::chrono::seconds timeout{120};
  };

  explicit OpenAiChatBackend(Options options);

  std::string complete(const ChatRequest& request) override;
  std::string backend_id() const override { return options_.backend_id; }
  std::string model_id() const override { return options_.model; }

 private:
  Options options_;
  HttpEndpoint endpoint_;
  std::string api_key_;
};

// JSON-over-HTTP NLI classifier. Sends {"model", "premise", "hypothesis"} and
// accepts any of
//   {"probs": [e, n, c]}
//   {"entailment": e, "neutral": n, "contradiction": c}
//   [{"label": "entailment", "score": e}, ...]   (text-classification style)
class HttpNliBackend : public NliBackend {
 public:
  struct Options {
    std::string url = "http://127.0.0.1:8080/nli";
    std::string model = "tasksource/deberta-base-long-nli";
    std::optional<std::string> api_key_env;
    std::optional<std::size_t> input_budget_words;
    std::chrono::seconds timeout{60};
  };

  explicit HttpNliBackend(Options options);

  NliProbs classify(std::string_view premise, std::string_view hypothesis) override;
  std::string backend_id() const override { return "http-nli"; }
  std::string model_id() const override { return options_.model; }
  std::optional<std::size_t> input_budget_words() const override {
    return options_.input_budget_words;
  }

 private:
  Options options_;
  HttpEndpoint endpoint_;
  std::string api_key_;
};

// Parses the NLI response formats listed above.
NliProbs parse_nli_response(const std::string& body);

}  // namespace medfact
