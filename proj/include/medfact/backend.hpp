#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

namespace medfact {

class ResponseCache;

struct DecodeParams {
  double temperature = 0.0;
  std::optional<int> max_tokens;

  // Canonical string form, used in cache keys and manifests.
  std::string canonical() const;
};

struct ChatRequest {
  std::string system;
  std::string user;
  DecodeParams params;
};

// Chat-completion style judge / generator.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  // Throws Error(BackendFailure) on transport or API errors.
  virtual std::string complete(const ChatRequest& request) = 0;
  // Identifier recorded in manifests and cache keys, e.g. "openai".
  virtual std::string backend_id() const = 0;
  virtual std::string model_id() const = 0;
};

// Entailment / neutral / contradiction probabilities, in that order.
using NliProbs = std::array<double, 3>;

class NliBackend {
 public:
  virtual ~NliBackend() = default;
  virtual NliProbs classify(std::string_view premise, std::string_view hypothesis) = 0;
  virtual std::string backend_id() const = 0;
  virtual std::string model_id() const = 0;
  // Largest premise+hypothesis size in words the model accepts; nullopt means
  // unbounded.
  virtual std::optional<std::size_t> input_budget_words() const { return std::nullopt; }
};

// Hash that stub transcripts use to address a chat request.
std::string chat_request_key(const ChatRequest& request);
std::string nli_request_key(std::string_view premise, std::string_view hypothesis);

// Canned chat responses read from a JSONL transcript. Each line is one of
//   {"key": <chat_request_key>, "response": "..."}
//   {"match": "<substring of system+user>", "response": "..."}
//   {"match": ["<substring>", "<substring>", ...], "response": "..."}  (all must occur)
//   {"default": "..."}
// and any entry may use "error": "<message>" instead of "response" to
// simulate a transport failure. Exact keys win over "match" rules, which are
// tried in file order; unmatched requests fall back to the default, if any.
class StubChatBackend : public ChatBackend {
 public:
  struct Entry {
    std::optional<std::string> key;
    std::vector<std::string> match;
    std::optional<std::string> response;
    std::optional<std::string> error;
  };

  explicit StubChatBackend(std::vector<Entry> entries, std::string model = "stub-judge");
  static std::unique_ptr<StubChatBackend> from_file(const std::string& path,
                                                    std::string model = "stub-judge");

  std::string complete(const ChatRequest& request) override;
  std::string backend_id() const override { return "stub"; }
  std::string model_id() const override { return model_; }

  std::size_t calls() const { return calls_.load(); }

 private:
  std::vector<Entry> entries_;
  std::optional<std::string> default_;
  std::string model_;
  std::atomic<std::size_t> calls_{0};
};

// Canned NLI probabilities. JSONL lines:
//   {"key": <nli_request_key>, "probs": [e, n, c]}
//   {"hypothesis": "<exact text>", "premise_contains": "<optional>", "label": "entailment"}
//   {"default": "neutral"}
// "label" is shorthand for a one-hot distribution. "error" simulates failure.
class StubNliBackend : public NliBackend {
 public:
  struct Entry {
    std::optional<std::string> key;
    std::optional<std::string> hypothesis;
    std::optional<std::string> premise_contains;
    std::optional<NliProbs> probs;
    std::optional<std::string> error;
  };

  explicit StubNliBackend(std::vector<Entry> entries, std::string model = "stub-nli",
                          std::optional<std::size_t> budget = std::nullopt);
  static std::unique_ptr<StubNliBackend> from_file(const std::string& path,
                                                   std::string model = "stub-nli",
                                                   std::optional<std::size_t> budget = std::nullopt);

  NliProbs classify(std::string_view premise, std::string_view hypothesis) override;
  std::string backend_id() const override { return "stub"; }
  std::string model_id() const override { return model_; }
  std::optional<std::size_t> input_budget_words() const override { return budget_; }

  std::size_t calls() const { return calls_.load(); }

 private:
  std::vector<Entry> entries_;
  std::optional<NliProbs> default_;
  std::string model_;
  std::optional<std::size_t> budget_;
  std::atomic<std::size_t> calls_{0};
};

// Adapters around plain callables, used mostly by tests.
class FunctionChatBackend : public ChatBackend {
 public:
  using Fn = std::function<std::string(const ChatRequest&)>;
  explicit FunctionChatBackend(Fn fn, std::string model = "fn-judge")
      : fn_(std::move(fn)), model_(std::move(model)) {}

  std::string complete(const ChatRequest& request) override {
    ++calls_;
    return fn_(request);
  }
  std::string backend_id() const override { return "function"; }
  std::string model_id() const override { return model_; }
  std::size_t calls() const { return calls_.load(); }

 private:
  Fn fn_;
  std::string model_;
  std::atomic<std::size_t> calls_{0};
};

class FunctionNliBackend : public NliBackend {
 public:
  using Fn = std::function<NliProbs(std::string_view, std::string_view)>;
  explicit FunctionNliBackend(Fn fn, std::string model = "fn-nli",
                              std::optional<std::size_t> budget = std::nullopt)
      : fn_(std::move(fn)), model_(std::move(model)), budget_(budget) {}

  NliProbs classify(std::string_view premise, std::string_view hypothesis) override {
    ++calls_;
    return fn_(premise, hypothesis);
  }
  std::string backend_id() const override { return "function"; }
  std::string model_id() const override { return model_; }
  std::optional<std::size_t> input_budget_words() const override { return budget_; }
  std::size_t calls() const { return calls_.load(); }

 private:
  Fn fn_;
  std::string model_;
  std::optional<std::size_t> budget_;
  std::atomic<std::size_t> calls_{0};
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
};

// Caps the number of backend calls in flight across every wrapped backend
// sharing this limiter.
class CallLimiter {
 public:
  explicit CallLimiter(std::ptrdiff_t limit);

  template <typename F>
  auto run(F&& f) {
    sem_.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{sem_};
    return f();
  }

 private:
  std::counting_semaphore<> sem_;
};

// Decorator stack applied to every live backend: cache lookup first, then the
// in-flight limit, then retries with exponential backoff on BackendFailure.
class ManagedChatBackend : public ChatBackend {
 public:
  ManagedChatBackend(std::shared_ptr<ChatBackend> inner, std::shared_ptr<ResponseCache> cache,
                     std::shared_ptr<CallLimiter> limiter, RetryPolicy retry = {});

  std::string complete(const ChatRequest& request) override;
  std::string backend_id() const override { return inner_->backend_id(); }
  std::string model_id() const override { return inner_->model_id(); }

  // Calls that reached the inner backend (cache misses, retries included).
  std::size_t backend_calls() const { return backend_calls_.load(); }

 private:
  std::shared_ptr<ChatBackend> inner_;
  std::shared_ptr<ResponseCache> cache_;
  std::shared_ptr<CallLimiter> limiter_;
  RetryPolicy retry_;
  std::atomic<std::size_t> backend_calls_{0};
};

class ManagedNliBackend : public NliBackend {
 public:
  ManagedNliBackend(std::shared_ptr<NliBackend> inner, std::shared_ptr<ResponseCache> cache,
                    std::shared_ptr<CallLimiter> limiter, RetryPolicy retry = {});

  NliProbs classify(std::string_view premise, std::string_view hypothesis) override;
  std::string backend_id() const override { return inner_->backend_id(); }
  std::string model_id() const override { return inner_->model_id(); }
  std::optional<std::size_t> input_budget_words() const override {
    return inner_->input_budget_words();
  }

  std::size_t backend_calls() const { return backend_calls_.load(); }

 private:
  std::shared_ptr<NliBackend> inner_;
  std::shared_ptr<ResponseCache> cache_;
  std::shared_ptr<CallLimiter> limiter_;
  RetryPolicy retry_;
  std::atomic<std::size_t> backend_calls_{0};
};

}  // namespace medfact
