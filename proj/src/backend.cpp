#include "medfact/backend.hpp"

#include <cmath>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "medfact/cache.hpp"
#include "medfact/error.hpp"
#include "medfact/hashing.hpp"
#include "medfact/text.hpp"

namespace medfact {

using json = nlohmann::json;

std::string DecodeParams::canonical() const {
  json j{{"temperature", temperature}};
  if (max_tokens) j["max_tokens"] = *max_tokens;
  return j.dump();
}

std::string chat_request_key(const ChatRequest& request) {
  return sha256_fields({request.system, request.user, request.params.canonical()});
}

std::string nli_request_key(std::string_view premise, std::string_view hypothesis) {
  return sha256_fields({premise, hypothesis});
}

namespace {

std::vector<json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open transcript " + path);
  std::vector<json> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedRecord, path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::optional<std::string> opt_str(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<std::string>();
}

NliProbs one_hot(std::string_view label) {
  if (label == "entailment") return {1.0, 0.0, 0.0};
  if (label == "neutral") return {0.0, 1.0, 0.0};
  if (label == "contradiction") return {0.0, 0.0, 1.0};
  throw Error(ErrorCode::InvalidArgument, "unknown NLI label " + std::string(label));
}

}  // namespace

StubChatBackend::StubChatBackend(std::vector<Entry> entries, std::string model)
    : model_(std::move(model)) {
  for (auto& e : entries) {
    if (!e.key && e.match.empty()) {
      default_ = e.response;
      continue;
    }
    entries_.push_back(std::move(e));
  }
}

std::unique_ptr<StubChatBackend> StubChatBackend::from_file(const std::string& path,
                                                            std::string model) {
  std::vector<Entry> entries;
  for (const auto& j : read_jsonl(path)) {
    Entry e;
    if (j.contains("default")) {
      e.response = j["default"].get<std::string>();
    } else {
      e.key = opt_str(j, "key");
      if (auto m = j.find("match"); m != j.end()) {
        if (m->is_string()) e.match.push_back(m->get<std::string>());
        else e.match = m->get<std::vector<std::string>>();
      }
      e.response = opt_str(j, "response");
      e.error = opt_str(j, "error");
      if (!e.key && e.match.empty())
        throw Error(ErrorCode::MalformedRecord, path + ": entry needs key, match or default");
    }
    entries.push_back(std::move(e));
  }
  return std::make_unique<StubChatBackend>(std::move(entries), std::move(model));
}

std::string StubChatBackend::complete(const ChatRequest& request) {
  ++calls_;
  auto answer = [](const Entry& e) -> std::string {
    if (e.error) throw Error(ErrorCode::BackendFailure, "stub failure: " + *e.error);
    return e.response.value_or("");
  };
  auto key = chat_request_key(request);
  for (const auto& e : entries_)
    if (e.key && *e.key == key) return answer(e);
  const auto text = request.system + "\n" + request.user;
  for (const auto& e : entries_) {
    if (e.match.empty()) continue;
    bool all = true;
    for (const auto& m : e.match) all = all && text.find(m) != std::string::npos;
    if (all) return answer(e);
  }
  if (default_) return *default_;
  throw Error(ErrorCode::BackendFailure, "stub transcript has no entry for request " + key);
}

StubNliBackend::StubNliBackend(std::vector<Entry> entries, std::string model,
                               std::optional<std::size_t> budget)
    : model_(std::move(model)), budget_(budget) {
  for (auto& e : entries) {
    if (!e.key && !e.hypothesis) {
      default_ = e.probs;
      continue;
    }
    entries_.push_back(std::move(e));
  }
}

std::unique_ptr<StubNliBackend> StubNliBackend::from_file(const std::string& path,
                                                          std::string model,
                                                          std::optional<std::size_t> budget) {
  std::vector<Entry> entries;
  for (const auto& j : read_jsonl(path)) {
    Entry e;
    if (j.contains("default")) {
      e.probs = one_hot(j["default"].get<std::string>());
      entries.push_back(std::move(e));
      continue;
    }
    e.key = opt_str(j, "key");
    e.hypothesis = opt_str(j, "hypothesis");
    e.premise_contains = opt_str(j, "premise_contains");
    e.error = opt_str(j, "error");
    if (j.contains("probs")) {
      auto p = j["probs"].get<std::vector<double>>();
      if (p.size() != 3) throw Error(ErrorCode::MalformedRecord, path + ": probs needs 3 values");
      e.probs = NliProbs{p[0], p[1], p[2]};
    } else if (j.contains("label")) {
      e.probs = one_hot(j["label"].get<std::string>());
    }
    if (!e.key && !e.hypothesis)
      throw Error(ErrorCode::MalformedRecord, path + ": entry needs key, hypothesis or default");
    entries.push_back(std::move(e));
  }
  return std::make_unique<StubNliBackend>(std::move(entries), std::move(model), budget);
}

NliProbs StubNliBackend::classify(std::string_view premise, std::string_view hypothesis) {
  ++calls_;
  auto answer = [](const Entry& e) -> NliProbs {
    if (e.error) throw Error(ErrorCode::BackendFailure, "stub failure: " + *e.error);
    if (!e.probs) throw Error(ErrorCode::BackendFailure, "stub entry has no probabilities");
    return *e.probs;
  };
  auto key = nli_request_key(premise, hypothesis);
  for (const auto& e : entries_)
    if (e.key && *e.key == key) return answer(e);
  for (const auto& e : entries_) {
    if (!e.hypothesis || *e.hypothesis != hypothesis) continue;
    if (e.premise_contains && premise.find(*e.premise_contains) == std::string_view::npos) continue;
    return answer(e);
  }
  if (default_) return *default_;
  throw Error(ErrorCode::BackendFailure, "stub transcript has no entry for NLI pair " + key);
}

CallLimiter::CallLimiter(std::ptrdiff_t limit) : sem_(limit < 1 ? 1 : limit) {
  if (limit < 1) throw Error(ErrorCode::ConfigError, "concurrency limit must be positive");
}

namespace {

template <typename F>
auto with_retry(const RetryPolicy& policy, std::atomic<std::size_t>& counter, F&& call) {
  auto backoff = policy.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      ++counter;
      return call();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::BackendFailure || attempt >= policy.attempts) throw;
    }
    std::this_thread::sleep_for(backoff);
    backoff = std::chrono::milliseconds(
        static_cast<long long>(std::llround(static_cast<double>(backoff.count()) * policy.multiplier)));
  }
}

}  // namespace

ManagedChatBackend::ManagedChatBackend(std::shared_ptr<ChatBackend> inner,
                                       std::shared_ptr<ResponseCache> cache,
                                       std::shared_ptr<CallLimiter> limiter, RetryPolicy retry)
    : inner_(std::move(inner)), cache_(std::move(cache)), limiter_(std::move(limiter)), retry_(retry) {}

std::string ManagedChatBackend::complete(const ChatRequest& request) {
  std::string key;
  if (cache_) {
    key = cache_key(inner_->backend_id(), inner_->model_id(),
                    json::array({request.system, request.user}).dump(), request.params.canonical());
    if (auto hit = cache_->get(key)) return *hit;
  }
  auto call = [&] {
    return limiter_ ? limiter_->run([&] { return inner_->complete(request); })
                    : inner_->complete(request);
  };
  auto response = with_retry(retry_, backend_calls_, call);
  if (cache_) cache_->put(key, response);
  return response;
}

ManagedNliBackend::ManagedNliBackend(std::shared_ptr<NliBackend> inner,
                                     std::shared_ptr<ResponseCache> cache,
                                     std::shared_ptr<CallLimiter> limiter, RetryPolicy retry)
    : inner_(std::move(inner)), cache_(std::move(cache)), limiter_(std::move(limiter)), retry_(retry) {}

NliProbs ManagedNliBackend::classify(std::string_view premise, std::string_view hypothesis) {
  std::string key;
  if (cache_) {
    key = cache_key(inner_->backend_id(), inner_->model_id(),
                    json::array({premise, hypothesis}).dump(), "nli");
    if (auto hit = cache_->get(key)) {
      auto p = json::parse(*hit).get<std::vector<double>>();
      if (p.size() == 3) return {p[0], p[1], p[2]};
    }
  }
  auto call = [&] {
    return limiter_ ? limiter_->run([&] { return inner_->classify(premise, hypothesis); })
                    : inner_->classify(premise, hypothesis);
  };
  auto probs = with_retry(retry_, backend_calls_, call);
  if (cache_) cache_->put(key, json(std::vector<double>(probs.begin(), probs.end())).dump());
  return probs;
}

}  // namespace medfact
