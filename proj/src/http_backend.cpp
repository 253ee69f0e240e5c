#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "medfact/http_backend.hpp"

#include <cstdlib>

#include <nlohmann/json.hpp>

#include "medfact/error.hpp"
#include "medfact/text.hpp"

namespace medfact {

using json = nlohmann::json;

HttpEndpoint parse_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw Error(ErrorCode::ConfigError, "URL needs a scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

namespace {

std::string require_env(const std::string& name) {
  const char* value = std::getenv(name.c_str());
  if (!value || !*value)
    throw Error(ErrorCode::ConfigError, "environment variable " + name + " is not set");
  return value;
}

httplib::Result post_json(const HttpEndpoint& endpoint, std::chrono::seconds timeout,
                          const std::string& bearer, const std::string& body) {
  httplib::Client client(endpoint.scheme_host_port);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!bearer.empty()) headers.emplace("Authorization", "Bearer " + bearer);
  return client.Post(endpoint.path, headers, body, "application/json");
}

std::string check_response(const httplib::Result& res, const std::string& what) {
  if (!res) throw Error(ErrorCode::BackendFailure, what + ": " + httplib::to_string(res.error()));
  if (res->status == 413)
    throw Error(ErrorCode::InputTooLong, what + ": input rejected as too long");
  if (res->status < 200 || res->status >= 300)
    throw Error(ErrorCode::BackendFailure, what + ": HTTP " + std::to_string(res->status));
  return res->body;
}

}  // namespace

OpenAiChatBackend::OpenAiChatBackend(Options options)
    : options_(std::move(options)), endpoint_(parse_url(options_.url)) {
  api_key_ = require_env(options_.api_key_env);
}

std::string OpenAiChatBackend::complete(const ChatRequest& request) {
  json messages = json::array();
  if (!request.system.empty()) messages.push_back({{"role", "system"}, {"content", request.system}});
  messages.push_back({{"role", "user"}, {"content", request.user}});
  json body{{"model", options_.model}, {"messages", messages}, {"temperature", request.params.temperature}};
  if (request.params.max_tokens) body["max_tokens"] = *request.params.max_tokens;

  auto res = post_json(endpoint_, options_.timeout, api_key_, body.dump());
  auto text = check_response(res, "chat completion");
  try {
    auto parsed = json::parse(text);
    return parsed.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BackendFailure, std::string("unexpected chat response: ") + e.what());
  }
}

HttpNliBackend::HttpNliBackend(Options options)
    : options_(std::move(options)), endpoint_(parse_url(options_.url)) {
  if (options_.api_key_env) api_key_ = require_env(*options_.api_key_env);
}

NliProbs parse_nli_response(const std::string& body) {
  try {
    auto j = json::parse(body);
    if (j.is_object() && j.contains("probs")) {
      auto p = j["probs"].get<std::vector<double>>();
      if (p.size() == 3) return {p[0], p[1], p[2]};
    } else if (j.is_object() && j.contains("entailment")) {
      return {j.at("entailment").get<double>(), j.at("neutral").get<double>(),
              j.at("contradiction").get<double>()};
    } else if (j.is_array()) {
      // Some servers nest the list once more (batch of one).
      const json& list = (!j.empty() && j[0].is_array()) ? j[0] : j;
      NliProbs probs{-1.0, -1.0, -1.0};
      for (const auto& item : list) {
        auto label = to_lower_ascii(item.at("label").get<std::string>());
        double score = item.at("score").get<double>();
        if (label == "entailment") probs[0] = score;
        else if (label == "neutral") probs[1] = score;
        else if (label == "contradiction") probs[2] = score;
      }
      if (probs[0] >= 0 && probs[1] >= 0 && probs[2] >= 0) return probs;
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BackendFailure, std::string("unparseable NLI response: ") + e.what());
  }
  throw Error(ErrorCode::BackendFailure, "NLI response lacks three class probabilities");
}

NliProbs HttpNliBackend::classify(std::string_view premise, std::string_view hypothesis) {
  json body{{"model", options_.model}, {"premise", premise}, {"hypothesis", hypothesis}};
  auto res = post_json(endpoint_, options_.timeout, api_key_, body.dump());
  return parse_nli_response(check_response(res, "NLI request"));
}

}  // namespace medfact
