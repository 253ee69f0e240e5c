#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "medfact/backend.hpp"
#include "medfact/bench.hpp"
#include "medfact/cache.hpp"
#include "medfact/core.hpp"
#include "medfact/pipeline.hpp"

namespace medfact {

// kind: "openai" (any OpenAI-compatible endpoint), "together", "http" (NLI
// only) or "stub" (transcript file). Secrets are never stored here, only the
// name of the environment variable that holds them.
struct BackendConfig {
  std::string kind = "stub";
  std::optional<std::string> model;
  std::optional<std::string> url;
  std::optional<std::string> api_key_env;
  std::optional<std::filesystem::path> transcript;
  std::optional<int> max_tokens;
  std::optional<std::size_t> input_budget_words;
  int timeout_seconds = 120;
};

struct RunConfig {
  std::filesystem::path base_dir = ".";

  // paths
  std::optional<std::filesystem::path> generations;
  std::optional<std::filesystem::path> corpus;
  std::optional<std::filesystem::path> index;
  std::optional<std::filesystem::path> cache_dir;
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::filesystem::path> annotations;
  std::map<TaskKind, std::filesystem::path> datasets;

  // run
  Mode mode = Mode::Hybrid;
  std::vector<TaskKind> tasks{kAllTasks[0], kAllTasks[1], kAllTasks[2], kAllTasks[3]};
  std::vector<std::string> models;
  std::size_t concurrency = 8;
  std::optional<std::string> fixed_timestamp;

  // pipeline
  std::size_t k = 5;
  std::size_t chunk_size = 256;
  std::size_t overlap = 32;
  std::size_t max_facts = 64;
  NliDirection nli_direction = NliDirection::EvidencePremise;

  BackendConfig judge{"stub", "gpt-4o-mini"};
  BackendConfig nli{"stub", "tasksource/deberta-base-long-nli"};
  BackendConfig generator{"stub"};

  // bench
  std::uint64_t seed = 42;
  std::size_t samples = 1000;

  RetryPolicy retry;

  PipelineConfig pipeline_config() const;
  TaskSpec task_spec(TaskKind task) const;

  // Checks that every configured input path exists and the numeric settings
  // are consistent. Throws ConfigError.
  void validate() const;
};

// Parses the YAML config. Relative paths resolve against the file's
// directory. Unknown keys and inline secrets are rejected (ConfigError).
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& yaml, const std::filesystem::path& base_dir);

// Every recognised key, for the reference page.
const std::vector<std::pair<std::string, std::string>>& config_reference();

// Shared cache and in-flight limit for every backend the CLI builds.
struct BackendEnv {
  std::shared_ptr<ResponseCache> cache;  // may be null: no caching
  std::shared_ptr<CallLimiter> limiter;
  RetryPolicy retry;
};

BackendEnv make_backend_env(const RunConfig& config);

// Decorated (cache, limiter, retries) backends. Environment variables named in
// the config are resolved here, before any call is made (ConfigError).
std::shared_ptr<ChatBackend> make_judge(const BackendConfig& config, const BackendEnv& env);
std::shared_ptr<NliBackend> make_nli(const BackendConfig& config, const BackendEnv& env);
// A generator backend for one model name; presets map names to checkpoints.
std::shared_ptr<ChatBackend> make_generator(const BackendConfig& config, const std::string& model,
                                            const BackendEnv& env);

}  // namespace medfact
