#include "medfact/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "medfact/error.hpp"
#include "medfact/http_backend.hpp"
#include "medfact/text.hpp"

namespace medfact {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); }

const std::map<std::string, std::set<std::string>>& allowed_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"paths", {"generations", "corpus", "index", "cache_dir", "output_dir", "annotations", "datasets"}},
      {"run", {"mode", "tasks", "models", "concurrency", "fixed_timestamp"}},
      {"pipeline", {"k", "chunk_size", "overlap", "max_facts", "nli_direction"}},
      {"judge", {"kind", "model", "url", "api_key_env", "transcript", "max_tokens", "timeout_seconds"}},
      {"nli",
       {"kind", "model", "url", "api_key_env", "transcript", "input_budget_words", "timeout_seconds"}},
      {"generator", {"kind", "model", "url", "api_key_env", "transcript", "max_tokens", "timeout_seconds"}},
      {"bench", {"seed", "samples"}},
      {"retry", {"attempts", "initial_backoff_ms", "multiplier"}},
  };
  return keys;
}

template <typename T>
T scalar(const YAML::Node& node, const std::string& where) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    config_error("invalid value for " + where);
  }
}

fs::path resolve(const fs::path& base, const std::string& value) {
  fs::path p(value);
  return p.is_absolute() ? p : (base / p).lexically_normal();
}

void check_section(const YAML::Node& section, const std::string& name) {
  if (!section.IsMap()) config_error("section '" + name + "' must be a mapping");
  const auto& keys = allowed_keys().at(name);
  for (const auto& kv : section) {
    auto key = kv.first.as<std::string>();
    auto lower = to_lower_ascii(key);
    if (lower == "api_key" || lower == "token" || lower == "secret" || lower == "password")
      config_error(name + "." + key + ": secrets must be passed through environment variables (use api_key_env)");
    if (name == "paths" && key == "datasets") continue;
    if (!keys.count(key)) config_error("unknown key " + name + "." + key);
  }
}

void read_backend(const YAML::Node& node, const std::string& name, const fs::path& base, BackendConfig& out) {
  if (!node) return;
  check_section(node, name);
  if (node["kind"]) out.kind = to_lower_ascii(scalar<std::string>(node["kind"], name + ".kind"));
  if (node["model"]) out.model = scalar<std::string>(node["model"], name + ".model");
  if (node["url"]) out.url = scalar<std::string>(node["url"], name + ".url");
  if (node["api_key_env"]) out.api_key_env = scalar<std::string>(node["api_key_env"], name + ".api_key_env");
  if (node["transcript"]) out.transcript = resolve(base, scalar<std::string>(node["transcript"], name + ".transcript"));
  if (node["max_tokens"]) out.max_tokens = scalar<int>(node["max_tokens"], name + ".max_tokens");
  if (node["input_budget_words"])
    out.input_budget_words = scalar<std::size_t>(node["input_budget_words"], name + ".input_budget_words");
  if (node["timeout_seconds"]) out.timeout_seconds = scalar<int>(node["timeout_seconds"], name + ".timeout_seconds");
}

}  // namespace

RunConfig parse_run_config(const std::string& yaml, const fs::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml);
  } catch (const YAML::Exception& e) {
    config_error(std::string("config is not valid YAML: ") + e.what());
  }
  RunConfig c;
  c.base_dir = base_dir;
  if (!root || root.IsNull()) return c;
  if (!root.IsMap()) config_error("config must be a mapping");
  for (const auto& kv : root) {
    auto key = kv.first.as<std::string>();
    if (!allowed_keys().count(key)) config_error("unknown section " + key);
  }

  if (auto p = root["paths"]) {
    check_section(p, "paths");
    auto path_of = [&](const char* key, std::optional<fs::path>& out) {
      if (p[key]) out = resolve(base_dir, scalar<std::string>(p[key], std::string("paths.") + key));
    };
    path_of("generations", c.generations);
    path_of("corpus", c.corpus);
    path_of("index", c.index);
    path_of("cache_dir", c.cache_dir);
    path_of("output_dir", c.output_dir);
    path_of("annotations", c.annotations);
    if (auto d = p["datasets"]) {
      if (!d.IsMap()) config_error("paths.datasets must map task names to files");
      for (const auto& kv : d) {
        auto task_name = kv.first.as<std::string>();
        TaskKind task;
        try {
          task = parse_task(task_name);
        } catch (const Error&) {
          config_error("paths.datasets: unknown task " + task_name);
        }
        c.datasets[task] = resolve(base_dir, scalar<std::string>(kv.second, "paths.datasets." + task_name));
      }
    }
  }

  if (auto r = root["run"]) {
    check_section(r, "run");
    if (r["mode"]) c.mode = parse_mode(scalar<std::string>(r["mode"], "run.mode"));
    if (r["tasks"]) {
      c.tasks.clear();
      for (const auto& t : r["tasks"]) {
        try {
          c.tasks.push_back(parse_task(scalar<std::string>(t, "run.tasks")));
        } catch (const Error& e) {
          config_error(std::string("run.tasks: ") + e.what());
        }
      }
    }
    if (r["models"]) {
      c.models.clear();
      for (const auto& m : r["models"]) c.models.push_back(scalar<std::string>(m, "run.models"));
    }
    if (r["concurrency"]) c.concurrency = scalar<std::size_t>(r["concurrency"], "run.concurrency");
    if (r["fixed_timestamp"]) c.fixed_timestamp = scalar<std::string>(r["fixed_timestamp"], "run.fixed_timestamp");
  }

  if (auto p = root["pipeline"]) {
    check_section(p, "pipeline");
    if (p["k"]) c.k = scalar<std::size_t>(p["k"], "pipeline.k");
    if (p["chunk_size"]) c.chunk_size = scalar<std::size_t>(p["chunk_size"], "pipeline.chunk_size");
    if (p["overlap"]) c.overlap = scalar<std::size_t>(p["overlap"], "pipeline.overlap");
    if (p["max_facts"]) c.max_facts = scalar<std::size_t>(p["max_facts"], "pipeline.max_facts");
    if (p["nli_direction"])
      c.nli_direction = parse_nli_direction(scalar<std::string>(p["nli_direction"], "pipeline.nli_direction"));
  }

  read_backend(root["judge"], "judge", base_dir, c.judge);
  read_backend(root["nli"], "nli", base_dir, c.nli);
  read_backend(root["generator"], "generator", base_dir, c.generator);

  if (auto b = root["bench"]) {
    check_section(b, "bench");
    if (b["seed"]) c.seed = scalar<std::uint64_t>(b["seed"], "bench.seed");
    if (b["samples"]) c.samples = scalar<std::size_t>(b["samples"], "bench.samples");
  }

  if (auto r = root["retry"]) {
    check_section(r, "retry");
    if (r["attempts"]) c.retry.attempts = scalar<int>(r["attempts"], "retry.attempts");
    if (r["initial_backoff_ms"])
      c.retry.initial_backoff = std::chrono::milliseconds(scalar<long>(r["initial_backoff_ms"], "retry.initial_backoff_ms"));
    if (r["multiplier"]) c.retry.multiplier = scalar<double>(r["multiplier"], "retry.multiplier");
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) config_error("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  auto base = path.parent_path();
  if (base.empty()) base = ".";
  return parse_run_config(ss.str(), base);
}

PipelineConfig RunConfig::pipeline_config() const {
  PipelineConfig p;
  p.mode = mode;
  p.k = k;
  p.chunk = ChunkParams{chunk_size, overlap};
  p.decompose.max_facts = max_facts;
  p.nli_direction = nli_direction;
  if (judge.max_tokens) p.judge_params.max_tokens = judge.max_tokens;
  p.concurrency = concurrency;
  p.fixed_timestamp = fixed_timestamp;
  return p;
}

TaskSpec RunConfig::task_spec(TaskKind task) const {
  auto spec = default_task_spec(task);
  spec.sample_count = samples;
  spec.seed = seed;
  if (generator.max_tokens) spec.params.max_new_tokens = generator.max_tokens;
  return spec;
}

void RunConfig::validate() const {
  auto must_exist = [](const std::optional<fs::path>& p, const char* what) {
    if (p && !fs::exists(*p)) config_error(std::string(what) + " does not exist: " + p->string());
  };
  must_exist(generations, "paths.generations");
  must_exist(corpus, "paths.corpus");
  must_exist(index, "paths.index");
  must_exist(annotations, "paths.annotations");
  must_exist(judge.transcript, "judge.transcript");
  must_exist(nli.transcript, "nli.transcript");
  must_exist(generator.transcript, "generator.transcript");
  for (const auto& [task, p] : datasets)
    if (!fs::exists(p)) config_error("dataset for " + std::string(to_string(task)) + " does not exist: " + p.string());
  if (concurrency < 1) config_error("run.concurrency must be >= 1");
  if (samples < 1) config_error("bench.samples must be >= 1");
  if (retry.attempts < 1) config_error("retry.attempts must be >= 1");
  for (const auto* b : {&judge, &nli, &generator})
    if (b->kind == "stub" && !b->transcript && b != &generator)
      config_error("stub backends need a transcript");
  pipeline_config().validate();
}

const std::vector<std::pair<std::string, std::string>>& config_reference() {
  static const std::vector<std::pair<std::string, std::string>> ref = {
      {"paths.generations", "generation records JSONL (input to decompose/verify/score)"},
      {"paths.corpus", "corpus JSONL of {title, text} documents"},
      {"paths.index", "serialized passage index (written by ingest-corpus)"},
      {"paths.cache_dir", "response cache directory; omit to disable caching"},
      {"paths.output_dir", "run outputs: assessments.jsonl, report.json, manifests"},
      {"paths.annotations", "human annotation CSV (generation_id,annotator_id,score)"},
      {"paths.datasets.<task>", "dataset JSONL per task (Summ, LaySumm, RAG, OpenGen)"},
      {"run.mode", "hybrid | grounding-only | wikipedia-only"},
      {"run.tasks", "task list for generate"},
      {"run.models", "model names for generate (presets or free-form)"},
      {"run.concurrency", "in-flight backend call limit and worker count (default 8)"},
      {"run.fixed_timestamp", "timestamp written to manifests instead of the clock"},
      {"pipeline.k", "retrieved passages per fact (default 5)"},
      {"pipeline.chunk_size", "words per chunk (default 256)"},
      {"pipeline.overlap", "overlapping words between chunks (default 32)"},
      {"pipeline.max_facts", "cap on atomic facts per generation (default 64)"},
      {"pipeline.nli_direction", "evidence-premise | fact-premise"},
      {"judge.kind", "openai | together | stub"},
      {"judge.model / url / api_key_env / transcript / max_tokens / timeout_seconds", "judge backend"},
      {"nli.kind", "http | stub"},
      {"nli.model / url / api_key_env / transcript / input_budget_words / timeout_seconds", "NLI backend"},
      {"generator.kind", "preset | openai | together | stub"},
      {"generator.model / url / api_key_env / transcript / max_tokens / timeout_seconds", "generator backend"},
      {"bench.seed", "sampling seed (default 42)"},
      {"bench.samples", "samples per task (default 1000)"},
      {"retry.attempts / initial_backoff_ms / multiplier", "retry policy for backend failures"},
  };
  return ref;
}

BackendEnv make_backend_env(const RunConfig& config) {
  BackendEnv env;
  if (config.cache_dir) env.cache = std::make_shared<ResponseCache>(*config.cache_dir);
  env.limiter = std::make_shared<CallLimiter>(static_cast<std::ptrdiff_t>(config.concurrency));
  env.retry = config.retry;
  return env;
}

namespace {

std::shared_ptr<ChatBackend> raw_chat(const BackendConfig& c, const std::string& model, const std::string& role) {
  if (c.kind == "stub") {
    if (!c.transcript) config_error(role + ": stub backend needs a transcript");
    return StubChatBackend::from_file(c.transcript->string(), model);
  }
  if (c.kind == "openai" || c.kind == "together") {
    OpenAiChatBackend::Options o;
    o.model = model;
    o.backend_id = c.kind;
    o.timeout = std::chrono::seconds(c.timeout_seconds);
    if (c.kind == "together") {
      o.url = "https://api.together.xyz/v1/chat/completions";
      o.api_key_env = "TOGETHER_API_KEY";
    }
    if (c.url) o.url = *c.url;
    if (c.api_key_env) o.api_key_env = *c.api_key_env;
    return std::make_shared<OpenAiChatBackend>(o);
  }
  config_error(role + ": unknown backend kind " + c.kind);
}

}  // namespace

std::shared_ptr<ChatBackend> make_judge(const BackendConfig& config, const BackendEnv& env) {
  auto inner = raw_chat(config, config.model.value_or("gpt-4o-mini"), "judge");
  return std::make_shared<ManagedChatBackend>(inner, env.cache, env.limiter, env.retry);
}

std::shared_ptr<NliBackend> make_nli(const BackendConfig& config, const BackendEnv& env) {
  std::shared_ptr<NliBackend> inner;
  auto model = config.model.value_or("tasksource/deberta-base-long-nli");
  if (config.kind == "stub") {
    if (!config.transcript) config_error("nli: stub backend needs a transcript");
    inner = StubNliBackend::from_file(config.transcript->string(), model, config.input_budget_words);
  } else if (config.kind == "http") {
    HttpNliBackend::Options o;
    o.model = model;
    if (config.url) o.url = *config.url;
    o.api_key_env = config.api_key_env;
    o.input_budget_words = config.input_budget_words;
    o.timeout = std::chrono::seconds(config.timeout_seconds);
    inner = std::make_shared<HttpNliBackend>(o);
  } else {
    config_error("nli: unknown backend kind " + config.kind);
  }
  return std::make_shared<ManagedNliBackend>(inner, env.cache, env.limiter, env.retry);
}

std::shared_ptr<ChatBackend> make_generator(const BackendConfig& config, const std::string& model,
                                            const BackendEnv& env) {
  BackendConfig c = config;
  std::string checkpoint = model;
  if (c.kind == "preset") {
    auto preset = find_model_preset(model);
    if (!preset) config_error("generator: no preset named " + model);
    c.kind = preset->provider;
    checkpoint = preset->checkpoint;
  } else if (auto preset = find_model_preset(model); preset && c.kind != "stub") {
    checkpoint = preset->checkpoint;
  }
  auto inner = raw_chat(c, checkpoint, "generator");
  return std::make_shared<ManagedChatBackend>(inner, env.cache, env.limiter, env.retry);
}

}  // namespace medfact
