#include "medfact/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>
#include <tuple>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "medfact/error.hpp"
#include "medfact/hashing.hpp"
#include "medfact/pipeline.hpp"
#include "medfact/resources.hpp"
#include "medfact/text.hpp"

namespace medfact {

using json = nlohmann::json;

std::string_view to_string(DatasetName name) {
  switch (name) {
    case DatasetName::PubMed: return "PubMed";
    case DatasetName::Plos: return "PLOS";
    case DatasetName::BioAsq: return "BioASQ-summary";
  }
  return "?";
}

DatasetName parse_dataset_name(std::string_view name) {
  auto lower = to_lower_ascii(name);
  if (lower == "pubmed") return DatasetName::PubMed;
  if (lower == "plos") return DatasetName::Plos;
  if (lower == "bioasq" || lower == "bioasq-summary") return DatasetName::BioAsq;
  throw Error(ErrorCode::ConfigError, "unknown dataset " + std::string(name));
}

DatasetName dataset_for(TaskKind task) {
  switch (task) {
    case TaskKind::Summ: return DatasetName::PubMed;
    case TaskKind::LaySumm: return DatasetName::Plos;
    case TaskKind::Rag:
    case TaskKind::OpenGen: return DatasetName::BioAsq;
  }
  return DatasetName::PubMed;
}

namespace {

std::string_view template_for(TaskKind task) {
  switch (task) {
    case TaskKind::Summ: return "summ.txt";
    case TaskKind::LaySumm: return "laysumm.txt";
    case TaskKind::Rag: return "rag.txt";
    case TaskKind::OpenGen: return "opengen.txt";
  }
  return "";
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::DatasetNotFound, "dataset not found: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string string_or_first(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_array() && !v.empty() && v[0].is_string()) return v[0].get<std::string>();
  return {};
}

std::string id_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  return {};
}

std::vector<std::string> snippet_texts(const json& v) {
  std::vector<std::string> out;
  if (!v.is_array()) return out;
  for (const auto& s : v) {
    if (s.is_string()) out.push_back(s.get<std::string>());
    else if (s.is_object() && s.contains("text")) out.push_back(s["text"].get<std::string>());
  }
  return out;
}

}  // namespace

void TaskSpec::validate() const {
  if (sample_count == 0) throw Error(ErrorCode::ConfigError, "sample count must be >= 1");
  try {
    resource(template_id);
  } catch (const std::out_of_range&) {
    throw Error(ErrorCode::ConfigError, "unknown prompt template " + template_id);
  }
}

TaskSpec default_task_spec(TaskKind task) {
  TaskSpec spec;
  spec.task = task;
  spec.dataset = dataset_for(task);
  spec.template_id = std::string(template_for(task));
  if (task != TaskKind::OpenGen) spec.params.max_new_tokens = 256;
  return spec;
}

std::vector<SampleRecord> read_samples_jsonl(TaskKind task, const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<SampleRecord> samples;
  std::string line;
  std::size_t lineno = 0;
  auto malformed = [&](const std::string& why) {
    return Error(ErrorCode::MalformedRecord, path + ":" + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw malformed(e.what());
    }
    if (!j.is_object()) throw malformed("expected an object");
    SampleRecord s;
    s.sample_id = j.contains("id") ? id_string(j["id"]) : "";
    if (s.sample_id.empty()) throw malformed("missing id");
    try {
      switch (task) {
        case TaskKind::Summ:
          s.article = j.at("article").get<std::string>();
          s.reference = j.contains("abstract") ? string_or_first(j["abstract"]) : "";
          break;
        case TaskKind::LaySumm:
          s.article = j.at("article").get<std::string>();
          s.reference = j.contains("lay_summary") ? string_or_first(j["lay_summary"]) : "";
          break;
        case TaskKind::Rag:
        case TaskKind::OpenGen:
          s.question = j.at("question").get<std::string>();
          s.snippets = snippet_texts(j.value("snippets", json::array()));
          s.reference = j.contains("ideal_answer") ? string_or_first(j["ideal_answer"]) : "";
          break;
      }
    } catch (const json::exception& e) {
      throw malformed(e.what());
    }
    if (task != TaskKind::OpenGen && trim(grounding_text(task, s)).empty())
      throw malformed("empty grounding text");
    if (task_has_question(task) && trim(s.question).empty()) throw malformed("empty question");
    samples.push_back(std::move(s));
  }
  return samples;
}

void write_samples_jsonl(const std::string& path, DatasetName dataset, std::span<const SampleRecord> samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  for (const auto& s : samples) {
    json j;
    switch (dataset) {
      case DatasetName::PubMed:
        j = json{{"id", s.sample_id}, {"article", s.article}, {"abstract", s.reference}};
        break;
      case DatasetName::Plos:
        j = json{{"id", s.sample_id}, {"article", s.article}, {"lay_summary", s.reference}};
        break;
      case DatasetName::BioAsq:
        j = json{{"id", s.sample_id},
                 {"question", s.question},
                 {"snippets", s.snippets},
                 {"ideal_answer", s.reference}};
        break;
    }
    out << j.dump() << '\n';
  }
}

std::vector<std::size_t> sample_indices(std::size_t size, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), 0);
  if (n >= size) return idx;
  std::mt19937_64 rng(seed);
  // Unbiased draw in [0, bound) by rejection; the standard distributions are
  // not specified bit-for-bit across library implementations.
  auto draw = [&](std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do x = rng();
    while (x >= limit);
    return x % bound;
  };
  for (std::size_t i = 0; i < n; ++i) {
    auto j = i + static_cast<std::size_t>(draw(size - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<SampleRecord> load_dataset(TaskKind task, const std::string& path, std::size_t n,
                                       std::uint64_t seed) {
  auto all = read_samples_jsonl(task, path);
  std::vector<SampleRecord> picked;
  for (auto i : sample_indices(all.size(), n, seed)) picked.push_back(std::move(all[i]));
  return picked;
}

std::vector<SampleRecord> convert_dataset(DatasetName dataset, const std::string& path) {
  const auto text = read_file(path);
  std::vector<SampleRecord> out;
  auto parse_lines = [&](auto&& fn) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      try {
        fn(json::parse(line), lineno);
      } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedRecord, path + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
  };

  switch (dataset) {
    case DatasetName::PubMed:
      parse_lines([&](const json& j, std::size_t lineno) {
        SampleRecord s;
        s.sample_id = j.contains("id") ? id_string(j["id"]) : "pubmed-" + std::to_string(lineno);
        s.article = j.at("article").get<std::string>();
        s.reference = j.contains("abstract") ? string_or_first(j["abstract"]) : "";
        out.push_back(std::move(s));
      });
      break;
    case DatasetName::Plos: {
      auto one = [&](const json& j, std::size_t lineno) {
        SampleRecord s;
        s.sample_id = j.contains("id") ? id_string(j["id"]) : "plos-" + std::to_string(lineno);
        s.article = j.at("article").get<std::string>();
        if (j.contains("lay_summary")) s.reference = string_or_first(j["lay_summary"]);
        else if (j.contains("summary")) s.reference = string_or_first(j["summary"]);
        out.push_back(std::move(s));
      };
      auto first = trim(text);
      if (!first.empty() && first.front() == '[') {
        try {
          auto arr = json::parse(text);
          for (std::size_t i = 0; i < arr.size(); ++i) one(arr[i], i + 1);
        } catch (const json::exception& e) {
          throw Error(ErrorCode::MalformedRecord, path + ": " + e.what());
        }
      } else {
        parse_lines(one);
      }
      break;
    }
    case DatasetName::BioAsq: {
      json root;
      try {
        root = json::parse(text);
        for (const auto& q : root.at("questions")) {
          if (q.value("type", "") != "summary") continue;
          SampleRecord s;
          s.sample_id = id_string(q.at("id"));
          s.question = q.at("body").get<std::string>();
          s.snippets = snippet_texts(q.value("snippets", json::array()));
          if (q.contains("ideal_answer")) s.reference = string_or_first(q["ideal_answer"]);
          out.push_back(std::move(s));
        }
      } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedRecord, path + ": " + e.what());
      }
      break;
    }
  }
  return out;
}

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      auto close = tmpl.find('}', i);
      if (close != std::string_view::npos) {
        auto it = values.find(std::string(tmpl.substr(i + 1, close - i - 1)));
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  return out;
}

std::string grounding_text(TaskKind task, const SampleRecord& sample) {
  switch (task) {
    case TaskKind::Summ:
    case TaskKind::LaySumm: return sample.article;
    case TaskKind::Rag: {
      std::string joined;
      for (std::size_t i = 0; i < sample.snippets.size(); ++i) {
        if (i) joined += '\n';
        joined += sample.snippets[i];
      }
      return joined;
    }
    case TaskKind::OpenGen: return {};
  }
  return {};
}

std::string render_prompt(TaskKind task, const SampleRecord& sample) {
  std::map<std::string, std::string> values;
  if (task == TaskKind::Summ || task == TaskKind::LaySumm) {
    if (trim(sample.article).empty())
      throw Error(ErrorCode::MissingField, "sample " + sample.sample_id + " has no article");
    values["article"] = sample.article;
  } else {
    if (trim(sample.question).empty())
      throw Error(ErrorCode::MissingField, "sample " + sample.sample_id + " has no question");
    values["question"] = sample.question;
    if (task == TaskKind::Rag) {
      auto context = grounding_text(task, sample);
      if (trim(context).empty())
        throw Error(ErrorCode::MissingField, "sample " + sample.sample_id + " has no snippets");
      values["context"] = context;
    }
  }
  return render_template(resource(template_for(task)), values);
}

std::string generate(ChatBackend& backend, std::string_view prompt, const GenerationParams& params,
                     GenerationLogEntry* log) {
  auto start = std::chrono::steady_clock::now();
  auto text = backend.complete(ChatRequest{"", std::string(prompt), params.decode()});
  if (log) {
    log->model_id = backend.model_id();
    log->backend_id = backend.backend_id();
    log->params = params.decode().canonical();
    log->prompt_sha256 = sha256_hex(prompt);
    log->latency_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }
  return text;
}

const std::vector<ModelPreset>& model_presets() {
  static const std::vector<ModelPreset> presets = {
      {"gpt-4o-mini", "openai", "gpt-4o-mini"},
      {"llama3.1-8b", "together", "meta-llama/Meta-Llama-3.1-8B-Instruct-Turbo"},
      {"llama3.1-70b", "together", "meta-llama/Meta-Llama-3.1-70B-Instruct-Turbo"},
      {"mistral-7b", "together", "mistralai/Mistral-7B-Instruct-v0.3"},
      {"mixtral-8x7b", "together", "mistralai/Mixtral-8x7B-Instruct-v0.1"},
      {"gemma2-9b", "together", "google/gemma-2-9b-it"},
  };
  return presets;
}

std::optional<ModelPreset> find_model_preset(std::string_view name) {
  for (const auto& p : model_presets())
    if (p.name == name) return p;
  return std::nullopt;
}

void to_json(json& j, const GenerationLogEntry& e) {
  j = json{{"record_id", e.record_id},   {"sample_id", e.sample_id},
           {"task", to_string(e.task)},  {"model_id", e.model_id},
           {"backend_id", e.backend_id}, {"params", e.params},
           {"prompt_sha256", e.prompt_sha256}, {"latency_ms", e.latency_ms}};
}

void to_json(json& j, const BenchManifest& m) {
  j = json{{"dataset_checksums", m.dataset_checksums},
           {"seeds", m.seeds},
           {"params", m.params},
           {"backends", m.backends},
           {"generations", m.generations},
           {"failures", m.failures},
           {"started_at", m.started_at},
           {"finished_at", m.finished_at}};
}

BenchResult run_generation(std::span<const BenchTask> tasks, std::span<const BenchModel> models,
                           std::size_t concurrency, const std::optional<std::string>& fixed_timestamp) {
  BenchResult result;
  auto& manifest = result.manifest;
  manifest.started_at = timestamp_now(fixed_timestamp);

  struct Item {
    const BenchTask* task;
    const SampleRecord* sample;
    const BenchModel* model;
  };
  std::vector<Item> items;
  for (const auto& t : tasks) {
    t.spec.validate();
    const std::string task_name(to_string(t.spec.task));
    manifest.dataset_checksums[task_name] = t.dataset_sha256;
    manifest.seeds[task_name] = t.spec.seed;
    manifest.params[task_name] = t.spec.params.decode().canonical();
    for (const auto& s : t.samples)
      for (const auto& m : models) items.push_back({&t, &s, &m});
  }
  for (const auto& m : models) manifest.backends[m.model_id] = m.backend.backend_id() + ":" + m.backend.model_id();

  std::vector<std::optional<GenerationRecord>> out(items.size());
  std::vector<std::optional<GenerationLogEntry>> logs(items.size());
  std::vector<std::optional<std::string>> failures(items.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < items.size(); i = next++) {
      const auto& [task, sample, model] = items[i];
      const auto kind = task->spec.task;
      GenerationLogEntry log;
      try {
        auto prompt = render_prompt(kind, *sample);
        auto text = generate(model->backend, prompt, task->spec.params, &log);
        GenerationRecord r;
        r.task = kind;
        r.model_id = model->model_id;
        r.sample_id = sample->sample_id;
        if (task_has_grounding(kind)) r.source_document = grounding_text(kind, *sample);
        if (task_has_question(kind)) r.question = sample->question;
        r.output_text = text;
        r = validate_record(std::move(r));
        log.record_id = r.id;
        log.sample_id = sample->sample_id;
        log.task = kind;
        log.model_id = model->model_id;
        out[i] = std::move(r);
        logs[i] = std::move(log);
      } catch (const Error& e) {
        failures[i] = std::string(to_string(kind)) + "/" + model->model_id + "/" + sample->sample_id + ": " +
                      std::string(to_string(e.code())) + ": " + e.what();
        spdlog::warn("generation failed: {}", *failures[i]);
      }
    }
  };
  {
    const auto n_workers = std::max<std::size_t>(1, std::min(concurrency, items.size()));
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }

  for (std::size_t i = 0; i < items.size(); ++i) {
    if (out[i]) result.records.push_back(std::move(*out[i]));
    if (logs[i]) manifest.generations.push_back(std::move(*logs[i]));
    if (failures[i]) manifest.failures.push_back(std::move(*failures[i]));
  }
  auto key = [](const GenerationRecord& r) {
    return std::make_tuple(static_cast<int>(r.task), r.model_id, r.sample_id);
  };
  std::sort(result.records.begin(), result.records.end(),
            [&](const auto& a, const auto& b) { return key(a) < key(b); });
  std::sort(manifest.generations.begin(), manifest.generations.end(), [](const auto& a, const auto& b) {
    return std::tie(a.task, a.model_id, a.sample_id) < std::tie(b.task, b.model_id, b.sample_id);
  });
  manifest.finished_at = timestamp_now(fixed_timestamp);
  return result;
}

std::map<TaskKind, TaskStats> corpus_stats(std::span<const GenerationRecord> records) {
  std::map<TaskKind, std::vector<const GenerationRecord*>> by_task;
  for (const auto& r : records) by_task[r.task].push_back(&r);
  std::map<TaskKind, TaskStats> stats;
  for (auto& [task, members] : by_task) {
    std::sort(members.begin(), members.end(), [](auto* a, auto* b) { return a->id < b->id; });
    TaskStats s;
    s.n = members.size();
    double src = 0, gen = 0;
    for (const auto* r : members) {
      src += static_cast<double>(split_words(r->source_document.value_or("")).size());
      gen += static_cast<double>(split_words(r->output_text).size());
    }
    s.source_words = src / static_cast<double>(s.n);
    s.generated_words = gen / static_cast<double>(s.n);
    stats[task] = s;
  }
  return stats;
}

TaskStats source_stats(TaskKind task, std::span<const SampleRecord> samples) {
  TaskStats s;
  s.n = samples.size();
  if (s.n == 0) return s;
  double src = 0;
  for (const auto& sample : samples)
    src += static_cast<double>(split_words(grounding_text(task, sample)).size());
  s.source_words = src / static_cast<double>(s.n);
  return s;
}

}  // namespace medfact
