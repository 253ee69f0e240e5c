#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "medfact/backend.hpp"
#include "medfact/core.hpp"

namespace medfact {

enum class DatasetName { PubMed, Plos, BioAsq };

std::string_view to_string(DatasetName name);  // "PubMed", "PLOS", "BioASQ-summary"
DatasetName parse_dataset_name(std::string_view name);
DatasetName dataset_for(TaskKind task);

struct GenerationParams {
  std::optional<int> max_new_tokens;  // nullopt: backend default
  double temperature = 0.0;

  DecodeParams decode() const { return DecodeParams{temperature, max_new_tokens}; }
};

struct TaskSpec {
  TaskKind task = TaskKind::Summ;
  DatasetName dataset = DatasetName::PubMed;
  std::string template_id;  // resource name, e.g. "summ.txt"
  GenerationParams params;
  std::size_t sample_count = 1000;
  std::uint64_t seed = 42;

  // Throws ConfigError for an unregistered template or sample_count == 0.
  void validate() const;
};

TaskSpec default_task_spec(TaskKind task);

struct SampleRecord {
  std::string sample_id;
  std::string article;                // Summ / LaySumm
  std::vector<std::string> snippets;  // RAG evidence
  std::string question;               // RAG / OpenGen
  std::string reference;              // abstract, lay summary or ideal answer

  bool operator==(const SampleRecord&) const = default;
};

// Dataset JSONL, one object per line:
//   PubMed:  {"id", "article", "abstract"}
//   PLOS:    {"id", "article", "lay_summary"}
//   BioASQ:  {"id", "question", "snippets": [..], "ideal_answer"}
// Both QA tasks read the BioASQ file; OpenGen ignores the snippets.
// Errors: DatasetNotFound; MalformedRecord (with line number).
std::vector<SampleRecord> read_samples_jsonl(TaskKind task, const std::string& path);
void write_samples_jsonl(const std::string& path, DatasetName dataset,
                         std::span<const SampleRecord> samples);

// Indices of a uniform n-subset of [0, size), ascending. Deterministic in
// (size, n, seed); returns every index when n >= size.
std::vector<std::size_t> sample_indices(std::size_t size, std::size_t n, std::uint64_t seed);

std::vector<SampleRecord> load_dataset(TaskKind task, const std::string& path, std::size_t n,
                                       std::uint64_t seed);

// Converts a public distribution file to the JSONL above:
//   PubMed: HF-style JSONL {"article", "abstract"}; ids default to "pubmed-<line>"
//   PLOS:   JSON array or JSONL {"id", "article", "lay_summary"|"summary"}
//   BioASQ: training JSON {"questions": [...]}, keeping type == "summary"
std::vector<SampleRecord> convert_dataset(DatasetName dataset, const std::string& path);

// Fills the task's frozen template. Placeholders are substituted in a single
// pass, so sample text containing "{...}" is never re-expanded.
// Throws MissingField when the sample lacks what the task needs.
std::string render_prompt(TaskKind task, const SampleRecord& sample);
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

// Grounding text given to the model: the article, or the snippets joined by
// newlines for RAG. Empty for OpenGen.
std::string grounding_text(TaskKind task, const SampleRecord& sample);

struct GenerationLogEntry {
  std::string record_id;
  std::string sample_id;
  TaskKind task = TaskKind::Summ;
  std::string model_id;
  std::string backend_id;
  std::string params;
  std::string prompt_sha256;
  double latency_ms = 0.0;
};

// One completion. The latency and parameters land in `log` when given.
// Errors: BackendFailure (after the wrapped backend's retries).
std::string generate(ChatBackend& backend, std::string_view prompt, const GenerationParams& params,
                     GenerationLogEntry* log = nullptr);

struct ModelPreset {
  std::string name;
  std::string provider;  // "openai" or "together"
  std::string checkpoint;
};

const std::vector<ModelPreset>& model_presets();
std::optional<ModelPreset> find_model_preset(std::string_view name);

struct BenchModel {
  std::string model_id;  // name used in records and reports
  ChatBackend& backend;
};

struct BenchTask {
  TaskSpec spec;
  std::vector<SampleRecord> samples;
  std::string dataset_sha256;
};

struct BenchManifest {
  std::map<std::string, std::string> dataset_checksums;  // task -> sha256
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::string> params;
  std::map<std::string, std::string> backends;  // model id -> backend/checkpoint
  std::vector<GenerationLogEntry> generations;
  std::vector<std::string> failures;
  std::string started_at;
  std::string finished_at;
};

void to_json(nlohmann::json& j, const GenerationLogEntry& e);
void to_json(nlohmann::json& j, const BenchManifest& m);

struct BenchResult {
  std::vector<GenerationRecord> records;  // sorted by (task, model, sample)
  BenchManifest manifest;
};

// Every (task sample, model) pair, concurrently up to `concurrency`. A failed
// generation is logged in the manifest and skipped.
BenchResult run_generation(std::span<const BenchTask> tasks, std::span<const BenchModel> models,
                           std::size_t concurrency = 8,
                           const std::optional<std::string>& fixed_timestamp = std::nullopt);

struct TaskStats {
  std::size_t n = 0;
  double source_words = 0.0;
  double generated_words = 0.0;
};

// Whitespace-word averages per task; unrounded (display to one decimal).
std::map<TaskKind, TaskStats> corpus_stats(std::span<const GenerationRecord> records);
TaskStats source_stats(TaskKind task, std::span<const SampleRecord> samples);

}  // namespace medfact
