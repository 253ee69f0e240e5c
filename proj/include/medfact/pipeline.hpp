#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "medfact/backend.hpp"
#include "medfact/core.hpp"
#include "medfact/decompose.hpp"
#include "medfact/evidence.hpp"
#include "medfact/humaneval.hpp"
#include "medfact/verify.hpp"

namespace medfact {

enum class Mode { Hybrid, GroundingOnly, WikipediaOnly };

std::string_view to_string(Mode mode);  // "hybrid", "grounding-only", "wikipedia-only"
Mode parse_mode(std::string_view name);

struct PipelineConfig {
  Mode mode = Mode::Hybrid;
  std::size_t k = 5;
  ChunkParams chunk;
  DecomposeConfig decompose;
  NliDirection nli_direction = NliDirection::EvidencePremise;
  DecodeParams judge_params = kJudgeParams;
  std::size_t concurrency = 8;
  // ISO-8601 value stamped into the manifest instead of the wall clock.
  std::optional<std::string> fixed_timestamp;

  void validate() const;
  // Hash of every setting that can change results (concurrency excluded).
  std::string hash(std::string_view backend_fingerprint = {}) const;
};

struct Verifiers {
  ChatBackend& judge;
  NliBackend& nli;
};

// Lazily generates a record's Wikipedia topic at most once, from any thread.
// A failed generation is remembered and yields no topic.
class TopicSource {
 public:
  TopicSource(const GenerationRecord& record, ChatBackend* judge);
  explicit TopicSource(std::optional<std::string> fixed);

  std::optional<std::string> get();
  bool requested() const;
  std::optional<std::string> error() const;

 private:
  const GenerationRecord* record_ = nullptr;
  ChatBackend* judge_ = nullptr;
  mutable std::mutex mu_;
  bool done_ = false;
  std::optional<std::string> topic_;
  std::optional<std::string> error_;
};

struct FailureRecord {
  std::string record_id;
  std::string fact_id;    // empty for record-level failures
  std::string component;  // "NLI", "CoT", "topic", "decompose", ...
  std::string stage;      // "intrinsic", "extrinsic" or empty
  std::string code;
  std::string message;

  auto operator<=>(const FailureRecord&) const = default;
};

void to_json(nlohmann::json& j, const FailureRecord& f);
void from_json(const nlohmann::json& j, FailureRecord& f);

struct AssessContext {
  const GenerationRecord& record;
  std::span<const EvidencePassage> grounding;  // empty: no intrinsic stage
  TopicSource& topic;
  const PassageIndex* index = nullptr;
};

struct FactOutcome {
  FactAssessment assessment;
  std::vector<FailureRecord> failures;
};

// Intrinsic stage against the grounding passages (when present and the mode
// allows it), then an extrinsic stage per technique whose intrinsic label is
// not Supported (or that had no intrinsic stage). Verifier failures become
// Contradicted verdicts plus a FailureRecord. Throws ConfigError when the
// mode and record do not fit together.
FactOutcome assess_fact(const AtomicFact& fact, AssessContext& ctx, Verifiers& verifiers,
                        const PipelineConfig& config);

enum class ScoreTechnique { Cot, Nli, UnVot };

std::string_view to_string(ScoreTechnique technique);  // "CoT", "NLI", "UnVot"
ScoreTechnique parse_score_technique(std::string_view name);
inline constexpr ScoreTechnique kScoreTechniques[] = {ScoreTechnique::Cot, ScoreTechnique::Nli,
                                                      ScoreTechnique::UnVot};

struct GenerationScore {
  std::string record_id;
  std::string model_id;
  TaskKind task = TaskKind::Summ;
  Mode mode = Mode::Hybrid;
  ScoreTechnique technique = ScoreTechnique::UnVot;
  std::optional<double> score;  // null when n_facts == 0
  std::size_t n_facts = 0;
  std::size_t n_supported = 0;

  bool flagged() const { return n_facts == 0; }
  bool operator==(const GenerationScore&) const = default;
};

// Fraction of facts whose final label for the technique is Supported, times
// 100. Neutral and Contradicted both count against.
GenerationScore score_generation(std::string_view record_id,
                                 std::span<const FactAssessment> assessments,
                                 ScoreTechnique technique);

struct RunManifest {
  std::string config_hash;
  std::string started_at;
  std::string finished_at;
  std::map<std::string, std::string> backends;
  std::map<std::string, std::string> parameters;
  std::size_t n_records = 0;
  std::vector<FailureRecord> failed_records;
  std::vector<FailureRecord> failures;

  bool operator==(const RunManifest&) const = default;
};

struct ReportRow {
  std::string model_id;
  TaskKind task = TaskKind::Summ;
  Mode mode = Mode::Hybrid;
  ScoreTechnique technique = ScoreTechnique::UnVot;
  std::optional<double> mean;
  std::size_t n_generations = 0;
  std::size_t n_scored = 0;
  std::size_t n_excluded = 0;  // zero-fact generations
  std::size_t n_facts = 0;
  std::size_t n_supported = 0;

  bool operator==(const ReportRow&) const = default;
};

struct FactualityReport {
  static constexpr int kSchemaVersion = 1;

  int schema_version = kSchemaVersion;
  std::vector<ReportRow> rows;
  std::vector<GenerationScore> generations;
  RunManifest manifest;
  std::optional<HumanEvalSummary> human_eval;

  bool operator==(const FactualityReport&) const = default;
};

// Mean per (model, task, mode, technique) over defined scores. Rows sort by
// model, task name, mode name, technique name; the result does not depend on
// the order of the input.
FactualityReport aggregate(std::span<const GenerationScore> scores, RunManifest manifest);

struct RecordResult {
  std::string record_id;
  std::string config_hash;
  std::optional<std::string> topic;
  std::vector<FactAssessment> assessments;
  std::vector<FailureRecord> failures;
};

void to_json(nlohmann::json& j, const RecordResult& r);
void from_json(const nlohmann::json& j, RecordResult& r);

struct RunStores {
  const PassageIndex* index = nullptr;
  // When set, each finished record is appended to <output_dir>/assessments.jsonl
  // and records already present there (same config hash) are not recomputed.
  std::optional<std::filesystem::path> output_dir;
  // Extra manifest entries (backend identifiers and the like).
  std::map<std::string, std::string> backend_ids;
};

// decompose -> topic (once per record, only if needed) -> assess -> score ->
// aggregate. Throws ConfigError on mode/record mismatches; per-record failures
// are recorded in the manifest and excluded.
FactualityReport run(std::span<const GenerationRecord> records, const PipelineConfig& config,
                     Verifiers verifiers, const RunStores& stores);

// Rebuilds scores from an assessment trail without touching any backend.
std::vector<GenerationScore> scores_from_results(std::span<const GenerationRecord> records,
                                                 std::span<const RecordResult> results, Mode mode);

std::vector<RecordResult> read_results_jsonl(const std::filesystem::path& path);

// UTC ISO-8601 timestamp: the override when given, else SOURCE_DATE_EPOCH,
// else the wall clock.
std::string timestamp_now(const std::optional<std::string>& fixed);

}  // namespace medfact
