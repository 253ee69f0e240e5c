#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace medfact {

enum class TaskKind { Summ, LaySumm, Rag, OpenGen };

// "Summ", "LaySumm", "RAG", "OpenGen"
std::string_view to_string(TaskKind task);
TaskKind parse_task(std::string_view name);

// Summ, LaySumm and RAG carry a grounding document.
bool task_has_grounding(TaskKind task);
// RAG and OpenGen are question-driven.
bool task_has_question(TaskKind task);

inline constexpr TaskKind kAllTasks[] = {TaskKind::Summ, TaskKind::LaySumm,
                                         TaskKind::Rag, TaskKind::OpenGen};

struct GenerationRecord {
  std::string id;
  TaskKind task = TaskKind::Summ;
  std::string model_id;
  std::string sample_id;
  std::optional<std::string> source_document;
  std::optional<std::string> question;
  std::string output_text;

  bool operator==(const GenerationRecord&) const = default;
};

struct AtomicFact {
  std::string fact_id;
  std::string parent_id;
  std::size_t index = 0;
  std::string text;

  bool operator==(const AtomicFact&) const = default;
};

enum class VerdictLabel { Supported, Contradicted, Neutral };

// Lowercase wire names: "supported", "contradicted", "neutral".
std::string_view to_string(VerdictLabel label);
VerdictLabel parse_label(std::string_view name);

enum class Technique { Nli, Cot };
enum class Stage { Intrinsic, Extrinsic };

std::string_view to_string(Technique technique);  // "NLI" / "CoT"
std::string_view to_string(Stage stage);          // "intrinsic" / "extrinsic"

struct TechniqueVerdict {
  Technique technique = Technique::Nli;
  Stage stage = Stage::Intrinsic;
  VerdictLabel label = VerdictLabel::Neutral;
  std::optional<double> confidence;
  std::optional<std::string> raw;
  // Set when the label came from a fallback (unparseable judge output,
  // backend failure) rather than a clean verifier answer.
  std::optional<std::string> diagnostic;

  bool operator==(const TechniqueVerdict&) const = default;
};

struct FactAssessment {
  AtomicFact fact;
  std::vector<TechniqueVerdict> verdicts;
  VerdictLabel final_nli = VerdictLabel::Neutral;
  VerdictLabel final_cot = VerdictLabel::Neutral;
  VerdictLabel final_unvot = VerdictLabel::Neutral;

  bool operator==(const FactAssessment&) const = default;
};

// Supported if any stage of the technique said Supported; otherwise the
// extrinsic label when that stage ran, else the intrinsic label. A technique
// with no verdicts at all resolves to Neutral.
VerdictLabel final_label(std::span<const TechniqueVerdict> verdicts, Technique technique);

// Supported iff both are Supported; else Contradicted if either is; else Neutral.
VerdictLabel unanimous(VerdictLabel final_cot, VerdictLabel final_nli);

// Fills final_nli / final_cot / final_unvot from the verdict trail.
FactAssessment make_assessment(AtomicFact fact, std::vector<TechniqueVerdict> verdicts);

// Hex content hash of (task, model_id, sample_id). Throws EmptyField.
std::string canonical_id(std::string_view task, std::string_view model_id,
                         std::string_view sample_id);
std::string canonical_id(TaskKind task, std::string_view model_id, std::string_view sample_id);

// Returns a copy with normalized output_text when every record invariant
// holds; throws MissingGrounding / MissingQuestion / EmptyOutput otherwise.
GenerationRecord validate_record(GenerationRecord record);

// Validates each record and rejects duplicate ids (DuplicateId).
std::vector<GenerationRecord> validate_records(std::vector<GenerationRecord> records);

void to_json(nlohmann::json& j, const GenerationRecord& r);
void from_json(const nlohmann::json& j, GenerationRecord& r);
void to_json(nlohmann::json& j, const AtomicFact& f);
void from_json(const nlohmann::json& j, AtomicFact& f);
void to_json(nlohmann::json& j, const TechniqueVerdict& v);
void from_json(const nlohmann::json& j, TechniqueVerdict& v);
void to_json(nlohmann::json& j, const FactAssessment& a);
void from_json(const nlohmann::json& j, FactAssessment& a);

// JSONL helpers. Blank lines are skipped; parse errors carry the line number.
std::vector<GenerationRecord> read_records_jsonl(const std::string& path);
void write_records_jsonl(const std::string& path, std::span<const GenerationRecord> records);

}  // namespace medfact
