#include "medfact/core.hpp"

#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "medfact/error.hpp"
#include "medfact/hashing.hpp"
#include "medfact/text.hpp"

namespace medfact {

using json = nlohmann::json;

std::string_view to_string(TaskKind task) {
  switch (task) {
    case TaskKind::Summ: return "Summ";
    case TaskKind::LaySumm: return "LaySumm";
    case TaskKind::Rag: return "RAG";
    case TaskKind::OpenGen: return "OpenGen";
  }
  return "?";
}

TaskKind parse_task(std::string_view name) {
  auto lower = to_lower_ascii(name);
  if (lower == "summ" || lower == "summarization") return TaskKind::Summ;
  if (lower == "laysumm" || lower == "lay_summ" || lower == "lay-summ") return TaskKind::LaySumm;
  if (lower == "rag") return TaskKind::Rag;
  if (lower == "opengen" || lower == "open_gen" || lower == "gen" || lower == "puregen")
    return TaskKind::OpenGen;
  throw Error(ErrorCode::InvalidArgument, "unknown task kind: " + std::string(name));
}

bool task_has_grounding(TaskKind task) { return task != TaskKind::OpenGen; }

bool task_has_question(TaskKind task) {
  return task == TaskKind::Rag || task == TaskKind::OpenGen;
}

std::string_view to_string(VerdictLabel label) {
  switch (label) {
    case VerdictLabel::Supported: return "supported";
    case VerdictLabel::Contradicted: return "contradicted";
    case VerdictLabel::Neutral: return "neutral";
  }
  return "?";
}

VerdictLabel parse_label(std::string_view name) {
  if (name == "supported") return VerdictLabel::Supported;
  if (name == "contradicted") return VerdictLabel::Contradicted;
  if (name == "neutral") return VerdictLabel::Neutral;
  throw Error(ErrorCode::InvalidArgument, "unknown verdict label: " + std::string(name));
}

std::string_view to_string(Technique technique) {
  return technique == Technique::Nli ? "NLI" : "CoT";
}

std::string_view to_string(Stage stage) {
  return stage == Stage::Intrinsic ? "intrinsic" : "extrinsic";
}

VerdictLabel final_label(std::span<const TechniqueVerdict> verdicts, Technique technique) {
  const TechniqueVerdict* intrinsic = nullptr;
  const TechniqueVerdict* extrinsic = nullptr;
  for (const auto& v : verdicts) {
    if (v.technique != technique) continue;
    if (v.label == VerdictLabel::Supported) return VerdictLabel::Supported;
    (v.stage == Stage::Intrinsic ? intrinsic : extrinsic) = &v;
  }
  if (extrinsic) return extrinsic->label;
  if (intrinsic) return intrinsic->label;
  return VerdictLabel::Neutral;
}

VerdictLabel unanimous(VerdictLabel final_cot, VerdictLabel final_nli) {
  if (final_cot == VerdictLabel::Supported && final_nli == VerdictLabel::Supported)
    return VerdictLabel::Supported;
  if (final_cot == VerdictLabel::Contradicted || final_nli == VerdictLabel::Contradicted)
    return VerdictLabel::Contradicted;
  return VerdictLabel::Neutral;
}

FactAssessment make_assessment(AtomicFact fact, std::vector<TechniqueVerdict> verdicts) {
  FactAssessment a;
  a.fact = std::move(fact);
  a.verdicts = std::move(verdicts);
  a.final_nli = final_label(a.verdicts, Technique::Nli);
  a.final_cot = final_label(a.verdicts, Technique::Cot);
  a.final_unvot = unanimous(a.final_cot, a.final_nli);
  return a;
}

std::string canonical_id(std::string_view task, std::string_view model_id,
                         std::string_view sample_id) {
  if (task.empty() || model_id.empty() || sample_id.empty())
    throw Error(ErrorCode::EmptyField, "canonical_id requires non-empty task, model_id and sample_id");
  std::string joined;
  joined.reserve(task.size() + model_id.size() + sample_id.size() + 2);
  joined.append(task).push_back('\x1f');
  joined.append(model_id).push_back('\x1f');
  joined.append(sample_id);
  return sha256_hex(joined).substr(0, 32);
}

std::string canonical_id(TaskKind task, std::string_view model_id, std::string_view sample_id) {
  return canonical_id(to_string(task), model_id, sample_id);
}

GenerationRecord validate_record(GenerationRecord record) {
  if (record.model_id.empty() || record.sample_id.empty())
    throw Error(ErrorCode::EmptyField, "record requires model_id and sample_id");

  auto present = [](const std::optional<std::string>& s) {
    return s.has_value() && !trim(*s).empty();
  };
  const std::string where = record.id.empty() ? record.sample_id : record.id;

  if (task_has_grounding(record.task) && !present(record.source_document))
    throw Error(ErrorCode::MissingGrounding,
                "record " + where + ": task " + std::string(to_string(record.task)) +
                    " requires source_document");
  if (!task_has_grounding(record.task) && record.source_document.has_value())
    throw Error(ErrorCode::InvalidArgument,
                "record " + where + ": OpenGen records carry no source_document");
  if (task_has_question(record.task) && !present(record.question))
    throw Error(ErrorCode::MissingQuestion,
                "record " + where + ": task " + std::string(to_string(record.task)) +
                    " requires question");
  if (!task_has_question(record.task) && record.question.has_value())
    throw Error(ErrorCode::InvalidArgument,
                "record " + where + ": summarization records carry no question");

  record.output_text = normalize_whitespace(record.output_text);
  if (record.output_text.empty())
    throw Error(ErrorCode::EmptyOutput, "record " + where + ": output_text is empty");
  if (record.id.empty()) record.id = canonical_id(record.task, record.model_id, record.sample_id);
  return record;
}

std::vector<GenerationRecord> validate_records(std::vector<GenerationRecord> records) {
  std::unordered_set<std::string> seen;
  for (auto& r : records) {
    r = validate_record(std::move(r));
    if (!seen.insert(r.id).second)
      throw Error(ErrorCode::DuplicateId, "duplicate record id " + r.id);
  }
  return records;
}

void to_json(json& j, const GenerationRecord& r) {
  j = json{{"id", r.id},
           {"task", to_string(r.task)},
           {"model_id", r.model_id},
           {"sample_id", r.sample_id}};
  if (r.source_document) j["source_document"] = *r.source_document;
  if (r.question) j["question"] = *r.question;
  j["output_text"] = r.output_text;
}

namespace {

std::optional<std::string> optional_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<std::string>();
}

}  // namespace

void from_json(const json& j, GenerationRecord& r) {
  r.id = j.value("id", std::string{});
  r.task = parse_task(j.at("task").get<std::string>());
  r.model_id = j.at("model_id").get<std::string>();
  r.sample_id = j.at("sample_id").get<std::string>();
  r.source_document = optional_string(j, "source_document");
  r.question = optional_string(j, "question");
  r.output_text = j.at("output_text").get<std::string>();
}

void to_json(json& j, const AtomicFact& f) {
  j = json{{"fact_id", f.fact_id}, {"parent_id", f.parent_id}, {"index", f.index}, {"text", f.text}};
}

void from_json(const json& j, AtomicFact& f) {
  f.fact_id = j.at("fact_id").get<std::string>();
  f.parent_id = j.at("parent_id").get<std::string>();
  f.index = j.at("index").get<std::size_t>();
  f.text = j.at("text").get<std::string>();
}

void to_json(json& j, const TechniqueVerdict& v) {
  j = json{{"technique", to_string(v.technique)},
           {"stage", to_string(v.stage)},
           {"label", to_string(v.label)}};
  if (v.confidence) j["confidence"] = *v.confidence;
  if (v.raw) j["raw"] = *v.raw;
  if (v.diagnostic) j["diagnostic"] = *v.diagnostic;
}

void from_json(const json& j, TechniqueVerdict& v) {
  auto technique = j.at("technique").get<std::string>();
  if (technique == "NLI") v.technique = Technique::Nli;
  else if (technique == "CoT") v.technique = Technique::Cot;
  else throw Error(ErrorCode::InvalidArgument, "unknown technique " + technique);
  auto stage = j.at("stage").get<std::string>();
  if (stage == "intrinsic") v.stage = Stage::Intrinsic;
  else if (stage == "extrinsic") v.stage = Stage::Extrinsic;
  else throw Error(ErrorCode::InvalidArgument, "unknown stage " + stage);
  v.label = parse_label(j.at("label").get<std::string>());
  v.confidence = j.contains("confidence") ? std::optional<double>(j["confidence"].get<double>())
                                          : std::nullopt;
  v.raw = optional_string(j, "raw");
  v.diagnostic = optional_string(j, "diagnostic");
}

void to_json(json& j, const FactAssessment& a) {
  j = json{{"fact", a.fact},
           {"verdicts", a.verdicts},
           {"final_nli", to_string(a.final_nli)},
           {"final_cot", to_string(a.final_cot)},
           {"final_unvot", to_string(a.final_unvot)}};
}

void from_json(const json& j, FactAssessment& a) {
  a.fact = j.at("fact").get<AtomicFact>();
  a.verdicts = j.at("verdicts").get<std::vector<TechniqueVerdict>>();
  a.final_nli = parse_label(j.at("final_nli").get<std::string>());
  a.final_cot = parse_label(j.at("final_cot").get<std::string>());
  a.final_unvot = parse_label(j.at("final_unvot").get<std::string>());
}

std::vector<GenerationRecord> read_records_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::vector<GenerationRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      records.push_back(json::parse(line).get<GenerationRecord>());
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedRecord,
                  path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

void write_records_jsonl(const std::string& path, std::span<const GenerationRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  for (const auto& r : records) out << json(r).dump() << '\n';
}

}  // namespace medfact
