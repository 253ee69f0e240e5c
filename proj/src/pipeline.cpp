#include "medfact/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <thread>
#include <tuple>
#include <unordered_map>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "medfact/error.hpp"
#include "medfact/hashing.hpp"
#include "medfact/text.hpp"

namespace medfact {

using json = nlohmann::json;

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::Hybrid: return "hybrid";
    case Mode::GroundingOnly: return "grounding-only";
    case Mode::WikipediaOnly: return "wikipedia-only";
  }
  return "?";
}

Mode parse_mode(std::string_view name) {
  auto lower = to_lower_ascii(name);
  if (lower == "hybrid") return Mode::Hybrid;
  if (lower == "grounding-only" || lower == "grounding_only" || lower == "grounding") return Mode::GroundingOnly;
  if (lower == "wikipedia-only" || lower == "wikipedia_only" || lower == "wikipedia" || lower == "baseline")
    return Mode::WikipediaOnly;
  throw Error(ErrorCode::ConfigError, "unknown mode " + std::string(name));
}

std::string_view to_string(ScoreTechnique technique) {
  switch (technique) {
    case ScoreTechnique::Cot: return "CoT";
    case ScoreTechnique::Nli: return "NLI";
    case ScoreTechnique::UnVot: return "UnVot";
  }
  return "?";
}

ScoreTechnique parse_score_technique(std::string_view name) {
  if (name == "CoT") return ScoreTechnique::Cot;
  if (name == "NLI") return ScoreTechnique::Nli;
  if (name == "UnVot") return ScoreTechnique::UnVot;
  throw Error(ErrorCode::InvalidArgument, "unknown technique " + std::string(name));
}

void PipelineConfig::validate() const {
  if (k < 1) throw Error(ErrorCode::ConfigError, "k must be >= 1");
  if (concurrency < 1) throw Error(ErrorCode::ConfigError, "concurrency must be >= 1");
  try {
    chunk.validate();
    decompose.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
}

std::string PipelineConfig::hash(std::string_view backend_fingerprint) const {
  json j{{"mode", to_string(mode)},
         {"k", k},
         {"chunk_size", chunk.chunk_size},
         {"overlap", chunk.overlap},
         {"max_facts", decompose.max_facts},
         {"decompose_template", sha256_hex(decompose.prompt_template)},
         {"decompose_params", decompose.params.canonical()},
         {"nli_direction", to_string(nli_direction)},
         {"judge_params", judge_params.canonical()},
         {"backends", backend_fingerprint}};
  return sha256_hex(j.dump());
}

TopicSource::TopicSource(const GenerationRecord& record, ChatBackend* judge)
    : record_(&record), judge_(judge) {}

TopicSource::TopicSource(std::optional<std::string> fixed) : done_(true), topic_(std::move(fixed)) {}

std::optional<std::string> TopicSource::get() {
  std::lock_guard lock(mu_);
  if (!done_) {
    done_ = true;
    if (judge_ && record_) {
      try {
        topic_ = generate_topic(*record_, *judge_);
      } catch (const Error& e) {
        error_ = std::string(to_string(e.code())) + ": " + e.what();
      }
    }
  }
  return topic_;
}

bool TopicSource::requested() const {
  std::lock_guard lock(mu_);
  return done_ && judge_ != nullptr;
}

std::optional<std::string> TopicSource::error() const {
  std::lock_guard lock(mu_);
  return error_;
}

namespace {

FailureRecord failure_from(const std::string& record_id, const std::string& fact_id,
                           std::string component, Stage stage, const Error& e) {
  return FailureRecord{record_id, fact_id, std::move(component), std::string(to_string(stage)),
                       std::string(to_string(e.code())), e.what()};
}

TechniqueVerdict run_nli(const AtomicFact& fact, std::span<const EvidencePassage> passages, Stage stage,
                         NliBackend& nli, NliDirection direction) {
  TechniqueVerdict v{Technique::Nli, stage, VerdictLabel::Neutral, std::nullopt, std::nullopt, std::nullopt};
  if (passages.empty()) {
    v.diagnostic = "no_evidence";
    return v;
  }
  auto result = nli_check(passages, fact, nli, direction);
  v.label = map_nli(result);
  v.confidence = result.probs[static_cast<std::size_t>(result.label)];
  v.raw = json::array({result.probs[0], result.probs[1], result.probs[2]}).dump();
  return v;
}

TechniqueVerdict run_cot(const AtomicFact& fact, std::span<const EvidencePassage> passages, Stage stage,
                         const std::optional<std::string>& topic, ChatBackend& judge,
                         const DecodeParams& params) {
  TechniqueVerdict v{Technique::Cot, stage, VerdictLabel::Contradicted, std::nullopt, std::nullopt,
                     std::nullopt};
  if (passages.empty()) {
    v.diagnostic = "no_evidence";
    return v;
  }
  auto result = cot_check(fact, passages, topic, judge, params);
  auto mapped = map_cot(result);
  v.label = mapped.label;
  v.diagnostic = mapped.diagnostic;
  v.raw = result.raw;
  return v;
}

}  // namespace

FactOutcome assess_fact(const AtomicFact& fact, AssessContext& ctx, Verifiers& verifiers,
                        const PipelineConfig& config) {
  const auto& record = ctx.record;
  const bool grounded = task_has_grounding(record.task);
  if (config.mode == Mode::GroundingOnly && !grounded)
    throw Error(ErrorCode::ConfigError, "grounding-only mode cannot assess " +
                                            std::string(to_string(record.task)) + " record " + record.id);
  const bool intrinsic = config.mode != Mode::WikipediaOnly && grounded;
  const bool extrinsic = config.mode != Mode::GroundingOnly;
  if (intrinsic && ctx.grounding.empty())
    throw Error(ErrorCode::MissingGrounding, "record " + record.id + " has no grounding passages");
  if (extrinsic && !ctx.index)
    throw Error(ErrorCode::ConfigError, std::string(to_string(config.mode)) + " mode needs a passage index");

  std::vector<TechniqueVerdict> verdicts;
  std::vector<FailureRecord> failures;

  // Each verifier call is isolated: a failure yields Contradicted and a log entry.
  auto guarded = [&](Technique technique, Stage stage, auto&& call) {
    try {
      verdicts.push_back(call());
    } catch (const Error& e) {
      failures.push_back(failure_from(record.id, fact.fact_id, std::string(to_string(technique)), stage, e));
      verdicts.push_back(TechniqueVerdict{technique, stage, VerdictLabel::Contradicted, std::nullopt,
                                          std::nullopt, "backend_failure"});
    }
    return verdicts.back().label;
  };

  std::optional<VerdictLabel> stage1_nli, stage1_cot;
  if (intrinsic) {
    stage1_nli = guarded(Technique::Nli, Stage::Intrinsic, [&] {
      return run_nli(fact, ctx.grounding, Stage::Intrinsic, verifiers.nli, config.nli_direction);
    });
    stage1_cot = guarded(Technique::Cot, Stage::Intrinsic, [&] {
      return run_cot(fact, ctx.grounding, Stage::Intrinsic, std::nullopt, verifiers.judge,
                     config.judge_params);
    });
  }

  const bool need_nli = extrinsic && stage1_nli.value_or(VerdictLabel::Neutral) != VerdictLabel::Supported;
  const bool need_cot = extrinsic && stage1_cot.value_or(VerdictLabel::Neutral) != VerdictLabel::Supported;
  if (need_nli || need_cot) {
    auto topic = ctx.topic.get();
    std::vector<EvidencePassage> passages;
    try {
      passages = ctx.index->retrieve(topic, fact.text, config.k);
    } catch (const Error& e) {
      // An unqueryable fact (no terms) simply has no extrinsic evidence.
      if (e.code() != ErrorCode::EmptyQuery) throw;
    }
    if (need_nli)
      guarded(Technique::Nli, Stage::Extrinsic, [&] {
        return run_nli(fact, passages, Stage::Extrinsic, verifiers.nli, config.nli_direction);
      });
    if (need_cot) {
      // The judge sees the article title the topic resolved to, when there is one.
      std::optional<std::string> title = topic;
      if (topic)
        if (auto resolved = ctx.index->resolve_topic(*topic)) title = resolved;
      guarded(Technique::Cot, Stage::Extrinsic, [&] {
        return run_cot(fact, passages, Stage::Extrinsic, title, verifiers.judge, config.judge_params);
      });
    }
  }

  return FactOutcome{make_assessment(fact, std::move(verdicts)), std::move(failures)};
}

GenerationScore score_generation(std::string_view record_id, std::span<const FactAssessment> assessments,
                                 ScoreTechnique technique) {
  GenerationScore s;
  s.record_id = std::string(record_id);
  s.technique = technique;
  s.n_facts = assessments.size();
  for (const auto& a : assessments) {
    VerdictLabel label = technique == ScoreTechnique::Cot   ? a.final_cot
                         : technique == ScoreTechnique::Nli ? a.final_nli
                                                            : a.final_unvot;
    if (label == VerdictLabel::Supported) ++s.n_supported;
  }
  if (s.n_facts > 0)
    s.score = 100.0 * static_cast<double>(s.n_supported) / static_cast<double>(s.n_facts);
  return s;
}

FactualityReport aggregate(std::span<const GenerationScore> scores, RunManifest manifest) {
  using Key = std::tuple<std::string, std::string, std::string, std::string>;
  std::map<Key, std::vector<const GenerationScore*>> cells;
  for (const auto& s : scores)
    cells[Key{s.model_id, std::string(to_string(s.task)), std::string(to_string(s.mode)),
              std::string(to_string(s.technique))}]
        .push_back(&s);

  FactualityReport report;
  for (auto& [key, members] : cells) {
    // Summation order is fixed so that the mean does not depend on input order.
    std::sort(members.begin(), members.end(), [](const auto* a, const auto* b) {
      return std::tie(a->record_id, a->n_facts, a->n_supported) <
             std::tie(b->record_id, b->n_facts, b->n_supported);
    });
    ReportRow row;
    row.model_id = members.front()->model_id;
    row.task = members.front()->task;
    row.mode = members.front()->mode;
    row.technique = members.front()->technique;
    double sum = 0;
    for (const auto* s : members) {
      ++row.n_generations;
      row.n_facts += s->n_facts;
      row.n_supported += s->n_supported;
      if (s->score) {
        ++row.n_scored;
        sum += *s->score;
      } else {
        ++row.n_excluded;
      }
    }
    if (row.n_scored > 0) row.mean = sum / static_cast<double>(row.n_scored);
    report.rows.push_back(std::move(row));
  }

  report.generations.assign(scores.begin(), scores.end());
  std::sort(report.generations.begin(), report.generations.end(), [](const auto& a, const auto& b) {
    return std::make_tuple(a.record_id, to_string(a.technique), to_string(a.mode)) <
           std::make_tuple(b.record_id, to_string(b.technique), to_string(b.mode));
  });
  std::sort(manifest.failures.begin(), manifest.failures.end());
  std::sort(manifest.failed_records.begin(), manifest.failed_records.end());
  report.manifest = std::move(manifest);
  return report;
}

void to_json(json& j, const FailureRecord& f) {
  j = json{{"record_id", f.record_id}, {"fact_id", f.fact_id}, {"component", f.component},
           {"stage", f.stage},         {"code", f.code},       {"message", f.message}};
}

void from_json(const json& j, FailureRecord& f) {
  f.record_id = j.at("record_id").get<std::string>();
  f.fact_id = j.at("fact_id").get<std::string>();
  f.component = j.at("component").get<std::string>();
  f.stage = j.at("stage").get<std::string>();
  f.code = j.at("code").get<std::string>();
  f.message = j.at("message").get<std::string>();
}

void to_json(json& j, const RecordResult& r) {
  j = json{{"record_id", r.record_id},
           {"config_hash", r.config_hash},
           {"topic", r.topic ? json(*r.topic) : json(nullptr)},
           {"assessments", r.assessments},
           {"failures", r.failures}};
}

void from_json(const json& j, RecordResult& r) {
  r.record_id = j.at("record_id").get<std::string>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.topic = j.at("topic").is_null() ? std::nullopt : std::optional<std::string>(j["topic"].get<std::string>());
  r.assessments = j.at("assessments").get<std::vector<FactAssessment>>();
  r.failures = j.at("failures").get<std::vector<FailureRecord>>();
}

std::vector<RecordResult> read_results_jsonl(const std::filesystem::path& path) {
  std::vector<RecordResult> results;
  std::ifstream in(path);
  if (!in) return results;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    try {
      results.push_back(json::parse(line).get<RecordResult>());
    } catch (const std::exception& e) {
      // A run killed mid-write leaves a truncated last line; skip it.
      spdlog::warn("skipping unreadable assessment line in {}: {}", path.string(), e.what());
    }
  }
  return results;
}

std::vector<GenerationScore> scores_from_results(std::span<const GenerationRecord> records,
                                                 std::span<const RecordResult> results, Mode mode) {
  std::unordered_map<std::string, const GenerationRecord*> by_id;
  for (const auto& r : records) by_id[r.id] = &r;
  std::vector<GenerationScore> scores;
  for (const auto& result : results) {
    auto it = by_id.find(result.record_id);
    if (it == by_id.end()) continue;
    for (auto technique : kScoreTechniques) {
      auto s = score_generation(result.record_id, result.assessments, technique);
      s.model_id = it->second->model_id;
      s.task = it->second->task;
      s.mode = mode;
      scores.push_back(std::move(s));
    }
  }
  return scores;
}

std::string timestamp_now(const std::optional<std::string>& fixed) {
  if (fixed) return *fixed;
  std::time_t t;
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) {
    t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

struct RecordOutcome {
  std::optional<RecordResult> result;
  std::optional<FailureRecord> record_failure;
};

RecordOutcome process_record(const GenerationRecord& record, const PipelineConfig& config,
                             Verifiers& verifiers, const PassageIndex* index, const std::string& config_hash) {
  RecordOutcome outcome;
  auto fail = [&](std::string component, const Error& e) {
    outcome.record_failure = FailureRecord{record.id, "", std::move(component), "",
                                           std::string(to_string(e.code())), e.what()};
    spdlog::warn("record {} excluded: {}", record.id, e.what());
    return outcome;
  };

  std::vector<AtomicFact> facts;
  try {
    facts = decompose(record.output_text, record.id, config.decompose, verifiers.judge);
  } catch (const Error& e) {
    return fail("decompose", e);
  }

  std::vector<EvidencePassage> grounding;
  if (config.mode != Mode::WikipediaOnly && task_has_grounding(record.task)) {
    try {
      grounding = grounding_passages(record, config.chunk);
    } catch (const Error& e) {
      return fail("grounding", e);
    }
  }

  TopicSource topic(record, &verifiers.judge);
  AssessContext ctx{record, grounding, topic, index};
  RecordResult result;
  result.record_id = record.id;
  result.config_hash = config_hash;
  for (const auto& fact : facts) {
    try {
      auto fo = assess_fact(fact, ctx, verifiers, config);
      result.assessments.push_back(std::move(fo.assessment));
      for (auto& f : fo.failures) result.failures.push_back(std::move(f));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ConfigError) throw;
      return fail("assess", e);
    }
  }
  if (topic.requested()) {
    result.topic = topic.get();
    if (auto err = topic.error())
      result.failures.push_back(FailureRecord{record.id, "", "topic", "extrinsic", "TopicFailure", *err});
  }
  outcome.result = std::move(result);
  return outcome;
}

}  // namespace

FactualityReport run(std::span<const GenerationRecord> records, const PipelineConfig& config,
                     Verifiers verifiers, const RunStores& stores) {
  config.validate();
  if (config.mode != Mode::GroundingOnly && !stores.index)
    throw Error(ErrorCode::ConfigError, std::string(to_string(config.mode)) + " mode needs a passage index");
  for (const auto& r : records) {
    if (config.mode == Mode::GroundingOnly && !task_has_grounding(r.task))
      throw Error(ErrorCode::ConfigError,
                  "grounding-only mode cannot assess OpenGen record " + r.id + " (no grounding document)");
  }
  if (stores.index && stores.index->chunk_params().chunk_size > config.chunk.chunk_size)
    check_chunk_budget(verifiers.nli, stores.index->chunk_params().chunk_size);
  check_chunk_budget(verifiers.nli, config.chunk.chunk_size);

  std::string fingerprint;
  for (const auto& [role, id] : stores.backend_ids) fingerprint += role + "=" + id + ";";
  const auto config_hash = config.hash(fingerprint);

  RunManifest manifest;
  manifest.config_hash = config_hash;
  manifest.started_at = timestamp_now(config.fixed_timestamp);
  manifest.backends = stores.backend_ids;
  manifest.parameters = {{"mode", std::string(to_string(config.mode))},
                         {"k", std::to_string(config.k)},
                         {"chunk_size", std::to_string(config.chunk.chunk_size)},
                         {"overlap", std::to_string(config.chunk.overlap)},
                         {"max_facts", std::to_string(config.decompose.max_facts)},
                         {"nli_direction", std::string(to_string(config.nli_direction))},
                         {"judge_params", config.judge_params.canonical()}};
  manifest.n_records = records.size();

  // Resume: reuse finished records computed under the same configuration.
  std::unordered_map<std::string, RecordResult> finished;
  std::optional<std::filesystem::path> trail;
  if (stores.output_dir) {
    std::filesystem::create_directories(*stores.output_dir);
    trail = *stores.output_dir / "assessments.jsonl";
    for (auto& r : read_results_jsonl(*trail))
      if (r.config_hash == config_hash) finished[r.record_id] = std::move(r);
  }

  std::vector<std::optional<RecordResult>> results(records.size());
  std::vector<std::optional<FailureRecord>> record_failures(records.size());
  std::mutex trail_mu;
  std::ofstream trail_out;
  if (trail) trail_out.open(*trail, std::ios::app | std::ios::binary);

  std::atomic<std::size_t> next{0};
  std::exception_ptr fatal;
  std::mutex fatal_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < records.size(); i = next++) {
      const auto& record = records[i];
      if (auto it = finished.find(record.id); it != finished.end()) {
        results[i] = it->second;
        continue;
      }
      try {
        auto outcome = process_record(record, config, verifiers, stores.index, config_hash);
        if (outcome.result && trail_out.is_open()) {
          std::lock_guard lock(trail_mu);
          trail_out << json(*outcome.result).dump() << '\n';
          trail_out.flush();
        }
        results[i] = std::move(outcome.result);
        record_failures[i] = std::move(outcome.record_failure);
      } catch (...) {
        std::lock_guard lock(fatal_mu);
        if (!fatal) fatal = std::current_exception();
        next = records.size();
      }
    }
  };
  {
    const std::size_t n_workers = std::max<std::size_t>(1, std::min(config.concurrency, records.size()));
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  if (fatal) std::rethrow_exception(fatal);

  std::vector<RecordResult> done;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (results[i]) {
      for (const auto& f : results[i]->failures) manifest.failures.push_back(f);
      done.push_back(std::move(*results[i]));
    }
    if (record_failures[i]) manifest.failed_records.push_back(*record_failures[i]);
  }
  auto scores = scores_from_results(records, done, config.mode);
  manifest.finished_at = timestamp_now(config.fixed_timestamp);
  return aggregate(scores, std::move(manifest));
}

}  // namespace medfact
