#include "medfact/report.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "medfact/error.hpp"
#include "medfact/text.hpp"

namespace medfact {

using json = nlohmann::json;

namespace {

json opt_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> read_opt_number(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string md_cell(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace

ReportFormat parse_report_format(std::string_view name) {
  auto lower = to_lower_ascii(name);
  if (lower == "json") return ReportFormat::Json;
  if (lower == "csv") return ReportFormat::Csv;
  if (lower == "markdown" || lower == "md") return ReportFormat::Markdown;
  throw Error(ErrorCode::UnknownFormat, "unknown report format " + std::string(name));
}

std::string format_score(double value) {
  double r = std::round(value * 10.0) / 10.0;
  if (r == 0.0) r = 0.0;  // no "-0.0"
  return fmt::format("{:.1f}", r);
}

void to_json(json& j, const GenerationScore& s) {
  j = json{{"record_id", s.record_id},
           {"model_id", s.model_id},
           {"task", to_string(s.task)},
           {"mode", to_string(s.mode)},
           {"technique", to_string(s.technique)},
           {"score", opt_number(s.score)},
           {"n_facts", s.n_facts},
           {"n_supported", s.n_supported},
           {"flagged", s.flagged()}};
}

void from_json(const json& j, GenerationScore& s) {
  s.record_id = j.at("record_id").get<std::string>();
  s.model_id = j.at("model_id").get<std::string>();
  s.task = parse_task(j.at("task").get<std::string>());
  s.mode = parse_mode(j.at("mode").get<std::string>());
  s.technique = parse_score_technique(j.at("technique").get<std::string>());
  s.score = read_opt_number(j, "score");
  s.n_facts = j.at("n_facts").get<std::size_t>();
  s.n_supported = j.at("n_supported").get<std::size_t>();
}

void to_json(json& j, const ReportRow& r) {
  j = json{{"model_id", r.model_id},
           {"task", to_string(r.task)},
           {"mode", to_string(r.mode)},
           {"technique", to_string(r.technique)},
           {"mean", opt_number(r.mean)},
           {"n_generations", r.n_generations},
           {"n_scored", r.n_scored},
           {"n_excluded", r.n_excluded},
           {"n_facts", r.n_facts},
           {"n_supported", r.n_supported}};
}

void from_json(const json& j, ReportRow& r) {
  r.model_id = j.at("model_id").get<std::string>();
  r.task = parse_task(j.at("task").get<std::string>());
  r.mode = parse_mode(j.at("mode").get<std::string>());
  r.technique = parse_score_technique(j.at("technique").get<std::string>());
  r.mean = read_opt_number(j, "mean");
  r.n_generations = j.at("n_generations").get<std::size_t>();
  r.n_scored = j.at("n_scored").get<std::size_t>();
  r.n_excluded = j.at("n_excluded").get<std::size_t>();
  r.n_facts = j.at("n_facts").get<std::size_t>();
  r.n_supported = j.at("n_supported").get<std::size_t>();
}

void to_json(json& j, const RunManifest& m) {
  j = json{{"config_hash", m.config_hash},         {"started_at", m.started_at},
           {"finished_at", m.finished_at},         {"backends", m.backends},
           {"parameters", m.parameters},           {"n_records", m.n_records},
           {"failed_records", m.failed_records},   {"n_failed_records", m.failed_records.size()},
           {"failures", m.failures}};
}

void from_json(const json& j, RunManifest& m) {
  m.config_hash = j.at("config_hash").get<std::string>();
  m.started_at = j.at("started_at").get<std::string>();
  m.finished_at = j.at("finished_at").get<std::string>();
  m.backends = j.at("backends").get<std::map<std::string, std::string>>();
  m.parameters = j.at("parameters").get<std::map<std::string, std::string>>();
  m.n_records = j.at("n_records").get<std::size_t>();
  m.failed_records = j.at("failed_records").get<std::vector<FailureRecord>>();
  m.failures = j.at("failures").get<std::vector<FailureRecord>>();
}

void to_json(json& j, const FactualityReport& r) {
  j = json{{"schema_version", r.schema_version},
           {"rows", r.rows},
           {"generations", r.generations},
           {"manifest", r.manifest},
           {"human_eval", r.human_eval ? json(*r.human_eval) : json(nullptr)}};
}

void from_json(const json& j, FactualityReport& r) {
  r.schema_version = j.at("schema_version").get<int>();
  if (r.schema_version != FactualityReport::kSchemaVersion)
    throw Error(ErrorCode::UnsupportedVersion,
                "report schema_version " + std::to_string(r.schema_version) + " is not supported");
  r.rows = j.at("rows").get<std::vector<ReportRow>>();
  r.generations = j.at("generations").get<std::vector<GenerationScore>>();
  r.manifest = j.at("manifest").get<RunManifest>();
  if (j.contains("human_eval") && !j["human_eval"].is_null())
    r.human_eval = j["human_eval"].get<HumanEvalSummary>();
  else
    r.human_eval.reset();
}

FactualityReport parse_report(std::string_view bytes) {
  try {
    return json::parse(bytes).get<FactualityReport>();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("unreadable report: ") + e.what());
  }
}

FactualityReport read_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open report " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_report(ss.str());
}

namespace {

std::string emit_csv(const FactualityReport& report) {
  std::string out = "model_id,task,mode,technique,mean,n_generations,n_scored,n_excluded,n_facts,n_supported\n";
  for (const auto& r : report.rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", csv_field(r.model_id), to_string(r.task),
                       to_string(r.mode), to_string(r.technique), r.mean ? fmt::format("{}", *r.mean) : "",
                       r.n_generations, r.n_scored, r.n_excluded, r.n_facts, r.n_supported);
  }
  return out;
}

std::string section_title(Mode mode) {
  switch (mode) {
    case Mode::GroundingOnly: return "Grounding Document";
    case Mode::Hybrid: return "Grounding Document + Wikipedia";
    case Mode::WikipediaOnly: return "Wikipedia only (baseline)";
  }
  return "";
}

std::string emit_markdown(const FactualityReport& report) {
  std::string out = "# Factuality report\n";
  const Mode mode_order[] = {Mode::GroundingOnly, Mode::Hybrid, Mode::WikipediaOnly};
  for (Mode mode : mode_order) {
    std::set<TaskKind> tasks;
    std::set<std::string> models;
    std::map<std::tuple<std::string, TaskKind, ScoreTechnique>, const ReportRow*> cells;
    for (const auto& r : report.rows) {
      if (r.mode != mode) continue;
      tasks.insert(r.task);
      models.insert(r.model_id);
      cells[{r.model_id, r.task, r.technique}] = &r;
    }
    if (models.empty()) continue;

    out += fmt::format("\n## {} ({})\n\n", section_title(mode), to_string(mode));
    std::string header = "| Model |";
    std::string rule = "|---|";
    for (TaskKind task : kAllTasks) {
      if (!tasks.count(task)) continue;
      for (auto technique : kScoreTechniques) {
        header += fmt::format(" {} {} |", to_string(task), to_string(technique));
        rule += "---:|";
      }
    }
    out += header + "\n" + rule + "\n";
    for (const auto& model : models) {
      out += "| " + md_cell(model) + " |";
      for (TaskKind task : kAllTasks) {
        if (!tasks.count(task)) continue;
        for (auto technique : kScoreTechniques) {
          auto it = cells.find({model, task, technique});
          bool has = it != cells.end() && it->second->mean;
          out += " " + (has ? format_score(*it->second->mean) : std::string("-")) + " |";
        }
      }
      out += "\n";
    }
  }

  if (report.human_eval) {
    const auto& he = *report.human_eval;
    out += "\n## Human evaluation\n\n";
    if (!he.tasks.empty()) {
      out += "| Task | Baseline | CoT | NLI | UnVot | Human |\n|---|---:|---:|---:|---:|---:|\n";
      for (const auto& row : he.tasks) {
        out += fmt::format("| {} |", to_string(row.task));
        for (const char* col : {"Baseline", "CoT", "NLI", "UnVot"}) {
          auto it = row.technique_means.find(col);
          bool has = it != row.technique_means.end() && it->second;
          out += " " + (has ? fmt::format("{:.2f}", *it->second) : std::string("-")) + " |";
        }
        out += " " + format_score(row.human_mean) + " |\n";
      }
    }
    if (he.agreement)
      out += fmt::format("\nCohen's kappa: {:.4f} (linear-weighted {:.4f}, {} items, {} bins)\n",
                         he.agreement->kappa, he.agreement->weighted_kappa, he.agreement->n_items,
                         he.agreement->binning.bin_count());
    if (!he.correlations.empty()) {
      out += "\n| Technique | Level | Pearson | Spearman | n |\n|---|---|---:|---:|---:|\n";
      for (const auto& c : he.correlations)
        out += fmt::format("| {} | {} | {:.4f} | {:.4f} | {} |\n", c.technique, to_string(c.result.level),
                           c.result.pearson, c.result.spearman, c.result.n);
    }
  }

  if (!report.manifest.config_hash.empty()) {
    out += fmt::format("\nConfig hash `{}`; {} records, {} excluded, {} verifier failures.\n",
                       report.manifest.config_hash, report.manifest.n_records,
                       report.manifest.failed_records.size(), report.manifest.failures.size());
  }
  return out;
}

}  // namespace

std::string emit_report(const FactualityReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::Json: return json(report).dump(2) + "\n";
    case ReportFormat::Csv: return emit_csv(report);
    case ReportFormat::Markdown: return emit_markdown(report);
  }
  throw Error(ErrorCode::UnknownFormat, "unknown report format");
}

std::string emit_report(const FactualityReport& report, std::string_view format) {
  return emit_report(report, parse_report_format(format));
}

HumanEvalSummary evaluate_against_humans(const FactualityReport& report,
                                         std::span<const AnnotationRecord> annotations,
                                         const Binning& binning) {
  HumanEvalSummary summary;
  summary.n_annotations = annotations.size();
  summary.warnings = annotation_warnings(annotations);

  std::map<std::string, std::vector<AnnotationRecord>> by_item;
  for (const auto& a : annotations) by_item[a.generation_id].push_back(a);
  summary.n_generations = by_item.size();

  std::vector<AnnotationRecord> paired;
  for (const auto& [id, items] : by_item)
    if (items.size() == 2) paired.insert(paired.end(), items.begin(), items.end());
  try {
    summary.agreement = cohen_kappa(paired, binning);
  } catch (const Error& e) {
    summary.warnings.push_back(std::string("kappa not computed: ") + e.what());
  }

  std::set<Mode> modes;
  for (const auto& g : report.generations) modes.insert(g.mode);
  std::optional<Mode> main_mode;
  if (modes.count(Mode::Hybrid)) main_mode = Mode::Hybrid;
  else if (modes.count(Mode::GroundingOnly)) main_mode = Mode::GroundingOnly;

  // technique column -> record id -> score
  std::map<std::string, std::map<std::string, double>> auto_scores;
  std::map<std::string, TaskKind> task_of;
  for (const auto& g : report.generations) {
    task_of[g.record_id] = g.task;
    if (!g.score) continue;
    if (main_mode && g.mode == *main_mode)
      auto_scores[std::string(to_string(g.technique))][g.record_id] = *g.score;
    else if (g.mode == Mode::WikipediaOnly && g.technique == ScoreTechnique::Cot)
      auto_scores["Baseline"][g.record_id] = *g.score;
  }

  auto means = human_means(annotations, [&](const std::string& id) -> std::optional<TaskKind> {
    auto it = task_of.find(id);
    if (it == task_of.end()) return std::nullopt;
    return it->second;
  });
  for (const auto& [id, mean] : means.per_generation)
    if (!task_of.count(id)) summary.warnings.push_back("annotated generation " + id + " is not in the report");

  const char* columns[] = {"Baseline", "CoT", "NLI", "UnVot"};
  std::map<std::string, std::map<TaskKind, double>> task_means;
  for (const auto& [task, human] : means.per_task) {
    TaskComparisonRow row;
    row.task = task;
    row.human_mean = human;
    for (const auto& [id, mean] : means.per_generation) {
      auto it = task_of.find(id);
      if (it != task_of.end() && it->second == task) ++row.n_generations;
    }
    for (const char* col : columns) {
      auto sit = auto_scores.find(col);
      if (sit == auto_scores.end()) continue;
      double sum = 0;
      std::size_t n = 0;
      for (const auto& [id, mean] : means.per_generation) {
        auto tit = task_of.find(id);
        auto vit = sit->second.find(id);
        if (tit == task_of.end() || tit->second != task || vit == sit->second.end()) continue;
        sum += vit->second;
        ++n;
      }
      if (n > 0) {
        row.technique_means[col] = sum / static_cast<double>(n);
        task_means[col][task] = sum / static_cast<double>(n);
      } else {
        row.technique_means[col] = std::nullopt;
      }
    }
    summary.tasks.push_back(std::move(row));
  }

  for (const char* col : columns) {
    auto sit = auto_scores.find(col);
    if (sit == auto_scores.end()) continue;
    try {
      summary.correlations.push_back(
          {col, correlate(sit->second, means.per_generation, CorrelationLevel::PerGeneration)});
    } catch (const Error& e) {
      summary.warnings.push_back(std::string(col) + " per-generation correlation not computed: " + e.what());
    }
    std::map<std::string, double> a, h;
    for (const auto& [task, v] : task_means[col]) {
      a[std::string(to_string(task))] = v;
      h[std::string(to_string(task))] = means.per_task.at(task);
    }
    try {
      summary.correlations.push_back({col, correlate(a, h, CorrelationLevel::PerTask)});
    } catch (const Error& e) {
      summary.warnings.push_back(std::string(col) + " per-task correlation not computed: " + e.what());
    }
  }
  return summary;
}

FactualityReport merge_reports(std::span<const FactualityReport> reports) {
  if (reports.empty()) throw Error(ErrorCode::InvalidArgument, "nothing to merge");
  std::vector<GenerationScore> scores;
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  RunManifest manifest = reports.front().manifest;
  std::optional<HumanEvalSummary> human_eval;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    for (const auto& g : r.generations) {
      if (seen.insert({g.record_id, std::string(to_string(g.mode)), std::string(to_string(g.technique))})
              .second)
        scores.push_back(g);
    }
    if (i > 0) {
      manifest.n_records += r.manifest.n_records;
      manifest.failed_records.insert(manifest.failed_records.end(), r.manifest.failed_records.begin(),
                                     r.manifest.failed_records.end());
      manifest.failures.insert(manifest.failures.end(), r.manifest.failures.begin(),
                               r.manifest.failures.end());
    }
    if (!human_eval && r.human_eval) human_eval = r.human_eval;
  }
  auto merged = aggregate(scores, std::move(manifest));
  merged.human_eval = std::move(human_eval);
  return merged;
}

}  // namespace medfact
