#pragma once

#include <span>
#include <string>
#include <string_view>

#include <nlohmann/json_fwd.hpp>

#include "medfact/pipeline.hpp"

namespace medfact {

enum class ReportFormat { Json, Csv, Markdown };

// Throws UnknownFormat.
ReportFormat parse_report_format(std::string_view name);

void to_json(nlohmann::json& j, const GenerationScore& s);
void from_json(const nlohmann::json& j, GenerationScore& s);
void to_json(nlohmann::json& j, const ReportRow& r);
void from_json(const nlohmann::json& j, ReportRow& r);
void to_json(nlohmann::json& j, const RunManifest& m);
void from_json(const nlohmann::json& j, RunManifest& m);
void to_json(nlohmann::json& j, const FactualityReport& r);
void from_json(const nlohmann::json& j, FactualityReport& r);

// Inverse of emit_report(.., Json). Throws UnsupportedVersion for other
// schema versions and MalformedRecord for anything unreadable.
FactualityReport parse_report(std::string_view bytes);
FactualityReport read_report(const std::string& path);

std::string emit_report(const FactualityReport& report, ReportFormat format);
std::string emit_report(const FactualityReport& report, std::string_view format);

// Union of several reports' rows and generations, re-aggregated. The first
// manifest is kept; the others' failures are appended. Human-eval data of the
// first report carrying one is kept.
FactualityReport merge_reports(std::span<const FactualityReport> reports);

// Compares the report's per-generation scores with human annotations.
// CoT / NLI / UnVot come from the main mode (hybrid when present, else
// grounding-only); "Baseline" is the CoT score of a wikipedia-only run when
// the report carries one. Agreement uses only items with exactly two
// annotators; problems that prevent a statistic become warnings.
HumanEvalSummary evaluate_against_humans(const FactualityReport& report,
                                         std::span<const AnnotationRecord> annotations,
                                         const Binning& binning = Binning::equal_width());

// One decimal, half away from zero: 66.666 -> "66.7", 85 -> "85.0".
std::string format_score(double value);

}  // namespace medfact
