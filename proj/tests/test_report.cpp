#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "medfact/error.hpp"
#include "medfact/humaneval.hpp"
#include "medfact/report.hpp"

using namespace medfact;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = MEDFACT_FIXTURES;

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

GenerationScore gs(const std::string& id, TaskKind task, Mode mode, ScoreTechnique t, std::optional<double> score) {
  GenerationScore s;
  s.record_id = id;
  s.model_id = "m";
  s.task = task;
  s.mode = mode;
  s.technique = t;
  s.score = score;
  s.n_facts = score ? 10 : 0;
  s.n_supported = score ? static_cast<std::size_t>(*score / 10.0) : 0;
  return s;
}

FactualityReport small_report() {
  std::vector<GenerationScore> scores{gs("a", TaskKind::Summ, Mode::Hybrid, ScoreTechnique::Cot, 80.0),
                                      gs("b", TaskKind::Summ, Mode::Hybrid, ScoreTechnique::Cot, 90.0),
                                      gs("c", TaskKind::Rag, Mode::Hybrid, ScoreTechnique::Nli, std::nullopt)};
  RunManifest m;
  m.config_hash = "abc123";
  m.started_at = m.finished_at = "2024-01-01T00:00:00Z";
  m.n_records = 3;
  return aggregate(scores, m);
}

}  // namespace

TEST(FormatScore, Rounding) {
  EXPECT_EQ(format_score(85.0), "85.0");
  EXPECT_EQ(format_score(200.0 / 3.0), "66.7");
  EXPECT_EQ(format_score(0.05), "0.1");
  EXPECT_EQ(format_score(-0.01), "0.0");
  EXPECT_EQ(format_score(100.0), "100.0");
}

TEST(Report, JsonRoundTripAndDeterminism) {
  auto golden = slurp(kFixtures / "golden_report.json");
  auto parsed = parse_report(golden);
  EXPECT_EQ(emit_report(parsed, ReportFormat::Json), golden);
  auto r = small_report();
  auto bytes = emit_report(r, ReportFormat::Json);
  EXPECT_EQ(bytes, emit_report(r, ReportFormat::Json));
  EXPECT_EQ(parse_report(bytes), r);

  auto j = nlohmann::json::parse(bytes);
  j["schema_version"] = 7;
  try {
    parse_report(j.dump());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnsupportedVersion);
  }
  EXPECT_THROW(parse_report("{"), Error);
}

TEST(Report, CsvLayout) {
  auto csv = emit_report(small_report(), ReportFormat::Csv);
  std::istringstream in(csv);
  std::string header, row1, row2;
  std::getline(in, header);
  std::getline(in, row1);
  std::getline(in, row2);
  EXPECT_EQ(header, "model_id,task,mode,technique,mean,n_generations,n_scored,n_excluded,n_facts,n_supported");
  EXPECT_EQ(row1, "m,RAG,hybrid,NLI,,1,0,1,0,0");
  EXPECT_EQ(row2, "m,Summ,hybrid,CoT,85,2,2,0,20,17");
}

TEST(Report, MarkdownMirrorsTableLayout) {
  auto md = emit_report(small_report(), ReportFormat::Markdown);
  EXPECT_NE(md.find("Grounding Document + Wikipedia"), std::string::npos);
  EXPECT_NE(md.find("| m |"), std::string::npos);
  EXPECT_NE(md.find("85.0"), std::string::npos);
  EXPECT_NE(md.find("abc123"), std::string::npos);
  EXPECT_EQ(md, emit_report(small_report(), "md"));

  auto golden = parse_report(slurp(kFixtures / "golden_report.json"));
  auto gmd = emit_report(golden, ReportFormat::Markdown);
  EXPECT_NE(gmd.find("| stub-llm |"), std::string::npos);
  EXPECT_NE(gmd.find("66.7"), std::string::npos);
}

TEST(Report, HumanEvalSection) {
  auto report = parse_report(slurp(kFixtures / "golden_report.json"));
  auto annotations = read_annotations_csv((kFixtures / "annotations.csv").string());
  report.human_eval = evaluate_against_humans(report, annotations);
  ASSERT_TRUE(report.human_eval->agreement.has_value());
  EXPECT_EQ(report.human_eval->agreement->n_items, 4u);
  EXPECT_EQ(report.human_eval->tasks.size(), 4u);
  auto md = emit_report(report, ReportFormat::Markdown);
  EXPECT_NE(md.find("| Task | Baseline | CoT | NLI | UnVot | Human |"), std::string::npos);
  auto again = parse_report(emit_report(report, ReportFormat::Json));
  EXPECT_EQ(again, report);
}

TEST(Report, UnknownFormat) {
  try {
    parse_report_format("xml");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownFormat);
  }
  EXPECT_EQ(parse_report_format("markdown"), ReportFormat::Markdown);
  EXPECT_EQ(parse_report_format("csv"), ReportFormat::Csv);
}

TEST(Report, MergeDeduplicatesAndReaggregates) {
  auto a = small_report();
  auto extra = aggregate(std::vector<GenerationScore>{gs("d", TaskKind::Summ, Mode::Hybrid, ScoreTechnique::Cot, 100.0),
                                                      gs("a", TaskKind::Summ, Mode::Hybrid, ScoreTechnique::Cot, 80.0)},
                         RunManifest{});
  std::vector<FactualityReport> both{a, extra};
  auto merged = merge_reports(both);
  EXPECT_EQ(merged.generations.size(), 4u);
  const ReportRow* summ = nullptr;
  for (const auto& r : merged.rows)
    if (r.task == TaskKind::Summ) summ = &r;
  ASSERT_NE(summ, nullptr);
  EXPECT_EQ(format_score(*summ->mean), "90.0");
  EXPECT_EQ(merged.manifest.config_hash, "abc123");
}
