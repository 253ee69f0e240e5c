#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "medfact/cli.hpp"
#include "medfact/config.hpp"
#include "medfact/error.hpp"
#include "medfact/report.hpp"

using namespace medfact;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = MEDFACT_FIXTURES;

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream o, e;
  int rc = run_cli(args, o, e);
  return {rc, o.str(), e.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("medfact_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  f << s;
}

ErrorCode config_error_of(const std::string& yaml) {
  try {
    parse_run_config(yaml, kFixtures);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected error for:\n" << yaml;
  return ErrorCode::IoError;
}

}  // namespace

TEST(Cli, UnknownSubcommandIsUsageError) {
  auto r = cli({"frobnicate"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("unknown subcommand"), std::string::npos);
  EXPECT_NE(r.err.find("verify"), std::string::npos);
  EXPECT_EQ(cli({}).code, 1);
  EXPECT_EQ(cli({"verify", "--no-such-flag"}).code, 1);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(Cli, VerifyStdoutMatchesGolden) {
  auto r = cli({"verify", "-c", (kFixtures / "stub.yaml").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, slurp(kFixtures / "golden_report.json"));
}

TEST(Cli, ReportFormatsAndErrors) {
  auto golden = (kFixtures / "golden_report.json").string();
  auto md = cli({"report", "-i", golden, "--format", "markdown"});
  ASSERT_EQ(md.code, 0) << md.err;
  EXPECT_NE(md.out.find("## Grounding Document + Wikipedia"), std::string::npos);
  auto csv = cli({"report", "-i", golden, "-f", "csv"});
  ASSERT_EQ(csv.code, 0);
  EXPECT_EQ(csv.out.rfind("model_id,task,mode,technique,mean", 0), 0u);
  auto json = cli({"report", "-i", golden});
  EXPECT_EQ(json.out, slurp(golden));
  auto merged = cli({"report", "-i", golden, "-i", golden});
  EXPECT_EQ(parse_report(merged.out).generations, parse_report(json.out).generations);

  auto bad = cli({"report", "-i", golden, "--format", "xml"});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("error[UnknownFormat]"), std::string::npos);
}

TEST(Cli, ScoreRebuildsFromTrail) {
  auto dir = temp_dir("cli_score");
  auto yaml = (kFixtures / "stub.yaml").string();
  ASSERT_EQ(cli({"verify", "-c", yaml, "--output-dir", dir.string()}).code, 0);
  auto r = cli({"score", "-c", yaml, "--output-dir", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto rebuilt = parse_report(r.out);
  auto original = parse_report(slurp(dir / "report.json"));
  EXPECT_EQ(rebuilt.rows, original.rows);
  fs::remove_all(dir);
}

TEST(Cli, HumanEvalAndDecompose) {
  auto golden = (kFixtures / "golden_report.json").string();
  auto h = cli({"human-eval", "--report", golden, "--annotations", (kFixtures / "annotations.csv").string(),
                "--format", "markdown"});
  ASSERT_EQ(h.code, 0) << h.err;
  EXPECT_NE(h.out.find("Human"), std::string::npos);

  auto d = cli({"decompose", "-c", (kFixtures / "stub.yaml").string()});
  ASSERT_EQ(d.code, 0) << d.err;
  EXPECT_NE(d.out.find("\"facts\""), std::string::npos);
}

TEST(Cli, RuntimeFailuresExitTwo) {
  auto r = cli({"verify", "-c", (kFixtures / "stub.yaml").string(), "--generations", "/nonexistent/x.jsonl"});
  EXPECT_NE(r.code, 0);
  auto dir = temp_dir("cli_runtime");
  write(dir / "broken.jsonl", "{not json}\n");
  auto broken = cli({"verify", "-c", (kFixtures / "stub.yaml").string(), "--generations", (dir / "broken.jsonl").string()});
  EXPECT_EQ(broken.code, 2);
  EXPECT_NE(broken.err.find("error["), std::string::npos);
  fs::remove_all(dir);
  EXPECT_EQ(exit_code_for(ErrorCode::ConfigError), 1);
  EXPECT_EQ(exit_code_for(ErrorCode::BackendFailure), 2);
}

TEST(Cli, IngestConvertStats) {
  auto dir = temp_dir("cli_ingest");
  write(dir / "dump.jsonl", R"({"title":"Insulin","text":"Insulin is a hormone that lowers glucose."})" "\n");
  auto r = cli({"ingest-corpus", "--dump", (dir / "dump.jsonl").string(), "--corpus-out", (dir / "c.jsonl").string(),
                "--index-out", (dir / "idx.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "idx.json"));
  EXPECT_TRUE(fs::exists(dir / "c.jsonl"));

  write(dir / "pubmed.jsonl", R"({"article":"a b c","abstract":"d"})" "\n");
  auto c = cli({"convert-dataset", "--dataset", "pubmed", "--input", (dir / "pubmed.jsonl").string(), "-o",
                (dir / "pm.jsonl").string()});
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_TRUE(fs::exists(dir / "pm.jsonl"));

  auto s = cli({"stats", "--generations", (kFixtures / "generations.jsonl").string()});
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_NE(s.out.find("RAG"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Config, RejectsUnknownKeysAndSecrets) {
  EXPECT_EQ(config_error_of("run:\n  mode: hybrid\n  colour: blue\n"), ErrorCode::ConfigError);
  EXPECT_EQ(config_error_of("judge:\n  kind: openai\n  api_key: sk-123\n"), ErrorCode::ConfigError);
  EXPECT_EQ(config_error_of("nli:\n  token: abc\n"), ErrorCode::ConfigError);
  EXPECT_EQ(config_error_of("pipeline:\n  k: many\n"), ErrorCode::ConfigError);
  EXPECT_EQ(config_error_of("wat: 1\n"), ErrorCode::ConfigError);

  auto c = parse_run_config("paths:\n  corpus: corpus.jsonl\npipeline:\n  k: 7\n", kFixtures);
  EXPECT_EQ(c.k, 7u);
  EXPECT_EQ(*c.corpus, kFixtures / "corpus.jsonl");
  auto r = cli({"verify", "-c", (kFixtures / "stub.yaml").string(), "--overlap", "40"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error["), std::string::npos);
}

TEST(Config, MissingCredentialFailsBeforeAnyCall) {
  auto dir = temp_dir("cli_cred");
  write(dir / "c.yaml", "paths:\n  generations: " + (kFixtures / "generations.jsonl").string() +
                            "\n  corpus: " + (kFixtures / "corpus.jsonl").string() +
                            "\njudge:\n  kind: openai\n  url: http://127.0.0.1:9/v1/chat/completions\n"
                            "  api_key_env: MEDFACT_DEFINITELY_UNSET\n"
                            "nli:\n  kind: stub\n  transcript: " + (kFixtures / "nli.jsonl").string() + "\n");
  ::unsetenv("MEDFACT_DEFINITELY_UNSET");
  auto r = cli({"verify", "-c", (dir / "c.yaml").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("MEDFACT_DEFINITELY_UNSET"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, ReferenceDocumentsEveryCommand) {
  auto r = cli({"reference"});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out, cli_reference());
  for (const char* cmd : {"ingest-corpus", "generate", "decompose", "verify", "score", "human-eval", "report",
                          "convert-dataset", "stats"})
    EXPECT_NE(r.out.find(std::string("## ") + cmd), std::string::npos) << cmd;
  EXPECT_NE(r.out.find("Config keys"), std::string::npos);
  EXPECT_NE(r.out.find("--chunk-size"), std::string::npos);
}

TEST(Cli, CommittedReferenceIsCurrent) {
  auto path = fs::path(MEDFACT_SOURCE_DIR) / "docs" / "REFERENCE.md";
  ASSERT_TRUE(fs::exists(path)) << "regenerate with: medfact reference > docs/REFERENCE.md";
  EXPECT_EQ(slurp(path), cli_reference()) << "regenerate with: medfact reference > docs/REFERENCE.md";
}
