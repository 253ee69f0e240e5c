#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "medfact/bench.hpp"
#include "medfact/error.hpp"
#include "medfact/hashing.hpp"
#include "medfact/resources.hpp"

using namespace medfact;
namespace fs = std::filesystem;

namespace {

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected medfact::Error";
  return ErrorCode::IoError;
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

SampleRecord qa_sample() {
  SampleRecord s;
  s.sample_id = "q1";
  s.question = "What does insulin regulate?";
  s.snippets = {"Insulin lowers blood glucose.", "It is made in the pancreas."};
  return s;
}

}  // namespace

TEST(Prompts, PinnedChecksums) {
  const std::map<std::string, std::string> pinned = {
      {"cot_v1.txt", "4d44200f1fb516fc6c81395bf60590fa234e77aa290391819b1ad620da6dffff"},
      {"decompose_v1.txt", "30aeb7d0f736b50b89d671e60aabf393d9dbdfe9ef925e4a833e7b85eaae91b1"},
      {"laysumm.txt", "5febf399066cbf79ac975b7076bba43350cc67c360059fa53cff049e7641b208"},
      {"opengen.txt", "b1fbf35af609520c554f4af73ae5209e1ca407e62c5a6e1bc783e9ac2531e90a"},
      {"rag.txt", "82984587219753997cc9e805d43b031094f9dc8de0e8dd3aef4c63e8d3e57df0"},
      {"summ.txt", "09bb924211cf3e386055b4a605d5c149fbb76680a944d2a4d45a47d8b02de093"},
      {"topic_v1.txt", "694bf6e92fb7872f2969207be438db64064ae85d22f99953a6e68f4da0f3d3dc"},
  };
  for (const auto& [name, sha] : pinned) EXPECT_EQ(sha256_hex(resource(name)), sha) << name;
  EXPECT_EQ(resource_names().size(), pinned.size());
  EXPECT_THROW(resource("missing.txt"), std::out_of_range);
}

TEST(Prompts, RenderedTaskPrompts) {
  auto rag = render_prompt(TaskKind::Rag, qa_sample());
  EXPECT_EQ(rag,
            "Give a simple answer to the question based on the provided context.\n\n"
            "QUESTION: What does insulin regulate?\n\n"
            "CONTEXT: Insulin lowers blood glucose.\nIt is made in the pancreas.\n");
  auto open = render_prompt(TaskKind::OpenGen, qa_sample());
  EXPECT_EQ(open,
            "Give a simple answer to the question based on your best knowledge.\n\n"
            "QUESTION: What does insulin regulate?\n");

  SampleRecord article;
  article.sample_id = "a1";
  article.article = "Body text.";
  auto summ = render_prompt(TaskKind::Summ, article);
  EXPECT_EQ(summ.rfind("Summarize the given article by including the following key points:\n", 0), 0u);
  EXPECT_NE(summ.find("6. Clinical Relevance: How might the study's findings impact medical practice or patient care?"),
            std::string::npos);
  EXPECT_NE(summ.find("Scientific Article: Body text.\n\nSummary:\n"), std::string::npos);
  auto lay = render_prompt(TaskKind::LaySumm, article);
  EXPECT_NE(lay.find("in non-technical language understandable to a general audience."), std::string::npos);
  EXPECT_NE(lay.find("Scientific Article: Body text.\nSummary:\n"), std::string::npos);

  EXPECT_EQ(code_of([&] { render_prompt(TaskKind::Rag, article); }), ErrorCode::MissingField);
  EXPECT_EQ(code_of([] { render_prompt(TaskKind::Summ, qa_sample()); }), ErrorCode::MissingField);
}

TEST(Prompts, SinglePassSubstitution) {
  EXPECT_EQ(render_template("A {x} B {y}", {{"x", "{y}"}, {"y", "2"}}), "A {y} B 2");
  EXPECT_EQ(render_template("{unknown} {x}", {{"x", "1"}}), "{unknown} 1");
  SampleRecord s;
  s.sample_id = "a";
  s.article = "contains {article} literally";
  EXPECT_NE(render_prompt(TaskKind::Summ, s).find("contains {article} literally"), std::string::npos);
}

TEST(TaskSpecs, Defaults) {
  EXPECT_EQ(dataset_for(TaskKind::Summ), DatasetName::PubMed);
  EXPECT_EQ(dataset_for(TaskKind::LaySumm), DatasetName::Plos);
  EXPECT_EQ(dataset_for(TaskKind::Rag), DatasetName::BioAsq);
  EXPECT_EQ(dataset_for(TaskKind::OpenGen), DatasetName::BioAsq);
  for (auto t : kAllTasks) {
    auto spec = default_task_spec(t);
    EXPECT_NO_THROW(spec.validate());
    EXPECT_EQ(spec.params.temperature, 0.0);
    EXPECT_EQ(spec.sample_count, 1000u);
  }
  EXPECT_EQ(default_task_spec(TaskKind::Summ).params.max_new_tokens, 256);
  auto bad = default_task_spec(TaskKind::Rag);
  bad.template_id = "nope.txt";
  EXPECT_EQ(code_of([&] { bad.validate(); }), ErrorCode::ConfigError);
  EXPECT_EQ(model_presets().size(), 6u);
  EXPECT_TRUE(find_model_preset("gpt-4o-mini").has_value());
}

TEST(Sampling, DeterministicUniformSubsets) {
  auto a = sample_indices(1130, 1000, 42);
  EXPECT_EQ(a, sample_indices(1130, 1000, 42));
  EXPECT_NE(a, sample_indices(1130, 1000, 43));
  EXPECT_EQ(a.size(), 1000u);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), 1000u);
  EXPECT_LT(a.back(), 1130u);
  EXPECT_EQ(sample_indices(5, 10, 1), (std::vector<std::size_t>{0, 1, 2, 3, 4}));

  // every index is reachable
  std::vector<int> hits(20, 0);
  for (std::uint64_t seed = 0; seed < 400; ++seed)
    for (auto i : sample_indices(20, 3, seed)) ++hits[i];
  for (int h : hits) EXPECT_GT(h, 20);
}

TEST(Datasets, ConvertAndLoad) {
  auto dir = temp_dir("datasets");
  write(dir / "pubmed.jsonl", R"({"article":"one two three","abstract":"short"})" "\n"
                              R"({"id":"p9","article":"four five","abstract":"abs"})" "\n");
  auto pubmed = convert_dataset(DatasetName::PubMed, (dir / "pubmed.jsonl").string());
  ASSERT_EQ(pubmed.size(), 2u);
  EXPECT_EQ(pubmed[0].sample_id, "pubmed-1");
  EXPECT_EQ(pubmed[1].sample_id, "p9");

  write(dir / "plos.json", R"([{"id":"l1","article":"a b","summary":"lay"}])");
  auto plos = convert_dataset(DatasetName::Plos, (dir / "plos.json").string());
  ASSERT_EQ(plos.size(), 1u);
  EXPECT_EQ(plos[0].reference, "lay");

  write(dir / "bioasq.json", R"({"questions":[
      {"id":"b1","type":"summary","body":"What is insulin?","snippets":[{"text":"A hormone."}],"ideal_answer":["Hormone."]},
      {"id":"b2","type":"yesno","body":"Is it?","snippets":[],"ideal_answer":"Yes."}]})");
  auto bio = convert_dataset(DatasetName::BioAsq, (dir / "bioasq.json").string());
  ASSERT_EQ(bio.size(), 1u);
  EXPECT_EQ(bio[0].question, "What is insulin?");
  EXPECT_EQ(bio[0].snippets, std::vector<std::string>{"A hormone."});

  write_samples_jsonl((dir / "bio.jsonl").string(), DatasetName::BioAsq, bio);
  EXPECT_EQ(read_samples_jsonl(TaskKind::Rag, (dir / "bio.jsonl").string()), bio);
  write_samples_jsonl((dir / "pm.jsonl").string(), DatasetName::PubMed, pubmed);
  auto loaded = load_dataset(TaskKind::Summ, (dir / "pm.jsonl").string(), 1, 42);
  ASSERT_EQ(loaded.size(), 1u);
  auto stats = source_stats(TaskKind::Summ, pubmed);
  EXPECT_DOUBLE_EQ(stats.source_words, 2.5);

  write(dir / "broken.jsonl", R"({"id":"x","article":"a","abstract":"b"})" "\nnot json\n");
  try {
    read_samples_jsonl(TaskKind::Summ, (dir / "broken.jsonl").string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedRecord);
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
  EXPECT_EQ(code_of([&] { read_samples_jsonl(TaskKind::Summ, (dir / "absent.jsonl").string()); }),
            ErrorCode::DatasetNotFound);
  fs::remove_all(dir);
}

TEST(Generation, RunsEveryPairAndLogs) {
  BenchTask rag;
  rag.spec = default_task_spec(TaskKind::Rag);
  rag.samples = {qa_sample()};
  auto second = qa_sample();
  second.sample_id = "q2";
  rag.samples.push_back(second);
  BenchTask open;
  open.spec = default_task_spec(TaskKind::OpenGen);
  open.samples = {qa_sample()};

  std::vector<ChatRequest> seen;
  std::mutex mu;
  FunctionChatBackend ok([&](const ChatRequest& r) {
    std::lock_guard lock(mu);
    seen.push_back(r);
    return std::string("Insulin regulates blood glucose.");
  });
  FunctionChatBackend broken([](const ChatRequest& r) -> std::string {
    if (r.user.find("best knowledge") != std::string::npos) throw Error(ErrorCode::BackendFailure, "x");
    return "ok answer";
  });
  std::vector<BenchTask> tasks{rag, open};
  std::vector<BenchModel> models{{"m-ok", ok}, {"m-bad", broken}};
  auto result = run_generation(tasks, models, 4, std::string("2024-01-01T00:00:00Z"));
  EXPECT_EQ(result.records.size(), 5u);
  EXPECT_EQ(result.manifest.failures.size(), 1u);
  EXPECT_EQ(result.manifest.generations.size(), 5u);
  for (const auto& r : seen) EXPECT_EQ(r.params.temperature, 0.0);
  for (std::size_t i = 1; i < result.records.size(); ++i) {
    const auto& a = result.records[i - 1];
    const auto& b = result.records[i];
    EXPECT_LE(std::tie(a.task, a.model_id, a.sample_id), std::tie(b.task, b.model_id, b.sample_id));
  }
  for (const auto& r : result.records) {
    if (r.task == TaskKind::Rag) EXPECT_EQ(*r.source_document, "Insulin lowers blood glucose.\nIt is made in the pancreas.");
    EXPECT_NO_THROW(validate_record(r));
  }
  auto stats = corpus_stats(result.records);
  EXPECT_EQ(stats.at(TaskKind::Rag).n, 4u);
}
