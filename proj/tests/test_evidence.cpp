#include <gtest/gtest.h>

#include <sqlite3.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "medfact/error.hpp"
#include "medfact/evidence.hpp"
#include "medfact/text.hpp"
#include "oracles.hpp"

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

std::string words(std::size_t n, const std::string& prefix = "w") {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += (i ? " " : "") + prefix + std::to_string(i);
  return s;
}

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("medfact_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<oracle::Passage> oracle_view(const PassageIndex& index) {
  std::vector<oracle::Passage> out;
  for (const auto& p : index.passages()) out.push_back({p.title, p.chunk_index, p.text});
  return out;
}

std::vector<CorpusDocument> toy_corpus() {
  return {{"Aspirin", "aspirin treats pain"}, {"Insulin", "insulin regulates glucose"}};
}

}  // namespace

TEST(Chunking, Examples) {
  auto c = chunk_document(words(10), 4, 0);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(split_words(c[0]).size(), 4u);
  EXPECT_EQ(split_words(c[1]).size(), 4u);
  EXPECT_EQ(split_words(c[2]).size(), 2u);
  EXPECT_EQ(chunk_document(words(4), 8, 0).size(), 1u);
  EXPECT_EQ(code_of([] { chunk_document(words(4), 4, 4); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { chunk_document(" \n ", 4, 1); }), ErrorCode::EmptyDocument);
}

TEST(Chunking, GroundingPassages) {
  GenerationRecord r;
  r.id = "x";
  r.task = TaskKind::Summ;
  r.source_document = words(600);
  auto p = grounding_passages(r, ChunkParams{256, 32});
  ASSERT_EQ(p.size(), 3u);
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_EQ(p[i].source_title, "GROUNDING");
    EXPECT_EQ(p[i].chunk_index, i);
    EXPECT_EQ(p[i].rank, i + 1);
    EXPECT_FALSE(p[i].score.has_value());
  }
  r.source_document = words(100);
  auto one = grounding_passages(r, ChunkParams{256, 32});
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].text, *r.source_document);

  r.task = TaskKind::OpenGen;
  r.source_document.reset();
  EXPECT_EQ(code_of([&] { grounding_passages(r, ChunkParams{}); }), ErrorCode::MissingGrounding);
}

TEST(Chunking, ReconstructionProperty) {
  std::mt19937 rng(17);
  for (int i = 0; i < 1000; ++i) {
    std::size_t n = 1 + rng() % 120;
    std::size_t size = 1 + rng() % 30;
    std::size_t overlap = rng() % size;
    auto text = words(n, "t");
    auto chunks = chunk_document(text, size, overlap);
    std::vector<std::string> rebuilt;
    for (std::size_t c = 0; c < chunks.size(); ++c) {
      auto w = split_words(chunks[c]);
      ASSERT_LE(w.size(), size);
      std::size_t skip = c == 0 ? 0 : overlap;
      ASSERT_LE(skip, w.size());
      rebuilt.insert(rebuilt.end(), w.begin() + static_cast<std::ptrdiff_t>(skip), w.end());
    }
    EXPECT_EQ(rebuilt, split_words(text)) << n << " " << size << " " << overlap;
  }
}

TEST(Bm25, ToyCorpusHandComputed) {
  auto index = PassageIndex::build(toy_corpus(), ChunkParams{256, 32});
  auto hits = index.retrieve(std::nullopt, "insulin glucose", 1);
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].source_title, "Insulin");
  // N=2, df=1 for both terms, every passage has 3 terms so the length norm is 1.
  double idf = std::log(1.0 + (2.0 - 1.0 + 0.5) / (1.0 + 0.5));
  double per_term = idf * (1.0 * 2.5) / (1.0 + 1.5);
  EXPECT_NEAR(*hits[0].score, 2 * per_term, 1e-12);
  EXPECT_EQ(hits[0].rank, 1u);

  for (const auto& h : index.retrieve(std::string("Aspirin"), "insulin pain aspirin", 5))
    EXPECT_EQ(h.source_title, "Aspirin");
  EXPECT_TRUE(index.retrieve(std::nullopt, "zzzz", 3).empty());
  EXPECT_EQ(code_of([&] { index.retrieve(std::nullopt, " ,, ", 3); }), ErrorCode::EmptyQuery);
  EXPECT_EQ(code_of([&] { index.retrieve(std::nullopt, "insulin", 0); }), ErrorCode::InvalidArgument);
}

TEST(Bm25, MatchesBruteForceOracle) {
  std::mt19937 rng(23);
  const std::vector<std::string> vocab = {"insulin", "glucose", "aspirin", "pain", "blood", "liver",
                                          "dose", "kidney", "heart", "acid", "vitamin", "bone"};
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<CorpusDocument> corpus;
    std::size_t docs = 1 + rng() % 12;
    for (std::size_t d = 0; d < docs; ++d) {
      std::string text;
      std::size_t len = 1 + rng() % 60;
      for (std::size_t w = 0; w < len; ++w) text += vocab[rng() % vocab.size()] + " ";
      corpus.push_back({"Doc" + std::to_string(d), text});
    }
    ChunkParams params{1 + rng() % 12, 0};
    params.overlap = rng() % params.chunk_size;
    auto index = PassageIndex::build(corpus, params);
    auto passages = oracle_view(index);
    ASSERT_LE(passages.size(), 1000u);

    for (int q = 0; q < 10; ++q) {
      std::string query;
      std::size_t qlen = 1 + rng() % 4;
      for (std::size_t w = 0; w < qlen; ++w) query += vocab[rng() % vocab.size()] + " ";
      std::size_t k = 1 + rng() % 8;
      std::optional<std::string> topic;
      if (rng() % 3 == 0) topic = corpus[rng() % corpus.size()].title;

      auto got = index.retrieve(topic, query, k);
      auto want = oracle::bm25_top_k(passages, query, k, topic);
      ASSERT_EQ(got.size(), want.size()) << query;
      for (std::size_t i = 0; i < got.size(); ++i) {
        EXPECT_EQ(got[i].source_title, want[i].title);
        EXPECT_EQ(got[i].chunk_index, want[i].chunk);
        EXPECT_NEAR(*got[i].score, want[i].score, 1e-9);
        EXPECT_EQ(got[i].rank, i + 1);
        if (i) EXPECT_GE(*got[i - 1].score, *got[i].score);
      }
      EXPECT_EQ(index.retrieve(topic, query, k), got);
    }
  }
}

TEST(Index, BuildCountsAndErrors) {
  std::vector<CorpusDocument> corpus = {{"A", words(10)}, {"B", words(3)}};
  auto index = PassageIndex::build(corpus, ChunkParams{4, 1});
  EXPECT_EQ(index.passages().size(), chunk_document(words(10), 4, 1).size() + 1);
  EXPECT_EQ(index.document_count(), 2u);

  EXPECT_EQ(code_of([] { PassageIndex::build(std::vector<CorpusDocument>{}, ChunkParams{}); }),
            ErrorCode::EmptyCorpus);
  std::vector<CorpusDocument> dup = {{"A", "x"}, {"A", "y"}};
  EXPECT_EQ(code_of([&] { PassageIndex::build(dup, ChunkParams{}); }), ErrorCode::DuplicateTitle);
}

TEST(Index, PersistenceRoundTrip) {
  std::vector<CorpusDocument> corpus = {{"Aspirin", "aspirin treats pain and fever " + words(40, "a")},
                                        {"Insulin", "insulin regulates glucose in blood " + words(30, "i")},
                                        {"Liver", "the liver stores glucose as glycogen"}};
  auto a = PassageIndex::build(corpus, ChunkParams{16, 4});
  auto b = PassageIndex::build(corpus, ChunkParams{16, 4});
  EXPECT_EQ(a.serialize(), b.serialize());

  auto dir = temp_dir("index");
  a.save(dir / "index.json");
  auto loaded = PassageIndex::load(dir / "index.json");
  EXPECT_EQ(loaded.serialize(), a.serialize());
  for (const char* q : {"glucose", "aspirin pain", "a3 i4 glycogen", "blood liver"})
    for (auto topic : {std::optional<std::string>{}, std::optional<std::string>{"Liver"}})
      EXPECT_EQ(loaded.retrieve(topic, q, 5), a.retrieve(topic, q, 5));
  fs::remove_all(dir);
}

TEST(Index, RejectsUnknownVersionAndTampering) {
  auto index = PassageIndex::build(toy_corpus(), ChunkParams{8, 2});
  auto j = nlohmann::json::parse(index.serialize());
  j["format_version"] = 99;
  EXPECT_EQ(code_of([&] { PassageIndex::deserialize(j.dump()); }), ErrorCode::UnsupportedVersion);
  j = nlohmann::json::parse(index.serialize());
  j["total_length"] = 1;
  EXPECT_EQ(code_of([&] { PassageIndex::deserialize(j.dump()); }), ErrorCode::MalformedRecord);
}

TEST(Topic, Resolution) {
  std::vector<CorpusDocument> corpus = {{"Type 2 diabetes", "x"}, {"Insulin", "y"}, {"Aspirin", "z"}};
  auto index = PassageIndex::build(corpus, ChunkParams{});
  EXPECT_EQ(index.resolve_topic("Insulin"), "Insulin");
  EXPECT_EQ(index.resolve_topic("insulin"), "Insulin");
  EXPECT_EQ(index.resolve_topic("diabetes type 2"), "Type 2 diabetes");
  EXPECT_EQ(index.resolve_topic("Paracetamol"), std::nullopt);
}

TEST(Topic, GenerationAndCleaning) {
  GenerationRecord rag;
  rag.task = TaskKind::Rag;
  rag.question = "What does insulin regulate?";
  rag.output_text = "Glucose.";
  std::string prompt;
  FunctionChatBackend judge([&](const ChatRequest& r) {
    prompt = r.user;
    return std::string("Insulin");
  });
  EXPECT_EQ(generate_topic(rag, judge), "Insulin");
  EXPECT_NE(prompt.find("What does insulin regulate?"), std::string::npos);
  EXPECT_EQ(prompt.find("Glucose."), std::string::npos);

  EXPECT_EQ(clean_topic_response("\"Aspirin\"\n"), "Aspirin");
  EXPECT_EQ(clean_topic_response("\n  'Insulin' \nextra"), "Insulin");
  EXPECT_EQ(code_of([] { clean_topic_response(""); }), ErrorCode::EmptyTopic);
  EXPECT_EQ(code_of([] { clean_topic_response(" \"\" \n"); }), ErrorCode::EmptyTopic);
}

TEST(Ingest, JsonlDropsEmptyAndDuplicates) {
  auto dir = temp_dir("ingest");
  {
    std::ofstream out(dir / "dump.jsonl");
    out << R"({"title":"A","text":"alpha","id":"1"})" << "\n\n"
        << R"({"title":"B","text":"  "})" << "\n"
        << R"({"title":"A","text":"again"})" << "\n"
        << R"({"title":" C ","text":"gamma"})" << "\n";
  }
  auto docs = ingest_dump((dir / "dump.jsonl").string(), DumpFormat::Jsonl);
  ASSERT_EQ(docs.size(), 2u);
  EXPECT_EQ(docs[0].title, "A");
  EXPECT_EQ(docs[0].text, "alpha");
  EXPECT_EQ(docs[1].title, "C");

  write_corpus_jsonl((dir / "corpus.jsonl").string(), docs);
  auto again = read_corpus_jsonl((dir / "corpus.jsonl").string());
  ASSERT_EQ(again.size(), 2u);
  EXPECT_EQ(again[1].text, "gamma");
  fs::remove_all(dir);
}

TEST(Ingest, FactScoreSqlite) {
  auto dir = temp_dir("sqlite");
  auto path = (dir / "enwiki.db").string();
  sqlite3* db = nullptr;
  ASSERT_EQ(sqlite3_open(path.c_str(), &db), SQLITE_OK);
  ASSERT_EQ(sqlite3_exec(db,
                         "CREATE TABLE documents (title PRIMARY KEY, text);"
                         "INSERT INTO documents VALUES ('Insulin', '<s>Insulin is a hormone.</s><s>It lowers glucose.</s>');"
                         "INSERT INTO documents VALUES ('Empty', '<s></s>');",
                         nullptr, nullptr, nullptr),
            SQLITE_OK);
  sqlite3_close(db);
  auto docs = ingest_dump(path, DumpFormat::FactScoreSqlite);
  ASSERT_EQ(docs.size(), 1u);
  EXPECT_EQ(docs[0].title, "Insulin");
  EXPECT_EQ(docs[0].text, "Insulin is a hormone. It lowers glucose.");
  EXPECT_EQ(parse_dump_format("jsonl"), DumpFormat::Jsonl);
  fs::remove_all(dir);
}
