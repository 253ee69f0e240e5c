#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "medfact/backend.hpp"
#include "medfact/core.hpp"

namespace medfact {

struct CorpusDocument {
  std::string title;
  std::string text;
};

struct ChunkParams {
  std::size_t chunk_size = 256;  // words
  std::size_t overlap = 32;      // words

  // Throws InvalidArgument unless chunk_size >= 1 and overlap < chunk_size.
  void validate() const;
};

inline constexpr std::string_view kGroundingTitle = "GROUNDING";

struct EvidencePassage {
  std::string source_title;
  std::size_t chunk_index = 0;
  std::string text;
  std::optional<double> score;  // absent for grounding-document chunks
  std::size_t rank = 1;

  bool operator==(const EvidencePassage&) const = default;
};

// Sliding windows of chunk_size words advancing by chunk_size - overlap. The
// last window may be short. Words are re-joined with single spaces.
// Throws EmptyDocument for text without words.
std::vector<std::string> chunk_document(std::string_view text, std::size_t chunk_size,
                                        std::size_t overlap);

struct Bm25Params {
  double k1 = 1.5;
  double b = 0.75;
};

// ln(1 + (N - df + 0.5) / (df + 0.5)), always positive.
double bm25_idf(std::size_t n_passages, std::size_t doc_freq);

// Chunked corpus with the term statistics BM25 needs. Immutable once built,
// so concurrent retrievals are safe.
class PassageIndex {
 public:
  static constexpr int kFormatVersion = 1;

  struct Passage {
    std::string title;
    std::size_t chunk_index = 0;
    std::string text;
    std::size_t length = 0;  // number of terms
  };

  // Throws EmptyCorpus, DuplicateTitle, EmptyDocument, InvalidArgument.
  static PassageIndex build(std::span<const CorpusDocument> corpus, ChunkParams params);

  // Throws UnsupportedVersion for unknown format versions and MalformedRecord
  // when stored statistics disagree with the stored passages.
  static PassageIndex deserialize(std::string_view bytes);
  static PassageIndex load(const std::filesystem::path& path);

  std::string serialize() const;
  void save(const std::filesystem::path& path) const;

  // Exact title, then case-insensitive title, then the best word-set Jaccard
  // match scoring at least 0.5. Ties go to the lexicographically smallest title.
  std::optional<std::string> resolve_topic(std::string_view topic) const;

  // BM25 top-k. A resolvable topic restricts ranking to that article's
  // passages; otherwise the whole corpus is ranked. Passages sharing no term
  // with the query are never returned. Throws EmptyQuery, InvalidArgument (k=0).
  std::vector<EvidencePassage> retrieve(const std::optional<std::string>& topic,
                                        std::string_view query, std::size_t k) const;

  const std::vector<Passage>& passages() const { return passages_; }
  const ChunkParams& chunk_params() const { return params_; }
  std::size_t document_frequency(const std::string& term) const;
  double average_length() const;
  std::size_t document_count() const { return title_ranges_.size(); }

 private:
  struct Posting {
    std::uint32_t passage;
    std::uint32_t tf;
  };
  struct Range {
    std::size_t begin;
    std::size_t end;
  };

  void finalize();

  ChunkParams params_;
  Bm25Params bm25_;
  std::vector<Passage> passages_;
  std::uint64_t total_length_ = 0;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  std::unordered_map<std::string, Range> title_ranges_;
  std::unordered_map<std::string, std::vector<std::string>> titles_by_lower_;
  std::unordered_map<std::string, std::vector<std::string>> titles_by_term_;
};

// Asks the judge for the most relevant Wikipedia title: the question for QA
// tasks, the generated text for summarization tasks. Returns the first
// non-empty line with surrounding quotes stripped.
// Errors: BackendFailure, EmptyTopic.
std::string generate_topic(const GenerationRecord& record, ChatBackend& judge);
std::string clean_topic_response(std::string_view response);

// Positional chunks of the grounding document, titled GROUNDING, unscored.
// Throws MissingGrounding.
std::vector<EvidencePassage> grounding_passages(const GenerationRecord& record,
                                                const ChunkParams& params);

// Corpus JSONL: one {"title", "text"} object per line; other fields ignored.
std::vector<CorpusDocument> read_corpus_jsonl(const std::string& path);
void write_corpus_jsonl(const std::string& path, std::span<const CorpusDocument> corpus);

enum class DumpFormat { Jsonl, FactScoreSqlite };
DumpFormat parse_dump_format(std::string_view name);

// Converts a raw dump export into corpus documents. Jsonl accepts WikiExtractor
// style lines ({"title", "text", ...}); FactScoreSqlite reads the
// documents(title, text) table with <s>...</s> passage markers. Documents with
// empty text are dropped; later duplicates of a title are dropped.
std::vector<CorpusDocument> ingest_dump(const std::string& path, DumpFormat format);

}  // namespace medfact
