#include "medfact/evidence.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>
#include <sqlite3.h>

#include "medfact/error.hpp"
#include "medfact/resources.hpp"
#include "medfact/text.hpp"

namespace medfact {

using json = nlohmann::json;

void ChunkParams::validate() const {
  if (chunk_size < 1) throw Error(ErrorCode::InvalidArgument, "chunk_size must be >= 1");
  if (overlap >= chunk_size)
    throw Error(ErrorCode::InvalidArgument, "overlap must be smaller than chunk_size");
}

std::vector<std::string> chunk_document(std::string_view text, std::size_t chunk_size,
                                        std::size_t overlap) {
  ChunkParams{chunk_size, overlap}.validate();
  auto words = split_words(text);
  if (words.empty()) throw Error(ErrorCode::EmptyDocument, "document has no words");

  const std::size_t stride = chunk_size - overlap;
  std::vector<std::string> chunks;
  for (std::size_t start = 0;; start += stride) {
    std::size_t end = std::min(start + chunk_size, words.size());
    std::string chunk;
    for (std::size_t i = start; i < end; ++i) {
      if (i > start) chunk.push_back(' ');
      chunk += words[i];
    }
    chunks.push_back(std::move(chunk));
    if (end == words.size()) break;
  }
  return chunks;
}

double bm25_idf(std::size_t n_passages, std::size_t doc_freq) {
  const double n = static_cast<double>(n_passages);
  const double df = static_cast<double>(doc_freq);
  return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

PassageIndex PassageIndex::build(std::span<const CorpusDocument> corpus, ChunkParams params) {
  params.validate();
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "corpus has no documents");

  PassageIndex index;
  index.params_ = params;
  std::unordered_set<std::string> titles;
  for (const auto& doc : corpus) {
    if (trim(doc.title).empty())
      throw Error(ErrorCode::InvalidArgument, "corpus document with empty title");
    if (!titles.insert(doc.title).second)
      throw Error(ErrorCode::DuplicateTitle, "duplicate corpus title: " + doc.title);
    std::vector<std::string> chunks;
    try {
      chunks = chunk_document(doc.text, params.chunk_size, params.overlap);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::EmptyDocument)
        throw Error(ErrorCode::EmptyDocument, "corpus document '" + doc.title + "' is empty");
      throw;
    }
    for (std::size_t i = 0; i < chunks.size(); ++i)
      index.passages_.push_back(Passage{doc.title, i, std::move(chunks[i]), 0});
  }
  index.finalize();
  return index;
}

void PassageIndex::finalize() {
  postings_.clear();
  title_ranges_.clear();
  titles_by_lower_.clear();
  titles_by_term_.clear();
  total_length_ = 0;

  for (std::size_t p = 0; p < passages_.size(); ++p) {
    auto& passage = passages_[p];
    auto terms = tokenize_terms(passage.text);
    passage.length = terms.size();
    total_length_ += terms.size();

    std::map<std::string, std::uint32_t> tf;
    for (auto& t : terms) ++tf[t];
    for (auto& [term, count] : tf)
      postings_[term].push_back(Posting{static_cast<std::uint32_t>(p), count});

    auto [it, inserted] = title_ranges_.try_emplace(passage.title, Range{p, p + 1});
    if (!inserted) {
      if (it->second.end != p)
        throw Error(ErrorCode::MalformedRecord, "passages of '" + passage.title + "' are not contiguous");
      it->second.end = p + 1;
    }
  }

  for (const auto& [title, range] : title_ranges_) {
    titles_by_lower_[to_lower_ascii(title)].push_back(title);
    std::set<std::string> terms;
    for (auto& t : tokenize_terms(title)) terms.insert(t);
    for (const auto& t : terms) titles_by_term_[t].push_back(title);
  }
  for (auto& [_, list] : titles_by_lower_) std::sort(list.begin(), list.end());
  for (auto& [_, list] : titles_by_term_) std::sort(list.begin(), list.end());
}

std::size_t PassageIndex::document_frequency(const std::string& term) const {
  auto it = postings_.find(term);
  return it == postings_.end() ? 0 : it->second.size();
}

double PassageIndex::average_length() const {
  if (passages_.empty()) return 0.0;
  return static_cast<double>(total_length_) / static_cast<double>(passages_.size());
}

std::string PassageIndex::serialize() const {
  json passages = json::array();
  for (const auto& p : passages_) passages.push_back(json::array({p.title, p.chunk_index, p.text}));
  json doc_freq = json::object();
  for (const auto& [term, list] : postings_) doc_freq[term] = list.size();
  json j{{"format", "medfact-passage-index"},
         {"format_version", kFormatVersion},
         {"chunk_size", params_.chunk_size},
         {"overlap", params_.overlap},
         {"passage_count", passages_.size()},
         {"total_length", total_length_},
         {"doc_freq", std::move(doc_freq)},
         {"passages", std::move(passages)}};
  return j.dump();
}

PassageIndex PassageIndex::deserialize(std::string_view bytes) {
  json j;
  try {
    j = json::parse(bytes);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("passage index is not valid JSON: ") + e.what());
  }
  if (j.value("format", std::string{}) != "medfact-passage-index")
    throw Error(ErrorCode::UnknownFormat, "not a passage index file");
  auto version = j.value("format_version", -1);
  if (version != kFormatVersion)
    throw Error(ErrorCode::UnsupportedVersion,
                "passage index format version " + std::to_string(version) + " is not supported");

  try {
    PassageIndex index;
    index.params_ = ChunkParams{j.at("chunk_size").get<std::size_t>(), j.at("overlap").get<std::size_t>()};
    index.params_.validate();
    for (const auto& p : j.at("passages"))
      index.passages_.push_back(
          Passage{p.at(0).get<std::string>(), p.at(1).get<std::size_t>(), p.at(2).get<std::string>(), 0});
    index.finalize();

    bool consistent = j.at("passage_count").get<std::size_t>() == index.passages_.size() &&
                      j.at("total_length").get<std::uint64_t>() == index.total_length_ &&
                      j.at("doc_freq").size() == index.postings_.size();
    if (consistent) {
      for (const auto& [term, df] : j.at("doc_freq").items()) {
        if (index.document_frequency(term) != df.get<std::size_t>()) {
          consistent = false;
          break;
        }
      }
    }
    if (!consistent)
      throw Error(ErrorCode::MalformedRecord, "passage index statistics do not match its passages");
    return index;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("malformed passage index: ") + e.what());
  }
}

PassageIndex PassageIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open index " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

void PassageIndex::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write index " + path.string());
  out << serialize();
}

std::optional<std::string> PassageIndex::resolve_topic(std::string_view topic) const {
  auto cleaned = trim(topic);
  if (cleaned.empty()) return std::nullopt;
  if (title_ranges_.contains(std::string(cleaned))) return std::string(cleaned);

  if (auto it = titles_by_lower_.find(to_lower_ascii(cleaned)); it != titles_by_lower_.end())
    return it->second.front();

  std::set<std::string> wanted;
  for (auto& t : tokenize_terms(cleaned)) wanted.insert(t);
  if (wanted.empty()) return std::nullopt;

  std::set<std::string> candidates;
  for (const auto& t : wanted)
    if (auto it = titles_by_term_.find(t); it != titles_by_term_.end())
      candidates.insert(it->second.begin(), it->second.end());

  std::optional<std::string> best;
  double best_score = 0.0;
  for (const auto& title : candidates) {  // std::set iterates in ascending order
    std::set<std::string> have;
    for (auto& t : tokenize_terms(title)) have.insert(t);
    std::size_t shared = 0;
    for (const auto& t : wanted) shared += have.count(t);
    double jaccard = static_cast<double>(shared) /
                     static_cast<double>(wanted.size() + have.size() - shared);
    if (jaccard > best_score) {
      best_score = jaccard;
      best = title;
    }
  }
  if (best && best_score >= 0.5) return best;
  return std::nullopt;
}

std::vector<EvidencePassage> PassageIndex::retrieve(const std::optional<std::string>& topic,
                                                    std::string_view query, std::size_t k) const {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  auto terms = tokenize_terms(query);
  if (terms.empty()) throw Error(ErrorCode::EmptyQuery, "query has no terms");

  std::optional<Range> restrict_to;
  if (topic) {
    if (auto title = resolve_topic(*topic)) restrict_to = title_ranges_.at(*title);
  }

  const std::size_t n = passages_.size();
  const double avg_len = average_length();
  std::unordered_map<std::uint32_t, double> scores;
  for (const auto& term : terms) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    const double idf = bm25_idf(n, it->second.size());
    for (const auto& posting : it->second) {
      if (restrict_to && (posting.passage < restrict_to->begin || posting.passage >= restrict_to->end))
        continue;
      const double tf = posting.tf;
      const double len = static_cast<double>(passages_[posting.passage].length);
      scores[posting.passage] +=
          idf * (tf * (bm25_.k1 + 1.0)) / (tf + bm25_.k1 * (1.0 - bm25_.b + bm25_.b * len / avg_len));
    }
  }

  std::vector<std::pair<double, std::uint32_t>> ranked;
  ranked.reserve(scores.size());
  for (const auto& [passage, score] : scores) ranked.emplace_back(score, passage);

  auto before = [this](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    const auto& pa = passages_[a.second];
    const auto& pb = passages_[b.second];
    if (pa.title != pb.title) return pa.title < pb.title;
    return pa.chunk_index < pb.chunk_index;
  };
  const std::size_t take = std::min(k, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(take), ranked.end(), before);

  std::vector<EvidencePassage> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    const auto& p = passages_[ranked[i].second];
    out.push_back(EvidencePassage{p.title, p.chunk_index, p.text, ranked[i].first, i + 1});
  }
  return out;
}

std::string clean_topic_response(std::string_view response) {
  for (auto raw : split_lines(response)) {
    std::string line(trim(raw));
    if (line.empty()) continue;
    static const std::string_view kQuotes[] = {"\"", "'", "`", "\xE2\x80\x9C", "\xE2\x80\x9D",
                                               "\xE2\x80\x98", "\xE2\x80\x99"};
    bool stripped = true;
    while (stripped && !line.empty()) {
      stripped = false;
      for (auto q : kQuotes) {
        if (line.size() >= q.size() && line.compare(0, q.size(), q) == 0) {
          line.erase(0, q.size());
          stripped = true;
        }
        if (line.size() >= q.size() && line.compare(line.size() - q.size(), q.size(), q) == 0) {
          line.erase(line.size() - q.size());
          stripped = true;
        }
      }
      line = std::string(trim(line));
    }
    if (!line.empty()) return line;
  }
  throw Error(ErrorCode::EmptyTopic, "topic generator returned a blank answer");
}

std::string generate_topic(const GenerationRecord& record, ChatBackend& judge) {
  std::string prompt(resource("topic_v1.txt"));
  const bool qa = task_has_question(record.task) && record.question;
  auto fill = [&prompt](std::string_view slot, std::string_view value) {
    auto pos = prompt.find(slot);
    if (pos != std::string::npos) prompt.replace(pos, slot.size(), value);
  };
  // {content} first so that text inside the subject cannot be re-substituted.
  fill("{content}", qa ? *record.question : record.output_text);
  fill("{subject}", qa ? "question" : "text");
  ChatRequest request{"", prompt, DecodeParams{0.0, 32}};
  return clean_topic_response(judge.complete(request));
}

std::vector<EvidencePassage> grounding_passages(const GenerationRecord& record,
                                                const ChunkParams& params) {
  if (!record.source_document || trim(*record.source_document).empty())
    throw Error(ErrorCode::MissingGrounding, "record " + record.id + " has no grounding document");
  auto chunks = chunk_document(*record.source_document, params.chunk_size, params.overlap);
  std::vector<EvidencePassage> out;
  out.reserve(chunks.size());
  for (std::size_t i = 0; i < chunks.size(); ++i)
    out.push_back(EvidencePassage{std::string(kGroundingTitle), i, std::move(chunks[i]), std::nullopt, i + 1});
  return out;
}

std::vector<CorpusDocument> read_corpus_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open corpus " + path);
  std::vector<CorpusDocument> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto j = json::parse(line);
      docs.push_back(CorpusDocument{j.at("title").get<std::string>(), j.at("text").get<std::string>()});
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedRecord, path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return docs;
}

void write_corpus_jsonl(const std::string& path, std::span<const CorpusDocument> corpus) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write corpus " + path);
  for (const auto& d : corpus) out << json{{"title", d.title}, {"text", d.text}}.dump() << '\n';
}

DumpFormat parse_dump_format(std::string_view name) {
  if (name == "jsonl") return DumpFormat::Jsonl;
  if (name == "factscore-sqlite" || name == "sqlite") return DumpFormat::FactScoreSqlite;
  throw Error(ErrorCode::UnknownFormat, "unknown dump format " + std::string(name));
}

namespace {

std::string strip_passage_markers(std::string text) {
  for (std::string_view marker : {"</s>", "<s>"}) {
    for (auto pos = text.find(marker); pos != std::string::npos; pos = text.find(marker, pos))
      text.replace(pos, marker.size(), " ");
  }
  return normalize_whitespace(text);
}

std::vector<CorpusDocument> read_factscore_sqlite(const std::string& path) {
  sqlite3* db = nullptr;
  if (sqlite3_open_v2(path.c_str(), &db, SQLITE_OPEN_READONLY, nullptr) != SQLITE_OK) {
    std::string msg = db ? sqlite3_errmsg(db) : "out of memory";
    sqlite3_close(db);
    throw Error(ErrorCode::IoError, "cannot open sqlite dump " + path + ": " + msg);
  }
  std::unique_ptr<sqlite3, decltype(&sqlite3_close)> guard(db, &sqlite3_close);
  sqlite3_stmt* raw = nullptr;
  if (sqlite3_prepare_v2(db, "SELECT title, text FROM documents", -1, &raw, nullptr) != SQLITE_OK)
    throw Error(ErrorCode::MalformedRecord, "sqlite dump lacks documents(title, text): " +
                                                std::string(sqlite3_errmsg(db)));
  std::unique_ptr<sqlite3_stmt, decltype(&sqlite3_finalize)> stmt(raw, &sqlite3_finalize);

  std::vector<CorpusDocument> docs;
  int rc;
  while ((rc = sqlite3_step(stmt.get())) == SQLITE_ROW) {
    auto col = [&](int i) {
      auto p = sqlite3_column_text(stmt.get(), i);
      return p ? std::string(reinterpret_cast<const char*>(p)) : std::string{};
    };
    docs.push_back(CorpusDocument{col(0), strip_passage_markers(col(1))});
  }
  if (rc != SQLITE_DONE)
    throw Error(ErrorCode::IoError, "sqlite read failed: " + std::string(sqlite3_errmsg(db)));
  return docs;
}

}  // namespace

std::vector<CorpusDocument> ingest_dump(const std::string& path, DumpFormat format) {
  auto raw = format == DumpFormat::Jsonl ? read_corpus_jsonl(path) : read_factscore_sqlite(path);
  std::vector<CorpusDocument> docs;
  std::unordered_set<std::string> seen;
  for (auto& d : raw) {
    d.title = std::string(trim(d.title));
    if (d.title.empty() || trim(d.text).empty()) continue;
    if (!seen.insert(d.title).second) continue;
    docs.push_back(std::move(d));
  }
  return docs;
}

}  // namespace medfact
