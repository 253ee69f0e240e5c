#include "medfact/verify.hpp"

#include <cmath>

#include "medfact/error.hpp"
#include "medfact/resources.hpp"
#include "medfact/text.hpp"

namespace medfact {

std::string_view to_string(NliLabel label) {
  switch (label) {
    case NliLabel::Entailment: return "entailment";
    case NliLabel::Neutral: return "neutral";
    case NliLabel::Contradiction: return "contradiction";
  }
  return "?";
}

NliResult make_nli_result(const NliProbs& probs) {
  double sum = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0 || p > 1.0)
      throw Error(ErrorCode::BackendFailure, "NLI probability outside [0,1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-4)
    throw Error(ErrorCode::BackendFailure, "NLI probabilities do not sum to 1");

  const auto [e, n, c] = probs;
  NliLabel label;
  if (e >= c && e >= n) label = NliLabel::Entailment;
  else if (c >= n) label = NliLabel::Contradiction;
  else label = NliLabel::Neutral;
  return NliResult{probs, label};
}

NliDirection parse_nli_direction(std::string_view name) {
  if (name == "evidence-premise" || name == "evidence_premise") return NliDirection::EvidencePremise;
  if (name == "fact-premise" || name == "fact_premise") return NliDirection::FactPremise;
  throw Error(ErrorCode::ConfigError, "unknown NLI direction " + std::string(name));
}

std::string_view to_string(NliDirection direction) {
  return direction == NliDirection::EvidencePremise ? "evidence-premise" : "fact-premise";
}

NliResult nli_check(std::span<const EvidencePassage> passages, const AtomicFact& fact,
                    NliBackend& backend, NliDirection direction) {
  if (passages.empty()) throw Error(ErrorCode::InvalidArgument, "nli_check needs at least one passage");

  std::optional<NliResult> first_entailment, first_contradiction, first_neutral;
  for (const auto& passage : passages) {
    auto probs = direction == NliDirection::EvidencePremise
                     ? backend.classify(passage.text, fact.text)
                     : backend.classify(fact.text, passage.text);
    auto result = make_nli_result(probs);
    auto& slot = result.label == NliLabel::Entailment      ? first_entailment
                 : result.label == NliLabel::Contradiction ? first_contradiction
                                                           : first_neutral;
    if (!slot) slot = result;
  }
  if (first_entailment) return *first_entailment;
  if (first_contradiction) return *first_contradiction;
  return *first_neutral;
}

VerdictLabel map_nli(const NliResult& result) {
  switch (result.label) {
    case NliLabel::Entailment: return VerdictLabel::Supported;
    case NliLabel::Contradiction: return VerdictLabel::Contradicted;
    case NliLabel::Neutral: return VerdictLabel::Neutral;
  }
  return VerdictLabel::Neutral;
}

std::string build_cot_prompt(const AtomicFact& fact, std::span<const EvidencePassage> passages,
                             const std::optional<std::string>& topic) {
  std::string blocks;
  if (topic && !topic->empty())
    blocks += "Answer the question about " + *topic + " based on the given context.\n\n";
  else
    blocks += "Answer the question based on the given context.\n\n";
  for (const auto& p : passages) blocks += "Title: " + p.source_title + "\nText: " + p.text + "\n\n";

  std::string prompt(resource("cot_v1.txt"));
  // {fact} is substituted first; {passages} sits before it in the template, so
  // neither substitution can see text inserted by the other.
  auto fact_pos = prompt.find("{fact}");
  prompt.replace(fact_pos, 6, fact.text);
  auto passages_pos = prompt.find("{passages}");
  prompt.replace(passages_pos, 10, blocks);
  return prompt;
}

CotResult parse_cot_response(std::string_view raw) {
  CotResult result{CotAnswer::Unparseable, std::string(raw)};
  std::string_view last;
  for (auto line : split_lines(raw))
    if (!trim(line).empty()) last = line;
  if (last.empty()) return result;

  bool saw_true = false, saw_false = false;
  for (const auto& token : tokenize_terms(last)) {
    saw_true |= token == "true";
    saw_false |= token == "false";
  }
  if (saw_true != saw_false) result.answer = saw_true ? CotAnswer::True : CotAnswer::False;
  return result;
}

CotResult cot_check(const AtomicFact& fact, std::span<const EvidencePassage> passages,
                    const std::optional<std::string>& topic, ChatBackend& judge,
                    const DecodeParams& params) {
  if (passages.empty()) throw Error(ErrorCode::InvalidArgument, "cot_check needs at least one passage");
  ChatRequest request{"", build_cot_prompt(fact, passages, topic), params};
  return parse_cot_response(judge.complete(request));
}

MappedVerdict map_cot(const CotResult& result) {
  switch (result.answer) {
    case CotAnswer::True: return {VerdictLabel::Supported, std::nullopt};
    case CotAnswer::False: return {VerdictLabel::Contradicted, std::nullopt};
    case CotAnswer::Unparseable: return {VerdictLabel::Contradicted, "cot_unparseable"};
  }
  return {VerdictLabel::Contradicted, "cot_unparseable"};
}

void check_chunk_budget(const NliBackend& backend, std::size_t chunk_size) {
  auto budget = backend.input_budget_words();
  if (budget && *budget < 2 * chunk_size)
    throw Error(ErrorCode::ConfigError,
                "NLI input budget of " + std::to_string(*budget) + " words is below twice the chunk size (" +
                    std::to_string(chunk_size) + ")");
}

}  // namespace medfact
