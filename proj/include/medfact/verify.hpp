#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "medfact/backend.hpp"
#include "medfact/core.hpp"
#include "medfact/evidence.hpp"

namespace medfact {

enum class NliLabel { Entailment, Neutral, Contradiction };

std::string_view to_string(NliLabel label);

struct NliResult {
  NliProbs probs{};  // entailment, neutral, contradiction
  NliLabel label = NliLabel::Neutral;
};

// Validates probabilities (each in [0,1], sum within 1e-4 of 1) and takes the
// argmax with ties resolved entailment > contradiction > neutral. Throws
// BackendFailure for invalid backend output.
NliResult make_nli_result(const NliProbs& probs);

// Which side of the NLI pair the evidence goes on.
enum class NliDirection {
  EvidencePremise,  // premise = passage, hypothesis = fact
  FactPremise,      // premise = fact, hypothesis = passage
};

NliDirection parse_nli_direction(std::string_view name);
std::string_view to_string(NliDirection direction);

// One backend call per passage. Entailment if any passage entails, else
// Contradiction if any contradicts, else Neutral. The returned probabilities
// are those of the first passage (in rank order) carrying the aggregate label.
// Throws InvalidArgument for an empty passage list.
NliResult nli_check(std::span<const EvidencePassage> passages, const AtomicFact& fact,
                    NliBackend& backend, NliDirection direction = NliDirection::EvidencePremise);

VerdictLabel map_nli(const NliResult& result);

enum class CotAnswer { True, False, Unparseable };

struct CotResult {
  CotAnswer answer = CotAnswer::Unparseable;
  std::string raw;
};

// Title/Text blocks in rank order, the step-by-step instruction, then
// "Input: {fact} True or False?". Deterministic.
std::string build_cot_prompt(const AtomicFact& fact, std::span<const EvidencePassage> passages,
                             const std::optional<std::string>& topic);

// Reads the final non-empty line: exactly one of the standalone tokens
// "true"/"false" (case-insensitive) decides; none or both is Unparseable.
CotResult parse_cot_response(std::string_view raw);

inline const DecodeParams kJudgeParams{0.0, 512};

CotResult cot_check(const AtomicFact& fact, std::span<const EvidencePassage> passages,
                    const std::optional<std::string>& topic, ChatBackend& judge,
                    const DecodeParams& params = kJudgeParams);

struct MappedVerdict {
  VerdictLabel label;
  std::optional<std::string> diagnostic;
};

// True -> Supported, False -> Contradicted, Unparseable -> Contradicted with
// the "cot_unparseable" diagnostic.
MappedVerdict map_cot(const CotResult& result);

// Throws ConfigError when a chunk of chunk_size words plus a fact could
// exceed the NLI backend's declared input budget (budget < 2 * chunk_size).
void check_chunk_budget(const NliBackend& backend, std::size_t chunk_size);

}  // namespace medfact
