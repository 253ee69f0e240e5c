#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "medfact/backend.hpp"
#include "medfact/core.hpp"

namespace medfact {

inline constexpr std::string_view kGenerationPlaceholder = "{generation}";

// The versioned default template (resources/prompts/decompose_v1.txt).
std::string_view default_decompose_template();

struct DecomposeConfig {
  std::size_t max_facts = 64;
  std::string prompt_template = std::string(default_decompose_template());
  DecodeParams params{0.0, 2048};

  // Throws InvalidArgument unless max_facts >= 1 and the template holds
  // exactly one {generation} placeholder.
  void validate() const;
};

// Trimmed content of every line starting with "-", "*" or "N." in order.
std::vector<std::string> parse_bullets(std::string_view response);

// One judge call per generation. Facts are the parsed bullets, whitespace
// normalized, deduplicated case-insensitively (first occurrence wins) and cut
// to max_facts.
// Errors: EmptyGeneration, JudgeUnparseable, BackendFailure.
std::vector<AtomicFact> decompose(std::string_view output_text, std::string_view parent_id,
                                  const DecomposeConfig& config, ChatBackend& judge);

std::string render_decompose_prompt(std::string_view output_text, const DecomposeConfig& config);

}  // namespace medfact
