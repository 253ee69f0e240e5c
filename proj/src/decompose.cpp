#include "medfact/decompose.hpp"

#include <cctype>
#include <unordered_set>

#include "medfact/error.hpp"
#include "medfact/resources.hpp"
#include "medfact/text.hpp"

namespace medfact {

std::string_view default_decompose_template() { return resource("decompose_v1.txt"); }

namespace {

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size()))
    ++n;
  return n;
}

}  // namespace

void DecomposeConfig::validate() const {
  if (max_facts < 1) throw Error(ErrorCode::InvalidArgument, "max_facts must be >= 1");
  if (count_occurrences(prompt_template, kGenerationPlaceholder) != 1)
    throw Error(ErrorCode::InvalidArgument,
                "decomposition template must contain exactly one {generation} placeholder");
}

std::vector<std::string> parse_bullets(std::string_view response) {
  std::vector<std::string> items;
  for (auto raw : split_lines(response)) {
    auto line = trim(raw);
    if (line.empty()) continue;
    std::string_view content;
    if (line.front() == '-' || line.front() == '*') {
      content = line.substr(1);
    } else if (std::isdigit(static_cast<unsigned char>(line.front()))) {
      std::size_t i = 0;
      while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
      if (i >= line.size() || line[i] != '.') continue;
      content = line.substr(i + 1);
    } else {
      continue;
    }
    content = trim(content);
    if (!content.empty()) items.emplace_back(content);
  }
  return items;
}

std::string render_decompose_prompt(std::string_view output_text, const DecomposeConfig& config) {
  std::string prompt = config.prompt_template;
  auto pos = prompt.find(kGenerationPlaceholder);
  prompt.replace(pos, kGenerationPlaceholder.size(), output_text);
  return prompt;
}

std::vector<AtomicFact> decompose(std::string_view output_text, std::string_view parent_id,
                                  const DecomposeConfig& config, ChatBackend& judge) {
  config.validate();
  auto text = normalize_whitespace(output_text);
  if (text.empty()) throw Error(ErrorCode::EmptyGeneration, "generation text is empty");

  ChatRequest request{"", render_decompose_prompt(text, config), config.params};
  auto response = judge.complete(request);
  auto bullets = parse_bullets(response);
  if (bullets.empty())
    throw Error(ErrorCode::JudgeUnparseable, "decomposition response contains no bullet lines");

  std::vector<AtomicFact> facts;
  std::unordered_set<std::string> seen;
  for (auto& bullet : bullets) {
    if (facts.size() >= config.max_facts) break;
    auto normalized = normalize_whitespace(bullet);
    if (!seen.insert(to_lower_ascii(normalized)).second) continue;
    AtomicFact fact;
    fact.parent_id = std::string(parent_id);
    fact.index = facts.size();
    fact.fact_id = fact.parent_id + "#" + std::to_string(fact.index);
    fact.text = std::move(normalized);
    facts.push_back(std::move(fact));
  }
  return facts;
}

}  // namespace medfact
