#pragma once

#include <string_view>
#include <vector>

namespace medfact {

// Prompt templates compiled in from resources/prompts/. Throws
// std::out_of_range for unknown names.
std::string_view resource(std::string_view name);
std::vector<std::string_view> resource_names();

}  // namespace medfact
