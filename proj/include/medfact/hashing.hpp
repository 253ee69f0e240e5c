#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

namespace medfact {

std::string sha256_hex(std::string_view data);

// SHA-256 over a length-prefixed encoding of each field, so that field
// boundaries are unambiguous ("ab","c" and "a","bc" hash differently).
std::string sha256_fields(std::initializer_list<std::string_view> fields);

}  // namespace medfact
