#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace medfact {

// SHA-256 over (backend id, model id, payload, decode params). Throws
// EmptyPayload when payload is empty.
std::string cache_key(std::string_view backend_id, std::string_view model_id,
                      std::string_view payload, std::string_view params);

struct CacheEntry {
  std::string key;
  std::string value;
  std::filesystem::file_time_type created_at;
};

// One file per key under a two-hex-character shard directory:
//   <root>/ab/abcdef....
// Values are stored verbatim. An entry is created atomically and never
// overwritten, so concurrent writers of any keys cannot corrupt the store.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path root);

  std::optional<std::string> get(std::string_view key) const;
  std::optional<CacheEntry> entry(std::string_view key) const;

  // Returns false when the key already existed (the stored value is kept).
  bool put(std::string_view key, std::string_view value);

  std::filesystem::path path_for(std::string_view key) const;
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
};

}  // namespace medfact
