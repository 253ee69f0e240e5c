#include "medfact/cache.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include <unistd.h>

#include "medfact/error.hpp"
#include "medfact/hashing.hpp"

namespace medfact {

namespace fs = std::filesystem;

std::string cache_key(std::string_view backend_id, std::string_view model_id,
                      std::string_view payload, std::string_view params) {
  if (payload.empty()) throw Error(ErrorCode::EmptyPayload, "cache key payload is empty");
  return sha256_fields({backend_id, model_id, payload, params});
}

ResponseCache::ResponseCache(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create cache dir " + root_.string() + ": " + ec.message());
}

fs::path ResponseCache::path_for(std::string_view key) const {
  if (key.size() < 3 || key.find_first_of("/\\.") != std::string_view::npos)
    throw Error(ErrorCode::InvalidArgument, "malformed cache key");
  return root_ / std::string(key.substr(0, 2)) / std::string(key);
}

std::optional<std::string> ResponseCache::get(std::string_view key) const {
  std::ifstream in(path_for(key), std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::optional<CacheEntry> ResponseCache::entry(std::string_view key) const {
  auto value = get(key);
  if (!value) return std::nullopt;
  std::error_code ec;
  auto when = fs::last_write_time(path_for(key), ec);
  return CacheEntry{std::string(key), std::move(*value), when};
}

bool ResponseCache::put(std::string_view key, std::string_view value) {
  static std::atomic<unsigned long> counter{0};
  auto target = path_for(key);
  std::error_code ec;
  fs::create_directories(target.parent_path(), ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create shard " + target.parent_path().string());
  if (fs::exists(target)) return false;

  std::ostringstream tmp_name;
  tmp_name << target.filename().string() << ".tmp." << ::getpid() << '.'
           << std::hash<std::thread::id>{}(std::this_thread::get_id()) << '.' << counter++;
  auto tmp = target.parent_path() / tmp_name.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(value.data(), static_cast<std::streamsize>(value.size()));
    if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp.string());
  }
  // link() fails with EEXIST if another writer got there first.
  bool created = ::link(tmp.c_str(), target.c_str()) == 0;
  fs::remove(tmp, ec);
  return created;
}

}  // namespace medfact
