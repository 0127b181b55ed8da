#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <httplib.h>

namespace iotnode::testing {

inline std::filesystem::path source_path(std::string_view rel) {
  return std::filesystem::path(IOTNODE_SOURCE_DIR) / rel;
}

inline std::filesystem::path fixture_path() { return source_path("fixtures/july2016.csv"); }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(std::string_view tag = "iotnode") {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            (std::string(tag) + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

struct HttpResult {
  int status = 0;  // 0 when the request failed
  std::string body;
  httplib::Headers headers;
};

inline HttpResult http_get(std::uint16_t port, const std::string& target,
                           std::chrono::milliseconds timeout = std::chrono::seconds(5)) {
  httplib::Client client("127.0.0.1", port);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  auto res = client.Get(target);
  if (!res) return {};
  return {res->status, res->body, res->headers};
}

/// FNV-1a over every regular file below `dir`, names included.
inline std::uint64_t hash_tree(const std::filesystem::path& dir) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::string_view bytes) {
    for (unsigned char c : bytes) {
      h ^= c;
      h *= 1099511628211ULL;
    }
  };
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    mix(f.filename().string());
    mix(read_file(f));
  }
  return h;
}

}  // namespace iotnode::testing
