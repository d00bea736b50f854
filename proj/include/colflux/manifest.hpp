#pragma once

// Run manifests: what a command was asked to do, what it read and what it
// wrote, with git-compatible blob digests so artifacts can be checked later.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <openssl/evp.h>

#include "colflux/errors.hpp"
#include "colflux/io.hpp"

namespace colflux {

inline std::string sha1_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), md, &len) != 1) {
    throw Error("SHA-1 digest failed");
  }
  std::string hex;
  hex.reserve(2 * len);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

/// Same digest as `git hash-object`.
inline std::string git_blob_sha1(std::string_view bytes) {
  std::string framed = "blob " + std::to_string(bytes.size());
  framed.push_back('\0');
  framed.append(bytes);
  return sha1_hex(framed);
}

inline std::string file_digest(const std::string& path) { return git_blob_sha1(read_file(path)); }

struct FileDigest {
  std::string path;
  std::string sha1;
};

struct RunManifest {
  std::string command;
  Json config = Json::object();
  std::vector<std::pair<std::string, std::uint64_t>> seeds;
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> artifacts;
  double wall_seconds = 0.0;

  void add_input(const std::string& path) { inputs.push_back({path, file_digest(path)}); }
  void add_artifact(const std::string& path) { artifacts.push_back({path, file_digest(path)}); }

  /// Digest of everything that determines the artifacts: command, config,
  /// seeds and input contents. Paths and wall time are left out.
  [[nodiscard]] std::string digest() const {
    Json in = Json::array();
    for (const auto& f : inputs) in.push_back(f.sha1);
    return git_blob_sha1(Json{{"command", command}, {"config", config}, {"seeds", seeds_json()}, {"inputs", in}}.dump());
  }

  [[nodiscard]] Json to_json() const {
    const auto list = [](const std::vector<FileDigest>& v) {
      Json a = Json::array();
      for (const auto& f : v) a.push_back(Json{{"path", f.path}, {"sha1", f.sha1}});
      return a;
    };
    return Json{{"command", command},         {"digest", digest()},           {"config", config},
                {"seeds", seeds_json()},      {"inputs", list(inputs)},       {"artifacts", list(artifacts)},
                {"wall_seconds", wall_seconds}};
  }

  void write(const std::string& path) const { write_file(path, dump_json(to_json())); }

 private:
  [[nodiscard]] Json seeds_json() const {
    Json s = Json::object();
    for (const auto& [name, value] : seeds) s[name] = value;
    return s;
  }
};

class Stopwatch {
 public:
  [[nodiscard]] double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  [[nodiscard]] double millis() const { return 1000.0 * seconds(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace colflux
