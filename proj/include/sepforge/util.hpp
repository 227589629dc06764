// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Small shared helpers: hashing, base64, atomic file writes, text utilities,
// and a bounded parallel-for.

#ifndef SEPFORGE_UTIL_HPP_
#define SEPFORGE_UTIL_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace sepforge::util {

// --- hashing (SHA-256 via OpenSSL) ---

std::string sha256_hex(std::string_view data);
std::string sha256_file_hex(const std::filesystem::path& path);

// Incremental digest for fingerprints built from many parts. Each part is
// length-prefixed so ("ab","c") and ("a","bc") differ.
class Fingerprint {
 public:
  Fingerprint();
  ~Fingerprint();
  Fingerprint(const Fingerprint&) = delete;
  Fingerprint& operator=(const Fingerprint&) = delete;

  Fingerprint& add(std::string_view part);
  Fingerprint& add_file(const std::filesystem::path& path);
  std::string hex();

 private:
  void* ctx_;
};

// First 8 bytes of SHA-256(key || 0x1f || part0 || 0x1f || part1 ...).
std::uint64_t keyed_hash64(std::string_view key,
                           const std::vector<std::string>& parts);

// --- base64 (RFC 4648, standard alphabet, padded) ---

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

// --- files ---

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);
void write_atomic(const std::filesystem::path& path, std::string_view content);
void write_atomic(const std::filesystem::path& path,
                  const std::vector<std::uint8_t>& content);

// --- text ---

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
// Lines of a document with trailing '\r' stripped.
std::vector<std::string> lines(std::string_view text);
std::string sanitize_for_path(std::string_view s);

// --- parallelism ---

// Runs fn(i) for i in [0, n) on up to `workers` threads. Rethrows the first
// exception (lowest index) after all workers finish.
void parallel_for(std::size_t n, unsigned workers,
                  const std::function<void(std::size_t)>& fn);

unsigned default_workers();

}  // namespace sepforge::util

#endif  // SEPFORGE_UTIL_HPP_
