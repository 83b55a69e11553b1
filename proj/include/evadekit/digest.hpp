#pragma once

#include <memory>
#include <string>
#include <string_view>

namespace evadekit {

// Incremental SHA-256 (OpenSSL EVP); hex digests are lowercase.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::string_view bytes);
  std::string hex_digest();
  // Digest of the bytes so far; the hash can keep absorbing input.
  std::string peek_hex() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::string& path);

}  // namespace evadekit
