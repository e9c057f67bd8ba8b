#pragma once

// Asymmetric keys, digests and the passphrase-protected key store.
//
// Algorithms are named by string tags inside every envelope so that a
// stronger pair can be added without a format change:
//   digests:    "sha256" (default), "sha512"
//   signatures: "ed25519" (default), "ed448"

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <utility>

#include "aida/common.hpp"

namespace aida::crypto {

enum class DigestAlg { Sha256, Sha512 };
enum class SigAlg { Ed25519, Ed448 };

std::string_view to_string(DigestAlg alg);
std::string_view to_string(SigAlg alg);
// Throw Error(UnsupportedAlgorithm) on an unknown tag.
DigestAlg digest_alg_from(std::string_view tag);
SigAlg sig_alg_from(std::string_view tag);

std::size_t digest_size(DigestAlg alg);
Bytes digest(DigestAlg alg, std::string_view data);
std::string sha256_hex(std::string_view data);

struct PublicKey {
  SigAlg alg = SigAlg::Ed25519;
  Bytes raw;

  bool verify(std::string_view message, const Bytes& signature) const;
  // SHA-256 of the raw key bytes, hex. Used as role key and user-map key.
  std::string key_id() const;

  bool operator==(const PublicKey&) const = default;
};

class PrivateKey {
 public:
  PrivateKey();
  ~PrivateKey();
  PrivateKey(PrivateKey&&) noexcept;
  PrivateKey& operator=(PrivateKey&&) noexcept;
  PrivateKey(const PrivateKey&) = delete;
  PrivateKey& operator=(const PrivateKey&) = delete;

  static PrivateKey generate(SigAlg alg);
  static PrivateKey from_raw(SigAlg alg, const Bytes& raw);

  SigAlg alg() const { return alg_; }
  bool empty() const { return pkey_ == nullptr; }
  Bytes sign(std::string_view message) const;
  PublicKey public_key() const;
  // Caller is responsible for wiping the returned bytes.
  Bytes raw_private() const;

 private:
  SigAlg alg_ = SigAlg::Ed25519;
  void* pkey_ = nullptr;  // EVP_PKEY*
};

// keygen("ed25519") / keygen("ed448"). Throws Error(UnsupportedAlgorithm).
std::pair<PrivateKey, PublicKey> keygen(std::string_view alg_tag = "ed25519");

// Key store file. See docs/formats.md for the byte layout.
struct KeyStoreOptions {
  std::uint32_t kdf_iterations = 100000;
};

std::string seal_private_key(const PrivateKey& key, std::string_view passphrase, const KeyStoreOptions& opts = {});
PrivateKey open_private_key(std::string_view sealed, std::string_view passphrase);

void save_key_store(const std::filesystem::path& path, const PrivateKey& key, std::string_view passphrase,
                    const KeyStoreOptions& opts = {});
// Throws Error(BadKeyStore) on a damaged file, Error(BadPassphrase) when the
// passphrase does not open it.
PrivateKey load_key_store(const std::filesystem::path& path, std::string_view passphrase);

Bytes random_bytes(std::size_t n);

}  // namespace aida::crypto
