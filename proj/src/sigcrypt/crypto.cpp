#include "aida/crypto.hpp"

#include <cstring>
#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/rand.h>

#include "aida/error.hpp"

namespace aida::crypto {
namespace {

// Key store layout (all integers big-endian):
//   magic "AIDAKEY\0" | u16 version=1 | u8 sig alg (1=ed25519, 2=ed448)
//   | u32 kdf iterations | 16 B salt | 12 B nonce | u32 ciphertext length
//   | ciphertext | 16 B GCM tag
// Everything before the ciphertext is authenticated as AAD.
constexpr char kMagic[8] = {'A', 'I', 'D', 'A', 'K', 'E', 'Y', '\0'};
constexpr std::uint16_t kVersion = 1;
constexpr std::size_t kSaltLen = 16;
constexpr std::size_t kNonceLen = 12;
constexpr std::size_t kTagLen = 16;
constexpr std::size_t kHeaderLen = 8 + 2 + 1 + 4 + kSaltLen + kNonceLen + 4;

int evp_id(SigAlg alg) { return alg == SigAlg::Ed25519 ? EVP_PKEY_ED25519 : EVP_PKEY_ED448; }

EVP_PKEY* as_pkey(void* p) { return static_cast<EVP_PKEY*>(p); }

struct MdCtx {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  ~MdCtx() { EVP_MD_CTX_free(ctx); }
};

struct CipherCtx {
  EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
  ~CipherCtx() { EVP_CIPHER_CTX_free(ctx); }
};

void put_u32(std::string& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out += static_cast<char>((v >> s) & 0xFF);
}

std::uint32_t get_u32(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(in[at + i]);
  return v;
}

Bytes derive_key(std::string_view passphrase, const std::uint8_t* salt, std::uint32_t iterations) {
  Bytes key(32);
  if (PKCS5_PBKDF2_HMAC(passphrase.data(), static_cast<int>(passphrase.size()), salt, kSaltLen,
                        static_cast<int>(iterations), EVP_sha256(), static_cast<int>(key.size()), key.data()) != 1) {
    throw Error(Errc::Internal, "PBKDF2 failed");
  }
  return key;
}

}  // namespace

std::string_view to_string(DigestAlg alg) { return alg == DigestAlg::Sha256 ? "sha256" : "sha512"; }
std::string_view to_string(SigAlg alg) { return alg == SigAlg::Ed25519 ? "ed25519" : "ed448"; }

DigestAlg digest_alg_from(std::string_view tag) {
  if (tag == "sha256") return DigestAlg::Sha256;
  if (tag == "sha512") return DigestAlg::Sha512;
  throw Error(Errc::UnsupportedAlgorithm, "digest '" + std::string(tag) + "'");
}

SigAlg sig_alg_from(std::string_view tag) {
  if (tag == "ed25519" || tag == "default") return SigAlg::Ed25519;
  if (tag == "ed448") return SigAlg::Ed448;
  throw Error(Errc::UnsupportedAlgorithm, "signature algorithm '" + std::string(tag) + "'");
}

std::size_t digest_size(DigestAlg alg) { return alg == DigestAlg::Sha256 ? 32 : 64; }

Bytes digest(DigestAlg alg, std::string_view data) {
  Bytes out(digest_size(alg));
  unsigned int len = 0;
  const EVP_MD* md = alg == DigestAlg::Sha256 ? EVP_sha256() : EVP_sha512();
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, md, nullptr) != 1) {
    throw Error(Errc::Internal, "digest failed");
  }
  return out;
}

std::string sha256_hex(std::string_view data) { return to_hex(digest(DigestAlg::Sha256, data)); }

bool PublicKey::verify(std::string_view message, const Bytes& signature) const {
  EVP_PKEY* pk = EVP_PKEY_new_raw_public_key(evp_id(alg), nullptr, raw.data(), raw.size());
  if (pk == nullptr) return false;
  MdCtx md;
  bool ok = EVP_DigestVerifyInit(md.ctx, nullptr, nullptr, nullptr, pk) == 1 &&
            EVP_DigestVerify(md.ctx, signature.data(), signature.size(),
                             reinterpret_cast<const unsigned char*>(message.data()), message.size()) == 1;
  EVP_PKEY_free(pk);
  return ok;
}

std::string PublicKey::key_id() const { return sha256_hex(std::string_view(reinterpret_cast<const char*>(raw.data()), raw.size())); }

PrivateKey::PrivateKey() = default;

PrivateKey::~PrivateKey() { EVP_PKEY_free(as_pkey(pkey_)); }

PrivateKey::PrivateKey(PrivateKey&& other) noexcept : alg_(other.alg_), pkey_(other.pkey_) { other.pkey_ = nullptr; }

PrivateKey& PrivateKey::operator=(PrivateKey&& other) noexcept {
  if (this != &other) {
    EVP_PKEY_free(as_pkey(pkey_));
    alg_ = other.alg_;
    pkey_ = other.pkey_;
    other.pkey_ = nullptr;
  }
  return *this;
}

PrivateKey PrivateKey::generate(SigAlg alg) {
  EVP_PKEY_CTX* ctx = EVP_PKEY_CTX_new_id(evp_id(alg), nullptr);
  EVP_PKEY* pk = nullptr;
  const bool ok = ctx != nullptr && EVP_PKEY_keygen_init(ctx) == 1 && EVP_PKEY_keygen(ctx, &pk) == 1;
  EVP_PKEY_CTX_free(ctx);
  if (!ok) throw Error(Errc::Internal, "key generation failed");
  PrivateKey key;
  key.alg_ = alg;
  key.pkey_ = pk;
  return key;
}

PrivateKey PrivateKey::from_raw(SigAlg alg, const Bytes& raw) {
  EVP_PKEY* pk = EVP_PKEY_new_raw_private_key(evp_id(alg), nullptr, raw.data(), raw.size());
  if (pk == nullptr) throw Error(Errc::BadKeyStore, "invalid raw private key");
  PrivateKey key;
  key.alg_ = alg;
  key.pkey_ = pk;
  return key;
}

Bytes PrivateKey::sign(std::string_view message) const {
  if (pkey_ == nullptr) throw Error(Errc::Internal, "sign with empty key");
  MdCtx md;
  std::size_t len = 0;
  const auto* msg = reinterpret_cast<const unsigned char*>(message.data());
  if (EVP_DigestSignInit(md.ctx, nullptr, nullptr, nullptr, as_pkey(pkey_)) != 1 ||
      EVP_DigestSign(md.ctx, nullptr, &len, msg, message.size()) != 1) {
    throw Error(Errc::Internal, "signature init failed");
  }
  Bytes sig(len);
  if (EVP_DigestSign(md.ctx, sig.data(), &len, msg, message.size()) != 1) {
    throw Error(Errc::Internal, "signature failed");
  }
  sig.resize(len);
  return sig;
}

PublicKey PrivateKey::public_key() const {
  std::size_t len = 0;
  EVP_PKEY_get_raw_public_key(as_pkey(pkey_), nullptr, &len);
  PublicKey pub;
  pub.alg = alg_;
  pub.raw.resize(len);
  if (EVP_PKEY_get_raw_public_key(as_pkey(pkey_), pub.raw.data(), &len) != 1) {
    throw Error(Errc::Internal, "cannot export public key");
  }
  return pub;
}

Bytes PrivateKey::raw_private() const {
  std::size_t len = 0;
  EVP_PKEY_get_raw_private_key(as_pkey(pkey_), nullptr, &len);
  Bytes raw(len);
  if (EVP_PKEY_get_raw_private_key(as_pkey(pkey_), raw.data(), &len) != 1) {
    throw Error(Errc::Internal, "cannot export private key");
  }
  return raw;
}

std::pair<PrivateKey, PublicKey> keygen(std::string_view alg_tag) {
  PrivateKey key = PrivateKey::generate(sig_alg_from(alg_tag));
  PublicKey pub = key.public_key();
  return {std::move(key), std::move(pub)};
}

Bytes random_bytes(std::size_t n) {
  Bytes out(n);
  if (RAND_bytes(out.data(), static_cast<int>(n)) != 1) throw Error(Errc::Internal, "RNG failure");
  return out;
}

std::string seal_private_key(const PrivateKey& key, std::string_view passphrase, const KeyStoreOptions& opts) {
  const Bytes salt = random_bytes(kSaltLen);
  const Bytes nonce = random_bytes(kNonceLen);
  Bytes aes_key = derive_key(passphrase, salt.data(), opts.kdf_iterations);
  Bytes plain = key.raw_private();

  std::string out(kMagic, sizeof kMagic);
  out += static_cast<char>(kVersion >> 8);
  out += static_cast<char>(kVersion & 0xFF);
  out += static_cast<char>(key.alg() == SigAlg::Ed25519 ? 1 : 2);
  put_u32(out, opts.kdf_iterations);
  out.append(reinterpret_cast<const char*>(salt.data()), salt.size());
  out.append(reinterpret_cast<const char*>(nonce.data()), nonce.size());
  put_u32(out, static_cast<std::uint32_t>(plain.size()));

  CipherCtx c;
  Bytes cipher(plain.size());
  Bytes tag(kTagLen);
  int len = 0;
  bool ok = EVP_EncryptInit_ex(c.ctx, EVP_aes_256_gcm(), nullptr, nullptr, nullptr) == 1 &&
            EVP_CIPHER_CTX_ctrl(c.ctx, EVP_CTRL_GCM_SET_IVLEN, kNonceLen, nullptr) == 1 &&
            EVP_EncryptInit_ex(c.ctx, nullptr, nullptr, aes_key.data(), nonce.data()) == 1 &&
            EVP_EncryptUpdate(c.ctx, nullptr, &len, reinterpret_cast<const unsigned char*>(out.data()),
                              static_cast<int>(out.size())) == 1 &&
            EVP_EncryptUpdate(c.ctx, cipher.data(), &len, plain.data(), static_cast<int>(plain.size())) == 1 &&
            EVP_EncryptFinal_ex(c.ctx, cipher.data() + len, &len) == 1 &&
            EVP_CIPHER_CTX_ctrl(c.ctx, EVP_CTRL_GCM_GET_TAG, kTagLen, tag.data()) == 1;
  OPENSSL_cleanse(plain.data(), plain.size());
  OPENSSL_cleanse(aes_key.data(), aes_key.size());
  if (!ok) throw Error(Errc::Internal, "key store encryption failed");
  out.append(reinterpret_cast<const char*>(cipher.data()), cipher.size());
  out.append(reinterpret_cast<const char*>(tag.data()), tag.size());
  return out;
}

PrivateKey open_private_key(std::string_view sealed, std::string_view passphrase) {
  if (sealed.size() < kHeaderLen + kTagLen || std::memcmp(sealed.data(), kMagic, sizeof kMagic) != 0) {
    throw Error(Errc::BadKeyStore, "not a key store file");
  }
  const unsigned version = (static_cast<unsigned char>(sealed[8]) << 8) | static_cast<unsigned char>(sealed[9]);
  if (version != kVersion) throw Error(Errc::BadKeyStore, "unsupported key store version " + std::to_string(version));
  const unsigned alg_byte = static_cast<unsigned char>(sealed[10]);
  if (alg_byte != 1 && alg_byte != 2) throw Error(Errc::BadKeyStore, "unknown key algorithm");
  const SigAlg alg = alg_byte == 1 ? SigAlg::Ed25519 : SigAlg::Ed448;
  const std::uint32_t iterations = get_u32(sealed, 11);
  if (iterations == 0) throw Error(Errc::BadKeyStore, "zero KDF iterations");
  const auto* salt = reinterpret_cast<const std::uint8_t*>(sealed.data() + 15);
  const auto* nonce = salt + kSaltLen;
  const std::uint32_t clen = get_u32(sealed, 15 + kSaltLen + kNonceLen);
  if (sealed.size() != kHeaderLen + clen + kTagLen) throw Error(Errc::BadKeyStore, "key store length mismatch");
  const auto* cipher = reinterpret_cast<const std::uint8_t*>(sealed.data() + kHeaderLen);
  Bytes tag(cipher + clen, cipher + clen + kTagLen);

  Bytes aes_key = derive_key(passphrase, salt, iterations);
  CipherCtx c;
  Bytes plain(clen);
  int len = 0;
  bool ok = EVP_DecryptInit_ex(c.ctx, EVP_aes_256_gcm(), nullptr, nullptr, nullptr) == 1 &&
            EVP_CIPHER_CTX_ctrl(c.ctx, EVP_CTRL_GCM_SET_IVLEN, kNonceLen, nullptr) == 1 &&
            EVP_DecryptInit_ex(c.ctx, nullptr, nullptr, aes_key.data(), nonce) == 1 &&
            EVP_DecryptUpdate(c.ctx, nullptr, &len, reinterpret_cast<const unsigned char*>(sealed.data()),
                              static_cast<int>(kHeaderLen)) == 1 &&
            EVP_DecryptUpdate(c.ctx, plain.data(), &len, cipher, static_cast<int>(clen)) == 1 &&
            EVP_CIPHER_CTX_ctrl(c.ctx, EVP_CTRL_GCM_SET_TAG, kTagLen, tag.data()) == 1 &&
            EVP_DecryptFinal_ex(c.ctx, plain.data() + len, &len) == 1;
  OPENSSL_cleanse(aes_key.data(), aes_key.size());
  if (!ok) {
    OPENSSL_cleanse(plain.data(), plain.size());
    throw Error(Errc::BadPassphrase, "key store did not open (wrong passphrase or tampered file)");
  }
  PrivateKey key = PrivateKey::from_raw(alg, plain);
  OPENSSL_cleanse(plain.data(), plain.size());
  return key;
}

void save_key_store(const std::filesystem::path& path, const PrivateKey& key, std::string_view passphrase,
                    const KeyStoreOptions& opts) {
  write_file_atomic(path, seal_private_key(key, passphrase, opts));
}

PrivateKey load_key_store(const std::filesystem::path& path, std::string_view passphrase) {
  return open_private_key(read_file(path), passphrase);
}

}  // namespace aida::crypto
