#include "smh/messages.hpp"

#include <sodium.h>

#include <bit>
#include <cstring>

namespace smh {

std::string_view to_string(ProtocolKind kind) noexcept {
  switch (kind) {
    case ProtocolKind::FullKey3P: return "full-key";
    case ProtocolKind::PublicA3P: return "public-a";
    case ProtocolKind::TwoPartyHamming: return "hamming";
    case ProtocolKind::Obfuscated3P: return "obfuscated";
  }
  return "unknown";
}

std::optional<ProtocolKind> parse_kind(std::string_view text) noexcept {
  for (auto kind : {ProtocolKind::FullKey3P, ProtocolKind::PublicA3P,
                    ProtocolKind::TwoPartyHamming, ProtocolKind::Obfuscated3P}) {
    if (text == to_string(kind)) return kind;
  }
  return std::nullopt;
}

std::string_view to_string(Role role) noexcept {
  switch (role) {
    case Role::Alice: return "alice";
    case Role::Bob: return "bob";
    case Role::Charlie: return "charlie";
    case Role::Oracle: return "oracle";
  }
  return "unknown";
}

std::string_view body_name(const MessageBody& body) noexcept {
  static constexpr std::string_view kNames[] = {"KeyShare", "HashSubmission", "DistanceResult",
                                                "HammingOracleRequest", "HammingOracleResponse",
                                                "Abort"};
  return kNames[body.index()];
}

MatrixDigest MatrixStore::digest_of(std::size_t rows, std::size_t cols,
                                    std::span<const double> entries) {
  if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
  crypto_hash_sha256_state state;
  crypto_hash_sha256_init(&state);
  auto put_u32 = [&](std::uint32_t v) {
    const std::uint8_t be[4] = {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
                                static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
    crypto_hash_sha256_update(&state, be, 4);
  };
  put_u32(static_cast<std::uint32_t>(rows));
  put_u32(static_cast<std::uint32_t>(cols));
  for (double value : entries) {
    const auto bits = std::bit_cast<std::uint64_t>(value);
    std::uint8_t be[8];
    for (int b = 0; b < 8; ++b) be[b] = static_cast<std::uint8_t>(bits >> (56 - 8 * b));
    crypto_hash_sha256_update(&state, be, 8);
  }
  MatrixDigest digest{};
  crypto_hash_sha256_final(&state, digest.data());
  return digest;
}

MatrixDigest MatrixStore::put(std::size_t rows, std::size_t cols, std::vector<double> entries) {
  if (entries.size() != rows * cols) throw DimensionMismatch("matrix size is not rows * cols");
  const MatrixDigest digest = digest_of(rows, cols, entries);
  auto matrix = std::make_shared<const Matrix>(Matrix{rows, cols, std::move(entries)});
  std::lock_guard lock(mutex_);
  matrices_.try_emplace(digest, std::move(matrix));
  return digest;
}

std::shared_ptr<const MatrixStore::Matrix> MatrixStore::find(const MatrixDigest& digest) const {
  std::lock_guard lock(mutex_);
  auto it = matrices_.find(digest);
  return it == matrices_.end() ? nullptr : it->second;
}

}  // namespace smh
