#include "smh/rng.hpp"

#include <sodium.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "smh/errors.hpp"

namespace smh {
namespace {

void ensure_sodium() {
  static const bool ready = [] { return sodium_init() >= 0; }();
  if (!ready) throw std::runtime_error("libsodium initialisation failed");
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

std::optional<Seed> seed_from_hex(std::string_view hex) {
  if (hex.size() != 64) return std::nullopt;
  Seed seed{};
  for (std::size_t i = 0; i < 32; ++i) {
    const int hi = hex_value(hex[2 * i]);
    const int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    seed[i] = static_cast<std::uint8_t>(hi * 16 + lo);
  }
  return seed;
}

Seed seed_from_string(std::string_view text) {
  if (auto parsed = seed_from_hex(text)) return *parsed;
  ensure_sodium();
  Seed seed{};
  crypto_hash_sha256(seed.data(), reinterpret_cast<const unsigned char*>(text.data()),
                     text.size());
  return seed;
}

std::string seed_to_hex(const Seed& seed) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (auto byte : seed) {
    out.push_back(kDigits[byte >> 4]);
    out.push_back(kDigits[byte & 0x0f]);
  }
  return out;
}

Seed derive_seed(const Seed& seed, std::string_view label,
                 std::initializer_list<std::uint64_t> indices) {
  ensure_sodium();
  crypto_hash_sha256_state state;
  crypto_hash_sha256_init(&state);
  crypto_hash_sha256_update(&state, seed.data(), seed.size());
  const std::uint8_t label_size = static_cast<std::uint8_t>(std::min<std::size_t>(label.size(), 255));
  crypto_hash_sha256_update(&state, &label_size, 1);
  crypto_hash_sha256_update(&state, reinterpret_cast<const unsigned char*>(label.data()),
                            label_size);
  for (std::uint64_t index : indices) {
    std::array<std::uint8_t, 8> be{};
    for (int b = 0; b < 8; ++b) be[b] = static_cast<std::uint8_t>(index >> (56 - 8 * b));
    crypto_hash_sha256_update(&state, be.data(), be.size());
  }
  Seed out{};
  crypto_hash_sha256_final(&state, out.data());
  return out;
}

DeterministicRng::DeterministicRng(const Seed& seed, std::uint64_t stream) : key_(seed) {
  ensure_sodium();
  for (int b = 0; b < 8; ++b) nonce_[4 + b] = static_cast<std::uint8_t>(stream >> (56 - 8 * b));
}

void DeterministicRng::refill() {
  static_assert(sizeof(buffer_) % 64 == 0);
  constexpr std::uint32_t kBlocks = sizeof(buffer_) / 64;
  if (block_counter_ > UINT32_MAX - kBlocks) {
    // 2^38 bytes per stream; callers split work across derived seeds long before this.
    throw InvalidParameter("deterministic generator stream exhausted");
  }
  buffer_.fill(0);
  crypto_stream_chacha20_ietf_xor_ic(buffer_.data(), buffer_.data(), buffer_.size(),
                                     nonce_.data(), block_counter_, key_.data());
  block_counter_ += kBlocks;
  position_ = 0;
}

std::uint64_t DeterministicRng::next_u64() {
  if (position_ + 8 > buffer_.size()) refill();
  std::uint64_t value = 0;
  for (int b = 0; b < 8; ++b) value = (value << 8) | buffer_[position_ + b];
  position_ += 8;
  return value;
}

double DeterministicRng::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t DeterministicRng::uniform_below(std::uint64_t bound) {
  if (bound == 0) throw InvalidParameter("uniform_below requires a positive bound");
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  for (;;) {
    const std::uint64_t draw = next_u64();
    if (draw < limit) return draw % bound;
  }
}

double DeterministicRng::gaussian() {
  if (spare_gaussian_) {
    const double value = *spare_gaussian_;
    spare_gaussian_.reset();
    return value;
  }
  const double u1 = 1.0 - uniform01();  // (0, 1]
  const double u2 = uniform01();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_gaussian_ = radius * std::sin(angle);
  return radius * std::cos(angle);
}

}  // namespace smh
