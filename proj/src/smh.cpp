#include "smh/smh.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "smh/errors.hpp"

namespace smh {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidParameter: return "InvalidParameter";
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ProtocolViolation: return "ProtocolViolation";
    case ErrorCode::OracleUnavailable: return "OracleUnavailable";
    case ErrorCode::EncodingError: return "EncodingError";
    case ErrorCode::DecodeError: return "DecodeError";
    case ErrorCode::TransportClosed: return "TransportClosed";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

void throw_error(ErrorCode code, const std::string& what) {
  switch (code) {
    case ErrorCode::InvalidParameter: throw InvalidParameter(what);
    case ErrorCode::InvalidInput: throw InvalidInput(what);
    case ErrorCode::DimensionMismatch: throw DimensionMismatch(what);
    case ErrorCode::ProtocolViolation: throw ProtocolViolation(what);
    case ErrorCode::OracleUnavailable: throw OracleUnavailable(what);
    case ErrorCode::EncodingError: throw EncodingError(what);
    case ErrorCode::TransportClosed: throw TransportClosed(what);
    case ErrorCode::IoError: throw IoError(what);
    case ErrorCode::DecodeError: break;
  }
  throw Error(code, what);
}

void require_even_modulus(std::int64_t k) {
  if (k < 2 || k % 2 != 0) {
    throw InvalidParameter("k must be an even integer >= 2, got " + std::to_string(k));
  }
  if (k > INT32_MAX - 1) throw InvalidParameter("k is too large");
}

HashKey::HashKey(int k, double delta, std::size_t rows, std::size_t cols,
                 std::vector<double> matrix, std::vector<double> dither)
    : k_(k), delta_(delta), rows_(rows), cols_(cols), matrix_(std::move(matrix)),
      dither_(std::move(dither)) {
  require_even_modulus(k_);
  if (!(delta_ > 0.0) || !std::isfinite(delta_)) throw InvalidParameter("delta must be positive");
  if (rows_ == 0 || cols_ == 0) throw InvalidParameter("key dimensions must be positive");
  if (matrix_.size() != rows_ * cols_) throw DimensionMismatch("matrix size is not rows * cols");
  if (dither_.size() != rows_) throw DimensionMismatch("dither length differs from row count");
  for (double a : matrix_) {
    if (!std::isfinite(a)) throw InvalidInput("matrix entries must be finite");
  }
  for (double u : dither_) {
    if (!(u >= 0.0 && u < static_cast<double>(k_))) {
      throw InvalidInput("dither entries must lie in [0, k)");
    }
  }
}

HashVector::HashVector(int k, std::vector<std::uint32_t> components)
    : k_(k), components_(std::move(components)) {
  require_even_modulus(k_);
  if (components_.empty()) throw InvalidParameter("hash vector must have at least one component");
  for (auto c : components_) {
    if (c >= static_cast<std::uint32_t>(k_)) throw InvalidInput("hash component outside Z_k");
  }
}

namespace {

bool ring_bit(std::uint32_t a, std::uint32_t half, std::uint32_t i) {
  return a <= half ? i < a : i >= a - half;
}

bool bit_at(std::span<const std::uint64_t> words, std::size_t pos) {
  return (words[pos / 64] >> (pos % 64)) & 1u;
}

// Inverse of the ring code on one block; returns k when the block is not a valid code.
std::uint32_t decode_block(std::span<const std::uint64_t> words, std::size_t offset,
                           std::uint32_t half) {
  std::uint32_t ones = 0;
  for (std::uint32_t i = 0; i < half; ++i) ones += bit_at(words, offset + i) ? 1u : 0u;
  // A leading run of ones decodes to `ones`; a trailing run to k - ones.
  const std::uint32_t candidates[2] = {ones, ones == 0 ? 0u : 2 * half - ones};
  for (std::uint32_t a : candidates) {
    bool match = true;
    for (std::uint32_t i = 0; i < half && match; ++i) {
      match = bit_at(words, offset + i) == ring_bit(a, half, i);
    }
    if (match) return a;
  }
  return 2 * half;
}

}  // namespace

BinaryCode::BinaryCode(int k, std::size_t bit_count, std::vector<std::uint64_t> words)
    : k_(k), bit_count_(bit_count), words_(std::move(words)) {
  require_even_modulus(k_);
  const std::size_t half = block_bits();
  if (bit_count_ == 0 || bit_count_ % half != 0) {
    throw DimensionMismatch("binary code length is not a positive multiple of k/2");
  }
  if (words_.size() != (bit_count_ + 63) / 64) throw DimensionMismatch("binary code word count");
  if (bit_count_ % 64 != 0 && (words_.back() >> (bit_count_ % 64)) != 0) {
    throw InvalidInput("binary code has bits set beyond its length");
  }
  for (std::size_t offset = 0; offset < bit_count_; offset += half) {
    if (decode_block(words_, offset, static_cast<std::uint32_t>(half)) >=
        static_cast<std::uint32_t>(k_)) {
      throw InvalidInput("binary code block is not a ring code");
    }
  }
}

Permutation::Permutation(std::vector<std::uint32_t> mapping) : mapping_(std::move(mapping)) {
  std::vector<bool> seen(mapping_.size(), false);
  for (auto index : mapping_) {
    if (index >= mapping_.size() || seen[index]) {
      throw InvalidInput("permutation mapping is not a bijection");
    }
    seen[index] = true;
  }
}

Permutation Permutation::identity(std::size_t n) {
  std::vector<std::uint32_t> mapping(n);
  for (std::size_t i = 0; i < n; ++i) mapping[i] = static_cast<std::uint32_t>(i);
  return Permutation(std::move(mapping));
}

Permutation Permutation::random(std::size_t n, DeterministicRng& rng) {
  std::vector<std::uint32_t> mapping(n);
  for (std::size_t i = 0; i < n; ++i) mapping[i] = static_cast<std::uint32_t>(i);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.uniform_below(i);
    std::swap(mapping[i - 1], mapping[j]);
  }
  return Permutation(std::move(mapping));
}

Permutation Permutation::inverse() const {
  std::vector<std::uint32_t> inv(mapping_.size());
  for (std::size_t i = 0; i < mapping_.size(); ++i) inv[mapping_[i]] = static_cast<std::uint32_t>(i);
  return Permutation(std::move(inv));
}

HashKey generate_key(int k, std::size_t rows, std::size_t cols, const Seed& seed, double delta) {
  require_even_modulus(k);
  if (rows == 0 || cols == 0) throw InvalidParameter("M and N must be positive");
  if (!(delta > 0.0) || !std::isfinite(delta)) throw InvalidParameter("delta must be positive");
  const double stddev = 1.0 / delta;
  DeterministicRng matrix_rng(seed, 0);
  std::vector<double> matrix(rows * cols);
  for (double& a : matrix) a = stddev * matrix_rng.gaussian();
  DeterministicRng dither_rng(seed, 1);
  return HashKey(k, delta, rows, cols, std::move(matrix), generate_dither(k, rows, dither_rng));
}

std::vector<double> generate_dither(int k, std::size_t rows, DeterministicRng& rng) {
  require_even_modulus(k);
  std::vector<double> dither(rows);
  for (double& u : dither) u = static_cast<double>(k) * rng.uniform01();
  return dither;
}

HashVector hash(const HashKey& key, std::span<const double> x) {
  if (x.size() != key.cols()) {
    throw DimensionMismatch("input has length " + std::to_string(x.size()) + ", key expects " +
                            std::to_string(key.cols()));
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw InvalidInput("input vector must be finite");
  }
  const double k = static_cast<double>(key.k());
  std::vector<std::uint32_t> out(key.rows());
  for (std::size_t i = 0; i < key.rows(); ++i) {
    const auto row = key.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) acc += row[j] * x[j];
    const double level = std::floor(acc + key.dither()[i]);
    if (!std::isfinite(level)) throw InvalidInput("projection overflowed");
    // fmod is exact on integral doubles; shift negatives into [0, k).
    double r = std::fmod(level, k);
    if (r < 0.0) r += k;
    if (r >= k) r = 0.0;
    out[i] = static_cast<std::uint32_t>(r);
  }
  return HashVector(key.k(), std::move(out));
}

HashVector random_hash_vector(int k, std::size_t length, DeterministicRng& rng) {
  require_even_modulus(k);
  std::vector<std::uint32_t> out(length);
  for (auto& c : out) c = static_cast<std::uint32_t>(rng.uniform_below(static_cast<std::uint64_t>(k)));
  return HashVector(k, std::move(out));
}

std::uint32_t lee_distance(std::uint32_t a, std::uint32_t b, int k) {
  if (k < 1) throw InvalidParameter("k must be positive");
  const auto uk = static_cast<std::uint32_t>(k);
  if (a >= uk || b >= uk) throw InvalidInput("Lee distance operands must lie in Z_k");
  const std::uint32_t diff = a > b ? a - b : b - a;
  return std::min(diff, uk - diff);
}

std::int64_t total_lee_distance(const HashVector& h1, const HashVector& h2) {
  if (h1.k() != h2.k()) throw DimensionMismatch("hash vectors use different k");
  if (h1.size() != h2.size()) throw DimensionMismatch("hash vectors differ in length");
  std::int64_t total = 0;
  for (std::size_t i = 0; i < h1.size(); ++i) total += lee_distance(h1[i], h2[i], h1.k());
  return total;
}

Rational mean_lee_distance(const HashVector& h1, const HashVector& h2) {
  const std::int64_t total = total_lee_distance(h1, h2);
  return Rational(total, static_cast<std::int64_t>(h1.size()));
}

BinaryCode encode_lee_to_binary(const HashVector& h) {
  const auto half = static_cast<std::uint32_t>(h.k() / 2);
  const std::size_t bits = h.size() * half;
  std::vector<std::uint64_t> words((bits + 63) / 64, 0);
  std::size_t offset = 0;
  for (auto a : h.components()) {
    for (std::uint32_t i = 0; i < half; ++i, ++offset) {
      if (ring_bit(a, half, i)) words[offset / 64] |= std::uint64_t{1} << (offset % 64);
    }
  }
  return BinaryCode(h.k(), bits, std::move(words));
}

HashVector decode_binary(const BinaryCode& code) {
  const auto half = static_cast<std::uint32_t>(code.block_bits());
  std::vector<std::uint32_t> out(code.symbol_count());
  for (std::size_t s = 0; s < out.size(); ++s) out[s] = decode_block(code.words(), s * half, half);
  return HashVector(code.k(), std::move(out));
}

std::int64_t hamming_distance(const BinaryCode& b1, const BinaryCode& b2) {
  if (b1.k() != b2.k() || b1.bit_count() != b2.bit_count()) {
    throw DimensionMismatch("binary codes differ in k or length");
  }
  std::int64_t total = 0;
  for (std::size_t w = 0; w < b1.words().size(); ++w) {
    total += std::popcount(b1.words()[w] ^ b2.words()[w]);
  }
  return total;
}

HashVector apply_permutation(const HashVector& h, const Permutation& p) {
  if (p.size() != h.size()) throw DimensionMismatch("permutation size differs from hash length");
  std::vector<std::uint32_t> out(h.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = h[p.mapping()[i]];
  return HashVector(h.k(), std::move(out));
}

}  // namespace smh
