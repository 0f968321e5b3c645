#pragma once

// Secure Modular Hash: Q(x) = floor(A x + U) mod k, plus the Lee metric on
// Z_k and the ring code that turns Lee distance into Hamming distance.

#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include <boost/rational.hpp>

#include "smh/rng.hpp"

// Boost 1.74's mixed rational/integer equality recurses forever under C++20
// rewritten comparisons; these exact overloads take precedence.
namespace boost {
inline bool operator==(const rational<std::int64_t>& a, std::int64_t b) {
  return a.denominator() == 1 && a.numerator() == b;
}
inline bool operator==(const rational<std::int64_t>& a, int b) {
  return a == static_cast<std::int64_t>(b);
}
}  // namespace boost

namespace smh {

/// Exact mean Lee distances are carried as 64-bit rationals in lowest terms.
using Rational = boost::rational<std::int64_t>;

inline double to_real(const Rational& r) {
  return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

/// sqrt(2/pi): the scale at which the expected Lee distance tracks the
/// Euclidean distance with unit slope.
inline constexpr double kDefaultDelta = 0.79788456080286535588;

/// Throws InvalidParameter unless k is even and >= 2.
void require_even_modulus(std::int64_t k);

/// Secret hashing key (k, delta, A, U). A is stored row-major, M rows by N columns.
class HashKey {
 public:
  HashKey(int k, double delta, std::size_t rows, std::size_t cols, std::vector<double> matrix,
          std::vector<double> dither);

  int k() const noexcept { return k_; }
  double delta() const noexcept { return delta_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::span<const double> matrix() const& noexcept { return matrix_; }
  std::vector<double> matrix() && { return std::move(matrix_); }
  std::span<const double> row(std::size_t i) const noexcept {
    return std::span<const double>(matrix_).subspan(i * cols_, cols_);
  }
  std::span<const double> dither() const& noexcept { return dither_; }
  std::vector<double> dither() && { return std::move(dither_); }

  friend bool operator==(const HashKey&, const HashKey&) = default;

 private:
  int k_;
  double delta_;
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> matrix_;
  std::vector<double> dither_;
};

/// An element of Z_k^M.
class HashVector {
 public:
  HashVector(int k, std::vector<std::uint32_t> components);

  int k() const noexcept { return k_; }
  std::size_t size() const noexcept { return components_.size(); }
  std::span<const std::uint32_t> components() const& noexcept { return components_; }
  /// Temporaries hand over their storage so `for (c : f().components())` stays valid.
  std::vector<std::uint32_t> components() && { return std::move(components_); }
  std::uint32_t operator[](std::size_t i) const { return components_[i]; }

  friend bool operator==(const HashVector&, const HashVector&) = default;

 private:
  int k_;
  std::vector<std::uint32_t> components_;
};

/// Concatenated k/2-bit ring codes of a HashVector, packed 64 bits per word.
class BinaryCode {
 public:
  /// Validates length and that every block is a ring code.
  BinaryCode(int k, std::size_t bit_count, std::vector<std::uint64_t> words);

  int k() const noexcept { return k_; }
  std::size_t bit_count() const noexcept { return bit_count_; }
  std::size_t symbol_count() const noexcept { return bit_count_ / block_bits(); }
  std::size_t block_bits() const noexcept { return static_cast<std::size_t>(k_ / 2); }
  bool bit(std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1u; }
  std::span<const std::uint64_t> words() const& noexcept { return words_; }
  std::vector<std::uint64_t> words() && { return std::move(words_); }

  friend bool operator==(const BinaryCode&, const BinaryCode&) = default;

 private:
  int k_;
  std::size_t bit_count_;
  std::vector<std::uint64_t> words_;
};

/// Bijection on {0, ..., n-1}; applying it maps output[i] = input[mapping[i]].
class Permutation {
 public:
  explicit Permutation(std::vector<std::uint32_t> mapping);

  static Permutation identity(std::size_t n);
  static Permutation random(std::size_t n, DeterministicRng& rng);

  std::size_t size() const noexcept { return mapping_.size(); }
  std::span<const std::uint32_t> mapping() const& noexcept { return mapping_; }
  std::vector<std::uint32_t> mapping() && { return std::move(mapping_); }
  Permutation inverse() const;

  friend bool operator==(const Permutation&, const Permutation&) = default;

 private:
  std::vector<std::uint32_t> mapping_;
};

/// A ~ N(0, delta^-2) i.i.d., U ~ Unif[0, k) i.i.d., both drawn from
/// ChaCha20 streams keyed by `seed` (stream 0 for A, stream 1 for U).
HashKey generate_key(int k, std::size_t rows, std::size_t cols, const Seed& seed,
                     double delta = kDefaultDelta);

/// Uniform dither only; used when A is public and U is the secret part.
std::vector<double> generate_dither(int k, std::size_t rows, DeterministicRng& rng);

HashVector hash(const HashKey& key, std::span<const double> x);

/// Uniform i.i.d. vector over Z_k of the given length (obfuscation padding).
HashVector random_hash_vector(int k, std::size_t length, DeterministicRng& rng);

std::uint32_t lee_distance(std::uint32_t a, std::uint32_t b, int k);

/// Sum of component-wise Lee distances.
std::int64_t total_lee_distance(const HashVector& h1, const HashVector& h2);

/// Exact mean of component-wise Lee distances.
Rational mean_lee_distance(const HashVector& h1, const HashVector& h2);

/// Ring code c(a): a <= k/2 sets the first a bits; a > k/2 clears the first
/// a - k/2 bits and sets the rest.
BinaryCode encode_lee_to_binary(const HashVector& h);
HashVector decode_binary(const BinaryCode& code);

std::int64_t hamming_distance(const BinaryCode& b1, const BinaryCode& b2);

HashVector apply_permutation(const HashVector& h, const Permutation& p);

}  // namespace smh
