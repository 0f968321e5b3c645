#pragma once

// File formats shared by the CLI and the bindings.
//
// Vector file: plain text, one decimal per line; blank lines are ignored.
//
// Key file (JSON), explicit form:
//   {"k": 8, "delta": 0.797..., "M": 244, "N": 10, "a": [M*N row-major], "u": [M]}
// Seed form, reproducible only with this implementation's generator:
//   {"k": 8, "delta": ..., "M": 244, "N": 10, "seed": "<64 hex>", "interoperable": false}

#include <string>
#include <vector>

#include "smh/smh.hpp"

namespace smh {

std::vector<double> parse_vector(const std::string& text);
std::vector<double> read_vector_file(const std::string& path);
void write_vector_file(const std::string& path, const std::vector<double>& values);

std::string key_to_json(const HashKey& key);
std::string key_seed_json(int k, std::size_t rows, std::size_t cols, const Seed& seed,
                          double delta = kDefaultDelta);
/// Accepts either form; throws InvalidInput on malformed documents.
HashKey key_from_json(const std::string& text);

HashKey load_key(const std::string& path);
void save_text(const std::string& path, const std::string& text);

/// "a/b" or an integer.
Rational parse_rational(const std::string& text);
std::string format_rational(const Rational& value);

}  // namespace smh
