#include "smh/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "smh/errors.hpp"

namespace smh {

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view text, const std::string& what) {
  T value{};
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc{} || end != text.data() + text.size()) {
    throw InvalidInput("cannot parse " + what + ": '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace

std::vector<double> parse_vector(const std::string& text) {
  std::vector<double> values;
  std::istringstream lines(text);
  std::string line;
  for (int number = 1; std::getline(lines, line); ++number) {
    const auto field = trim(line);
    if (field.empty()) continue;
    const double v = parse_number<double>(field, "line " + std::to_string(number));
    if (!std::isfinite(v)) throw InvalidInput("line " + std::to_string(number) + " is not finite");
    values.push_back(v);
  }
  if (values.empty()) throw InvalidInput("vector file is empty");
  return values;
}

std::vector<double> read_vector_file(const std::string& path) {
  try {
    return parse_vector(read_text(path));
  } catch (const InvalidInput& e) {
    throw InvalidInput(path + ": " + e.what());
  }
}

void write_vector_file(const std::string& path, const std::vector<double>& values) {
  std::ostringstream out;
  for (double v : values) {
    char buffer[32];
    const auto [end, ec] = std::to_chars(buffer, buffer + sizeof buffer, v);
    out.write(buffer, end - buffer);
    out << '\n';
  }
  save_text(path, out.str());
}

std::string key_to_json(const HashKey& key) {
  nlohmann::json doc;
  doc["k"] = key.k();
  doc["delta"] = key.delta();
  doc["M"] = key.rows();
  doc["N"] = key.cols();
  doc["a"] = std::vector<double>(key.matrix().begin(), key.matrix().end());
  doc["u"] = std::vector<double>(key.dither().begin(), key.dither().end());
  return doc.dump() + "\n";
}

std::string key_seed_json(int k, std::size_t rows, std::size_t cols, const Seed& seed, double delta) {
  require_even_modulus(k);
  nlohmann::json doc;
  doc["k"] = k;
  doc["delta"] = delta;
  doc["M"] = rows;
  doc["N"] = cols;
  doc["seed"] = seed_to_hex(seed);
  doc["interoperable"] = false;
  return doc.dump(2) + "\n";
}

HashKey key_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
    const int k = doc.at("k").get<int>();
    const double delta = doc.value("delta", kDefaultDelta);
    const auto rows = doc.at("M").get<std::size_t>();
    const auto cols = doc.at("N").get<std::size_t>();
    if (doc.contains("seed")) {
      const auto seed = seed_from_hex(doc.at("seed").get<std::string>());
      if (!seed) throw InvalidInput("key seed must be 64 hex characters");
      return generate_key(k, rows, cols, *seed, delta);
    }
    return HashKey(k, delta, rows, cols, doc.at("a").get<std::vector<double>>(),
                   doc.at("u").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed key file: ") + e.what());
  }
}

HashKey load_key(const std::string& path) { return key_from_json(read_text(path)); }

void save_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << text;
  if (!out.flush()) throw IoError("failed writing " + path);
}

Rational parse_rational(const std::string& text) {
  const auto slash = text.find('/');
  const auto num = parse_number<std::int64_t>(trim(std::string_view(text).substr(0, slash)), "numerator");
  if (slash == std::string::npos) return Rational(num);
  const auto den = parse_number<std::int64_t>(trim(std::string_view(text).substr(slash + 1)), "denominator");
  if (den == 0) throw InvalidInput("denominator must be non-zero");
  return Rational(num, den);
}

std::string format_rational(const Rational& value) {
  return std::to_string(value.numerator()) + "/" + std::to_string(value.denominator());
}

}  // namespace smh
