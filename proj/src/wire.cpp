#include "smh/wire.hpp"

#include <bit>
#include <cmath>
#include <numeric>
#include <string>

namespace smh {

std::string_view to_string(DecodeErrc errc) noexcept {
  switch (errc) {
    case DecodeErrc::Truncated: return "Truncated";
    case DecodeErrc::BadLength: return "BadLength";
    case DecodeErrc::FrameTooLarge: return "FrameTooLarge";
    case DecodeErrc::VersionUnsupported: return "VersionUnsupported";
    case DecodeErrc::UnknownMsgType: return "UnknownMsgType";
    case DecodeErrc::InvalidModulus: return "InvalidModulus";
    case DecodeErrc::ComponentOutOfRange: return "ComponentOutOfRange";
    case DecodeErrc::NonBijectivePermutation: return "NonBijectivePermutation";
    case DecodeErrc::ZeroDenominator: return "ZeroDenominator";
    case DecodeErrc::NonCanonical: return "NonCanonical";
    case DecodeErrc::NonFiniteReal: return "NonFiniteReal";
    case DecodeErrc::InvalidValue: return "InvalidValue";
    case DecodeErrc::InvalidRingCode: return "InvalidRingCode";
    case DecodeErrc::DimensionMismatch: return "DimensionMismatch";
    case DecodeErrc::TrailingBytes: return "TrailingBytes";
  }
  return "Unknown";
}

namespace {

constexpr std::uint8_t kFlagExplicitMatrix = 0x01;
constexpr std::uint8_t kFlagPermutation = 0x02;
constexpr std::uint8_t kFlagPadding = 0x04;

[[noreturn]] void fail(DecodeErrc errc, const std::string& what) {
  throw DecodeFailure(errc, std::string(to_string(errc)) + ": " + what);
}

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void raw(std::span<const std::uint8_t> data) { bytes_.insert(bytes_.end(), data.begin(), data.end()); }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  void put(std::uint64_t v, int width) {
    for (int b = width - 1; b >= 0; --b) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  }
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  std::size_t remaining() const { return data_.size() - pos_; }
  void need(std::uint64_t n, const char* what) const {
    if (n > remaining()) fail(DecodeErrc::Truncated, what);
  }
  void need_items(std::uint64_t count, std::size_t width, const char* what) const {
    if (count > remaining() / width) fail(DecodeErrc::Truncated, what);
  }
  std::uint8_t u8(const char* what) { return static_cast<std::uint8_t>(get(1, what)); }
  std::uint16_t u16(const char* what) { return static_cast<std::uint16_t>(get(2, what)); }
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(get(4, what)); }
  std::uint64_t u64(const char* what) { return get(8, what); }
  double f64(const char* what) {
    const double v = std::bit_cast<double>(get(8, what));
    if (!std::isfinite(v)) fail(DecodeErrc::NonFiniteReal, what);
    return v;
  }
  std::span<const std::uint8_t> raw(std::size_t n, const char* what) {
    need(n, what);
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

 private:
  std::uint64_t get(int width, const char* what) {
    need(static_cast<std::uint64_t>(width), what);
    std::uint64_t v = 0;
    for (int b = 0; b < width; ++b) v = (v << 8) | data_[pos_ + b];
    pos_ += width;
    return v;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

std::uint8_t body_code(const MessageBody& body) noexcept {
  return static_cast<std::uint8_t>(body.index() + 1);
}

bool valid_combination(ProtocolKind kind, Role sender, std::uint8_t code) noexcept {
  const bool third = has_third_party(kind);
  switch (code) {
    case 1: return sender == Role::Alice;
    case 2: return third && (sender == Role::Alice || sender == Role::Bob);
    case 3: return third && sender == Role::Charlie;
    case 4: return !third && (sender == Role::Alice || sender == Role::Bob);
    case 5: return !third && sender == Role::Oracle;
    case 6:
      if (sender == Role::Charlie) return third;
      if (sender == Role::Oracle) return !third;
      return true;
    default: return false;
  }
}

void check_wire_modulus(int k) {
  if (k < 2 || k % 2 != 0 || k > kMaxWireModulus) {
    throw EncodingError("k = " + std::to_string(k) + " cannot be encoded (even, 2..65534)");
  }
}

void write_hash(Writer& w, const HashVector& h) {
  check_wire_modulus(h.k());
  if (h.size() > UINT32_MAX) throw EncodingError("hash vector too long");
  w.u32(static_cast<std::uint32_t>(h.k()));
  w.u32(static_cast<std::uint32_t>(h.size()));
  for (auto c : h.components()) {
    if (c >= static_cast<std::uint32_t>(h.k())) throw EncodingError("component >= k");
    w.u16(static_cast<std::uint16_t>(c));
  }
}

int read_modulus(Reader& r) {
  const std::uint32_t k = r.u32("k");
  if (k < 2 || k % 2 != 0 || k > static_cast<std::uint32_t>(kMaxWireModulus)) {
    fail(DecodeErrc::InvalidModulus, "k = " + std::to_string(k));
  }
  return static_cast<int>(k);
}

HashVector read_hash(Reader& r) {
  const int k = read_modulus(r);
  const std::uint32_t count = r.u32("component count");
  if (count == 0) fail(DecodeErrc::DimensionMismatch, "empty hash vector");
  r.need(2ull * count, "hash components");
  std::vector<std::uint32_t> components(count);
  for (auto& c : components) {
    c = r.u16("component");
    if (c >= static_cast<std::uint32_t>(k)) {
      fail(DecodeErrc::ComponentOutOfRange, std::to_string(c) + " >= k = " + std::to_string(k));
    }
  }
  return HashVector(k, std::move(components));
}

void write_key_share(Writer& w, const KeyShare& share) {
  check_wire_modulus(share.k);
  if (!(share.delta > 0.0) || !std::isfinite(share.delta)) throw EncodingError("delta must be positive");
  if (share.rows == 0 || share.cols == 0) throw EncodingError("key dimensions must be positive");
  if (share.dither.size() != share.rows) throw EncodingError("dither length differs from M");
  const auto* explicit_matrix = std::get_if<std::vector<double>>(&share.matrix);
  if (explicit_matrix &&
      explicit_matrix->size() != static_cast<std::uint64_t>(share.rows) * share.cols) {
    throw EncodingError("matrix size is not M * N");
  }
  if (share.padding_alice.has_value() != share.padding_bob.has_value()) {
    throw EncodingError("paddings must be both present or both absent");
  }
  std::uint8_t flags = 0;
  if (explicit_matrix) flags |= kFlagExplicitMatrix;
  if (share.permutation) flags |= kFlagPermutation;
  if (share.padding_alice) flags |= kFlagPadding;

  w.u32(static_cast<std::uint32_t>(share.k));
  w.f64(share.delta);
  w.u32(share.rows);
  w.u32(share.cols);
  w.u8(flags);
  if (explicit_matrix) {
    for (double a : *explicit_matrix) {
      if (!std::isfinite(a)) throw EncodingError("matrix entries must be finite");
      w.f64(a);
    }
  } else {
    w.raw(std::get<MatrixDigest>(share.matrix));
  }
  for (double u : share.dither) {
    if (!(u >= 0.0 && u < share.k)) throw EncodingError("dither outside [0, k)");
    w.f64(u);
  }
  if (share.permutation) {
    w.u32(static_cast<std::uint32_t>(share.permutation->size()));
    for (auto index : share.permutation->mapping()) w.u32(index);
  }
  if (share.padding_alice) {
    if (share.padding_alice->k() != share.k || share.padding_bob->k() != share.k ||
        share.padding_alice->size() != share.padding_bob->size()) {
      throw EncodingError("paddings must share k and length with the key");
    }
    write_hash(w, *share.padding_alice);
    write_hash(w, *share.padding_bob);
  }
}

KeyShare read_key_share(Reader& r) {
  KeyShare share;
  share.k = read_modulus(r);
  share.delta = r.f64("delta");
  if (!(share.delta > 0.0)) fail(DecodeErrc::InvalidValue, "delta must be positive");
  share.rows = r.u32("M");
  share.cols = r.u32("N");
  if (share.rows == 0 || share.cols == 0) fail(DecodeErrc::DimensionMismatch, "zero key dimension");
  const std::uint8_t flags = r.u8("flags");
  if (flags & ~(kFlagExplicitMatrix | kFlagPermutation | kFlagPadding)) {
    fail(DecodeErrc::NonCanonical, "unknown key share flags");
  }
  if (flags & kFlagExplicitMatrix) {
    const std::uint64_t count = static_cast<std::uint64_t>(share.rows) * share.cols;
    r.need_items(count, 8, "matrix");
    std::vector<double> entries(count);
    for (double& a : entries) a = r.f64("matrix entry");
    share.matrix = std::move(entries);
  } else {
    MatrixDigest digest{};
    auto bytes = r.raw(digest.size(), "matrix digest");
    std::copy(bytes.begin(), bytes.end(), digest.begin());
    share.matrix = digest;
  }
  r.need(8ull * share.rows, "dither");
  share.dither.resize(share.rows);
  for (double& u : share.dither) {
    u = r.f64("dither");
    if (!(u >= 0.0 && u < share.k)) fail(DecodeErrc::InvalidValue, "dither outside [0, k)");
  }
  if (flags & kFlagPermutation) {
    const std::uint32_t n = r.u32("permutation size");
    r.need(4ull * n, "permutation");
    std::vector<std::uint32_t> mapping(n);
    std::vector<bool> seen(n, false);
    for (auto& index : mapping) {
      index = r.u32("permutation index");
      if (index >= n || seen[index]) fail(DecodeErrc::NonBijectivePermutation, "permutation");
      seen[index] = true;
    }
    share.permutation = Permutation(std::move(mapping));
  }
  if (flags & kFlagPadding) {
    share.padding_alice = read_hash(r);
    share.padding_bob = read_hash(r);
    if (share.padding_alice->k() != share.k || share.padding_bob->k() != share.k ||
        share.padding_alice->size() != share.padding_bob->size()) {
      fail(DecodeErrc::DimensionMismatch, "paddings must share k and length with the key");
    }
  }
  return share;
}

void write_binary_code(Writer& w, const BinaryCode& code) {
  check_wire_modulus(code.k());
  w.u32(static_cast<std::uint32_t>(code.k()));
  w.u32(static_cast<std::uint32_t>(code.symbol_count()));
  const std::size_t byte_count = (code.bit_count() + 7) / 8;
  for (std::size_t b = 0; b < byte_count; ++b) {
    std::uint8_t byte = 0;
    for (std::size_t i = 0; i < 8; ++i) {
      const std::size_t pos = 8 * b + i;
      if (pos < code.bit_count() && code.bit(pos)) byte |= static_cast<std::uint8_t>(0x80u >> i);
    }
    w.u8(byte);
  }
}

BinaryCode read_binary_code(Reader& r) {
  const int k = read_modulus(r);
  const std::uint32_t symbols = r.u32("symbol count");
  if (symbols == 0) fail(DecodeErrc::DimensionMismatch, "empty binary code");
  const std::uint64_t bits = static_cast<std::uint64_t>(symbols) * static_cast<std::uint64_t>(k / 2);
  const std::uint64_t byte_count = (bits + 7) / 8;
  auto bytes = r.raw(r.remaining() >= byte_count ? byte_count : r.remaining() + 1, "binary code");
  std::vector<std::uint64_t> words((bits + 63) / 64, 0);
  for (std::uint64_t pos = 0; pos < 8 * byte_count; ++pos) {
    const bool set = (bytes[pos / 8] >> (7 - pos % 8)) & 1u;
    if (!set) continue;
    if (pos >= bits) fail(DecodeErrc::NonCanonical, "padding bits must be zero");
    words[pos / 64] |= std::uint64_t{1} << (pos % 64);
  }
  try {
    return BinaryCode(k, bits, std::move(words));
  } catch (const Error&) {
    fail(DecodeErrc::InvalidRingCode, "block is not a ring code");
  }
}

}  // namespace

std::uint8_t message_type_byte(ProtocolKind kind, Role sender, const MessageBody& body) noexcept {
  return static_cast<std::uint8_t>((static_cast<unsigned>(kind) << 6) |
                                   (static_cast<unsigned>(sender) << 4) | body_code(body));
}

std::vector<std::uint8_t> encode_wire_hash(const HashVector& h) {
  Writer w;
  write_hash(w, h);
  return std::move(w.bytes());
}

std::vector<std::uint8_t> encode_message(const ProtocolMessage& message) {
  const std::uint8_t code = body_code(message.body);
  if (!valid_combination(message.kind, message.sender, code)) {
    throw EncodingError(std::string(body_name(message.body)) + " cannot be sent by " +
                        std::string(to_string(message.sender)) + " in " +
                        std::string(to_string(message.kind)));
  }
  Writer w;
  w.u32(0);  // patched below
  w.u8(kWireVersion);
  w.u8(message_type_byte(message.kind, message.sender, message.body));
  w.raw(message.session);

  std::visit(
      [&](const auto& body) {
        using T = std::decay_t<decltype(body)>;
        if constexpr (std::is_same_v<T, KeyShare>) {
          write_key_share(w, body);
        } else if constexpr (std::is_same_v<T, HashSubmission>) {
          write_hash(w, body.hash);
        } else if constexpr (std::is_same_v<T, DistanceResult>) {
          if (body.mean_lee < 0) throw EncodingError("mean Lee distance must be >= 0");
          w.u64(static_cast<std::uint64_t>(body.mean_lee.numerator()));
          w.u64(static_cast<std::uint64_t>(body.mean_lee.denominator()));
          w.u32(body.m_effective);
        } else if constexpr (std::is_same_v<T, HammingOracleRequest>) {
          write_binary_code(w, body.code);
        } else if constexpr (std::is_same_v<T, HammingOracleResponse>) {
          w.u64(body.distance);
          w.u32(body.symbols);
        } else if constexpr (std::is_same_v<T, Abort>) {
          if (body.detail.size() > UINT16_MAX) throw EncodingError("abort detail too long");
          w.u8(static_cast<std::uint8_t>(body.reason));
          w.u16(static_cast<std::uint16_t>(body.detail.size()));
          w.raw(std::span(reinterpret_cast<const std::uint8_t*>(body.detail.data()), body.detail.size()));
        }
      },
      message.body);

  auto& bytes = w.bytes();
  const std::size_t length = bytes.size() - kLengthPrefixSize;
  if (length > kMaxFrameLength) throw EncodingError("frame exceeds the maximum length");
  for (int b = 0; b < 4; ++b) bytes[b] = static_cast<std::uint8_t>(length >> (24 - 8 * b));
  return std::move(bytes);
}

std::optional<FrameHeader> peek_header(std::span<const std::uint8_t> frame) noexcept {
  if (frame.size() < kLengthPrefixSize + kFrameHeaderSize) return std::nullopt;
  FrameHeader header;
  header.length = (std::uint32_t{frame[0]} << 24) | (std::uint32_t{frame[1]} << 16) |
                  (std::uint32_t{frame[2]} << 8) | frame[3];
  header.version = frame[4];
  header.msg_type = frame[5];
  std::copy(frame.begin() + 6, frame.begin() + 22, header.session.begin());
  return header;
}

ProtocolMessage decode_message(std::span<const std::uint8_t> frame) {
  if (frame.size() < kLengthPrefixSize) fail(DecodeErrc::Truncated, "length prefix");
  Reader prefix(frame.first(kLengthPrefixSize));
  const std::uint32_t length = prefix.u32("length");
  if (length > kMaxFrameLength) fail(DecodeErrc::FrameTooLarge, std::to_string(length));
  if (length < kFrameHeaderSize) fail(DecodeErrc::BadLength, "length below header size");
  if (frame.size() < kLengthPrefixSize + length) fail(DecodeErrc::Truncated, "frame body");
  if (frame.size() > kLengthPrefixSize + length) fail(DecodeErrc::TrailingBytes, "after frame");

  Reader r(frame.subspan(kLengthPrefixSize));
  const std::uint8_t version = r.u8("version");
  if (version != kWireVersion) fail(DecodeErrc::VersionUnsupported, "version " + std::to_string(version));
  const std::uint8_t type = r.u8("msg_type");
  const auto kind = static_cast<ProtocolKind>(type >> 6);
  const auto sender = static_cast<Role>((type >> 4) & 0x3);
  const std::uint8_t code = type & 0x0f;
  if (!valid_combination(kind, sender, code)) fail(DecodeErrc::UnknownMsgType, "type " + std::to_string(type));

  ProtocolMessage message;
  message.kind = kind;
  message.sender = sender;
  auto session = r.raw(16, "session id");
  std::copy(session.begin(), session.end(), message.session.begin());

  switch (code) {
    case 1:
      message.body = read_key_share(r);
      break;
    case 2:
      message.body = HashSubmission{read_hash(r)};
      break;
    case 3: {
      const std::uint64_t num = r.u64("numerator");
      const std::uint64_t den = r.u64("denominator");
      const std::uint32_t m_eff = r.u32("M_effective");
      if (den == 0) fail(DecodeErrc::ZeroDenominator, "distance result");
      if (num > INT64_MAX || den > INT64_MAX) fail(DecodeErrc::InvalidValue, "rational out of range");
      if (std::gcd(num, den) != 1) fail(DecodeErrc::NonCanonical, "rational not in lowest terms");
      message.body = DistanceResult{Rational(static_cast<std::int64_t>(num), static_cast<std::int64_t>(den)), m_eff};
      break;
    }
    case 4:
      message.body = HammingOracleRequest{read_binary_code(r)};
      break;
    case 5: {
      const std::uint64_t distance = r.u64("distance");
      const std::uint32_t symbols = r.u32("symbols");
      message.body = HammingOracleResponse{distance, symbols};
      break;
    }
    case 6: {
      const std::uint8_t reason = r.u8("reason");
      if (reason < static_cast<std::uint8_t>(ErrorCode::InvalidParameter) ||
          reason > static_cast<std::uint8_t>(ErrorCode::IoError)) {
        fail(DecodeErrc::InvalidValue, "abort reason");
      }
      const std::uint16_t size = r.u16("detail length");
      auto detail = r.raw(size, "detail");
      message.body = Abort{static_cast<ErrorCode>(reason), std::string(detail.begin(), detail.end())};
      break;
    }
    default:
      fail(DecodeErrc::UnknownMsgType, "body");
  }
  if (r.remaining() != 0) fail(DecodeErrc::TrailingBytes, "after payload");
  return message;
}

}  // namespace smh
