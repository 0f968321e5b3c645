#pragma once

// Frame layout (all integers big-endian):
//
//   u32 length            bytes that follow: 18 + payload
//   u8  version           0x01
//   u8  msg_type          kind << 6 | sender << 4 | body
//   u8  session_id[16]
//   ... payload
//
// Payloads:
//   KeyShare              u32 k, f64 delta, u32 M, u32 N, u8 flags
//                         (bit0 explicit A, bit1 permutation, bit2 padding),
//                         A as M*N f64 or a 32-byte digest, U as M f64,
//                         [u32 n, n * u32 permutation], [WireHash z1, WireHash z2]
//   HashSubmission        WireHash = u32 k, u32 count, count * u16 components
//   DistanceResult        u64 numerator, u64 denominator (lowest terms), u32 M_effective
//   HammingOracleRequest  u32 k, u32 symbols, ceil(symbols*k/2 / 8) bytes of bits, MSB first
//   HammingOracleResponse u64 distance, u32 symbols
//   Abort                 u8 reason, u16 detail length, UTF-8 detail

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "smh/errors.hpp"
#include "smh/messages.hpp"

namespace smh {

inline constexpr std::uint8_t kWireVersion = 0x01;
inline constexpr std::size_t kLengthPrefixSize = 4;
inline constexpr std::size_t kFrameHeaderSize = 18;
inline constexpr std::uint32_t kMaxFrameLength = 1u << 28;
inline constexpr int kMaxWireModulus = 65534;

enum class DecodeErrc : std::uint8_t {
  Truncated,
  BadLength,
  FrameTooLarge,
  VersionUnsupported,
  UnknownMsgType,
  InvalidModulus,
  ComponentOutOfRange,
  NonBijectivePermutation,
  ZeroDenominator,
  NonCanonical,
  NonFiniteReal,
  InvalidValue,
  InvalidRingCode,
  DimensionMismatch,
  TrailingBytes,
};

std::string_view to_string(DecodeErrc errc) noexcept;

class DecodeFailure : public Error {
 public:
  DecodeFailure(DecodeErrc errc, const std::string& what)
      : Error(ErrorCode::DecodeError, what), errc_(errc) {}
  DecodeErrc errc() const noexcept { return errc_; }

 private:
  DecodeErrc errc_;
};

struct FrameHeader {
  std::uint32_t length = 0;
  std::uint8_t version = 0;
  std::uint8_t msg_type = 0;
  SessionId session{};
};

/// Full frame, length prefix included. Throws EncodingError on invalid messages.
std::vector<std::uint8_t> encode_message(const ProtocolMessage& message);

/// Inverse of encode_message; throws DecodeFailure on any malformed input.
ProtocolMessage decode_message(std::span<const std::uint8_t> frame);

/// Reads just the fixed header, if enough bytes are present.
std::optional<FrameHeader> peek_header(std::span<const std::uint8_t> frame) noexcept;

/// The WireHash encoding alone (8 + 2 * count bytes).
std::vector<std::uint8_t> encode_wire_hash(const HashVector& h);

std::uint8_t message_type_byte(ProtocolKind kind, Role sender, const MessageBody& body) noexcept;

}  // namespace smh
