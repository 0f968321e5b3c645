#pragma once

// Framed, ordered byte transports. A frame is the full output of
// encode_message(), length prefix included.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "smh/errors.hpp"

namespace smh {

using Frame = std::vector<std::uint8_t>;

class Endpoint {
 public:
  virtual ~Endpoint() = default;

  /// Writes one frame atomically. Throws TransportClosed once the peer is gone.
  virtual void send(std::span<const std::uint8_t> frame) = 0;

  /// Blocks for the next frame; nullopt when the connection has closed.
  /// Throws DecodeFailure if the peer announces an impossible frame length.
  virtual std::optional<Frame> receive() = 0;

  /// Closes both directions and wakes a blocked receive().
  virtual void close() = 0;

  virtual std::string describe() const = 0;
};

/// Two connected in-process endpoints.
std::pair<std::shared_ptr<Endpoint>, std::shared_ptr<Endpoint>> make_in_process_pair();

struct Address {
  std::string host;
  std::uint16_t port = 0;

  /// Accepts "host:port", ":port" and "port".
  static Address parse(const std::string& text);
  std::string to_string() const;
};

std::shared_ptr<Endpoint> tcp_connect(const Address& address);

class TcpListener {
 public:
  /// Binds and listens; port 0 picks an ephemeral port. Throws IoError.
  explicit TcpListener(const Address& address);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  /// Blocks for the next connection; nullptr after shutdown().
  std::shared_ptr<Endpoint> accept();
  void shutdown();
  Address local_address() const;

 private:
  int fd_ = -1;
  Address bound_;
};

}  // namespace smh
