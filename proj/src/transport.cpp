#include "smh/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <charconv>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>

#include "smh/wire.hpp"

namespace smh {

namespace {

std::uint32_t read_length(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

void check_announced_length(std::uint32_t length) {
  if (length > kMaxFrameLength) {
    throw DecodeFailure(DecodeErrc::FrameTooLarge, "peer announced a " + std::to_string(length) + "-byte frame");
  }
  if (length < kFrameHeaderSize) {
    throw DecodeFailure(DecodeErrc::BadLength, "peer announced a frame shorter than its header");
  }
}

struct Channel {
  std::mutex mutex;
  std::condition_variable ready;
  std::deque<Frame> frames;
  bool closed = false;
};

class InProcessEndpoint final : public Endpoint {
 public:
  InProcessEndpoint(std::shared_ptr<Channel> in, std::shared_ptr<Channel> out, std::string name)
      : in_(std::move(in)), out_(std::move(out)), name_(std::move(name)) {}
  ~InProcessEndpoint() override { close(); }

  void send(std::span<const std::uint8_t> frame) override {
    std::lock_guard lock(out_->mutex);
    if (out_->closed) throw TransportClosed("in-process peer closed");
    out_->frames.emplace_back(frame.begin(), frame.end());
    out_->ready.notify_one();
  }

  std::optional<Frame> receive() override {
    std::unique_lock lock(in_->mutex);
    in_->ready.wait(lock, [&] { return !in_->frames.empty() || in_->closed; });
    if (in_->frames.empty()) return std::nullopt;
    Frame frame = std::move(in_->frames.front());
    in_->frames.pop_front();
    if (frame.size() >= kLengthPrefixSize) check_announced_length(read_length(frame.data()));
    return frame;
  }

  void close() override {
    for (auto* channel : {in_.get(), out_.get()}) {
      std::lock_guard lock(channel->mutex);
      channel->closed = true;
      channel->ready.notify_all();
    }
  }

  std::string describe() const override { return name_; }

 private:
  std::shared_ptr<Channel> in_;
  std::shared_ptr<Channel> out_;
  std::string name_;
};

class TcpEndpoint final : public Endpoint {
 public:
  TcpEndpoint(int fd, std::string peer) : fd_(fd), peer_(std::move(peer)) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  ~TcpEndpoint() override {
    close();
    ::close(fd_);
  }

  void send(std::span<const std::uint8_t> frame) override {
    std::lock_guard lock(write_mutex_);
    std::size_t sent = 0;
    while (sent < frame.size()) {
      const ssize_t n = ::send(fd_, frame.data() + sent, frame.size() - sent, MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw TransportClosed("send to " + peer_ + " failed: " + std::strerror(errno));
      sent += static_cast<std::size_t>(n);
    }
  }

  std::optional<Frame> receive() override {
    std::lock_guard lock(read_mutex_);
    Frame frame(kLengthPrefixSize);
    if (!read_exact(frame.data(), kLengthPrefixSize)) return std::nullopt;
    const std::uint32_t length = read_length(frame.data());
    check_announced_length(length);
    frame.resize(kLengthPrefixSize + length);
    if (!read_exact(frame.data() + kLengthPrefixSize, length)) return std::nullopt;
    return frame;
  }

  void close() override {
    if (!closed_.exchange(true)) ::shutdown(fd_, SHUT_RDWR);
  }

  std::string describe() const override { return "tcp:" + peer_; }

 private:
  bool read_exact(std::uint8_t* out, std::size_t size) {
    std::size_t got = 0;
    while (got < size) {
      const ssize_t n = ::recv(fd_, out + got, size - got, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return false;
      got += static_cast<std::size_t>(n);
    }
    return true;
  }

  int fd_;
  std::string peer_;
  std::mutex write_mutex_;
  std::mutex read_mutex_;
  std::atomic<bool> closed_{false};
};

std::string describe_peer(const sockaddr_storage& addr) {
  char host[NI_MAXHOST];
  char port[NI_MAXSERV];
  if (::getnameinfo(reinterpret_cast<const sockaddr*>(&addr), sizeof addr, host, sizeof host, port,
                    sizeof port, NI_NUMERICHOST | NI_NUMERICSERV) != 0) {
    return "?";
  }
  return std::string(host) + ":" + port;
}

struct AddrInfo {
  addrinfo* list = nullptr;
  ~AddrInfo() {
    if (list) ::freeaddrinfo(list);
  }
};

void resolve(const Address& address, bool passive, AddrInfo& out) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  const std::string port = std::to_string(address.port);
  const char* host = address.host.empty() ? (passive ? nullptr : "127.0.0.1") : address.host.c_str();
  const int rc = ::getaddrinfo(host, port.c_str(), &hints, &out.list);
  if (rc != 0) throw IoError("cannot resolve " + address.to_string() + ": " + ::gai_strerror(rc));
}

}  // namespace

std::pair<std::shared_ptr<Endpoint>, std::shared_ptr<Endpoint>> make_in_process_pair() {
  auto a_to_b = std::make_shared<Channel>();
  auto b_to_a = std::make_shared<Channel>();
  return {std::make_shared<InProcessEndpoint>(b_to_a, a_to_b, "in-process:a"),
          std::make_shared<InProcessEndpoint>(a_to_b, b_to_a, "in-process:b")};
}

Address Address::parse(const std::string& text) {
  Address address;
  std::string port_text = text;
  if (const auto colon = text.rfind(':'); colon != std::string::npos) {
    address.host = text.substr(0, colon);
    port_text = text.substr(colon + 1);
    if (address.host.size() >= 2 && address.host.front() == '[' && address.host.back() == ']') {
      address.host = address.host.substr(1, address.host.size() - 2);
    }
  }
  unsigned value = 0;
  const auto [end, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), value);
  if (port_text.empty() || ec != std::errc{} || end != port_text.data() + port_text.size() || value > 65535) {
    throw InvalidParameter("invalid address '" + text + "', expected host:port");
  }
  address.port = static_cast<std::uint16_t>(value);
  return address;
}

std::string Address::to_string() const {
  const bool v6 = host.find(':') != std::string::npos;
  return (v6 ? "[" + host + "]" : host) + ":" + std::to_string(port);
}

std::shared_ptr<Endpoint> tcp_connect(const Address& address) {
  AddrInfo info;
  resolve(address, false, info);
  std::string last_error = "no addresses";
  for (addrinfo* ai = info.list; ai; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
      return std::make_shared<TcpEndpoint>(fd, address.to_string());
    }
    last_error = std::strerror(errno);
    ::close(fd);
  }
  throw TransportClosed("cannot connect to " + address.to_string() + ": " + last_error);
}

TcpListener::TcpListener(const Address& address) {
  AddrInfo info;
  resolve(address, true, info);
  std::string last_error = "no addresses";
  for (addrinfo* ai = info.list; ai; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, 64) == 0) {
      fd_ = fd;
      break;
    }
    last_error = std::strerror(errno);
    ::close(fd);
  }
  if (fd_ < 0) throw IoError("cannot listen on " + address.to_string() + ": " + last_error);
  sockaddr_storage local{};
  socklen_t len = sizeof local;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&local), &len);
  const std::string text = describe_peer(local);
  bound_ = Address::parse(text);
}

TcpListener::~TcpListener() {
  shutdown();
  if (fd_ >= 0) ::close(fd_);
}

std::shared_ptr<Endpoint> TcpListener::accept() {
  for (;;) {
    sockaddr_storage peer{};
    socklen_t len = sizeof peer;
    const int fd = ::accept4(fd_, reinterpret_cast<sockaddr*>(&peer), &len, SOCK_CLOEXEC);
    if (fd >= 0) return std::make_shared<TcpEndpoint>(fd, describe_peer(peer));
    if (errno == EINTR || errno == ECONNABORTED) continue;
    return nullptr;
  }
}

void TcpListener::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

Address TcpListener::local_address() const { return bound_; }

}  // namespace smh
