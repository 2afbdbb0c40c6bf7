#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>

#include "secpower/message.hpp"

namespace secpower::transport {

inline constexpr std::uint16_t kDefaultPort = 7741;
inline constexpr std::chrono::milliseconds kDefaultTimeout{30000};

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ChannelClosed : public TransportError {
 public:
  using TransportError::TransportError;
};

class Timeout : public TransportError {
 public:
  using TransportError::TransportError;
};

// Programming error: the request/response alternation was broken.
class AlternationViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class Role { ClientEnd, WorkerEnd };

// One endpoint of a client/worker connection. A client end must receive a
// reply before sending again; a worker end may only send in reply to a
// received message.
class Channel {
 public:
  explicit Channel(Role role) : role_(role) {}
  virtual ~Channel() = default;
  Channel(const Channel&) = delete;
  Channel& operator=(const Channel&) = delete;

  void send(const wire::Message& msg);
  wire::Message receive(std::chrono::milliseconds timeout = kDefaultTimeout);
  virtual void close() = 0;

  Role role() const { return role_; }

 protected:
  virtual void do_send(const wire::Message& msg) = 0;
  virtual wire::Message do_receive(std::chrono::milliseconds timeout) = 0;

 private:
  Role role_;
  bool outstanding_ = false;
};

// Two connected endpoints sharing a pair of in-memory FIFO queues.
std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_inprocess_pair();

// TCP endpoint framed as a 4-byte big-endian length followed by the JSON body.
class TcpChannel final : public Channel {
 public:
  TcpChannel(int fd, Role role);
  ~TcpChannel() override;

  void close() override;

 protected:
  void do_send(const wire::Message& msg) override;
  wire::Message do_receive(std::chrono::milliseconds timeout) override;

 private:
  int fd_;
};

std::unique_ptr<Channel> connect_tcp(const std::string& host, std::uint16_t port,
                                     std::chrono::milliseconds timeout = kDefaultTimeout);

class TcpListener {
 public:
  // Port 0 binds an ephemeral port.
  explicit TcpListener(std::uint16_t port, const std::string& bind_address = "0.0.0.0");
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  // Waits up to timeout for a connection; returns nullptr on timeout.
  std::unique_ptr<Channel> accept(std::chrono::milliseconds timeout);
  void close();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

}  // namespace secpower::transport
