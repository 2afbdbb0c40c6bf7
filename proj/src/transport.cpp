#include "secpower/transport.hpp"

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

namespace secpower::transport {

void Channel::send(const wire::Message& msg) {
  if (role_ == Role::ClientEnd && outstanding_) {
    throw AlternationViolation("client sent a second message before receiving a reply");
  }
  if (role_ == Role::WorkerEnd && !outstanding_) {
    throw AlternationViolation("worker sent a message that answers nothing");
  }
  do_send(msg);
  outstanding_ = role_ == Role::ClientEnd;
}

wire::Message Channel::receive(std::chrono::milliseconds timeout) {
  if (role_ == Role::ClientEnd && !outstanding_) {
    throw AlternationViolation("client is waiting for a reply it never asked for");
  }
  if (role_ == Role::WorkerEnd && outstanding_) {
    throw AlternationViolation("worker must answer before receiving again");
  }
  wire::Message msg = do_receive(timeout);
  outstanding_ = role_ == Role::WorkerEnd;
  return msg;
}

namespace {

struct SharedQueues {
  std::mutex mutex;
  std::condition_variable ready;
  std::deque<wire::Message> to_worker;
  std::deque<wire::Message> to_client;
  bool closed = false;
};

class InProcessChannel final : public Channel {
 public:
  InProcessChannel(std::shared_ptr<SharedQueues> queues, Role role)
      : Channel(role), queues_(std::move(queues)) {}
  ~InProcessChannel() override { close(); }

  void close() override {
    {
      std::lock_guard lock(queues_->mutex);
      queues_->closed = true;
    }
    queues_->ready.notify_all();
  }

 protected:
  void do_send(const wire::Message& msg) override {
    {
      std::lock_guard lock(queues_->mutex);
      if (queues_->closed) throw ChannelClosed("send on a closed channel");
      outbox().push_back(msg);
    }
    queues_->ready.notify_all();
  }

  wire::Message do_receive(std::chrono::milliseconds timeout) override {
    std::unique_lock lock(queues_->mutex);
    const bool woke = queues_->ready.wait_for(
        lock, timeout, [&] { return !inbox().empty() || queues_->closed; });
    if (!inbox().empty()) {
      wire::Message msg = std::move(inbox().front());
      inbox().pop_front();
      return msg;
    }
    if (queues_->closed) throw ChannelClosed("channel closed by peer");
    (void)woke;
    throw Timeout("receive timed out");
  }

 private:
  std::deque<wire::Message>& outbox() {
    return role() == Role::ClientEnd ? queues_->to_worker : queues_->to_client;
  }
  std::deque<wire::Message>& inbox() {
    return role() == Role::ClientEnd ? queues_->to_client : queues_->to_worker;
  }

  std::shared_ptr<SharedQueues> queues_;
};

constexpr std::uint32_t kMaxFrameBytes = 1u << 30;

using Clock = std::chrono::steady_clock;

int remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
  return left.count() > 0 ? static_cast<int>(left.count()) : 0;
}

void read_exact(int fd, char* buf, std::size_t len, Clock::time_point deadline) {
  std::size_t got = 0;
  while (got < len) {
    pollfd pfd{fd, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, remaining_ms(deadline));
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("poll failed: ") + std::strerror(errno));
    }
    if (ready == 0) throw Timeout("receive timed out");
    const ssize_t n = ::recv(fd, buf + got, len - got, 0);
    if (n == 0) throw ChannelClosed("connection closed by peer");
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw TransportError(std::string("recv failed: ") + std::strerror(errno));
    }
    got += static_cast<std::size_t>(n);
  }
}

std::string errno_text(const std::string& what) { return what + ": " + std::strerror(errno); }

}  // namespace

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_inprocess_pair() {
  auto queues = std::make_shared<SharedQueues>();
  return {std::make_unique<InProcessChannel>(queues, Role::ClientEnd),
          std::make_unique<InProcessChannel>(queues, Role::WorkerEnd)};
}

TcpChannel::TcpChannel(int fd, Role role) : Channel(role), fd_(fd) {
  const int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

TcpChannel::~TcpChannel() { close(); }

void TcpChannel::close() {
  if (fd_ >= 0) {
    ::shutdown(fd_, SHUT_RDWR);
    ::close(fd_);
    fd_ = -1;
  }
}

void TcpChannel::do_send(const wire::Message& msg) {
  if (fd_ < 0) throw ChannelClosed("send on a closed channel");
  const std::string frame = wire::serialize(msg);
  std::size_t sent = 0;
  while (sent < frame.size()) {
    const ssize_t n = ::send(fd_, frame.data() + sent, frame.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EPIPE || errno == ECONNRESET) throw ChannelClosed("connection closed by peer");
      throw TransportError(errno_text("send failed"));
    }
    sent += static_cast<std::size_t>(n);
  }
}

wire::Message TcpChannel::do_receive(std::chrono::milliseconds timeout) {
  if (fd_ < 0) throw ChannelClosed("receive on a closed channel");
  const auto deadline = Clock::now() + timeout;
  char header[4];
  read_exact(fd_, header, sizeof(header), deadline);
  const std::uint32_t length = wire::read_length_prefix(std::string_view(header, 4));
  if (length > kMaxFrameBytes) throw TransportError("frame exceeds the size limit");
  std::string body(length, '\0');
  read_exact(fd_, body.data(), length, deadline);
  return wire::deserialize_body(body);
}

std::unique_ptr<Channel> connect_tcp(const std::string& host, std::uint16_t port,
                                     std::chrono::milliseconds timeout) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* result = nullptr;
  const int rc = ::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &result);
  if (rc != 0) throw TransportError("cannot resolve " + host + ": " + ::gai_strerror(rc));
  std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(result, &::freeaddrinfo);

  std::string last_error = "no addresses";
  for (addrinfo* ai = result; ai != nullptr; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) {
      last_error = errno_text("socket");
      continue;
    }
    const int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    int err = 0;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) < 0) {
      if (errno != EINPROGRESS) {
        err = errno;
      } else {
        pollfd pfd{fd, POLLOUT, 0};
        const int ready = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
        if (ready <= 0) {
          err = ready == 0 ? ETIMEDOUT : errno;
        } else {
          socklen_t len = sizeof(err);
          ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        }
      }
    }
    if (err == 0) {
      ::fcntl(fd, F_SETFL, flags);
      return std::make_unique<TcpChannel>(fd, Role::ClientEnd);
    }
    last_error = std::string("connect to ") + host + ":" + std::to_string(port) + ": " +
                 std::strerror(err);
    ::close(fd);
  }
  throw TransportError(last_error);
}

TcpListener::TcpListener(std::uint16_t port, const std::string& bind_address) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw TransportError(errno_text("socket"));
  const int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, bind_address.c_str(), &addr.sin_addr) != 1) {
    ::close(fd_);
    throw TransportError("bad bind address " + bind_address);
  }
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0 || ::listen(fd_, 16) < 0) {
    const std::string msg = errno_text("cannot listen on port " + std::to_string(port));
    ::close(fd_);
    throw TransportError(msg);
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() { close(); }

void TcpListener::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

std::unique_ptr<Channel> TcpListener::accept(std::chrono::milliseconds timeout) {
  if (fd_ < 0) throw ChannelClosed("listener closed");
  pollfd pfd{fd_, POLLIN, 0};
  const int ready = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
  if (ready < 0) {
    if (errno == EINTR) return nullptr;
    throw TransportError(errno_text("poll on listener"));
  }
  if (ready == 0) return nullptr;
  const int fd = ::accept(fd_, nullptr, nullptr);
  if (fd < 0) {
    if (errno == EINTR || errno == EAGAIN || errno == ECONNABORTED) return nullptr;
    throw TransportError(errno_text("accept"));
  }
  return std::make_unique<TcpChannel>(fd, Role::WorkerEnd);
}

}  // namespace secpower::transport
