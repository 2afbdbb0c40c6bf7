#include <gtest/gtest.h>

#include <chrono>
#include <future>
#include <thread>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include "secpower/transport.hpp"

using namespace secpower;
using namespace secpower::transport;
using namespace std::chrono_literals;

namespace {

wire::Message request(std::uint64_t k) {
  return wire::make_request("sess", k, wire::MatVecRequest{{mpz_class(k), 7}});
}

// Connected (client, worker) endpoints over loopback TCP.
std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> tcp_pair() {
  TcpListener listener(0, "127.0.0.1");
  auto pending = std::async(std::launch::async, [&] { return listener.accept(5s); });
  auto client = connect_tcp("127.0.0.1", listener.port(), 5s);
  auto worker = pending.get();
  if (!worker) throw std::runtime_error("accept timed out");
  return {std::move(client), std::move(worker)};
}

void echo_exchange(Channel& client, Channel& worker) {
  for (std::uint64_t k = 0; k < 5; ++k) {
    client.send(request(k));
    const wire::Message got = worker.receive(1s);
    EXPECT_EQ(got, request(k));
    worker.send(wire::make_ack("sess"));
    EXPECT_EQ(client.receive(1s), wire::make_ack("sess"));
  }
}

}  // namespace

TEST(Transport, InProcessDeliversInOrder) {
  auto [client, worker] = make_inprocess_pair();
  echo_exchange(*client, *worker);
}

TEST(Transport, TcpDeliversInOrder) {
  auto [client, worker] = tcp_pair();
  echo_exchange(*client, *worker);
}

TEST(Transport, AlternationIsEnforced) {
  auto [client, worker] = make_inprocess_pair();
  EXPECT_THROW(client->receive(10ms), AlternationViolation);
  EXPECT_THROW(worker->send(wire::make_ack("s")), AlternationViolation);
  client->send(request(0));
  EXPECT_THROW(client->send(request(1)), AlternationViolation);
  worker->receive(1s);
  EXPECT_THROW(worker->receive(10ms), AlternationViolation);
}

TEST(Transport, ReceiveTimesOut) {
  auto [client, worker] = make_inprocess_pair();
  EXPECT_THROW(worker->receive(20ms), Timeout);
  auto [tc, tw] = tcp_pair();
  const auto start = std::chrono::steady_clock::now();
  EXPECT_THROW(tw->receive(50ms), Timeout);
  EXPECT_GE(std::chrono::steady_clock::now() - start, 45ms);
}

TEST(Transport, ClosedPeerIsReported) {
  {
    auto [client, worker] = make_inprocess_pair();
    client->send(request(0));
    client->close();
    // Messages queued before the close are still delivered.
    EXPECT_EQ(worker->receive(1s), request(0));
    EXPECT_THROW(worker->send(wire::make_ack("sess")), ChannelClosed);
  }
  {
    auto [client, worker] = make_inprocess_pair();
    worker->close();
    EXPECT_THROW(client->send(request(0)), ChannelClosed);
  }
  {
    auto [client, worker] = tcp_pair();
    client->send(request(0));
    worker.reset();
    EXPECT_THROW(client->receive(1s), ChannelClosed);
  }
}

TEST(Transport, ConnectFailureIsTransportError) {
  // Bind and release a port so that nothing is listening on it.
  std::uint16_t port = 0;
  {
    TcpListener l(0, "127.0.0.1");
    port = l.port();
  }
  EXPECT_THROW(connect_tcp("127.0.0.1", port, 500ms), TransportError);
  EXPECT_THROW(connect_tcp("no-such-host.invalid", 1, 500ms), TransportError);
}

TEST(Transport, GarbageFrameIsWireError) {
  TcpListener listener(0, "127.0.0.1");
  std::thread raw([port = listener.port()] {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
    ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
    const std::string frame = wire::length_prefix(5) + "hello";
    ::send(fd, frame.data(), frame.size(), 0);
    std::this_thread::sleep_for(100ms);
    ::close(fd);
  });
  auto worker = listener.accept(5s);
  ASSERT_TRUE(worker);
  EXPECT_THROW(worker->receive(2s), wire::WireError);
  raw.join();
}

TEST(Transport, ListenerAcceptTimesOut) {
  TcpListener listener(0, "127.0.0.1");
  EXPECT_EQ(listener.accept(20ms), nullptr);
  EXPECT_THROW(TcpListener(listener.port(), "127.0.0.1"), TransportError);
}
