#include "sfl/transport/bus.hpp"

#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <thread>

namespace sfl {

struct SocketLink::Impl {
  int fds[2] = {-1, -1};
  std::chrono::milliseconds timeout;
  std::thread writer;
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::vector<std::uint8_t>> queue;
  bool stop = false;
  std::string write_error;

  void write_loop() {
    for (;;) {
      std::vector<std::uint8_t> frame;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return stop || !queue.empty(); });
        if (queue.empty()) return;
        frame = std::move(queue.front());
        queue.pop_front();
      }
      std::size_t off = 0;
      while (off < frame.size()) {
        const ssize_t n = ::send(fds[0], frame.data() + off, frame.size() - off, MSG_NOSIGNAL);
        if (n < 0) {
          if (errno == EINTR) continue;
          std::lock_guard lock(mu);
          write_error = std::strerror(errno);
          return;
        }
        off += static_cast<std::size_t>(n);
      }
    }
  }

  void read_exact(std::uint8_t* dst, std::size_t n) {
    std::size_t off = 0;
    while (off < n) {
      pollfd p{fds[1], POLLIN, 0};
      const int ready = ::poll(&p, 1, static_cast<int>(timeout.count()));
      if (ready < 0 && errno == EINTR) continue;
      if (ready <= 0) {
        std::lock_guard lock(mu);
        throw TransportError("socket link: no progress within timeout" +
                             (write_error.empty() ? std::string() : " (writer: " + write_error + ")"));
      }
      const ssize_t got = ::recv(fds[1], dst + off, n - off, 0);
      if (got < 0 && errno == EINTR) continue;
      if (got <= 0) throw TransportError("socket link: peer closed");
      off += static_cast<std::size_t>(got);
    }
  }
};

SocketLink::SocketLink(std::chrono::milliseconds timeout) : impl_(std::make_unique<Impl>()) {
  impl_->timeout = timeout;
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, impl_->fds) != 0) {
    throw TransportError(std::string("socketpair: ") + std::strerror(errno));
  }
  impl_->writer = std::thread([this] { impl_->write_loop(); });
}

SocketLink::~SocketLink() {
  {
    std::lock_guard lock(impl_->mu);
    impl_->stop = true;
  }
  impl_->cv.notify_all();
  ::shutdown(impl_->fds[0], SHUT_RDWR);
  if (impl_->writer.joinable()) impl_->writer.join();
  ::close(impl_->fds[0]);
  ::close(impl_->fds[1]);
}

std::vector<std::uint8_t> SocketLink::carry(std::span<const std::uint8_t> frame) {
  {
    std::lock_guard lock(impl_->mu);
    impl_->queue.emplace_back(frame.begin(), frame.end());
  }
  impl_->cv.notify_one();
  std::vector<std::uint8_t> out(kFrameHeaderBytes);
  impl_->read_exact(out.data(), kFrameHeaderBytes);
  std::uint32_t len;
  std::memcpy(&len, out.data(), sizeof(len));
  out.resize(kFrameHeaderBytes + len);
  impl_->read_exact(out.data() + kFrameHeaderBytes, len);
  return out;
}

Bus::Bus(std::unique_ptr<Link> link, bool record) : link_(std::move(link)), record_(record) {}

Message Bus::send(const Message& m) {
  const auto frame = encode(m);
  const auto received = link_->carry(frame);
  if (record_) transcript_.insert(transcript_.end(), received.begin(), received.end());
  ++frames_;
  return decode(received);
}

std::vector<Message> Bus::deliver_phase(std::vector<std::pair<std::uint32_t, Message>> posted) {
  std::stable_sort(posted.begin(), posted.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Message> out;
  out.reserve(posted.size());
  for (auto& [sender, msg] : posted) out.push_back(send(msg));
  return out;
}

}  // namespace sfl
