#include "dnf/external.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <mutex>
#include <sstream>
#include <stdexcept>

#include "dnf/errors.hpp"
#include "dnf/io.hpp"

namespace dnf {

namespace {

using Clock = std::chrono::steady_clock;

int remaining_ms(Clock::time_point deadline) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    return left < 0 ? 0 : static_cast<int>(left);
}

void wait_ready(int fd, short events, Clock::time_point deadline, const char* what) {
    pollfd pfd{fd, events, 0};
    const int rc = ::poll(&pfd, 1, remaining_ms(deadline));
    if (rc == 0) throw TransportError(std::string("timeout waiting to ") + what);
    if (rc < 0) throw TransportError(std::string("poll failed: ") + std::strerror(errno));
    if (pfd.revents & POLLNVAL) throw TransportError("peer pipe invalid");
}

void read_exact(int fd, void* buf, std::size_t len, Clock::time_point deadline) {
    auto* p = static_cast<std::uint8_t*>(buf);
    while (len > 0) {
        wait_ready(fd, POLLIN, deadline, "read");
        const ssize_t n = ::read(fd, p, len);
        if (n == 0) throw TransportError("peer closed the connection mid-frame");
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            throw TransportError(std::string("read failed: ") + std::strerror(errno));
        }
        p += n;
        len -= static_cast<std::size_t>(n);
    }
}

void write_all(int fd, const void* buf, std::size_t len, Clock::time_point deadline) {
    const auto* p = static_cast<const std::uint8_t*>(buf);
    while (len > 0) {
        wait_ready(fd, POLLOUT, deadline, "write");
        const ssize_t n = ::write(fd, p, len);
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            throw TransportError(std::string("write failed: ") + std::strerror(errno));
        }
        p += n;
        len -= static_cast<std::size_t>(n);
    }
}

std::uint32_t read_u32(int fd, Clock::time_point deadline) {
    std::uint8_t b[4];
    read_exact(fd, b, 4, deadline);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

Tensor read_tensor_frame(int fd, Clock::time_point deadline) {
    std::uint8_t head[7];
    read_exact(fd, head, 7, deadline);
    if (std::memcmp(head, "DNFT", 4) != 0) throw TransportError("malformed frame: bad container magic");
    if (head[4] != 1) throw TransportError("malformed frame: unsupported container version");
    if (head[5] != 0) throw TransportError("malformed frame: unsupported dtype");
    const int ndim = head[6];
    Shape dims(static_cast<std::size_t>(ndim));
    std::size_t numel = 1;
    for (int i = 0; i < ndim; ++i) {
        dims[static_cast<std::size_t>(i)] = read_u32(fd, deadline);
        numel *= dims[static_cast<std::size_t>(i)];
    }
    std::vector<float> payload(numel);
    if (numel > 0) read_exact(fd, payload.data(), numel * sizeof(float), deadline);
    Tensor out{dims};
    for (std::size_t i = 0; i < numel; ++i) out.data()[i] = static_cast<double>(payload[i]);
    return out;
}

}  // namespace

struct ExternalPredictor::Impl {
    std::vector<std::string> command;
    int timeout_ms;
    pid_t pid = -1;
    int to_peer = -1;    // our write end of the peer's stdin
    int from_peer = -1;  // our read end of the peer's stdout
    mutable std::mutex mutex;

    void start() {
        int in_pipe[2], out_pipe[2];
        if (::pipe(in_pipe) != 0 || ::pipe(out_pipe) != 0)
            throw TransportError("cannot create peer pipes");
        pid = ::fork();
        if (pid < 0) throw TransportError("cannot fork peer process");
        if (pid == 0) {
            ::dup2(in_pipe[0], 0);
            ::dup2(out_pipe[1], 1);
            ::close(in_pipe[0]);
            ::close(in_pipe[1]);
            ::close(out_pipe[0]);
            ::close(out_pipe[1]);
            std::vector<char*> argv;
            argv.reserve(command.size() + 1);
            for (auto& s : command) argv.push_back(s.data());
            argv.push_back(nullptr);
            ::execvp(argv[0], argv.data());
            ::_exit(127);
        }
        ::close(in_pipe[0]);
        ::close(out_pipe[1]);
        to_peer = in_pipe[1];
        from_peer = out_pipe[0];
        ::signal(SIGPIPE, SIG_IGN);

        const auto deadline = Clock::now() + std::chrono::milliseconds(timeout_ms);
        std::string line;
        for (;;) {
            char c;
            read_exact(from_peer, &c, 1, deadline);
            if (c == '\n') break;
            line.push_back(c);
            if (line.size() > 64) throw TransportError("handshake line too long");
        }
        if (line != "DNFP 1")
            throw TransportError("unexpected handshake line: \"" + line + "\"");
    }

    void stop() {
        if (to_peer >= 0) ::close(to_peer);
        if (from_peer >= 0) ::close(from_peer);
        to_peer = from_peer = -1;
        if (pid > 0) {
            // Closing stdin asks the peer to exit; escalate if it lingers.
            for (int i = 0; i < 20; ++i) {
                if (::waitpid(pid, nullptr, WNOHANG) == pid) {
                    pid = -1;
                    return;
                }
                ::usleep(100 * 1000);
            }
            ::kill(pid, SIGKILL);
            ::waitpid(pid, nullptr, 0);
            pid = -1;
        }
    }
};

ExternalPredictor::ExternalPredictor(std::vector<std::string> command, int timeout_ms)
    : impl_(std::make_unique<Impl>()) {
    if (command.empty()) throw std::invalid_argument("peer command is empty");
    if (timeout_ms <= 0) throw std::invalid_argument("timeout must be positive");
    impl_->command = std::move(command);
    impl_->timeout_ms = timeout_ms;
    try {
        impl_->start();
    } catch (...) {
        impl_->stop();
        throw;
    }
}

ExternalPredictor::~ExternalPredictor() { impl_->stop(); }

Tensor ExternalPredictor::predict(const Tensor& x, int t, const NoiseSchedule& schedule) const {
    schedule.alpha_bar(t);  // range check
    std::lock_guard<std::mutex> lock(impl_->mutex);
    if (impl_->pid < 0) throw TransportError("peer is not running");
    const auto deadline = Clock::now() + std::chrono::milliseconds(impl_->timeout_ms);

    std::ostringstream frame(std::ios::binary);
    const auto ut = static_cast<std::uint32_t>(t);
    const std::uint8_t tb[4] = {static_cast<std::uint8_t>(ut), static_cast<std::uint8_t>(ut >> 8),
                                static_cast<std::uint8_t>(ut >> 16), static_cast<std::uint8_t>(ut >> 24)};
    frame.write(reinterpret_cast<const char*>(tb), 4);
    write_tensor(frame, x);
    const std::string bytes = frame.str();
    write_all(impl_->to_peer, bytes.data(), bytes.size(), deadline);

    std::uint8_t status;
    read_exact(impl_->from_peer, &status, 1, deadline);
    if (status == 1) {
        const std::uint32_t len = read_u32(impl_->from_peer, deadline);
        if (len > 1 << 20) throw TransportError("peer error message too long");
        std::string msg(len, '\0');
        if (len > 0) read_exact(impl_->from_peer, msg.data(), len, deadline);
        throw TransportError("peer reported error: " + msg);
    }
    if (status != 0) throw TransportError("malformed frame: unknown status byte");
    Tensor out = read_tensor_frame(impl_->from_peer, deadline);
    if (!out.same_shape(x))
        throw TransportError("peer returned wrong shape: expected " + std::to_string(x.size()) +
                             " elements, got " + std::to_string(out.size()));
    return out;
}

std::string ExternalPredictor::id() const {
    std::string joined;
    for (const auto& part : impl_->command) {
        if (!joined.empty()) joined.push_back(' ');
        joined += part;
    }
    return "external:" + joined;
}

}  // namespace dnf
