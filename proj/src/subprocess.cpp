/*
 * Copyright 2026 The ksynth Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "ksynth/subprocess.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>
#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include <vector>

namespace ksynth {
namespace {

using Clock = std::chrono::steady_clock;

struct Pipe {
  int fd[2] = {-1, -1};
  Pipe() {
    if (::pipe2(fd, O_CLOEXEC) != 0) throw SubprocessError(std::string("pipe: ") + std::strerror(errno));
  }
};

void close_fd(int& fd) {
  if (fd >= 0) ::close(fd);
  fd = -1;
}

// Spawns /bin/sh -c command with the given pipe ends as fds 0..2 (-1 keeps
// the parent's descriptor).
pid_t spawn(const std::string& command, int in, int out, int err) {
  const pid_t pid = ::fork();
  if (pid < 0) throw SubprocessError(std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    if (in >= 0) ::dup2(in, 0);
    if (out >= 0) ::dup2(out, 1);
    if (err >= 0) ::dup2(err, 2);
    ::signal(SIGPIPE, SIG_DFL);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  return pid;
}

int decode_status(int status) { return WIFEXITED(status) ? WEXITSTATUS(status) : -1; }

int remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  return left < 0 ? 0 : static_cast<int>(left);
}

// Writes to a pipe whose reader may already be gone.
ssize_t write_nosig(int fd, const char* data, std::size_t n) {
  sigset_t block, old;
  sigemptyset(&block);
  sigaddset(&block, SIGPIPE);
  pthread_sigmask(SIG_BLOCK, &block, &old);
  const ssize_t w = ::write(fd, data, n);
  const int saved = errno;
  if (w < 0 && saved == EPIPE) {
    // Swallow the pending SIGPIPE before unblocking.
    const timespec zero{0, 0};
    sigtimedwait(&block, nullptr, &zero);
  }
  pthread_sigmask(SIG_SETMASK, &old, nullptr);
  errno = saved;
  return w;
}

}  // namespace

CommandResult run_command(const std::string& command, const std::string& input, std::chrono::milliseconds timeout) {
  Pipe in, out, err;
  const pid_t pid = spawn(command, in.fd[0], out.fd[1], err.fd[1]);
  close_fd(in.fd[0]);
  close_fd(out.fd[1]);
  close_fd(err.fd[1]);
  ::fcntl(in.fd[1], F_SETFL, O_NONBLOCK);

  CommandResult r;
  std::size_t written = 0;
  if (input.empty()) close_fd(in.fd[1]);
  const auto deadline = Clock::now() + timeout;
  char buf[65536];
  while (out.fd[0] >= 0 || err.fd[0] >= 0) {
    std::vector<pollfd> fds;
    if (in.fd[1] >= 0) fds.push_back({in.fd[1], POLLOUT, 0});
    if (out.fd[0] >= 0) fds.push_back({out.fd[0], POLLIN, 0});
    if (err.fd[0] >= 0) fds.push_back({err.fd[0], POLLIN, 0});
    const int left = remaining_ms(deadline);
    if (left == 0) {
      r.timed_out = true;
      break;
    }
    const int n = ::poll(fds.data(), fds.size(), left);
    if (n < 0 && errno == EINTR) continue;
    if (n < 0) throw SubprocessError(std::string("poll: ") + std::strerror(errno));
    for (const auto& p : fds) {
      if (!p.revents) continue;
      if (p.fd == in.fd[1]) {
        const ssize_t w = write_nosig(in.fd[1], input.data() + written, input.size() - written);
        if (w > 0) written += static_cast<std::size_t>(w);
        if (w < 0 && errno != EAGAIN) close_fd(in.fd[1]);  // child stopped reading
        if (written == input.size()) close_fd(in.fd[1]);
        continue;
      }
      const bool is_out = p.fd == out.fd[0];
      const ssize_t got = ::read(p.fd, buf, sizeof buf);
      if (got > 0) {
        (is_out ? r.out : r.err).append(buf, static_cast<std::size_t>(got));
      } else if (got == 0 || errno != EINTR) {
        close_fd(is_out ? out.fd[0] : err.fd[0]);
      }
    }
  }
  close_fd(in.fd[1]);
  close_fd(out.fd[0]);
  close_fd(err.fd[0]);

  int status = 0;
  if (r.timed_out) {
    ::kill(pid, SIGKILL);
    ::waitpid(pid, &status, 0);
    r.exit_code = -1;
    return r;
  }
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  r.exit_code = decode_status(status);
  return r;
}

LineProcess::LineProcess(const std::string& command) {
  Pipe in, out;
  pid_ = spawn(command, in.fd[0], out.fd[1], -1);
  close_fd(in.fd[0]);
  close_fd(out.fd[1]);
  in_fd_ = in.fd[1];
  out_fd_ = out.fd[0];
  in.fd[1] = out.fd[0] = -1;
}

LineProcess::~LineProcess() { close(std::chrono::milliseconds(1000)); }

std::optional<std::string> LineProcess::request(const std::string& line, std::chrono::milliseconds timeout) {
  if (pid_ <= 0 || in_fd_ < 0) return std::nullopt;
  const std::string msg = line + "\n";
  std::size_t written = 0;
  while (written < msg.size()) {
    const ssize_t w = write_nosig(in_fd_, msg.data() + written, msg.size() - written);
    if (w < 0 && errno == EINTR) continue;
    if (w <= 0) return std::nullopt;
    written += static_cast<std::size_t>(w);
  }
  const auto deadline = Clock::now() + timeout;
  char buf[4096];
  for (;;) {
    if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string reply = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return reply;
    }
    const int left = remaining_ms(deadline);
    if (left == 0) return std::nullopt;
    pollfd p{out_fd_, POLLIN, 0};
    const int n = ::poll(&p, 1, left);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return std::nullopt;
    const ssize_t got = ::read(out_fd_, buf, sizeof buf);
    if (got < 0 && errno == EINTR) continue;
    if (got <= 0) return std::nullopt;
    buffer_.append(buf, static_cast<std::size_t>(got));
  }
}

int LineProcess::close(std::chrono::milliseconds grace) {
  if (pid_ <= 0) return exit_code_;
  close_fd(in_fd_);
  int status = 0;
  const auto deadline = Clock::now() + grace;
  for (;;) {
    const pid_t r = ::waitpid(pid_, &status, WNOHANG);
    if (r == pid_) {
      exit_code_ = decode_status(status);
      break;
    }
    if (r < 0 && errno != EINTR) break;
    if (Clock::now() >= deadline) {
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, &status, 0);
      exit_code_ = -1;
      break;
    }
    ::usleep(2000);
  }
  close_fd(out_fd_);
  pid_ = -1;
  return exit_code_;
}

}  // namespace ksynth
