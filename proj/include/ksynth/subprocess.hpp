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

#pragma once

#include <chrono>
#include <optional>
#include <stdexcept>
#include <string>
#include <sys/types.h>

namespace ksynth {

/// Failure to spawn or talk to a child process.
class SubprocessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CommandResult {
  int exit_code = -1;  // -1 when killed or signalled
  bool timed_out = false;
  std::string out;
  std::string err;
};

/// Runs `command` through /bin/sh, feeding `input` on stdin and collecting
/// stdout/stderr. The child is killed once `timeout` elapses.
CommandResult run_command(const std::string& command, const std::string& input, std::chrono::milliseconds timeout);

/// A long-lived child that answers one line per request line.
class LineProcess {
 public:
  explicit LineProcess(const std::string& command);
  ~LineProcess();
  LineProcess(const LineProcess&) = delete;
  LineProcess& operator=(const LineProcess&) = delete;

  /// Sends one line (a trailing newline is added) and waits for one reply
  /// line. Returns nothing on timeout or when the child closed stdout.
  std::optional<std::string> request(const std::string& line, std::chrono::milliseconds timeout);

  /// Closes stdin and reaps the child. Returns its exit code, or -1 if it
  /// was signalled. Idempotent.
  int close(std::chrono::milliseconds grace = std::chrono::milliseconds(5000));

  bool running() const { return pid_ > 0; }

 private:
  pid_t pid_ = -1;
  int in_fd_ = -1;
  int out_fd_ = -1;
  int exit_code_ = -1;
  std::string buffer_;
};

}  // namespace ksynth
