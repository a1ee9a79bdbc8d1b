//
// molbbo - surrogate-based black-box optimization of molecular graphs
// SPDX-License-Identifier: Apache-2.0
//

#include "molbbo/external_objective.h"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

namespace molbbo {

Reply parse_reply(std::string_view line) {
  if (line.starts_with("OK ")) {
    std::string_view num = line.substr(3);
    double value = 0.0;
    const char *first = num.data(), *last = num.data() + num.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (num.empty() || ec != std::errc() || ptr != last || !std::isfinite(value))
      return {ReplyKind::Malformed, 0.0, std::string(line)};
    return {ReplyKind::Ok, value, {}};
  }
  if (line.starts_with("ERR ") || line == "ERR")
    return {ReplyKind::Err, 0.0,
            std::string(line.size() > 4 ? line.substr(4) : std::string_view{})};
  return {ReplyKind::Malformed, 0.0, std::string(line)};
}

struct ExternalProcessObjective::Child {
  pid_t pid = -1;
  int to_child = -1;
  int from_child = -1;
  std::string pending; // bytes read past the last newline

  ~Child() {
    if (to_child >= 0)
      ::close(to_child);
    if (from_child >= 0)
      ::close(from_child);
    if (pid > 0) {
      // The whole group, so helpers started by the command die too.
      ::kill(-pid, SIGKILL);
      ::waitpid(pid, nullptr, 0);
    }
  }
};

ExternalProcessObjective::ExternalProcessObjective(
    std::string command, std::chrono::milliseconds timeout, int pool_size)
    : command_(std::move(command)), timeout_(timeout), pool_size_(pool_size) {
  if (pool_size_ < 1)
    throw std::invalid_argument("external objective: pool size must be >= 1");
  // A dead child must surface as a write error, not kill this process.
  std::signal(SIGPIPE, SIG_IGN);
}

ExternalProcessObjective::~ExternalProcessObjective() = default;

std::unique_ptr<ExternalProcessObjective::Child>
ExternalProcessObjective::spawn() {
  int in_pipe[2], out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0)
    throw ObjectiveUnavailable(std::string("pipe: ") + std::strerror(errno));
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw ObjectiveUnavailable(std::string("pipe: ") + std::strerror(errno));
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]})
      ::close(fd);
    throw ObjectiveUnavailable(std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char *>(nullptr));
    ::_exit(127);
  }
  ::setpgid(pid, pid); // also in the parent, to win the race with kill()
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  auto child = std::make_unique<Child>();
  child->pid = pid;
  child->to_child = in_pipe[1];
  child->from_child = out_pipe[0];
  ++started_;
  return child;
}

std::unique_ptr<ExternalProcessObjective::Child>
ExternalProcessObjective::acquire() {
  std::unique_lock lock(mutex_);
  idle_cv_.wait(lock, [&] { return !idle_.empty() || live_ < pool_size_; });
  if (!idle_.empty()) {
    auto child = std::move(idle_.back());
    idle_.pop_back();
    return child;
  }
  ++live_;
  try {
    return spawn();
  } catch (...) {
    --live_;
    throw;
  }
}

void ExternalProcessObjective::release(std::unique_ptr<Child> child) {
  std::lock_guard lock(mutex_);
  if (child)
    idle_.push_back(std::move(child));
  else
    --live_;
  idle_cv_.notify_one();
}

namespace {

enum class IoStatus { Ok, Timeout, Closed };

IoStatus write_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR)
        continue;
      return IoStatus::Closed;
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return IoStatus::Ok;
}

IoStatus read_line(int fd, std::string &pending, std::string &line,
                   std::chrono::steady_clock::time_point deadline) {
  while (true) {
    if (auto nl = pending.find('\n'); nl != std::string::npos) {
      line = pending.substr(0, nl);
      pending.erase(0, nl + 1);
      return IoStatus::Ok;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0)
      return IoStatus::Timeout;
    pollfd pfd{fd, POLLIN, 0};
    const int r = ::poll(&pfd, 1, static_cast<int>(left.count()));
    if (r < 0) {
      if (errno == EINTR)
        continue;
      return IoStatus::Closed;
    }
    if (r == 0)
      return IoStatus::Timeout;
    char buf[4096];
    const ssize_t n = ::read(fd, buf, sizeof buf);
    if (n < 0 && errno == EINTR)
      continue;
    if (n <= 0)
      return IoStatus::Closed;
    pending.append(buf, static_cast<std::size_t>(n));
  }
}

} // namespace

double ExternalProcessObjective::evaluate_smiles(std::string_view smiles) {
  const std::string request = "EVAL " + std::string(smiles) + "\n";
  // A child that died between requests gets one replacement.
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::unique_ptr<Child> child = acquire();
    std::string line;
    IoStatus st = write_all(child->to_child, request);
    if (st == IoStatus::Ok)
      st = read_line(child->from_child, child->pending, line,
                     std::chrono::steady_clock::now() + timeout_);
    if (st == IoStatus::Timeout) {
      release(nullptr); // destroys (kills) the child
      throw ObjectiveTimeout("external objective timed out after " +
                             std::to_string(timeout_.count()) + " ms on " +
                             std::string(smiles));
    }
    if (st == IoStatus::Closed) {
      child.reset();
      release(nullptr);
      if (attempt == 1)
        throw ObjectiveUnavailable("external objective process '" + command_ +
                                   "' exited without replying");
      continue;
    }
    const Reply reply = parse_reply(line);
    switch (reply.kind) {
    case ReplyKind::Ok:
      release(std::move(child));
      return reply.value;
    case ReplyKind::Err:
      release(std::move(child));
      throw ObjectiveEvaluationError("external objective reported ERR for " +
                                     std::string(smiles) + ": " +
                                     reply.message);
    case ReplyKind::Malformed:
      child.reset();
      release(nullptr);
      throw ObjectiveProtocolError("malformed reply from external objective: '" +
                                   reply.message + "'");
    }
  }
  throw ObjectiveUnavailable("external objective unavailable");
}

double ExternalProcessObjective::evaluate(const MolecularGraph &g,
                                          const CanonicalKey &key) {
  (void)g;
  return evaluate_smiles(key.text);
}

} // namespace molbbo
