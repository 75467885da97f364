#pragma once

// Black-box plant served by a child process over a line protocol:
//   request  "x1 x2 ... xn u\n"
//   response "y1 y2 ... yn\n"   or   "error <message>\n" for a domain violation
// Numbers are decimal text. One evaluation per line.

#include <fcntl.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <csignal>
#include <cstdio>
#include <cstring>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>

#include "fblin/errors.hpp"
#include "fblin/system.hpp"

namespace fblin {

class ExternalProcess {
 public:
  explicit ExternalProcess(const std::string& command) : command_(command) {
    std::signal(SIGPIPE, SIG_IGN);
    int to_child[2];
    int from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0) {
      throw ConfigError("external plant: pipe() failed: " + std::string(std::strerror(errno)));
    }
    pid_ = fork();
    if (pid_ < 0) throw ConfigError("external plant: fork() failed");
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    out_ = fdopen(to_child[1], "w");
    in_ = fdopen(from_child[0], "r");
    if (!out_ || !in_) throw ConfigError("external plant: fdopen() failed");
  }

  ExternalProcess(const ExternalProcess&) = delete;
  ExternalProcess& operator=(const ExternalProcess&) = delete;

  ~ExternalProcess() {
    if (out_) std::fclose(out_);
    if (in_) std::fclose(in_);
    if (pid_ > 0) {
      int status = 0;
      if (waitpid(pid_, &status, WNOHANG) == 0) {
        kill(pid_, SIGTERM);
        waitpid(pid_, &status, 0);
      }
    }
  }

  Vector evaluate(const Vector& x, double u, Eigen::Index n) {
    std::lock_guard<std::mutex> lock(mutex_);
    std::ostringstream req;
    req.precision(17);
    for (Eigen::Index i = 0; i < x.size(); ++i) req << x(i) << ' ';
    req << u << '\n';
    const std::string line = req.str();
    if (std::fputs(line.c_str(), out_) < 0 || std::fflush(out_) != 0) {
      throw NumericError("external plant '" + command_ + "': write failed");
    }
    std::string reply;
    char buf[512];
    while (std::fgets(buf, sizeof buf, in_)) {
      reply += buf;
      if (!reply.empty() && reply.back() == '\n') break;
    }
    if (reply.empty()) throw NumericError("external plant '" + command_ + "': no response");
    if (reply.rfind("error", 0) == 0) {
      throw DomainError("external plant: " + reply.substr(0, reply.find_last_not_of("\r\n") + 1));
    }
    std::istringstream is(reply);
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(is >> y(i))) {
        throw NumericError("external plant '" + command_ + "': malformed response '" + reply + "'");
      }
    }
    return y;
  }

 private:
  std::string command_;
  pid_t pid_ = -1;
  FILE* out_ = nullptr;
  FILE* in_ = nullptr;
  std::mutex mutex_;
};

/// A black-box SystemModel whose f is evaluated by an external process.
inline SystemModel external_system(const std::string& command, Eigen::Index dimension,
                                   double fd_step = kDefaultFdStep) {
  auto proc = std::make_shared<ExternalProcess>(command);
  return SystemModel::black_box(
      dimension, [proc, dimension](const Vector& x, double u) { return proc->evaluate(x, u, dimension); },
      fd_step, "external");
}

}  // namespace fblin
