#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "bfn/chem/mol_graph.hpp"
#include "bfn/chem/smiles.hpp"

namespace bfn::oracle {

struct Scores {
  double qed = 0.0;
  double sa = 0.0;
  double ds = 0.0;
};

/// Scores or a per-molecule error message.
struct ScoreOutcome {
  std::optional<Scores> scores;
  std::string error;
  bool ok() const { return scores.has_value(); }
};

class ScorerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Deterministic non-physical stand-ins depending only on heavy-atom and
/// ring counts.
inline Scores score_toy(const chem::MolGraph& g) {
  const int hac = g.heavy_atom_count();
  const int rings = g.ring_count();
  Scores s;
  s.qed = std::exp(-std::abs(hac - 24) / 12.0);
  s.sa = std::min(10.0, 1.0 + rings + 0.1 * hac);
  s.ds = -0.35 * hac;
  return s;
}

class Scorer {
 public:
  virtual ~Scorer() = default;
  /// One outcome per input, in order.
  virtual std::vector<ScoreOutcome> score(const std::vector<std::string>& smiles) = 0;
  virtual std::string describe() const = 0;
};

class ToyScorer : public Scorer {
 public:
  std::vector<ScoreOutcome> score(const std::vector<std::string>& smiles) override {
    std::vector<ScoreOutcome> out(smiles.size());
    for (std::size_t i = 0; i < smiles.size(); ++i) {
      try {
        out[i].scores = score_toy(chem::parse_smiles(smiles[i]));
      } catch (const std::exception& e) {
        out[i].error = e.what();
      }
    }
    return out;
  }
  std::string describe() const override { return "toy"; }
};

/// Parses one response line: "qed\tsa\tds" or "ERR".
inline ScoreOutcome parse_score_line(const std::string& raw, std::size_t line_no) {
  std::string line = raw;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  ScoreOutcome o;
  if (line == "ERR") {
    o.error = "scorer reported ERR";
    return o;
  }
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (std::size_t pos; (pos = line.find('\t', start)) != std::string::npos; start = pos + 1) {
    fields.push_back(line.substr(start, pos - start));
  }
  fields.push_back(line.substr(start));
  auto bad = [&] {
    return ScorerError("malformed scorer response on line " + std::to_string(line_no) + ": '" + line + "'");
  };
  if (fields.size() != 3) throw bad();
  double v[3];
  for (int k = 0; k < 3; ++k) {
    std::size_t used = 0;
    try {
      v[k] = std::stod(fields[k], &used);
    } catch (const std::exception&) {
      throw bad();
    }
    if (used != fields[k].size() || !std::isfinite(v[k])) throw bad();
  }
  o.scores = Scores{v[0], v[1], v[2]};
  return o;
}

/// Runs `command` through /bin/sh once per batch, writing one SMILES per
/// line to its stdin and reading one response line per molecule.
class SubprocessScorer : public Scorer {
 public:
  explicit SubprocessScorer(std::string command, double timeout_seconds = 300.0)
      : command_(std::move(command)), timeout_(timeout_seconds) {}

  std::vector<ScoreOutcome> score(const std::vector<std::string>& smiles) override {
    if (smiles.empty()) return {};
    std::string request;
    for (const auto& s : smiles) {
      if (s.find('\n') != std::string::npos) throw ScorerError("SMILES contains a newline");
      request += s;
      request += '\n';
    }
    const std::string response = run(request);
    std::vector<std::string> lines;
    std::istringstream in(response);
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    if (lines.size() != smiles.size()) {
      throw ScorerError("scorer returned " + std::to_string(lines.size()) + " lines for " +
                        std::to_string(smiles.size()) + " molecules");
    }
    std::vector<ScoreOutcome> out;
    out.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) out.push_back(parse_score_line(lines[i], i + 1));
    return out;
  }

  std::string describe() const override { return command_; }

 private:
  std::string run(const std::string& request) const {
    int to_child[2], from_child[2];
    if (pipe2(to_child, O_CLOEXEC) != 0) throw ScorerError(std::string("pipe: ") + std::strerror(errno));
    if (pipe2(from_child, O_CLOEXEC) != 0) {
      close(to_child[0]);
      close(to_child[1]);
      throw ScorerError(std::string("pipe: ") + std::strerror(errno));
    }
    const pid_t pid = fork();
    if (pid < 0) throw ScorerError(std::string("fork: ") + std::strerror(errno));
    if (pid == 0) {
      setpgid(0, 0);  // own group, so a timeout also stops the command's children
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    setpgid(pid, pid);
    close(to_child[0]);
    close(from_child[1]);
    // A scorer that exits early must not kill us with SIGPIPE.
    struct sigaction ignore {}, previous{};
    ignore.sa_handler = SIG_IGN;
    sigaction(SIGPIPE, &ignore, &previous);

    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_);
    std::string response;
    std::size_t written = 0;
    int in_fd = to_child[1], out_fd = from_child[0];
    // Partial writes let us drain the child's output between chunks.
    fcntl(in_fd, F_SETFL, fcntl(in_fd, F_GETFL) | O_NONBLOCK);
    bool timed_out = false;
    if (request.empty()) {
      close(in_fd);
      in_fd = -1;
    }
    while (out_fd >= 0) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) {
        timed_out = true;
        break;
      }
      pollfd fds[2];
      int n = 0;
      fds[n++] = {out_fd, POLLIN, 0};
      if (in_fd >= 0) fds[n++] = {in_fd, POLLOUT, 0};
      const int ready = poll(fds, n, static_cast<int>(std::min<long long>(left.count(), 1000)));
      if (ready < 0 && errno != EINTR) break;
      if (ready <= 0) continue;
      if (in_fd >= 0 && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
        const ssize_t w = write(in_fd, request.data() + written, request.size() - written);
        if (w > 0) written += static_cast<std::size_t>(w);
        const bool failed = w < 0 && errno != EAGAIN && errno != EINTR;
        if (failed || written == request.size()) {
          close(in_fd);
          in_fd = -1;
        }
      }
      if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
        char buf[65536];
        const ssize_t r = read(out_fd, buf, sizeof buf);
        if (r > 0) {
          response.append(buf, static_cast<std::size_t>(r));
        } else if (r == 0 || errno != EINTR) {
          close(out_fd);
          out_fd = -1;
        }
      }
    }
    if (in_fd >= 0) close(in_fd);
    if (out_fd >= 0) close(out_fd);
    if (timed_out) kill(-pid, SIGKILL);
    int status = 0;
    waitpid(pid, &status, 0);
    sigaction(SIGPIPE, &previous, nullptr);
    if (timed_out) throw ScorerError("scorer timed out after " + std::to_string(timeout_) + " s: " + command_);
    if (WIFEXITED(status) && WEXITSTATUS(status) == 127) throw ScorerError("cannot launch scorer: " + command_);
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
      throw ScorerError("scorer exited abnormally (status " + std::to_string(status) + "): " + command_);
    }
    return response;
  }

  std::string command_;
  double timeout_;
};

/// Decodes an HTTP scorer reply: a JSON array (or {"records": [...]}) of
/// {"qed","sa","ds"} objects, with null, "ERR" or {"error": ...} for
/// failures.
inline std::vector<ScoreOutcome> parse_http_records(const nlohmann::json& body, std::size_t expected) {
  const nlohmann::json& recs = body.is_object() && body.contains("records") ? body.at("records") : body;
  if (!recs.is_array()) throw ScorerError("HTTP scorer reply is not a JSON array");
  if (recs.size() != expected) {
    throw ScorerError("HTTP scorer returned " + std::to_string(recs.size()) + " records for " +
                      std::to_string(expected) + " molecules");
  }
  std::vector<ScoreOutcome> out(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    const auto& r = recs[i];
    if (r.is_null() || (r.is_string() && r.get<std::string>() == "ERR")) {
      out[i].error = "scorer reported ERR";
    } else if (r.is_object() && r.contains("error")) {
      out[i].error = r.at("error").is_string() ? r.at("error").get<std::string>() : r.at("error").dump();
    } else if (r.is_object() && r.contains("qed") && r.contains("sa") && r.contains("ds")) {
      out[i].scores = Scores{r.at("qed").get<double>(), r.at("sa").get<double>(), r.at("ds").get<double>()};
    } else {
      throw ScorerError("malformed HTTP scorer record " + std::to_string(i + 1) + ": " + r.dump());
    }
  }
  return out;
}

}  // namespace bfn::oracle
