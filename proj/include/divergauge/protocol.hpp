#pragma once

// Line-oriented JSON protocol between the core and an external model
// adapter process.
//
// Frames (one JSON object per line):
//   adapter -> core  {"type":"hello","vocab_size":V,"stop_tokens":[...]}
//   core -> adapter  {"type":"logits","model":"instruct"|"base","context":[ids]}
//   adapter -> core  {"type":"logits","values":[V floats]}
//   core -> adapter  {"type":"tokenize","text":"..."}
//   adapter -> core  {"type":"tokens","ids":[...]}
//   core -> adapter  {"type":"detokenize","ids":[...]}
//   adapter -> core  {"type":"text","text":"..."}
//   either side      {"type":"error","message":"..."} / {"type":"bye","reason":"..."}
//
// Any line that does not parse, or a frame of an unexpected type, raises
// ProtocolError.

#include "divergauge/decoding.hpp"
#include "divergauge/dgem.hpp"
#include "divergauge/features.hpp"

#include "json.hpp"

#include <cerrno>
#include <csignal>
#include <cstdio>
#include <cstring>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

namespace divergauge {

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Request failures the adapter reports with an error frame. The session
// stays usable; only the sequence that asked is affected.
class AdapterRequestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ============================================================================
// Subprocess with line-buffered pipes
// ============================================================================

class Subprocess {
 public:
  // Runs `command` through /bin/sh; stderr is inherited.
  explicit Subprocess(const std::string& command) : command_(command) {
    std::signal(SIGPIPE, SIG_IGN);
    int to_child[2], from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0)
      throw std::runtime_error("pipe failed: " + std::string(std::strerror(errno)));
    pid_ = fork();
    if (pid_ < 0) throw std::runtime_error("fork failed: " + std::string(std::strerror(errno)));
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
    fcntl(to_child[1], F_SETFD, FD_CLOEXEC);
    fcntl(from_child[0], F_SETFD, FD_CLOEXEC);
    in_fd_ = to_child[1];
    out_ = fdopen(from_child[0], "r");
    if (!out_) throw std::runtime_error("fdopen failed");
  }

  Subprocess(const Subprocess&) = delete;
  Subprocess& operator=(const Subprocess&) = delete;

  ~Subprocess() {
    close_stdin();
    if (out_) std::fclose(out_);
    if (pid_ > 0 && !reaped_) waitpid(pid_, nullptr, 0);
  }

  const std::string& command() const { return command_; }

  void write_line(const std::string& line) {
    if (in_fd_ < 0) throw ProtocolError("adapter stdin already closed");
    std::string buf = line;
    buf.push_back('\n');
    std::size_t off = 0;
    while (off < buf.size()) {
      const ssize_t n = ::write(in_fd_, buf.data() + off, buf.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError("adapter closed its input (" + std::string(std::strerror(errno)) + ")");
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::optional<std::string> read_line() {
    char* buf = nullptr;
    std::size_t cap = 0;
    const ssize_t n = getline(&buf, &cap, out_);
    if (n < 0) {
      std::free(buf);
      return std::nullopt;
    }
    std::string line(buf, static_cast<std::size_t>(n));
    std::free(buf);
    while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.pop_back();
    return line;
  }

  void close_stdin() {
    if (in_fd_ >= 0) {
      ::close(in_fd_);
      in_fd_ = -1;
    }
  }

  // Exit status, or 128+signal.
  int wait() {
    close_stdin();
    if (reaped_) return status_;
    int st = 0;
    while (waitpid(pid_, &st, 0) < 0 && errno == EINTR) {
    }
    reaped_ = true;
    status_ = WIFEXITED(st) ? WEXITSTATUS(st) : 128 + WTERMSIG(st);
    return status_;
  }

 private:
  std::string command_;
  pid_t pid_ = -1;
  int in_fd_ = -1;
  FILE* out_ = nullptr;
  bool reaped_ = false;
  int status_ = 0;
};

// ============================================================================
// Frames
// ============================================================================

inline nlohmann::json parse_frame(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError("malformed adapter line: " + std::string(e.what()));
  }
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string())
    throw ProtocolError("adapter frame without a \"type\" field: " + line.substr(0, 200));
  return j;
}

struct Hello {
  std::size_t vocab_size = 0;
  std::vector<TokenId> stop_tokens;
};

// Values must all be finite; -inf is not a valid logit on the wire.
inline LogProbVector parse_logits_frame(const nlohmann::json& j, std::size_t vocab) {
  if (!j.contains("values") || !j["values"].is_array())
    throw ProtocolError("logits frame without \"values\" array");
  const auto& v = j["values"];
  if (v.size() != vocab)
    throw ProtocolError("logits frame has " + std::to_string(v.size()) + " values, expected " +
                        std::to_string(vocab));
  LogProbVector out;
  out.values.reserve(vocab);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw ProtocolError("non-numeric logit at index " + std::to_string(i));
    const double x = v[i].get<double>();
    if (!std::isfinite(x)) throw ProtocolError("non-finite logit at index " + std::to_string(i));
    out.values.push_back(x);
  }
  return out;
}

// ============================================================================
// Serving session
// ============================================================================

class AdapterSession {
 public:
  // Starts `<command> --serve` and reads the handshake.
  explicit AdapterSession(const std::string& command) : proc_(command + " --serve") {
    const auto line = proc_.read_line();
    if (!line) throw ProtocolError("adapter exited before the handshake");
    const auto j = parse_frame(*line);
    const std::string type = j["type"];
    if (type == "bye")
      throw ProtocolError("adapter refused to serve: " + j.value("reason", std::string("no reason")));
    if (type != "hello") throw ProtocolError("expected hello frame, got \"" + type + "\"");
    if (!j.contains("vocab_size") || !j["vocab_size"].is_number_unsigned() || j["vocab_size"] == 0)
      throw ProtocolError("hello frame needs a positive vocab_size");
    hello_.vocab_size = j["vocab_size"].get<std::size_t>();
    if (j.contains("stop_tokens")) {
      for (const auto& t : j["stop_tokens"]) {
        if (!t.is_number_unsigned() || t.get<std::size_t>() >= hello_.vocab_size)
          throw ProtocolError("hello frame has an invalid stop token");
        hello_.stop_tokens.push_back(t.get<TokenId>());
      }
    }
  }

  AdapterSession(const AdapterSession&) = delete;
  AdapterSession& operator=(const AdapterSession&) = delete;

  ~AdapterSession() {
    try {
      close();
    } catch (...) {
    }
  }

  const Hello& hello() const { return hello_; }
  std::size_t requests() const { return requests_; }

  LogProbVector logits(const std::string& model, std::span<const TokenId> context) {
    nlohmann::json req = {{"type", "logits"}, {"model", model},
                          {"context", std::vector<TokenId>(context.begin(), context.end())}};
    const auto j = round_trip(req, "logits");
    return parse_logits_frame(j, hello_.vocab_size);
  }

  TokenSeq tokenize(const std::string& text) {
    const auto j = round_trip({{"type", "tokenize"}, {"text", text}}, "tokens");
    if (!j.contains("ids") || !j["ids"].is_array()) throw ProtocolError("tokens frame without ids");
    TokenSeq ids;
    for (const auto& t : j["ids"]) {
      if (!t.is_number_unsigned() || t.get<std::size_t>() >= hello_.vocab_size)
        throw ProtocolError("tokens frame has an id outside the vocabulary");
      ids.push_back(t.get<TokenId>());
    }
    return ids;
  }

  std::string detokenize(std::span<const TokenId> ids) {
    const auto j = round_trip(
        {{"type", "detokenize"}, {"ids", std::vector<TokenId>(ids.begin(), ids.end())}}, "text");
    if (!j.contains("text") || !j["text"].is_string()) throw ProtocolError("text frame without text");
    return j["text"].get<std::string>();
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    try {
      proc_.write_line(R"({"type":"bye"})");
    } catch (const ProtocolError&) {
    }
    proc_.wait();
  }

 private:
  nlohmann::json round_trip(const nlohmann::json& req, const std::string& expect) {
    if (closed_) throw ProtocolError("adapter session is closed");
    proc_.write_line(req.dump());
    ++requests_;
    const auto line = proc_.read_line();
    if (!line) throw ProtocolError("adapter exited while a request was pending");
    auto j = parse_frame(*line);
    const std::string type = j["type"];
    if (type == "error") throw AdapterRequestError("adapter error: " + j.value("message", std::string()));
    if (type == "bye") throw ProtocolError("adapter said bye: " + j.value("reason", std::string()));
    if (type != expect)
      throw ProtocolError("expected \"" + expect + "\" frame, got \"" + type + "\"");
    return j;
  }

  Subprocess proc_;
  Hello hello_;
  std::size_t requests_ = 0;
  bool closed_ = false;
};

// One of the two models behind a serving session.
class LiveProvider : public DistributionProvider {
 public:
  LiveProvider(AdapterSession& session, std::string model)
      : session_(&session), model_(std::move(model)) {}
  std::size_t vocab_size() const override { return session_->hello().vocab_size; }
  LogProbVector next_logprobs(std::span<const TokenId> context) override {
    return session_->logits(model_, context);
  }

 private:
  AdapterSession* session_;
  std::string model_;
};

// ============================================================================
// One-shot adapter jobs
// ============================================================================

namespace detail {

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out.push_back(c);
  }
  return out + "'";
}

}  // namespace detail

struct AdapterIncipit {
  std::string incipit;
  std::size_t count = 0;
};

// `<command> --truncate-incipit`: one {"id","text","n"} request per line,
// answered by {"id","incipit","count"}.
class IncipitTruncator {
 public:
  explicit IncipitTruncator(const std::string& command) : proc_(command + " --truncate-incipit") {}

  AdapterIncipit truncate(const std::string& text, std::size_t n) {
    const std::string id = std::to_string(next_id_++);
    proc_.write_line(nlohmann::json{{"id", id}, {"text", text}, {"n", n}}.dump());
    const auto line = proc_.read_line();
    if (!line) throw ProtocolError("incipit adapter exited early");
    const auto j = parse_frame_or_record(*line);
    if (j.value("id", std::string()) != id) throw ProtocolError("incipit adapter answered out of order");
    AdapterIncipit out;
    out.incipit = j.at("incipit").get<std::string>();
    out.count = j.at("count").get<std::size_t>();
    return out;
  }

 private:
  static nlohmann::json parse_frame_or_record(const std::string& line) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError("malformed incipit adapter line: " + std::string(e.what()));
    }
    if (j.contains("type") && j["type"] == "error")
      throw AdapterRequestError("incipit adapter error: " + j.value("message", std::string()));
    if (!j.contains("incipit") || !j.contains("count"))
      throw ProtocolError("incipit record needs \"incipit\" and \"count\"");
    return j;
  }

  Subprocess proc_;
  std::size_t next_id_ = 0;
};

// `<command> --embed --out PATH`: texts go in as {"id","text"} lines; the
// adapter writes a DGEM file and exits 0. On failure it prints an error
// frame and exits nonzero.
inline EmbeddingMatrix embed_with_adapter(const std::string& command,
                                          const std::vector<std::string>& ids,
                                          const std::vector<std::string>& texts,
                                          const std::string& out_path) {
  if (ids.size() != texts.size()) throw std::invalid_argument("embed_with_adapter: ids/texts mismatch");
  Subprocess proc(command + " --embed --out " + detail::shell_quote(out_path));
  for (std::size_t i = 0; i < ids.size(); ++i)
    proc.write_line(nlohmann::json{{"id", ids[i]}, {"text", texts[i]}}.dump());
  proc.close_stdin();
  std::string error;
  while (auto line = proc.read_line()) {
    try {
      const auto j = nlohmann::json::parse(*line);
      if (j.is_object() && j.value("type", std::string()) == "error")
        error = j.value("message", std::string("unspecified"));
    } catch (const nlohmann::json::exception&) {
    }
  }
  const int status = proc.wait();
  if (status != 0)
    throw std::runtime_error("embedding adapter failed (exit " + std::to_string(status) + ")" +
                             (error.empty() ? "" : ": " + error));
  auto e = read_embeddings(out_path);
  if (e.ids != ids) throw std::runtime_error("embedding adapter returned ids in a different order");
  return e;
}

}  // namespace divergauge
