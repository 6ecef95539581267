#include <json.hpp>

#include <netdb.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>

#include "acd/estimators.hpp"

namespace acd {

using ordered_json = nlohmann::ordered_json;

std::string bridge_request_line(std::int64_t id, const LikelihoodQuery& q) {
  q.validate();
  auto columns = q.target.parent_list();
  columns.push_back(q.target.child);

  auto rows = [&](const Eigen::MatrixXd& values) {
    ordered_json out = ordered_json::array();
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
      ordered_json row = ordered_json::array();
      for (int c : columns) row.push_back(values(r, c));
      out.push_back(std::move(row));
    }
    return out;
  };

  ordered_json j;
  j["id"] = id;
  j["child"] = q.target.child;
  j["parents"] = q.target.parent_list();
  j["train"] = rows(q.split->train.values);
  j["est"] = rows(q.split->est.values);
  return j.dump();
}

BridgeReply parse_bridge_reply(const std::string& line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const ordered_json::exception&) {
    throw BridgeProtocolError("bridge reply is not valid JSON", line);
  }
  if (!j.is_object() || !j.contains("id") || !j["id"].is_number_integer()) {
    throw BridgeProtocolError("bridge reply lacks an integer id", line);
  }
  BridgeReply reply;
  reply.id = j["id"].get<std::int64_t>();
  const bool has_value = j.contains("total_logpred");
  const bool has_error = j.contains("error");
  if (has_value == has_error) {
    throw BridgeProtocolError("bridge reply must carry exactly one of total_logpred or error", line);
  }
  if (has_value) {
    if (!j["total_logpred"].is_number()) {
      throw BridgeProtocolError("total_logpred is not a number", line);
    }
    reply.total_logpred = j["total_logpred"].get<double>();
  } else {
    if (!j["error"].is_string()) throw BridgeProtocolError("error is not a string", line);
    reply.error = j["error"].get<std::string>();
  }
  return reply;
}

namespace {

void ignore_sigpipe() {
  static const bool once = [] {
    ::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)once;
}

void write_all(int fd, const std::string& data, const std::string& endpoint) {
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw BridgeConnectionError("write to bridge '" + endpoint + "' failed: " + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
}

class LineReader {
 public:
  std::optional<std::string> next(int fd, const std::string& endpoint) {
    for (;;) {
      const auto pos = buffer_.find('\n');
      if (pos != std::string::npos) {
        std::string line = buffer_.substr(0, pos);
        buffer_.erase(0, pos + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      char chunk[65536];
      const ssize_t n = ::read(fd, chunk, sizeof(chunk));
      if (n < 0) {
        if (errno == EINTR) continue;
        throw BridgeConnectionError("read from bridge '" + endpoint + "' failed: " + std::strerror(errno));
      }
      if (n == 0) {
        if (buffer_.empty()) return std::nullopt;
        std::string rest = std::move(buffer_);
        buffer_.clear();
        return rest;
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  std::string buffer_;
};

class TcpTransport final : public BridgeTransport {
 public:
  TcpTransport(const std::string& host, const std::string& port, std::string endpoint)
      : endpoint_(std::move(endpoint)) {
    ignore_sigpipe();
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* found = nullptr;
    if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &found); rc != 0) {
      throw BridgeConnectionError("cannot resolve bridge '" + endpoint_ + "': " + ::gai_strerror(rc));
    }
    for (addrinfo* a = found; a != nullptr; a = a->ai_next) {
      fd_ = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
      if (fd_ < 0) continue;
      if (::connect(fd_, a->ai_addr, a->ai_addrlen) == 0) break;
      ::close(fd_);
      fd_ = -1;
    }
    ::freeaddrinfo(found);
    if (fd_ < 0) throw BridgeConnectionError("cannot connect to bridge '" + endpoint_ + "'");
  }
  ~TcpTransport() override {
    if (fd_ >= 0) ::close(fd_);
  }
  TcpTransport(const TcpTransport&) = delete;
  TcpTransport& operator=(const TcpTransport&) = delete;

  void write_line(const std::string& line) override { write_all(fd_, line + '\n', endpoint_); }
  std::optional<std::string> read_line() override { return reader_.next(fd_, endpoint_); }

 private:
  std::string endpoint_;
  int fd_ = -1;
  LineReader reader_;
};

class ProcessTransport final : public BridgeTransport {
 public:
  ProcessTransport(const std::string& command, std::string endpoint) : endpoint_(std::move(endpoint)) {
    ignore_sigpipe();
    int to_child[2];
    int from_child[2];
    if (::pipe(to_child) != 0) throw BridgeConnectionError("pipe failed for bridge '" + endpoint_ + "'");
    if (::pipe(from_child) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw BridgeConnectionError("pipe failed for bridge '" + endpoint_ + "'");
    }
    pid_ = ::fork();
    if (pid_ < 0) {
      for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) ::close(fd);
      throw BridgeConnectionError("fork failed for bridge '" + endpoint_ + "'");
    }
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) ::close(fd);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
  }
  ~ProcessTransport() override {
    if (write_fd_ >= 0) ::close(write_fd_);
    if (read_fd_ >= 0) ::close(read_fd_);
    if (pid_ > 0) {
      int status = 0;
      ::waitpid(pid_, &status, 0);
    }
  }
  ProcessTransport(const ProcessTransport&) = delete;
  ProcessTransport& operator=(const ProcessTransport&) = delete;

  void write_line(const std::string& line) override { write_all(write_fd_, line + '\n', endpoint_); }
  std::optional<std::string> read_line() override { return reader_.next(read_fd_, endpoint_); }

 private:
  std::string endpoint_;
  pid_t pid_ = -1;
  int write_fd_ = -1;
  int read_fd_ = -1;
  LineReader reader_;
};

}  // namespace

std::unique_ptr<BridgeTransport> connect_bridge(const std::string& endpoint) {
  if (endpoint.rfind("exec:", 0) == 0) {
    const std::string command = endpoint.substr(5);
    if (command.empty()) throw BridgeConnectionError("empty bridge command");
    return std::make_unique<ProcessTransport>(command, endpoint);
  }
  std::string address = endpoint;
  if (address.rfind("tcp://", 0) == 0) address = address.substr(6);
  const auto colon = address.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == address.size()) {
    throw BridgeConnectionError("bridge endpoint '" + endpoint +
                                "' is not tcp://HOST:PORT, HOST:PORT or exec:COMMAND");
  }
  return std::make_unique<TcpTransport>(address.substr(0, colon), address.substr(colon + 1), endpoint);
}

ExternalEstimator::ExternalEstimator(std::string endpoint, int connections)
    : endpoint_(std::move(endpoint)), max_connections_(std::max(connections, 1)) {}

ExternalEstimator::~ExternalEstimator() = default;

std::unique_ptr<BridgeTransport> ExternalEstimator::acquire() const {
  std::unique_lock lock(mutex_);
  available_.wait(lock, [&] { return !idle_.empty() || open_ < max_connections_; });
  if (!idle_.empty()) {
    auto t = std::move(idle_.back());
    idle_.pop_back();
    return t;
  }
  ++open_;
  lock.unlock();
  try {
    return connect_bridge(endpoint_);
  } catch (...) {
    lock.lock();
    --open_;
    available_.notify_one();
    throw;
  }
}

void ExternalEstimator::release(std::unique_ptr<BridgeTransport> t) const {
  std::lock_guard lock(mutex_);
  if (t) {
    idle_.push_back(std::move(t));
  } else {
    --open_;
  }
  available_.notify_one();
}

LikelihoodResult ExternalEstimator::estimate(const LikelihoodQuery& q, bool per_row) const {
  if (per_row) throw EstimatorError("the bridge protocol reports totals only");
  std::int64_t id = 0;
  {
    std::lock_guard lock(mutex_);
    id = next_id_++;
  }
  const std::string request = bridge_request_line(id, q);
  auto transport = acquire();
  try {
    transport->write_line(request);
    const auto line = transport->read_line();
    if (!line) throw BridgeConnectionError("bridge '" + endpoint_ + "' closed the connection");
    const BridgeReply reply = parse_bridge_reply(*line);
    if (reply.id != id) {
      throw BridgeProtocolError("bridge reply id " + std::to_string(reply.id) +
                                    " does not match request id " + std::to_string(id),
                                *line);
    }
    if (reply.error) {
      release(std::move(transport));
      throw BridgeRemoteError("bridge reported an error for child " + std::to_string(q.target.child) +
                              ": " + *reply.error);
    }
    if (!std::isfinite(*reply.total_logpred)) {
      throw BridgeProtocolError("bridge returned a non-finite likelihood", *line);
    }
    release(std::move(transport));
    return LikelihoodResult{*reply.total_logpred, {}};
  } catch (const BridgeRemoteError&) {
    throw;
  } catch (...) {
    // The stream state is unknown after a transport or protocol failure.
    release(nullptr);
    throw;
  }
}

std::string ExternalEstimator::describe() const { return "external(" + endpoint_ + ")"; }

LikelihoodResult estimate_external(const LikelihoodQuery& q, const std::string& endpoint) {
  return ExternalEstimator(endpoint).estimate(q);
}

}  // namespace acd
