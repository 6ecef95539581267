#include <gtest/gtest.h>
#include <json.hpp>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "acd/estimators.hpp"
#include "acd/parallel.hpp"
#include "acd/scorer.hpp"
#include "support.hpp"

namespace acd {
namespace {

const std::string kStub = FAKE_BRIDGE_PATH;

DataSplit transcript_split() {
  Eigen::MatrixXd tr(2, 3);
  tr << 1, 2, 3, 4, 5, 6;
  Eigen::MatrixXd es(2, 3);
  es << 7, 8, 9, 0.5, -0.25, 10;
  return DataSplit{Dataset(tr), Dataset(es), 0.5};
}

struct Exchange {
  std::string request;
  std::string reply;
};

std::vector<Exchange> load_transcript() {
  std::ifstream in(std::string(ACD_TEST_DATA_DIR) + "/bridge_transcript.txt");
  std::vector<Exchange> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("> ", 0) == 0) out.push_back({line.substr(2), ""});
    if (line.rfind("< ", 0) == 0) out.back().reply = line.substr(2);
  }
  return out;
}

// Minimal line-oriented TCP stub: -1.0 per estimation row, one thread per
// connection.
class TcpStub {
 public:
  TcpStub() {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    int yes = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    ::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
    ::listen(listen_fd_, 16);
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    acceptor_ = std::thread([this] { accept_loop(); });
  }

  ~TcpStub() {
    stopping_ = true;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    acceptor_.join();
    std::lock_guard lock(mutex_);
    for (int fd : clients_) ::shutdown(fd, SHUT_RDWR);
    for (auto& t : workers_) t.join();
  }

  std::string endpoint() const { return "tcp://127.0.0.1:" + std::to_string(port_); }
  int connections() const { return accepted_; }
  int requests() const { return requests_; }

 private:
  void accept_loop() {
    while (!stopping_) {
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) return;
      ++accepted_;
      std::lock_guard lock(mutex_);
      clients_.push_back(fd);
      workers_.emplace_back([this, fd] { serve(fd); });
    }
  }

  void serve(int fd) {
    std::string buffer;
    char chunk[4096];
    while (true) {
      const ssize_t got = ::read(fd, chunk, sizeof(chunk));
      if (got <= 0) break;
      buffer.append(chunk, static_cast<std::size_t>(got));
      std::size_t nl;
      while ((nl = buffer.find('\n')) != std::string::npos) {
        const auto req = nlohmann::json::parse(buffer.substr(0, nl));
        buffer.erase(0, nl + 1);
        ++requests_;
        nlohmann::ordered_json reply;
        reply["id"] = req.at("id");
        reply["total_logpred"] = -1.0 * static_cast<double>(req.at("est").size());
        const std::string out = reply.dump() + "\n";
        if (::write(fd, out.data(), out.size()) < 0) break;
      }
    }
    ::close(fd);
  }

  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> stopping_{false};
  std::atomic<int> accepted_{0};
  std::atomic<int> requests_{0};
  std::thread acceptor_;
  std::mutex mutex_;
  std::vector<int> clients_;
  std::vector<std::thread> workers_;
};

TEST(BridgeProtocol, RequestsMatchRecordedTranscript) {
  const auto split = transcript_split();
  const auto transcript = load_transcript();
  ASSERT_EQ(transcript.size(), 3U);
  EXPECT_EQ(bridge_request_line(1, LikelihoodQuery{&split, ParentSet{0, 0b110U}}), transcript[0].request);
  EXPECT_EQ(bridge_request_line(2, LikelihoodQuery{&split, ParentSet{2, 0}}), transcript[1].request);
  EXPECT_EQ(bridge_request_line(3, LikelihoodQuery{&split, ParentSet{1, 0b001U}}), transcript[2].request);
}

TEST(BridgeProtocol, StubRepliesMatchRecordedTranscript) {
  auto transport = connect_bridge("exec:" + kStub);
  for (const auto& ex : load_transcript()) {
    transport->write_line(ex.request);
    const auto reply = transport->read_line();
    ASSERT_TRUE(reply.has_value());
    EXPECT_EQ(*reply, ex.reply);
    const auto parsed = parse_bridge_reply(*reply);
    EXPECT_EQ(parsed.total_logpred.value_or(0.0), -2.0);
  }
}

TEST(BridgeProtocol, RequestProjectsOntoListedColumns) {
  const auto split = testing::random_split_for_bridge();
  const auto line = bridge_request_line(7, LikelihoodQuery{&split, ParentSet{4, 0b01011U}});
  const auto j = nlohmann::json::parse(line);
  EXPECT_EQ(j.at("parents"), nlohmann::json::array({0, 1, 3}));
  EXPECT_EQ(j.at("child"), 4);
  for (const auto& row : j.at("train")) EXPECT_EQ(row.size(), 4U);
  EXPECT_EQ(j.at("train").size(), static_cast<std::size_t>(split.train.rows()));
  EXPECT_EQ(j.at("est").size(), static_cast<std::size_t>(split.est.rows()));
  EXPECT_EQ(j.at("train")[0][3].get<double>(), split.train.values(0, 4));
  EXPECT_EQ(j.at("train")[0][2].get<double>(), split.train.values(0, 3));
}

TEST(BridgeProtocol, ReplyParsing) {
  const auto ok = parse_bridge_reply(R"({"id":4,"total_logpred":-12.5})");
  EXPECT_EQ(ok.id, 4);
  EXPECT_EQ(*ok.total_logpred, -12.5);
  const auto err = parse_bridge_reply(R"({"id":5,"error":"model crashed"})");
  EXPECT_EQ(*err.error, "model crashed");
  EXPECT_THROW(parse_bridge_reply("nope"), BridgeProtocolError);
  EXPECT_THROW(parse_bridge_reply(R"({"total_logpred":1})"), BridgeProtocolError);
  EXPECT_THROW(parse_bridge_reply(R"({"id":1})"), BridgeProtocolError);
  EXPECT_THROW(parse_bridge_reply(R"({"id":1,"total_logpred":"x"})"), BridgeProtocolError);
  EXPECT_THROW(parse_bridge_reply(R"({"id":1,"total_logpred":1,"error":"e"})"), BridgeProtocolError);
}

TEST(ExternalEstimator, StubOverStdio) {
  const auto split = testing::random_split_for_bridge();
  const auto res = estimate_external(LikelihoodQuery{&split, ParentSet{1, 0b1U}}, "exec:" + kStub);
  EXPECT_EQ(res.total_logpred, -static_cast<double>(split.est.rows()));
}

TEST(ExternalEstimator, StubOverTcpWithPool) {
  TcpStub server;
  const auto split = testing::random_split_for_bridge();
  const ExternalEstimator est(server.endpoint(), 3);
  std::vector<double> results(60, 0.0);
  parallel_for(60, 6, [&](int k) {
    const ParentSet target{k % 5, static_cast<NodeMask>((k / 5) % 16) & ~(NodeMask{1} << (k % 5))};
    results[static_cast<std::size_t>(k)] = est.estimate(LikelihoodQuery{&split, target}).total_logpred;
  });
  for (double r : results) EXPECT_EQ(r, -static_cast<double>(split.est.rows()));
  EXPECT_LE(server.connections(), 3);
  EXPECT_GE(server.connections(), 1);
  EXPECT_EQ(server.requests(), 60);
}

TEST(ExternalEstimator, MalformedReplyCarriesPayload) {
  const auto split = testing::random_split_for_bridge();
  try {
    estimate_external(LikelihoodQuery{&split, ParentSet{0, 0}}, "exec:" + kStub + " --malformed");
    FAIL() << "expected a protocol error";
  } catch (const BridgeProtocolError& e) {
    EXPECT_EQ(e.payload(), "this is not json");
  }
}

TEST(ExternalEstimator, DistinctFailureKinds) {
  const auto split = testing::random_split_for_bridge();
  const LikelihoodQuery q{&split, ParentSet{0, 0}};
  EXPECT_THROW(estimate_external(q, "exec:" + kStub + " --error"), BridgeRemoteError);
  EXPECT_THROW(estimate_external(q, "exec:" + kStub + " --wrong-id"), BridgeProtocolError);
  EXPECT_THROW(estimate_external(q, "exec:" + kStub + " --hang-up"), BridgeConnectionError);
  EXPECT_THROW(estimate_external(q, "exec:/nonexistent/bridge"), BridgeConnectionError);
  EXPECT_THROW(estimate_external(q, "tcp://127.0.0.1:1"), BridgeConnectionError);
  EXPECT_THROW(estimate_external(q, "not-an-endpoint"), BridgeConnectionError);
}

TEST(ExternalEstimator, RemoteErrorKeepsConnectionUsable) {
  const auto split = testing::random_split_for_bridge();
  const ExternalEstimator est("exec:" + kStub + " --error", 1);
  const LikelihoodQuery q{&split, ParentSet{0, 0}};
  EXPECT_THROW(est.estimate(q), BridgeRemoteError);
  EXPECT_THROW(est.estimate(q), BridgeRemoteError);
}

TEST(ExternalEstimator, FallbackOnConnectionFailure) {
  const auto split = testing::random_split_for_bridge();
  const LikelihoodQuery q{&split, ParentSet{2, 0b11U}};
  EstimatorConfig cfg;
  cfg.kind = EstimatorKind::External;
  cfg.endpoint = "tcp://127.0.0.1:1";
  cfg.fallback_to_conjugate = true;
  const auto est = make_estimator(cfg);
  EXPECT_EQ(est->estimate(q).total_logpred, estimate_conjugate_gaussian(q, NigPrior{}).total_logpred);
}

TEST(ExternalEstimator, ScorerKeepsConnectionErrorType) {
  const auto split = std::make_shared<DataSplit>(testing::random_split_for_bridge());
  ScoreConfig cfg;
  cfg.estimator.kind = EstimatorKind::External;
  cfg.estimator.endpoint = "tcp://127.0.0.1:1";
  Scorer scorer(split, cfg);
  EXPECT_THROW(scorer.graph_score(DirectedGraph(5)), BridgeConnectionError);
}

TEST(ExternalEstimator, ScorerUsesStubValues) {
  const auto split = std::make_shared<DataSplit>(testing::random_split_for_bridge());
  ScoreConfig cfg;
  cfg.lambda = 0.0;
  cfg.estimator.kind = EstimatorKind::External;
  cfg.estimator.endpoint = "exec:" + kStub;
  cfg.estimator.connections = 2;
  Scorer scorer(split, cfg, 2);
  EXPECT_EQ(scorer.graph_score(testing::graph_from(5, {{0, 1}})), -5.0 * split->est.rows());
}

}  // namespace
}  // namespace acd
