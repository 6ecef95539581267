// Stub bridge speaking the estimator wire protocol on stdin/stdout.
// Replies -1.0 per estimation row. Fault modes for client tests:
//   --malformed   reply with a line that is not JSON
//   --error       reply with an error object
//   --wrong-id    reply with id + 1
//   --hang-up     exit without replying to the first request
//   --log FILE    append every request line to FILE

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <iostream>
#include <string>

int main(int argc, char** argv) {
  std::string mode = "stub";
  std::string log_path;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--log") == 0 && i + 1 < argc) {
      log_path = argv[++i];
    } else {
      mode = argv[i] + (std::strncmp(argv[i], "--", 2) == 0 ? 2 : 0);
    }
  }
  std::ofstream log;
  if (!log_path.empty()) log.open(log_path, std::ios::app);

  std::string line;
  while (std::getline(std::cin, line)) {
    if (log.is_open()) log << line << '\n' << std::flush;
    if (mode == "hang-up") return 1;
    if (mode == "malformed") {
      std::cout << "this is not json" << std::endl;
      continue;
    }
    nlohmann::ordered_json reply;
    long long id = 0;
    try {
      const auto req = nlohmann::json::parse(line);
      id = req.at("id").get<long long>();
      reply["id"] = mode == "wrong-id" ? id + 1 : id;
      if (mode == "error") {
        reply["error"] = "stub failure";
      } else {
        reply["total_logpred"] = -1.0 * static_cast<double>(req.at("est").size());
      }
    } catch (const std::exception& e) {
      reply["id"] = id;
      reply["error"] = std::string("malformed request: ") + e.what();
    }
    std::cout << reply.dump() << std::endl;
  }
  return 0;
}
