#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

#include "cuatree/agents.hpp"

namespace cuatree {

struct RemoteAgentOptions {
  std::string endpoint;  // http://host:port[/prefix]
  int timeout_ms = 30000;
  int max_retries = 2;
  int max_in_flight = 4;
};

std::optional<std::string> remote_agent_options_violation(const RemoteAgentOptions& options);

// Agents backed by POST {endpoint}/v1/{propose|verify|summarize|evaluate|reason}. All five share one
// in-flight limit. Failed calls are retried max_retries times, then raise TransportError.
AgentSuite remote_suite(const RemoteAgentOptions& options);

// Observation payload sent to agents: the wire observation plus the simulator annotation when present.
Json agent_observation_to_json(const Observation& observation);
Observation agent_observation_from_json(const Json& j);

// Answers one gateway request body for `role` with `suite`.
Json handle_agent_request(const AgentSuite& suite, std::string_view role, const Json& body);

// HTTP gateway serving `suite` on 127.0.0.1; used by tests and as a reference proxy.
class AgentGatewayServer {
 public:
  explicit AgentGatewayServer(AgentSuite suite);
  ~AgentGatewayServer();
  AgentGatewayServer(const AgentGatewayServer&) = delete;
  AgentGatewayServer& operator=(const AgentGatewayServer&) = delete;

  // Binds an ephemeral port (or `port`) and serves in a background thread.
  int start(int port = 0);
  void stop();
  std::string endpoint() const;
  std::uint64_t requests_served() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cuatree
