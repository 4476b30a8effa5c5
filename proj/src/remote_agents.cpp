#include "cuatree/remote_agents.hpp"

#include <httplib.h>

#include <atomic>
#include <semaphore>
#include <thread>

#include "cuatree/error.hpp"
#include "cuatree/hashing.hpp"
#include "cuatree/remote_env.hpp"

namespace cuatree {

namespace {

constexpr std::ptrdiff_t kMaxInFlight = 1024;

Json history_to_json(const std::vector<HistoryEntry>& history) {
  Json out = Json::array();
  for (const auto& h : history) out.push_back(to_json(h));
  return out;
}

std::vector<HistoryEntry> history_from_json(const Json& j) {
  std::vector<HistoryEntry> out;
  for (const auto& h : j) out.push_back(history_entry_from_json(h));
  return out;
}

struct Endpoint {
  std::string host;  // scheme://host:port
  std::string prefix;
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("agent endpoint must start with http://");
  const auto path = url.find('/', scheme + 3);
  if (path == std::string::npos) return {url, ""};
  std::string prefix = url.substr(path);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, path), prefix};
}

class Gateway {
 public:
  explicit Gateway(const RemoteAgentOptions& options)
      : options_(options), endpoint_(split_endpoint(options.endpoint)), slots_(options.max_in_flight) {}

  Json call(std::string_view role, const Json& body) const {
    const std::string path = endpoint_.prefix + "/v1/" + std::string(role);
    const std::string payload = body.dump();
    std::string last_error;
    for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
      slots_.acquire();
      httplib::Result result = [&] {
        httplib::Client client(endpoint_.host);
        const auto ms = std::chrono::milliseconds(options_.timeout_ms);
        client.set_connection_timeout(ms);
        client.set_read_timeout(ms);
        client.set_write_timeout(ms);
        return client.Post(path, payload, "application/json");
      }();
      slots_.release();
      if (!result) {
        last_error = httplib::to_string(result.error());
        continue;
      }
      Json response;
      try {
        response = Json::parse(result->body);
      } catch (const nlohmann::json::exception& e) {
        last_error = std::string("malformed response: ") + e.what();
        continue;
      }
      if (result->status == 422 && response.value("error", "") == "empty_summary") {
        throw EmptySummaryError(response.value("message", "trajectory has no successful step"));
      }
      if (result->status != 200) {
        last_error = "status " + std::to_string(result->status) + ": " + response.value("message", "");
        continue;
      }
      return response;
    }
    throw TransportError("agent gateway " + path + " failed: " + last_error);
  }

 private:
  RemoteAgentOptions options_;
  Endpoint endpoint_;
  mutable std::counting_semaphore<kMaxInFlight> slots_;
};

// Response decoding errors are transport errors: the node must stay retryable.
template <typename F>
auto decode(std::string_view role, F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string(role) + " response: " + e.what());
  } catch (const ParseError& e) {
    throw TransportError(std::string(role) + " response: " + e.what());
  }
}

class RemoteExplorer final : public ExplorationAgent {
 public:
  explicit RemoteExplorer(std::shared_ptr<const Gateway> g) : g_(std::move(g)) {}
  std::vector<ExplorationTuple> propose(const ExplorationContext& ctx) const override {
    const Json r = g_->call("propose", {{"observation", agent_observation_to_json(ctx.observation)},
                                        {"history", history_to_json(ctx.history)},
                                        {"world_knowledge", ctx.world_knowledge},
                                        {"prefix_memory_view", ctx.prefix_memory_view},
                                        {"k_max", ctx.k_max},
                                        {"seed", ctx.seed},
                                        {"category", ctx.category}});
    return decode("propose", [&] {
      std::vector<ExplorationTuple> out;
      for (const auto& t : r.at("tuples")) out.push_back(tuple_from_json(t));
      return out;
    });
  }

 private:
  std::shared_ptr<const Gateway> g_;
};

class RemoteVerifier final : public VerificationAgent {
 public:
  explicit RemoteVerifier(std::shared_ptr<const Gateway> g) : g_(std::move(g)) {}
  VerificationResult verify(const Observation& previous, const ExplorationTuple& tuple,
                            const Observation& actual) const override {
    const Json r = g_->call("verify", {{"previous", agent_observation_to_json(previous)},
                                       {"tuple", to_json(tuple)},
                                       {"actual", agent_observation_to_json(actual)}});
    return decode("verify", [&] { return verification_from_json(r); });
  }

 private:
  std::shared_ptr<const Gateway> g_;
};

class RemoteSummarizer final : public SummaryAgent {
 public:
  explicit RemoteSummarizer(std::shared_ptr<const Gateway> g) : g_(std::move(g)) {}
  TaskSummary summarize(const Trajectory& trajectory) const override {
    const Json r = g_->call("summarize", {{"trajectory", to_json(trajectory)}});
    return decode("summarize", [&] { return task_summary_from_json(r); });
  }

 private:
  std::shared_ptr<const Gateway> g_;
};

class RemoteEvaluator final : public EvaluationAgent {
 public:
  explicit RemoteEvaluator(std::shared_ptr<const Gateway> g) : g_(std::move(g)) {}
  QualityScore evaluate(const Trajectory& trajectory, std::string_view instruction) const override {
    const Json r = g_->call("evaluate", {{"trajectory", to_json(trajectory)}, {"instruction", instruction}});
    return decode("evaluate", [&] { return quality_score_from_json(r); });
  }

 private:
  std::shared_ptr<const Gateway> g_;
};

class RemoteReasoner final : public ReasoningAgent {
 public:
  explicit RemoteReasoner(std::shared_ptr<const Gateway> g) : g_(std::move(g)) {}
  ReasoningChain synthesize_reasoning(std::string_view goal, const ReasoningStep& step,
                                      const std::vector<HistoryEntry>& history,
                                      const std::vector<std::string>& future) const override {
    const Json r = g_->call("reason", {{"goal", goal},
                                       {"step", {{"digest", to_hex(step.observation_digest)},
                                                 {"tuple", to_json(step.tuple)}}},
                                       {"history", history_to_json(history)},
                                       {"future", future}});
    return decode("reason", [&] { return reasoning_chain_from_json(r); });
  }

 private:
  std::shared_ptr<const Gateway> g_;
};

}  // namespace

std::optional<std::string> remote_agent_options_violation(const RemoteAgentOptions& o) {
  if (o.endpoint.rfind("http://", 0) != 0) return "endpoint must start with http://";
  if (o.timeout_ms <= 0) return "timeout_ms must be positive";
  if (o.max_retries < 0) return "max_retries must be non-negative";
  if (o.max_in_flight < 1 || o.max_in_flight > kMaxInFlight) return "max_in_flight must lie in 1..1024";
  return std::nullopt;
}

AgentSuite remote_suite(const RemoteAgentOptions& options) {
  if (auto v = remote_agent_options_violation(options)) throw ConfigError("agents: " + *v);
  auto g = std::make_shared<const Gateway>(options);
  return {std::make_shared<RemoteExplorer>(g), std::make_shared<RemoteVerifier>(g),
          std::make_shared<RemoteSummarizer>(g), std::make_shared<RemoteEvaluator>(g),
          std::make_shared<RemoteReasoner>(g)};
}

Json agent_observation_to_json(const Observation& observation) {
  Json j = observation_to_wire(observation);
  if (const auto& s = observation.state()) j["state"] = {{"screen", s->screen}, {"vars", s->vars}};
  return j;
}

Observation agent_observation_from_json(const Json& j) {
  Observation plain = observation_from_wire(j);
  if (!j.contains("state")) return plain;
  ScreenState state{json_required<std::string>(j["state"], "screen"),
                    json_required<std::map<std::string, std::string>>(j["state"], "vars")};
  const auto px = plain.pixels();
  return Observation(plain.width(), plain.height(), plain.channels(), {px.begin(), px.end()}, std::move(state));
}

Json handle_agent_request(const AgentSuite& suite, std::string_view role, const Json& body) {
  if (role == "propose") {
    ExplorationContext ctx;
    ctx.observation = agent_observation_from_json(body.at("observation"));
    ctx.history = history_from_json(body.at("history"));
    ctx.world_knowledge = json_required<std::string>(body, "world_knowledge");
    ctx.prefix_memory_view = json_required<std::vector<std::vector<std::string>>>(body, "prefix_memory_view");
    ctx.k_max = json_required<int>(body, "k_max");
    ctx.seed = json_required<std::uint64_t>(body, "seed");
    ctx.category = json_required<std::string>(body, "category");
    Json tuples = Json::array();
    for (const auto& t : suite.explorer->propose(ctx)) tuples.push_back(to_json(t));
    return {{"tuples", std::move(tuples)}};
  }
  if (role == "verify") {
    return to_json(suite.verifier->verify(agent_observation_from_json(body.at("previous")),
                                          tuple_from_json(body.at("tuple")),
                                          agent_observation_from_json(body.at("actual"))));
  }
  if (role == "summarize") return to_json(suite.summarizer->summarize(trajectory_from_json(body.at("trajectory"))));
  if (role == "evaluate") {
    return to_json(suite.evaluator->evaluate(trajectory_from_json(body.at("trajectory")),
                                             json_required<std::string>(body, "instruction")));
  }
  if (role == "reason") {
    const Json& step = body.at("step");
    return to_json(suite.reasoner->synthesize_reasoning(
        json_required<std::string>(body, "goal"),
        ReasoningStep{from_hex(json_required<std::string>(step, "digest")), tuple_from_json(step.at("tuple"))},
        history_from_json(body.at("history")), json_required<std::vector<std::string>>(body, "future")));
  }
  throw NotFoundError("unknown agent role '" + std::string(role) + "'");
}

struct AgentGatewayServer::Impl {
  AgentSuite suite;
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<std::uint64_t> served{0};
};

AgentGatewayServer::AgentGatewayServer(AgentSuite suite) : impl_(std::make_unique<Impl>()) {
  impl_->suite = std::move(suite);
  impl_->server.Post(R"(/v1/(\w+))", [this](const httplib::Request& req, httplib::Response& res) {
    ++impl_->served;
    Json reply;
    try {
      reply = handle_agent_request(impl_->suite, req.matches[1].str(), Json::parse(req.body));
    } catch (const EmptySummaryError& e) {
      res.status = 422;
      reply = {{"error", "empty_summary"}, {"message", e.what()}};
    } catch (const NotFoundError& e) {
      res.status = 404;
      reply = {{"error", "not_found"}, {"message", e.what()}};
    } catch (const std::exception& e) {
      res.status = 400;
      reply = {{"error", "bad_request"}, {"message", e.what()}};
    }
    res.set_content(reply.dump(), "application/json");
  });
}

AgentGatewayServer::~AgentGatewayServer() { stop(); }

int AgentGatewayServer::start(int port) {
  if (impl_->thread.joinable()) return impl_->port;
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port("127.0.0.1");
  } else if (impl_->server.bind_to_port("127.0.0.1", port)) {
    impl_->port = port;
  } else {
    impl_->port = -1;
  }
  if (impl_->port <= 0) throw TransportError("agent gateway could not bind a port");
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

void AgentGatewayServer::stop() {
  if (!impl_->thread.joinable()) return;
  impl_->server.stop();
  impl_->thread.join();
}

std::string AgentGatewayServer::endpoint() const { return "http://127.0.0.1:" + std::to_string(impl_->port); }

std::uint64_t AgentGatewayServer::requests_served() const { return impl_->served.load(); }

}  // namespace cuatree
