#include "cuatree/remote_env.hpp"

#include <netdb.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include <openssl/evp.h>

#include "cuatree/error.hpp"
#include "cuatree/hashing.hpp"

namespace cuatree {

FdStream::~FdStream() {
  if (fd_ >= 0) ::close(fd_);
}

void FdStream::write_all(std::span<const std::uint8_t> bytes) {
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t n = ::send(fd_, bytes.data() + done, bytes.size() - done, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw TransportError(std::string("write failed: ") + std::strerror(errno));
    done += static_cast<std::size_t>(n);
  }
}

void FdStream::read_exact(std::span<std::uint8_t> bytes) {
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t n = ::recv(fd_, bytes.data() + done, bytes.size() - done, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n == 0) throw TransportError("connection closed by peer");
    if (n < 0) throw TransportError(std::string("read failed: ") + std::strerror(errno));
    done += static_cast<std::size_t>(n);
  }
}

std::unique_ptr<FdStream> FdStream::connect_tcp(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* result = nullptr;
  if (int rc = ::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &result); rc != 0) {
    throw TransportError("resolve " + host + ": " + ::gai_strerror(rc));
  }
  int fd = -1;
  for (addrinfo* ai = result; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(result);
  if (fd < 0) throw TransportError("cannot connect to " + host + ":" + std::to_string(port));
  return std::make_unique<FdStream>(fd);
}

std::pair<std::unique_ptr<FdStream>, std::unique_ptr<FdStream>> FdStream::socket_pair() {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) {
    throw TransportError(std::string("socketpair: ") + std::strerror(errno));
  }
  return {std::make_unique<FdStream>(fds[0]), std::make_unique<FdStream>(fds[1])};
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw ParseError("base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out(3 * (text.size() / 4));
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw ParseError("invalid base64 payload");
  // EVP_DecodeBlock keeps the zero bytes produced by '=' padding.
  std::size_t len = static_cast<std::size_t>(n);
  if (!text.empty() && text.back() == '=') --len;
  if (text.size() >= 2 && text[text.size() - 2] == '=') --len;
  out.resize(len);
  return out;
}

void write_frame(ByteStream& stream, const Json& message) {
  const std::string payload = message.dump();
  const auto len = static_cast<std::uint32_t>(payload.size());
  const std::uint8_t header[4] = {static_cast<std::uint8_t>(len >> 24), static_cast<std::uint8_t>(len >> 16),
                                  static_cast<std::uint8_t>(len >> 8), static_cast<std::uint8_t>(len)};
  stream.write_all(header);
  stream.write_all({reinterpret_cast<const std::uint8_t*>(payload.data()), payload.size()});
}

Json read_frame(ByteStream& stream) {
  std::uint8_t header[4];
  stream.read_exact(header);
  const std::uint32_t len = (std::uint32_t{header[0]} << 24) | (std::uint32_t{header[1]} << 16) |
                            (std::uint32_t{header[2]} << 8) | std::uint32_t{header[3]};
  if (len > (64u << 20)) throw TransportError("frame of " + std::to_string(len) + " bytes exceeds limit");
  std::string payload(len, '\0');
  stream.read_exact({reinterpret_cast<std::uint8_t*>(payload.data()), payload.size()});
  try {
    return Json::parse(payload);
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("malformed frame: ") + e.what());
  }
}

Json observation_to_wire(const Observation& observation) {
  return Json{{"width", observation.width()},
              {"height", observation.height()},
              {"channels", observation.channels()},
              {"pixels_base64", base64_encode(observation.pixels())},
              {"digest", to_hex(observation.digest())}};
}

Observation observation_from_wire(const Json& j) {
  try {
    Observation obs(j.at("width").get<int>(), j.at("height").get<int>(), j.at("channels").get<int>(),
                    base64_decode(j.at("pixels_base64").get<std::string>()));
    if (j.contains("digest") && from_hex(j["digest"].get<std::string>()) != obs.digest()) {
      throw TransportError("observation digest does not match its pixels");
    }
    return obs;
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("malformed observation: ") + e.what());
  } catch (const ContractError& e) {
    throw TransportError(std::string("malformed observation: ") + e.what());
  } catch (const ParseError& e) {
    throw TransportError(std::string("malformed observation: ") + e.what());
  }
}

RemoteEnvironment::RemoteEnvironment(Connector connector) : connector_(std::move(connector)) {}

Observation RemoteEnvironment::reset(const EnvironmentConfig& config) {
  return call(Json{{"op", "reset"}, {"config", to_json(config)}});
}

Observation RemoteEnvironment::step(const Action& action) {
  check_action(action);
  if (action.kind == ActionKind::kTerminate) throw ContractError("terminate is handled by the engine, not the environment");
  return call(Json{{"op", "step"}, {"action", to_json(action)}});
}

Observation RemoteEnvironment::call(const Json& request) {
  for (int attempt = 0;; ++attempt) {
    try {
      if (!stream_) stream_ = connector_();
      write_frame(*stream_, request);
      Json response = read_frame(*stream_);
      if (response.contains("error")) throw TransportError("remote error: " + response["error"].dump());
      return observation_from_wire(response);
    } catch (const TransportError&) {
      stream_.reset();
      if (attempt >= 1) throw;  // one reconnect only
    }
  }
}

void serve_environment(ByteStream& stream, Environment& env) {
  for (;;) {
    Json request;
    try {
      request = read_frame(stream);
    } catch (const TransportError&) {
      return;
    }
    Json response;
    try {
      const std::string op = request.at("op").get<std::string>();
      if (op == "reset") {
        response = observation_to_wire(env.reset(environment_config_from_json(request.at("config"))));
      } else if (op == "step") {
        response = observation_to_wire(env.step(action_from_json(request.at("action"))));
      } else {
        response = Json{{"error", "unknown op '" + op + "'"}};
      }
    } catch (const std::exception& e) {
      response = Json{{"error", e.what()}};
    }
    write_frame(stream, response);
  }
}

}  // namespace cuatree
