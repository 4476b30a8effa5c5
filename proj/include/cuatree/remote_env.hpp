#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cuatree/environment.hpp"

namespace cuatree {

// Blocking byte stream; implementations throw TransportError on failure or EOF.
class ByteStream {
 public:
  virtual ~ByteStream() = default;
  virtual void write_all(std::span<const std::uint8_t> bytes) = 0;
  virtual void read_exact(std::span<std::uint8_t> bytes) = 0;
};

// Owns a POSIX file descriptor (socket or pipe end).
class FdStream final : public ByteStream {
 public:
  explicit FdStream(int fd) : fd_(fd) {}
  ~FdStream() override;
  FdStream(const FdStream&) = delete;
  FdStream& operator=(const FdStream&) = delete;

  void write_all(std::span<const std::uint8_t> bytes) override;
  void read_exact(std::span<std::uint8_t> bytes) override;

  static std::unique_ptr<FdStream> connect_tcp(const std::string& host, std::uint16_t port);
  // Connected pair of local sockets, for in-process servers.
  static std::pair<std::unique_ptr<FdStream>, std::unique_ptr<FdStream>> socket_pair();

 private:
  int fd_;
};

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

// Frames are a 4-byte big-endian payload length followed by UTF-8 JSON.
void write_frame(ByteStream& stream, const Json& message);
Json read_frame(ByteStream& stream);

// {width, height, channels, pixels_base64, digest}
Json observation_to_wire(const Observation& observation);
Observation observation_from_wire(const Json& j);

// Environment whose state lives on the other end of a framed JSON stream.
class RemoteEnvironment final : public Environment {
 public:
  using Connector = std::function<std::unique_ptr<ByteStream>()>;

  explicit RemoteEnvironment(Connector connector);

  Observation reset(const EnvironmentConfig& config) override;
  Observation step(const Action& action) override;

 private:
  Observation call(const Json& request);

  Connector connector_;
  std::unique_ptr<ByteStream> stream_;
};

// Answers requests on `stream` with `env` until the peer closes the connection.
void serve_environment(ByteStream& stream, Environment& env);

}  // namespace cuatree
