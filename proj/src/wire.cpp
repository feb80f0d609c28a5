#include "hmqm/wire.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "hmqm/error.hpp"

namespace hmqm::wire {

namespace {

void write_all(int fd, const char* data, std::size_t size) {
  while (size > 0) {
    const ssize_t n = ::send(fd, data, size, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError(std::string("send failed: ") + std::strerror(errno));
    }
    data += n;
    size -= static_cast<std::size_t>(n);
  }
}

// Returns the number of bytes read before end of stream.
std::size_t read_all(int fd, char* data, std::size_t size) {
  std::size_t got = 0;
  while (got < size) {
    const ssize_t n = ::recv(fd, data + got, size - got, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError(std::string("recv failed: ") + std::strerror(errno));
    }
    if (n == 0) break;
    got += static_cast<std::size_t>(n);
  }
  return got;
}

}  // namespace

std::string encode(const nlohmann::json& message) { return message.dump(); }

void write_frame(int fd, const std::string& payload) {
  if (payload.size() > kMaxFrame) throw IoError("frame of " + std::to_string(payload.size()) + " bytes is too large");
  const auto size = static_cast<std::uint32_t>(payload.size());
  const unsigned char prefix[4] = {static_cast<unsigned char>(size >> 24), static_cast<unsigned char>(size >> 16),
                                   static_cast<unsigned char>(size >> 8), static_cast<unsigned char>(size)};
  std::string frame(reinterpret_cast<const char*>(prefix), 4);
  frame += payload;
  write_all(fd, frame.data(), frame.size());
}

std::optional<std::string> read_frame(int fd) {
  unsigned char prefix[4];
  const std::size_t got = read_all(fd, reinterpret_cast<char*>(prefix), 4);
  if (got == 0) return std::nullopt;
  if (got < 4) throw IoError("connection closed inside a length prefix");
  const std::uint32_t size = (std::uint32_t{prefix[0]} << 24) | (std::uint32_t{prefix[1]} << 16) |
                             (std::uint32_t{prefix[2]} << 8) | std::uint32_t{prefix[3]};
  if (size > kMaxFrame) throw IoError("incoming frame of " + std::to_string(size) + " bytes is too large");
  std::string payload(size, '\0');
  if (read_all(fd, payload.data(), size) != size) throw IoError("connection closed inside a frame");
  return payload;
}

int connect_to(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* found = nullptr;
  const std::string service = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &found); rc != 0) {
    throw IoError("cannot resolve " + host + ": " + ::gai_strerror(rc));
  }
  int fd = -1;
  std::string last_error = "no addresses";
  for (addrinfo* a = found; a != nullptr; a = a->ai_next) {
    fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd < 0) {
      last_error = std::strerror(errno);
      continue;
    }
    if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) break;
    last_error = std::strerror(errno);
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(found);
  if (fd < 0) throw IoError("cannot connect to " + host + ":" + service + ": " + last_error);
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return fd;
}

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
    throw InvalidArgument("endpoint must look like host:port, got '" + text + "'");
  }
  const std::string port_text = text.substr(colon + 1);
  unsigned long port = 0;
  try {
    std::size_t used = 0;
    port = std::stoul(port_text, &used);
    if (used != port_text.size()) throw std::invalid_argument(port_text);
  } catch (const std::exception&) {
    throw InvalidArgument("bad port in endpoint '" + text + "'");
  }
  if (port > 65535) throw InvalidArgument("port out of range in endpoint '" + text + "'");
  return {text.substr(0, colon), static_cast<std::uint16_t>(port)};
}

nlohmann::json to_json(const CoinDescriptor& d, const Coin& coin) {
  nlohmann::json used = nlohmann::json::array();
  if (coin.used_count() > 0) {
    for (std::size_t i = 0; i < coin.q(); ++i) {
      if (coin.used(i)) used.push_back(i);
    }
  }
  return {{"coin_id", d.coin_id}, {"n", d.n},   {"q", d.q},
          {"l", d.l},             {"T", d.T},   {"params", hmqm::to_json(d.params)},
          {"r_used", std::move(used)}};
}

std::pair<CoinDescriptor, Coin> coin_from_json(const nlohmann::json& j) {
  CoinDescriptor d;
  d.coin_id = j.at("coin_id").get<std::string>();
  d.n = j.at("n").get<int>();
  d.q = j.at("q").get<std::size_t>();
  d.l = j.at("l").get<std::size_t>();
  d.T = j.at("T").get<std::size_t>();
  d.params = verdict_parameters_from_json(j.at("params"));
  Coin coin(d.coin_id, d.n, d.q, d.l);
  for (const auto& i : j.at("r_used")) coin.mark_used(i.get<std::size_t>());
  return {std::move(d), std::move(coin)};
}

nlohmann::json to_json(const MeasureQuery& q) {
  return {{"i", q.game}, {"alpha", q.alpha}, {"draw", q.draw}, {"pipeline", describe_pipeline(q.pipeline)}};
}

MeasureQuery measure_query_from_json(const nlohmann::json& j) {
  MeasureQuery q;
  q.game = j.at("i").get<std::size_t>();
  q.alpha = j.at("alpha").get<std::size_t>();
  q.draw = j.at("draw").get<std::uint64_t>();
  q.pipeline = pipeline_from_json(j.at("pipeline"));
  return q;
}

nlohmann::json to_json(const MeasurementOutcome& o) { return {{"i", o.i}, {"j", o.j}, {"b", o.b}}; }

MeasurementOutcome outcome_from_json(const nlohmann::json& j) {
  return {j.at("i").get<int>(), j.at("j").get<int>(), j.at("b").get<int>()};
}

}  // namespace hmqm::wire
