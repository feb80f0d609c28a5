#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include "hmqm/protocol.hpp"
#include "json.hpp"

namespace hmqm::wire {

/// Frames above this size are rejected by both ends.
inline constexpr std::size_t kMaxFrame = std::size_t{64} << 20;

/// Compact JSON with object keys in sorted order.
std::string encode(const nlohmann::json& message);

/// Writes a 4-byte big-endian length followed by the payload. Throws IoError.
void write_frame(int fd, const std::string& payload);

/// Reads one frame. Returns nullopt on a clean end of stream before the
/// length prefix; throws IoError on a short read or an oversized frame.
std::optional<std::string> read_frame(int fd);

/// Connects to host:port over TCP. Throws IoError.
int connect_to(const std::string& host, std::uint16_t port);

/// Splits "host:port"; throws InvalidArgument when malformed.
std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& text);

/// What a client learns at mint time: no secret strings.
struct CoinDescriptor {
  CoinId coin_id;
  int n = 0;
  std::size_t q = 0;
  std::size_t l = 0;
  std::size_t T = 0;
  VerdictParameters params;
};

nlohmann::json to_json(const CoinDescriptor& d, const Coin& coin);
/// Rebuilds the descriptor and a holder-side coin with its r register.
std::pair<CoinDescriptor, Coin> coin_from_json(const nlohmann::json& j);

nlohmann::json to_json(const MeasureQuery& q);
MeasureQuery measure_query_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MeasurementOutcome& o);
MeasurementOutcome outcome_from_json(const nlohmann::json& j);

}  // namespace hmqm::wire
