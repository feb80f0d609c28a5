#pragma once

#include <atomic>
#include <cstdint>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>

#include "hmqm/error.hpp"
#include "hmqm/protocol.hpp"
#include "hmqm/wire.hpp"
#include "json.hpp"

namespace hmqm {

struct ServerOptions {
  std::string host = "127.0.0.1";
  /// 0 picks a free port; see BankServer::port().
  std::uint16_t port = 0;
  /// Append-only journal; empty keeps state in memory only.
  std::string journal_path;
  std::uint64_t seed = 0;
};

/// Bank reachable over length-prefixed JSON. Messages (all carry "id"):
///   mint    {n, q, l, beta?, eta?, epsilon?} -> {coin}
///   measure {coin_id, queries: [{i, alpha, draw, pipeline}]} -> {outcomes}
///   verify  {transcript} -> {verdict}
/// Failures come back as {type: "error", code, message}.
class BankServer {
 public:
  /// Replays the journal, then binds and listens. Throws IoError on a bind
  /// failure or a corrupt journal (the message names the byte offset).
  explicit BankServer(ServerOptions options);
  ~BankServer();

  BankServer(const BankServer&) = delete;
  BankServer& operator=(const BankServer&) = delete;

  std::uint16_t port() const noexcept { return port_; }

  /// Accepts connections until stop(); one thread per connection.
  void serve();
  /// Runs serve() on a background thread.
  void start();
  void stop();

  /// Dispatches one decoded request. Exposed for tests.
  nlohmann::json handle(const nlohmann::json& request);
  /// Handles one raw frame, including undecodable ones.
  std::string handle_frame(const std::string& frame);

  /// Copy of a coin's database, for tests.
  std::optional<BankDatabase> snapshot(const CoinId& id) const;

 private:
  struct Entry {
    std::mutex lock;
    BankDatabase db;
  };

  void replay();
  void append(const nlohmann::json& record);
  std::shared_ptr<Entry> find(const CoinId& id) const;
  void run_connection(int fd);

  nlohmann::json on_mint(const nlohmann::json& request);
  nlohmann::json on_measure(const nlohmann::json& request);
  nlohmann::json on_verify(const nlohmann::json& request);

  ServerOptions options_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};

  mutable std::mutex coins_mutex_;
  std::map<CoinId, std::shared_ptr<Entry>> coins_;
  Rng rng_;

  std::mutex journal_mutex_;
  int journal_fd_ = -1;

  std::mutex threads_mutex_;
  std::list<std::thread> threads_;
  std::set<int> client_fds_;
  std::thread acceptor_;
};

/// Bank error reported by the server (as opposed to a network failure).
class RemoteError : public ProtocolError {
 public:
  RemoteError(std::string code, const std::string& message)
      : ProtocolError(code + ": " + message), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

struct MintedCoin {
  wire::CoinDescriptor descriptor;
  Coin coin;
};

/// Client side of BankServer. Network failures raise IoError; errors
/// returned by the bank raise RemoteError.
class RemoteBank final : public BankEndpoint {
 public:
  RemoteBank(const std::string& host, std::uint16_t port);
  ~RemoteBank() override;

  RemoteBank(const RemoteBank&) = delete;
  RemoteBank& operator=(const RemoteBank&) = delete;

  MintedCoin mint(int n, std::size_t q, std::size_t l, double beta = 0.0, double eta = 1.0, double epsilon = 0.0);
  std::vector<MeasurementOutcome> measure(const CoinId& coin, std::span<const MeasureQuery> queries) override;
  Verdict check(const VerificationTranscript& transcript) override;

  /// Sends one request (an "id" is added) and returns the matching response.
  nlohmann::json call(nlohmann::json request);

 private:
  int fd_ = -1;
  std::uint64_t next_id_ = 1;
};

/// Holder-side verification against a remote bank.
VerifyResult client_verify(RemoteBank& bank, Coin& coin, const VerdictParameters& params, const ChannelPtr& channel,
                           Rng& rng);

}  // namespace hmqm
