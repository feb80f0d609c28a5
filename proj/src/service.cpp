#include "hmqm/service.hpp"

#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hmqm/error.hpp"

namespace hmqm {

namespace {

using nlohmann::json;

json error_response(const json& id, const std::string& code, const std::string& message) {
  return {{"type", "error"}, {"id", id}, {"code", code}, {"message", message}};
}

BankDatabase database_from_record(const json& r) {
  BankDatabase db;
  db.coin_id = r.at("coin_id").get<std::string>();
  db.n = r.at("n").get<int>();
  db.q = r.at("q").get<std::size_t>();
  db.l = r.at("l").get<std::size_t>();
  db.T = max_verifications(db.q, db.l);
  db.s = 0;
  db.secret_key = r.at("key").get<std::uint64_t>();
  db.params = verdict_parameters_from_json(r.at("params"));
  db.matching_set = std::make_shared<const DisjointMatchingSet>(build_disjoint_set(db.n));
  return db;
}

}  // namespace

BankServer::BankServer(ServerOptions options) : options_(std::move(options)), rng_(options_.seed) {
  if (!options_.journal_path.empty()) {
    replay();
    journal_fd_ = ::open(options_.journal_path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (journal_fd_ < 0) {
      throw IoError("cannot open journal " + options_.journal_path + ": " + std::strerror(errno));
    }
  }
  // Fresh randomness after a restart, so new coins never repeat old ones.
  rng_.seed(derive_seed(options_.seed, coins_.size()));

  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* found = nullptr;
  const std::string service = std::to_string(options_.port);
  if (const int rc = ::getaddrinfo(options_.host.c_str(), service.c_str(), &hints, &found); rc != 0) {
    throw IoError("cannot resolve " + options_.host + ": " + ::gai_strerror(rc));
  }
  std::string last_error = "no addresses";
  for (addrinfo* a = found; a != nullptr; a = a->ai_next) {
    const int fd = ::socket(a->ai_family, a->ai_socktype | SOCK_CLOEXEC, a->ai_protocol);
    if (fd < 0) {
      last_error = std::strerror(errno);
      continue;
    }
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, a->ai_addr, a->ai_addrlen) == 0 && ::listen(fd, 64) == 0) {
      listen_fd_ = fd;
      break;
    }
    last_error = std::strerror(errno);
    ::close(fd);
  }
  ::freeaddrinfo(found);
  if (listen_fd_ < 0) {
    if (journal_fd_ >= 0) ::close(journal_fd_);
    throw IoError("cannot bind " + options_.host + ":" + service + ": " + last_error);
  }
  sockaddr_storage addr{};
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = addr.ss_family == AF_INET6 ? ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port)
                                     : ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
}

BankServer::~BankServer() {
  stop();
  if (listen_fd_ >= 0) ::close(listen_fd_);
  if (journal_fd_ >= 0) ::close(journal_fd_);
}

void BankServer::replay() {
  std::ifstream in(options_.journal_path, std::ios::binary);
  if (!in) return;  // a missing journal is an empty one
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  std::size_t offset = 0;
  while (offset < text.size()) {
    std::size_t end = text.find('\n', offset);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(offset, end - offset);
    try {
      const json record = json::parse(line);
      const auto kind = record.at("kind").get<std::string>();
      if (kind == "mint") {
        auto entry = std::make_shared<Entry>();
        entry->db = database_from_record(record);
        if (!coins_.emplace(entry->db.coin_id, entry).second) throw std::runtime_error("coin minted twice");
      } else if (kind == "check") {
        auto it = coins_.find(record.at("coin_id").get<std::string>());
        if (it == coins_.end()) throw std::runtime_error("check for an unknown coin");
        it->second->db.s = std::max(it->second->db.s, record.at("s").get<std::size_t>());
      } else {
        throw std::runtime_error("unknown record kind '" + kind + "'");
      }
    } catch (const std::exception& e) {
      throw IoError("corrupt journal " + options_.journal_path + " at byte offset " + std::to_string(offset) + ": " +
                    e.what());
    }
    offset = end + 1;
  }
}

void BankServer::append(const json& record) {
  if (journal_fd_ < 0) return;
  const std::string line = record.dump() + "\n";
  std::lock_guard lock(journal_mutex_);
  const char* data = line.data();
  std::size_t left = line.size();
  while (left > 0) {
    const ssize_t n = ::write(journal_fd_, data, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError(std::string("journal write failed: ") + std::strerror(errno));
    }
    data += n;
    left -= static_cast<std::size_t>(n);
  }
  if (::fsync(journal_fd_) != 0) throw IoError(std::string("journal fsync failed: ") + std::strerror(errno));
}

std::shared_ptr<BankServer::Entry> BankServer::find(const CoinId& id) const {
  std::lock_guard lock(coins_mutex_);
  auto it = coins_.find(id);
  return it == coins_.end() ? nullptr : it->second;
}

std::optional<BankDatabase> BankServer::snapshot(const CoinId& id) const {
  auto entry = find(id);
  if (!entry) return std::nullopt;
  std::lock_guard lock(entry->lock);
  return entry->db;
}

json BankServer::on_mint(const json& request) {
  const int n = request.at("n").get<int>();
  const auto q = request.at("q").get<std::size_t>();
  const auto l = request.at("l").get<std::size_t>();
  const double beta = request.value("beta", 0.0);
  const double eta = request.value("eta", 1.0);
  const double epsilon = request.value("epsilon", 0.0);
  const VerdictParameters params = VerdictParameters::for_noise(n, beta, eta, epsilon);

  std::lock_guard lock(coins_mutex_);
  auto entry = std::make_shared<Entry>();
  for (;;) {
    auto [coin, db] = bank_mint(n, q, l, params, rng_);
    if (coins_.count(db.coin_id) == 0) {
      entry->db = std::move(db);
      break;
    }
  }
  const BankDatabase& db = entry->db;
  append({{"kind", "mint"},
          {"coin_id", db.coin_id},
          {"n", db.n},
          {"q", db.q},
          {"l", db.l},
          {"key", db.secret_key},
          {"params", to_json(db.params)}});
  coins_.emplace(db.coin_id, entry);

  const wire::CoinDescriptor descriptor{db.coin_id, db.n, db.q, db.l, db.T, db.params};
  return {{"type", "mint"}, {"coin", wire::to_json(descriptor, Coin(db.coin_id, db.n, db.q, db.l))}};
}

json BankServer::on_measure(const json& request) {
  const auto coin_id = request.at("coin_id").get<std::string>();
  std::vector<MeasureQuery> queries;
  for (const auto& q : request.at("queries")) queries.push_back(wire::measure_query_from_json(q));
  auto entry = find(coin_id);
  if (!entry) return error_response(request.at("id"), "unknown_coin", "no coin '" + coin_id + "'");

  json outcomes = json::array();
  std::lock_guard lock(entry->lock);
  for (const MeasureQuery& q : queries) {
    if (q.alpha < 1 || q.alpha > entry->db.matching_set->size() || q.game >= entry->db.q) {
      return error_response(request.at("id"), "bad_request", "query outside the coin or relation family");
    }
    outcomes.push_back(wire::to_json(measure_genuine_position(entry->db, q)));
  }
  return {{"type", "measure"}, {"outcomes", std::move(outcomes)}};
}

json BankServer::on_verify(const json& request) {
  const VerificationTranscript transcript = transcript_from_json(request.at("transcript"));
  auto entry = find(transcript.coin_id);
  if (!entry) return error_response(request.at("id"), "unknown_coin", "no coin '" + transcript.coin_id + "'");

  std::lock_guard lock(entry->lock);
  const Verdict verdict = bank_check(entry->db, transcript, entry->db.params);
  // Durable before anyone can learn the verdict.
  append({{"kind", "check"}, {"coin_id", transcript.coin_id}, {"s", entry->db.s}});
  return {{"type", "verify"}, {"verdict", to_json(verdict)}};
}

json BankServer::handle(const json& request) {
  const json id = request.is_object() && request.contains("id") ? request["id"] : json(nullptr);
  try {
    if (!request.is_object() || !request.contains("id")) {
      return error_response(id, "bad_request", "request must be an object with an id");
    }
    const auto type = request.at("type").get<std::string>();
    json response;
    if (type == "mint") {
      response = on_mint(request);
    } else if (type == "measure") {
      response = on_measure(request);
    } else if (type == "verify") {
      response = on_verify(request);
    } else {
      return error_response(id, "bad_request", "unknown message type '" + type + "'");
    }
    response["id"] = id;
    return response;
  } catch (const json::exception& e) {
    return error_response(id, "bad_request", e.what());
  } catch (const InvalidArgument& e) {
    return error_response(id, "invalid_parameters", e.what());
  } catch (const IoError& e) {
    return error_response(id, "io_error", e.what());
  } catch (const ProtocolError& e) {
    return error_response(id, "protocol_error", e.what());
  } catch (const std::exception& e) {
    return error_response(id, "internal", e.what());
  }
}

std::string BankServer::handle_frame(const std::string& frame) {
  json request;
  try {
    request = json::parse(frame);
  } catch (const json::exception& e) {
    return wire::encode(error_response(nullptr, "bad_request", std::string("malformed JSON: ") + e.what()));
  }
  return wire::encode(handle(request));
}

void BankServer::run_connection(int fd) {
  try {
    while (auto frame = wire::read_frame(fd)) wire::write_frame(fd, handle_frame(*frame));
  } catch (const IoError&) {
    // Client went away; nothing to report to it.
  }
  std::lock_guard lock(threads_mutex_);
  client_fds_.erase(fd);
  ::close(fd);
}

void BankServer::serve() {
  while (!stopping_) {
    const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) {
      if (errno == EINTR || errno == ECONNABORTED) continue;
      if (stopping_) break;
      throw IoError(std::string("accept failed: ") + std::strerror(errno));
    }
    std::lock_guard lock(threads_mutex_);
    if (stopping_) {
      ::close(fd);
      break;
    }
    client_fds_.insert(fd);
    threads_.emplace_back([this, fd] { run_connection(fd); });
  }
}

void BankServer::start() {
  acceptor_ = std::thread([this] {
    try {
      serve();
    } catch (const IoError&) {
    }
  });
}

void BankServer::stop() {
  if (stopping_.exchange(true)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  if (acceptor_.joinable()) acceptor_.join();
  std::list<std::thread> threads;
  {
    std::lock_guard lock(threads_mutex_);
    for (int fd : client_fds_) ::shutdown(fd, SHUT_RDWR);
    threads.swap(threads_);
  }
  for (auto& t : threads) t.join();
}

RemoteBank::RemoteBank(const std::string& host, std::uint16_t port) : fd_(wire::connect_to(host, port)) {}

RemoteBank::~RemoteBank() {
  if (fd_ >= 0) ::close(fd_);
}

json RemoteBank::call(json request) {
  const std::uint64_t id = next_id_++;
  request["id"] = id;
  wire::write_frame(fd_, wire::encode(request));
  const auto frame = wire::read_frame(fd_);
  if (!frame) throw IoError("bank closed the connection");
  json response;
  try {
    response = json::parse(*frame);
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed response from bank: ") + e.what());
  }
  if (!response.is_object() || response.value("id", json(nullptr)) != json(id)) {
    throw IoError("bank response does not echo request id " + std::to_string(id));
  }
  if (response.value("type", "") == "error") {
    throw RemoteError(response.value("code", "unknown"), response.value("message", ""));
  }
  return response;
}

MintedCoin RemoteBank::mint(int n, std::size_t q, std::size_t l, double beta, double eta, double epsilon) {
  json response = call({{"type", "mint"}, {"n", n}, {"q", q}, {"l", l}, {"beta", beta}, {"eta", eta}, {"epsilon", epsilon}});
  auto [descriptor, coin] = wire::coin_from_json(response.at("coin"));
  return {std::move(descriptor), std::move(coin)};
}

std::vector<MeasurementOutcome> RemoteBank::measure(const CoinId& coin, std::span<const MeasureQuery> queries) {
  json list = json::array();
  for (const MeasureQuery& q : queries) list.push_back(wire::to_json(q));
  json response = call({{"type", "measure"}, {"coin_id", coin}, {"queries", std::move(list)}});
  std::vector<MeasurementOutcome> out;
  for (const auto& o : response.at("outcomes")) out.push_back(wire::outcome_from_json(o));
  return out;
}

Verdict RemoteBank::check(const VerificationTranscript& transcript) {
  json response = call({{"type", "verify"}, {"transcript", to_json(transcript)}});
  return verdict_from_json(response.at("verdict"));
}

VerifyResult client_verify(RemoteBank& bank, Coin& coin, const VerdictParameters& params, const ChannelPtr& channel,
                           Rng& rng) {
  return holder_verify(coin, bank, params, channel, rng);
}

}  // namespace hmqm
