#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "hmqm/channel.hpp"
#include "hmqm/matchings.hpp"
#include "hmqm/qrg.hpp"
#include "hmqm/rng.hpp"
#include "json.hpp"

namespace hmqm {

using CoinId = std::string;

/// Threshold parameters of one verification. The bank accepts iff the number
/// of correct answers exceeds l' (c - delta).
struct VerdictParameters {
  double c = 1.0;
  double delta = 0.0;
  double eta = 1.0;
  double epsilon = 0.0;

  /// Default policy: c = 1 - beta, delta = (e - beta)/2 where e is e_min(n),
  /// or its loss-adjusted value when eta < 1 or epsilon > 0.
  static VerdictParameters for_noise(int n, double beta, double eta = 1.0, double epsilon = 0.0);

  /// Minimum number of non-empty outcomes, (eta - epsilon) l.
  double l_min(std::size_t l) const { return (eta - epsilon) * static_cast<double>(l); }

  /// Throws InvalidArgument unless c - delta > 1/2, delta > 0, eta in (0, 1]
  /// and epsilon >= 0.
  void validate() const;
};

/// T = floor(q / (1000 l)); throws InvalidArgument when that is zero.
std::size_t max_verifications(std::size_t q, std::size_t l);

/// The bank's record for one coin. Secrets are derived on demand from
/// `secret_key`, so a coin with millions of positions costs O(1) memory.
struct BankDatabase {
  CoinId coin_id;
  int n = 0;
  std::size_t q = 0;
  std::size_t l = 0;
  std::size_t T = 0;
  /// Number of bank_check calls made for this coin.
  std::size_t s = 0;
  std::uint64_t secret_key = 0;
  VerdictParameters params;
  std::shared_ptr<const DisjointMatchingSet> matching_set;

  BitString secret(std::size_t game) const;
};

/// The bank's state for this position, after the listed channels. The holder
/// never sees the secret; measuring it goes through a BankEndpoint.
struct GenuineRef {
  ChannelPipeline transform;
};

/// An explicit state supplied by whoever prepared the coin.
struct Forged {
  DensityMatrix state;
};

/// Nothing was sent for this position.
struct Absent {};

using CoinPosition = std::variant<GenuineRef, Forged, Absent>;

/// Position contents of a coin: a fill value, then half-open ranges, then
/// single-index overrides, later entries taking precedence.
class PositionMap {
 public:
  PositionMap() = default;
  explicit PositionMap(CoinPosition fill) : fill_(std::move(fill)) {}

  void assign(std::size_t begin, std::size_t end, CoinPosition p);
  void set(std::size_t index, CoinPosition p);
  const CoinPosition& at(std::size_t index) const;

 private:
  struct Segment {
    std::size_t begin;
    std::size_t end;
    CoinPosition position;
  };
  CoinPosition fill_ = GenuineRef{};
  std::vector<Segment> segments_;
  std::map<std::size_t, CoinPosition> overrides_;
};

/// The (state, r) pair held by a user. Bits of r only ever go from 0 to 1.
class Coin {
 public:
  Coin(CoinId id, int n, std::size_t q, std::size_t l, PositionMap positions = {});

  const CoinId& id() const noexcept { return id_; }
  int n() const noexcept { return n_; }
  std::size_t q() const noexcept { return q_; }
  std::size_t l() const noexcept { return l_; }

  bool used(std::size_t game) const { return r_.at(game); }
  std::size_t used_count() const noexcept { return used_; }
  std::size_t unused_count() const noexcept { return q_ - used_; }
  void mark_used(std::size_t game);

  const PositionMap& positions() const noexcept { return positions_; }
  PositionMap& positions() noexcept { return positions_; }

 private:
  CoinId id_;
  int n_;
  std::size_t q_;
  std::size_t l_;
  std::vector<bool> r_;
  std::size_t used_ = 0;
  PositionMap positions_;
};

struct Triplet {
  std::size_t game = 0;
  std::size_t alpha = 0;
  Outcome outcome;
};

struct VerificationTranscript {
  CoinId coin_id;
  std::vector<Triplet> triplets;
  std::size_t l = 0;

  /// Number of non-empty outcomes.
  std::size_t l_prime() const;
};

struct Verdict {
  bool valid = false;
  std::size_t s = 0;
  std::size_t T = 0;
  std::size_t correct_count = 0;
  std::size_t l_prime = 0;
  double threshold = 0.0;
  /// accepted | below_threshold | coin_exhausted | protocol_violation
  std::string reason;

  friend bool operator==(const Verdict&, const Verdict&) = default;
};

/// Fresh coin and database: q random secrets, r = 0^q, s = 0,
/// T = floor(q/(1000 l)). Uses the default threshold policy for beta = 0.
std::pair<Coin, BankDatabase> bank_mint(int n, std::size_t q, std::size_t l, Rng& rng);
std::pair<Coin, BankDatabase> bank_mint(int n, std::size_t q, std::size_t l, const VerdictParameters& params,
                                        Rng& rng);

/// Per-triplet correctness (nullopt for empty outcomes).
std::vector<std::optional<bool>> score_transcript(const BankDatabase& db, const VerificationTranscript& transcript);

/// Bank side of Ver. Increments s exactly once per call. Throws ProtocolError
/// if the transcript names another coin.
Verdict bank_check(BankDatabase& db, const VerificationTranscript& transcript, const VerdictParameters& params);

/// One genuine position to be measured by the party holding the secret.
struct MeasureQuery {
  std::size_t game = 0;
  std::size_t alpha = 0;
  std::uint64_t draw = 0;
  ChannelPipeline pipeline;
};

MeasurementOutcome measure_genuine_position(const BankDatabase& db, const MeasureQuery& query);

/// What the holder talks to: the bank's check, plus the simulation stand-in
/// for physically measuring genuine states.
class BankEndpoint {
 public:
  virtual ~BankEndpoint() = default;
  virtual std::vector<MeasurementOutcome> measure(const CoinId& coin, std::span<const MeasureQuery> queries) = 0;
  virtual Verdict check(const VerificationTranscript& transcript) = 0;
};

/// In-process bank holding any number of coin databases.
class LocalBank final : public BankEndpoint {
 public:
  explicit LocalBank(std::uint64_t seed = 0) : rng_(seed) {}

  std::pair<Coin, BankDatabase*> mint(int n, std::size_t q, std::size_t l, const VerdictParameters& params);
  BankDatabase& adopt(BankDatabase db);
  BankDatabase& database(const CoinId& id);

  std::vector<MeasurementOutcome> measure(const CoinId& coin, std::span<const MeasureQuery> queries) override;
  Verdict check(const VerificationTranscript& transcript) override;

 private:
  Rng rng_;
  std::map<CoinId, BankDatabase> databases_;
};

enum class VerifyStatus { Valid, Invalid, Aborted };

struct VerifyResult {
  VerifyStatus status = VerifyStatus::Invalid;
  VerificationTranscript transcript;
  std::optional<Verdict> verdict;
};

/// Draws l distinct unused positions uniformly and flips their r bits.
/// Throws CoinSpent when fewer than l remain.
std::vector<std::size_t> sample_unused_positions(Coin& coin, std::size_t l, Rng& rng);

/// Holder side of Ver: sample, measure with random relations (each outcome
/// lost with probability 1 - eta), abort if fewer than l_min outcomes,
/// otherwise submit. `channel` (may be null) acts on every received state.
VerifyResult holder_verify(Coin& coin, BankEndpoint& bank, const VerdictParameters& params,
                           const ChannelPtr& channel, Rng& rng);

/// exp(-2 l delta^2)
double honest_fail_bound(std::size_t l, double delta);

struct LossyBounds {
  double correctness = 0.0;
  double forgery = 0.0;
};

/// correctness = exp(-2 l_min delta^2) + exp(-2 l eps^2);
/// forgery = exp(-2 (eps/eta)^2 l) + exp(-2 l eps^2) + exp(-2 l_min delta^2).
LossyBounds lossy_fail_bounds(std::size_t l, double l_min, double delta, double epsilon, double eta);

struct ParameterPlan {
  int n = 0;
  double beta = 0.0;
  double eta = 1.0;
  double epsilon = 0.0;
  double target = 0.0;
  double e_min = 0.0;
  /// Loss-adjusted e_min (equals e_min for eta = 1, epsilon = 0).
  double e_min_effective = 0.0;
  double c = 0.0;
  double delta = 0.0;
  std::size_t l = 0;
  std::size_t min_q = 0;
  std::size_t q = 0;
  std::size_t T = 0;
  double correctness_bound = 0.0;
  double forgery_bound = 0.0;
};

/// No positive margin exists: beta is at or above the tolerable error.
class InfeasiblePlan : public std::invalid_argument {
 public:
  InfeasiblePlan(const std::string& what, double gap) : std::invalid_argument(what), gap_(gap) {}
  double gap() const noexcept { return gap_; }

 private:
  double gap_;
};

/// Smallest l whose Hoeffding terms all fall below `target`, with
/// min_q = 1000 l. T is reported for `q` when given, else for min_q.
ParameterPlan plan_parameters(int n, double beta, double target, double eta, double epsilon,
                              std::optional<std::size_t> q = std::nullopt);

nlohmann::json to_json(const VerificationTranscript& t);
VerificationTranscript transcript_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Verdict& v);
Verdict verdict_from_json(const nlohmann::json& j);
nlohmann::json to_json(const VerdictParameters& p);
VerdictParameters verdict_parameters_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ParameterPlan& p);

const char* to_string(VerifyStatus s);

}  // namespace hmqm
