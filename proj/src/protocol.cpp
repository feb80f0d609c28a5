#include "hmqm/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_set>

#include "hmqm/bounds.hpp"
#include "hmqm/error.hpp"

namespace hmqm {

namespace {

std::string hex_id(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Verdict violation(Verdict v) {
  v.valid = false;
  v.reason = "protocol_violation";
  return v;
}

}  // namespace

VerdictParameters VerdictParameters::for_noise(int n, double beta, double eta, double epsilon) {
  const double base = e_min(n);
  const double tolerable = (eta == 1.0 && epsilon == 0.0) ? base : lossy_e_min(base, epsilon, eta);
  VerdictParameters p;
  p.c = 1.0 - beta;
  p.delta = (tolerable - beta) / 2.0;
  p.eta = eta;
  p.epsilon = epsilon;
  if (!(p.delta > 0.0)) {
    throw InvalidArgument("noise " + std::to_string(beta) + " is not below the tolerable error " +
                          std::to_string(tolerable));
  }
  p.validate();
  return p;
}

void VerdictParameters::validate() const {
  if (!(c > 0.5 && c <= 1.0)) throw InvalidArgument("correctness parameter c must lie in (1/2, 1]");
  if (!(delta > 0.0)) throw InvalidArgument("margin delta must be positive");
  if (!(c - delta > 0.5)) throw InvalidArgument("c - delta must exceed 1/2");
  if (!(eta > 0.0 && eta <= 1.0)) throw InvalidArgument("detector efficiency must lie in (0, 1]");
  if (!(epsilon >= 0.0 && epsilon < eta)) throw InvalidArgument("epsilon must lie in [0, eta)");
}

std::size_t max_verifications(std::size_t q, std::size_t l) {
  if (l == 0) throw InvalidArgument("sample size l must be positive");
  const std::size_t t = q / (1000 * l);
  if (t == 0) {
    throw InvalidArgument("q = " + std::to_string(q) + " allows no verification at l = " + std::to_string(l) +
                          "; q must be at least 1000 l = " + std::to_string(1000 * l));
  }
  return t;
}

BitString BankDatabase::secret(std::size_t game) const {
  const std::uint64_t word = mix64(secret_key ^ mix64(game));
  const auto width = static_cast<std::size_t>(n);
  return BitString(width, width == 64 ? word : (word & ((std::uint64_t{1} << width) - 1)));
}

void PositionMap::assign(std::size_t begin, std::size_t end, CoinPosition p) {
  if (begin < end) segments_.push_back({begin, end, std::move(p)});
}

void PositionMap::set(std::size_t index, CoinPosition p) { overrides_.insert_or_assign(index, std::move(p)); }

const CoinPosition& PositionMap::at(std::size_t index) const {
  if (!overrides_.empty()) {
    if (auto it = overrides_.find(index); it != overrides_.end()) return it->second;
  }
  for (auto it = segments_.rbegin(); it != segments_.rend(); ++it) {
    if (index >= it->begin && index < it->end) return it->position;
  }
  return fill_;
}

Coin::Coin(CoinId id, int n, std::size_t q, std::size_t l, PositionMap positions)
    : id_(std::move(id)), n_(n), q_(q), l_(l), r_(q, false), positions_(std::move(positions)) {
  if (n < 2 || n % 2 != 0) throw InvalidArgument("coin dimension must be even and >= 2");
  if (l == 0 || q < l) throw InvalidArgument("coin needs q >= l >= 1");
}

void Coin::mark_used(std::size_t game) {
  if (!r_.at(game)) {
    r_[game] = true;
    ++used_;
  }
}

std::size_t VerificationTranscript::l_prime() const {
  return static_cast<std::size_t>(
      std::count_if(triplets.begin(), triplets.end(), [](const Triplet& t) { return t.outcome.has_value(); }));
}

std::pair<Coin, BankDatabase> bank_mint(int n, std::size_t q, std::size_t l, Rng& rng) {
  return bank_mint(n, q, l, VerdictParameters::for_noise(n, 0.0), rng);
}

std::pair<Coin, BankDatabase> bank_mint(int n, std::size_t q, std::size_t l, const VerdictParameters& params,
                                        Rng& rng) {
  if (n < 4 || n % 2 != 0 || n > 64) throw InvalidArgument("coin dimension must be even and in [4, 64]");
  if (l == 0 || q < l) throw InvalidArgument("mint needs q >= l >= 1");
  params.validate();
  BankDatabase db;
  db.coin_id = hex_id(rng());
  db.n = n;
  db.q = q;
  db.l = l;
  db.T = max_verifications(q, l);
  db.s = 0;
  db.secret_key = rng();
  db.params = params;
  db.matching_set = std::make_shared<const DisjointMatchingSet>(build_disjoint_set(n));
  Coin coin(db.coin_id, n, q, l);
  return {std::move(coin), std::move(db)};
}

std::vector<std::optional<bool>> score_transcript(const BankDatabase& db, const VerificationTranscript& transcript) {
  std::vector<std::optional<bool>> scores;
  scores.reserve(transcript.triplets.size());
  for (const Triplet& t : transcript.triplets) {
    if (!t.outcome) {
      scores.emplace_back(std::nullopt);
      continue;
    }
    if (t.game >= db.q || t.alpha < 1 || t.alpha > db.matching_set->size()) {
      scores.emplace_back(false);
      continue;
    }
    scores.emplace_back(is_correct_answer(*t.outcome, db.matching_set->relation(t.alpha), db.secret(t.game)));
  }
  return scores;
}

Verdict bank_check(BankDatabase& db, const VerificationTranscript& transcript, const VerdictParameters& params) {
  if (transcript.coin_id != db.coin_id) {
    throw ProtocolError("transcript for coin '" + transcript.coin_id + "' checked against '" + db.coin_id + "'");
  }
  Verdict v;
  v.T = db.T;
  v.l_prime = transcript.l_prime();
  v.threshold = static_cast<double>(v.l_prime) * (params.c - params.delta);
  const std::size_t previous = db.s;
  db.s += 1;
  v.s = db.s;

  if (previous >= db.T) {
    v.valid = false;
    v.reason = "coin_exhausted";
    return v;
  }
  if (transcript.l != db.l || transcript.triplets.size() != db.l) return violation(v);
  std::unordered_set<std::size_t> games;
  for (const Triplet& t : transcript.triplets) {
    if (!games.insert(t.game).second) return violation(v);
    if (t.game >= db.q || t.alpha < 1 || t.alpha > db.matching_set->size()) return violation(v);
  }
  if (static_cast<double>(v.l_prime) < params.l_min(db.l)) return violation(v);

  for (const auto& score : score_transcript(db, transcript)) {
    if (score.value_or(false)) ++v.correct_count;
  }
  v.valid = static_cast<double>(v.correct_count) > v.threshold;
  v.reason = v.valid ? "accepted" : "below_threshold";
  return v;
}

MeasurementOutcome measure_genuine_position(const BankDatabase& db, const MeasureQuery& query) {
  if (query.game >= db.q) throw ProtocolError("measurement of position " + std::to_string(query.game) + " outside the coin");
  const Matching& relation = db.matching_set->relation(query.alpha);
  DensityMatrix state = apply_pipeline(query.pipeline, hidden_matching_density(db.secret(query.game)));
  return sample_matching_outcome(state, relation, query.draw);
}

std::pair<Coin, BankDatabase*> LocalBank::mint(int n, std::size_t q, std::size_t l, const VerdictParameters& params) {
  auto [coin, db] = bank_mint(n, q, l, params, rng_);
  BankDatabase& stored = adopt(std::move(db));
  return {std::move(coin), &stored};
}

BankDatabase& LocalBank::adopt(BankDatabase db) {
  const CoinId id = db.coin_id;
  return databases_.insert_or_assign(id, std::move(db)).first->second;
}

BankDatabase& LocalBank::database(const CoinId& id) {
  auto it = databases_.find(id);
  if (it == databases_.end()) throw ProtocolError("unknown coin '" + id + "'");
  return it->second;
}

std::vector<MeasurementOutcome> LocalBank::measure(const CoinId& coin, std::span<const MeasureQuery> queries) {
  const BankDatabase& db = database(coin);
  std::vector<MeasurementOutcome> out;
  out.reserve(queries.size());
  for (const MeasureQuery& q : queries) out.push_back(measure_genuine_position(db, q));
  return out;
}

Verdict LocalBank::check(const VerificationTranscript& transcript) {
  BankDatabase& db = database(transcript.coin_id);
  return bank_check(db, transcript, db.params);
}

std::vector<std::size_t> sample_unused_positions(Coin& coin, std::size_t l, Rng& rng) {
  if (coin.unused_count() < l) {
    throw CoinSpent("coin '" + coin.id() + "' has " + std::to_string(coin.unused_count()) +
                    " unused positions, verification needs " + std::to_string(l));
  }
  std::vector<std::size_t> picked;
  picked.reserve(l);
  if (coin.unused_count() >= coin.q() / 2) {
    // Rejection sampling; marking as we go makes the draw without replacement.
    while (picked.size() < l) {
      const std::size_t i = uniform_index(rng, coin.q());
      if (coin.used(i)) continue;
      coin.mark_used(i);
      picked.push_back(i);
    }
    return picked;
  }
  std::vector<std::size_t> pool;
  pool.reserve(coin.unused_count());
  for (std::size_t i = 0; i < coin.q(); ++i) {
    if (!coin.used(i)) pool.push_back(i);
  }
  for (std::size_t k = 0; k < l; ++k) {
    const std::size_t j = k + uniform_index(rng, pool.size() - k);
    std::swap(pool[k], pool[j]);
    coin.mark_used(pool[k]);
    picked.push_back(pool[k]);
  }
  return picked;
}

VerifyResult holder_verify(Coin& coin, BankEndpoint& bank, const VerdictParameters& params,
                           const ChannelPtr& channel, Rng& rng) {
  params.validate();
  const DisjointMatchingSet relations = build_disjoint_set(coin.n());
  const std::size_t l = coin.l();
  const std::vector<std::size_t> games = sample_unused_positions(coin, l, rng);

  VerifyResult result;
  result.transcript.coin_id = coin.id();
  result.transcript.l = l;
  result.transcript.triplets.resize(l);

  std::vector<MeasureQuery> queries;
  std::vector<std::size_t> query_slots;
  for (std::size_t k = 0; k < l; ++k) {
    Triplet& t = result.transcript.triplets[k];
    t.game = games[k];
    t.alpha = 1 + uniform_index(rng, relations.size());
    const bool detected = uniform01(rng) < params.eta;
    const std::uint64_t draw = rng();
    if (!detected) continue;

    const CoinPosition& position = coin.positions().at(t.game);
    if (const auto* genuine = std::get_if<GenuineRef>(&position)) {
      MeasureQuery q{t.game, t.alpha, draw, genuine->transform};
      if (channel) q.pipeline.push_back(channel);
      queries.push_back(std::move(q));
      query_slots.push_back(k);
    } else if (const auto* forged = std::get_if<Forged>(&position)) {
      const DensityMatrix received = channel ? channel->apply(forged->state) : forged->state;
      t.outcome = sample_matching_outcome(received, relations.relation(t.alpha), draw);
    }
  }
  if (!queries.empty()) {
    const auto outcomes = bank.measure(coin.id(), queries);
    if (outcomes.size() != queries.size()) throw ProtocolError("bank returned the wrong number of outcomes");
    for (std::size_t k = 0; k < outcomes.size(); ++k) result.transcript.triplets[query_slots[k]].outcome = outcomes[k];
  }

  if (static_cast<double>(result.transcript.l_prime()) < params.l_min(l)) {
    result.status = VerifyStatus::Aborted;
    return result;
  }
  result.verdict = bank.check(result.transcript);
  result.status = result.verdict->valid ? VerifyStatus::Valid : VerifyStatus::Invalid;
  return result;
}

double honest_fail_bound(std::size_t l, double delta) {
  return std::exp(-2.0 * static_cast<double>(l) * delta * delta);
}

LossyBounds lossy_fail_bounds(std::size_t l, double l_min, double delta, double epsilon, double eta) {
  const double ld = static_cast<double>(l);
  const double sample_term = std::exp(-2.0 * l_min * delta * delta);
  const double loss_term = std::exp(-2.0 * ld * epsilon * epsilon);
  const double hiding_term = std::exp(-2.0 * (epsilon * epsilon) / (eta * eta) * ld);
  return {sample_term + loss_term, hiding_term + loss_term + sample_term};
}

ParameterPlan plan_parameters(int n, double beta, double target, double eta, double epsilon,
                              std::optional<std::size_t> q) {
  if (!(target > 0.0 && target < 1.0)) throw InvalidArgument("security target must lie in (0, 1)");
  if (!(beta >= 0.0 && beta < 0.5)) throw InvalidArgument("noise beta must lie in [0, 1/2)");
  if (!(eta > 0.0 && eta <= 1.0)) throw InvalidArgument("detector efficiency must lie in (0, 1]");
  if (!(epsilon >= 0.0)) throw InvalidArgument("epsilon must be non-negative");
  const bool lossy = eta < 1.0 || epsilon > 0.0;
  if (eta < 1.0 && epsilon == 0.0) {
    throw InvalidArgument("epsilon must be positive when eta < 1: with epsilon = 0 the loss terms equal 1");
  }

  ParameterPlan plan;
  plan.n = n;
  plan.beta = beta;
  plan.eta = eta;
  plan.epsilon = epsilon;
  plan.target = target;
  plan.e_min = e_min(n);
  plan.e_min_effective = lossy ? lossy_e_min(plan.e_min, epsilon, eta) : plan.e_min;
  const double gap = plan.e_min_effective - beta;
  if (!(gap > 0.0)) {
    throw InfeasiblePlan("beta = " + std::to_string(beta) + " is not below the tolerable error " +
                             std::to_string(plan.e_min_effective) + " (gap " + std::to_string(gap) + ")",
                         gap);
  }
  plan.c = 1.0 - beta;
  plan.delta = gap / 2.0;

  auto bounds_for = [&](std::size_t l) -> LossyBounds {
    if (!lossy) {
      const double b = honest_fail_bound(l, plan.delta);
      return {b, b};
    }
    return lossy_fail_bounds(l, (eta - epsilon) * static_cast<double>(l), plan.delta, epsilon, eta);
  };
  auto meets = [&](std::size_t l) {
    const LossyBounds b = bounds_for(l);
    return std::max(b.correctness, b.forgery) < target;
  };

  std::size_t hi = 1;
  while (!meets(hi)) {
    if (hi > (std::size_t{1} << 40)) throw InvalidArgument("no sample size below 2^40 meets the security target");
    hi *= 2;
  }
  std::size_t lo = hi / 2;  // !meets(lo) unless hi == 1
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    (meets(mid) ? hi : lo) = mid;
  }
  plan.l = hi;
  const LossyBounds b = bounds_for(plan.l);
  plan.correctness_bound = b.correctness;
  plan.forgery_bound = b.forgery;
  plan.min_q = 1000 * plan.l;
  plan.q = q.value_or(plan.min_q);
  plan.T = plan.q / (1000 * plan.l);
  return plan;
}

nlohmann::json to_json(const VerificationTranscript& t) {
  nlohmann::json triplets = nlohmann::json::array();
  for (const Triplet& tr : t.triplets) {
    nlohmann::json outcome = nullptr;
    if (tr.outcome) outcome = {{"i", tr.outcome->i}, {"j", tr.outcome->j}, {"b", tr.outcome->b}};
    triplets.push_back({{"i", tr.game}, {"alpha", tr.alpha}, {"outcome", std::move(outcome)}});
  }
  return {{"coin_id", t.coin_id}, {"triplets", std::move(triplets)}, {"l", t.l}};
}

VerificationTranscript transcript_from_json(const nlohmann::json& j) {
  VerificationTranscript t;
  t.coin_id = j.at("coin_id").get<std::string>();
  t.l = j.at("l").get<std::size_t>();
  for (const auto& tr : j.at("triplets")) {
    Triplet triplet;
    triplet.game = tr.at("i").get<std::size_t>();
    triplet.alpha = tr.at("alpha").get<std::size_t>();
    const auto& o = tr.at("outcome");
    if (!o.is_null()) triplet.outcome = MeasurementOutcome{o.at("i").get<int>(), o.at("j").get<int>(), o.at("b").get<int>()};
    t.triplets.push_back(triplet);
  }
  return t;
}

nlohmann::json to_json(const Verdict& v) {
  return {{"valid", v.valid},         {"s", v.s},
          {"T", v.T},                 {"correct_count", v.correct_count},
          {"l_prime", v.l_prime},     {"threshold", v.threshold},
          {"reason", v.reason}};
}

Verdict verdict_from_json(const nlohmann::json& j) {
  Verdict v;
  v.valid = j.at("valid").get<bool>();
  v.s = j.at("s").get<std::size_t>();
  v.T = j.at("T").get<std::size_t>();
  v.correct_count = j.at("correct_count").get<std::size_t>();
  v.l_prime = j.at("l_prime").get<std::size_t>();
  v.threshold = j.at("threshold").get<double>();
  v.reason = j.at("reason").get<std::string>();
  return v;
}

nlohmann::json to_json(const VerdictParameters& p) {
  return {{"c", p.c}, {"delta", p.delta}, {"eta", p.eta}, {"epsilon", p.epsilon}};
}

VerdictParameters verdict_parameters_from_json(const nlohmann::json& j) {
  VerdictParameters p;
  p.c = j.at("c").get<double>();
  p.delta = j.at("delta").get<double>();
  p.eta = j.at("eta").get<double>();
  p.epsilon = j.at("epsilon").get<double>();
  return p;
}

nlohmann::json to_json(const ParameterPlan& p) {
  return {{"n", p.n},
          {"beta", p.beta},
          {"eta", p.eta},
          {"epsilon", p.epsilon},
          {"target", p.target},
          {"e_min", p.e_min},
          {"e_min_effective", p.e_min_effective},
          {"c", p.c},
          {"delta", p.delta},
          {"l", p.l},
          {"min_q", p.min_q},
          {"q", p.q},
          {"T", p.T},
          {"correctness_bound", p.correctness_bound},
          {"forgery_bound", p.forgery_bound}};
}

const char* to_string(VerifyStatus s) {
  switch (s) {
    case VerifyStatus::Valid: return "valid";
    case VerifyStatus::Invalid: return "invalid";
    case VerifyStatus::Aborted: return "aborted";
  }
  return "unknown";
}

}  // namespace hmqm
