#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "hmqm/bounds.hpp"
#include "hmqm/error.hpp"
#include "hmqm/protocol.hpp"
#include "oracles.hpp"

using namespace hmqm;

namespace {

// A transcript for `db` answering `correct` of l' games correctly; the rest
// of the l triplets carry no outcome.
VerificationTranscript scripted(const BankDatabase& db, std::size_t answered, std::size_t correct) {
  VerificationTranscript t;
  t.coin_id = db.coin_id;
  t.l = db.l;
  for (std::size_t k = 0; k < db.l; ++k) {
    Triplet tr;
    tr.game = k;
    tr.alpha = 1 + k % db.matching_set->size();
    if (k < answered) {
      const auto& m = db.matching_set->relation(tr.alpha);
      const auto pair = m.pairs()[0];
      const BitString x = db.secret(k);
      const int parity = x.bit(static_cast<std::size_t>(pair.first)) ^ x.bit(static_cast<std::size_t>(pair.second));
      tr.outcome = MeasurementOutcome{pair.first, pair.second, k < correct ? parity : 1 - parity};
    }
    t.triplets.push_back(tr);
  }
  return t;
}

VerdictParameters loose(double c, double delta) {
  VerdictParameters p;
  p.c = c;
  p.delta = delta;
  return p;
}

}  // namespace

TEST(Mint, VerificationCapFollowsPolicy) {
  Rng rng(1);
  EXPECT_EQ(bank_mint(8, 1000000, 100, rng).second.T, 10u);
  EXPECT_EQ(max_verifications(1000000000, 18000), 55u);
  EXPECT_THROW(bank_mint(8, 1000, 10, rng), InvalidArgument);
  EXPECT_THROW(bank_mint(8, 5, 10, rng), InvalidArgument);
  EXPECT_THROW(bank_mint(7, 100000, 10, rng), InvalidArgument);
}

TEST(Mint, FreshCoinState) {
  Rng rng(2);
  auto [coin, db] = bank_mint(6, 20000, 20, rng);
  EXPECT_EQ(coin.id(), db.coin_id);
  EXPECT_EQ(coin.used_count(), 0u);
  EXPECT_EQ(db.s, 0u);
  EXPECT_EQ(db.T, 1u);
  EXPECT_TRUE(validate(*db.matching_set).ok);
  EXPECT_TRUE(std::holds_alternative<GenuineRef>(coin.positions().at(123)));
  // Secrets are fixed per game and vary across games.
  EXPECT_EQ(db.secret(7), db.secret(7));
  std::set<std::uint64_t> masks;
  for (std::size_t g = 0; g < 200; ++g) masks.insert(db.secret(g).mask());
  EXPECT_GT(masks.size(), 50u);
}

TEST(BankCheck, AllCorrectIsValid) {
  Rng rng(3);
  auto [coin, db] = bank_mint(8, 100000, 100, rng);
  const auto v = bank_check(db, scripted(db, 100, 100), loose(0.9, 0.1));
  EXPECT_TRUE(v.valid);
  EXPECT_EQ(v.reason, "accepted");
  EXPECT_EQ(v.correct_count, 100u);
  EXPECT_EQ(v.s, 1u);
}

TEST(BankCheck, ThresholdIsStrict) {
  Rng rng(4);
  auto [coin, db] = bank_mint(8, 3000000, 1000, rng);
  const auto at = bank_check(db, scripted(db, 1000, 800), loose(0.9, 0.1));
  EXPECT_DOUBLE_EQ(at.threshold, 800.0);
  EXPECT_EQ(at.correct_count, 800u);
  EXPECT_FALSE(at.valid);
  EXPECT_EQ(at.reason, "below_threshold");
  const auto above = bank_check(db, scripted(db, 1000, 801), loose(0.9, 0.1));
  EXPECT_TRUE(above.valid);
}

TEST(BankCheck, EmptyOutcomesAreIgnored) {
  Rng rng(5);
  auto [coin, db] = bank_mint(8, 100000, 100, rng);
  VerdictParameters p = loose(1.0, 0.25);
  p.eta = 0.6;
  p.epsilon = 0.05;
  const auto v = bank_check(db, scripted(db, 60, 60), p);
  EXPECT_EQ(v.l_prime, 60u);
  EXPECT_DOUBLE_EQ(v.threshold, 45.0);
  EXPECT_TRUE(v.valid);
}

TEST(BankCheck, ExhaustedCoinIsInvalidAndCounterAlwaysMoves) {
  Rng rng(6);
  auto [coin, db] = bank_mint(8, 200000, 100, rng);
  ASSERT_EQ(db.T, 2u);
  const auto good = scripted(db, 100, 100);
  EXPECT_TRUE(bank_check(db, good, loose(0.9, 0.1)).valid);
  EXPECT_FALSE(bank_check(db, scripted(db, 100, 0), loose(0.9, 0.1)).valid);
  EXPECT_EQ(db.s, 2u);
  const auto v = bank_check(db, good, loose(0.9, 0.1));
  EXPECT_FALSE(v.valid);
  EXPECT_EQ(v.reason, "coin_exhausted");
  EXPECT_EQ(v.s, 3u);
  EXPECT_EQ(db.s, 3u);
}

TEST(BankCheck, DuplicateGameIsAProtocolViolation) {
  Rng rng(7);
  auto [coin, db] = bank_mint(8, 100000, 100, rng);
  auto t = scripted(db, 100, 100);
  t.triplets[5].game = t.triplets[4].game;
  const auto v = bank_check(db, t, loose(0.9, 0.1));
  EXPECT_FALSE(v.valid);
  EXPECT_EQ(v.reason, "protocol_violation");
  EXPECT_EQ(db.s, 1u);
}

TEST(BankCheck, WrongSizeOrTooFewOutcomesIsAViolation) {
  Rng rng(8);
  auto [coin, db] = bank_mint(8, 1000000, 100, rng);
  auto shortened = scripted(db, 100, 100);
  shortened.triplets.pop_back();
  EXPECT_EQ(bank_check(db, shortened, loose(0.9, 0.1)).reason, "protocol_violation");
  // With eta = 1 every outcome must be present.
  EXPECT_EQ(bank_check(db, scripted(db, 99, 99), loose(0.9, 0.1)).reason, "protocol_violation");
}

TEST(BankCheck, UnknownCoinThrows) {
  Rng rng(9);
  auto [coin, db] = bank_mint(8, 100000, 100, rng);
  auto t = scripted(db, 100, 100);
  t.coin_id = "other";
  EXPECT_THROW(bank_check(db, t, loose(0.9, 0.1)), ProtocolError);
  EXPECT_EQ(db.s, 0u);
}

TEST(BankCheck, ReplayedTranscriptGivesIdenticalVerdict) {
  Rng rng(10);
  auto [coin, db] = bank_mint(8, 100000, 100, rng);
  BankDatabase copy = db;
  const auto t = scripted(db, 100, 93);
  const std::string wire = to_json(t).dump();
  const auto replayed = transcript_from_json(nlohmann::json::parse(wire));
  EXPECT_EQ(to_json(bank_check(db, t, loose(0.9, 0.1))).dump(), to_json(bank_check(copy, replayed, loose(0.9, 0.1))).dump());
}

TEST(Verdict, JsonHasDocumentedFields) {
  Verdict v;
  v.reason = "accepted";
  const auto j = to_json(v);
  for (const char* key : {"valid", "s", "T", "correct_count", "l_prime", "threshold"}) EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(verdict_from_json(j), v);
}

TEST(Sampling, DrawsDistinctUnusedPositionsAndFlipsThem) {
  Rng rng(11);
  Coin coin("c", 4, 300, 40);
  std::set<std::size_t> seen;
  for (int round = 0; round < 7; ++round) {
    const std::size_t before = coin.used_count();
    const auto picked = sample_unused_positions(coin, 40, rng);
    EXPECT_EQ(coin.used_count(), before + 40);
    for (std::size_t i : picked) {
      EXPECT_TRUE(seen.insert(i).second) << "position " << i << " sampled twice";
      EXPECT_TRUE(coin.used(i));
    }
  }
  EXPECT_EQ(coin.unused_count(), 20u);
  EXPECT_THROW(sample_unused_positions(coin, 40, rng), CoinSpent);
  EXPECT_EQ(coin.unused_count(), 20u);
}

TEST(Sampling, IsRoughlyUniform) {
  Rng rng(12);
  std::vector<int> hits(20, 0);
  for (int k = 0; k < 20000; ++k) {
    Coin coin("c", 4, 20, 5);
    coin.mark_used(0);
    for (std::size_t i : sample_unused_positions(coin, 5, rng)) ++hits[i];
  }
  EXPECT_EQ(hits[0], 0);
  const double p = 5.0 / 19.0;
  for (int i = 1; i < 20; ++i) EXPECT_LE(std::abs(hits[i] / 20000.0 - p), 4.0 * oracle::sigma(p, 20000)) << i;
}

TEST(PositionMap, LaterEntriesWin) {
  PositionMap m(Absent{});
  m.assign(10, 20, GenuineRef{});
  m.assign(15, 30, Forged{DensityMatrix::maximally_mixed(4)});
  m.set(16, GenuineRef{});
  EXPECT_TRUE(std::holds_alternative<Absent>(m.at(9)));
  EXPECT_TRUE(std::holds_alternative<GenuineRef>(m.at(12)));
  EXPECT_TRUE(std::holds_alternative<Forged>(m.at(15)));
  EXPECT_TRUE(std::holds_alternative<GenuineRef>(m.at(16)));
  EXPECT_TRUE(std::holds_alternative<Absent>(m.at(30)));
}

TEST(HolderVerify, NoiselessGenuineCoinIsAlwaysValid) {
  LocalBank bank(13);
  const auto params = VerdictParameters::for_noise(8, 0.0);
  for (int trial = 0; trial < 30; ++trial) {
    auto [coin, db] = bank.mint(8, 200000, 200, params);
    Rng rng(derive_seed(13, trial));
    const auto r = holder_verify(coin, bank, params, nullptr, rng);
    ASSERT_EQ(r.status, VerifyStatus::Valid);
    EXPECT_EQ(r.verdict->correct_count, 200u);
    EXPECT_EQ(coin.used_count(), 200u);
  }
}

TEST(HolderVerify, DepolarisedCoinStaysInsideHoeffdingEnvelope) {
  LocalBank bank(14);
  const double beta = 0.1;
  const auto params = VerdictParameters::for_noise(8, beta);
  const std::size_t l = 500, trials = 200;
  std::size_t rejected = 0, answers = 0, wrong = 0;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    auto [coin, db] = bank.mint(8, 1000 * l, l, params);
    Rng rng(derive_seed(14, trial));
    const auto r = holder_verify(coin, bank, params, honest_noise(beta), rng);
    rejected += r.status != VerifyStatus::Valid;
    answers += r.verdict->l_prime;
    wrong += r.verdict->l_prime - r.verdict->correct_count;
  }
  const double bound = honest_fail_bound(l, params.delta);
  EXPECT_LE(rejected / double(trials), bound + 3.0 * oracle::sigma(std::min(bound, 1.0), trials));
  // Observed error rate sits at beta.
  EXPECT_LE(std::abs(wrong / double(answers) - beta), 4.0 * oracle::sigma(beta, answers));
}

TEST(HolderVerify, LossyHonestAbortRateIsBounded) {
  LocalBank bank(15);
  const auto params = VerdictParameters::for_noise(8, 0.0, 0.6, 0.05);
  const std::size_t l = 2000, trials = 200;
  std::size_t aborted = 0;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    auto [coin, db] = bank.mint(8, 1000 * l, l, params);
    Rng rng(derive_seed(15, trial));
    const auto r = holder_verify(coin, bank, params, nullptr, rng);
    if (r.status == VerifyStatus::Aborted) {
      ++aborted;
      EXPECT_FALSE(r.verdict.has_value());
      EXPECT_EQ(db->s, 0u);
    } else {
      EXPECT_EQ(r.status, VerifyStatus::Valid);
    }
  }
  const double bound = std::exp(-2.0 * l * 0.05 * 0.05);
  EXPECT_LE(aborted / double(trials), bound + 3.0 * oracle::sigma(bound, trials));
}

TEST(HolderVerify, MissingStatesAbortWithoutContactingTheBank) {
  LocalBank bank(16);
  const auto params = VerdictParameters::for_noise(4, 0.0);
  auto [coin, db] = bank.mint(4, 100000, 100, params);
  coin.positions() = PositionMap(Absent{});
  Rng rng(1);
  EXPECT_EQ(holder_verify(coin, bank, params, nullptr, rng).status, VerifyStatus::Aborted);
  EXPECT_EQ(db->s, 0u);
  EXPECT_EQ(coin.used_count(), 100u);
}

TEST(HolderVerify, MaximallyMixedForgeryIsRejected) {
  LocalBank bank(17);
  const auto params = VerdictParameters::for_noise(4, 0.0);
  auto [coin, db] = bank.mint(4, 100000, 100, params);
  coin.positions() = PositionMap(Forged{DensityMatrix::maximally_mixed(4)});
  Rng rng(2);
  const auto r = holder_verify(coin, bank, params, nullptr, rng);
  EXPECT_EQ(r.status, VerifyStatus::Invalid);
  EXPECT_EQ(db->s, 1u);
}

TEST(HolderVerify, SameSeedSameTranscript) {
  const auto params = VerdictParameters::for_noise(6, 0.05);
  auto run = [&] {
    LocalBank bank(18);
    auto [coin, db] = bank.mint(6, 100000, 100, params);
    Rng rng(99);
    return to_json(holder_verify(coin, bank, params, honest_noise(0.05), rng).transcript).dump();
  };
  EXPECT_EQ(run(), run());
}

TEST(HoeffdingBounds, Examples) {
  EXPECT_NEAR(honest_fail_bound(1000, 0.05), 6.7379e-3, 1e-7);
  EXPECT_NEAR(honest_fail_bound(1000, 1e-12), 1.0, 1e-15);
  EXPECT_NEAR(honest_fail_bound(2000, 0.03), std::pow(honest_fail_bound(1000, 0.03), 2), 1e-15);

  const double l = 20000, l_min = 0.59 * l;
  const auto b = lossy_fail_bounds(20000, l_min, 0.02, 0.01, 0.6);
  const double t_delta = std::exp(-2.0 * l_min * 0.02 * 0.02);
  const double t_eps = std::exp(-2.0 * l * 0.01 * 0.01);
  const double t_hide = std::exp(-2.0 * (0.01 * 0.01) / (0.6 * 0.6) * l);
  EXPECT_NEAR(b.correctness, t_delta + t_eps, 1e-15);
  EXPECT_NEAR(b.forgery, t_hide + t_eps + t_delta, 1e-15);

  double previous = 2.0;
  for (std::size_t ll = 1000; ll <= 64000; ll *= 2) {
    const double f = lossy_fail_bounds(ll, 0.55 * ll, 0.02, 0.05, 0.6).forgery;
    EXPECT_LT(f, previous);
    previous = f;
  }
}

TEST(Planner, InvertsHoeffdingNearEighteenThousand) {
  const double delta = 0.0196;
  const double beta = e_min(8) - 2.0 * delta;
  const auto plan = plan_parameters(8, beta, 1e-6, 1.0, 0.0);
  EXPECT_NEAR(plan.delta, delta, 1e-12);
  const double exact = std::log(1e6) / (2.0 * delta * delta);
  EXPECT_LE(std::abs(double(plan.l) - std::ceil(exact)), 1.0);
  EXPECT_NEAR(double(plan.l), 18000.0, 100.0);
  EXPECT_LT(plan.forgery_bound, 1e-6);
  EXPECT_GE(honest_fail_bound(plan.l - 1, plan.delta), 1e-6);
  EXPECT_EQ(plan.min_q, 1000 * plan.l);
  EXPECT_EQ(plan.T, 1u);
  EXPECT_EQ(plan_parameters(8, beta, 1e-6, 1.0, 0.0, 1000000000).T, 1000000000 / (1000 * plan.l));
}

TEST(Planner, RejectsBetaAtOrAboveTolerance) {
  try {
    plan_parameters(8, e_min(8), 1e-6, 1.0, 0.0);
    FAIL() << "expected InfeasiblePlan";
  } catch (const InfeasiblePlan& e) {
    EXPECT_LE(e.gap(), 0.0);
  }
  try {
    plan_parameters(8, 0.3, 1e-6, 1.0, 0.0);
    FAIL() << "expected InfeasiblePlan";
  } catch (const InfeasiblePlan& e) {
    EXPECT_NEAR(e.gap(), e_min(8) - 0.3, 1e-15);
  }
}

TEST(Planner, LargerStatesNeedFewerSamples) {
  std::size_t previous = SIZE_MAX;
  for (int n = 4; n <= 14; n += 2) {
    const auto plan = plan_parameters(n, 0.1, 1e-6, 1.0, 0.0);
    EXPECT_LT(plan.l, previous) << n;
    previous = plan.l;
  }
}

TEST(Planner, LossRequiresPositiveSlack) {
  EXPECT_THROW(plan_parameters(8, 0.05, 1e-6, 0.6, 0.0), InvalidArgument);
  const auto plan = plan_parameters(8, 0.05, 1e-6, 0.6, 0.01);
  EXPECT_NEAR(plan.e_min_effective, lossy_e_min(e_min(8), 0.01, 0.6), 1e-15);
  EXPECT_LT(std::max(plan.correctness_bound, plan.forgery_bound), 1e-6);
}

TEST(VerdictParameters, DefaultPolicy) {
  const auto p = VerdictParameters::for_noise(8, 0.1);
  EXPECT_NEAR(p.c, 0.9, 1e-15);
  EXPECT_NEAR(p.delta, (e_min(8) - 0.1) / 2.0, 1e-15);
  EXPECT_GT(p.c - p.delta, 0.5);
  EXPECT_THROW(VerdictParameters::for_noise(8, 0.25), InvalidArgument);
  EXPECT_DOUBLE_EQ(VerdictParameters::for_noise(8, 0.0, 0.6, 0.05).l_min(100), 55.0);
}
