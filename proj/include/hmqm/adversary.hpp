#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "hmqm/bounds.hpp"
#include "hmqm/channel.hpp"
#include "hmqm/protocol.hpp"
#include "json.hpp"

namespace hmqm {

/// A per-position map producing one state for each of two verifiers.
class SplittingChannel {
 public:
  virtual ~SplittingChannel() = default;
  virtual ClonePair apply(const DensityMatrix& rho) const = 0;
  virtual std::string name() const = 0;
  virtual std::optional<nlohmann::json> describe() const { return std::nullopt; }
};

using SplitterPtr = std::shared_ptr<const SplittingChannel>;

/// Symmetric-subspace cloner. Results are cached per input state, since a
/// coin at small n only ever holds 2^n distinct states.
class SymmetricCloner final : public SplittingChannel {
 public:
  ClonePair apply(const DensityMatrix& rho) const override;
  std::string name() const override { return "symmetric_clone"; }
  std::optional<nlohmann::json> describe() const override;
};

/// Discards the input and sends 1/n to both verifiers.
class MixedSubstituter final : public SplittingChannel {
 public:
  ClonePair apply(const DensityMatrix& rho) const override;
  std::string name() const override { return "mixed_substitution"; }
  std::optional<nlohmann::json> describe() const override;
};

/// Output `branch` (0 or 1) of a splitter, usable as an ordinary channel.
class SplitBranch final : public PositionChannel {
 public:
  SplitBranch(SplitterPtr splitter, int branch);

  DensityMatrix apply(const DensityMatrix& rho) const override;
  std::optional<nlohmann::json> describe() const override;

 private:
  SplitterPtr splitter_;
  int branch_;
};

SplitterPtr splitter_from_json(const nlohmann::json& j);
ChannelPtr split_branch_from_json(const nlohmann::json& j);

namespace attack {
struct HonestNoise {
  double beta = 0.0;
};
struct SymmetricClone {};
struct MixedSubstitution {};
/// Withholds this fraction of the white positions from each verifier in turn.
struct LossHiding {
  double fraction = 0.0;
};
/// Marks this fraction of positions used in one coin and hands the genuine
/// state to the other coin, once in each direction.
struct RegisterSplit {
  double fraction = 1.0 / 1000.0;
};
struct Custom {
  SplitterPtr splitter;
};
}  // namespace attack

using AttackStep = std::variant<attack::HonestNoise, attack::SymmetricClone, attack::MixedSubstitution,
                                attack::LossHiding, attack::RegisterSplit, attack::Custom>;

/// Steps apply in order. At most one step may split the state.
struct AttackStrategy {
  std::vector<AttackStep> steps;

  std::string name() const;
  /// Throws InvalidArgument on out-of-range fractions or more than one
  /// splitting step.
  void validate() const;

  /// Parses names joined by '+', e.g. "register_split+symmetric_clone" or
  /// "honest_noise:0.1+loss_hiding:0.2". Fractions follow a colon.
  static AttackStrategy parse(const std::string& text);
};

enum class PositionRole {
  White,
  Known,
  /// Used in the first coin, genuine in the second.
  SplitToSecond,
  /// Used in the second coin, genuine in the first.
  SplitToFirst,
  /// Nothing sent to the first coin, genuine to the second.
  HiddenFromFirst,
  HiddenFromSecond,
  HiddenFromBoth,
};

const char* to_string(PositionRole role);

/// Placement of the forged coins' position classes along [0, q).
struct ForgeLayout {
  std::size_t q = 0;
  std::size_t split = 0;
  std::size_t known = 0;
  std::size_t hidden = 0;

  PositionRole role(std::size_t game) const;
  std::size_t white_begin() const noexcept { return 2 * split + known; }
};

struct ForgedCoins {
  Coin first;
  Coin second;
  ForgeLayout layout;
};

/// Builds two coins from a fresh one. `verifications` is the number of
/// auxiliary verifications whose l positions count as known.
ForgedCoins forge_coins(const Coin& coin, const AttackStrategy& strategy, std::size_t verifications);

/// Averaged honest-verifier error of each forged state on a white position
/// holding phi_x; nullopt for a verifier that receives nothing.
std::pair<std::optional<double>, std::optional<double>> white_position_errors(const AttackStrategy& strategy,
                                                                             const BitString& x);

struct ForgeConfig {
  int n = 4;
  std::size_t l = 2000;
  /// Defaults to 2000 l, the least q allowing both coins to be checked.
  std::optional<std::size_t> q;
  std::size_t trials = 1000;
  VerdictParameters params;
  std::uint64_t seed = 0;
};

struct ForgeOutcome {
  std::string strategy;
  int n = 0;
  std::size_t q = 0;
  std::size_t l = 0;
  std::size_t trials = 0;
  double accept1_rate = 0.0;
  double accept2_rate = 0.0;
  double both_accept_rate = 0.0;
  double abort1_rate = 0.0;
  double abort2_rate = 0.0;
  /// Incorrect fraction of answered white positions, and its sample size.
  std::optional<double> white_error1;
  std::optional<double> white_error2;
  std::size_t white_samples1 = 0;
  std::size_t white_samples2 = 0;
  /// White error scaled by 997/999, for comparison with e_min accounting.
  std::optional<double> scaled_white_error1;
  std::optional<double> scaled_white_error2;
  /// Incorrect fraction over every answered position.
  std::optional<double> observed_error1;
  std::optional<double> observed_error2;
  double analytic_bound = 0.0;
};

/// Mints a coin per trial, forges two and verifies each with an honest,
/// noiseless verifier against the same database. Requires T >= 2.
ForgeOutcome run_forging_experiment(const AttackStrategy& strategy, const ForgeConfig& config);

inline constexpr const char* kForgeCsvHeader =
    "strategy,n,q,l,trials,accept1_rate,accept2_rate,both_accept_rate,analytic_bound";

std::string to_csv_row(const ForgeOutcome& o);
nlohmann::json to_json(const ForgeOutcome& o);

struct LossHidingReport {
  std::size_t q = 0;
  std::size_t sent = 0;
  std::size_t l = 0;
  std::size_t trials = 0;
  double abort_rate = 0.0;
  double proceed_rate = 0.0;
  /// exp(-2 (eps/eta)^2 l) + exp(-2 eps^2 l)
  double proceed_bound = 0.0;
};

/// Honest lossy verifications of a coin whose positions with sent[i] false
/// hold nothing. q = sent.size() must be at least 1000 l.
LossHidingReport loss_hiding_weight_check(const std::vector<bool>& sent, std::size_t l, double eta, double epsilon,
                                          std::size_t trials, std::uint64_t seed);

}  // namespace hmqm
