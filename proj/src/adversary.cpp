#include "hmqm/adversary.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <mutex>
#include <sstream>

#include "hmqm/error.hpp"
#include "hmqm/rng.hpp"

namespace hmqm {

namespace {

constexpr std::size_t kCloneCacheLimit = 1 << 14;

std::string matrix_key(const ComplexMatrix& m) {
  std::string key(static_cast<std::size_t>(m.size()) * sizeof(Complex), '\0');
  std::memcpy(key.data(), m.data(), key.size());
  return key;
}

std::mutex clone_cache_mutex;
std::map<std::string, ClonePair>& clone_cache() {
  static std::map<std::string, ClonePair> cache;
  return cache;
}

void require_fraction(double f, const char* what) {
  if (!(f >= 0.0 && f <= 1.0)) throw InvalidArgument(std::string(what) + " fraction must lie in [0, 1]");
}

double parse_fraction(const std::string& token, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument("bad number in attack step '" + token + "'");
  }
}

struct Plan {
  ChannelPipeline pre;
  ChannelPipeline post;
  SplitterPtr splitter;
  double split_fraction = 0.0;
  double hiding_fraction = 0.0;
};

Plan plan_of(const AttackStrategy& strategy) {
  Plan p;
  for (const AttackStep& step : strategy.steps) {
    ChannelPipeline& stage = p.splitter ? p.post : p.pre;
    if (const auto* noise = std::get_if<attack::HonestNoise>(&step)) {
      if (auto ch = honest_noise(noise->beta)) stage.push_back(std::move(ch));
    } else if (std::holds_alternative<attack::SymmetricClone>(step)) {
      p.splitter = std::make_shared<SymmetricCloner>();
    } else if (std::holds_alternative<attack::MixedSubstitution>(step)) {
      p.splitter = std::make_shared<MixedSubstituter>();
    } else if (const auto* custom = std::get_if<attack::Custom>(&step)) {
      p.splitter = custom->splitter;
    } else if (const auto* hiding = std::get_if<attack::LossHiding>(&step)) {
      p.hiding_fraction = hiding->fraction;
    } else if (const auto* split = std::get_if<attack::RegisterSplit>(&step)) {
      p.split_fraction = split->fraction;
    }
  }
  return p;
}

ChannelPipeline concat(ChannelPipeline a, const ChannelPipeline& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::optional<double> rate(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ClonePair SymmetricCloner::apply(const DensityMatrix& rho) const {
  std::string key = matrix_key(rho.matrix());
  {
    std::lock_guard lock(clone_cache_mutex);
    auto& cache = clone_cache();
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  ClonePair result = symmetric_clone(rho);
  std::lock_guard lock(clone_cache_mutex);
  auto& cache = clone_cache();
  if (cache.size() >= kCloneCacheLimit) cache.clear();
  cache.emplace(std::move(key), result);
  return result;
}

std::optional<nlohmann::json> SymmetricCloner::describe() const { return nlohmann::json{{"kind", name()}}; }

ClonePair MixedSubstituter::apply(const DensityMatrix& rho) const {
  return {DensityMatrix::maximally_mixed(rho.dim()), DensityMatrix::maximally_mixed(rho.dim())};
}

std::optional<nlohmann::json> MixedSubstituter::describe() const { return nlohmann::json{{"kind", name()}}; }

SplitBranch::SplitBranch(SplitterPtr splitter, int branch) : splitter_(std::move(splitter)), branch_(branch) {
  if (!splitter_) throw InvalidArgument("split branch needs a splitter");
  if (branch != 0 && branch != 1) throw InvalidArgument("split branch must be 0 or 1");
}

DensityMatrix SplitBranch::apply(const DensityMatrix& rho) const {
  ClonePair pair = splitter_->apply(rho);
  return branch_ == 0 ? std::move(pair.first_clone) : std::move(pair.second_clone);
}

std::optional<nlohmann::json> SplitBranch::describe() const {
  auto inner = splitter_->describe();
  if (!inner) return std::nullopt;
  return nlohmann::json{{"kind", "split_branch"}, {"splitter", std::move(*inner)}, {"branch", branch_}};
}

SplitterPtr splitter_from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "symmetric_clone") return std::make_shared<SymmetricCloner>();
  if (kind == "mixed_substitution") return std::make_shared<MixedSubstituter>();
  throw InvalidArgument("unknown splitter kind '" + kind + "'");
}

ChannelPtr split_branch_from_json(const nlohmann::json& j) {
  return std::make_shared<SplitBranch>(splitter_from_json(j.at("splitter")), j.at("branch").get<int>());
}

std::string AttackStrategy::name() const {
  std::ostringstream out;
  bool first = true;
  for (const AttackStep& step : steps) {
    if (!first) out << '+';
    first = false;
    std::visit(
        [&](const auto& s) {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, attack::HonestNoise>) {
            out << "honest_noise:" << s.beta;
          } else if constexpr (std::is_same_v<S, attack::SymmetricClone>) {
            out << "symmetric_clone";
          } else if constexpr (std::is_same_v<S, attack::MixedSubstitution>) {
            out << "mixed_substitution";
          } else if constexpr (std::is_same_v<S, attack::LossHiding>) {
            out << "loss_hiding:" << s.fraction;
          } else if constexpr (std::is_same_v<S, attack::RegisterSplit>) {
            out << "register_split:" << s.fraction;
          } else {
            out << "custom:" << (s.splitter ? s.splitter->name() : "null");
          }
        },
        step);
  }
  return first ? "none" : out.str();
}

void AttackStrategy::validate() const {
  int splitters = 0;
  for (const AttackStep& step : steps) {
    if (const auto* noise = std::get_if<attack::HonestNoise>(&step)) {
      if (!(noise->beta >= 0.0 && noise->beta <= 0.5)) throw InvalidArgument("honest noise beta must lie in [0, 1/2]");
    } else if (const auto* hiding = std::get_if<attack::LossHiding>(&step)) {
      require_fraction(hiding->fraction, "loss hiding");
    } else if (const auto* split = std::get_if<attack::RegisterSplit>(&step)) {
      require_fraction(split->fraction, "register split");
    } else if (const auto* custom = std::get_if<attack::Custom>(&step)) {
      if (!custom->splitter) throw InvalidArgument("custom attack step has no splitter");
      ++splitters;
    } else {
      ++splitters;
    }
  }
  if (splitters > 1) throw InvalidArgument("an attack may split each state at most once");
}

AttackStrategy AttackStrategy::parse(const std::string& text) {
  AttackStrategy s;
  if (text == "none" || text.empty()) return s;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('+', start), text.size());
    const std::string token = text.substr(start, end - start);
    const std::size_t colon = token.find(':');
    const std::string head = token.substr(0, colon);
    const std::optional<std::string> arg =
        colon == std::string::npos ? std::nullopt : std::optional<std::string>(token.substr(colon + 1));
    if (head == "honest_noise") {
      s.steps.emplace_back(attack::HonestNoise{arg ? parse_fraction(token, *arg) : 0.0});
    } else if (head == "symmetric_clone" && !arg) {
      s.steps.emplace_back(attack::SymmetricClone{});
    } else if (head == "mixed_substitution" && !arg) {
      s.steps.emplace_back(attack::MixedSubstitution{});
    } else if (head == "loss_hiding" && arg) {
      s.steps.emplace_back(attack::LossHiding{parse_fraction(token, *arg)});
    } else if (head == "register_split") {
      s.steps.emplace_back(attack::RegisterSplit{arg ? parse_fraction(token, *arg) : 1.0 / 1000.0});
    } else {
      throw InvalidArgument("unknown attack step '" + token + "'");
    }
    start = end + 1;
  }
  s.validate();
  return s;
}

const char* to_string(PositionRole role) {
  switch (role) {
    case PositionRole::White: return "white";
    case PositionRole::Known: return "known";
    case PositionRole::SplitToSecond: return "split_to_second";
    case PositionRole::SplitToFirst: return "split_to_first";
    case PositionRole::HiddenFromFirst: return "hidden_from_first";
    case PositionRole::HiddenFromSecond: return "hidden_from_second";
    case PositionRole::HiddenFromBoth: return "hidden_from_both";
  }
  return "unknown";
}

PositionRole ForgeLayout::role(std::size_t game) const {
  if (game < split) return PositionRole::SplitToSecond;
  if (game < 2 * split) return PositionRole::SplitToFirst;
  if (game < white_begin()) return PositionRole::Known;
  const bool first_hidden = game < white_begin() + hidden;
  const bool second_hidden = game + hidden >= q;
  if (first_hidden && second_hidden) return PositionRole::HiddenFromBoth;
  if (first_hidden) return PositionRole::HiddenFromFirst;
  if (second_hidden) return PositionRole::HiddenFromSecond;
  return PositionRole::White;
}

ForgedCoins forge_coins(const Coin& coin, const AttackStrategy& strategy, std::size_t verifications) {
  strategy.validate();
  const Plan plan = plan_of(strategy);
  const std::size_t q = coin.q();

  ForgeLayout layout;
  layout.q = q;
  layout.split = static_cast<std::size_t>(std::floor(plan.split_fraction * static_cast<double>(q)));
  layout.known = verifications * coin.l();
  if (layout.split > q / 1000) {
    throw ProtocolError("register split of " + std::to_string(layout.split) + " positions exceeds q/1000");
  }
  if (layout.known > q / 1000) {
    throw ProtocolError(std::to_string(layout.known) + " known positions exceed q/1000");
  }
  // Each split pair yields one exact copy and each known position one more.
  if (layout.split + layout.known > q / 500) {
    throw ProtocolError("more than q/500 positions would be replicated exactly");
  }
  const std::size_t white = q - layout.white_begin();
  layout.hidden = static_cast<std::size_t>(std::floor(plan.hiding_fraction * static_cast<double>(white)));

  const ChannelPipeline unsplit = concat(plan.pre, plan.post);
  PositionMap first, second;
  if (plan.splitter) {
    first = PositionMap(GenuineRef{concat(concat(plan.pre, {std::make_shared<SplitBranch>(plan.splitter, 0)}), plan.post)});
    second = PositionMap(GenuineRef{concat(concat(plan.pre, {std::make_shared<SplitBranch>(plan.splitter, 1)}), plan.post)});
  } else {
    first = PositionMap(GenuineRef{unsplit});
    second = PositionMap(Absent{});
  }
  const std::size_t s = layout.split;
  first.assign(0, s, Absent{});
  second.assign(0, s, GenuineRef{});
  first.assign(s, 2 * s, GenuineRef{});
  second.assign(s, 2 * s, Absent{});
  first.assign(2 * s, layout.white_begin(), GenuineRef{});
  second.assign(2 * s, layout.white_begin(), GenuineRef{});

  const std::size_t wb = layout.white_begin();
  const std::size_t h = layout.hidden;
  first.assign(wb, wb + h, Absent{});
  second.assign(wb, wb + h, GenuineRef{unsplit});
  first.assign(q - h, q, GenuineRef{unsplit});
  second.assign(q - h, q, Absent{});
  if (wb + h > q - h) {
    first.assign(q - h, wb + h, Absent{});
    second.assign(q - h, wb + h, Absent{});
  }

  ForgedCoins out{Coin(coin.id(), coin.n(), q, coin.l(), std::move(first)),
                  Coin(coin.id(), coin.n(), q, coin.l(), std::move(second)), layout};
  if (coin.used_count() > 0) {
    for (std::size_t i = 0; i < q; ++i) {
      if (coin.used(i)) {
        out.first.mark_used(i);
        out.second.mark_used(i);
      }
    }
  }
  for (std::size_t i = 0; i < s; ++i) {
    out.first.mark_used(i);
    out.second.mark_used(s + i);
  }
  return out;
}

std::pair<std::optional<double>, std::optional<double>> white_position_errors(const AttackStrategy& strategy,
                                                                             const BitString& x) {
  strategy.validate();
  const Plan plan = plan_of(strategy);
  const DisjointMatchingSet set = build_disjoint_set(static_cast<int>(x.size()));
  const DensityMatrix prepared = apply_pipeline(plan.pre, hidden_matching_density(x));
  if (!plan.splitter) {
    return {averaged_error_probability(apply_pipeline(plan.post, prepared), x, set), std::nullopt};
  }
  ClonePair pair = plan.splitter->apply(prepared);
  return {averaged_error_probability(apply_pipeline(plan.post, pair.first_clone), x, set),
          averaged_error_probability(apply_pipeline(plan.post, pair.second_clone), x, set)};
}

ForgeOutcome run_forging_experiment(const AttackStrategy& strategy, const ForgeConfig& config) {
  strategy.validate();
  config.params.validate();
  if (config.trials == 0) throw InvalidArgument("forging experiment needs at least one trial");
  const std::size_t q = config.q.value_or(2000 * config.l);
  const std::size_t T = max_verifications(q, config.l);
  if (T < 2) throw InvalidArgument("both forged coins are checked against one database, so q must be >= 2000 l");

  ForgeOutcome out;
  out.strategy = strategy.name();
  out.n = config.n;
  out.q = q;
  out.l = config.l;
  out.trials = config.trials;

  std::size_t accept1 = 0, accept2 = 0, both = 0, abort1 = 0, abort2 = 0;
  std::size_t white_wrong[2] = {0, 0}, white_total[2] = {0, 0};
  std::size_t all_wrong[2] = {0, 0}, all_total[2] = {0, 0};

  for (std::size_t trial = 0; trial < config.trials; ++trial) {
    const std::uint64_t trial_seed = derive_seed(config.seed, trial);
    LocalBank bank(trial_seed);
    auto [coin, db] = bank.mint(config.n, q, config.l, config.params);
    ForgedCoins forged = forge_coins(coin, strategy, db->T);

    Coin* coins[2] = {&forged.first, &forged.second};
    bool accepted[2] = {false, false};
    for (int v = 0; v < 2; ++v) {
      Rng rng(derive_seed(trial_seed, static_cast<std::uint64_t>(v) + 1));
      const VerifyResult result = holder_verify(*coins[v], bank, config.params, nullptr, rng);
      accepted[v] = result.status == VerifyStatus::Valid;
      if (result.status == VerifyStatus::Aborted) (v == 0 ? abort1 : abort2) += 1;

      const auto scores = score_transcript(*db, result.transcript);
      for (std::size_t k = 0; k < scores.size(); ++k) {
        if (!scores[k]) continue;
        const bool wrong = !*scores[k];
        ++all_total[v];
        all_wrong[v] += wrong;
        if (forged.layout.role(result.transcript.triplets[k].game) == PositionRole::White) {
          ++white_total[v];
          white_wrong[v] += wrong;
        }
      }
    }
    accept1 += accepted[0];
    accept2 += accepted[1];
    both += accepted[0] && accepted[1];
  }

  const auto trials = static_cast<double>(config.trials);
  out.accept1_rate = static_cast<double>(accept1) / trials;
  out.accept2_rate = static_cast<double>(accept2) / trials;
  out.both_accept_rate = static_cast<double>(both) / trials;
  out.abort1_rate = static_cast<double>(abort1) / trials;
  out.abort2_rate = static_cast<double>(abort2) / trials;
  out.white_error1 = rate(white_wrong[0], white_total[0]);
  out.white_error2 = rate(white_wrong[1], white_total[1]);
  out.white_samples1 = white_total[0];
  out.white_samples2 = white_total[1];
  if (out.white_error1) out.scaled_white_error1 = *out.white_error1 * 997.0 / 999.0;
  if (out.white_error2) out.scaled_white_error2 = *out.white_error2 * 997.0 / 999.0;
  out.observed_error1 = rate(all_wrong[0], all_total[0]);
  out.observed_error2 = rate(all_wrong[1], all_total[1]);

  const VerdictParameters& p = config.params;
  if (p.eta == 1.0 && p.epsilon == 0.0) {
    out.analytic_bound = honest_fail_bound(config.l, p.delta);
  } else {
    out.analytic_bound = lossy_fail_bounds(config.l, p.l_min(config.l), p.delta, p.epsilon, p.eta).forgery;
  }
  return out;
}

std::string to_csv_row(const ForgeOutcome& o) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s,%d,%zu,%zu,%zu,%.6f,%.6f,%.6f,%.6e", o.strategy.c_str(), o.n, o.q, o.l,
                o.trials, o.accept1_rate, o.accept2_rate, o.both_accept_rate, o.analytic_bound);
  return buf;
}

nlohmann::json to_json(const ForgeOutcome& o) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    if (v) return *v;
    return nullptr;
  };
  return {{"strategy", o.strategy},
          {"n", o.n},
          {"q", o.q},
          {"l", o.l},
          {"trials", o.trials},
          {"accept1_rate", o.accept1_rate},
          {"accept2_rate", o.accept2_rate},
          {"both_accept_rate", o.both_accept_rate},
          {"abort1_rate", o.abort1_rate},
          {"abort2_rate", o.abort2_rate},
          {"white_error1", opt(o.white_error1)},
          {"white_error2", opt(o.white_error2)},
          {"white_samples1", o.white_samples1},
          {"white_samples2", o.white_samples2},
          {"scaled_white_error1", opt(o.scaled_white_error1)},
          {"scaled_white_error2", opt(o.scaled_white_error2)},
          {"observed_error1", opt(o.observed_error1)},
          {"observed_error2", opt(o.observed_error2)},
          {"analytic_bound", o.analytic_bound}};
}

LossHidingReport loss_hiding_weight_check(const std::vector<bool>& sent, std::size_t l, double eta, double epsilon,
                                          std::size_t trials, std::uint64_t seed) {
  const std::size_t q = sent.size();
  if (l == 0 || q < 1000 * l) throw InvalidArgument("loss hiding check needs q >= 1000 l");
  if (trials == 0) throw InvalidArgument("loss hiding check needs at least one trial");
  VerdictParameters params;
  params.c = 1.0;
  params.delta = 0.25;
  params.eta = eta;
  params.epsilon = epsilon;
  params.validate();

  LossHidingReport report;
  report.q = q;
  report.l = l;
  report.trials = trials;

  PositionMap layout(Absent{});
  for (std::size_t i = 0; i < q;) {
    if (!sent[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < q && sent[j]) ++j;
    layout.assign(i, j, GenuineRef{});
    report.sent += j - i;
    i = j;
  }

  std::size_t aborted = 0;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const std::uint64_t trial_seed = derive_seed(seed, trial);
    LocalBank bank(trial_seed);
    auto minted = bank.mint(4, q, l, params);
    Coin coin(minted.first.id(), 4, q, l, layout);
    Rng rng(derive_seed(trial_seed, 1));
    if (holder_verify(coin, bank, params, nullptr, rng).status == VerifyStatus::Aborted) ++aborted;
  }
  report.abort_rate = static_cast<double>(aborted) / static_cast<double>(trials);
  report.proceed_rate = 1.0 - report.abort_rate;
  const double ld = static_cast<double>(l);
  report.proceed_bound = std::exp(-2.0 * (epsilon * epsilon) / (eta * eta) * ld) + std::exp(-2.0 * epsilon * epsilon * ld);
  return report;
}

}  // namespace hmqm
