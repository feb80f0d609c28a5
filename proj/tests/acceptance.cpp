// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "hmqm/adversary.hpp"
#include "hmqm/bounds.hpp"
#include "hmqm/coherent.hpp"
#include "hmqm/error.hpp"
#include "hmqm/protocol.hpp"
#include "hmqm/service.hpp"
#include "oracles.hpp"

using namespace hmqm;

namespace {

struct Check {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double sigma3(double p, std::size_t trials) { return 3.0 * oracle::sigma(std::clamp(p, 0.0, 1.0), trials); }

// 1
void fidelity_law(Check& c) {
  double worst = 0.0;
  for (int n = 4; n <= 14; n += 2) {
    const auto b = compute_clone_bound(n);
    const double diff = std::abs(b.fidelity_bound - (0.5 + 1.0 / n));
    worst = std::max(worst, diff);
    c.require(diff <= 1e-8, "n=" + std::to_string(n));
  }
  c.detail << "max |n||Q|| - (1/2 + 1/n)| = " << worst << " over n=4..14";
}

// 2
void closed_form_oracle(Check& c) {
  double worst = 0.0;
  for (int n : {4, 6, 8}) {
    const double diff = (pair_average(n) - oracle::pair_average(n)).cwiseAbs().maxCoeff();
    worst = std::max(worst, diff);
    c.require(diff <= 1e-12, "pair_average n=" + std::to_string(n));
  }
  const double q = (build_q_matrix(4) - oracle::q_matrix(4)).cwiseAbs().maxCoeff();
  c.require(q <= 1e-12, "Q n=4");
  c.detail << "pair_average max diff " << worst << ", Q(4) max diff " << q;
}

// 3
void tolerance_table(Check& c) {
  c.require(std::abs(e_min(4) - 0.1663) <= 1e-4, "e_min(4)");
  c.require(std::abs(e_min(14) - 0.2303) <= 1e-4, "e_min(14)");
  c.require(std::abs(e_max(4) - 0.2) <= 1e-15, "e_max(4)");
  c.require(std::abs(e_max(14) - 0.2333) <= 1e-4, "e_max(14)");
  double previous = 0.0;
  for (int n = 4; n <= (1 << 22); n *= 2) {
    c.require(e_max(n) > previous && e_max(n) < 0.25, "e_max monotone below 1/4 at n=" + std::to_string(n));
    previous = e_max(n);
  }
  c.require(0.25 - previous < 1e-6, "e_max approaches 1/4");
  c.detail << "e_min(4)=" << e_min(4) << " e_min(14)=" << e_min(14) << " e_max(4)=" << e_max(4)
           << " e_max(14)=" << e_max(14) << " e_max(2^22)=" << previous;
}

// 4
void cloner_ground_truth(Check& c) {
  Rng rng(404);
  double worst_state = 0.0, worst_error = 0.0;
  for (int n = 4; n <= 14; n += 2) {
    const double v = 0.5 * (n + 2.0) / (n + 1.0);
    const auto set = build_disjoint_set(n);
    for (int k = 0; k < 50; ++k) {
      const auto x = random_bit_string(static_cast<std::size_t>(n), rng);
      const auto clones = symmetric_clone(hidden_matching_density(x));
      ComplexMatrix expected = v * oracle::phi(x) * oracle::phi(x).transpose();
      expected.diagonal().array() += (1.0 - v) / n;
      for (const auto* clone : {&clones.first_clone, &clones.second_clone}) {
        worst_state = std::max(worst_state, (clone->matrix() - expected).cwiseAbs().maxCoeff());
        worst_error = std::max(worst_error, std::abs(averaged_error_probability(*clone, x, set) - e_max(n)));
      }
    }
  }
  c.require(worst_state <= 1e-10, "reduced state");
  c.require(worst_error <= 1e-10, "error equals e_max");
  c.detail << "max state diff " << worst_state << ", max |error - e_max| " << worst_error;
}

// 5
void povm_identity(Check& c) {
  Rng rng(505);
  double worst = 0.0;
  for (int n : {4, 6, 8}) {
    const auto set = build_disjoint_set(n);
    for (int k = 0; k < 50; ++k) {
      const auto x = random_bit_string(static_cast<std::size_t>(n), rng);
      const ComplexMatrix rho = oracle::random_density(n, rng);
      const double povm = (averaged_povm(x, set).incorrect_effect * rho).trace().real();
      double mean = 0.0;
      for (const auto& m : set.matchings) mean += oracle::error_given_matching(rho, x, m);
      mean /= static_cast<double>(set.size());
      worst = std::max(worst, std::abs(povm - mean));
    }
  }
  c.require(worst <= 1e-12, "POVM identity");
  c.detail << "max |Tr[G rho] - mean error| = " << worst;
}

// 6
void completeness(Check& c) {
  const std::size_t trials = 1000;
  std::size_t noiseless_valid = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    LocalBank bank(derive_seed(600, t));
    const auto params = VerdictParameters::for_noise(8, 0.0);
    auto [coin, db] = bank.mint(8, 200000, 200, params);
    Rng rng(derive_seed(601, t));
    if (holder_verify(coin, bank, params, nullptr, rng).status == VerifyStatus::Valid) ++noiseless_valid;
  }
  c.require(noiseless_valid == trials, "noiseless all Valid");

  const std::size_t l = 2000;
  const auto params = VerdictParameters::for_noise(8, 0.1);
  const ChannelPtr noise = honest_noise(0.1);
  std::size_t rejected = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    LocalBank bank(derive_seed(602, t));
    auto [coin, db] = bank.mint(8, 1000 * l, l, params);
    Rng rng(derive_seed(603, t));
    if (holder_verify(coin, bank, params, noise, rng).status != VerifyStatus::Valid) ++rejected;
  }
  const double rate = static_cast<double>(rejected) / trials;
  const double bound = honest_fail_bound(l, params.delta);
  c.require(rate <= bound + sigma3(bound, trials), "noisy rejection within bound");
  c.detail << "noiseless " << noiseless_valid << "/" << trials << " Valid; beta=0.1 rejection " << rate
           << " vs bound " << bound << " (delta " << params.delta << ")";
}

// 7
void forging_failure(Check& c) {
  ForgeConfig config;
  config.n = 4;
  config.l = 2000;
  config.trials = 1000;
  config.seed = 700;
  config.params = VerdictParameters::for_noise(4, 0.1);
  const auto out = run_forging_experiment(AttackStrategy::parse("symmetric_clone"), config);
  c.require(out.both_accept_rate == 0.0, "both_accept_rate = 0");
  c.require(out.both_accept_rate <= out.analytic_bound + sigma3(out.analytic_bound, config.trials), "below bound");
  for (const auto& [e, samples] : {std::pair{out.white_error1, out.white_samples1},
                                   std::pair{out.white_error2, out.white_samples2}}) {
    c.require(e.has_value() && std::abs(*e - e_max(4)) <= sigma3(e_max(4), samples), "white error near e_max(4)");
  }
  c.detail << "both_accept " << out.both_accept_rate << " (bound " << out.analytic_bound << "), white errors "
           << out.white_error1.value_or(-1) << ", " << out.white_error2.value_or(-1) << " vs " << e_max(4);
}

// 8
void lossy_variant(Check& c) {
  const double eta = 0.6, eps = 0.05;
  const std::size_t l = 2000, q = 1000 * l, trials = 1000;
  const auto params = VerdictParameters::for_noise(8, 0.0, eta, eps);
  std::size_t aborted = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    LocalBank bank(derive_seed(800, t));
    auto [coin, db] = bank.mint(8, q, l, params);
    Rng rng(derive_seed(801, t));
    if (holder_verify(coin, bank, params, nullptr, rng).status == VerifyStatus::Aborted) ++aborted;
  }
  const double abort_rate = static_cast<double>(aborted) / trials;
  const double abort_bound = std::exp(-2.0 * l * eps * eps);
  c.require(abort_rate <= abort_bound + sigma3(abort_bound, trials), "honest abort");

  const double gamma = 1.0 - 3.0 * eps / eta;
  std::vector<bool> sent(q, false);
  for (std::size_t i = 0; i < static_cast<std::size_t>(gamma * static_cast<double>(q)); ++i) sent[i] = true;
  const auto hiding = loss_hiding_weight_check(sent, l, eta, eps, trials, 802);
  c.require(hiding.proceed_rate <= hiding.proceed_bound + sigma3(hiding.proceed_bound, trials), "loss hiding");
  c.detail << "honest abort " << abort_rate << " vs " << abort_bound << "; hiding at gamma=" << gamma
           << " proceeds " << hiding.proceed_rate << " vs " << hiding.proceed_bound;
}

// 9
void coherent_statistics(Check& c) {
  double worst = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double mu = 1e-4 * std::pow(1e5, k / 100.0);
    const auto s = photon_statistics(mu);
    const long double p0 = std::exp(-static_cast<long double>(mu));
    const long double p1 = mu * p0;
    const long double rest = 1.0L - p0 - p1;
    worst = std::max({worst, std::abs(static_cast<double>(s.p0 - p0)), std::abs(static_cast<double>(s.p1 - p1)),
                      std::abs(static_cast<double>(s.p2plus - rest))});
  }
  c.require(worst <= 1e-12, "Poisson");
  Rng rng(909);
  bool all = true;
  for (int n = 4; n <= 14; n += 2) {
    for (int k = 0; k < 20; ++k) {
      all = all && single_photon_state_equivalence(random_bit_string(static_cast<std::size_t>(n), rng),
                                                   std::polar(0.5, 0.3 * k), 1e-14);
    }
  }
  c.require(all, "single-photon state");
  c.detail << "max Poisson diff " << worst << "; single-photon block equals phi_x: " << (all ? "yes" : "no");
}

// 10a
void wire_equivalence(Check& c) {
  ServerOptions options;
  options.seed = 1000;
  BankServer server(options);
  server.start();
  RemoteBank remote("127.0.0.1", server.port());
  const ChannelPtr noise = honest_noise(0.1);
  int identical = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto minted = remote.mint(8, 200000, 200, 0.1);
    LocalBank local;
    local.adopt(*server.snapshot(minted.descriptor.coin_id));
    Coin local_coin = minted.coin;
    Rng r1(derive_seed(1001, seed)), r2(derive_seed(1001, seed));
    const auto a = client_verify(remote, minted.coin, minted.descriptor.params, noise, r1);
    const auto b = holder_verify(local_coin, local, minted.descriptor.params, noise, r2);
    const bool same = a.status == b.status && a.verdict && b.verdict &&
                      to_json(*a.verdict).dump() == to_json(*b.verdict).dump() &&
                      to_json(a.transcript).dump() == to_json(b.transcript).dump();
    if (same) ++identical;
  }
  server.stop();
  c.require(identical == 100, "verdict identity");
  c.detail << identical << "/100 runs verdict-identical";
}

class ServerProcess {
 public:
  explicit ServerProcess(const std::string& journal) {
    int fds[2];
    if (pipe(fds) != 0) throw IoError("pipe failed");
    pid_ = fork();
    if (pid_ < 0) throw IoError("fork failed");
    if (pid_ == 0) {
      dup2(fds[1], STDOUT_FILENO);
      close(fds[0]);
      close(fds[1]);
      setenv("HMQM_DATA", journal.c_str(), 1);
      execl(HMQM_CLI_PATH, HMQM_CLI_PATH, "serve", "--listen", "127.0.0.1:0", static_cast<char*>(nullptr));
      _exit(127);
    }
    close(fds[1]);
    FILE* in = fdopen(fds[0], "r");
    char line[256] = {0};
    const bool got = std::fgets(line, sizeof line, in) != nullptr;
    std::fclose(in);
    const std::string text = got ? line : "";
    const auto colon = text.rfind(':');
    if (text.rfind("listening on ", 0) != 0 || colon == std::string::npos) {
      kill();
      throw IoError("server did not start: '" + text + "'");
    }
    port_ = static_cast<std::uint16_t>(std::stoi(text.substr(colon + 1)));
  }
  ~ServerProcess() { kill(); }

  void kill() {
    if (pid_ > 0) {
      ::kill(pid_, SIGKILL);
      waitpid(pid_, nullptr, 0);
      pid_ = -1;
    }
  }
  std::uint16_t port() const { return port_; }

 private:
  pid_t pid_ = -1;
  std::uint16_t port_ = 0;
};

// Measures through the bank, then sends the verify request on a separate
// socket and kills the server before the verdict can come back.
class KillDuringCheck final : public BankEndpoint {
 public:
  KillDuringCheck(RemoteBank& bank, ServerProcess& server, std::uint16_t port)
      : bank_(bank), server_(server), port_(port) {}

  std::vector<MeasurementOutcome> measure(const CoinId& coin, std::span<const MeasureQuery> queries) override {
    return bank_.measure(coin, queries);
  }
  Verdict check(const VerificationTranscript& transcript) override {
    const int fd = wire::connect_to("127.0.0.1", port_);
    wire::write_frame(fd, wire::encode({{"type", "verify"}, {"id", 1}, {"transcript", to_json(transcript)}}));
    server_.kill();
    close(fd);
    Verdict lost;
    lost.reason = "lost";
    return lost;
  }

 private:
  RemoteBank& bank_;
  ServerProcess& server_;
  std::uint16_t port_;
};

// 10b
void kill_restart(Check& c) {
  const auto dir = std::filesystem::temp_directory_path() / ("hmqm-acceptance-" + std::to_string(getpid()));
  std::filesystem::create_directories(dir);
  const std::string journal = (dir / "bank.jsonl").string();

  auto server = std::make_unique<ServerProcess>(journal);
  MintedCoin minted = [&] {
    RemoteBank bank("127.0.0.1", server->port());
    return bank.mint(4, 3000 * 100, 100);
  }();
  const std::size_t T = minted.descriptor.T;
  std::size_t valid = 0, exhausted = 0, lost = 0;
  for (int round = 0; round < 10; ++round) {
    Rng rng(derive_seed(1100, static_cast<std::uint64_t>(round)));
    RemoteBank bank("127.0.0.1", server->port());
    if (round % 3 == 1) {
      KillDuringCheck killer(bank, *server, server->port());
      holder_verify(minted.coin, killer, minted.descriptor.params, nullptr, rng);
      ++lost;
    } else {
      const auto r = client_verify(bank, minted.coin, minted.descriptor.params, nullptr, rng);
      if (r.status == VerifyStatus::Valid) ++valid;
      if (r.verdict && r.verdict->reason == "coin_exhausted") ++exhausted;
    }
    server->kill();
    server = std::make_unique<ServerProcess>(journal);
  }
  server.reset();
  std::filesystem::remove_all(dir);
  c.require(valid <= T, "Valid count within T");
  c.require(exhausted > 0, "coin eventually exhausted");
  c.detail << valid << " Valid of T=" << T << " across 10 kill/restart cycles (" << lost
           << " checks cut off mid-flight, " << exhausted << " exhausted)";
}

void wire_and_durability(Check& c) {
  Check a, b;
  wire_equivalence(a);
  kill_restart(b);
  c.pass = a.pass && b.pass;
  c.detail << a.detail.str() << "; " << b.detail.str();
}

void hoeffding_inversion_note() {
  const double delta = 0.0196;
  std::size_t l = 1;
  while (honest_fail_bound(l, delta) >= 1e-6) ++l;
  const bool ok = l >= 17500 && l <= 18500;
  std::cout << (ok ? "PASS" : "FAIL") << " note: exp(-2 l delta^2) < 1e-6 at delta=" << delta << " first holds at l="
            << l << "; with q=1e9 the T policy gives T=" << max_verifications(1000000000, 18000) << ", not 100\n";
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<void(Check&)>> criteria[] = {
      {"fidelity-bound law", fidelity_law},
      {"closed-form oracle equivalence", closed_form_oracle},
      {"tolerance table", tolerance_table},
      {"cloner ground truth", cloner_ground_truth},
      {"POVM identity", povm_identity},
      {"completeness and concentration", completeness},
      {"forging failure", forging_failure},
      {"lossy variant", lossy_variant},
      {"coherent statistics", coherent_statistics},
      {"wire equivalence and durability", wire_and_durability},
  };
  int failures = 0;
  int index = 0;
  for (const auto& [name, run] : criteria) {
    ++index;
    Check c;
    const auto start = std::chrono::steady_clock::now();
    try {
      run(c);
    } catch (const std::exception& e) {
      c.pass = false;
      c.detail << " exception: " << e.what();
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!c.pass) ++failures;
    std::printf("%s %d %s (%.1fs): %s\n", c.pass ? "PASS" : "FAIL", index, name, seconds, c.detail.str().c_str());
    std::fflush(stdout);
  }
  hoeffding_inversion_note();
  return failures == 0 ? 0 : 1;
}
