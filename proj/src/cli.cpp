#include "hmqm/cli.hpp"

#include <csignal>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <vector>

#include "CLI11.hpp"
#include "hmqm/adversary.hpp"
#include "hmqm/bounds.hpp"
#include "hmqm/coherent.hpp"
#include "hmqm/error.hpp"
#include "hmqm/protocol.hpp"
#include "hmqm/service.hpp"
#include "json.hpp"

namespace hmqm::cli {

namespace {

using nlohmann::json;
using Settings = std::map<std::string, std::string>;

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T value{};
  in >> value;
  if (in.fail() || !in.eof()) throw InvalidArgument("bad value '" + text + "' for " + key);
  return value;
}

template <typename T>
T get(const Settings& s, const std::string& key, T fallback) {
  auto it = s.find(key);
  return it == s.end() ? fallback : parse_value<T>(key, it->second);
}

template <typename T>
std::optional<T> get_optional(const Settings& s, const std::string& key) {
  auto it = s.find(key);
  if (it == s.end()) return std::nullopt;
  return parse_value<T>(key, it->second);
}

std::size_t get_size(const Settings& s, const std::string& key, std::size_t fallback) {
  // Accepts 1e9 style values for the large counts.
  auto it = s.find(key);
  if (it == s.end()) return fallback;
  const double v = parse_value<double>(key, it->second);
  if (!(v >= 0.0) || v != std::floor(v) || v > 1e18) throw InvalidArgument(key + " must be a non-negative integer");
  return static_cast<std::size_t>(v);
}

std::optional<std::size_t> get_optional_size(const Settings& s, const std::string& key) {
  if (s.count(key) == 0) return std::nullopt;
  return get_size(s, key, 0);
}

template <typename T>
std::vector<T> get_list(const Settings& s, const std::string& key, std::vector<T> fallback) {
  auto it = s.find(key);
  if (it == s.end()) return fallback;
  std::vector<T> out;
  std::stringstream in(it->second);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_value<T>(key, trim(item)));
  if (out.empty()) throw InvalidArgument(key + " must list at least one value");
  return out;
}

double envelope(double bound, std::size_t trials) {
  const double b = std::clamp(bound, 0.0, 1.0);
  return bound + 3.0 * std::sqrt(b * (1.0 - b) / static_cast<double>(trials));
}

/// A subcommand: its keys double as config-file keys and --flags.
struct Command {
  CLI::App* app = nullptr;
  std::vector<std::string> keys;
  std::map<std::string, std::string> flags;
  std::string config_path;
  bool takes_config = false;

  Settings settings(const std::string& seed_flag, bool seed_given) const {
    Settings s;
    if (!config_path.empty()) {
      s = read_config(config_path);
      for (const auto& [key, value] : s) {
        if (key != "seed" && std::find(keys.begin(), keys.end(), key) == keys.end()) {
          throw InvalidArgument("unknown config key '" + key + "'");
        }
      }
    }
    for (const auto& key : keys) {
      if (app->get_option("--" + key)->count() > 0) s[key] = flags.at(key);
    }
    if (seed_given) s["seed"] = seed_flag;
    return s;
  }
};

void add_keys(Command& c, std::initializer_list<std::pair<const char*, const char*>> keys) {
  for (const auto& [key, help] : keys) {
    c.keys.emplace_back(key);
    c.flags[key];
  }
  for (const auto& [key, help] : keys) c.app->add_option(std::string("--") + key, c.flags[key], help);
}

std::uint64_t seed_of(const Settings& s) { return get<std::uint64_t>(s, "seed", 0); }

void emit_csv(std::ostream& out, const std::string& header, const std::vector<std::string>& rows) {
  out << header << '\n';
  for (const auto& r : rows) out << r << '\n';
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

// ---- commands -------------------------------------------------------------

void cmd_bounds(const Settings& s, bool csv, std::ostream& out) {
  std::vector<int> ns;
  if (s.count("n")) {
    ns = get_list<int>(s, "n", {});
  } else {
    for (int n = get<int>(s, "min", 4); n <= get<int>(s, "max", 14); n += 2) ns.push_back(n);
  }
  for (int n : ns) {
    if (n < 4 || n > 16 || n % 2 != 0) throw InvalidArgument("bounds needs even n in [4, 16], got " + std::to_string(n));
  }
  std::vector<CloneBound> rows;
  for (int n : ns) rows.push_back(compute_clone_bound(n));
  if (csv) {
    std::vector<std::string> lines;
    for (const auto& r : rows) lines.push_back(to_csv_row(r));
    emit_csv(out, kBoundCsvHeader, lines);
    return;
  }
  json list = json::array();
  for (const auto& r : rows) {
    list.push_back({{"n", r.n},
                    {"q_norm", r.q_norm},
                    {"fidelity_bound", r.fidelity_bound},
                    {"pair_error_lower", r.pair_error_lower},
                    {"e_min", r.e_min},
                    {"e_max", r.e_max},
                    {"verified_range", r.verified_range}});
  }
  out << json{{"rows", list}}.dump(2) << '\n';
}

VerdictParameters threshold_for(int n, double beta, double eta, double epsilon) {
  const bool lossy = eta != 1.0 || epsilon != 0.0;
  const double e = lossy ? lossy_e_min(e_min(n), epsilon, eta) : e_min(n);
  if (!(e - beta > 0.0)) {
    throw InfeasiblePlan("beta = " + fmt("%g", beta) + " is not below the tolerable error " + fmt("%.6f", e) +
                             "; run `hmqm plan` for feasible parameters",
                         e - beta);
  }
  return VerdictParameters::for_noise(n, beta, eta, epsilon);
}

void cmd_simulate(const Settings& s, bool csv, std::ostream& out) {
  const int n = get<int>(s, "n", 8);
  const std::size_t l = get_size(s, "l", 2000);
  const std::size_t q = get_size(s, "q", 1000 * l);
  const double beta = get<double>(s, "beta", 0.0);
  const double eta = get<double>(s, "eta", 1.0);
  const double epsilon = get<double>(s, "epsilon", 0.0);
  const std::size_t trials = get_size(s, "trials", 100);
  const std::uint64_t seed = seed_of(s);
  if (trials == 0) throw InvalidArgument("trials must be positive");
  const VerdictParameters params = threshold_for(n, beta, eta, epsilon);
  const ChannelPtr channel = honest_noise(beta);

  std::size_t accepted = 0, aborted = 0, rejected = 0;
  std::size_t T = 0;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const std::uint64_t trial_seed = derive_seed(seed, trial);
    LocalBank bank(trial_seed);
    auto [coin, db] = bank.mint(n, q, l, params);
    T = db->T;
    Rng rng(derive_seed(trial_seed, 1));
    switch (holder_verify(coin, bank, params, channel, rng).status) {
      case VerifyStatus::Valid: ++accepted; break;
      case VerifyStatus::Aborted: ++aborted; break;
      case VerifyStatus::Invalid: ++rejected; break;
    }
  }
  const double t = static_cast<double>(trials);
  const bool lossy = eta != 1.0 || epsilon != 0.0;
  const double reject_bound = lossy ? std::exp(-2.0 * params.l_min(l) * params.delta * params.delta)
                                    : honest_fail_bound(l, params.delta);
  const double abort_bound = epsilon > 0.0 ? std::exp(-2.0 * static_cast<double>(l) * epsilon * epsilon)
                                           : (eta == 1.0 ? 0.0 : 1.0);
  json report = {{"n", n},
                 {"q", q},
                 {"l", l},
                 {"T", T},
                 {"beta", beta},
                 {"eta", eta},
                 {"epsilon", epsilon},
                 {"trials", trials},
                 {"seed", seed},
                 {"c", params.c},
                 {"delta", params.delta},
                 {"accepted", accepted},
                 {"aborted", aborted},
                 {"rejected", rejected},
                 {"accept_rate", static_cast<double>(accepted) / t},
                 {"abort_rate", static_cast<double>(aborted) / t},
                 {"reject_rate", static_cast<double>(rejected) / t},
                 {"reject_bound", reject_bound},
                 {"reject_envelope", envelope(reject_bound, trials)},
                 {"abort_bound", abort_bound},
                 {"abort_envelope", envelope(abort_bound, trials)}};
  if (!csv) {
    out << report.dump(2) << '\n';
    return;
  }
  const char* keys[] = {"n", "q", "l", "T", "beta", "eta", "epsilon", "trials", "seed", "c", "delta",
                        "accepted", "aborted", "rejected", "accept_rate", "abort_rate", "reject_rate",
                        "reject_bound", "reject_envelope", "abort_bound", "abort_envelope"};
  std::string header, row;
  for (const char* k : keys) {
    header += (header.empty() ? "" : ",") + std::string(k);
    row += (row.empty() ? "" : ",") + report[k].dump();
  }
  emit_csv(out, header, {row});
}

void cmd_forge(const Settings& s, bool csv, std::ostream& out) {
  const AttackStrategy strategy = AttackStrategy::parse(s.count("strategy") ? s.at("strategy") : "symmetric_clone");
  ForgeConfig config;
  config.n = get<int>(s, "n", 4);
  config.l = get_size(s, "l", 2000);
  config.q = get_optional_size(s, "q");
  config.trials = get_size(s, "trials", 100);
  config.seed = seed_of(s);
  const double beta = get<double>(s, "beta", 0.1);
  config.params = threshold_for(config.n, beta, get<double>(s, "eta", 1.0), get<double>(s, "epsilon", 0.0));
  const ForgeOutcome outcome = run_forging_experiment(strategy, config);
  if (csv) {
    emit_csv(out, kForgeCsvHeader, {to_csv_row(outcome)});
    return;
  }
  json report = to_json(outcome);
  report["beta"] = beta;
  report["delta"] = config.params.delta;
  report["seed"] = config.seed;
  report["e_max"] = e_max(config.n);
  out << report.dump(2) << '\n';
}

void cmd_plan(const Settings& s, bool csv, std::ostream& out) {
  const ParameterPlan plan = plan_parameters(get<int>(s, "n", 8), get<double>(s, "beta", 0.0),
                                             get<double>(s, "target", 1e-6), get<double>(s, "eta", 1.0),
                                             get<double>(s, "epsilon", 0.0), get_optional_size(s, "q"));
  const json j = to_json(plan);
  if (!csv) {
    out << j.dump(2) << '\n';
    return;
  }
  const char* keys[] = {"n", "beta", "eta", "epsilon", "target", "e_min", "e_min_effective", "c",
                        "delta", "l", "min_q", "q", "T", "correctness_bound", "forgery_bound"};
  std::string header, row;
  for (const char* k : keys) {
    header += (header.empty() ? "" : ",") + std::string(k);
    row += (row.empty() ? "" : ",") + j.at(k).dump();
  }
  emit_csv(out, header, {row});
}

void cmd_coherent(const Settings& s, bool csv, std::ostream& out) {
  const auto sweep =
      get_list<double>(s, "alpha_sq", {1e-4, 1e-3, 0.01, 0.05, 0.1, 0.2, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0});
  const int n = get<int>(s, "n", 8);
  const double eta = get<double>(s, "eta", 0.6);
  const double epsilon = get<double>(s, "epsilon", 0.01);
  std::vector<CoherentRow> rows;
  for (double mu : sweep) rows.push_back(coherent_row(mu, n, eta, epsilon));
  if (csv) {
    std::vector<std::string> lines;
    for (const auto& r : rows) lines.push_back(to_csv_row(r));
    emit_csv(out, kCoherentCsvHeader, lines);
    return;
  }
  auto opt = [](const std::optional<double>& v) -> json { return v ? json(*v) : json(nullptr); };
  json list = json::array();
  for (const auto& r : rows) {
    list.push_back({{"alpha_sq", r.mean_photon_number},
                    {"p0", r.stats.p0},
                    {"p1", r.stats.p1},
                    {"p2plus", r.stats.p2plus},
                    {"effective_eta", r.effective_eta},
                    {"e_prime_min", opt(r.e_prime_min)},
                    {"effective_adversary_error", opt(r.effective_adversary_error)}});
  }
  out << json{{"n", n}, {"eta", eta}, {"epsilon", epsilon}, {"rows", list}}.dump(2) << '\n';
}

void cmd_serve(const Settings& s, std::ostream& out) {
  const auto [host, port] = wire::parse_endpoint(s.count("listen") ? s.at("listen") : "127.0.0.1:7878");
  ServerOptions options;
  options.host = host;
  options.port = port;
  options.seed = seed_of(s);
  if (s.count("data")) {
    options.journal_path = s.at("data");
  } else if (const char* env = std::getenv("HMQM_DATA")) {
    options.journal_path = env;
  }

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  BankServer server(options);
  server.start();
  out << "listening on " << host << ":" << server.port() << std::endl;
  int received = 0;
  sigwait(&signals, &received);
  server.stop();
}

void cmd_verify(const Settings& s, bool csv, std::ostream& out) {
  if (!s.count("connect")) throw InvalidArgument("verify needs --connect host:port");
  const auto [host, port] = wire::parse_endpoint(s.at("connect"));
  const int n = get<int>(s, "n", 8);
  const std::size_t l = get_size(s, "l", 200);
  const std::size_t q = get_size(s, "q", 1000 * l);
  const double beta = get<double>(s, "beta", 0.0);
  const double eta = get<double>(s, "eta", 1.0);
  const double epsilon = get<double>(s, "epsilon", 0.0);
  const std::size_t count = get_size(s, "count", 1);
  const std::uint64_t seed = seed_of(s);
  threshold_for(n, beta, eta, epsilon);

  RemoteBank bank(host, port);
  MintedCoin minted = bank.mint(n, q, l, beta, eta, epsilon);
  const ChannelPtr channel = honest_noise(beta);

  json runs = json::array();
  std::vector<std::string> lines;
  for (std::size_t k = 0; k < count; ++k) {
    Rng rng(derive_seed(seed, k));
    const VerifyResult r = client_verify(bank, minted.coin, minted.descriptor.params, channel, rng);
    json run = {{"index", k}, {"status", to_string(r.status)}};
    run["verdict"] = r.verdict ? to_json(*r.verdict) : json(nullptr);
    runs.push_back(run);
    if (r.verdict) {
      const Verdict& v = *r.verdict;
      lines.push_back(std::to_string(k) + "," + to_string(r.status) + "," + std::to_string(v.s) + "," +
                      std::to_string(v.T) + "," + std::to_string(v.correct_count) + "," +
                      std::to_string(v.l_prime) + "," + fmt("%.6f", v.threshold) + "," + v.reason);
    } else {
      lines.push_back(std::to_string(k) + "," + to_string(r.status) + ",,,,,,");
    }
  }
  if (csv) {
    emit_csv(out, "index,status,s,T,correct_count,l_prime,threshold,reason", lines);
    return;
  }
  out << json{{"coin", wire::to_json(minted.descriptor, minted.coin)}, {"verifications", runs}}.dump(2) << '\n';
}

}  // namespace

std::map<std::string, std::string> parse_config(std::istream& in) {
  std::map<std::string, std::string> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidArgument("config line " + std::to_string(number) + " has no '='");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw InvalidArgument("config line " + std::to_string(number) + " has an empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

std::map<std::string, std::string> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path);
  return parse_config(in);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hidden-matching quantum money: bounds, simulations, attacks and a networked bank", "hmqm"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string seed_flag;
  std::string format = "json";
  std::string out_path;
  auto* seed_opt = app.add_option("--seed", seed_flag, "Base seed for every random choice");
  app.add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--out", out_path, "Write results to this file instead of stdout");

  std::map<std::string, Command> commands;
  auto make = [&](const char* name, const char* help, bool config) -> Command& {
    Command& c = commands[name];
    c.app = app.add_subcommand(name, help);
    c.takes_config = config;
    if (config) c.app->add_option("--config", c.config_path, "key=value file; flags override it");
    return c;
  };

  add_keys(make("bounds", "Cloning bound and tolerance table", false),
           {{"n", "Comma-separated even n"}, {"min", "Smallest n (default 4)"}, {"max", "Largest n (default 14)"}});
  add_keys(make("simulate", "Honest mint and verify lifecycles", true),
           {{"n", "State dimension"}, {"q", "Positions per coin"}, {"l", "Positions per verification"},
            {"beta", "Honest channel error"}, {"eta", "Detector efficiency"}, {"epsilon", "Loss slack"},
            {"trials", "Number of lifecycles"}});
  add_keys(make("forge", "Two-coin forging experiment", true),
           {{"strategy", "Attack, e.g. register_split+symmetric_clone"}, {"n", "State dimension"},
            {"q", "Positions per coin (default 2000 l)"}, {"l", "Positions per verification"},
            {"beta", "Noise level the thresholds are set for"}, {"eta", "Detector efficiency"},
            {"epsilon", "Loss slack"}, {"trials", "Number of forged pairs"}});
  add_keys(make("plan", "Smallest l and q for a security target", true),
           {{"n", "State dimension"}, {"beta", "Honest channel error"}, {"target", "Failure probability target"},
            {"eta", "Detector efficiency"}, {"epsilon", "Loss slack"}, {"q", "Report T for this q"}});
  add_keys(make("coherent", "Weak coherent source sweep", true),
           {{"alpha_sq", "Comma-separated mean photon numbers"}, {"n", "State dimension"},
            {"eta", "Detector efficiency"}, {"epsilon", "Loss slack"}});
  add_keys(make("serve", "Run the bank service", false),
           {{"listen", "host:port (port 0 picks one)"}, {"data", "Journal path (default $HMQM_DATA)"}});
  add_keys(make("verify", "Mint a coin on a running bank and verify it", true),
           {{"connect", "Bank host:port"}, {"n", "State dimension"}, {"q", "Positions per coin"},
            {"l", "Positions per verification"}, {"beta", "Honest channel error"}, {"eta", "Detector efficiency"},
            {"epsilon", "Loss slack"}, {"count", "Number of verifications"}});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInvalidParameters;
  }

  try {
    std::ofstream file;
    if (!out_path.empty()) {
      file.open(out_path);
      if (!file) throw IoError("cannot write " + out_path);
    }
    std::ostream& sink = out_path.empty() ? out : file;
    const bool csv = format == "csv";
    for (auto& [name, command] : commands) {
      if (!command.app->parsed()) continue;
      const Settings s = command.settings(seed_flag, seed_opt->count() > 0);
      if (name == "bounds") cmd_bounds(s, csv, sink);
      if (name == "simulate") cmd_simulate(s, csv, sink);
      if (name == "forge") cmd_forge(s, csv, sink);
      if (name == "plan") cmd_plan(s, csv, sink);
      if (name == "coherent") cmd_coherent(s, csv, sink);
      if (name == "serve") cmd_serve(s, sink);
      if (name == "verify") cmd_verify(s, csv, sink);
    }
    sink.flush();
    if (!sink) throw IoError("failed writing output");
    return kOk;
  } catch (const InfeasiblePlan& e) {
    err << "infeasible: " << e.what() << " (gap " << e.gap() << ")\n";
    return kInfeasiblePlan;
  } catch (const RemoteError& e) {
    err << "bank error: " << e.what() << '\n';
    return e.code() == "invalid_parameters" || e.code() == "bad_request" ? kInvalidParameters : kIoFailure;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kIoFailure;
  } catch (const std::invalid_argument& e) {
    err << "invalid parameters: " << e.what() << '\n';
    return kInvalidParameters;
  } catch (const CoinSpent& e) {
    err << "invalid parameters: " << e.what() << '\n';
    return kInvalidParameters;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace hmqm::cli
