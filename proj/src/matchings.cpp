#include "hmqm/matchings.hpp"

#include <algorithm>
#include <set>

#include "hmqm/error.hpp"

namespace hmqm {

namespace {

void require_even_order(int n) {
  if (n < 2 || n % 2 != 0) {
    throw InvalidArgument("matching order must be an even integer >= 2, got " + std::to_string(n));
  }
}

std::string pair_str(const NodePair& p) {
  return "(" + std::to_string(p.first) + "," + std::to_string(p.second) + ")";
}

}  // namespace

Matching::Matching(int n, std::vector<std::pair<int, int>> pairs) : n_(n), partner_(n > 0 ? n : 0, 0) {
  require_even_order(n);
  if (pairs.size() != static_cast<std::size_t>(n / 2)) {
    throw InvalidArgument("perfect matching on " + std::to_string(n) + " nodes needs " +
                          std::to_string(n / 2) + " pairs, got " + std::to_string(pairs.size()));
  }
  pairs_.reserve(pairs.size());
  for (auto [a, b] : pairs) {
    if (a < 1 || a > n || b < 1 || b > n) {
      throw InvalidArgument("matching node out of range [1, n]");
    }
    if (a == b) {
      throw InvalidArgument("matching pair joins node " + std::to_string(a) + " to itself");
    }
    if (partner_[a - 1] != 0 || partner_[b - 1] != 0) {
      throw InvalidArgument("node appears in two pairs of one matching");
    }
    partner_[a - 1] = b;
    partner_[b - 1] = a;
    pairs_.push_back({std::min(a, b), std::max(a, b)});
  }
  std::sort(pairs_.begin(), pairs_.end());
}

int Matching::partner(int i) const {
  if (i < 1 || i > n_) {
    throw InvalidArgument("node index " + std::to_string(i) + " outside [1, " + std::to_string(n_) + "]");
  }
  return partner_[i - 1];
}

std::size_t Matching::pair_index(int i) const {
  const int lo = std::min(i, partner(i));
  auto it = std::lower_bound(pairs_.begin(), pairs_.end(), NodePair{lo, 0});
  return static_cast<std::size_t>(it - pairs_.begin());
}

bool Matching::contains(int i, int j) const {
  if (i < 1 || i > n_ || j < 1 || j > n_) return false;
  return partner_[i - 1] == j;
}

const Matching& DisjointMatchingSet::relation(std::size_t alpha) const {
  if (alpha < 1 || alpha > matchings.size()) {
    throw InvalidArgument("relation index " + std::to_string(alpha) + " outside [1, " +
                          std::to_string(matchings.size()) + "]");
  }
  return matchings[alpha - 1];
}

DisjointMatchingSet build_disjoint_set(int n) {
  require_even_order(n);
  // Node n is fixed; round c pairs it with c and pairs a with b whenever
  // a + b = 2c (mod n - 1), residues represented in [1, n - 1].
  const int m = n - 1;
  DisjointMatchingSet set{n, {}};
  set.matchings.reserve(static_cast<std::size_t>(m));
  for (int c = m; c >= 1; --c) {
    std::vector<std::pair<int, int>> pairs{{c, n}};
    for (int a = 1; a <= m; ++a) {
      if (a == c) continue;
      int b = ((2 * c - a) % m + m) % m;
      if (b == 0) b = m;
      if (a < b) pairs.emplace_back(a, b);
    }
    set.matchings.emplace_back(n, std::move(pairs));
  }
  return set;
}

ValidationReport validate(const DisjointMatchingSet& set) {
  if (set.n < 2 || set.n % 2 != 0) {
    return {false, "order " + std::to_string(set.n) + " is not an even integer >= 2"};
  }
  for (std::size_t a = 0; a < set.matchings.size(); ++a) {
    if (set.matchings[a].n() != set.n) {
      return {false, "matching " + std::to_string(a + 1) + " has order " + std::to_string(set.matchings[a].n())};
    }
  }
  std::set<NodePair> seen;
  for (std::size_t a = 0; a < set.matchings.size(); ++a) {
    for (const NodePair& p : set.matchings[a].pairs()) {
      if (!seen.insert(p).second) {
        return {false, "pair " + pair_str(p) + " repeated in matching " + std::to_string(a + 1)};
      }
    }
  }
  const auto expected = static_cast<std::size_t>(set.n - 1);
  if (set.matchings.size() != expected) {
    return {false, "expected " + std::to_string(expected) + " matchings, got " + std::to_string(set.matchings.size())};
  }
  return {};
}

nlohmann::json to_json(const DisjointMatchingSet& set) {
  nlohmann::json ms = nlohmann::json::array();
  for (const Matching& m : set.matchings) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const NodePair& p : m.pairs()) pairs.push_back({p.first, p.second});
    ms.push_back(std::move(pairs));
  }
  return {{"n", set.n}, {"matchings", std::move(ms)}};
}

DisjointMatchingSet disjoint_set_from_json(const nlohmann::json& j) {
  DisjointMatchingSet set{j.at("n").get<int>(), {}};
  for (const auto& m : j.at("matchings")) {
    std::vector<std::pair<int, int>> pairs;
    for (const auto& p : m) pairs.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
    set.matchings.emplace_back(set.n, std::move(pairs));
  }
  return set;
}

}  // namespace hmqm
