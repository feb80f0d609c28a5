#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace hmqm {

/// Unordered pair of nodes, stored canonically with first < second.
/// Nodes are 1-based throughout the library.
struct NodePair {
  int first = 0;
  int second = 0;

  friend bool operator==(const NodePair&, const NodePair&) = default;
  friend auto operator<=>(const NodePair&, const NodePair&) = default;
};

/// A perfect matching on [n]: n/2 disjoint pairs covering every node once.
class Matching {
 public:
  /// Throws InvalidArgument unless `pairs` is a perfect matching on [n].
  Matching(int n, std::vector<std::pair<int, int>> pairs);

  int n() const noexcept { return n_; }
  std::span<const NodePair> pairs() const noexcept { return pairs_; }

  /// The node matched with `i`. Throws InvalidArgument for i outside [1, n].
  int partner(int i) const;

  /// Index k (0-based) of the pair containing `i`.
  std::size_t pair_index(int i) const;

  bool contains(int i, int j) const;

  friend bool operator==(const Matching& a, const Matching& b) {
    return a.n_ == b.n_ && a.pairs_ == b.pairs_;
  }

 private:
  int n_;
  std::vector<NodePair> pairs_;
  std::vector<int> partner_;  // partner_[i - 1]
};

/// An ordered family of matchings, meant to be a maximal pairwise disjoint set
/// (a 1-factorization of K_n). Not validated on construction; see validate().
/// Relations are addressed by alpha in [1, n - 1] in construction order.
struct DisjointMatchingSet {
  int n = 0;
  std::vector<Matching> matchings;

  std::size_t size() const noexcept { return matchings.size(); }

  /// Matching number `alpha` (1-based). Throws InvalidArgument when out of range.
  const Matching& relation(std::size_t alpha) const;
};

struct ValidationReport {
  bool ok = true;
  std::string diagnostic;

  explicit operator bool() const noexcept { return ok; }
};

/// Round-robin 1-factorization of K_n. Deterministic; n must be even and >= 2.
DisjointMatchingSet build_disjoint_set(int n);

/// True iff the set has n - 1 perfect matchings and no pair is repeated. On
/// failure the diagnostic names the first offending pair or count.
ValidationReport validate(const DisjointMatchingSet& set);

/// {"n": n, "matchings": [[[i, j], ...], ...]}
nlohmann::json to_json(const DisjointMatchingSet& set);
DisjointMatchingSet disjoint_set_from_json(const nlohmann::json& j);

}  // namespace hmqm
