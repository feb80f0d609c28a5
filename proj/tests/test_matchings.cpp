#include <gtest/gtest.h>

#include "hmqm/error.hpp"
#include "hmqm/matchings.hpp"
#include "oracles.hpp"

using namespace hmqm;

TEST(BuildDisjointSet, TwoNodesHaveOneMatching) {
  const auto set = build_disjoint_set(2);
  ASSERT_EQ(set.size(), 1u);
  EXPECT_EQ(set.matchings[0], Matching(2, {{1, 2}}));
}

TEST(BuildDisjointSet, FourNodesGiveTheUniqueFactorization) {
  const auto set = build_disjoint_set(4);
  ASSERT_EQ(set.size(), 3u);
  EXPECT_EQ(set.relation(1), Matching(4, {{1, 2}, {3, 4}}));
  EXPECT_EQ(set.relation(2), Matching(4, {{1, 3}, {2, 4}}));
  EXPECT_EQ(set.relation(3), Matching(4, {{1, 4}, {2, 3}}));
}

TEST(BuildDisjointSet, EightNodesCoverEveryPairOnce) {
  const auto set = build_disjoint_set(8);
  EXPECT_EQ(set.size(), 7u);
  EXPECT_EQ(oracle::pairs_of(set), oracle::complete_graph(8));
  EXPECT_TRUE(validate(set).ok);
}

TEST(BuildDisjointSet, EveryEvenSizeUpToSixteenIsAOneFactorization) {
  for (int n = 2; n <= 16; n += 2) {
    const auto set = build_disjoint_set(n);
    EXPECT_TRUE(validate(set).ok) << n;
    EXPECT_EQ(oracle::pairs_of(set), oracle::complete_graph(n)) << n;
  }
}

TEST(BuildDisjointSet, IsDeterministic) { EXPECT_EQ(to_json(build_disjoint_set(10)), to_json(build_disjoint_set(10))); }

TEST(BuildDisjointSet, RejectsOddAndNonPositive) {
  EXPECT_THROW(build_disjoint_set(5), InvalidArgument);
  EXPECT_THROW(build_disjoint_set(0), InvalidArgument);
  EXPECT_THROW(build_disjoint_set(-2), InvalidArgument);
}

TEST(Validate, AcceptsConstructorOutput) { EXPECT_TRUE(validate(build_disjoint_set(6)).ok); }

TEST(Validate, RejectsRepeatedPairAndNamesIt) {
  DisjointMatchingSet set{4, {Matching(4, {{1, 2}, {3, 4}}), Matching(4, {{1, 2}, {3, 4}}), Matching(4, {{1, 4}, {2, 3}})}};
  const auto report = validate(set);
  EXPECT_FALSE(report.ok);
  EXPECT_NE(report.diagnostic.find("(1,2)"), std::string::npos) << report.diagnostic;
}

TEST(Validate, RejectsMissingMatching) {
  auto set = build_disjoint_set(6);
  set.matchings.pop_back();
  EXPECT_FALSE(validate(set).ok);
}

TEST(Matching, RejectsImperfectInput) {
  EXPECT_THROW(Matching(4, {{1, 2}, {2, 3}}), InvalidArgument);
  EXPECT_THROW(Matching(4, {{1, 1}, {2, 3}}), InvalidArgument);
  EXPECT_THROW(Matching(4, {{1, 2}}), InvalidArgument);
  EXPECT_THROW(Matching(4, {{1, 2}, {3, 5}}), InvalidArgument);
}

TEST(Matching, StoresPairsCanonically) {
  const Matching m(4, {{4, 3}, {2, 1}});
  ASSERT_EQ(m.pairs().size(), 2u);
  EXPECT_EQ(m.pairs()[0], (NodePair{1, 2}));
  EXPECT_EQ(m.pairs()[1], (NodePair{3, 4}));
  EXPECT_TRUE(m.contains(4, 3));
}

TEST(Partner, Examples) {
  EXPECT_EQ(Matching(4, {{1, 2}, {3, 4}}).partner(3), 4);
  EXPECT_EQ(Matching(4, {{1, 4}, {2, 3}}).partner(1), 4);
  EXPECT_THROW(Matching(4, {{1, 4}, {2, 3}}).partner(5), InvalidArgument);
  EXPECT_THROW(Matching(4, {{1, 4}, {2, 3}}).partner(0), InvalidArgument);
}

TEST(Partner, IsAnInvolutionOnEveryMatching) {
  for (int n = 2; n <= 16; n += 2) {
    for (const auto& m : build_disjoint_set(n).matchings) {
      for (int i = 1; i <= n; ++i) {
        EXPECT_NE(m.partner(i), i);
        EXPECT_EQ(m.partner(m.partner(i)), i);
      }
    }
  }
}

TEST(Json, RoundTrips) {
  const auto set = build_disjoint_set(6);
  const auto j = to_json(set);
  EXPECT_EQ(j.at("n"), 6);
  EXPECT_EQ(j.at("matchings").size(), 5u);
  EXPECT_EQ(j.at("matchings")[0].size(), 3u);
  EXPECT_EQ(j.at("matchings")[0][0].size(), 2u);
  const auto back = disjoint_set_from_json(j);
  EXPECT_EQ(back.n, set.n);
  EXPECT_EQ(back.matchings, set.matchings);
}
