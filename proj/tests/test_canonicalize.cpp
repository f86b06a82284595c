#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "checks.hpp"
#include "okbc/canonicalize.hpp"
#include "okbc/metrics.hpp"

namespace okbc {
namespace {

std::map<PhraseId, std::vector<double>> two_pairs() {
  // Within-pair distance 1 - cos(0.1415) ~= 0.01; across pairs ~0.8 or more.
  const double a = 0.1415;
  return {{0, {1.0, 0.0}},
          {1, {std::cos(a), std::sin(a)}},
          {2, {std::cos(1.8), std::sin(1.8)}},
          {3, {std::cos(1.8 + a), std::sin(1.8 + a)}}};
}

TEST(Hac, BoundaryThresholds) {
  std::mt19937_64 rng(1);
  const auto pts = check::random_points(rng, 12);
  std::vector<PhraseId> ids;
  for (const auto& [id, v] : pts) ids.push_back(id);
  std::map<PhraseId, std::vector<double>> distinct;
  for (const auto& [id, v] : two_pairs()) distinct.emplace(id, v);
  EXPECT_EQ(hac_complete_linkage(distinct, 0.0), singletons({0, 1, 2, 3}));
  EXPECT_EQ(hac_complete_linkage(pts, 2.0), Partition{ids});
  EXPECT_EQ(hac_complete_linkage(two_pairs(), 2.0).size(), 1u);
}

TEST(Hac, TwoPairsFixture) {
  const auto pts = two_pairs();
  EXPECT_NEAR(cosine_distance(pts.at(0), pts.at(1)), 0.01, 1e-4);
  EXPECT_GT(cosine_distance(pts.at(1), pts.at(2)), 0.8);
  EXPECT_EQ(hac_complete_linkage(pts, 0.1), (Partition{{0, 1}, {2, 3}}));
}

TEST(Hac, ZeroVectorIsRejected) {
  std::map<PhraseId, std::vector<double>> pts{{0, {1, 0}}, {1, {0, 0}}};
  EXPECT_THROW(hac_complete_linkage(pts, 0.5), ArgumentError);
}

TEST(Hac, MatchesNaiveAgglomerator) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto pts = check::random_points(rng, 1 + uniform_index(rng, 50));
    const double t = 2.0 * uniform01(rng);
    EXPECT_TRUE(check::hac_matches_naive(pts, t)) << "trial " << trial;
  }
}

TEST(Hac, HigherThresholdsCoarsen) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const auto pts = check::random_points(rng, 30);
    const auto dg = cosine_dendrogram(make_point_set(pts), 2.0);
    Partition prev = dg.cut(0.0);
    for (double t = 0.1; t <= 2.0; t += 0.1) {
      const auto cur = dg.cut(t);
      for (const auto& small : prev) {
        const bool contained = std::any_of(cur.begin(), cur.end(), [&](const auto& big) {
          return std::includes(big.begin(), big.end(), small.begin(), small.end());
        });
        EXPECT_TRUE(contained);
      }
      prev = cur;
    }
  }
}

TEST(Hac, CeilingAgreesWithDendrogramCut) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    const auto pts = check::random_points(rng, 25);
    const auto full = cosine_dendrogram(make_point_set(pts), 2.0);
    for (double t : {0.05, 0.3, 0.7, 1.2}) EXPECT_EQ(full.cut(t), hac_complete_linkage(pts, t));
  }
}

TEST(Hac, InsertionOrderDoesNotMatter) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 30; ++trial) {
    const auto pts = check::random_points(rng, 20);
    std::vector<std::pair<PhraseId, std::vector<double>>> items(pts.begin(), pts.end());
    shuffle(items, rng);
    std::map<PhraseId, std::vector<double>> shuffled;
    for (auto& [id, v] : items) shuffled.emplace(id, v);
    // Row order of a matrix-backed point set is permuted as well.
    Matrix m(items.size() + 200, 3);
    std::vector<PhraseId> ids;
    for (const auto& [id, v] : items) {
      std::copy(v.begin(), v.end(), m.row(id).begin());
      ids.push_back(id);
    }
    for (double t : {0.2, 0.6}) {
      const auto a = hac_complete_linkage(pts, t);
      EXPECT_EQ(a, hac_complete_linkage(shuffled, t));
      EXPECT_EQ(a, cosine_dendrogram(make_point_set(m, ids), t).cut(t));
    }
  }
}

GoldClustering gold_of(std::map<PhraseId, std::string> m) { return {Kind::NP, std::move(m)}; }

TEST(ChooseThreshold, SingleGridValue) {
  EXPECT_EQ(choose_threshold(two_pairs(), gold_of({{0, "x"}, {1, "y"}}), {0.35}).threshold, 0.35);
}

TEST(ChooseThreshold, RecoversSeparableGold) {
  const auto choice = choose_threshold(two_pairs(), gold_of({{0, "x"}, {1, "x"}, {2, "y"}, {3, "y"}}),
                                       default_threshold_grid());
  EXPECT_DOUBLE_EQ(choice.mean_f1, 1.0);
  EXPECT_EQ(choice.threshold, 0.05);  // smallest grid value that separates the pairs
  EXPECT_EQ(choice.scores.size(), 19u);
}

TEST(ChooseThreshold, TiesGoToSmallerThreshold) {
  const auto gold = gold_of({{0, "x"}, {1, "x"}, {2, "y"}, {3, "y"}});
  EXPECT_EQ(choose_threshold(two_pairs(), gold, {0.4, 0.3, 0.2}).threshold, 0.2);
}

TEST(ChooseThreshold, EmptyInputs) {
  EXPECT_THROW(choose_threshold(two_pairs(), GoldClustering{}, {0.1}), ConfigError);
  EXPECT_THROW(choose_threshold(two_pairs(), gold_of({{0, "x"}}), {}), ArgumentError);
}

TEST(DefaultGrid, NineteenEvenSteps) {
  const auto g = default_threshold_grid();
  ASSERT_EQ(g.size(), 19u);
  EXPECT_EQ(g.front(), 0.05);
  EXPECT_EQ(g[2], 0.15);
  EXPECT_EQ(g.back(), 0.95);
}

struct RepFixture {
  OpenKB kb;
  Matrix vecs{3, 2};
  RepFixture() {
    kb.add("zeta", "r", "zeta");  // frequency 2
    kb.add("zeta", "r", "alpha");  // zeta 3, alpha 1
    kb.add("beta", "r", "beta");
  }
};

TEST(Representative, WeightedMeanDecides) {
  RepFixture f;
  const auto zeta = *f.kb.np_vocab().find("zeta"), alpha = *f.kb.np_vocab().find("alpha");
  ASSERT_EQ(f.kb.np_vocab()[zeta].frequency, 3u);
  f.vecs.row(zeta)[0] = 1.0;
  f.vecs.row(alpha)[1] = 1.0;
  EXPECT_EQ(select_representative({zeta, alpha}, f.kb.np_vocab(), f.vecs), zeta);
  EXPECT_EQ(select_representative({alpha}, f.kb.np_vocab(), f.vecs), alpha);
}

TEST(Representative, IdenticalVectorsTieOnText) {
  RepFixture f;
  const auto zeta = *f.kb.np_vocab().find("zeta"), alpha = *f.kb.np_vocab().find("alpha");
  f.vecs.row(zeta)[0] = f.vecs.row(alpha)[0] = 0.5;
  EXPECT_EQ(select_representative({zeta, alpha}, f.kb.np_vocab(), f.vecs), alpha);
  EXPECT_THROW(select_representative({}, f.kb.np_vocab(), f.vecs), ArgumentError);
}

struct ObamaKb {
  OpenKB kb;
  ObamaKb() {
    kb.add("Barack Obama", "was president of", "US");
    kb.add("Obama", "born in", "Honolulu");
  }
  PhraseId np(const std::string& s) const { return *kb.np_vocab().find(s); }
  Clustering singleton_clusters(Kind k) const {
    Clustering c{k, {}, 0.0};
    for (const auto& p : kb.vocab(k)) c.clusters.push_back({{p.id}, p.id});
    return c;
  }
};

TEST(CanonicalizeKb, AliasesRewrittenToRepresentative) {
  ObamaKb o;
  Clustering np{Kind::NP, {{{o.np("Barack Obama"), o.np("Obama")}, o.np("Barack Obama")}}, 0.3};
  for (auto name : {"US", "Honolulu"}) np.clusters.push_back({{o.np(name)}, o.np(name)});
  np.check(o.kb.np_vocab().size());
  const auto ckb = canonicalize_kb(o.kb, np, o.singleton_clusters(Kind::REL));
  for (const auto& t : ckb.triples) EXPECT_EQ(t.canonical.s, o.np("Barack Obama"));
  EXPECT_TRUE(ckb.duplicates.empty());
  std::ostringstream out;
  write_canonical_kb(out, o.kb, ckb);
  EXPECT_NE(out.str().find("\"canonical_subject\":\"Barack Obama\""), std::string::npos);
}

TEST(CanonicalizeKb, SingletonsAreIdentity) {
  ObamaKb o;
  const auto ckb = canonicalize_kb(o.kb, o.singleton_clusters(Kind::NP), o.singleton_clusters(Kind::REL));
  for (const auto& t : ckb.triples) {
    EXPECT_EQ(t.canonical, t.original);
    EXPECT_FALSE(t.duplicate);
  }
}

TEST(CanonicalizeKb, CollisionsAreReported) {
  OpenKB kb;
  kb.add("Obama", "born in", "Hawaii");
  kb.add("Barack Obama", "born in", "Hawaii");
  const auto np = [&](const char* s) { return *kb.np_vocab().find(s); };
  Clustering c{Kind::NP, {{{np("Obama"), np("Barack Obama")}, np("Obama")}, {{np("Hawaii")}, np("Hawaii")}}, 0.2};
  Clustering r{Kind::REL, {{{0}, 0}}, 0.2};
  const auto ckb = canonicalize_kb(kb, c, r);
  ASSERT_EQ(ckb.triples.size(), 2u);
  EXPECT_TRUE(ckb.triples[0].duplicate && ckb.triples[1].duplicate);
  ASSERT_EQ(ckb.duplicates.size(), 1u);
  EXPECT_EQ(ckb.duplicates.begin()->second, (std::vector<std::int64_t>{0, 1}));

  Clustering partial{Kind::NP, {{{np("Obama")}, np("Obama")}}, 0.2};
  EXPECT_THROW(canonicalize_kb(kb, partial, r), InvariantError);
}

TEST(Clusters, FileRoundTrip) {
  ObamaKb o;
  Clustering np{Kind::NP, {{{o.np("Barack Obama"), o.np("Obama")}, o.np("Obama")}}, 0.25};
  for (auto name : {"US", "Honolulu"}) np.clusters.push_back({{o.np(name)}, o.np(name)});
  std::stringstream buf;
  write_clusters(buf, np, o.kb);
  auto back = read_clusters(buf, o.kb, Kind::NP);
  EXPECT_EQ(back.partition(), np.partition());
  EXPECT_EQ(back.threshold_used, 0.25);
}

// Gold labels must not influence side information, training or clustering.
TEST(GoldIsolation, RandomGoldLeavesOutputsIdentical) {
  const auto build = [](std::uint64_t gold_seed) {
    std::mt19937_64 rng(gold_seed);
    OpenKB kb;
    const std::vector<std::string> nps = {"Cities", "city", "Warren Buffett", "Buffett", "apple", "apples", "pear"};
    for (int i = 0; i < 25; ++i) {
      Triple t;
      t.gold_subject = "g" + std::to_string(uniform_index(rng, 4));
      t.gold_object = "g" + std::to_string(uniform_index(rng, 4));
      kb.add(nps[i % nps.size()], "rel" + std::to_string(i % 3), nps[(i * 3 + 1) % nps.size()], t);
    }
    SideInfoConfig sc;
    sc.morph = sc.idf = sc.amie = true;
    const auto side = assemble_side_info(kb, sc);
    HyperParams h;
    h.dim = 8;
    h.epochs = 5;
    h.batch_size = 4;
    const auto emb = train(kb, side.collection, h, init_embeddings(kb, nullptr, h.dim, h.seed)).embeddings;
    return std::tuple{side_info_to_json(side, kb).dump(), emb, cluster_vocabulary(kb, emb, Kind::NP, 0.4),
                      cluster_vocabulary(kb, emb, Kind::REL, 0.4)};
  };
  EXPECT_EQ(build(1), build(2));
}

}  // namespace
}  // namespace okbc
