#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "checks.hpp"
#include "okbc/side_info.hpp"

namespace okbc {
namespace {

PhraseId np(const OpenKB& kb, const std::string& s) { return *kb.np_vocab().find(s); }
PhraseId rel(const OpenKB& kb, const std::string& s) { return *kb.rel_vocab().find(s); }

OpenKB np_kb(const std::vector<std::string>& nps) {
  OpenKB kb;
  for (const auto& n : nps) kb.add(n, "r", n);
  return kb;
}

TEST(MorphNormalize, RuleExamples) {
  EXPECT_EQ(morph_normalize("The Cities"), "city");
  EXPECT_EQ(morph_normalize("obama"), "obama");
  EXPECT_EQ(morph_normalize("was running"), "wa run");
  EXPECT_EQ(morph_normalize("  An   Apple "), "apple");
  EXPECT_EQ(morph_normalize("buses"), "bus");
  EXPECT_EQ(morph_normalize("studied"), "study");
  EXPECT_EQ(morph_normalize("glass"), "glass");
  EXPECT_EQ(morph_normalize("the"), "the");
}

TEST(MorphNormalize, IdempotentOnFuzzCorpus) {
  std::mt19937_64 rng(3);
  const std::string alphabet = "aeiousdngtbr ";
  const std::vector<std::string> seeds = {"The Cities", "was running", "gases", "classes", "studies",
                                          "breeds",     "an the a",    "ss",    "ing",     "hopping"};
  for (const auto& s : seeds) EXPECT_EQ(morph_normalize(morph_normalize(s)), morph_normalize(s)) << s;
  for (int trial = 0; trial < 2000; ++trial) {
    std::string s;
    const auto len = 1 + uniform_index(rng, 14);
    for (std::size_t i = 0; i < len; ++i) s.push_back(alphabet[uniform_index(rng, alphabet.size())]);
    const auto once = morph_normalize(s);
    EXPECT_EQ(morph_normalize(once), once) << "input '" << s << "'";
  }
}

TEST(MorphEquivalences, CollisionsBecomePairs) {
  auto kb = np_kb({"Cities", "city", "London"});
  auto pairs = morph_equivalences(kb, Kind::NP);
  EXPECT_EQ(pairs.size(), 1u);
  EXPECT_TRUE(pairs.contains(np(kb, "Cities"), np(kb, "city")));

  EXPECT_TRUE(morph_equivalences(np_kb({"alpha", "beta", "gamma"}), Kind::NP).empty());

  auto apples = np_kb({"apple", "Apple", "apples"});
  EXPECT_EQ(morph_equivalences(apples, Kind::NP).size(), 3u);
}

TEST(DocumentFrequency, CountsDistinctNpStrings) {
  auto kb = np_kb({"Warren Buffett", "Buffett", "Warren Beatty"});
  auto df = build_df(kb);
  EXPECT_EQ(df("warren"), 2u);
  EXPECT_EQ(df("buffett"), 2u);
  EXPECT_EQ(df("beatty"), 1u);

  auto beatles = np_kb({"The Beatles"});
  EXPECT_EQ(build_df(beatles).df.count("the"), 0u);
  EXPECT_EQ(build_df(beatles)("beatles"), 1u);
}

TEST(IdfOverlap, HandEvaluatedExample) {
  DocumentFrequency df;
  df.df = {{"warren", 1}, {"buffett", 2}};
  // Shared mass 1/ln 3 over total mass 1/ln 2 + 1/ln 3.
  const double expected = (1.0 / std::log(3.0)) / (1.0 / std::log(2.0) + 1.0 / std::log(3.0));
  EXPECT_NEAR(expected, 0.3868, 1e-4);
  EXPECT_NEAR(idf_overlap_score("Warren Buffett", "Buffett", df), expected, 1e-15);
  EXPECT_DOUBLE_EQ(idf_overlap_score("Warren Buffett", "buffett warren", df), 1.0);
  EXPECT_DOUBLE_EQ(idf_overlap_score("Warren", "Buffett", df), 0.0);
  EXPECT_DOUBLE_EQ(idf_overlap_score("the", "of", df), 0.0);
}

TEST(IdfOverlap, SymmetricAndBounded) {
  auto kb = np_kb({"new york city", "york", "new jersey", "city of new york", "jersey city", "boston"});
  auto df = build_df(kb);
  for (PhraseId a = 0; a < kb.np_vocab().size(); ++a)
    for (PhraseId b = 0; b < kb.np_vocab().size(); ++b) {
      const double s = idf_overlap_score(kb, a, b, df);
      EXPECT_EQ(s, idf_overlap_score(kb, b, a, df));
      EXPECT_GE(s, 0.0);
      EXPECT_LE(s, 1.0);
    }
}

TEST(IdfEquivalences, CutoffBoundaries) {
  auto kb = np_kb({"Warren Buffett", "Buffett", "Warren Beatty"});
  auto df = build_df(kb);
  // warren and buffett both have df 2 here, so the score is exactly 1/2.
  auto at_03 = idf_equivalences(kb, df, 0.3);
  EXPECT_TRUE(at_03.contains(np(kb, "Warren Buffett"), np(kb, "Buffett")));
  EXPECT_TRUE(idf_equivalences(kb, df, 1.0).empty());
  EXPECT_EQ(idf_equivalences(kb, df, 0.0).size(), 2u);  // both token-sharing pairs

  auto same = np_kb({"Apple Inc", "apple inc", "pear"});
  auto one = idf_equivalences(same, build_df(same), 1.0);
  EXPECT_EQ(one.size(), 1u);
  EXPECT_THROW(idf_equivalences(kb, df, 1.5), ArgumentError);
}

TEST(IdfEquivalences, GivenDfReproducesDerivedScore) {
  auto kb = np_kb({"Warren Buffett", "Buffett", "Warren Beatty"});
  DocumentFrequency df;
  df.df = {{"warren", 1}, {"buffett", 2}, {"beatty", 1}};
  // Warren Buffett / Warren Beatty: (1/ln 2) / (2/ln 2 + 1/ln 3), about 0.3801.
  const double beatty = (1.0 / std::log(2.0)) / (2.0 / std::log(2.0) + 1.0 / std::log(3.0));
  EXPECT_NEAR(idf_overlap_score("Warren Buffett", "Warren Beatty", df), beatty, 1e-15);
  EXPECT_EQ(idf_equivalences(kb, df, 0.3).size(), 2u);
  auto pairs = idf_equivalences(kb, df, 0.385);
  EXPECT_EQ(pairs.size(), 1u);
  EXPECT_TRUE(pairs.contains(np(kb, "Warren Buffett"), np(kb, "Buffett")));
}

TEST(Ppdb, PairsPhrasesSharingARoot) {
  auto kb = np_kb({"management", "Administration", "dog"});
  std::istringstream in("management\tadministration\t0.9\n");
  auto pairs = ppdb_equivalences(in, 0.5, kb, Kind::NP);
  EXPECT_EQ(pairs.size(), 1u);
  EXPECT_TRUE(pairs.contains(np(kb, "management"), np(kb, "Administration")));
}

TEST(Ppdb, TransitiveClosureAndThreshold) {
  auto kb = np_kb({"a", "c", "z"});
  std::istringstream in("a\tb\t0.9\nb\tc\t0.9\nc\tz\t0.1\nbroken row\n");
  LoadReport report;
  auto pairs = ppdb_equivalences(in, 0.5, kb, Kind::NP, &report);
  EXPECT_EQ(pairs.size(), 1u);
  EXPECT_TRUE(pairs.contains(np(kb, "a"), np(kb, "c")));
  EXPECT_EQ(report.malformed, 1u);
  EXPECT_EQ(report.kept, 2u);
}

TEST(Ppdb, ClosureProperty) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> words;
    for (int i = 0; i < 8; ++i) words.push_back("w" + std::to_string(i));
    auto kb = np_kb({words.begin(), words.begin() + 6});
    std::ostringstream rows;
    for (int r = 0; r < 6; ++r)
      rows << words[uniform_index(rng, 8)] << '\t' << words[uniform_index(rng, 8)] << "\t0.9\n";
    std::istringstream in(rows.str());
    auto pairs = ppdb_equivalences(in, 0.5, kb, Kind::NP);
    for (const auto& [a, b] : pairs)
      for (const auto& [c, d] : pairs) {
        if (b == c && a != d) {
          EXPECT_TRUE(pairs.contains(a, d));
        }
        if (a == c && b != d) {
          EXPECT_TRUE(pairs.contains(b, d));
        }
      }
  }
}

TEST(Synsets, SharedSynsetPairsPhrases) {
  auto kb = np_kb({"picture", "image", "dog", "cat"});
  std::istringstream in("picture\tvisualize.v.01,painting.n.01\nimage\tvisualize.v.01\ndog\tdog.n.01\ncat\tcat.n.01\n");
  auto pairs = synset_equivalences(in, kb, Kind::NP);
  EXPECT_EQ(pairs.size(), 1u);
  EXPECT_TRUE(pairs.contains(np(kb, "picture"), np(kb, "image")));
  std::istringstream bad("no tab here\n");
  EXPECT_THROW(synset_equivalences(bad, kb, Kind::NP), ParseError);
}

TEST(EntityLinks, SameLinkPairsAndMajorityRules) {
  OpenKB kb;
  const auto linked = [](std::optional<std::string> s, std::optional<std::string> o) {
    Triple t;
    t.subject_link = std::move(s);
    t.object_link = std::move(o);
    return t;
  };
  kb.add("US", "r", "x", linked("United_States", std::nullopt));
  kb.add("America", "r", "y", linked("United_States", std::nullopt));
  kb.add("Paris", "r", "z", linked("Paris", std::nullopt));
  kb.add("Paris", "r", "z2", linked("Paris", std::nullopt));
  kb.add("Paris", "r", "z3", linked("Paris_Hilton", std::nullopt));
  kb.add("Hilton", "r", "z4", linked("Paris_Hilton", std::nullopt));
  kb.add("Tie", "r", "q", linked("A", "B"));
  kb.add("Tie", "r", "q2", linked("B", std::nullopt));
  kb.add("Other", "r", "q4", linked("A", std::nullopt));
  auto pairs = entity_link_equivalences(kb);
  EXPECT_TRUE(pairs.contains(np(kb, "US"), np(kb, "America")));
  EXPECT_FALSE(pairs.contains(np(kb, "Paris"), np(kb, "Hilton")));  // Paris is linked to Paris (2 vs 1)
  EXPECT_FALSE(pairs.contains(np(kb, "Tie"), np(kb, "Other")));     // A and B tie 1-1: no link
  EXPECT_EQ(pairs.covered().count(np(kb, "x")), 0u);
}

TEST(Kbp, SharedCategoryPairsRelations) {
  OpenKB kb;
  kb.add("Obama", "was born in", "Honolulu");
  kb.add("Obama", "born in", "Hawaii");
  kb.add("Obama", "lives in", "DC");
  kb.add("Obama", "works at", "White House");
  std::istringstream in("was born in\tper:city_of_birth\nborn in\tper:city_of_birth\nlives in\tper:residence\n");
  auto pairs = kbp_equivalences(in, kb);
  EXPECT_EQ(pairs.size(), 1u);
  EXPECT_TRUE(pairs.contains(rel(kb, "was born in"), rel(kb, "born in")));
}

TEST(Amie, DerivedExample) {
  OpenKB kb;
  kb.add("a", "r1", "b");
  kb.add("a", "r2", "b");
  kb.add("c", "r1", "d");
  kb.add("c", "r2", "d");
  auto pairs = amie_mine(kb, 2, 0.2);
  EXPECT_EQ(pairs.size(), 1u);
  EXPECT_TRUE(pairs.contains(rel(kb, "r1"), rel(kb, "r2")));
  for (const auto& r : amie_rules(kb)) {
    EXPECT_EQ(r.support, 2u);
    EXPECT_DOUBLE_EQ(r.confidence, 1.0);
  }
}

TEST(Amie, SupportBoundary) {
  OpenKB kb;
  for (int i = 0; i < 10; ++i) kb.add("x" + std::to_string(i), "r1", "y" + std::to_string(i));
  kb.add("x0", "r2", "y0");
  EXPECT_TRUE(amie_mine(kb, 2, 0.2).empty());

  OpenKB single;
  single.add("a", "r1", "b");
  single.add("a", "r2", "b");
  EXPECT_TRUE(amie_mine(single, 2, 0.2).empty());
}

TEST(Amie, CountsMorphCanonicalPairs) {
  OpenKB kb;
  kb.add("The Cities", "r1", "b");
  kb.add("city", "r2", "b");
  kb.add("c", "r1", "d");
  kb.add("c", "r2", "ds");
  EXPECT_EQ(amie_mine(kb, 2, 0.2).size(), 1u);
}

TEST(Amie, MatchesBruteForceOnRandomKbs) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const auto kb = check::random_rule_kb(rng);
    EXPECT_TRUE(check::amie_matches_brute(kb)) << "trial " << trial;
  }
}

TEST(PairSets, SymmetricAndIrreflexive) {
  EquivalencePairSet s("x", Kind::NP);
  EXPECT_FALSE(s.insert(3, 3));
  EXPECT_TRUE(s.insert(5, 2));
  EXPECT_FALSE(s.insert(2, 5));
  EXPECT_TRUE(s.contains(2, 5));
  EXPECT_TRUE(s.contains(5, 2));
  EXPECT_EQ(s.size(), 1u);
}

TEST(Assemble, ProvidersFollowConfig) {
  OpenKB kb;
  Triple t;
  t.subject_link = "United_States";
  kb.add("US", "r", "x", t);
  kb.add("America", "r", "y", t);

  auto none = assemble_side_info(kb, SideInfoConfig{});
  EXPECT_TRUE(none.collection.np_sources.empty());
  EXPECT_TRUE(none.collection.rel_sources.empty());

  SideInfoConfig el;
  el.entity_linking = true;
  auto r = assemble_side_info(kb, el);
  ASSERT_EQ(r.collection.np_sources.size(), 1u);
  EXPECT_TRUE(r.collection.rel_sources.empty());
  ASSERT_EQ(r.coverage.size(), 1u);
  EXPECT_EQ(r.coverage[0].phrases_covered, 2u);
  EXPECT_DOUBLE_EQ(r.coverage[0].fraction_covered, 0.5);

  SideInfoConfig missing;
  missing.ppdb_path = "/nonexistent/ppdb.tsv";
  EXPECT_THROW(assemble_side_info(kb, missing), ConfigError);
}

TEST(Assemble, JsonRoundTrip) {
  OpenKB kb;
  kb.add("Cities", "born in", "city");
  kb.add("a", "was born in", "b");
  SideInfoConfig cfg;
  cfg.morph = true;
  cfg.idf = true;
  auto r = assemble_side_info(kb, cfg);
  auto back = side_info_from_json(side_info_to_json(r, kb), kb);
  ASSERT_EQ(back.np_sources.size(), r.collection.np_sources.size());
  for (std::size_t i = 0; i < back.np_sources.size(); ++i) EXPECT_EQ(back.np_sources[i], r.collection.np_sources[i]);
}

}  // namespace
}  // namespace okbc
