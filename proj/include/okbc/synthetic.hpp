#pragma once

// Desk-scale synthetic Open KBs with known gold clusters and optional
// resource files of controllable coverage and precision.

#include <array>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "common.hpp"
#include "kb_model.hpp"

namespace okbc {

struct SynthOptions {
  std::size_t n_entities = 20;
  std::size_t aliases_per_entity = 3;
  std::size_t n_relations = 5;
  std::size_t paraphrases_per_relation = 2;
  std::size_t n_triples = 200;
  double noise = 0.0;  // probability that a triple's object is replaced by a random entity
  std::uint64_t seed = 0;
  // Resource files: fraction of within-group pairs listed, and fraction of
  // listed pairs that are correct.
  double side_coverage = 0.5;
  double side_precision = 1.0;

  void validate() const {
    if (n_entities < 2 || aliases_per_entity == 0 || n_relations == 0 || paraphrases_per_relation == 0 ||
        n_triples == 0)
      throw ConfigError("synthetic KB sizes must be positive (and at least two entities)");
    if (!(noise >= 0.0 && noise <= 1.0)) throw ConfigError("noise must lie in [0, 1]");
    if (!(side_coverage >= 0.0 && side_coverage <= 1.0)) throw ConfigError("side_coverage must lie in [0, 1]");
    if (!(side_precision > 0.0 && side_precision <= 1.0)) throw ConfigError("side_precision must lie in (0, 1]");
  }
};

struct SyntheticKb {
  OpenKB kb;
  std::vector<std::vector<std::string>> entity_aliases;      // entity -> surface forms
  std::vector<std::vector<std::string>> relation_surfaces;   // relation group -> surface forms
  std::vector<std::tuple<std::string, std::string, double>> paraphrase_rows;  // PPDB-style
  std::vector<std::pair<std::string, std::string>> category_rows;            // KBP-style

  static std::string entity_label(std::size_t e) { return "E" + std::to_string(e); }
  static std::string relation_label(std::size_t r) { return "R" + std::to_string(r); }
};

namespace detail {

template <class Rng>
std::string pseudo_word(Rng& rng, std::size_t min_syllables = 2) {
  static constexpr std::string_view consonants = "bdfgklmnprtvz";
  static constexpr std::string_view vowels = "aeiou";
  const std::size_t n = min_syllables + uniform_index(rng, 2);
  std::string w;
  for (std::size_t i = 0; i < n; ++i) {
    w.push_back(consonants[uniform_index(rng, consonants.size())]);
    w.push_back(vowels[uniform_index(rng, vowels.size())]);
  }
  return w;
}

inline std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

// Draws words until one is unused; every generated token is globally unique.
template <class Rng>
std::string fresh_word(Rng& rng, std::set<std::string>& used) {
  for (;;) {
    auto w = pseudo_word(rng);
    if (used.insert(w).second) return w;
  }
}

}  // namespace detail

// Entities get aliases "First Last", "Last" and further distinct surfaces;
// relation groups get paraphrases with no shared tokens. Triples realize facts
// of a random entity graph with random alias and paraphrase choices.
inline SyntheticKb make_synthetic_kb(const SynthOptions& opt) {
  opt.validate();
  std::mt19937_64 rng(opt.seed);
  std::set<std::string> used;
  SyntheticKb out;

  for (std::size_t e = 0; e < opt.n_entities; ++e) {
    const auto first = detail::capitalize(detail::fresh_word(rng, used));
    const auto last = detail::capitalize(detail::fresh_word(rng, used));
    std::vector<std::string> aliases;
    for (std::size_t a = 0; a < opt.aliases_per_entity; ++a) {
      if (a == 0)
        aliases.push_back(opt.aliases_per_entity == 1 ? last : first + " " + last);
      else if (a == 1)
        aliases.push_back(last);
      else
        aliases.push_back(detail::capitalize(detail::fresh_word(rng, used)));
    }
    out.entity_aliases.push_back(std::move(aliases));
  }
  static constexpr std::array<const char*, 5> preps = {"of", "in", "at", "for", "with"};
  for (std::size_t r = 0; r < opt.n_relations; ++r) {
    std::vector<std::string> surfaces;
    for (std::size_t p = 0; p < opt.paraphrases_per_relation; ++p) {
      auto s = detail::fresh_word(rng, used);
      if (p % 2 == 1) s += std::string(" ") + preps[uniform_index(rng, preps.size())];
      surfaces.push_back(std::move(s));
    }
    out.relation_surfaces.push_back(std::move(surfaces));
  }

  // Fact graph: about one fact per three triples, so each fact is seen under
  // several surface realizations.
  const std::size_t n_facts = std::max<std::size_t>(1, opt.n_triples / 3);
  std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> facts;
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> fact_set;
  for (std::size_t attempts = 0; facts.size() < n_facts && attempts < 100 * n_facts; ++attempts) {
    const auto s = uniform_index(rng, opt.n_entities);
    auto o = uniform_index(rng, opt.n_entities - 1);
    if (o >= s) ++o;
    const auto r = uniform_index(rng, opt.n_relations);
    if (fact_set.emplace(s, r, o).second) facts.emplace_back(s, r, o);
  }

  // The first triples cycle through every (entity, alias) and (relation,
  // paraphrase) so each surface form occurs; a fact satisfying the targets is
  // drawn, or added to the graph when none exists.
  const std::size_t n_alias_targets = opt.n_entities * opt.aliases_per_entity;
  const std::size_t n_rel_targets = opt.n_relations * opt.paraphrases_per_relation;
  for (std::size_t i = 0; i < opt.n_triples; ++i) {
    const bool ent_target = i < n_alias_targets, rel_target = i < n_rel_targets;
    const std::size_t te = i % opt.n_entities, ta = (i / opt.n_entities) % opt.aliases_per_entity;
    const std::size_t tr = i % opt.n_relations, tp = (i / opt.n_relations) % opt.paraphrases_per_relation;
    std::vector<std::size_t> candidates;
    for (std::size_t f = 0; f < facts.size(); ++f) {
      const auto& [s, r, o] = facts[f];
      if ((!ent_target || s == te || o == te) && (!rel_target || r == tr)) candidates.push_back(f);
    }
    if (candidates.empty()) {
      const auto s = ent_target ? te : uniform_index(rng, opt.n_entities);
      auto o = uniform_index(rng, opt.n_entities - 1);
      if (o >= s) ++o;
      const auto r = rel_target ? tr : uniform_index(rng, opt.n_relations);
      if (fact_set.emplace(s, r, o).second) facts.emplace_back(s, r, o);
      for (std::size_t f = 0; f < facts.size(); ++f)
        if (facts[f] == std::tuple{s, r, o}) candidates.push_back(f);
    }
    auto [s, r, o] = facts[candidates[uniform_index(rng, candidates.size())]];
    const bool target_is_object = ent_target && s != te;
    if (opt.noise > 0.0 && !target_is_object && uniform01(rng) < opt.noise) {
      o = uniform_index(rng, opt.n_entities - 1);
      if (o >= s) ++o;
    }
    const auto& sa = out.entity_aliases[s];
    const auto& oa = out.entity_aliases[o];
    const auto& rs = out.relation_surfaces[r];
    const auto& subj = ent_target && !target_is_object ? sa[ta] : sa[uniform_index(rng, sa.size())];
    const auto& obj = target_is_object ? oa[ta] : oa[uniform_index(rng, oa.size())];
    const auto& rel = rel_target ? rs[tp] : rs[uniform_index(rng, rs.size())];
    Triple t;
    t.triple_id = static_cast<std::int64_t>(i);
    t.gold_subject = SyntheticKb::entity_label(s);
    t.gold_object = SyntheticKb::entity_label(o);
    t.source_sentences = {subj + " " + rel + " " + obj + "."};
    out.kb.add(subj, rel, obj, std::move(t));
  }

  // Resource rows: a `side_coverage` share of within-group pairs, then wrong
  // cross-group pairs until the requested precision is met.
  const auto emit_pairs = [&](const std::vector<std::vector<std::string>>& groups) {
    std::vector<std::pair<std::string, std::string>> good, bad;
    for (const auto& g : groups)
      for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t j = i + 1; j < g.size(); ++j) good.emplace_back(g[i], g[j]);
    shuffle(good, rng);
    good.resize(static_cast<std::size_t>(std::llround(opt.side_coverage * static_cast<double>(good.size()))));
    const auto n_bad = static_cast<std::size_t>(
        std::llround(static_cast<double>(good.size()) * (1.0 - opt.side_precision) / opt.side_precision));
    while (bad.size() < n_bad && groups.size() > 1) {
      const auto a = uniform_index(rng, groups.size());
      auto b = uniform_index(rng, groups.size() - 1);
      if (b >= a) ++b;
      bad.emplace_back(groups[a][uniform_index(rng, groups[a].size())], groups[b][uniform_index(rng, groups[b].size())]);
    }
    for (const auto& [x, y] : good) out.paraphrase_rows.emplace_back(x, y, 0.9);
    for (const auto& [x, y] : bad) out.paraphrase_rows.emplace_back(x, y, 0.9);
  };
  emit_pairs(out.entity_aliases);
  emit_pairs(out.relation_surfaces);
  for (std::size_t r = 0; r < out.relation_surfaces.size(); ++r)
    for (const auto& s : out.relation_surfaces[r])
      if (uniform01(rng) < opt.side_coverage) out.category_rows.emplace_back(s, "cat:" + SyntheticKb::relation_label(r));
  return out;
}

struct SyntheticFiles {
  std::string triples, gold_np, gold_rel, ppdb, kbp;
};

// Writes triples.jsonl (gold ids in the triple records), gold_np.tsv,
// gold_rel.tsv, ppdb.tsv and kbp.tsv under `dir`.
inline SyntheticFiles write_synthetic_kb(const SyntheticKb& s, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto path = [&](const char* name) { return (std::filesystem::path(dir) / name).string(); };
  SyntheticFiles f{path("triples.jsonl"), path("gold_np.tsv"), path("gold_rel.tsv"), path("ppdb.tsv"),
                   path("kbp.tsv")};
  {
    auto out = open_output(f.triples);
    write_triples(s.kb, out);
  }
  {
    auto out = open_output(f.gold_np);
    for (std::size_t e = 0; e < s.entity_aliases.size(); ++e)
      for (const auto& a : s.entity_aliases[e]) out << a << '\t' << SyntheticKb::entity_label(e) << '\n';
  }
  {
    auto out = open_output(f.gold_rel);
    for (std::size_t r = 0; r < s.relation_surfaces.size(); ++r)
      for (const auto& a : s.relation_surfaces[r]) out << a << '\t' << SyntheticKb::relation_label(r) << '\n';
  }
  {
    auto out = open_output(f.ppdb);
    for (const auto& [a, b, score] : s.paraphrase_rows) out << a << '\t' << b << '\t' << score << '\n';
  }
  {
    auto out = open_output(f.kbp);
    for (const auto& [a, c] : s.category_rows) out << a << '\t' << c << '\n';
  }
  return f;
}

}  // namespace okbc
