#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "common.hpp"
#include "kb_model.hpp"
#include "stopwords.hpp"

namespace okbc {

// Unordered, irreflexive set of phrase-id pairs from one evidence source.
class EquivalencePairSet {
 public:
  using Pair = std::pair<PhraseId, PhraseId>;

  EquivalencePairSet() = default;
  EquivalencePairSet(std::string source_name, Kind kind)
      : source_name_(std::move(source_name)), kind_(kind) {}

  // Stores (min, max); self pairs are dropped. Returns true if newly inserted.
  bool insert(PhraseId a, PhraseId b) {
    if (a == b) return false;
    return pairs_.emplace(std::min(a, b), std::max(a, b)).second;
  }

  bool contains(PhraseId a, PhraseId b) const {
    return pairs_.contains({std::min(a, b), std::max(a, b)});
  }

  const std::string& source_name() const noexcept { return source_name_; }
  Kind kind() const noexcept { return kind_; }
  const std::set<Pair>& pairs() const noexcept { return pairs_; }
  std::size_t size() const noexcept { return pairs_.size(); }
  bool empty() const noexcept { return pairs_.empty(); }
  auto begin() const { return pairs_.begin(); }
  auto end() const { return pairs_.end(); }

  std::set<PhraseId> covered() const {
    std::set<PhraseId> ids;
    for (const auto& [a, b] : pairs_) {
      ids.insert(a);
      ids.insert(b);
    }
    return ids;
  }

  bool operator==(const EquivalencePairSet&) const = default;

 private:
  std::string source_name_;
  Kind kind_ = Kind::NP;
  std::set<Pair> pairs_;
};

struct SideInfoCollection {
  std::vector<EquivalencePairSet> np_sources;
  std::vector<EquivalencePairSet> rel_sources;

  const std::vector<EquivalencePairSet>& sources(Kind k) const {
    return k == Kind::NP ? np_sources : rel_sources;
  }
  bool empty() const noexcept { return np_sources.empty() && rel_sources.empty(); }
};

// Emits every pair inside each group.
template <class GroupMap>
void add_group_pairs(EquivalencePairSet& out, const GroupMap& groups) {
  for (const auto& [key, members] : groups) {
    for (std::size_t i = 0; i < members.size(); ++i)
      for (std::size_t j = i + 1; j < members.size(); ++j) out.insert(members[i], members[j]);
  }
}

// ---------------------------------------------------------------------------
// Morphological normalization
// ---------------------------------------------------------------------------

namespace detail {

inline bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }
inline bool is_alpha(char c) { return c >= 'a' && c <= 'z'; }

inline std::string strip_plural(std::string tok) {
  if (ends_with(tok, "ies") && tok.size() > 3) return tok.substr(0, tok.size() - 3) + "y";
  if (ends_with(tok, "ses") && tok.size() > 3) return tok.substr(0, tok.size() - 2);
  if (ends_with(tok, "s") && tok.size() > 1 && !ends_with(tok, "ss") && !ends_with(tok, "us") &&
      !ends_with(tok, "is"))
    return tok.substr(0, tok.size() - 1);
  return tok;
}

inline std::string strip_tense(std::string tok) {
  if (ends_with(tok, "ied") && tok.size() > 3) return tok.substr(0, tok.size() - 3) + "y";
  if (ends_with(tok, "ed") && tok.size() - 2 >= 3) return tok.substr(0, tok.size() - 2);
  if (ends_with(tok, "ing") && tok.size() - 3 >= 3) {
    auto stem = tok.substr(0, tok.size() - 3);
    const char last = stem.back();
    if (stem[stem.size() - 2] == last && is_alpha(last) && !is_vowel(last)) stem.pop_back();
    return stem;
  }
  return tok;
}

inline std::string morph_pass(std::string_view text) {
  auto tokens = split_whitespace(to_lower(text));
  std::size_t first = 0;
  while (tokens.size() - first > 1 &&
         (tokens[first] == "the" || tokens[first] == "a" || tokens[first] == "an"))
    ++first;
  std::string out;
  for (std::size_t i = first; i < tokens.size(); ++i) {
    if (!out.empty()) out.push_back(' ');
    out += strip_tense(strip_plural(tokens[i]));
  }
  return out;
}

}  // namespace detail

// Lowercase, drop leading determiners, then crude per-token plural and tense
// suffix rules. The pass is repeated until nothing changes, which makes the
// function idempotent.
inline std::string morph_normalize(std::string_view text) {
  std::string cur = normalize_whitespace(text);
  for (;;) {
    auto next = detail::morph_pass(cur);
    if (next == cur) return cur;
    cur = std::move(next);
  }
}

inline EquivalencePairSet morph_equivalences(const OpenKB& kb, Kind kind) {
  EquivalencePairSet out("morph", kind);
  std::map<std::string, std::vector<PhraseId>> groups;
  for (const auto& p : kb.vocab(kind)) groups[morph_normalize(p.text)].push_back(p.id);
  add_group_pairs(out, groups);
  return out;
}

// ---------------------------------------------------------------------------
// IDF token overlap
// ---------------------------------------------------------------------------

// Lowercased alphanumeric tokens, stopwords removed, deduplicated.
inline std::set<std::string> content_tokens(std::string_view text) {
  std::set<std::string> out;
  std::string cur;
  const auto flush = [&] {
    if (!cur.empty() && !is_stopword(cur)) out.insert(cur);
    cur.clear();
  };
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || u >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(u)));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

// Document frequency where each distinct NP string is one document.
struct DocumentFrequency {
  std::unordered_map<std::string, std::uint64_t> df;

  std::uint64_t operator()(const std::string& token) const {
    auto it = df.find(token);
    return it == df.end() ? 0 : it->second;
  }
};

inline DocumentFrequency build_df(const OpenKB& kb) {
  DocumentFrequency out;
  for (const auto& p : kb.np_vocab())
    for (const auto& tok : content_tokens(p.text)) ++out.df[tok];
  return out;
}

// Ratio of inverse-log-frequency mass on shared tokens to mass on all tokens.
// Tokens unseen by `df` are treated as occurring once.
inline double idf_overlap_score(std::string_view a, std::string_view b, const DocumentFrequency& df) {
  const auto ta = content_tokens(a);
  const auto tb = content_tokens(b);
  const auto weight = [&](const std::string& tok) {
    return 1.0 / std::log(1.0 + static_cast<double>(std::max<std::uint64_t>(df(tok), 1)));
  };
  // Sum over the sorted union so the score is exactly symmetric.
  std::set<std::string> all(ta.begin(), ta.end());
  all.insert(tb.begin(), tb.end());
  double shared = 0.0, total = 0.0;
  for (const auto& t : all) {
    const double w = weight(t);
    total += w;
    if (ta.contains(t) && tb.contains(t)) shared += w;
  }
  return total > 0.0 ? shared / total : 0.0;
}

inline double idf_overlap_score(const OpenKB& kb, PhraseId a, PhraseId b, const DocumentFrequency& df) {
  return idf_overlap_score(kb.np_vocab().text(a), kb.np_vocab().text(b), df);
}

// All NP pairs scoring at least `cutoff`; candidates are blocked on a shared token.
inline EquivalencePairSet idf_equivalences(const OpenKB& kb, const DocumentFrequency& df, double cutoff) {
  if (!(cutoff >= 0.0 && cutoff <= 1.0)) throw ArgumentError("idf cutoff must lie in [0, 1]");
  EquivalencePairSet out("idf_overlap", Kind::NP);
  std::map<std::string, std::vector<PhraseId>> postings;
  for (const auto& p : kb.np_vocab())
    for (const auto& tok : content_tokens(p.text)) postings[tok].push_back(p.id);
  std::set<EquivalencePairSet::Pair> candidates;
  for (const auto& [tok, ids] : postings)
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = i + 1; j < ids.size(); ++j) candidates.emplace(ids[i], ids[j]);
  for (const auto& [a, b] : candidates)
    if (idf_overlap_score(kb, a, b, df) >= cutoff) out.insert(a, b);
  return out;
}

// ---------------------------------------------------------------------------
// Resource-file providers
// ---------------------------------------------------------------------------

struct LoadReport {
  std::size_t rows = 0;
  std::size_t kept = 0;
  std::size_t malformed = 0;
};

class UnionFind {
 public:
  std::size_t add() {
    parent_.push_back(parent_.size());
    rank_.push_back(0);
    return parent_.size() - 1;
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::uint8_t> rank_;
};

// Resource files are matched on lowercased, whitespace-normalized text.
inline std::string resource_key(std::string_view text) { return to_lower(normalize_whitespace(text)); }

// Rows `phrase1 <TAB> phrase2 <TAB> score`. Rows at or above `confidence_min`
// are closed under union-find; KB phrases sharing a root are paired.
inline EquivalencePairSet ppdb_equivalences(std::istream& in, double confidence_min, const OpenKB& kb,
                                            Kind kind, LoadReport* report = nullptr) {
  LoadReport local;
  UnionFind uf;
  std::unordered_map<std::string, std::size_t> node;
  const auto node_of = [&](const std::string& key) {
    auto [it, inserted] = node.try_emplace(key, 0);
    if (inserted) it->second = uf.add();
    return it->second;
  };
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (normalize_whitespace(line).empty()) continue;
    ++local.rows;
    auto fields = split(line, '\t');
    double score = 0.0;
    bool ok = fields.size() == 3;
    if (ok) {
      try {
        std::size_t used = 0;
        score = std::stod(fields[2], &used);
        ok = normalize_whitespace(fields[2].substr(used)).empty();
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (ok) {
      fields[0] = resource_key(fields[0]);
      fields[1] = resource_key(fields[1]);
      ok = !fields[0].empty() && !fields[1].empty();
    }
    if (!ok) {
      ++local.malformed;
      continue;
    }
    if (score < confidence_min) continue;
    ++local.kept;
    uf.unite(node_of(fields[0]), node_of(fields[1]));
  }
  EquivalencePairSet out("ppdb", kind);
  std::map<std::size_t, std::vector<PhraseId>> groups;
  for (const auto& p : kb.vocab(kind)) {
    auto it = node.find(resource_key(p.text));
    if (it != node.end()) groups[uf.find(it->second)].push_back(p.id);
  }
  add_group_pairs(out, groups);
  if (report) *report = local;
  return out;
}

inline EquivalencePairSet ppdb_equivalences(const std::string& path, double confidence_min, const OpenKB& kb,
                                            Kind kind, LoadReport* report = nullptr) {
  auto in = open_input(path);
  return ppdb_equivalences(in, confidence_min, kb, kind, report);
}

// Lines `phrase <TAB> synset_id[,synset_id...]`.
inline EquivalencePairSet synset_equivalences(std::istream& in, const OpenKB& kb, Kind kind) {
  std::unordered_map<std::string, std::set<std::string>> synsets;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (normalize_whitespace(line).empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("expected phrase<TAB>synsets", line_no);
    auto key = resource_key(std::string_view(line).substr(0, tab));
    if (key.empty()) throw ParseError("empty phrase", line_no);
    for (auto& id : split(std::string_view(line).substr(tab + 1), ',')) {
      auto s = normalize_whitespace(id);
      if (!s.empty()) synsets[key].insert(std::move(s));
    }
  }
  EquivalencePairSet out("wordnet", kind);
  std::map<std::string, std::vector<PhraseId>> groups;
  for (const auto& p : kb.vocab(kind)) {
    auto it = synsets.find(resource_key(p.text));
    if (it == synsets.end()) continue;
    for (const auto& s : it->second) groups[s].push_back(p.id);
  }
  add_group_pairs(out, groups);
  return out;
}

inline EquivalencePairSet synset_equivalences(const std::string& path, const OpenKB& kb, Kind kind) {
  auto in = open_input(path);
  return synset_equivalences(in, kb, kind);
}

// Lines `relation_phrase <TAB> category`.
inline EquivalencePairSet kbp_equivalences(std::istream& in, const OpenKB& kb) {
  std::unordered_map<std::string, std::string> category;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (normalize_whitespace(line).empty()) continue;
    auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw ParseError("expected relation<TAB>category", line_no);
    auto key = resource_key(std::string_view(line).substr(0, tab));
    auto cat = normalize_whitespace(std::string_view(line).substr(tab + 1));
    if (key.empty() || cat.empty()) throw ParseError("empty relation or category", line_no);
    category[key] = cat;
  }
  EquivalencePairSet out("kbp", Kind::REL);
  std::map<std::string, std::vector<PhraseId>> groups;
  for (const auto& p : kb.rel_vocab()) {
    auto it = category.find(resource_key(p.text));
    if (it != category.end()) groups[it->second].push_back(p.id);
  }
  add_group_pairs(out, groups);
  return out;
}

inline EquivalencePairSet kbp_equivalences(const std::string& path, const OpenKB& kb) {
  auto in = open_input(path);
  return kbp_equivalences(in, kb);
}

// Each NP takes the link chosen by a strict majority of its linked
// occurrences; unlinked occurrences do not vote and ties drop the link.
inline std::vector<std::optional<std::string>> majority_links(const OpenKB& kb) {
  std::vector<std::map<std::string, int>> votes(kb.np_vocab().size());
  for (const auto& t : kb.triples()) {
    if (t.subject_link) ++votes[t.subject][*t.subject_link];
    if (t.object_link) ++votes[t.object][*t.object_link];
  }
  std::vector<std::optional<std::string>> out(votes.size());
  for (std::size_t id = 0; id < votes.size(); ++id) {
    int best = 0;
    bool tie = false;
    for (const auto& [link, count] : votes[id]) {
      if (count > best) {
        best = count;
        out[id] = link;
        tie = false;
      } else if (count == best) {
        tie = true;
      }
    }
    if (tie) out[id].reset();
  }
  return out;
}

inline EquivalencePairSet entity_link_equivalences(const OpenKB& kb) {
  EquivalencePairSet out("entity_linking", Kind::NP);
  const auto links = majority_links(kb);
  std::map<std::string, std::vector<PhraseId>> groups;
  for (PhraseId id = 0; id < links.size(); ++id)
    if (links[id]) groups[*links[id]].push_back(id);
  add_group_pairs(out, groups);
  return out;
}

// ---------------------------------------------------------------------------
// Rule mining
// ---------------------------------------------------------------------------

struct RuleStats {
  PhraseId body = 0;  // r in r => r'
  PhraseId head = 0;  // r'
  std::size_t support = 0;
  double confidence = 0.0;
};

// Argument pair sets per relation over morph-normalized NPs.
inline std::vector<std::set<std::pair<std::uint32_t, std::uint32_t>>> relation_argument_pairs(const OpenKB& kb) {
  std::unordered_map<std::string, std::uint32_t> canon;
  std::vector<std::uint32_t> np_canon(kb.np_vocab().size());
  for (const auto& p : kb.np_vocab())
    np_canon[p.id] = canon.try_emplace(morph_normalize(p.text), static_cast<std::uint32_t>(canon.size()))
                         .first->second;
  std::vector<std::set<std::pair<std::uint32_t, std::uint32_t>>> pairs(kb.rel_vocab().size());
  for (const auto& k : kb.distinct_triples()) pairs[k.p].emplace(np_canon[k.s], np_canon[k.o]);
  return pairs;
}

// Support and confidence of r => r' for every ordered pair of relations that
// share at least one argument pair.
inline std::vector<RuleStats> amie_rules(const OpenKB& kb) {
  const auto pairs = relation_argument_pairs(kb);
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<PhraseId>> by_args;
  for (PhraseId r = 0; r < pairs.size(); ++r)
    for (const auto& xy : pairs[r]) by_args[xy].push_back(r);
  std::map<std::pair<PhraseId, PhraseId>, std::size_t> shared;
  for (const auto& [xy, rels] : by_args)
    for (std::size_t i = 0; i < rels.size(); ++i)
      for (std::size_t j = i + 1; j < rels.size(); ++j) ++shared[{rels[i], rels[j]}];
  std::vector<RuleStats> out;
  for (const auto& [rr, support] : shared) {
    const auto [a, b] = rr;
    out.push_back({a, b, support, static_cast<double>(support) / static_cast<double>(pairs[a].size())});
    out.push_back({b, a, support, static_cast<double>(support) / static_cast<double>(pairs[b].size())});
  }
  return out;
}

// Relations r, r' are paired when both r => r' and r' => r meet the thresholds.
inline EquivalencePairSet amie_mine(const OpenKB& kb, std::size_t support_min, double confidence_min) {
  EquivalencePairSet out("amie", Kind::REL);
  std::map<std::pair<PhraseId, PhraseId>, int> passing;
  for (const auto& rule : amie_rules(kb))
    if (rule.support >= support_min && rule.confidence >= confidence_min)
      ++passing[{std::min(rule.body, rule.head), std::max(rule.body, rule.head)}];
  for (const auto& [rr, n] : passing)
    if (n == 2) out.insert(rr.first, rr.second);
  return out;
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

struct SideInfoConfig {
  bool entity_linking = false;
  bool morph = false;
  bool idf = false;
  double idf_cutoff = 0.5;
  std::string ppdb_path;  // used for both NPs and relations when set
  double ppdb_confidence_min = 0.0;
  std::string wordnet_path;  // synset file, used for both kinds when set
  bool amie = false;
  std::size_t amie_support_min = 2;
  double amie_confidence_min = 0.2;
  std::string kbp_path;
};

struct CoverageEntry {
  std::string source;
  Kind kind = Kind::NP;
  std::size_t phrases_covered = 0;
  double fraction_covered = 0.0;
  std::size_t pairs = 0;
};

struct SideInfoResult {
  SideInfoCollection collection;
  std::vector<CoverageEntry> coverage;
  LoadReport ppdb_report;
};

inline CoverageEntry coverage_of(const EquivalencePairSet& s, const OpenKB& kb) {
  const auto n = kb.vocab(s.kind()).size();
  const auto covered = s.covered().size();
  return {s.source_name(), s.kind(), covered, n ? static_cast<double>(covered) / static_cast<double>(n) : 0.0,
          s.size()};
}

inline SideInfoResult assemble_side_info(const OpenKB& kb, const SideInfoConfig& cfg) {
  for (const auto* path : {&cfg.ppdb_path, &cfg.wordnet_path, &cfg.kbp_path}) {
    if (!path->empty() && !std::ifstream(*path))
      throw ConfigError("side-information resource '" + *path + "' not found");
  }
  SideInfoResult r;
  auto& c = r.collection;
  if (cfg.entity_linking) c.np_sources.push_back(entity_link_equivalences(kb));
  if (!cfg.ppdb_path.empty()) {
    c.np_sources.push_back(ppdb_equivalences(cfg.ppdb_path, cfg.ppdb_confidence_min, kb, Kind::NP, &r.ppdb_report));
    c.rel_sources.push_back(ppdb_equivalences(cfg.ppdb_path, cfg.ppdb_confidence_min, kb, Kind::REL));
  }
  if (!cfg.wordnet_path.empty()) {
    c.np_sources.push_back(synset_equivalences(cfg.wordnet_path, kb, Kind::NP));
    c.rel_sources.push_back(synset_equivalences(cfg.wordnet_path, kb, Kind::REL));
  }
  if (cfg.idf) c.np_sources.push_back(idf_equivalences(kb, build_df(kb), cfg.idf_cutoff));
  if (cfg.morph) c.np_sources.push_back(morph_equivalences(kb, Kind::NP));
  if (cfg.amie) c.rel_sources.push_back(amie_mine(kb, cfg.amie_support_min, cfg.amie_confidence_min));
  if (!cfg.kbp_path.empty()) c.rel_sources.push_back(kbp_equivalences(cfg.kbp_path, kb));
  for (const auto& s : c.np_sources) r.coverage.push_back(coverage_of(s, kb));
  for (const auto& s : c.rel_sources) r.coverage.push_back(coverage_of(s, kb));
  return r;
}

// ---------------------------------------------------------------------------
// Serialization (pairs stored by surface text so the file is KB-id independent)
// ---------------------------------------------------------------------------

inline nlohmann::json side_info_to_json(const SideInfoResult& r, const OpenKB& kb) {
  nlohmann::json j;
  for (Kind kind : {Kind::NP, Kind::REL}) {
    auto& arr = j[kind == Kind::NP ? "np_sources" : "rel_sources"] = nlohmann::json::array();
    for (const auto& s : r.collection.sources(kind)) {
      nlohmann::json pairs = nlohmann::json::array();
      for (const auto& [a, b] : s) pairs.push_back({kb.vocab(kind).text(a), kb.vocab(kind).text(b)});
      arr.push_back({{"source", s.source_name()}, {"pairs", std::move(pairs)}});
    }
  }
  auto& cov = j["coverage"] = nlohmann::json::array();
  for (const auto& e : r.coverage)
    cov.push_back({{"source", e.source},
                   {"kind", to_string(e.kind)},
                   {"phrases_covered", e.phrases_covered},
                   {"fraction_covered", e.fraction_covered},
                   {"pairs_emitted", e.pairs}});
  return j;
}

inline SideInfoCollection side_info_from_json(const nlohmann::json& j, const OpenKB& kb) {
  SideInfoCollection c;
  for (Kind kind : {Kind::NP, Kind::REL}) {
    const char* key = kind == Kind::NP ? "np_sources" : "rel_sources";
    if (!j.contains(key)) throw ParseError(std::string("side-info file lacks '") + key + "'");
    auto& dest = kind == Kind::NP ? c.np_sources : c.rel_sources;
    for (const auto& src : j.at(key)) {
      EquivalencePairSet s(src.at("source").get<std::string>(), kind);
      for (const auto& pr : src.at("pairs")) {
        auto a = kb.vocab(kind).find(pr.at(0).get<std::string>());
        auto b = kb.vocab(kind).find(pr.at(1).get<std::string>());
        if (!a || !b) throw LookupError("side-info pair references a phrase missing from the KB");
        s.insert(*a, *b);
      }
      dest.push_back(std::move(s));
    }
  }
  return c;
}

}  // namespace okbc
