#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "common.hpp"

namespace okbc {

struct Phrase {
  PhraseId id = 0;
  std::string text;
  Kind kind = Kind::NP;
  std::uint64_t frequency = 0;
};

// One OpenIE extraction. Gold fields are carried for evaluation only and must
// never be read on a training or clustering path.
struct Triple {
  std::int64_t triple_id = -1;  // negative: assigned the record's position on insertion
  PhraseId subject = 0;
  PhraseId relation = 0;
  PhraseId object = 0;
  std::vector<std::string> source_sentences;
  std::optional<std::string> subject_link;
  std::optional<std::string> object_link;
  std::optional<std::string> gold_subject;
  std::optional<std::string> gold_object;
};

struct TripleKey {
  PhraseId s = 0, p = 0, o = 0;
  bool operator==(const TripleKey&) const = default;
  auto operator<=>(const TripleKey&) const = default;
};

struct TripleKeyHash {
  std::size_t operator()(const TripleKey& k) const noexcept {
    std::uint64_t h = k.s;
    h = h * 0x9E3779B97F4A7C15ULL ^ k.p;
    h = h * 0x9E3779B97F4A7C15ULL ^ k.o;
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

// Phrase table for one kind. Identity is the whitespace-normalized surface
// string; case is preserved.
class Vocabulary {
 public:
  explicit Vocabulary(Kind kind = Kind::NP) : kind_(kind) {}

  // Returns the id for `text`, creating it if needed, and counts one occurrence.
  PhraseId add_occurrence(std::string_view text) {
    auto norm = normalize_whitespace(text);
    if (norm.empty()) throw ArgumentError("empty phrase text");
    auto [it, inserted] = index_.try_emplace(norm, static_cast<PhraseId>(phrases_.size()));
    if (inserted) phrases_.push_back(Phrase{it->second, norm, kind_, 0});
    ++phrases_[it->second].frequency;
    return it->second;
  }

  std::optional<PhraseId> find(std::string_view text) const {
    auto it = index_.find(normalize_whitespace(text));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const Phrase& operator[](PhraseId id) const { return phrases_.at(id); }
  const std::string& text(PhraseId id) const { return phrases_.at(id).text; }
  std::size_t size() const noexcept { return phrases_.size(); }
  Kind kind() const noexcept { return kind_; }
  auto begin() const { return phrases_.begin(); }
  auto end() const { return phrases_.end(); }

  // Order-sensitive fingerprint of the phrase texts.
  std::uint64_t fingerprint() const {
    std::uint64_t h = fnv1a(to_string(kind_));
    for (const auto& p : phrases_) h = fnv1a(p.text, fnv1a("\x1f", h));
    return h;
  }

 private:
  Kind kind_;
  std::vector<Phrase> phrases_;
  std::unordered_map<std::string, PhraseId> index_;
};

class OpenKB {
 public:
  OpenKB() : np_(Kind::NP), rel_(Kind::REL) {}

  // Appends one extraction. Duplicates are kept as occurrences but indexed once.
  const Triple& add(std::string_view subject, std::string_view relation, std::string_view object,
                    Triple extra = {}) {
    extra.subject = np_.add_occurrence(subject);
    extra.relation = rel_.add_occurrence(relation);
    extra.object = np_.add_occurrence(object);
    if (extra.triple_id < 0) extra.triple_id = static_cast<std::int64_t>(triples_.size());
    const TripleKey key{extra.subject, extra.relation, extra.object};
    if (index_.insert(key).second) distinct_.push_back(key);
    triples_.push_back(std::move(extra));
    return triples_.back();
  }

  bool contains(PhraseId s, PhraseId p, PhraseId o) const { return index_.contains({s, p, o}); }
  bool contains(const TripleKey& k) const { return index_.contains(k); }

  const std::vector<Triple>& triples() const noexcept { return triples_; }
  // Distinct (s, p, o) keys in first-seen order.
  const std::vector<TripleKey>& distinct_triples() const noexcept { return distinct_; }
  const Vocabulary& np_vocab() const noexcept { return np_; }
  const Vocabulary& rel_vocab() const noexcept { return rel_; }
  const Vocabulary& vocab(Kind k) const noexcept { return k == Kind::NP ? np_ : rel_; }

  // Full scan: every id resolves and the index agrees with the triple list.
  void audit() const {
    std::unordered_set<TripleKey, TripleKeyHash> seen;
    for (const auto& t : triples_) {
      if (t.subject >= np_.size() || t.object >= np_.size() || t.relation >= rel_.size())
        throw InvariantError("triple " + std::to_string(t.triple_id) + " references unknown phrase");
      seen.insert({t.subject, t.relation, t.object});
    }
    if (seen.size() != index_.size() || seen.size() != distinct_.size())
      throw InvariantError("triple index disagrees with triple list");
    for (const auto& k : distinct_)
      if (!seen.contains(k)) throw InvariantError("triple index holds a key absent from the list");
    std::vector<std::uint64_t> np_freq(np_.size()), rel_freq(rel_.size());
    for (const auto& t : triples_) {
      ++np_freq[t.subject];
      ++np_freq[t.object];
      ++rel_freq[t.relation];
    }
    for (const auto& p : np_)
      if (p.frequency != np_freq[p.id] || p.frequency == 0)
        throw InvariantError("frequency mismatch for NP '" + p.text + "'");
    for (const auto& p : rel_)
      if (p.frequency != rel_freq[p.id] || p.frequency == 0)
        throw InvariantError("frequency mismatch for relation '" + p.text + "'");
  }

 private:
  std::vector<Triple> triples_;
  std::vector<TripleKey> distinct_;
  Vocabulary np_;
  Vocabulary rel_;
  std::unordered_set<TripleKey, TripleKeyHash> index_;
};

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

enum class TripleFormat {
  JsonLines,  // one JSON object per line with the named fields below
  Tsv,        // subject <TAB> relation <TAB> object
};

namespace detail {

inline std::optional<std::string> optional_string(const nlohmann::json& rec, const char* key,
                                                  std::size_t line) {
  auto it = rec.find(key);
  if (it == rec.end() || it->is_null()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
  throw ParseError(std::string("field '") + key + "' must be a string", line);
}

inline std::string required_string(const nlohmann::json& rec, const char* key, std::size_t line) {
  auto it = rec.find(key);
  if (it == rec.end() || !it->is_string())
    throw ParseError(std::string("missing or non-string field '") + key + "'", line);
  auto s = normalize_whitespace(it->get<std::string>());
  if (s.empty()) throw ParseError(std::string("empty field '") + key + "'", line);
  return s;
}

}  // namespace detail

// Parses one JSON-lines triple record into `kb`.
inline void add_json_record(OpenKB& kb, const nlohmann::json& rec, std::size_t line,
                            std::int64_t default_id) {
  if (!rec.is_object()) throw ParseError("record is not an object", line);
  auto s = detail::required_string(rec, "subject", line);
  auto p = detail::required_string(rec, "relation", line);
  auto o = detail::required_string(rec, "object", line);
  Triple t;
  t.triple_id = default_id;
  if (auto it = rec.find("triple_id"); it != rec.end()) {
    if (!it->is_number_integer()) throw ParseError("field 'triple_id' must be an integer", line);
    t.triple_id = it->get<std::int64_t>();
  }
  if (auto it = rec.find("src_sentences"); it != rec.end() && !it->is_null()) {
    if (!it->is_array()) throw ParseError("field 'src_sentences' must be a list", line);
    for (const auto& sent : *it) {
      if (!sent.is_string()) throw ParseError("src_sentences entries must be strings", line);
      t.source_sentences.push_back(sent.get<std::string>());
    }
  }
  t.subject_link = detail::optional_string(rec, "entity_link_sub", line);
  t.object_link = detail::optional_string(rec, "entity_link_obj", line);
  t.gold_subject = detail::optional_string(rec, "gold_sub_id", line);
  t.gold_object = detail::optional_string(rec, "gold_obj_id", line);
  kb.add(s, p, o, std::move(t));
}

inline OpenKB parse_triples(std::istream& in, TripleFormat format = TripleFormat::JsonLines) {
  OpenKB kb;
  std::string line;
  std::size_t line_no = 0;
  std::int64_t next_id = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (normalize_whitespace(line).empty()) continue;
    if (format == TripleFormat::JsonLines) {
      nlohmann::json rec;
      try {
        rec = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
      }
      add_json_record(kb, rec, line_no, next_id);
    } else {
      auto fields = split(line, '\t');
      if (fields.size() != 3) throw ParseError("expected 3 tab-separated fields", line_no);
      for (auto& f : fields)
        if (normalize_whitespace(f).empty()) throw ParseError("empty field", line_no);
      Triple t;
      t.triple_id = next_id;
      kb.add(fields[0], fields[1], fields[2], std::move(t));
    }
    ++next_id;
  }
  if (kb.triples().empty()) throw EmptyKbError("no triple records found");
  return kb;
}

inline OpenKB load_triples(const std::string& path, TripleFormat format = TripleFormat::JsonLines) {
  auto in = open_input(path);
  try {
    return parse_triples(in, format);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  } catch (const EmptyKbError&) {
    throw EmptyKbError(path + ": no triple records found");
  }
}

inline nlohmann::json triple_to_json(const OpenKB& kb, const Triple& t) {
  nlohmann::json rec;
  rec["triple_id"] = t.triple_id;
  rec["subject"] = kb.np_vocab().text(t.subject);
  rec["relation"] = kb.rel_vocab().text(t.relation);
  rec["object"] = kb.np_vocab().text(t.object);
  rec["src_sentences"] = t.source_sentences;
  const auto put = [&](const char* key, const std::optional<std::string>& v) {
    if (v) rec[key] = *v;
  };
  put("entity_link_sub", t.subject_link);
  put("entity_link_obj", t.object_link);
  put("gold_sub_id", t.gold_subject);
  put("gold_obj_id", t.gold_object);
  return rec;
}

inline void write_triples(const OpenKB& kb, std::ostream& out) {
  for (const auto& t : kb.triples()) out << triple_to_json(kb, t).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Gold clusterings
// ---------------------------------------------------------------------------

struct GoldClustering {
  Kind kind = Kind::NP;
  std::map<PhraseId, std::string> assignment;

  bool empty() const noexcept { return assignment.empty(); }
  const std::string* find(PhraseId id) const {
    auto it = assignment.find(id);
    return it == assignment.end() ? nullptr : &it->second;
  }
};

// NP gold from the per-triple gold fields. A phrase mentioned with several gold
// ids takes the most frequent one; ties go to the lexicographically smallest.
inline GoldClustering gold_from_triples(const OpenKB& kb) {
  std::vector<std::map<std::string, int>> votes(kb.np_vocab().size());
  for (const auto& t : kb.triples()) {
    if (t.gold_subject) ++votes[t.subject][*t.gold_subject];
    if (t.gold_object) ++votes[t.object][*t.gold_object];
  }
  GoldClustering gold{Kind::NP, {}};
  for (PhraseId id = 0; id < votes.size(); ++id) {
    const std::string* best = nullptr;
    int best_count = 0;
    for (const auto& [label, count] : votes[id]) {
      if (count > best_count) {
        best = &label;
        best_count = count;
      }
    }
    if (best) gold.assignment.emplace(id, *best);
  }
  return gold;
}

// Lines of `phrase_text <TAB> gold_id`. Phrases missing from the vocabulary are
// ignored; a phrase given two different gold ids is a parse error.
inline GoldClustering parse_gold_clusters(std::istream& in, const OpenKB& kb, Kind kind) {
  GoldClustering gold{kind, {}};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (normalize_whitespace(line).empty()) continue;
    auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw ParseError("expected phrase<TAB>gold_id", line_no);
    auto label = normalize_whitespace(std::string_view(line).substr(tab + 1));
    if (label.empty()) throw ParseError("empty gold id", line_no);
    auto id = kb.vocab(kind).find(std::string_view(line).substr(0, tab));
    if (!id) continue;
    auto [it, inserted] = gold.assignment.emplace(*id, label);
    if (!inserted && it->second != label)
      throw ParseError("phrase '" + kb.vocab(kind).text(*id) + "' has two gold ids", line_no);
  }
  return gold;
}

inline GoldClustering load_gold_clusters(const std::string& path, const OpenKB& kb, Kind kind) {
  auto in = open_input(path);
  return parse_gold_clusters(in, kb, kind);
}

// ---------------------------------------------------------------------------
// Validation / test split
// ---------------------------------------------------------------------------

// Subset of a KB's triples. Holds a pointer; the KB must outlive the view.
struct KbView {
  const OpenKB* kb = nullptr;
  std::vector<std::size_t> triple_indices;

  std::vector<PhraseId> phrase_ids(Kind kind) const {
    std::set<PhraseId> ids;
    for (auto i : triple_indices) {
      const auto& t = kb->triples()[i];
      if (kind == Kind::NP) {
        ids.insert(t.subject);
        ids.insert(t.object);
      } else {
        ids.insert(t.relation);
      }
    }
    return {ids.begin(), ids.end()};
  }
};

struct KbSplit {
  KbView validation;
  KbView test;
  std::vector<std::string> validation_entities;
};

// Samples gold entities that occur as the gold label of some subject, then
// sends every triple whose subject belongs to a sampled entity to validation.
inline KbSplit split_validation(const OpenKB& kb, const GoldClustering& gold, double fraction,
                                std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ArgumentError("validation fraction must lie in (0, 1)");
  if (gold.empty()) throw ConfigError("gold assignment is empty; cannot split");

  std::set<std::string> entity_set;
  for (const auto& t : kb.triples())
    if (const auto* g = gold.find(t.subject)) entity_set.insert(*g);
  std::vector<std::string> entities(entity_set.begin(), entity_set.end());

  std::mt19937_64 rng(seed);
  shuffle(entities, rng);
  const auto n_sampled = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(entities.size())));
  entities.resize(std::min(n_sampled, entities.size()));
  std::sort(entities.begin(), entities.end());
  const std::set<std::string> sampled(entities.begin(), entities.end());

  KbSplit split;
  split.validation.kb = &kb;
  split.test.kb = &kb;
  for (std::size_t i = 0; i < kb.triples().size(); ++i) {
    const auto* g = gold.find(kb.triples()[i].subject);
    (g && sampled.contains(*g) ? split.validation : split.test).triple_indices.push_back(i);
  }
  split.validation_entities = std::move(entities);
  return split;
}

// Restricts a gold clustering to the given phrase ids.
inline GoldClustering restrict_gold(const GoldClustering& gold, const std::vector<PhraseId>& ids) {
  GoldClustering out{gold.kind, {}};
  for (auto id : ids)
    if (const auto* g = gold.find(id)) out.assignment.emplace(id, *g);
  return out;
}

}  // namespace okbc
