#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "canonicalize.hpp"
#include "common.hpp"
#include "embedding.hpp"
#include "kb_model.hpp"
#include "side_info.hpp"

namespace okbc {

// ---------------------------------------------------------------------------
// String and attribute similarities
// ---------------------------------------------------------------------------

inline double jaro(std::string_view s1, std::string_view s2) {
  if (s1.empty() && s2.empty()) return 1.0;
  if (s1.empty() || s2.empty()) return 0.0;
  const std::size_t window = std::max<std::size_t>(std::max(s1.size(), s2.size()) / 2, 1) - 1;
  std::vector<bool> m1(s1.size(), false), m2(s2.size(), false);
  std::size_t matches = 0;
  for (std::size_t i = 0; i < s1.size(); ++i) {
    const std::size_t lo = i > window ? i - window : 0;
    const std::size_t hi = std::min(s2.size(), i + window + 1);
    for (std::size_t j = lo; j < hi; ++j) {
      if (m2[j] || s1[i] != s2[j]) continue;
      m1[i] = m2[j] = true;
      ++matches;
      break;
    }
  }
  if (matches == 0) return 0.0;
  std::size_t transpositions = 0;
  for (std::size_t i = 0, j = 0; i < s1.size(); ++i) {
    if (!m1[i]) continue;
    while (!m2[j]) ++j;
    if (s1[i] != s2[j]) ++transpositions;
    ++j;
  }
  const double m = static_cast<double>(matches);
  return (m / static_cast<double>(s1.size()) + m / static_cast<double>(s2.size()) +
          (m - static_cast<double>(transpositions) / 2.0) / m) /
         3.0;
}

// Jaro similarity boosted by the common prefix (at most 4 characters, scale 0.1).
inline double jaro_winkler(std::string_view s1, std::string_view s2) {
  const double j = jaro(s1, s2);
  std::size_t prefix = 0;
  while (prefix < 4 && prefix < s1.size() && prefix < s2.size() && s1[prefix] == s2[prefix]) ++prefix;
  return j + static_cast<double>(prefix) * 0.1 * (1.0 - j);
}

enum class ArgPosition : std::uint8_t { Subject, Object };

// (relation, other NP, position of the NP itself)
using Attribute = std::tuple<PhraseId, PhraseId, ArgPosition>;

inline std::vector<std::set<Attribute>> np_attributes(const OpenKB& kb) {
  std::vector<std::set<Attribute>> attrs(kb.np_vocab().size());
  for (const auto& k : kb.distinct_triples()) {
    attrs[k.s].emplace(k.p, k.o, ArgPosition::Subject);
    attrs[k.o].emplace(k.p, k.s, ArgPosition::Object);
  }
  return attrs;
}

inline double jaccard(const std::set<Attribute>& a, const std::set<Attribute>& b) {
  std::size_t shared = 0;
  for (const auto& x : a) shared += b.contains(x);
  const std::size_t uni = a.size() + b.size() - shared;
  return uni ? static_cast<double>(shared) / static_cast<double>(uni) : 0.0;
}

inline double attribute_overlap(PhraseId a, PhraseId b, const OpenKB& kb) {
  const auto attrs = np_attributes(kb);
  return jaccard(attrs.at(a), attrs.at(b));
}

// ---------------------------------------------------------------------------
// Baseline dispatch
// ---------------------------------------------------------------------------

enum class BaselineName { Morph, Ppdb, EntLink, IdfHac, StrSimHac, AttrHac, WordVecAvg, HoleRandom, HolePretrained };

inline const char* to_string(BaselineName n) {
  switch (n) {
    case BaselineName::Morph: return "morph";
    case BaselineName::Ppdb: return "ppdb";
    case BaselineName::EntLink: return "entlink";
    case BaselineName::IdfHac: return "idf_hac";
    case BaselineName::StrSimHac: return "strsim_hac";
    case BaselineName::AttrHac: return "attr_hac";
    case BaselineName::WordVecAvg: return "wordvec_avg";
    case BaselineName::HoleRandom: return "hole_random";
    case BaselineName::HolePretrained: return "hole_pretrained";
  }
  return "?";
}

inline BaselineName baseline_from_string(std::string_view s) {
  for (auto n : {BaselineName::Morph, BaselineName::Ppdb, BaselineName::EntLink, BaselineName::IdfHac,
                 BaselineName::StrSimHac, BaselineName::AttrHac, BaselineName::WordVecAvg, BaselineName::HoleRandom,
                 BaselineName::HolePretrained})
    if (s == to_string(n)) return n;
  throw ConfigError("unknown baseline '" + std::string(s) + "'");
}

inline bool uses_hac(BaselineName n) {
  return n != BaselineName::Morph && n != BaselineName::Ppdb && n != BaselineName::EntLink;
}

struct BaselineConfig {
  BaselineName name = BaselineName::Morph;
  // Distance cutoff for HAC methods; replaced by the tuned value when a grid and
  // validation gold are supplied.
  double threshold = 0.5;
  std::vector<double> grid;
  std::string ppdb_path;
  double ppdb_confidence_min = 0.0;
  std::string vectors_path;
  HyperParams hole;  // side-information weights are ignored

  void validate() const {
    if (name == BaselineName::Ppdb && ppdb_path.empty()) throw ConfigError("ppdb baseline needs a PPDB file");
    if ((name == BaselineName::WordVecAvg || name == BaselineName::HolePretrained) && vectors_path.empty())
      throw ConfigError(std::string(to_string(name)) + " baseline needs a word-vector file");
    if (uses_hac(name) && !(threshold >= 0.0 && threshold <= 2.0)) throw ConfigError("threshold must lie in [0, 2]");
  }
};

inline Partition connected_components(const EquivalencePairSet& pairs, std::size_t n) {
  UnionFind uf;
  for (std::size_t i = 0; i < n; ++i) uf.add();
  for (const auto& [a, b] : pairs) uf.unite(a, b);
  std::map<std::size_t, std::vector<PhraseId>> groups;
  for (PhraseId i = 0; i < n; ++i) groups[uf.find(i)].push_back(i);
  Partition p;
  for (auto& [r, m] : groups) p.push_back(std::move(m));
  return canonical_partition(std::move(p));
}

// Structure-only training with the configured initialization.
inline EmbeddingSet hole_embeddings(const OpenKB& kb, const BaselineConfig& cfg) {
  const auto h = without_side_info(cfg.hole);
  const auto init = init_embeddings(kb, cfg.name == BaselineName::HolePretrained ? cfg.vectors_path : std::string(),
                                    h.dim, h.seed);
  return train(kb, SideInfoCollection{}, h, init).embeddings;
}

inline Clustering run_baseline(const BaselineConfig& cfg, const OpenKB& kb,
                               const GoldClustering* validation_gold = nullptr,
                               std::optional<EmbeddingSet>* embeddings_out = nullptr) {
  cfg.validate();
  const auto& vocab = kb.np_vocab();
  const std::size_t n = vocab.size();
  std::vector<PhraseId> all(n);
  for (PhraseId i = 0; i < n; ++i) all[i] = i;

  // Grouping baselines have no vectors: the most frequent member represents
  // its cluster, ties to the smallest text.
  const auto grouped = [&](const Partition& p) {
    Clustering c{Kind::NP, {}, 0.0};
    for (const auto& members : p) {
      PhraseId rep = members.front();
      for (auto m : members)
        if (vocab[m].frequency > vocab[rep].frequency ||
            (vocab[m].frequency == vocab[rep].frequency && vocab.text(m) < vocab.text(rep)))
          rep = m;
      c.clusters.push_back({members, rep});
    }
    return c;
  };

  switch (cfg.name) {
    case BaselineName::Morph: {
      std::map<std::string, std::vector<PhraseId>> groups;
      for (const auto& p : vocab) groups[morph_normalize(p.text)].push_back(p.id);
      Partition part;
      for (auto& [k, m] : groups) part.push_back(std::move(m));
      return grouped(canonical_partition(std::move(part)));
    }
    case BaselineName::Ppdb:
      return grouped(connected_components(ppdb_equivalences(cfg.ppdb_path, cfg.ppdb_confidence_min, kb, Kind::NP), n));
    case BaselineName::EntLink:
      return grouped(connected_components(entity_link_equivalences(kb), n));
    default:
      break;
  }

  // HAC baselines: a distance function over NP ids plus, for the embedding
  // methods, the vectors used for representatives.
  std::optional<EmbeddingSet> emb;
  std::function<double(PhraseId, PhraseId)> distance;
  DocumentFrequency df;
  std::vector<std::set<Attribute>> attrs;
  std::vector<std::string> lowered;
  switch (cfg.name) {
    case BaselineName::IdfHac:
      df = build_df(kb);
      distance = [&](PhraseId a, PhraseId b) { return 1.0 - idf_overlap_score(kb, a, b, df); };
      break;
    case BaselineName::StrSimHac:
      for (const auto& p : vocab) lowered.push_back(to_lower(p.text));
      distance = [&](PhraseId a, PhraseId b) { return 1.0 - jaro_winkler(lowered[a], lowered[b]); };
      break;
    case BaselineName::AttrHac:
      attrs = np_attributes(kb);
      distance = [&](PhraseId a, PhraseId b) { return 1.0 - jaccard(attrs[a], attrs[b]); };
      break;
    case BaselineName::WordVecAvg:
      emb = init_embeddings(kb, cfg.vectors_path, cfg.hole.dim, cfg.hole.seed);
      break;
    default:
      emb = hole_embeddings(kb, cfg);
      break;
  }
  if (emb) {
    for (auto id : all)
      if (squared_norm(emb->np.row(id)) == 0.0)
        throw ArgumentError("zero vector for phrase '" + vocab.text(id) + "'");
    distance = [&](PhraseId a, PhraseId b) { return cosine_distance(emb->np.row(a), emb->np.row(b)); };
  }

  const auto dendrogram_over = [&](const std::vector<PhraseId>& ids, double ceiling) {
    return build_dendrogram(ids, [&](std::size_t i, std::size_t j) { return distance(ids[i], ids[j]); }, ceiling);
  };

  double threshold = cfg.threshold;
  if (!cfg.grid.empty() && validation_gold && !validation_gold->empty()) {
    std::vector<PhraseId> ids;
    for (const auto& [id, label] : validation_gold->assignment) ids.push_back(id);
    const double ceiling = *std::max_element(cfg.grid.begin(), cfg.grid.end());
    threshold = choose_threshold(dendrogram_over(ids, ceiling), *validation_gold, cfg.grid).threshold;
  }
  const auto part = dendrogram_over(all, threshold).cut(threshold);
  Clustering c;
  if (emb) {
    c = make_clustering(Kind::NP, part, vocab, emb->np, threshold);
  } else {
    c = grouped(part);
    c.threshold_used = threshold;
  }
  if (embeddings_out) *embeddings_out = std::move(emb);
  return c;
}

}  // namespace okbc
