#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "clustering.hpp"
#include "common.hpp"
#include "embedding.hpp"
#include "kb_model.hpp"
#include "metrics.hpp"
#include "side_info.hpp"

namespace okbc {

// ---------------------------------------------------------------------------
// Complete-linkage agglomeration
// ---------------------------------------------------------------------------

// Items are 0..n-1; a cluster is labelled by its smallest item.
struct Merge {
  std::size_t a = 0;  // surviving label, a < b
  std::size_t b = 0;
  double height = 0.0;
  bool operator==(const Merge&) const = default;
};

// Greedy complete-linkage merges up to `ceiling`. At each step the pair with
// the smallest (distance, label_a, label_b) is merged. Only distances at or
// below the ceiling are ever stored: a complete-linkage distance is the max of
// its parts, so a pair above the ceiling can never come back under it.
// `dist(i, j)` is called with i < j.
template <class Distance>
std::vector<Merge> complete_linkage_merges(std::size_t n, Distance&& dist, double ceiling) {
  using Entry = std::tuple<double, std::size_t, std::size_t, std::uint32_t, std::uint32_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  std::vector<std::unordered_map<std::size_t, double>> near(n);
  std::vector<std::uint32_t> version(n, 0);
  std::vector<bool> alive(n, true);

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = dist(i, j);
      if (!(d <= ceiling)) continue;
      near[i].emplace(j, d);
      near[j].emplace(i, d);
      heap.emplace(d, i, j, 0u, 0u);
    }
  }

  std::vector<Merge> merges;
  while (!heap.empty()) {
    const auto [d, a, b, va, vb] = heap.top();
    heap.pop();
    if (!alive[a] || !alive[b] || version[a] != va || version[b] != vb) continue;
    merges.push_back({a, b, d});
    alive[b] = false;
    ++version[a];

    std::unordered_map<std::size_t, double> merged;
    for (const auto& [k, da] : near[a]) {
      if (k == b) continue;
      near[k].erase(a);
      auto it = near[b].find(k);
      if (it != near[b].end()) merged.emplace(k, std::max(da, it->second));
    }
    for (const auto& [k, db] : near[b]) near[k].erase(b);
    near[b].clear();
    near[a] = std::move(merged);
    for (const auto& [k, dk] : near[a]) {
      near[k].emplace(a, dk);
      const auto lo = std::min(a, k), hi = std::max(a, k);
      heap.emplace(dk, lo, hi, version[lo], version[hi]);
    }
  }
  return merges;
}

// Applies every merge at or below `threshold`. Merge heights are
// non-decreasing under complete linkage, so this is a prefix of `merges`.
inline std::vector<std::size_t> cut_labels(std::size_t n, const std::vector<Merge>& merges, double threshold) {
  UnionFind uf;
  for (std::size_t i = 0; i < n; ++i) uf.add();
  for (const auto& m : merges) {
    if (m.height > threshold) break;
    uf.unite(m.a, m.b);
  }
  std::vector<std::size_t> label(n);
  for (std::size_t i = 0; i < n; ++i) label[i] = uf.find(i);
  return label;
}

// 1 - cosine similarity, with the similarity clamped to [-1, 1].
inline double cosine_distance(std::span<const double> a, std::span<const double> b) {
  return 1.0 - std::clamp(cosine_similarity(a, b), -1.0, 1.0);
}

// Points sorted by id, each paired with its vector.
struct PointSet {
  std::vector<PhraseId> ids;
  std::vector<std::vector<double>> vectors;

  std::size_t size() const noexcept { return ids.size(); }
};

inline PointSet make_point_set(const std::map<PhraseId, std::vector<double>>& vectors) {
  PointSet ps;
  for (const auto& [id, v] : vectors) {
    if (squared_norm(v) == 0.0) throw ArgumentError("zero vector for phrase id " + std::to_string(id));
    ps.ids.push_back(id);
    ps.vectors.push_back(v);
  }
  return ps;
}

inline PointSet make_point_set(const Matrix& rows, const std::vector<PhraseId>& ids,
                               const Vocabulary* vocab = nullptr) {
  std::map<PhraseId, std::vector<double>> m;
  for (auto id : ids) {
    auto r = rows.row(id);
    if (squared_norm(r) == 0.0)
      throw ArgumentError("zero vector for phrase " + (vocab ? "'" + vocab->text(id) + "'" : std::to_string(id)));
    m.emplace(id, std::vector<double>(r.begin(), r.end()));
  }
  return make_point_set(m);
}

// Merge history of one point set; cutting it at any threshold up to the build
// ceiling yields the clustering for that threshold.
struct Dendrogram {
  std::vector<PhraseId> ids;
  std::vector<Merge> merges;
  double ceiling = 0.0;

  Partition cut(double threshold) const {
    if (threshold > ceiling) throw ArgumentError("cut threshold exceeds the dendrogram ceiling");
    const auto label = cut_labels(ids.size(), merges, threshold);
    std::map<std::size_t, std::vector<PhraseId>> groups;
    for (std::size_t i = 0; i < ids.size(); ++i) groups[label[i]].push_back(ids[i]);
    Partition p;
    for (auto& [l, members] : groups) p.push_back(std::move(members));
    return canonical_partition(std::move(p));
  }
};

template <class Distance>
Dendrogram build_dendrogram(std::vector<PhraseId> ids, Distance&& dist, double ceiling) {
  Dendrogram dg{std::move(ids), {}, ceiling};
  dg.merges = complete_linkage_merges(dg.ids.size(), dist, ceiling);
  return dg;
}

inline Dendrogram cosine_dendrogram(const PointSet& ps, double ceiling) {
  return build_dendrogram(ps.ids, [&](std::size_t i, std::size_t j) {
    return cosine_distance(ps.vectors[i], ps.vectors[j]);
  }, ceiling);
}

// Complete-linkage clusters whose merge distances (1 - cosine) stay within `threshold`.
inline Partition hac_complete_linkage(const std::map<PhraseId, std::vector<double>>& vectors, double threshold) {
  return cosine_dendrogram(make_point_set(vectors), threshold).cut(threshold);
}

// ---------------------------------------------------------------------------
// Threshold selection
// ---------------------------------------------------------------------------

inline std::vector<double> default_threshold_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 19; ++i) grid.push_back(i / 20.0);
  return grid;
}

struct ThresholdChoice {
  double threshold = 0.0;
  double mean_f1 = 0.0;
  std::vector<std::pair<double, double>> scores;  // (threshold, mean F1)
};

// Highest mean of macro, micro and pairwise F1 on the gold-labelled points;
// ties go to the smaller threshold.
inline ThresholdChoice choose_threshold(const Dendrogram& dg, const GoldClustering& validation_gold,
                                        std::vector<double> grid) {
  if (grid.empty()) throw ArgumentError("threshold grid is empty");
  if (validation_gold.empty()) throw ConfigError("validation gold clustering is empty");
  std::sort(grid.begin(), grid.end());
  ThresholdChoice best;
  bool first = true;
  for (double t : grid) {
    const double score = evaluate(dg.cut(t), validation_gold).mean_f1();
    best.scores.emplace_back(t, score);
    if (first || score > best.mean_f1) {
      best.threshold = t;
      best.mean_f1 = score;
      first = false;
    }
  }
  return best;
}

inline ThresholdChoice choose_threshold(const std::map<PhraseId, std::vector<double>>& vectors,
                                        const GoldClustering& validation_gold, const std::vector<double>& grid) {
  if (grid.empty()) throw ArgumentError("threshold grid is empty");
  const double ceiling = *std::max_element(grid.begin(), grid.end());
  return choose_threshold(cosine_dendrogram(make_point_set(vectors), ceiling), validation_gold, grid);
}

// ---------------------------------------------------------------------------
// Representatives and KB rewriting
// ---------------------------------------------------------------------------

// Member closest in cosine to the frequency-weighted mean; ties go to the
// lexicographically smallest surface text.
inline PhraseId select_representative(const std::vector<PhraseId>& members, const Vocabulary& vocab,
                                      const Matrix& vectors) {
  if (members.empty()) throw ArgumentError("cannot choose a representative for an empty cluster");
  if (members.size() == 1) return members.front();
  std::vector<double> mean(vectors.cols(), 0.0);
  double total = 0.0;
  for (auto m : members) {
    const auto f = static_cast<double>(vocab[m].frequency);
    auto v = vectors.row(m);
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += f * v[i];
    total += f;
  }
  if (total > 0.0)
    for (auto& x : mean) x /= total;
  PhraseId best = members.front();
  double best_sim = -std::numeric_limits<double>::infinity();
  for (auto m : members) {
    double sim = cosine_similarity(vectors.row(m), mean);
    if (std::isnan(sim)) sim = -std::numeric_limits<double>::infinity();
    if (sim > best_sim || (sim == best_sim && vocab.text(m) < vocab.text(best))) {
      best = m;
      best_sim = sim;
    }
  }
  return best;
}

inline Clustering make_clustering(Kind kind, const Partition& partition, const Vocabulary& vocab,
                                  const Matrix& vectors, double threshold) {
  Clustering c{kind, {}, threshold};
  for (const auto& members : canonical_partition(partition))
    c.clusters.push_back({members, select_representative(members, vocab, vectors)});
  return c;
}

// Every phrase of one kind clustered at `threshold`.
inline Clustering cluster_vocabulary(const OpenKB& kb, const EmbeddingSet& emb, Kind kind, double threshold) {
  std::vector<PhraseId> ids(kb.vocab(kind).size());
  for (PhraseId i = 0; i < ids.size(); ++i) ids[i] = i;
  const auto ps = make_point_set(emb.of(kind), ids, &kb.vocab(kind));
  return make_clustering(kind, cosine_dendrogram(ps, threshold).cut(threshold), kb.vocab(kind), emb.of(kind),
                         threshold);
}

struct CanonicalTriple {
  std::int64_t triple_id = 0;
  TripleKey original;
  TripleKey canonical;
  bool duplicate = false;  // another distinct triple maps to the same canonical triple
};

struct CanonicalKb {
  std::vector<CanonicalTriple> triples;
  // Canonical triple -> triple_ids of distinct source triples that collapsed onto it.
  std::map<TripleKey, std::vector<std::int64_t>> duplicates;
};

inline std::vector<PhraseId> representative_map(const Clustering& c, std::size_t vocab_size) {
  constexpr auto unset = std::numeric_limits<PhraseId>::max();
  std::vector<PhraseId> rep(vocab_size, unset);
  for (const auto& cl : c.clusters)
    for (auto m : cl.members) {
      if (m >= vocab_size) throw InvariantError("cluster member outside the vocabulary");
      rep[m] = cl.representative;
    }
  for (PhraseId i = 0; i < vocab_size; ++i)
    if (rep[i] == unset)
      throw InvariantError(std::string(to_string(c.kind)) + " phrase " + std::to_string(i) + " is not clustered");
  return rep;
}

inline CanonicalKb canonicalize_kb(const OpenKB& kb, const Clustering& np_clusters, const Clustering& rel_clusters) {
  const auto np_rep = representative_map(np_clusters, kb.np_vocab().size());
  const auto rel_rep = representative_map(rel_clusters, kb.rel_vocab().size());
  CanonicalKb out;
  std::map<TripleKey, std::set<TripleKey>> sources;
  std::map<TripleKey, std::vector<std::int64_t>> ids;
  for (const auto& t : kb.triples()) {
    CanonicalTriple ct;
    ct.triple_id = t.triple_id;
    ct.original = {t.subject, t.relation, t.object};
    ct.canonical = {np_rep[t.subject], rel_rep[t.relation], np_rep[t.object]};
    if (sources[ct.canonical].insert(ct.original).second) ids[ct.canonical].push_back(t.triple_id);
    out.triples.push_back(ct);
  }
  for (auto& ct : out.triples) ct.duplicate = sources[ct.canonical].size() > 1;
  for (auto& [key, list] : ids)
    if (sources[key].size() > 1) out.duplicates.emplace(key, std::move(list));
  return out;
}

// Triples-file records extended with canonical_* fields.
inline void write_canonical_kb(std::ostream& out, const OpenKB& kb, const CanonicalKb& ckb) {
  for (std::size_t i = 0; i < ckb.triples.size(); ++i) {
    const auto& ct = ckb.triples[i];
    auto rec = triple_to_json(kb, kb.triples()[i]);
    rec["canonical_subject"] = kb.np_vocab().text(ct.canonical.s);
    rec["canonical_relation"] = kb.rel_vocab().text(ct.canonical.p);
    rec["canonical_object"] = kb.np_vocab().text(ct.canonical.o);
    rec["canonical_duplicate"] = ct.duplicate;
    out << rec.dump() << '\n';
  }
}

}  // namespace okbc
