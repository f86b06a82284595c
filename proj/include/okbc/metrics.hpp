#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "clustering.hpp"
#include "common.hpp"
#include "kb_model.hpp"

namespace okbc {

// nullopt marks a 0/0 case.
using Score = std::optional<double>;

struct PrecisionRecall {
  Score precision;
  Score recall;
};

inline Score f1_score(const Score& p, const Score& r) {
  if (!p || !r) return std::nullopt;
  if (*p + *r == 0.0) return 0.0;
  return 2.0 * *p * *r / (*p + *r);
}

namespace detail {

inline std::unordered_map<PhraseId, std::size_t> membership(const Partition& p) {
  std::unordered_map<PhraseId, std::size_t> m;
  for (std::size_t i = 0; i < p.size(); ++i)
    for (auto id : p[i]) m.emplace(id, i);
  return m;
}

inline void require_same_elements(const Partition& c, const Partition& e) {
  if (c.empty() || e.empty()) throw UndefinedMetricError("metrics are undefined for an empty clustering");
  std::vector<PhraseId> a, b;
  for (const auto& x : c) a.insert(a.end(), x.begin(), x.end());
  for (const auto& x : e) b.insert(b.end(), x.begin(), x.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a != b) throw ArgumentError("predicted and gold clusterings cover different elements");
}

// Fraction of clusters in `c` contained in a single cluster of `e`.
inline double purity_fraction(const Partition& c, const Partition& e) {
  const auto in_e = membership(e);
  std::size_t pure = 0;
  for (const auto& cl : c) {
    const auto first = in_e.at(cl.front());
    pure += std::all_of(cl.begin(), cl.end(), [&](PhraseId id) { return in_e.at(id) == first; });
  }
  return static_cast<double>(pure) / static_cast<double>(c.size());
}

// (1/N) * sum over c of the largest overlap with a single cluster of `e`.
inline double micro_purity(const Partition& c, const Partition& e) {
  const auto in_e = membership(e);
  std::size_t total = 0, n = 0;
  for (const auto& cl : c) {
    std::map<std::size_t, std::size_t> counts;
    for (auto id : cl) ++counts[in_e.at(id)];
    std::size_t best = 0;
    for (const auto& [k, v] : counts) best = std::max(best, v);
    total += best;
    n += cl.size();
  }
  return static_cast<double>(total) / static_cast<double>(n);
}

inline std::uint64_t choose2(std::uint64_t n) { return n * (n - (n > 0)) / 2; }

}  // namespace detail

inline PrecisionRecall macro_scores(const Partition& c, const Partition& e) {
  detail::require_same_elements(c, e);
  return {detail::purity_fraction(c, e), detail::purity_fraction(e, c)};
}

inline PrecisionRecall micro_scores(const Partition& c, const Partition& e) {
  detail::require_same_elements(c, e);
  return {detail::micro_purity(c, e), detail::micro_purity(e, c)};
}

inline PrecisionRecall pairwise_scores(const Partition& c, const Partition& e) {
  detail::require_same_elements(c, e);
  const auto in_e = detail::membership(e);
  std::uint64_t hits = 0, c_pairs = 0, e_pairs = 0;
  for (const auto& cl : c) {
    std::map<std::size_t, std::uint64_t> counts;
    for (auto id : cl) ++counts[in_e.at(id)];
    for (const auto& [k, v] : counts) hits += detail::choose2(v);
    c_pairs += detail::choose2(cl.size());
  }
  for (const auto& cl : e) e_pairs += detail::choose2(cl.size());
  const auto ratio = [&](std::uint64_t den) -> Score {
    if (den == 0) return std::nullopt;
    return static_cast<double>(hits) / static_cast<double>(den);
  };
  return {ratio(c_pairs), ratio(e_pairs)};
}

// Drops members without a gold label, then drops emptied clusters.
inline Clustering restrict_to_gold(const Clustering& clusters, const GoldClustering& gold) {
  Clustering out{clusters.kind, {}, clusters.threshold_used};
  for (const auto& cl : clusters.clusters) {
    Cluster kept;
    for (auto m : cl.members)
      if (gold.find(m)) kept.members.push_back(m);
    if (kept.members.empty()) continue;
    kept.representative =
        std::binary_search(kept.members.begin(), kept.members.end(), cl.representative) ? cl.representative
                                                                                         : kept.members.front();
    out.clusters.push_back(std::move(kept));
  }
  return out;
}

inline Partition restrict_partition(const Partition& p, const GoldClustering& gold) {
  Partition out;
  for (const auto& cl : p) {
    std::vector<PhraseId> kept;
    for (auto m : cl)
      if (gold.find(m)) kept.push_back(m);
    if (!kept.empty()) out.push_back(std::move(kept));
  }
  return canonical_partition(std::move(out));
}

// Gold clusters over exactly the given elements.
inline Partition gold_partition(const Partition& restricted, const GoldClustering& gold) {
  std::map<std::string, std::vector<PhraseId>> groups;
  for (const auto& cl : restricted)
    for (auto m : cl) groups[*gold.find(m)].push_back(m);
  Partition out;
  for (auto& [label, members] : groups) out.push_back(std::move(members));
  return canonical_partition(std::move(out));
}

struct MetricsReport {
  PrecisionRecall macro, micro, pairwise;
  Score macro_f1, micro_f1, pair_f1;
  std::size_t n_clusters = 0;       // |C|
  std::size_t n_gold_clusters = 0;  // |E|
  std::size_t n_elements = 0;       // N

  // Mean of the three F1 scores with undefined values counted as 0.
  double mean_f1() const { return (macro_f1.value_or(0.0) + micro_f1.value_or(0.0) + pair_f1.value_or(0.0)) / 3.0; }
};

inline MetricsReport evaluate_partitions(const Partition& c, const Partition& e) {
  MetricsReport r;
  r.macro = macro_scores(c, e);
  r.micro = micro_scores(c, e);
  r.pairwise = pairwise_scores(c, e);
  r.macro_f1 = f1_score(r.macro.precision, r.macro.recall);
  r.micro_f1 = f1_score(r.micro.precision, r.micro.recall);
  r.pair_f1 = f1_score(r.pairwise.precision, r.pairwise.recall);
  r.n_clusters = c.size();
  r.n_gold_clusters = e.size();
  for (const auto& cl : c) r.n_elements += cl.size();
  return r;
}

// Scores `predicted` against `gold` over the gold-labelled elements only.
inline MetricsReport evaluate(const Partition& predicted, const GoldClustering& gold) {
  const auto c = restrict_partition(predicted, gold);
  if (c.empty()) throw UndefinedMetricError("no predicted element carries a gold label");
  return evaluate_partitions(c, gold_partition(c, gold));
}

inline MetricsReport evaluate(const Clustering& predicted, const GoldClustering& gold) {
  return evaluate(predicted.partition(), gold);
}

inline nlohmann::json score_json(const Score& s) { return s ? nlohmann::json(*s) : nlohmann::json(nullptr); }

inline nlohmann::json report_to_json(const MetricsReport& r) {
  return {{"macro_p", score_json(r.macro.precision)}, {"macro_r", score_json(r.macro.recall)},
          {"macro_f1", score_json(r.macro_f1)},       {"micro_p", score_json(r.micro.precision)},
          {"micro_r", score_json(r.micro.recall)},    {"micro_f1", score_json(r.micro_f1)},
          {"pair_p", score_json(r.pairwise.precision)}, {"pair_r", score_json(r.pairwise.recall)},
          {"pair_f1", score_json(r.pair_f1)},         {"n_clusters", r.n_clusters},
          {"n_gold_clusters", r.n_gold_clusters},     {"n_elements", r.n_elements}};
}

inline std::string format_score(const Score& s) {
  if (!s) return "undef";
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.4f", *s);
  return buf;
}

inline void print_report(std::ostream& out, const MetricsReport& r, const std::string& title = "") {
  if (!title.empty()) out << title << '\n';
  out << "metric     precision  recall     f1\n";
  const auto row = [&](const char* name, const PrecisionRecall& pr, const Score& f1) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%-10s %-10s %-10s %s\n", name, format_score(pr.precision).c_str(),
                  format_score(pr.recall).c_str(), format_score(f1).c_str());
    out << buf;
  };
  row("macro", r.macro, r.macro_f1);
  row("micro", r.micro, r.micro_f1);
  row("pairwise", r.pairwise, r.pair_f1);
  out << "clusters=" << r.n_clusters << " gold_clusters=" << r.n_gold_clusters << " elements=" << r.n_elements
      << '\n';
}

}  // namespace okbc
