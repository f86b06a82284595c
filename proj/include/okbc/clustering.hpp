#pragma once

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "common.hpp"
#include "kb_model.hpp"

namespace okbc {

// Sorted member lists, ordered by their smallest member.
using Partition = std::vector<std::vector<PhraseId>>;

inline Partition canonical_partition(Partition p) {
  for (auto& c : p) std::sort(c.begin(), c.end());
  p.erase(std::remove_if(p.begin(), p.end(), [](const auto& c) { return c.empty(); }), p.end());
  std::sort(p.begin(), p.end());
  return p;
}

inline Partition singletons(const std::vector<PhraseId>& ids) {
  Partition p;
  for (auto id : ids) p.push_back({id});
  return canonical_partition(std::move(p));
}

struct Cluster {
  std::vector<PhraseId> members;  // sorted
  PhraseId representative = 0;
  bool operator==(const Cluster&) const = default;
};

struct Clustering {
  Kind kind = Kind::NP;
  std::vector<Cluster> clusters;
  double threshold_used = 0.0;

  Partition partition() const {
    Partition p;
    for (const auto& c : clusters) p.push_back(c.members);
    return canonical_partition(std::move(p));
  }

  // Clusters are disjoint, non-empty, hold their representative and, when
  // `covers_all` is set, together cover ids 0..vocab_size-1.
  void check(std::size_t vocab_size, bool covers_all = true) const {
    std::vector<int> seen(vocab_size, 0);
    for (const auto& c : clusters) {
      if (c.members.empty()) throw InvariantError("empty cluster");
      if (!std::binary_search(c.members.begin(), c.members.end(), c.representative))
        throw InvariantError("representative is not a member of its cluster");
      for (auto m : c.members) {
        if (m >= vocab_size) throw InvariantError("cluster member outside the vocabulary");
        if (seen[m]++) throw InvariantError("phrase assigned to two clusters");
      }
    }
    if (covers_all && std::find(seen.begin(), seen.end(), 0) != seen.end())
      throw InvariantError("clustering does not cover the vocabulary");
  }

  bool operator==(const Clustering&) const = default;
};

// One JSON object per cluster: kind, representative, members, frequencies, threshold.
inline void write_clusters(std::ostream& out, const Clustering& c, const OpenKB& kb) {
  const auto& vocab = kb.vocab(c.kind);
  for (const auto& cl : c.clusters) {
    nlohmann::json members = nlohmann::json::array(), freqs = nlohmann::json::array();
    for (auto m : cl.members) {
      members.push_back(vocab.text(m));
      freqs.push_back(vocab[m].frequency);
    }
    nlohmann::json rec = {{"kind", to_string(c.kind)},
                          {"representative", vocab.text(cl.representative)},
                          {"members", std::move(members)},
                          {"frequencies", std::move(freqs)},
                          {"threshold", c.threshold_used}};
    out << rec.dump() << '\n';
  }
}

// Reads the records of one kind from a cluster file; records of the other kind are skipped.
inline Clustering read_clusters(std::istream& in, const OpenKB& kb, Kind kind) {
  Clustering c;
  c.kind = kind;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (normalize_whitespace(line).empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw ParseError("malformed cluster record", line_no);
    }
    if (kind_from_string(rec.at("kind").get<std::string>()) != kind) continue;
    const auto& vocab = kb.vocab(kind);
    Cluster cl;
    for (const auto& m : rec.at("members")) {
      auto id = vocab.find(m.get<std::string>());
      if (!id) throw LookupError("cluster member '" + m.get<std::string>() + "' not in KB");
      cl.members.push_back(*id);
    }
    std::sort(cl.members.begin(), cl.members.end());
    auto rep = vocab.find(rec.at("representative").get<std::string>());
    if (!rep) throw LookupError("cluster representative not in KB");
    cl.representative = *rep;
    c.threshold_used = rec.value("threshold", 0.0);
    c.clusters.push_back(std::move(cl));
  }
  return c;
}

}  // namespace okbc
