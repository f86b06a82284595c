#pragma once

// End-to-end orchestration. Every stage reads only files written by earlier
// stages in the run directory (or explicit path overrides) and writes its own.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <fftw3.h>
#include <json.hpp>

#include "baselines.hpp"
#include "canonicalize.hpp"
#include "clustering.hpp"
#include "common.hpp"
#include "embedding.hpp"
#include "kb_model.hpp"
#include "metrics.hpp"
#include "side_info.hpp"
#include "synthetic.hpp"

namespace okbc {

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct PipelineConfig {
  std::string triples;
  TripleFormat triples_format = TripleFormat::JsonLines;
  std::string gold_np;   // optional; otherwise gold ids inside the triple records
  std::string gold_rel;  // optional; relation clusters are scored only when present
  std::string out = "run";
  std::uint64_t seed = 0;
  bool deterministic = true;
  double validation_fraction = 0.2;
  std::string vectors;  // pretrained word vectors; empty = random initialization
  SideInfoConfig side_info;
  HyperParams hyper;
  std::vector<double> threshold_grid = default_threshold_grid();
  std::optional<double> np_threshold;   // fixed cutoff instead of validation tuning
  std::optional<double> rel_threshold;  // defaults to the NP cutoff
  std::vector<BaselineName> baselines;

  // Hyperparameters with the run-level seed and thread policy applied.
  HyperParams effective_hyper() const {
    auto h = hyper;
    h.seed = seed;
    if (deterministic) h.threads = 1;
    return h;
  }
};

namespace detail {

inline void check_keys(const nlohmann::json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : obj.items())
    if (!allowed.contains(k)) throw ConfigError("unknown config key '" + (where.empty() ? k : where + "." + k) + "'");
}

template <class T>
void take(const nlohmann::json& obj, const char* key, T& out) {
  if (auto it = obj.find(key); it != obj.end()) {
    try {
      out = it->get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
  }
}

template <class E>
E enum_from(const nlohmann::json& obj, const char* key, E fallback,
            const std::vector<std::pair<std::string, E>>& names) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  const auto s = it->get<std::string>();
  for (const auto& [n, v] : names)
    if (n == s) return v;
  throw ConfigError(std::string("config key '") + key + "' has unknown value '" + s + "'");
}

template <class E>
std::string enum_name(E v, const std::vector<std::pair<std::string, E>>& names) {
  for (const auto& [n, e] : names)
    if (e == v) return n;
  return "?";
}

inline const std::vector<std::pair<std::string, HingeForm>> kHinge = {{"sigmoid", HingeForm::Sigmoid},
                                                                       {"raw", HingeForm::Raw}};
inline const std::vector<std::pair<std::string, HingePairing>> kPairing = {
    {"per_positive", HingePairing::PerPositive}, {"cross_product", HingePairing::CrossProduct}};
inline const std::vector<std::pair<std::string, Optimizer>> kOptimizer = {{"sgd", Optimizer::Sgd},
                                                                          {"adagrad", Optimizer::Adagrad}};
inline const std::vector<std::pair<std::string, CorrelationMethod>> kCorrelation = {
    {"auto", CorrelationMethod::Auto}, {"direct", CorrelationMethod::Direct}, {"fft", CorrelationMethod::Fft}};
inline const std::vector<std::pair<std::string, TripleFormat>> kFormat = {{"jsonl", TripleFormat::JsonLines},
                                                                          {"tsv", TripleFormat::Tsv}};

inline HyperParams hyper_from_json(const nlohmann::json& j) {
  check_keys(j, {"dim", "margin", "lambda_str", "lambda_ent", "lambda_rel", "lambda_ent_default",
                 "lambda_rel_default", "lambda_reg", "learning_rate", "batch_size", "epochs",
                 "negatives_per_positive", "max_negative_retries", "hinge", "pairing", "optimizer", "correlation",
                 "threads"},
             "hyperparams");
  HyperParams h;
  take(j, "dim", h.dim);
  take(j, "lambda_str", h.lambda_str);
  take(j, "lambda_ent", h.lambda_ent);
  take(j, "lambda_rel", h.lambda_rel);
  take(j, "lambda_ent_default", h.lambda_ent_default);
  take(j, "lambda_rel_default", h.lambda_rel_default);
  take(j, "lambda_reg", h.lambda_reg);
  take(j, "learning_rate", h.learning_rate);
  take(j, "batch_size", h.batch_size);
  take(j, "epochs", h.epochs);
  take(j, "negatives_per_positive", h.negatives_per_positive);
  take(j, "max_negative_retries", h.max_negative_retries);
  take(j, "threads", h.threads);
  h.hinge = enum_from(j, "hinge", h.hinge, kHinge);
  h.pairing = enum_from(j, "pairing", h.pairing, kPairing);
  h.optimizer = enum_from(j, "optimizer", h.optimizer, kOptimizer);
  h.correlation = enum_from(j, "correlation", h.correlation, kCorrelation);
  // The raw-score hinge has an unbounded range, so its conventional margin is 1.
  h.margin = h.hinge == HingeForm::Raw ? 1.0 : 0.5;
  take(j, "margin", h.margin);
  return h;
}

inline nlohmann::json hyper_to_json(const HyperParams& h) {
  return {{"dim", h.dim},
          {"margin", h.margin},
          {"lambda_str", h.lambda_str},
          {"lambda_ent", h.lambda_ent},
          {"lambda_rel", h.lambda_rel},
          {"lambda_ent_default", h.lambda_ent_default},
          {"lambda_rel_default", h.lambda_rel_default},
          {"lambda_reg", h.lambda_reg},
          {"learning_rate", h.learning_rate},
          {"batch_size", h.batch_size},
          {"epochs", h.epochs},
          {"negatives_per_positive", h.negatives_per_positive},
          {"max_negative_retries", h.max_negative_retries},
          {"hinge", enum_name(h.hinge, kHinge)},
          {"pairing", enum_name(h.pairing, kPairing)},
          {"optimizer", enum_name(h.optimizer, kOptimizer)},
          {"correlation", enum_name(h.correlation, kCorrelation)},
          {"threads", h.threads}};
}

inline SideInfoConfig side_from_json(const nlohmann::json& j) {
  check_keys(j, {"entity_linking", "morph", "idf", "idf_cutoff", "ppdb", "ppdb_confidence_min", "wordnet", "amie",
                 "amie_support_min", "amie_confidence_min", "kbp"},
             "side_info");
  SideInfoConfig s;
  take(j, "entity_linking", s.entity_linking);
  take(j, "morph", s.morph);
  take(j, "idf", s.idf);
  take(j, "idf_cutoff", s.idf_cutoff);
  take(j, "ppdb", s.ppdb_path);
  take(j, "ppdb_confidence_min", s.ppdb_confidence_min);
  take(j, "wordnet", s.wordnet_path);
  take(j, "amie", s.amie);
  take(j, "amie_support_min", s.amie_support_min);
  take(j, "amie_confidence_min", s.amie_confidence_min);
  take(j, "kbp", s.kbp_path);
  return s;
}

inline nlohmann::json side_to_json(const SideInfoConfig& s) {
  return {{"entity_linking", s.entity_linking},
          {"morph", s.morph},
          {"idf", s.idf},
          {"idf_cutoff", s.idf_cutoff},
          {"ppdb", s.ppdb_path},
          {"ppdb_confidence_min", s.ppdb_confidence_min},
          {"wordnet", s.wordnet_path},
          {"amie", s.amie},
          {"amie_support_min", s.amie_support_min},
          {"amie_confidence_min", s.amie_confidence_min},
          {"kbp", s.kbp_path}};
}

}  // namespace detail

// Relative paths inside the config resolve against `base_dir` (the config
// file's directory) when one is given.
inline PipelineConfig config_from_json(const nlohmann::json& j, const std::string& base_dir = "") {
  detail::check_keys(j, {"triples", "triples_format", "gold_np", "gold_rel", "out", "seed", "deterministic",
                         "validation_fraction", "vectors", "side_info", "hyperparams", "threshold_grid",
                         "np_threshold", "rel_threshold", "baselines"},
                     "");
  PipelineConfig c;
  detail::take(j, "triples", c.triples);
  c.triples_format = detail::enum_from(j, "triples_format", c.triples_format, detail::kFormat);
  detail::take(j, "gold_np", c.gold_np);
  detail::take(j, "gold_rel", c.gold_rel);
  detail::take(j, "out", c.out);
  detail::take(j, "seed", c.seed);
  detail::take(j, "deterministic", c.deterministic);
  detail::take(j, "validation_fraction", c.validation_fraction);
  detail::take(j, "vectors", c.vectors);
  if (j.contains("side_info")) c.side_info = detail::side_from_json(j.at("side_info"));
  if (j.contains("hyperparams")) c.hyper = detail::hyper_from_json(j.at("hyperparams"));
  detail::take(j, "threshold_grid", c.threshold_grid);
  if (j.contains("np_threshold") && !j.at("np_threshold").is_null()) c.np_threshold = j.at("np_threshold").get<double>();
  if (j.contains("rel_threshold") && !j.at("rel_threshold").is_null())
    c.rel_threshold = j.at("rel_threshold").get<double>();
  if (j.contains("baselines"))
    for (const auto& b : j.at("baselines")) c.baselines.push_back(baseline_from_string(b.get<std::string>()));

  if (!base_dir.empty()) {
    const auto resolve = [&](std::string& p) {
      if (!p.empty() && std::filesystem::path(p).is_relative()) p = (std::filesystem::path(base_dir) / p).string();
    };
    for (auto* p : {&c.triples, &c.gold_np, &c.gold_rel, &c.vectors, &c.side_info.ppdb_path,
                    &c.side_info.wordnet_path, &c.side_info.kbp_path})
      resolve(*p);
  }
  return c;
}

inline nlohmann::json config_to_json(const PipelineConfig& c) {
  nlohmann::json baselines = nlohmann::json::array();
  for (auto b : c.baselines) baselines.push_back(to_string(b));
  return {{"triples", c.triples},
          {"triples_format", detail::enum_name(c.triples_format, detail::kFormat)},
          {"gold_np", c.gold_np},
          {"gold_rel", c.gold_rel},
          {"out", c.out},
          {"seed", c.seed},
          {"deterministic", c.deterministic},
          {"validation_fraction", c.validation_fraction},
          {"vectors", c.vectors},
          {"side_info", detail::side_to_json(c.side_info)},
          {"hyperparams", detail::hyper_to_json(c.hyper)},
          {"threshold_grid", c.threshold_grid},
          {"np_threshold", c.np_threshold ? nlohmann::json(*c.np_threshold) : nlohmann::json(nullptr)},
          {"rel_threshold", c.rel_threshold ? nlohmann::json(*c.rel_threshold) : nlohmann::json(nullptr)},
          {"baselines", baselines}};
}

inline PipelineConfig load_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j, std::filesystem::path(path).parent_path().string());
}

inline void validate_config(const PipelineConfig& c) {
  if (c.triples.empty()) throw ConfigError("config needs 'triples'");
  for (const auto* p : {&c.triples, &c.gold_np, &c.gold_rel, &c.vectors})
    if (!p->empty() && !std::filesystem::exists(*p)) throw ConfigError("file '" + *p + "' does not exist");
  if (!(c.validation_fraction > 0.0 && c.validation_fraction < 1.0))
    throw ConfigError("validation_fraction must lie in (0, 1)");
  if (c.threshold_grid.empty()) throw ConfigError("threshold_grid is empty");
  for (double t : c.threshold_grid)
    if (!(t >= 0.0 && t <= 2.0)) throw ConfigError("threshold_grid values must lie in [0, 2]");
  c.effective_hyper().validate();
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

struct ArtifactPaths {
  std::string triples, split, gold_np, gold_rel, side_info, embeddings, train_log, clusters, canonical, metrics,
      leaderboard, manifest;

  explicit ArtifactPaths(const std::string& out = "run") {
    const auto p = [&](const char* name) { return (std::filesystem::path(out) / name).string(); };
    triples = p("triples.jsonl");
    split = p("split.json");
    gold_np = p("gold_np.tsv");
    gold_rel = p("gold_rel.tsv");
    side_info = p("side_info.json");
    embeddings = p("embeddings.txt");
    train_log = p("train_log.jsonl");
    clusters = p("clusters.jsonl");
    canonical = p("canonical_triples.jsonl");
    metrics = p("metrics.json");
    leaderboard = p("leaderboard.tsv");
    manifest = p("manifest.json");
  }
};

struct StageError : Error {
  StageError(const std::string& stage, const std::string& cause)
      : Error("stage '" + stage + "' failed: " + cause), stage_(stage) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

template <class F>
auto run_stage(const std::string& name, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

inline void write_gold(const std::string& path, const GoldClustering& gold, const OpenKB& kb) {
  auto out = open_output(path);
  for (const auto& [id, label] : gold.assignment) out << kb.vocab(gold.kind).text(id) << '\t' << label << '\n';
}

inline nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  auto out = open_output(path);
  out << j.dump(2) << '\n';
}

// The split as stored on disk.
struct StoredSplit {
  std::vector<std::size_t> validation_triples, test_triples;
  std::vector<std::string> validation_entities;
};

inline StoredSplit read_split(const std::string& path) {
  const auto j = read_json(path);
  return {j.at("validation_triples").get<std::vector<std::size_t>>(),
          j.at("test_triples").get<std::vector<std::size_t>>(),
          j.at("validation_entities").get<std::vector<std::string>>()};
}

// Gold restricted to the NPs of one side of the split. Validation keeps labels
// of sampled entities only and test keeps the rest, so no gold entity is scored
// on both sides.
inline GoldClustering split_gold(const OpenKB& kb, const GoldClustering& gold, const StoredSplit& split,
                                 bool validation) {
  const std::set<std::string> sampled(split.validation_entities.begin(), split.validation_entities.end());
  KbView view{&kb, validation ? split.validation_triples : split.test_triples};
  GoldClustering out{Kind::NP, {}};
  for (auto id : view.phrase_ids(Kind::NP))
    if (const auto* g = gold.find(id); g && sampled.contains(*g) == validation) out.assignment.emplace(id, *g);
  return out;
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

// Reads the input triples and gold, writes triples.jsonl, gold_np.tsv
// (gold_rel.tsv) and split.json.
inline void stage_ingest(const PipelineConfig& cfg, const ArtifactPaths& paths) {
  run_stage("ingest", [&] {
    std::filesystem::create_directories(std::filesystem::path(paths.triples).parent_path());
    const auto kb = load_triples(cfg.triples, cfg.triples_format);
    kb.audit();
    const auto gold = cfg.gold_np.empty() ? gold_from_triples(kb) : load_gold_clusters(cfg.gold_np, kb, Kind::NP);
    {
      auto out = open_output(paths.triples);
      write_triples(kb, out);
    }
    write_gold(paths.gold_np, gold, kb);
    if (!cfg.gold_rel.empty()) write_gold(paths.gold_rel, load_gold_clusters(cfg.gold_rel, kb, Kind::REL), kb);
    else std::filesystem::remove(paths.gold_rel);
    const auto split = split_validation(kb, gold, cfg.validation_fraction, cfg.seed);
    write_json(paths.split, {{"fraction", cfg.validation_fraction},
                             {"seed", cfg.seed},
                             {"validation_entities", split.validation_entities},
                             {"validation_triples", split.validation.triple_indices},
                             {"test_triples", split.test.triple_indices}});
    return 0;
  });
}

inline OpenKB load_ingested(const ArtifactPaths& paths) { return load_triples(paths.triples); }

inline SideInfoResult stage_sideinfo(const PipelineConfig& cfg, const ArtifactPaths& paths) {
  return run_stage("sideinfo", [&] {
    const auto kb = load_ingested(paths);
    auto r = assemble_side_info(kb, cfg.side_info);
    write_json(paths.side_info, side_info_to_json(r, kb));
    return r;
  });
}

inline EmbeddingSet stage_embed(const PipelineConfig& cfg, const ArtifactPaths& paths) {
  return run_stage("embed", [&] {
    const auto kb = load_ingested(paths);
    const auto side = side_info_from_json(read_json(paths.side_info), kb);
    const auto h = cfg.effective_hyper();
    auto log = open_output(paths.train_log);
    auto result = train(kb, side, h, init_embeddings(kb, cfg.vectors, h.dim, h.seed),
                        [&](const EpochRecord& r) { log << epoch_to_json(r).dump() << '\n'; });
    save_checkpoint(paths.embeddings, result.embeddings, kb, h.seed);
    return std::move(result.embeddings);
  });
}

struct ClusterOutcome {
  Clustering np, rel;
  double validation_mean_f1 = 0.0;
  std::vector<std::pair<double, double>> threshold_scores;
};

// NP cutoff tuned on validation gold unless fixed; relation cutoff fixed or
// copied from the NP cutoff.
inline ClusterOutcome stage_cluster(const PipelineConfig& cfg, const ArtifactPaths& paths) {
  return run_stage("cluster", [&] {
    const auto kb = load_ingested(paths);
    const auto emb = load_checkpoint(paths.embeddings, kb);
    const auto gold = load_gold_clusters(paths.gold_np, kb, Kind::NP);
    const auto split = read_split(paths.split);
    const auto validation = split_gold(kb, gold, split, true);

    ClusterOutcome out;
    double np_t = 0.0;
    if (cfg.np_threshold) {
      np_t = *cfg.np_threshold;
      if (!validation.empty()) {
        std::vector<PhraseId> ids;
        for (const auto& [id, l] : validation.assignment) ids.push_back(id);
        out.validation_mean_f1 =
            evaluate(cosine_dendrogram(make_point_set(emb.np, ids, &kb.np_vocab()), np_t).cut(np_t), validation)
                .mean_f1();
      }
    } else {
      std::vector<PhraseId> ids;
      for (const auto& [id, l] : validation.assignment) ids.push_back(id);
      if (ids.empty()) throw ConfigError("validation split has no gold-labelled noun phrases");
      const double ceiling = *std::max_element(cfg.threshold_grid.begin(), cfg.threshold_grid.end());
      const auto choice = choose_threshold(cosine_dendrogram(make_point_set(emb.np, ids, &kb.np_vocab()), ceiling),
                                           validation, cfg.threshold_grid);
      np_t = choice.threshold;
      out.validation_mean_f1 = choice.mean_f1;
      out.threshold_scores = choice.scores;
    }
    out.np = cluster_vocabulary(kb, emb, Kind::NP, np_t);
    out.rel = cluster_vocabulary(kb, emb, Kind::REL, cfg.rel_threshold.value_or(np_t));
    out.np.check(kb.np_vocab().size());
    out.rel.check(kb.rel_vocab().size());
    {
      auto f = open_output(paths.clusters);
      write_clusters(f, out.np, kb);
      write_clusters(f, out.rel, kb);
    }
    {
      auto f = open_output(paths.canonical);
      write_canonical_kb(f, kb, canonicalize_kb(kb, out.np, out.rel));
    }
    return out;
  });
}

struct LeaderboardRow {
  std::string method;
  MetricsReport report;
};

struct EvaluationOutcome {
  MetricsReport np;
  std::optional<MetricsReport> rel;
  std::vector<LeaderboardRow> rows;  // the full model first, then baselines
};

inline std::string display_name(BaselineName n) {
  switch (n) {
    case BaselineName::Morph: return "Morph Norm";
    case BaselineName::Ppdb: return "PPDB";
    case BaselineName::EntLink: return "EntLinker";
    case BaselineName::IdfHac: return "IDF HAC";
    case BaselineName::StrSimHac: return "StrSim HAC";
    case BaselineName::AttrHac: return "Attr HAC";
    case BaselineName::WordVecAvg: return "Word vectors";
    case BaselineName::HoleRandom: return "HolE (Random)";
    case BaselineName::HolePretrained: return "HolE (Pretrained)";
  }
  return "?";
}

inline BaselineConfig baseline_config(const PipelineConfig& cfg, BaselineName name) {
  BaselineConfig b;
  b.name = name;
  b.grid = cfg.threshold_grid;
  if (cfg.np_threshold) {
    b.grid.clear();
    b.threshold = *cfg.np_threshold;
  }
  b.ppdb_path = cfg.side_info.ppdb_path;
  b.ppdb_confidence_min = cfg.side_info.ppdb_confidence_min;
  b.vectors_path = cfg.vectors;
  b.hole = cfg.effective_hyper();
  return b;
}

// One leaderboard line: Method, Macro F1, Micro F1, Pairwise F1 and their
// average, in percent.
inline std::string leaderboard_line(const std::string& method, const MetricsReport& r) {
  const auto pct = [](const Score& s) {
    if (!s) return std::string("-");
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.1f", 100.0 * *s);
    return std::string(buf);
  };
  char avg[16];
  std::snprintf(avg, sizeof avg, "%.1f", 100.0 * r.mean_f1());
  return method + '\t' + pct(r.macro_f1) + '\t' + pct(r.micro_f1) + '\t' + pct(r.pair_f1) + '\t' + avg;
}

inline constexpr const char* kLeaderboardHeader = "Method\tMacro F1\tMicro F1\tPair F1\tRow Average";

inline EvaluationOutcome stage_evaluate(const PipelineConfig& cfg, const ArtifactPaths& paths) {
  return run_stage("evaluate", [&] {
    const auto kb = load_ingested(paths);
    const auto gold = load_gold_clusters(paths.gold_np, kb, Kind::NP);
    const auto split = read_split(paths.split);
    const auto test = split_gold(kb, gold, split, false);
    if (test.empty()) throw ConfigError("test split has no gold-labelled noun phrases");

    EvaluationOutcome out;
    {
      auto in = open_input(paths.clusters);
      out.np = evaluate(read_clusters(in, kb, Kind::NP), test);
    }
    if (std::filesystem::exists(paths.gold_rel)) {
      const auto rel_gold = load_gold_clusters(paths.gold_rel, kb, Kind::REL);
      auto in = open_input(paths.clusters);
      if (!rel_gold.empty()) out.rel = evaluate(read_clusters(in, kb, Kind::REL), rel_gold);
    }
    out.rows.push_back({"Full model", out.np});

    nlohmann::json baselines = nlohmann::json::object();
    if (!cfg.baselines.empty()) {
      const auto validation = split_gold(kb, gold, split, true);
      for (auto name : cfg.baselines) {
        const auto c = run_baseline(baseline_config(cfg, name), kb, &validation);
        const auto r = evaluate(c, test);
        out.rows.push_back({display_name(name), r});
        auto j = report_to_json(r);
        j["threshold"] = c.threshold_used;
        baselines[to_string(name)] = std::move(j);
      }
    }
    nlohmann::json metrics = {{"np", report_to_json(out.np)},
                              {"rel", out.rel ? report_to_json(*out.rel) : nlohmann::json(nullptr)},
                              {"baselines", baselines}};
    write_json(paths.metrics, metrics);
    auto lb = open_output(paths.leaderboard);
    lb << kLeaderboardHeader << '\n';
    for (const auto& row : out.rows) lb << leaderboard_line(row.method, row.report) << '\n';
    return out;
  });
}

// ---------------------------------------------------------------------------
// Whole runs
// ---------------------------------------------------------------------------

inline std::string config_hash(const PipelineConfig& cfg) { return hex64(fnv1a(config_to_json(cfg).dump())); }

inline std::string file_hash(const std::string& path) { return hex64(fnv1a(read_file(path))); }

inline void write_manifest(const PipelineConfig& cfg, const ArtifactPaths& paths, double np_threshold,
                           double rel_threshold) {
  nlohmann::json artifacts = nlohmann::json::object();
  for (const auto* p : {&paths.triples, &paths.split, &paths.gold_np, &paths.gold_rel, &paths.side_info,
                        &paths.embeddings, &paths.train_log, &paths.clusters, &paths.canonical, &paths.metrics,
                        &paths.leaderboard})
    if (std::filesystem::exists(*p)) artifacts[std::filesystem::path(*p).filename().string()] = file_hash(*p);
  nlohmann::json libs = {{"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                               std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                               std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                         {"fftw", std::string(fftw_version)}};
  write_json(paths.manifest, {{"tool", "okbc"},
                              {"version", kVersion},
                              {"config", config_to_json(cfg)},
                              {"config_hash", config_hash(cfg)},
                              {"seed", cfg.seed},
                              {"deterministic", cfg.deterministic},
                              {"np_threshold", np_threshold},
                              {"rel_threshold", rel_threshold},
                              {"libraries", libs},
                              {"artifacts", artifacts}});
}

struct PipelineResult {
  ClusterOutcome clusters;
  EvaluationOutcome evaluation;
  SideInfoResult side_info;
  ArtifactPaths paths;
};

inline PipelineResult run_pipeline(const PipelineConfig& cfg) {
  validate_config(cfg);
  const ArtifactPaths paths(cfg.out);
  PipelineResult r{{}, {}, {}, paths};
  stage_ingest(cfg, paths);
  r.side_info = stage_sideinfo(cfg, paths);
  stage_embed(cfg, paths);
  r.clusters = stage_cluster(cfg, paths);
  r.evaluation = stage_evaluate(cfg, paths);
  write_manifest(cfg, paths, r.clusters.np.threshold_used, r.clusters.rel.threshold_used);
  return r;
}

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

// Ordered (key, values) axes; a key is a dotted path into the config JSON,
// e.g. "hyperparams.learning_rate" or "side_info.ppdb_confidence_min".
using GridSpec = std::vector<std::pair<std::string, std::vector<nlohmann::json>>>;

inline GridSpec grid_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.empty()) throw ConfigError("grid must be a non-empty object of value lists");
  GridSpec g;
  for (const auto& [k, v] : j.items()) {
    if (!v.is_array() || v.empty()) throw ConfigError("grid axis '" + k + "' must be a non-empty list");
    g.emplace_back(k, std::vector<nlohmann::json>(v.begin(), v.end()));
  }
  return g;
}

inline nlohmann::json apply_override(nlohmann::json j, const std::string& dotted, const nlohmann::json& value) {
  nlohmann::json* node = &j;
  const auto parts = split(dotted, '.');
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
  (*node)[parts.back()] = value;
  return j;
}

struct GridPoint {
  std::size_t index = 0;
  nlohmann::json params;  // key -> value for this point
  PipelineConfig config;
  double validation_mean_f1 = 0.0;
  MetricsReport test;
};

struct GridResult {
  std::vector<GridPoint> points;
  std::size_t best = 0;
};

inline std::string point_label(const GridPoint& p) {
  std::string s;
  for (const auto& [k, v] : p.params.items()) s += (s.empty() ? "" : ",") + k + "=" + v.dump();
  return s;
}

// Exhaustive product in axis order (last axis fastest). Ingestion runs once,
// side information once per distinct side-info setting, and training and
// clustering once per point. The best point maximizes validation mean F1;
// ties keep the earliest point.
inline GridResult grid_search(const PipelineConfig& base, const GridSpec& grid) {
  if (grid.empty()) throw ConfigError("grid is empty");
  validate_config(base);
  std::filesystem::create_directories(base.out);
  const ArtifactPaths shared(base.out);
  stage_ingest(base, shared);

  const auto base_json = config_to_json(base);
  std::size_t total = 1;
  for (const auto& [k, vals] : grid) total *= vals.size();

  std::map<std::string, std::string> side_cache;  // side-info config dump -> side_info.json path
  GridResult result;
  for (std::size_t idx = 0; idx < total; ++idx) {
    GridPoint point;
    point.index = idx;
    auto j = base_json;
    std::size_t rest = idx;
    std::vector<std::size_t> digits(grid.size());
    for (std::size_t a = grid.size(); a-- > 0;) {
      digits[a] = rest % grid[a].second.size();
      rest /= grid[a].second.size();
    }
    point.params = nlohmann::json::object();
    for (std::size_t a = 0; a < grid.size(); ++a) {
      const auto& [key, vals] = grid[a];
      j = apply_override(j, key, vals[digits[a]]);
      point.params[key] = vals[digits[a]];
    }
    const auto point_dir = (std::filesystem::path(base.out) / ("point_" + std::to_string(idx))).string();
    j["out"] = point_dir;
    point.config = config_from_json(j);
    validate_config(point.config);
    std::filesystem::create_directories(point_dir);

    ArtifactPaths paths(point_dir);
    for (const auto& [from, to] : {std::pair{shared.triples, paths.triples}, {shared.split, paths.split},
                                   {shared.gold_np, paths.gold_np}, {shared.gold_rel, paths.gold_rel}})
      if (std::filesystem::exists(from))
        std::filesystem::copy_file(from, to, std::filesystem::copy_options::overwrite_existing);

    const auto side_key = detail::side_to_json(point.config.side_info).dump();
    if (auto it = side_cache.find(side_key); it != side_cache.end()) {
      std::filesystem::copy_file(it->second, paths.side_info, std::filesystem::copy_options::overwrite_existing);
    } else {
      stage_sideinfo(point.config, paths);
      side_cache.emplace(side_key, paths.side_info);
    }
    stage_embed(point.config, paths);
    const auto clusters = stage_cluster(point.config, paths);
    auto point_cfg = point.config;
    point_cfg.baselines.clear();
    const auto eval = stage_evaluate(point_cfg, paths);
    write_manifest(point.config, paths, clusters.np.threshold_used, clusters.rel.threshold_used);
    point.validation_mean_f1 = clusters.validation_mean_f1;
    point.test = eval.np;
    if (result.points.empty() || point.validation_mean_f1 > result.points[result.best].validation_mean_f1)
      result.best = result.points.size();
    result.points.push_back(std::move(point));
  }

  auto lb = open_output((std::filesystem::path(base.out) / "grid_leaderboard.tsv").string());
  lb << "Point\tValidation Mean F1\t" << kLeaderboardHeader << '\n';
  for (const auto& p : result.points) {
    char v[16];
    std::snprintf(v, sizeof v, "%.1f", 100.0 * p.validation_mean_f1);
    lb << p.index << '\t' << v << '\t' << leaderboard_line(point_label(p), p.test) << '\n';
  }
  write_json((std::filesystem::path(base.out) / "best_config.json").string(),
             config_to_json(result.points[result.best].config));
  return result;
}

// A small-scale configuration for a synthetic fixture: PPDB-style and
// KBP-style side information, compact embeddings and heavy side-info weights.
inline PipelineConfig synthetic_config(const SyntheticFiles& f, const std::string& out) {
  PipelineConfig c;
  c.triples = f.triples;
  c.gold_np = f.gold_np;
  c.gold_rel = f.gold_rel;
  c.out = out;
  c.side_info.ppdb_path = f.ppdb;
  c.side_info.kbp_path = f.kbp;
  c.hyper.dim = 32;
  c.hyper.epochs = 200;
  c.hyper.batch_size = 32;
  c.hyper.learning_rate = 0.1;
  c.hyper.lambda_ent_default = 1.0;
  c.hyper.lambda_rel_default = 1.0;
  return c;
}

}  // namespace okbc
