#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "okbc/pipeline.hpp"
#include "okbc/synthetic.hpp"

namespace okbc {
namespace {

namespace fs = std::filesystem;

std::string scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("okbc_test_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

// Fast settings for smoke-level tests.
PipelineConfig quick_config(const SyntheticFiles& f, const std::string& out) {
  auto c = synthetic_config(f, out);
  c.hyper.epochs = 20;
  c.hyper.dim = 16;
  return c;
}

TEST(Synthetic, FixtureShape) {
  const auto s = make_synthetic_kb(SynthOptions{});
  EXPECT_EQ(s.kb.np_vocab().size(), 60u);
  EXPECT_EQ(s.kb.rel_vocab().size(), 10u);
  EXPECT_EQ(s.kb.triples().size(), 200u);
  // A perfect clustering scores 1 against the generated gold.
  const auto gold = gold_from_triples(s.kb);
  std::map<std::string, std::vector<PhraseId>> groups;
  for (const auto& [id, label] : gold.assignment) groups[label].push_back(id);
  Partition perfect;
  for (auto& [l, ids] : groups) perfect.push_back(ids);
  const auto r = evaluate(perfect, gold);
  EXPECT_DOUBLE_EQ(r.mean_f1(), 1.0);
  EXPECT_EQ(groups.size(), 20u);
}

TEST(Synthetic, SameSeedSameFixture) {
  SynthOptions a;
  a.seed = 9;
  const auto x = make_synthetic_kb(a), y = make_synthetic_kb(a);
  EXPECT_EQ(x.entity_aliases, y.entity_aliases);
  EXPECT_EQ(x.paraphrase_rows, y.paraphrase_rows);
  ASSERT_EQ(x.kb.triples().size(), y.kb.triples().size());
  for (std::size_t i = 0; i < x.kb.triples().size(); ++i)
    EXPECT_EQ(x.kb.triples()[i].subject, y.kb.triples()[i].subject);
  a.seed = 10;
  EXPECT_NE(make_synthetic_kb(a).entity_aliases, x.entity_aliases);
}

TEST(Synthetic, ResourcePrecisionAndCoverage) {
  SynthOptions s;
  s.side_coverage = 1.0;
  s.side_precision = 0.5;
  const auto kb = make_synthetic_kb(s);
  // 20 entities x 3 within-group pairs + 5 relations x 1 pair, doubled by wrong rows.
  EXPECT_EQ(kb.paraphrase_rows.size(), 2u * (60u + 5u));
  EXPECT_EQ(kb.category_rows.size(), 10u);
  s.noise = 2.0;
  EXPECT_THROW(make_synthetic_kb(s), ConfigError);
}

TEST(Pipeline, WritesAllArtifacts) {
  const auto dir = scratch("smoke");
  const auto f = write_synthetic_kb(make_synthetic_kb(SynthOptions{}), dir + "/data");
  auto cfg = quick_config(f, dir + "/run");
  cfg.baselines = {BaselineName::Morph, BaselineName::HoleRandom};
  const auto r = run_pipeline(cfg);
  const ArtifactPaths p(cfg.out);
  for (const auto* path : {&p.triples, &p.split, &p.gold_np, &p.gold_rel, &p.side_info, &p.embeddings, &p.train_log,
                           &p.clusters, &p.canonical, &p.metrics, &p.leaderboard, &p.manifest})
    EXPECT_TRUE(fs::exists(*path)) << *path;
  EXPECT_TRUE(r.evaluation.rel.has_value());
  ASSERT_EQ(r.evaluation.rows.size(), 3u);
  EXPECT_EQ(r.evaluation.rows[0].method, "Full model");

  std::ifstream lb(p.leaderboard);
  std::string line;
  std::getline(lb, line);
  EXPECT_EQ(line, kLeaderboardHeader);
  std::size_t rows = 0;
  while (std::getline(lb, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 4) << line;
  }
  EXPECT_EQ(rows, 3u);

  const auto manifest = read_json(p.manifest);
  EXPECT_EQ(manifest.at("config_hash"), config_hash(cfg));
  EXPECT_EQ(manifest.at("artifacts").at("clusters.jsonl"), file_hash(p.clusters));
  std::size_t epochs = 0;
  std::ifstream log(p.train_log);
  while (std::getline(log, line)) ++epochs;
  EXPECT_EQ(epochs, cfg.hyper.epochs);
}

TEST(Pipeline, ValidationAndTestGoldAreDisjoint) {
  const auto dir = scratch("split");
  const auto f = write_synthetic_kb(make_synthetic_kb(SynthOptions{}), dir + "/data");
  const auto cfg = quick_config(f, dir + "/run");
  const ArtifactPaths p(cfg.out);
  stage_ingest(cfg, p);
  const auto kb = load_ingested(p);
  const auto gold = load_gold_clusters(p.gold_np, kb, Kind::NP);
  const auto split = read_split(p.split);
  const auto v = split_gold(kb, gold, split, true), t = split_gold(kb, gold, split, false);
  EXPECT_FALSE(v.empty());
  EXPECT_FALSE(t.empty());
  std::set<std::string> vl, tl;
  for (const auto& [id, l] : v.assignment) vl.insert(l);
  for (const auto& [id, l] : t.assignment) {
    tl.insert(l);
    EXPECT_FALSE(v.assignment.contains(id));
  }
  for (const auto& l : vl) EXPECT_FALSE(tl.contains(l)) << l;
  EXPECT_EQ(vl.size(), 4u);  // 20% of 20 entities
}

TEST(Pipeline, RepeatedRunsAreByteIdentical) {
  const auto dir = scratch("determinism");
  const auto f = write_synthetic_kb(make_synthetic_kb(SynthOptions{}), dir + "/data");
  const auto a = quick_config(f, dir + "/a");
  auto b = a;
  b.out = dir + "/b";
  run_pipeline(a);
  run_pipeline(b);
  for (const auto* name : {"clusters.jsonl", "embeddings.txt", "canonical_triples.jsonl", "metrics.json"})
    EXPECT_EQ(read_file(a.out + "/" + name), read_file(b.out + "/" + name)) << name;
}

TEST(Pipeline, StagesReadTheirPredecessorsFromDisk) {
  const auto dir = scratch("stages");
  const auto f = write_synthetic_kb(make_synthetic_kb(SynthOptions{}), dir + "/data");
  const auto cfg = quick_config(f, dir + "/run");
  const ArtifactPaths p(cfg.out);
  EXPECT_THROW(stage_embed(cfg, p), StageError);
  try {
    stage_cluster(cfg, p);
    FAIL() << "expected a stage error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "cluster");
  }
  stage_ingest(cfg, p);
  stage_sideinfo(cfg, p);
  stage_embed(cfg, p);
  const auto c = stage_cluster(cfg, p);
  const auto e = stage_evaluate(cfg, p);
  EXPECT_GT(e.np.mean_f1(), 0.0);
  EXPECT_GE(c.validation_mean_f1, 0.0);
}

TEST(Pipeline, FixedThresholdSkipsTuning) {
  const auto dir = scratch("fixed");
  const auto f = write_synthetic_kb(make_synthetic_kb(SynthOptions{}), dir + "/data");
  auto cfg = quick_config(f, dir + "/run");
  cfg.np_threshold = 2.0;
  cfg.rel_threshold = 0.0;
  const auto r = run_pipeline(cfg);
  EXPECT_EQ(r.clusters.np.clusters.size(), 1u);
  EXPECT_EQ(r.clusters.rel.clusters.size(), 10u);
  EXPECT_TRUE(r.clusters.threshold_scores.empty());
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
  PipelineConfig c;
  c.triples = "t.jsonl";
  c.seed = 5;
  c.hyper.hinge = HingeForm::Raw;
  c.hyper.margin = 1.0;
  c.np_threshold = 0.3;
  c.baselines = {BaselineName::IdfHac};
  const auto j = config_to_json(c);
  EXPECT_EQ(config_to_json(config_from_json(j)), j);

  EXPECT_THROW(config_from_json({{"triples", "x"}, {"epochs", 3}}), ConfigError);
  EXPECT_THROW(config_from_json({{"hyperparams", {{"dims", 3}}}}), ConfigError);
  EXPECT_THROW(config_from_json({{"hyperparams", {{"hinge", "square"}}}}), ConfigError);
  EXPECT_THROW(config_from_json({{"seed", "zero"}}), ConfigError);
  EXPECT_EQ(config_from_json({{"hyperparams", {{"hinge", "raw"}}}}).hyper.margin, 1.0);
  EXPECT_EQ(config_from_json({{"triples", "t.jsonl"}}, "/data").triples, "/data/t.jsonl");

  PipelineConfig missing;
  missing.triples = "/nonexistent/triples.jsonl";
  EXPECT_THROW(validate_config(missing), ConfigError);
}

TEST(Config, EffectiveHyperAppliesRunPolicy) {
  PipelineConfig c;
  c.seed = 42;
  c.hyper.threads = 4;
  EXPECT_EQ(c.effective_hyper().seed, 42u);
  EXPECT_EQ(c.effective_hyper().threads, 1u);
  c.deterministic = false;
  EXPECT_EQ(c.effective_hyper().threads, 4u);
}

TEST(GridSearch, EnumeratesTheProductAndPicksTheBest) {
  const auto dir = scratch("grid");
  const auto f = write_synthetic_kb(make_synthetic_kb(SynthOptions{}), dir + "/data");
  auto base = quick_config(f, dir + "/run");
  base.hyper.epochs = 10;
  const GridSpec grid = {{"hyperparams.learning_rate", {0.05, 0.1}}, {"hyperparams.lambda_ent_default", {0.0, 1.0}}};
  const auto r = grid_search(base, grid);
  ASSERT_EQ(r.points.size(), 4u);
  EXPECT_EQ(r.points[1].params.at("hyperparams.lambda_ent_default"), 1.0);
  EXPECT_EQ(r.points[2].params.at("hyperparams.learning_rate"), 0.1);
  for (const auto& p : r.points) EXPECT_LE(p.validation_mean_f1, r.points[r.best].validation_mean_f1);
  for (std::size_t i = 0; i < r.best; ++i) EXPECT_LT(r.points[i].validation_mean_f1, r.points[r.best].validation_mean_f1);

  std::ifstream lb(dir + "/run/grid_leaderboard.tsv");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(lb, line)) ++lines;
  EXPECT_EQ(lines, 5u);
  const auto best = config_from_json(read_json(dir + "/run/best_config.json"));
  EXPECT_EQ(best.hyper.learning_rate, r.points[r.best].config.hyper.learning_rate);
  // Identical side-info settings are computed once and reused.
  EXPECT_EQ(read_file(dir + "/run/point_0/side_info.json"), read_file(dir + "/run/point_3/side_info.json"));

  EXPECT_THROW(grid_search(base, {}), ConfigError);
  EXPECT_THROW(grid_from_json({{"hyperparams.dim", nlohmann::json::array()}}), ConfigError);
}

TEST(GridSearch, SeparableFixtureIsSolved) {
  // Two entities with three aliases each; resource rows list every alias pair
  // and heavy side-info weights pull each group together.
  const auto dir = scratch("separable");
  SynthOptions s;
  s.n_entities = 4;
  s.n_triples = 60;
  s.side_coverage = 1.0;
  const auto f = write_synthetic_kb(make_synthetic_kb(s), dir + "/data");
  auto base = synthetic_config(f, dir + "/run");
  base.validation_fraction = 0.5;
  base.hyper.epochs = 100;
  base.hyper.learning_rate = 0.05;
  base.hyper.lambda_ent_default = 20.0;  // the side term averages over its 12 pairs
  base.threshold_grid = {0.25, 0.5};  // finer cutoffs tie on validation and are too tight for test
  const auto r = grid_search(base, {{"seed", {0}}});
  ASSERT_EQ(r.points.size(), 1u);
  EXPECT_DOUBLE_EQ(r.points[0].validation_mean_f1, 1.0);
  EXPECT_DOUBLE_EQ(r.points[0].test.mean_f1(), 1.0);
}

}  // namespace
}  // namespace okbc
