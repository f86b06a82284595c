// okbc: command-line front end for the canonicalization pipeline.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "okbc/pipeline.hpp"
#include "okbc/synthetic.hpp"

namespace {

using namespace okbc;

struct CommonFlags {
  std::string config, out, triples, gold_np, gold_rel, vectors, ppdb, wordnet, kbp;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON config file (a run's manifest.json also works)");
  cmd->add_option("--seed", f.seed, "seed for every stochastic component");
  cmd->add_flag("--deterministic", f.deterministic, "force single-threaded deterministic mode");
  cmd->add_option("--out", f.out, "run directory");
  cmd->add_option("--triples", f.triples, "input triples");
  cmd->add_option("--gold-np", f.gold_np, "NP gold file (text<TAB>gold_id)");
  cmd->add_option("--gold-rel", f.gold_rel, "relation gold file");
  cmd->add_option("--vectors", f.vectors, "pretrained word vectors");
  cmd->add_option("--ppdb", f.ppdb, "PPDB-style paraphrase file");
  cmd->add_option("--wordnet", f.wordnet, "synset file");
  cmd->add_option("--kbp", f.kbp, "KBP-style relation category file");
}

PipelineConfig resolve_config(const CommonFlags& f) {
  PipelineConfig c;
  if (!f.config.empty()) {
    const auto j = read_json(f.config);
    const auto base = std::filesystem::path(f.config).parent_path().string();
    // A manifest carries the full, already-resolved config of an earlier run.
    c = j.contains("tool") && j.contains("config") ? config_from_json(j.at("config")) : config_from_json(j, base);
  }
  if (f.seed) c.seed = *f.seed;
  if (f.deterministic) c.deterministic = true;
  for (auto [flag, field] : {std::pair{&f.out, &c.out}, {&f.triples, &c.triples}, {&f.gold_np, &c.gold_np},
                             {&f.gold_rel, &c.gold_rel}, {&f.vectors, &c.vectors},
                             {&f.ppdb, &c.side_info.ppdb_path}, {&f.wordnet, &c.side_info.wordnet_path},
                             {&f.kbp, &c.side_info.kbp_path}})
    if (!flag->empty()) *field = *flag;
  return c;
}

void print_leaderboard(const ArtifactPaths& p) { std::cout << read_file(p.leaderboard); }

int run(int argc, char** argv) {
  CLI::App app{"Open KB canonicalization: side information, HolE embeddings and clustering"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonFlags flags;
  std::string grid_path;
  SynthOptions synth;
  std::string synth_out = "synthetic";

  auto* ingest = app.add_subcommand("ingest", "read triples and gold, write the validation/test split");
  auto* sideinfo = app.add_subcommand("sideinfo", "collect side-information equivalences");
  auto* embed = app.add_subcommand("embed", "train embeddings");
  auto* cluster = app.add_subcommand("cluster", "tune the cutoff, cluster and canonicalize");
  auto* evaluate_cmd = app.add_subcommand("evaluate", "score clusters and baselines on test gold");
  auto* pipeline = app.add_subcommand("pipeline", "run every stage");
  auto* grid = app.add_subcommand("grid-search", "exhaustive hyperparameter search");
  for (auto* c : {ingest, sideinfo, embed, cluster, evaluate_cmd, pipeline, grid}) add_common(c, flags);
  grid->add_option("--grid", grid_path, "JSON object: dotted config key -> list of values")->required();

  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic KB fixture and a matching config");
  synth_cmd->add_option("--out", synth_out, "output directory");
  synth_cmd->add_option("--entities", synth.n_entities);
  synth_cmd->add_option("--aliases", synth.aliases_per_entity);
  synth_cmd->add_option("--relations", synth.n_relations);
  synth_cmd->add_option("--paraphrases", synth.paraphrases_per_relation);
  synth_cmd->add_option("--triples", synth.n_triples);
  synth_cmd->add_option("--noise", synth.noise);
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_option("--side-coverage", synth.side_coverage);
  synth_cmd->add_option("--side-precision", synth.side_precision);

  CLI11_PARSE(app, argc, argv);

  if (synth_cmd->parsed()) {
    const auto files = write_synthetic_kb(make_synthetic_kb(synth), synth_out);
    auto cfg = synthetic_config(files, "run");
    // Paths relative to the config file so the directory can be moved.
    for (auto* p : {&cfg.triples, &cfg.gold_np, &cfg.gold_rel, &cfg.side_info.ppdb_path, &cfg.side_info.kbp_path})
      *p = std::filesystem::path(*p).filename().string();
    cfg.seed = synth.seed;
    write_json((std::filesystem::path(synth_out) / "config.json").string(), config_to_json(cfg));
    std::cout << "wrote " << synth_out << "/{triples.jsonl,gold_np.tsv,gold_rel.tsv,ppdb.tsv,kbp.tsv,config.json}\n";
    return 0;
  }

  const auto cfg = resolve_config(flags);
  const ArtifactPaths paths(cfg.out);
  std::filesystem::create_directories(cfg.out);
  if (ingest->parsed()) {
    validate_config(cfg);
    stage_ingest(cfg, paths);
  } else if (sideinfo->parsed()) {
    const auto r = stage_sideinfo(cfg, paths);
    for (const auto& c : r.coverage)
      std::cout << c.source << '\t' << to_string(c.kind) << '\t' << c.pairs << " pairs\t" << c.phrases_covered
                << " phrases\n";
  } else if (embed->parsed()) {
    stage_embed(cfg, paths);
  } else if (cluster->parsed()) {
    const auto c = stage_cluster(cfg, paths);
    std::cout << "np cutoff " << c.np.threshold_used << ", " << c.np.clusters.size() << " NP clusters, "
              << c.rel.clusters.size() << " relation clusters\n";
  } else if (evaluate_cmd->parsed()) {
    stage_evaluate(cfg, paths);
    print_leaderboard(paths);
  } else if (pipeline->parsed()) {
    run_pipeline(cfg);
    print_leaderboard(paths);
  } else if (grid->parsed()) {
    const auto r = grid_search(cfg, grid_from_json(read_json(grid_path)));
    std::cout << read_file((std::filesystem::path(cfg.out) / "grid_leaderboard.tsv").string());
    std::cout << "best: point " << r.points[r.best].index << " (" << point_label(r.points[r.best]) << ")\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const okbc::ConfigError& e) {
    std::cerr << "okbc: configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "okbc: " << e.what() << '\n';
    return 1;
  }
}
