#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "aread/trainer.hpp"

namespace {

int log_level() {
  const char* v = std::getenv("AREAD_LOG");
  if (!v) return 1;
  std::string s(v);
  if (s == "quiet") return 0;
  if (s == "debug") return 2;
  return 1;
}

void add_hemp_flags(CLI::App* cmd, aread::RunConfig& cfg) {
  cmd->add_option("--hemp.z", cfg.hemp.Z, "candidates per domain per round");
  cmd->add_option("--hemp.k", cfg.hemp.k, "min training batches per candidate");
  cmd->add_option("--hemp.s0", cfg.hemp.S0, "initial mask density");
  cmd->add_option("--hemp.s", cfg.hemp.S, "target mask density");
  cmd->add_option("--hemp.alpha", cfg.hemp.alpha, "per-iteration prune rate");
  cmd->add_option("--hemp.lr-u", cfg.hemp.lr_u, "candidate-search learning rate");
  cmd->add_option("--hemp.update-interval", cfg.hemp.update_interval,
                  "batches between mask searches");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-domain recommender with hierarchical expert masking"};
  app.require_subcommand(1);

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_cfg_path, synth_out = "synth.csv";
  uint64_t synth_seed = 1;
  synth->add_option("--synth-config", synth_cfg_path, "key=value config file");
  synth->add_option("--out", synth_out, "output CSV path");
  synth->add_option("--seed", synth_seed, "RNG seed");

  // ---- train ----
  auto* train = app.add_subcommand("train", "train a model and write a report");
  aread::RunConfig run_cfg;
  std::string data_path, train_synth_cfg, config_path, ablation = "full";
  std::string outdir = "out", report_path, dump_masks_dir, dump_aug_dir;
  train->add_option("--data", data_path, "training CSV");
  train->add_option("--synth-config", train_synth_cfg,
                    "generate training data from this synth config");
  train->add_option("--config", config_path, "key=value run config file");
  train->add_option("--ablation", ablation,
                    "base-only | +hei | +hemp | full");
  train->add_option("--seed", run_cfg.seed, "RNG seed");
  train->add_option("--out", outdir, "output directory");
  train->add_option("--report", report_path, "copy report JSON here");
  train->add_option("--dump-masks", dump_masks_dir,
                    "also write final masks to this directory");
  train->add_option("--dump-aug", dump_aug_dir,
                    "write per-domain augmented datasets here");
  add_hemp_flags(train, run_cfg);

  // ---- eval ----
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a CSV");
  std::string ev_checkpoint, ev_masks, ev_data, ev_report;
  eval->add_option("--checkpoint", ev_checkpoint, "checkpoint file")
      ->required();
  eval->add_option("--data", ev_data, "CSV to split and score")->required();
  eval->add_option("--masks", ev_masks, "mask dump directory");
  eval->add_option("--report", ev_report, "write report JSON here");

  // ---- analyze-masks ----
  auto* analyze =
      app.add_subcommand("analyze-masks", "pairwise mask overlap matrix");
  std::string an_masks, an_out = "overlap.csv";
  analyze->add_option("--masks", an_masks, "mask dump directory")->required();
  analyze->add_option("--out", an_out, "output CSV");

  CLI11_PARSE(app, argc, argv);
  int verbosity = log_level();

  try {
    if (*synth) {
      aread::SynthConfig sc;
      if (!synth_cfg_path.empty()) sc = aread::parse_synth_config(synth_cfg_path);
      if (synth->count("--seed")) sc.seed = synth_seed;
      aread::SynthResult sr = aread::generate(sc);
      aread::save_csv(sr.dataset, synth_out);
      if (verbosity > 0)
        std::cout << "wrote " << sr.dataset.samples.size() << " rows to "
                  << synth_out << "\n";
      return 0;
    }

    if (*train) {
      if (!config_path.empty())
        aread::apply_run_config(run_cfg, aread::parse_kv_file(config_path));
      run_cfg.ablation = aread::parse_ablation(ablation);
      if (!train_synth_cfg.empty())
        run_cfg.synth = aread::parse_synth_config(train_synth_cfg);
      else if (!data_path.empty())
        run_cfg.data_csv = data_path;
      else
        throw std::invalid_argument("train: need --data or --synth-config");

      if (!dump_aug_dir.empty()) {
        // materialize the augmented sets independently of training
        namespace fs = std::filesystem;
        fs::create_directories(dump_aug_dir);
        aread::Dataset full;
        if (run_cfg.synth) {
          aread::SynthConfig sc = *run_cfg.synth;
          sc.seed = run_cfg.seed;
          full = aread::generate(sc).dataset;
        } else {
          full = aread::load_csv(run_cfg.data_csv, run_cfg.schema);
        }
        auto splits = aread::split(full, run_cfg.r_train, run_cfg.r_valid,
                                   run_cfg.r_test, run_cfg.seed);
        aread::DomainStats st =
            aread::compute_stats(splits[0], run_cfg.minor_threshold);
        aread::AugConfig ac = run_cfg.aug;
        ac.seed = run_cfg.seed;
        auto pop = aread::compute_popularity(splits[0], ac.rho_quantile);
        auto aug = aread::build_augmented(splits[0], st, pop, ac);
        for (const auto& [d, a] : aug)
          aread::dump_augmented(a, *full.schema,
                                (fs::path(dump_aug_dir) /
                                 ("aug_d" + std::to_string(d) + ".csv"))
                                    .string());
      }

      aread::RunArtifacts art = aread::run(run_cfg, outdir);
      if (!report_path.empty()) {
        std::ofstream rf(report_path);
        rf << art.report.dump(2) << "\n";
      }
      if (!dump_masks_dir.empty()) {
        std::filesystem::create_directories(dump_masks_dir);
        for (const auto& [d, m] : art.masks)
          aread::save_mask(m, d,
                           (std::filesystem::path(dump_masks_dir) /
                            ("mask_d" + std::to_string(d) + ".txt"))
                               .string());
      }
      if (verbosity > 0)
        std::cout << "test domain_auc "
                  << art.report["metrics"]["domain_auc"].dump() << "\n";
      return 0;
    }

    if (*eval) {
      nlohmann::json rep =
          aread::eval_checkpoint(ev_checkpoint, ev_masks, ev_data);
      if (!ev_report.empty()) {
        std::ofstream rf(ev_report);
        rf << rep.dump(2) << "\n";
      }
      if (verbosity > 0) std::cout << rep.dump(2) << "\n";
      return 0;
    }

    if (*analyze) {
      aread::analyze_masks(an_masks, an_out);
      if (verbosity > 0) std::cout << "wrote " << an_out << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
