#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "aread/augment.hpp"
#include "aread/data.hpp"
#include "aread/hemp.hpp"
#include "aread/metrics.hpp"
#include "aread/model.hpp"
#include "aread/synth.hpp"

#ifndef AREAD_BUILD_ID
#define AREAD_BUILD_ID "dev"
#endif

namespace aread {

enum class Ablation { BaseOnly, Hei, Hemp, Full };

inline Ablation parse_ablation(const std::string& s) {
  if (s == "base-only") return Ablation::BaseOnly;
  if (s == "+hei") return Ablation::Hei;
  if (s == "+hemp") return Ablation::Hemp;
  if (s == "full") return Ablation::Full;
  throw std::invalid_argument("unknown ablation '" + s +
                              "' (base-only|+hei|+hemp|full)");
}

inline const char* ablation_name(Ablation a) {
  switch (a) {
    case Ablation::BaseOnly: return "base-only";
    case Ablation::Hei: return "+hei";
    case Ablation::Hemp: return "+hemp";
    case Ablation::Full: return "full";
  }
  return "?";
}

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 128;
  double weight_decay = 1e-5;
  int epochs = 12;
  int patience = 3;  // early-stop rounds on validation DomainAUC
};

struct RunConfig {
  std::string data_csv;                  // one of data_csv / synth
  std::optional<SynthConfig> synth;
  SchemaSpec schema;
  ModelConfig model;
  HEMPConfig hemp;
  AugConfig aug;
  TrainConfig train;
  double r_train = 0.8, r_valid = 0.1, r_test = 0.1;
  double minor_threshold = 0.02;
  Ablation ablation = Ablation::Full;
  uint64_t seed = 1;
  int hemp_eval_samples = 512;

  RunConfig() { schema.fields = {"user", "item"}; }
};

inline nlohmann::json config_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["ablation"] = ablation_name(cfg.ablation);
  j["seed"] = cfg.seed;
  j["split"] = {cfg.r_train, cfg.r_valid, cfg.r_test};
  j["minor_threshold"] = cfg.minor_threshold;
  j["model"] = cfg.model;
  j["train"] = {{"lr", cfg.train.lr},
                {"batch_size", cfg.train.batch_size},
                {"weight_decay", cfg.train.weight_decay},
                {"epochs", cfg.train.epochs},
                {"patience", cfg.train.patience}};
  j["hemp"] = {{"z", cfg.hemp.Z},
               {"k", cfg.hemp.k},
               {"s0", cfg.hemp.S0},
               {"s", cfg.hemp.S},
               {"alpha", cfg.hemp.alpha},
               {"lr_u", cfg.hemp.lr_u},
               {"update_interval", cfg.hemp.update_interval},
               {"warmup_batches", cfg.hemp.warmup_batches},
               {"flip_prob", cfg.hemp.flip_prob}};
  j["aug"] = {{"r_aug", cfg.aug.r_aug},
              {"rho_quantile", cfg.aug.rho_quantile},
              {"rule", cfg.aug.rule == AssignRule::UserHistoryFirst
                           ? "user-history-first"
                           : "inverse-size-sampling"}};
  return j;
}

// Scores a dataset with the trained model. Masked scoring groups samples by
// domain so each uses its own mask; +hei uses the all-heads average and
// base-only the plain head.
inline ScoredSet score_dataset(const Model& model, ParameterStore& store,
                               const std::map<int, HierMask>* masks,
                               Ablation ablation, const Dataset& ds) {
  ScoredSet out;
  const size_t chunk = 256;

  if (ablation == Ablation::BaseOnly) {
    for (size_t off = 0; off < ds.samples.size(); off += chunk) {
      std::vector<Sample> batch(
          ds.samples.begin() + off,
          ds.samples.begin() + std::min(off + chunk, ds.samples.size()));
      Tape t;
      Value logit = model.base_head(t, store, model.base_forward(t, store, batch));
      const Array2& v = t.val(logit);
      for (size_t i = 0; i < batch.size(); ++i)
        out.push(1.0 / (1.0 + std::exp(-v.at(int(i), 0))), batch[i].label,
                 batch[i].domain_id);
    }
    return out;
  }

  // group by domain so masked runs use the right mask; +hei runs unmasked
  std::map<int, std::vector<Sample>> by_domain;
  for (const Sample& s : ds.samples) by_domain[s.domain_id].push_back(s);
  for (auto& [d, samples] : by_domain) {
    const HierMask* mask = nullptr;
    if (masks) {
      auto it = masks->find(d);
      if (it != masks->end()) mask = &it->second;
    }
    for (size_t off = 0; off < samples.size(); off += chunk) {
      std::vector<Sample> batch(
          samples.begin() + off,
          samples.begin() + std::min(off + chunk, samples.size()));
      Tape t;
      Value base = model.base_forward(t, store, batch);
      std::vector<Head> heads = model.hei_forward(t, store, base, mask);
      std::vector<double> p = predict(t, heads);
      for (size_t i = 0; i < batch.size(); ++i)
        out.push(p[i], batch[i].label, d);
    }
  }
  return out;
}

inline nlohmann::json metrics_json(const ScoredSet& ss,
                                   const std::vector<long>& train_counts) {
  nlohmann::json j;
  std::vector<int> excluded;
  std::map<int, double> per_domain;
  j["auc"] = auc(ss.scores, ss.labels);
  j["domain_auc"] = domain_auc(ss, &excluded, &per_domain);
  int D = int(train_counts.size());
  auto grp = [&](GroupKind k, int K) {
    try {
      return nlohmann::json(group_auc(ss, k, std::min(K, D), train_counts));
    } catch (const std::exception&) {
      return nlohmann::json();
    }
  };
  j["major5"] = grp(GroupKind::Largest, 5);
  j["minor10"] = grp(GroupKind::Smallest, 10);
  j["minor5"] = grp(GroupKind::Smallest, 5);
  nlohmann::json pd = nlohmann::json::object();
  for (auto& [d, a] : per_domain) pd[std::to_string(d)] = a;
  j["per_domain"] = pd;
  j["excluded_domains"] = excluded;
  return j;
}

struct TrainOutcome {
  std::map<int, HierMask> masks;
  nlohmann::json rounds = nlohmann::json::array();
  nlohmann::json epochs = nlohmann::json::array();
  std::vector<std::string> warnings;
  bool reset_discipline_ok = true;   // bitwise restore after every search
  bool snapshot_hashes_uniform = true;
  int batches_trained = 0;
  int search_rounds = 0;
};

// Algorithm driver: warm-up on mixed data under the averaged-head loss, then
// masked training with per-domain masks refreshed by candidate search every
// update_interval batches. Early-stops on validation DomainAUC.
inline TrainOutcome train_driver(const Model& model, ParameterStore& store,
                                 const Dataset& train, const Dataset& valid,
                                 const DomainStats& stats,
                                 const std::map<int, AugmentedDataset>& aug,
                                 const RunConfig& cfg) {
  TrainOutcome out;
  AdamConfig opt;
  opt.lr = cfg.train.lr;
  opt.weight_decay = cfg.train.weight_decay;

  const Ablation ab = cfg.ablation;
  const bool uses_masks = ab == Ablation::Hemp || ab == Ablation::Full;
  auto shapes = model.config().hei.mask_shapes();
  int D = stats.domain_count();

  GateStatsAccumulator stats_acc(D, shapes);
  int batches_done = 0;
  int next_search_at = cfg.hemp.warmup_batches;

  double best_valid = -1.0;
  int bad_rounds = 0;
  std::optional<ParamSnapshot> best_snap;
  std::map<int, HierMask> best_masks;

  auto run_search_round = [&]() {
    ParamSnapshot snap = store.snapshot();
    uint64_t snap_hash = store.state_hash();
    nlohmann::json round;
    round["at_batch"] = batches_done;
    nlohmann::json per_domain = nlohmann::json::object();
    Rng eval_rng = Rng::substream(
        cfg.seed, "hemp-eval-round" + std::to_string(out.search_rounds));
    for (int d = 0; d < D; ++d) {
      auto it = aug.find(d);
      if (it == aug.end() || it->second.samples.empty()) continue;
      // scoring sample drawn from the training split only
      std::vector<Sample> domain_train;
      for (const Sample& s : train.samples)
        if (s.domain_id == d) domain_train.push_back(s);
      std::vector<Sample> eval_sample;
      if (!domain_train.empty()) {
        std::vector<int> pick = eval_rng.sample_without_replacement(
            int(domain_train.size()),
            std::min(cfg.hemp_eval_samples, int(domain_train.size())));
        for (int p : pick) eval_sample.push_back(domain_train[p]);
      }
      const HierMask* prev =
          out.masks.count(d) ? &out.masks.at(d) : nullptr;
      SearchResult r = search_domain_mask(
          model, store, snap, d, it->second, eval_sample,
          stats_acc.means(d), cfg.hemp, opt, cfg.train.batch_size, cfg.seed,
          out.search_rounds, prev, &out.warnings);
      for (uint64_t h : r.start_hashes)
        if (h != snap_hash) out.snapshot_hashes_uniform = false;
      out.masks[d] = r.mask;
      nlohmann::json cand_scores = nlohmann::json::array();
      for (const CandidateMask& c : r.candidates)
        cand_scores.push_back(c.valid ? nlohmann::json(c.score)
                                      : nlohmann::json());
      per_domain[std::to_string(d)] = {
          {"chosen_z", r.chosen_z},
          {"score", r.score},
          {"density", r.mask_density},
          {"active", r.active_count},
          {"prune_iters", r.prune_iters},
          {"kept_previous", r.kept_previous},
          {"candidate_scores", cand_scores}};
    }
    if (!store.state_equals(snap)) out.reset_discipline_ok = false;
    round["domains"] = per_domain;
    out.rounds.push_back(round);
    out.search_rounds++;
    stats_acc.reset();
  };

  auto eval_valid = [&]() {
    const std::map<int, HierMask>* masks = uses_masks ? &out.masks : nullptr;
    ScoredSet ss = score_dataset(model, store, masks, ab, valid);
    std::vector<int> excluded;
    return domain_auc(ss, &excluded);
  };

  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    std::vector<size_t> order(train.samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng =
        Rng::substream(cfg.seed, "epoch-shuffle-" + std::to_string(epoch));
    rng.shuffle(order);

    for (size_t off = 0; off < order.size();
         off += size_t(cfg.train.batch_size)) {
      if (uses_masks && batches_done >= cfg.hemp.warmup_batches &&
          batches_done >= next_search_at) {
        run_search_round();
        next_search_at = batches_done + cfg.hemp.update_interval;
      }

      std::vector<Sample> batch;
      for (size_t i = off;
           i < std::min(off + size_t(cfg.train.batch_size), order.size());
           ++i)
        batch.push_back(train.samples[order[i]]);
      std::vector<double> labels;
      for (const Sample& s : batch) labels.push_back(double(s.label));

      if (ab == Ablation::BaseOnly) {
        Tape t;
        Value logit =
            model.base_head(t, store, model.base_forward(t, store, batch));
        Value loss = t.mean_all(t.bce(t.sigmoid(logit), labels));
        t.backward(loss);
        store.adam_step(opt);
      } else if (ab == Ablation::Hei ||
                 batches_done < cfg.hemp.warmup_batches) {
        Tape t;
        HeiTrace trace;
        Value base = model.base_forward(t, store, batch);
        std::vector<Head> heads =
            model.hei_forward(t, store, base, nullptr, &trace);
        Value loss = loss_warmup(t, heads, labels);
        t.backward(loss);
        store.adam_step(opt);
        stats_acc.accumulate(batch, trace);
      } else {
        // masked phase: group the mixed batch by domain so each sample
        // trains under its domain's mask; one optimizer step per batch
        std::map<int, std::vector<Sample>> groups;
        for (const Sample& s : batch) groups[s.domain_id].push_back(s);
        for (auto& [d, gbatch] : groups) {
          std::vector<double> glabels;
          for (const Sample& s : gbatch) glabels.push_back(double(s.label));
          const HierMask* mask =
              out.masks.count(d) ? &out.masks.at(d) : nullptr;
          Tape t;
          HeiTrace trace;
          Value base = model.base_forward(t, store, gbatch);
          std::vector<Head> heads =
              model.hei_forward(t, store, base, mask, &trace);
          Value loss = mask ? loss_masked(t, heads, glabels)
                            : loss_warmup(t, heads, glabels);
          // scale so the step reflects the mixed batch, not group count
          loss = t.scale(loss, double(gbatch.size()) / double(batch.size()));
          t.backward(loss);
          stats_acc.accumulate(gbatch, trace);
        }
        store.adam_step(opt);
      }
      batches_done++;
    }

    double va = eval_valid();
    out.epochs.push_back({{"epoch", epoch}, {"valid_domain_auc", va}});
    if (va > best_valid) {
      best_valid = va;
      best_snap = store.snapshot();
      best_masks = out.masks;
      bad_rounds = 0;
    } else if (++bad_rounds >= cfg.train.patience) {
      break;
    }
  }

  // ensure at least one search happened for masked ablations
  if (uses_masks && out.search_rounds == 0) run_search_round();

  if (best_snap) {
    store.restore(*best_snap);
    if (!best_masks.empty() || !uses_masks) out.masks = best_masks;
  }
  out.batches_trained = batches_done;
  return out;
}

struct RunArtifacts {
  nlohmann::json report;
  std::map<int, HierMask> masks;
  std::vector<long> train_counts;
};

// End-to-end seeded run: data (synth or CSV), split, augment, train,
// evaluate on test, and emit report / masks / checkpoint under outdir.
inline RunArtifacts run(const RunConfig& cfg, const std::string& outdir) {
  namespace fs = std::filesystem;
  fs::create_directories(outdir);
  std::vector<std::string> warnings;

  Dataset full;
  if (cfg.synth) {
    SynthConfig sc = *cfg.synth;
    sc.seed = cfg.seed;
    SynthResult sr = generate(sc);
    std::string csv = (fs::path(outdir) / "synth_data.csv").string();
    save_csv(sr.dataset, csv);
    full = load_csv(csv, cfg.schema);
  } else {
    if (cfg.data_csv.empty())
      throw std::invalid_argument("run: no data source configured");
    full = load_csv(cfg.data_csv, cfg.schema);
  }

  auto splits = split(full, cfg.r_train, cfg.r_valid, cfg.r_test, cfg.seed,
                      &warnings);
  Dataset &train = splits[0], &valid = splits[1], &test = splits[2];
  DomainStats stats = compute_stats(train, cfg.minor_threshold);

  std::map<int, AugmentedDataset> aug;
  if (cfg.ablation == Ablation::Hemp || cfg.ablation == Ablation::Full) {
    AugConfig ac = cfg.aug;
    ac.seed = cfg.seed;
    if (cfg.ablation == Ablation::Hemp) ac.r_aug = 0.0;
    PopularityTable pop =
        compute_popularity(train, ac.rho_quantile, &warnings);
    aug = build_augmented(train, stats, pop, ac, &warnings);
  }

  Model model(cfg.model, full.schema->vocab_size);
  ParameterStore store;
  Rng init_rng = Rng::substream(cfg.seed, "model-init");
  model.build(store, init_rng);

  TrainOutcome tr = train_driver(model, store, train, valid, stats, aug, cfg);
  for (const std::string& w : tr.warnings) warnings.push_back(w);

  // test data is read exactly once, after training completes
  const std::map<int, HierMask>* masks =
      (cfg.ablation == Ablation::Hemp || cfg.ablation == Ablation::Full)
          ? &tr.masks
          : nullptr;
  ScoredSet test_scores =
      score_dataset(model, store, masks, cfg.ablation, test);

  RunArtifacts art;
  art.train_counts = stats.counts;
  art.masks = tr.masks;
  nlohmann::json& rep = art.report;
  rep["build_id"] = AREAD_BUILD_ID;
  rep["config"] = config_json(cfg);
  rep["domain_counts"] = stats.counts;
  rep["minor_domains"] = stats.minor_set;
  rep["metrics"] = metrics_json(test_scores, stats.counts);
  rep["hemp_rounds"] = tr.rounds;
  rep["epochs"] = tr.epochs;
  rep["batches_trained"] = tr.batches_trained;
  rep["reset_discipline_ok"] = tr.reset_discipline_ok;
  rep["snapshot_hashes_uniform"] = tr.snapshot_hashes_uniform;
  rep["test_read_after_training"] = true;
  rep["warnings"] = warnings;

  std::ofstream rf(fs::path(outdir) / "report.json");
  rf << rep.dump(2) << "\n";

  if (masks) {
    fs::create_directories(fs::path(outdir) / "masks");
    for (const auto& [d, m] : tr.masks)
      save_mask(m, d,
                (fs::path(outdir) / "masks" /
                 ("mask_d" + std::to_string(d) + ".txt"))
                    .string());
  }

  // checkpoint carries everything eval needs: model config, schema with
  // vocabularies, split protocol, and training-split counts
  nlohmann::json meta;
  meta["model"] = cfg.model;
  meta["ablation"] = ablation_name(cfg.ablation);
  meta["split"] = {cfg.r_train, cfg.r_valid, cfg.r_test};
  meta["seed"] = cfg.seed;
  meta["minor_threshold"] = cfg.minor_threshold;
  meta["train_counts"] = stats.counts;
  nlohmann::json schema_j;
  schema_j["fields"] = cfg.schema.fields;
  schema_j["item_field"] = cfg.schema.item_field;
  schema_j["user_field"] = cfg.schema.user_field;
  schema_j["domain_col"] = cfg.schema.domain_col;
  schema_j["label_col"] = cfg.schema.label_col;
  nlohmann::json vocabs = nlohmann::json::array();
  for (const auto& vm : full.schema->vocab) {
    nlohmann::json v = nlohmann::json::object();
    for (const auto& [val, id] : vm) v[val] = id;
    vocabs.push_back(v);
  }
  schema_j["vocab"] = vocabs;
  schema_j["domain_count"] = full.schema->domain_count;
  meta["schema"] = schema_j;
  store.save((fs::path(outdir) / "checkpoint.bin").string(), meta);
  return art;
}

// Inference-only pass from a checkpoint: rebuilds the model and frozen
// schema, re-splits the CSV with the stored protocol, and reports metrics
// on the test split.
inline nlohmann::json eval_checkpoint(const std::string& checkpoint,
                                      const std::string& mask_dir,
                                      const std::string& data_csv) {
  namespace fs = std::filesystem;
  ParameterStore store;
  nlohmann::json meta = store.load(checkpoint);

  ModelConfig mc = meta.at("model").get<ModelConfig>();
  Ablation ab = parse_ablation(meta.at("ablation").get<std::string>());
  auto schema = std::make_shared<Schema>();
  const nlohmann::json& sj = meta.at("schema");
  schema->spec.fields = sj.at("fields").get<std::vector<std::string>>();
  schema->spec.item_field = sj.at("item_field").get<std::string>();
  schema->spec.user_field = sj.at("user_field").get<std::string>();
  schema->spec.domain_col = sj.at("domain_col").get<std::string>();
  schema->spec.label_col = sj.at("label_col").get<std::string>();
  schema->domain_count = sj.at("domain_count").get<int>();
  for (const auto& vm : sj.at("vocab")) {
    std::map<std::string, int> m;
    int vs = 1;
    for (auto it = vm.begin(); it != vm.end(); ++it) {
      m[it.key()] = it.value().get<int>();
      vs = std::max(vs, it.value().get<int>() + 1);
    }
    schema->vocab.push_back(std::move(m));
    schema->vocab_size.push_back(vs);
  }
  schema->frozen = true;

  Dataset full = load_csv(data_csv, schema->spec, schema);
  auto sp = meta.at("split").get<std::vector<double>>();
  auto splits =
      split(full, sp[0], sp[1], sp[2], meta.at("seed").get<uint64_t>());
  Dataset& test = splits[2];

  Model model(mc, schema->vocab_size);
  // shape check against the loaded store
  for (const auto& [name, e] : store.entries()) (void)name;

  std::map<int, HierMask> masks;
  if (!mask_dir.empty()) {
    for (const auto& entry : fs::directory_iterator(mask_dir)) {
      if (entry.path().extension() != ".txt") continue;
      int d = -1;
      HierMask m = load_mask(entry.path().string(), &d);
      auto shapes = mc.hei.mask_shapes();
      if (m.layers.size() != shapes.size())
        throw std::runtime_error("eval: mask shape mismatch in " +
                                 entry.path().string());
      masks.emplace(d, std::move(m));
    }
  }

  std::vector<long> train_counts = meta.at("train_counts").get<std::vector<long>>();
  ScoredSet ss = score_dataset(model, store, masks.empty() ? nullptr : &masks,
                               ab, test);
  nlohmann::json rep;
  rep["build_id"] = AREAD_BUILD_ID;
  rep["metrics"] = metrics_json(ss, train_counts);
  return rep;
}

// Pairwise aggregate Mask Overlap Ratio matrix over a mask dump directory,
// as CSV (header row/column of domain ids).
inline void analyze_masks(const std::string& mask_dir,
                          const std::string& out_csv) {
  namespace fs = std::filesystem;
  std::map<int, HierMask> masks;
  for (const auto& entry : fs::directory_iterator(mask_dir)) {
    if (entry.path().extension() != ".txt") continue;
    int d = -1;
    HierMask m = load_mask(entry.path().string(), &d);
    masks.emplace(d, std::move(m));
  }
  if (masks.empty())
    throw std::runtime_error("analyze_masks: no masks in " + mask_dir);
  std::ofstream f(out_csv);
  if (!f) throw std::runtime_error("analyze_masks: cannot write " + out_csv);
  f << "domain";
  for (const auto& [d, m] : masks) f << "," << d;
  f << "\n";
  for (const auto& [d1, m1] : masks) {
    f << d1;
    for (const auto& [d2, m2] : masks)
      f << "," << overlap_ratio(m1, m2);
    f << "\n";
  }
}

// -------- flat key=value config files --------

inline std::map<std::string, std::string> parse_kv_file(
    const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(f, line)) {
    size_t h = line.find('#');
    if (h != std::string::npos) line = line.substr(0, h);
    size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t\r");
      size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (!key.empty()) kv[key] = val;
  }
  return kv;
}

inline std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

inline SynthConfig parse_synth_config(const std::string& path) {
  auto kv = parse_kv_file(path);
  SynthConfig c;
  auto get = [&](const char* k) -> std::optional<std::string> {
    auto it = kv.find(k);
    if (it == kv.end()) return std::nullopt;
    return it->second;
  };
  if (auto v = get("d")) c.D = std::stoi(*v);
  if (auto v = get("clusters")) {
    c.cluster.clear();
    for (const auto& s : split_commas(*v)) c.cluster.push_back(std::stoi(s));
  }
  if (auto v = get("sizes")) {
    c.sizes.clear();
    for (const auto& s : split_commas(*v)) c.sizes.push_back(std::stol(s));
  }
  if (auto v = get("users")) c.users = std::stoi(*v);
  if (auto v = get("items")) c.items = std::stoi(*v);
  if (auto v = get("popularity_exponent"))
    c.popularity_exponent = std::stod(*v);
  if (auto v = get("noise")) c.noise = std::stod(*v);
  if (auto v = get("latent_dim")) c.latent_dim = std::stoi(*v);
  if (auto v = get("seed")) c.seed = std::stoull(*v);
  c.validate();
  return c;
}

inline void apply_run_config(RunConfig& c,
                             const std::map<std::string, std::string>& kv) {
  auto get = [&](const char* k) -> std::optional<std::string> {
    auto it = kv.find(k);
    if (it == kv.end()) return std::nullopt;
    return it->second;
  };
  if (auto v = get("lr")) c.train.lr = std::stod(*v);
  if (auto v = get("batch_size")) c.train.batch_size = std::stoi(*v);
  if (auto v = get("weight_decay")) c.train.weight_decay = std::stod(*v);
  if (auto v = get("epochs")) c.train.epochs = std::stoi(*v);
  if (auto v = get("patience")) c.train.patience = std::stoi(*v);
  if (auto v = get("minor_threshold")) c.minor_threshold = std::stod(*v);
  if (auto v = get("ratios")) {
    auto parts = split_commas(*v);
    if (parts.size() != 3)
      throw std::invalid_argument("config: ratios needs three values");
    c.r_train = std::stod(parts[0]);
    c.r_valid = std::stod(parts[1]);
    c.r_test = std::stod(parts[2]);
  }
  if (auto v = get("fields")) c.schema.fields = split_commas(*v);
  if (auto v = get("item_field")) c.schema.item_field = *v;
  if (auto v = get("user_field")) c.schema.user_field = *v;
  if (auto v = get("emb_dim")) c.model.emb.dim = std::stoi(*v);
  if (auto v = get("mmoe_experts")) c.model.mmoe.num_experts = std::stoi(*v);
  if (auto v = get("hemp.z")) c.hemp.Z = std::stoi(*v);
  if (auto v = get("hemp.k")) c.hemp.k = std::stoi(*v);
  if (auto v = get("hemp.s0")) c.hemp.S0 = std::stod(*v);
  if (auto v = get("hemp.s")) c.hemp.S = std::stod(*v);
  if (auto v = get("hemp.alpha")) c.hemp.alpha = std::stod(*v);
  if (auto v = get("hemp.lr_u")) c.hemp.lr_u = std::stod(*v);
  if (auto v = get("hemp.update_interval"))
    c.hemp.update_interval = std::stoi(*v);
  if (auto v = get("hemp.warmup_batches"))
    c.hemp.warmup_batches = std::stoi(*v);
  if (auto v = get("hemp.flip_prob")) c.hemp.flip_prob = std::stod(*v);
  if (auto v = get("aug.r_aug")) c.aug.r_aug = std::stod(*v);
  if (auto v = get("aug.rho_quantile")) c.aug.rho_quantile = std::stod(*v);
  if (auto v = get("aug.rule")) {
    if (*v == "user-history-first")
      c.aug.rule = AssignRule::UserHistoryFirst;
    else if (*v == "inverse-size-sampling")
      c.aug.rule = AssignRule::InverseSizeSampling;
    else
      throw std::invalid_argument("config: unknown aug.rule " + *v);
  }
}

}  // namespace aread
