// Copyright 2026 The tssaudit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tssaudit/commands.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "tssaudit/csv.hpp"
#include "tssaudit/embstore.hpp"
#include "tssaudit/error.hpp"
#include "tssaudit/geometry.hpp"
#include "tssaudit/pipeline.hpp"
#include "tssaudit/probes.hpp"
#include "tssaudit/rng.hpp"
#include "tssaudit/splitter.hpp"
#include "tssaudit/synthgen.hpp"

namespace tssaudit {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json lp_defaults() {
  return {{"learning_rate", 1e-3}, {"batch_size", 128}, {"epochs", 20},
          {"beta1", 0.9},          {"beta2", 0.999},    {"epsilon", 1e-8},
          {"standardize", false}};
}

LpConfig lp_from(const json& j) {
  LpConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<int>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.epsilon = j.at("epsilon").get<double>();
  c.standardize = j.at("standardize").get<bool>();
  return c;
}

/// Overlays `user` onto `defaults`, rejecting keys the defaults lack.
json resolve(const json& defaults, const json& user, const std::string& where) {
  json out = defaults;
  if (user.is_null()) return out;
  if (!user.is_object()) throw ParameterError(where + ": parameters must be an object");
  for (const auto& [key, value] : user.items()) {
    if (!defaults.contains(key)) {
      throw ParameterError("unknown parameter '" + where + key + "'");
    }
    if (defaults[key].is_object()) {
      out[key] = resolve(defaults[key], value, where + key + ".");
    } else {
      out[key] = value;
    }
  }
  return out;
}

std::array<double, 3> fractions_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw ParameterError("fractions must have three entries");
  return {v[0], v[1], v[2]};
}

json cells_json(const CellCounts& c) {
  return {{"site0_normal", c[0][0]}, {"site0_tumor", c[0][1]},
          {"site1_normal", c[1][0]}, {"site1_tumor", c[1][1]}};
}

json probe_json(const ProbeReport& r) {
  return {{"classifier", to_string(r.classifier)}, {"accuracy", r.accuracy},
          {"n_test", r.n_test},                     {"class_ids", r.class_ids},
          {"confusion_matrix", r.confusion},        {"per_class_recall", r.per_class_recall},
          {"seed", r.seed}};
}

std::string confusion_csv(const ProbeReport& r) {
  std::string out = "true\\predicted";
  for (int c : r.class_ids) out += "," + std::to_string(c);
  out += "\n";
  for (std::size_t i = 0; i < r.class_ids.size(); ++i) {
    out += std::to_string(r.class_ids[i]);
    for (auto v : r.confusion[i]) out += "," + std::to_string(v);
    out += "\n";
  }
  return out;
}

/// Files of one command, committed together once the computation is done.
using Outputs = std::map<std::string, std::string>;

struct Context {
  std::string stage = "config";
  json params;
  std::uint64_t seed = 0;
  const AuditConfig* config = nullptr;
};

EmbeddingTable load_inputs(Context& ctx) {
  ctx.stage = "load";
  if (ctx.config->inputs.empty()) throw ParameterError("no --input table given");
  std::vector<EmbeddingTable> tables;
  for (const auto& p : ctx.config->inputs) tables.push_back(load_table(p));
  if (tables.size() == 1) return std::move(tables.front());
  return concat_tables(tables);
}

/// The site-prediction subsample and patient split, shared by the
/// site-predict and reduced commands so both see the same split.
GroupedSplit site_split(const EmbeddingTable& table, Context& ctx, const json& p) {
  ctx.stage = "subsample";
  auto sub = subsample_per_site(table, p.at("budget_per_site").get<std::size_t>(),
                                derive_seed(ctx.seed, "site/subsample"));
  ctx.stage = "split";
  return patient_split(table, fractions_from(p.at("fractions")), derive_seed(ctx.seed, "site/split"),
                       sub.rows);
}

json cmd_site_prediction(Context& ctx, Outputs& files) {
  const auto& p = ctx.params;
  auto table = load_inputs(ctx);
  ctx.stage = "labels";
  table.site_labels();
  SitePredictionConfig cfg;
  cfg.budget_per_site = p.at("budget_per_site").get<std::size_t>();
  cfg.fractions = fractions_from(p.at("fractions"));
  cfg.k = p.at("k").get<int>();
  cfg.lp = lp_from(p.at("lp"));
  ctx.stage = "site-prediction";
  const auto res = run_site_prediction(table, ctx.seed, cfg);

  json payload;
  payload["model_tag"] = table.model_tag();
  payload["n_rows"] = table.rows();
  payload["dim"] = table.dim();
  payload["n_sampled"] = res.sampled.size();
  payload["n_train"] = res.split.train.size();
  payload["n_val"] = res.split.val.size();
  payload["n_test"] = res.split.test.size();
  payload["group_violations"] = count_group_violations(table, res.split);
  payload["warnings"] = res.warnings;
  std::string acc = "classifier,accuracy,n_test\n";
  for (const auto& [clf, rep] : res.reports) {
    payload["classifiers"][std::string(to_string(clf))] = probe_json(rep);
    acc += std::string(to_string(clf)) + "," + csv::format_double(rep.accuracy) + "," +
           std::to_string(rep.n_test) + "\n";
    files["confusion_" + std::string(to_string(clf)) + ".csv"] = confusion_csv(rep);
  }
  json log = json::array();
  for (const auto& e : res.probe.training_log) {
    log.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
  }
  payload["lp_training_log"] = log;
  payload["lp_selected_epoch"] = res.probe.selected_epoch;
  files["accuracy.csv"] = acc;
  files["split.txt"] = format_split(table, res.split);
  return payload;
}

json cmd_bias(Context& ctx, Outputs& files) {
  const auto& p = ctx.params;
  auto table = load_inputs(ctx);
  ctx.stage = "labels";
  table.site_labels();
  table.class_labels();
  BiasExperimentConfig cfg;
  cfg.repetitions = p.at("repetitions").get<int>();
  cfg.splits.patches_per_slide = p.at("patches_per_slide").get<std::size_t>();
  cfg.splits.slides_per_cell = p.at("slides_per_cell").get<std::size_t>();
  cfg.lp = lp_from(p.at("lp"));
  ctx.stage = "bias-splits";
  const auto splits = build_bias_splits(table, derive_seed(ctx.seed, "bias/splits"), cfg.splits);
  ctx.stage = "bias-training";
  const auto outcomes = run_bias_experiment(table, splits, ctx.seed, cfg);

  json payload;
  payload["model_tag"] = table.model_tag();
  payload["splits"] = json::array();
  std::string csv_out = "split,ratio,mean_accuracy,std_accuracy,accuracies\n";
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& o = outcomes[i];
    payload["splits"].push_back({{"index", o.spec.index},
                                 {"ratio", o.spec.ratio_label},
                                 {"train", cells_json(o.spec.train)},
                                 {"val", cells_json(o.spec.val)},
                                 {"test", cells_json(o.spec.test)},
                                 {"group_violations", count_group_violations(table, splits[i].split)},
                                 {"accuracies", o.accuracies},
                                 {"mean", o.mean},
                                 {"std", o.stddev}});
    std::string accs;
    for (std::size_t r = 0; r < o.accuracies.size(); ++r) {
      if (r) accs += ";";
      accs += csv::format_double(o.accuracies[r]);
    }
    csv_out += std::to_string(o.spec.index) + "," + o.spec.ratio_label + "," +
               csv::format_double(o.mean) + "," + csv::format_double(o.stddev) + "," + accs + "\n";
    files["split_" + std::to_string(o.spec.index) + ".txt"] = format_split(table, splits[i].split);
  }
  files["bias_accuracy.csv"] = csv_out;
  return payload;
}

json cmd_distances(Context& ctx, Outputs& files) {
  const auto& p = ctx.params;
  auto table = load_inputs(ctx);
  ctx.stage = "labels";
  table.site_labels();
  table.class_labels();
  DistanceConfig cfg;
  cfg.n_per_group = p.at("n_per_group").get<std::size_t>();
  cfg.n_other_slides = p.at("n_other_slides").get<std::size_t>();
  cfg.include_reference = p.at("include_reference").get<bool>();
  ctx.stage = "reference";
  std::string ref = p.at("reference").get<std::string>();
  if (ref.empty()) ref = choose_reference(table, ctx.seed);
  ctx.stage = "distances";
  const auto profiles = distance_profiles(table, ref, ctx.seed, cfg);

  json payload;
  payload["model_tag"] = table.model_tag();
  payload["reference"] = ref;
  payload["reference_slide"] = table.meta(*table.find(ref)).slide_id;
  payload["profiles"] = json::array();
  std::string out = "group,rank,distance,class,patch_id,slide_id\n";
  for (const auto& prof : profiles) {
    const std::string g(to_string(prof.group));
    payload["profiles"].push_back({{"group", g},
                                   {"slides", prof.slides},
                                   {"n", prof.entries.size()},
                                   {"min", prof.entries.front().distance},
                                   {"max", prof.entries.back().distance}});
    for (std::size_t i = 0; i < prof.entries.size(); ++i) {
      const auto& e = prof.entries[i];
      const auto& m = table.meta(e.row);
      out += csv::join({g, std::to_string(i), csv::format_double(e.distance),
                        e.class_label == kTumor ? "tumor" : "normal", m.patch_id, m.slide_id});
      out += "\n";
    }
  }
  files["distances.csv"] = out;
  return payload;
}

json cmd_reduced(Context& ctx, Outputs& files) {
  const auto& p = ctx.params;
  auto table = load_inputs(ctx);
  ctx.stage = "labels";
  table.site_labels();
  const auto split = site_split(table, ctx, p);
  ctx.stage = "pca";
  const auto model = fit_pca(table);
  ctx.stage = "reduced-knn";
  const auto ells = p.at("ell_list").get<std::vector<std::size_t>>();
  const auto curve = reduced_knn_curve(table, split, model, ells, p.at("k").get<int>());

  json payload;
  payload["model_tag"] = table.model_tag();
  payload["n_train"] = split.train.size();
  payload["n_test"] = split.test.size();
  payload["baseline_accuracy"] = curve.baseline;
  payload["skipped_ell"] = curve.skipped;
  payload["points"] = json::array();
  std::string out = "ell,accuracy,kind\n";
  for (const auto& pt : curve.points) {
    payload["points"].push_back({{"ell", pt.ell}, {"accuracy", pt.accuracy}});
    out += std::to_string(pt.ell) + "," + csv::format_double(pt.accuracy) + ",reduced\n";
  }
  out += std::to_string(table.dim()) + "," + csv::format_double(curve.baseline) + ",full\n";
  files["reduced_knn.csv"] = out;
  files["split.txt"] = format_split(table, split);
  return payload;
}

json cmd_separability(Context& ctx, Outputs& files) {
  const auto& p = ctx.params;
  auto table = load_inputs(ctx);
  ctx.stage = "labels";
  table.site_labels();
  ctx.stage = "pca";
  const auto model = fit_pca(table);
  ctx.stage = "separability";
  const auto n = std::min(p.at("n_components").get<std::size_t>(), table.dim());
  const auto prof = separability_profile(table, model, n);

  json payload;
  payload["model_tag"] = table.model_tag();
  payload["analyzed"] = prof.analyzed;
  payload["rank"] = model.rank;
  payload["components"] = json::array();
  std::string out = "component,evr,ovo_auroc\n";
  for (const auto& c : prof.components) {
    payload["components"].push_back(
        {{"component", c.component}, {"evr", c.evr}, {"ovo_auroc", c.ovo_auroc}});
    out += std::to_string(c.component) + "," + csv::format_double(c.evr) + "," +
           csv::format_double(c.ovo_auroc) + "\n";
  }
  files["separability.csv"] = out;
  return payload;
}

json cmd_stain(Context& ctx, Outputs&) {
  const auto& p = ctx.params;
  ctx.stage = "inputs";
  std::vector<fs::path> slides;
  for (const auto& in : ctx.config->inputs) {
    if (fs::is_directory(in)) {
      for (const auto& e : fs::directory_iterator(in)) {
        if (e.is_regular_file() && e.path().extension() == ".png") slides.push_back(e.path());
      }
    } else {
      slides.emplace_back(in);
    }
  }
  std::sort(slides.begin(), slides.end());
  if (slides.empty()) throw ParameterError("no slide images given");
  PipelineConfig cfg;
  cfg.tile_size = p.at("tile_size").get<int>();
  cfg.thumbnail_factor = p.at("thumbnail_factor").get<int>();
  cfg.min_tissue_fraction = p.at("min_tissue_fraction").get<double>();
  cfg.min_std = p.at("min_std").get<double>();
  const auto mode = p.at("std_mode").get<std::string>();
  if (mode != "gray" && mode != "per_channel") throw ParameterError("std_mode must be gray|per_channel");
  cfg.std_mode = mode == "gray" ? StdMode::gray : StdMode::per_channel;
  cfg.mask.glass_level = p.at("glass_level").get<int>();
  cfg.reinhard = p.at("reinhard").get<bool>();
  cfg.macenko = p.at("macenko").get<bool>();
  cfg.target_pool_size = p.at("target_pool_size").get<std::size_t>();
  cfg.seed = ctx.seed;
  ctx.stage = "pipeline";
  const auto res = run_patch_pipeline(slides, ctx.config->out, cfg);

  json payload;
  payload["slides"] = res.slides;
  payload["tiles"] = res.tiles;
  payload["kept"] = res.kept;
  payload["manifest_rows"] = res.manifest.size();
  payload["errors"] = res.errors;
  if (res.reinhard_target) {
    payload["reinhard_target"] = {{"means", res.reinhard_target->means},
                                  {"stds", res.reinhard_target->stds}};
  }
  if (res.macenko_target) {
    const auto& m = res.macenko_target->stain_matrix;
    payload["macenko_target"] = {
        {"hematoxylin", {m(0, 0), m(1, 0), m(2, 0)}},
        {"eosin", {m(0, 1), m(1, 1), m(2, 1)}},
        {"max_concentrations",
         {res.macenko_target->max_concentrations(0), res.macenko_target->max_concentrations(1)}}};
  }
  return payload;
}

json cmd_synth(Context& ctx, Outputs&) {
  const auto& p = ctx.params;
  SynthConfig cfg;
  cfg.dims = p.at("dims").get<std::size_t>();
  cfg.n_sites = p.at("n_sites").get<std::size_t>();
  cfg.n_classes = p.at("n_classes").get<std::size_t>();
  cfg.patients_per_site = p.at("patients_per_site").get<std::size_t>();
  cfg.slides_per_patient = p.at("slides_per_patient").get<std::size_t>();
  cfg.patches_per_slide = p.at("patches_per_slide").get<std::size_t>();
  cfg.site_strength = p.at("site_strength").get<double>();
  cfg.class_strength = p.at("class_strength").get<double>();
  cfg.slide_strength = p.at("slide_strength").get<double>();
  cfg.noise = p.at("noise").get<double>();
  cfg.noise_anisotropy = p.at("noise_anisotropy").get<double>();
  cfg.placement = parse_signature_placement(p.at("signature_placement").get<std::string>());
  cfg.class_layout = parse_class_layout(p.at("class_layout").get<std::string>());
  cfg.seed = ctx.seed;
  ctx.stage = "generate";
  const auto table = generate(cfg);
  ctx.stage = "write";
  if (ctx.config->out.empty()) throw ParameterError("synth needs --out <file.emb>");
  const fs::path out(ctx.config->out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_table(table, out);
  json payload;
  payload["n_rows"] = table.rows();
  payload["dim"] = table.dim();
  payload["model_tag"] = table.model_tag();
  return payload;
}

}  // namespace

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {"site-predict", "bias",  "distances", "reduced",
                                                 "separability", "stain", "synth"};
  return names;
}

json default_params(const std::string& experiment) {
  if (experiment == "site-predict") {
    return {{"budget_per_site", 50000}, {"fractions", {0.6, 0.1, 0.3}}, {"k", 5},
            {"lp", lp_defaults()}};
  }
  if (experiment == "bias") {
    return {{"repetitions", 5}, {"patches_per_slide", 2500}, {"slides_per_cell", 7},
            {"lp", lp_defaults()}};
  }
  if (experiment == "distances") {
    return {{"reference", ""}, {"n_per_group", 1000}, {"n_other_slides", 5},
            {"include_reference", false}};
  }
  if (experiment == "reduced") {
    return {{"budget_per_site", 50000}, {"fractions", {0.6, 0.1, 0.3}}, {"k", 5},
            {"ell_list", kDefaultEllList}};
  }
  if (experiment == "separability") return {{"n_components", 50}};
  if (experiment == "stain") {
    return {{"tile_size", 256},        {"thumbnail_factor", 32}, {"min_tissue_fraction", 0.5},
            {"min_std", 8.0},          {"std_mode", "gray"},     {"glass_level", 200},
            {"reinhard", true},        {"macenko", true},        {"target_pool_size", 500}};
  }
  if (experiment == "synth") {
    const SynthConfig d;
    return {{"dims", d.dims},
            {"n_sites", d.n_sites},
            {"n_classes", d.n_classes},
            {"patients_per_site", d.patients_per_site},
            {"slides_per_patient", d.slides_per_patient},
            {"patches_per_slide", d.patches_per_slide},
            {"site_strength", d.site_strength},
            {"class_strength", d.class_strength},
            {"slide_strength", d.slide_strength},
            {"noise", d.noise},
            {"noise_anisotropy", d.noise_anisotropy},
            {"signature_placement", to_string(d.placement)},
            {"class_layout", to_string(d.class_layout)}};
  }
  throw ParameterError("unknown experiment '" + experiment + "'");
}

json to_json(const AuditConfig& c) {
  json j;
  j["experiment"] = c.experiment;
  j["inputs"] = c.inputs;
  j["out"] = c.out;
  if (c.seed) {
    j["seed"] = *c.seed;
  } else {
    j["seed"] = nullptr;
  }
  j["params"] = c.params;
  return j;
}

AuditConfig audit_config_from_json(const json& j) {
  if (!j.is_object()) throw ParameterError("config must be a JSON object");
  AuditConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "experiment") {
      c.experiment = value.get<std::string>();
    } else if (key == "inputs") {
      c.inputs = value.is_string() ? std::vector<std::string>{value.get<std::string>()}
                                   : value.get<std::vector<std::string>>();
    } else if (key == "out") {
      c.out = value.get<std::string>();
    } else if (key == "seed") {
      if (!value.is_null()) c.seed = value.get<std::uint64_t>();
    } else if (key == "params") {
      c.params = value;
    } else if (key != "schema_version" && key != "toolkit_version") {
      throw ParameterError("unknown config key '" + key + "'");
    }
  }
  return c;
}

std::string report_path(const AuditConfig& config) {
  if (config.experiment == "synth") return config.out + ".report.json";
  return (fs::path(config.out) / "report.json").string();
}

json run_command(const AuditConfig& config) {
  Context ctx;
  ctx.config = &config;
  const auto start = std::chrono::steady_clock::now();
  try {
    if (!config.seed) throw ParameterError("an explicit --seed is required");
    ctx.seed = *config.seed;
    if (config.out.empty()) throw ParameterError("--out is required");
    ctx.params = resolve(default_params(config.experiment), config.params, "");

    AuditConfig resolved = config;
    resolved.params = ctx.params;

    Outputs files;
    json payload;
    const auto& e = config.experiment;
    if (e == "site-predict") {
      payload = cmd_site_prediction(ctx, files);
    } else if (e == "bias") {
      payload = cmd_bias(ctx, files);
    } else if (e == "distances") {
      payload = cmd_distances(ctx, files);
    } else if (e == "reduced") {
      payload = cmd_reduced(ctx, files);
    } else if (e == "separability") {
      payload = cmd_separability(ctx, files);
    } else if (e == "stain") {
      payload = cmd_stain(ctx, files);
    } else {
      payload = cmd_synth(ctx, files);
    }

    ctx.stage = "write";
    json report;
    report["schema_version"] = kReportSchemaVersion;
    report["experiment"] = config.experiment;
    report["toolkit_version"] = TSSAUDIT_VERSION;
    report["config"] = to_json(resolved);
    report["payload"] = std::move(payload);
    report["wall_time_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (e != "synth") fs::create_directories(config.out);
    for (const auto& [name, content] : files) {
      csv::write_file_atomic(fs::path(config.out) / name, content);
    }
    csv::write_file_atomic(report_path(config), report.dump(2) + "\n");
    return report;
  } catch (const Error& err) {
    throw StageError(ctx.stage, err.kind(), err.what());
  } catch (const json::exception& err) {
    throw StageError(ctx.stage, "config", err.what());
  } catch (const fs::filesystem_error& err) {
    throw StageError(ctx.stage, "io", err.what());
  }
}

int cli_main(int argc, char** argv) {
  CLI::App app{"Batch-effect audit toolkit for patch embeddings"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(TSSAUDIT_VERSION));

  struct Flags {
    std::vector<std::string> inputs;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string config_file;
    std::vector<std::string> params;
  };
  std::map<std::string, Flags> flags;
  const std::map<std::string, std::string> help = {
      {"site-predict", "Predict the tissue source site with NCC, KNN and LP"},
      {"bias", "Tumor-vs-normal LP on four site-confounded training splits"},
      {"distances", "Ordered distances from a tumor reference patch"},
      {"reduced", "KNN site accuracy on the first principal components"},
      {"separability", "Per-component explained variance and site AUROC"},
      {"stain", "Tile slides, drop background, write stain-normalised patches"},
      {"synth", "Generate a synthetic embedding table"}};
  for (const auto& name : experiment_names()) {
    auto* sub = app.add_subcommand(name, help.at(name));
    auto& f = flags[name];
    sub->add_option("--input,-i", f.inputs, "Input table(s) or slide images/directories");
    sub->add_option("--out,-o", f.out, "Output directory (synth: output .emb file)");
    sub->add_option("--seed", f.seed, "Base seed for all randomness");
    sub->add_option("--config", f.config_file, "JSON config (e.g. a report's config echo)");
    sub->add_option("--param,-p", f.params, "Parameter override key=value (JSON value)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const auto* sub = app.get_subcommands().front();
  const auto name = sub->get_name();
  const auto& f = flags[name];
  try {
    AuditConfig config;
    if (!f.config_file.empty()) {
      std::ifstream in(f.config_file);
      if (!in) throw IoError("cannot open config file " + f.config_file);
      json j = json::parse(in);
      if (j.contains("config") && j.contains("payload")) j = j["config"];  // a whole report
      config = audit_config_from_json(j);
      if (!config.experiment.empty() && config.experiment != name) {
        throw ParameterError("config is for '" + config.experiment + "', not '" + name + "'");
      }
    }
    config.experiment = name;
    if (!f.inputs.empty()) config.inputs = f.inputs;
    if (!f.out.empty()) config.out = f.out;
    if (f.seed) config.seed = f.seed;
    for (const auto& kv : f.params) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ParameterError("--param expects key=value, got " + kv);
      const auto key = kv.substr(0, eq);
      const auto raw = kv.substr(eq + 1);
      json value = json::parse(raw, nullptr, false);
      if (value.is_discarded()) value = raw;
      json* target = &config.params;
      std::string rest = key;
      for (auto dot = rest.find('.'); dot != std::string::npos; dot = rest.find('.')) {
        target = &(*target)[rest.substr(0, dot)];
        rest = rest.substr(dot + 1);
      }
      (*target)[rest] = value;
    }
    const auto report = run_command(config);
    std::cout << report_path(config) << "\n";
    return 0;
  } catch (const StageError& e) {
    std::cerr << "tssaudit " << name << ": stage '" << e.stage() << "' failed [" << e.kind()
              << "]: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "tssaudit " << name << ": stage 'config' failed [" << e.kind()
              << "]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "tssaudit " << name << ": " << e.what() << "\n";
    return 2;
  }
}

}  // namespace tssaudit
