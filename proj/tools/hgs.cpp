// hgs — command-line front end: data generation, graph transforms, training,
// evaluation, experiment presets, stability analysis and event ingestion.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "hgs/data.hpp"
#include "hgs/eval.hpp"
#include "hgs/graph.hpp"
#include "hgs/pipeline.hpp"
#include "json.hpp"

#ifndef HGS_REPO_DIR
#define HGS_REPO_DIR "."
#endif

namespace {

using nlohmann::json;
using namespace hgs;

std::string read_input(const std::string& path) {
  if (path == "-") {
    std::stringstream ss;
    ss << std::cin.rdbuf();
    return ss.str();
  }
  std::ifstream f(path);
  if (!f) throw Error("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_output(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    if (text.empty() || text.back() != '\n') std::cout << '\n';
    return;
  }
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path);
  f << text;
  if (text.empty() || text.back() != '\n') f << '\n';
}

std::string hash_hex(const std::string& text) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(text)));
  return buf;
}

// Run manifest: config echo, content hashes of inputs, artifact list, timings.
struct Manifest {
  json j;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  Manifest(const std::string& command, const json& config) {
    j["command"] = command;
    j["config"] = config;
    j["inputs"] = json::object();
    j["artifacts"] = json::array();
  }
  void input(const std::string& name, const std::string& content) {
    j["inputs"][name] = hash_hex(content);
  }
  void artifact(const std::string& path, const std::string& content) {
    write_output(path, content);
    j["artifacts"].push_back({{"path", path}, {"fnv1a64", hash_hex(content)}});
  }
  void write(const std::string& path) {
    j["wall_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::steady_clock::now() - start)
                       .count();
    write_output(path, j.dump(2));
  }
};

pipeline::GridSpec grid_from_json(const json& g) {
  pipeline::GridSpec spec;
  if (g.contains("lambda1")) spec.lambda1 = g["lambda1"].get<std::vector<double>>();
  if (g.contains("lambda2")) spec.lambda2 = g["lambda2"].get<std::vector<double>>();
  if (g.contains("lr")) spec.lr = g["lr"].get<std::vector<double>>();
  if (g.contains("en_lambda1")) spec.en_lambda1 = g["en_lambda1"].get<std::vector<double>>();
  if (g.contains("en_lambda2")) spec.en_lambda2 = g["en_lambda2"].get<std::vector<double>>();
  if (g.contains("k_edges")) spec.k_edges = g["k_edges"].get<std::vector<int>>();
  return spec;
}

graph::SynthGraphKind kind_of(const std::string& s) {
  if (s == "refined") return graph::SynthGraphKind::Refined;
  if (s == "comprehensive") return graph::SynthGraphKind::Comprehensive;
  throw ValidationError("unknown graph kind '" + s + "' (refined|comprehensive)");
}

graph::SparsityRegime regime_of(const std::string& s) {
  if (s == "true") return graph::SparsityRegime::TrueSparsity;
  if (s == "quasi") return graph::SparsityRegime::QuasiSparsity;
  throw ValidationError("unknown regime '" + s + "' (true|quasi)");
}

std::string find_preset(const std::string& name) {
  std::vector<std::string> candidates = {
      name, name + ".json", std::string("configs/presets/") + name + ".json",
      std::string(HGS_REPO_DIR) + "/configs/presets/" + name + ".json"};
  for (const auto& c : candidates) {
    std::ifstream f(c);
    if (f) return c;
  }
  throw ValidationError("unknown preset '" + name +
                        "' (looked for configs/presets/" + name + ".json)");
}

int cmd_gen_data(const std::string& regime, const std::string& kind, int size, uint64_t seed,
                 const std::string& out, bool uva_cohort) {
  json cfg{{"regime", regime}, {"graph", kind},   {"size", size},
           {"seed", seed},     {"uva", uva_cohort}};
  Manifest man("gen-data", cfg);
  data::Dataset ds;
  if (uva_cohort) {
    data::UvaSimOptions opt;
    opt.size = size;
    opt.seed = seed;
    ds = data::simulate_uva_cohort(opt);
  } else {
    data::SynthOptions opt;
    opt.kind = kind_of(kind);
    opt.regime = regime_of(regime);
    opt.size = size;
    opt.seed = seed;
    ds = data::gen_synthetic(opt);
  }
  man.artifact(out, data::dataset_to_jsonl(ds));
  if (out != "-") man.write(out + ".manifest.json");
  return 0;
}

int cmd_graph(const std::string& action, const std::string& in, const std::string& out,
              const std::string& kind, const std::vector<std::string>& keep,
              const std::vector<std::string>& skips, bool force, bool exercise) {
  if (action == "uva") {
    write_output(out, graph::to_json(graph::build_uva_graph({exercise})));
  } else if (action == "synthetic") {
    write_output(out, graph::to_json(graph::build_synthetic_graph(kind_of(kind))));
  } else if (action == "condense") {
    auto g = graph::mech_from_json(read_input(in));
    graph::CondenseOptions opt;
    opt.keep_msccs = keep;
    opt.force = force;
    auto sg = graph::condense(g, opt);
    if (!graph::is_rdag(sg))
      std::cerr << "warning: condensed graph is not an RDAG (forced exclusions)\n";
    write_output(out, graph::to_json(sg));
  } else if (action == "augment") {
    auto sg = graph::super_from_json(read_input(in));
    graph::AugmentOptions opt;
    for (const auto& s : skips) {
      auto pos = s.find(':');
      if (pos == std::string::npos)
        throw ValidationError("--skip-shortcut expects input:observable, got " + s);
      opt.skip_pairs.insert({s.substr(0, pos), s.substr(pos + 1)});
    }
    write_output(out, graph::to_json(graph::augment(sg, opt)));
  } else {
    throw ValidationError("unknown graph action '" + action +
                          "' (uva|synthetic|condense|augment)");
  }
  return 0;
}

int cmd_train(const std::string& config_path) {
  json cfg = json::parse(read_input(config_path));
  Manifest man("train", cfg);

  auto dataset_text = read_input(cfg.at("dataset").get<std::string>());
  man.input("dataset", dataset_text);
  auto ds = data::dataset_from_jsonl(dataset_text);
  auto graph_text = read_input(cfg.at("graph").get<std::string>());
  man.input("graph", graph_text);
  auto mech = graph::mech_from_json(graph_text);

  pipeline::MethodConfig mc;
  mc.method = pipeline::method_from_name(cfg.at("method").get<std::string>());
  mc.grid = pipeline::expand_grid(mc.method, grid_from_json(cfg.value("grid", json::object())));
  mc.folds = cfg.value("K", 4);
  mc.epochs = cfg.value("epochs", 600);
  mc.batch_size = cfg.value("batch_size", 32);
  mc.normalize = cfg.value("normalize", false);
  int rep = cfg.value("rep", 0);
  uint64_t init_seed = cfg.contains("seeds") ? cfg["seeds"].value("init", 2024) : 2024;
  mc.seed = init_seed + static_cast<uint64_t>(rep);
  if (cfg.contains("seeds") && cfg["seeds"].contains("permutation") &&
      !cfg["seeds"]["permutation"].is_null()) {
    uint64_t pseed = cfg["seeds"]["permutation"].get<uint64_t>();
    // stored permutations: one stream, repetition r uses the r-th draw
    Rng rng(pseed);
    int n = static_cast<int>(ds.size());
    std::vector<int> perm(n);
    for (int r = 0; r <= rep; ++r) {
      for (int i = 0; i < n; ++i) perm[i] = i;
      for (int i = 0; i + 1 < n; ++i) {
        int j = i + static_cast<int>(rng.below(n - i));
        std::swap(perm[i], perm[j]);
      }
    }
    mc.permutation = perm;
  }
  mc.base_model.delta_t = cfg.value("delta_t", 1.0);
  mc.base_model.time_input = cfg.value("time_input", false);
  for (const auto& k : cfg.value("keep_msccs", std::vector<std::string>{}))
    mc.condense.keep_msccs.push_back(k);
  for (const auto& s : cfg.value("skip_shortcuts", std::vector<std::string>{})) {
    auto pos = s.find(':');
    if (pos != std::string::npos)
      mc.augment.skip_pairs.insert({s.substr(0, pos), s.substr(pos + 1)});
  }

  auto run = pipeline::run_method(mech, ds, mc);

  json results;
  results["method"] = pipeline::method_name(run.method);
  results["selected"] = run.cv.selected;
  results["grid_points"] = mc.grid.size();
  results["mean_val_mse"] = run.cv.mean_val_mse;
  results["fold_val_mse"] = run.cv.fold_val_mse;
  results["final_val_mse"] = run.final_val_mse;
  results["best_epoch"] = run.best_epoch;
  results["enp"] = train::enp(run.model.params, 1e-3);

  man.artifact(cfg.value("out_model", "model.json"), pipeline::save_trained(run));
  man.artifact(cfg.value("out_results", "results.json"), results.dump(2));
  man.write(cfg.value("out_results", "results.json") + ".manifest.json");
  return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& data_path,
                 const std::string& out_prefix) {
  json cfg{{"model", model_path}, {"data", data_path}};
  Manifest man("evaluate", cfg);
  auto model_text = read_input(model_path);
  man.input("model", model_text);
  auto run = pipeline::load_trained(model_text);
  auto data_text = read_input(data_path);
  man.input("data", data_text);
  auto ds = data::dataset_from_jsonl(data_text);

  auto row = pipeline::evaluate_run(run, ds, 0);
  man.artifact(out_prefix + ".csv", pipeline::report_csv({row}));
  man.artifact(out_prefix + ".json", pipeline::report_summary_json({row}));
  man.write(out_prefix + ".manifest.json");
  return 0;
}

void apply_overrides(json& preset, const std::vector<std::string>& sets) {
  for (const auto& kv : sets) {
    auto pos = kv.find('=');
    if (pos == std::string::npos)
      throw ValidationError("--set expects key=value, got " + kv);
    std::string key = kv.substr(0, pos), val = kv.substr(pos + 1);
    try {
      preset[key] = json::parse(val);  // numbers, arrays, booleans
    } catch (...) {
      preset[key] = val;  // bare string
    }
  }
}

int cmd_reproduce(const std::string& preset_name, const std::string& out_dir,
                  const std::vector<std::string>& sets) {
  std::string path = find_preset(preset_name);
  std::string text = read_input(path);
  json preset = json::parse(text);
  apply_overrides(preset, sets);

  Manifest man("reproduce", preset);
  man.input("preset", text);
  std::string prefix = out_dir.empty() ? "." : out_dir;
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  const std::string type = preset.value("type", "synthetic");
  if (type == "synthetic") {
    std::vector<json> variants;
    if (preset.contains("variants"))
      for (const auto& v : preset["variants"]) variants.push_back(v);
    else
      variants.push_back(json::object());

    std::vector<pipeline::RepetitionRow> all_rows;
    for (const auto& variant : variants) {
      auto get = [&](const char* key, json fallback) {
        return variant.contains(key) ? variant[key] : preset.value(key, fallback);
      };
      pipeline::SyntheticExperimentSpec spec;
      spec.kind = kind_of(get("kind", json("refined")).get<std::string>());
      spec.regime = regime_of(get("regime", json("true")).get<std::string>());
      spec.train_size = get("train_size", json(100)).get<int>();
      spec.test_size = get("test_size", json(10000)).get<int>();
      spec.repetitions = preset.value("repetitions", 5);
      spec.folds = preset.value("folds", 4);
      spec.epochs = preset.value("epochs", 600);
      spec.batch_size = preset.value("batch_size", 32);
      spec.train_seed_base = preset.value("train_seed_base", 10000);
      spec.test_seed = preset.value("test_seed", 90000);
      spec.init_seed_base = preset.value("init_seed_base", 2024);
      spec.methods.clear();
      for (const auto& m : preset.at("methods"))
        spec.methods.push_back(pipeline::method_from_name(m.get<std::string>()));
      // GD is omitted for the comprehensive graph (per-candidate retraining
      // over that edge count is not a desk-scale job)
      if (spec.kind == graph::SynthGraphKind::Comprehensive) {
        auto& ms = spec.methods;
        ms.erase(std::remove(ms.begin(), ms.end(), pipeline::Method::GD), ms.end());
      }
      for (auto it = preset.at("grids").begin(); it != preset.at("grids").end(); ++it)
        spec.grids[it.key()] =
            pipeline::expand_grid(pipeline::method_from_name(it.key()), grid_from_json(*it));

      auto rows = pipeline::run_synthetic_experiment(spec, true);
      std::string suffix =
          variants.size() > 1
              ? "-" + get("kind", json("refined")).get<std::string>() + "-" +
                    get("regime", json("true")).get<std::string>() + "-" +
                    std::to_string(spec.train_size)
              : "";
      man.artifact(prefix + "/metrics" + suffix + ".csv", pipeline::report_csv(rows));
      man.artifact(prefix + "/summary" + suffix + ".json",
                   pipeline::report_summary_json(rows));
      all_rows.insert(all_rows.end(), rows.begin(), rows.end());
    }
    if (variants.size() > 1)
      man.artifact(prefix + "/summary.json", pipeline::report_summary_json(all_rows));
  } else if (type == "uva") {
    pipeline::UvaExperimentSpec spec;
    spec.cohort_size = preset.value("cohort_size", 50);
    spec.cohort_seed = preset.value("cohort_seed", 7);
    spec.epochs = preset.value("epochs", 2000);
    spec.batch_size = preset.value("batch_size", 32);
    spec.lr = preset.value("lr", 3e-3);
    spec.hgs_lambda1 = preset.value("hgs_lambda1", 1e-5);
    spec.lambda2 = preset.value("lambda2", 1e-6);
    spec.folds = preset.value("folds", 5);
    spec.init_seed = preset.value("init_seed", 2024);
    auto res = pipeline::run_uva_experiment(spec, true);
    man.artifact(prefix + "/metrics.csv", pipeline::report_csv(res.rows));
    man.artifact(prefix + "/summary.json", pipeline::report_summary_json(res.rows));
    json checks{{"rdag_ok", res.rdag_ok}, {"gp_gt_collapsed", res.gp_gt_collapsed}};
    man.artifact(prefix + "/checks.json", checks.dump(2));
  } else {
    throw ValidationError("unknown preset type '" + type + "'");
  }
  man.write(prefix + "/manifest.json");
  return 0;
}

int cmd_stability(double a, double b, double c, double d, double h) {
  auto r = eval::stability_analyze(a, b, c, d, h);
  json j;
  j["lambda_plus"] = {r.lambda_plus.real(), r.lambda_plus.imag()};
  j["lambda_minus"] = {r.lambda_minus.real(), r.lambda_minus.imag()};
  j["blow_up"] = r.blow_up;
  j["kappa"] = std::isfinite(r.kappa) ? json(r.kappa) : json("inf");
  j["spectral_radius_step"] = r.spectral_radius_step;
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_ingest(const std::string& csv_path, const std::string& onset, const std::string& out) {
  json cfg{{"csv", csv_path}, {"onset", onset}};
  Manifest man("ingest", cfg);
  auto text = read_input(csv_path);
  man.input("csv", text);
  auto ev = data::parse_event_csv(text, onset);
  data::Dataset ds;
  ds.meta.obs_channels = {"G"};
  ds.meta.input_channels = data::discretize_input_channels();
  ds.meta.dt = 5.0;
  ds.instances.push_back(data::discretize(ev));
  man.artifact(out, data::dataset_to_jsonl(ds));
  if (out != "-") man.write(out + ".manifest.json");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hybrid graph sparsification for mechanistic neural ODEs"};
  app.require_subcommand(1);

  std::string regime = "true", kind = "refined", out;
  int size = 100;
  uint64_t seed = 0;
  bool uva_cohort = false;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset (JSONL)");
  gen->add_option("--regime", regime, "true|quasi");
  gen->add_option("--graph", kind, "refined|comprehensive");
  gen->add_option("--size", size, "number of instances");
  gen->add_option("--seed", seed, "generator seed");
  gen->add_flag("--uva-cohort", uva_cohort, "simulate the glucose cohort instead");
  gen->add_option("--out", out, "output path (- for stdout)")->required();

  std::string gaction, gin = "-", gout = "-", gkind = "refined";
  std::vector<std::string> keep, skips;
  bool force = false, exercise = false;
  auto* gr = app.add_subcommand("graph", "build or transform dependency graphs");
  gr->add_option("action", gaction, "uva|synthetic|condense|augment")->required();
  gr->add_option("--in", gin, "input graph JSON (- for stdin)");
  gr->add_option("--out", gout, "output graph JSON (- for stdout)");
  gr->add_option("--kind", gkind, "synthetic kind: refined|comprehensive");
  gr->add_option("--keep-mscc", keep, "leave this component uncollapsed (member id)");
  gr->add_option("--skip-shortcut", skips, "omit a pathway, as input:observable");
  gr->add_flag("--force", force, "accept a non-RDAG result from exclusions");
  gr->add_flag("--exercise-inputs", exercise, "wire heart-rate/step inputs into the UVA graph");

  std::string train_cfg;
  auto* tr = app.add_subcommand("train", "run a method on a dataset + graph per config");
  tr->add_option("--config", train_cfg, "experiment config JSON")->required();

  std::string model_path, data_path, out_prefix = "report";
  auto* ev = app.add_subcommand("evaluate", "metric report for a trained model");
  ev->add_option("--model", model_path, "trained model JSON")->required();
  ev->add_option("--data", data_path, "dataset JSONL")->required();
  ev->add_option("--out", out_prefix, "output prefix (.csv/.json)");

  std::string preset, rout;
  std::vector<std::string> sets;
  auto* rp = app.add_subcommand("reproduce", "run an experiment preset end to end");
  rp->add_option("--preset", preset, "preset name or path")->required();
  rp->add_option("--out", rout, "output directory");
  rp->add_option("--set", sets, "override a top-level preset key, key=value");

  double sa = -1, sb = 0, sc = 0, sd = -1, sh = 1;
  auto* st = app.add_subcommand("stability", "2-state cycle stability analysis");
  st->add_option("--a", sa);
  st->add_option("--b", sb);
  st->add_option("--c", sc);
  st->add_option("--d", sd);
  st->add_option("--step", sh, "forward-Euler step");

  std::string csv_path, onset, iout;
  auto* in = app.add_subcommand("ingest", "event CSV -> discretized instance JSONL");
  in->add_option("--csv", csv_path, "event CSV (stream,time,value)")->required();
  in->add_option("--onset", onset, "ISO-8601 onset for absolute timestamps");
  in->add_option("--out", iout, "output dataset path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(regime, kind, size, seed, out, uva_cohort);
    if (gr->parsed()) return cmd_graph(gaction, gin, gout, gkind, keep, skips, force, exercise);
    if (tr->parsed()) return cmd_train(train_cfg);
    if (ev->parsed()) return cmd_evaluate(model_path, data_path, out_prefix);
    if (rp->parsed()) return cmd_reproduce(preset, rout, sets);
    if (st->parsed()) return cmd_stability(sa, sb, sc, sd, sh);
    if (in->parsed()) return cmd_ingest(csv_path, onset, iout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
