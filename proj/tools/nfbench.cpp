#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "nf/train.hpp"

namespace fs = std::filesystem;
using nf::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitValidation = 2;

std::string file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::uint64_t h = 1469598103934665603ull;
  char buf[4096];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

nf::ExperimentConfig load_config(const std::string& path, std::int64_t seed) {
  auto cfg = nf::ExperimentConfig::load(path);
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  return cfg;
}

struct TrainResult {
  nf::RunReport report;
  std::string error;  // non-empty on failure
};

// Trains one config and writes report.csv, metrics.json, model.json.
nf::RunReport run_train(const nf::ExperimentConfig& cfg,
                        const std::string& out_dir) {
  fs::create_directories(out_dir);
  nf::Rng rng(nf::Rng::derive(cfg.seed, 0x6d6f64656cull));
  nf::RunReport rep;
  if (cfg.experiment == "trajectory" || cfg.experiment == "stiff") {
    const auto ds = nf::generate_trajectory_dataset(cfg);
    auto model = nf::make_trajectory_model(cfg, ds.dim, rng);
    rep = nf::train_trajectory(cfg, ds, model);
    model.save(out_dir + "/model.json");
  } else if (cfg.experiment == "tpp") {
    const auto ds = nf::generate_event_dataset(cfg);
    auto model = nf::make_tpp_model(cfg, ds, rng);
    rep = nf::train_tpp(cfg, ds, model);
    model.save(out_dir + "/model.json");
  } else {
    const auto ds = nf::generate_density_dataset(cfg);
    auto model = nf::make_density_model(cfg, rng);
    rep = nf::train_density(cfg, ds, model);
    model.save(out_dir + "/model.json");
  }
  rep.save_csv(out_dir + "/report.csv");
  rep.save_metrics_json(out_dir + "/metrics.json");
  return rep;
}

int cmd_gen(const nf::ExperimentConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const std::string base = out_dir + "/" + cfg.data;
  std::size_t rows = 0;
  if (cfg.experiment == "trajectory" || cfg.experiment == "stiff") {
    const auto ds = nf::generate_trajectory_dataset(cfg);
    ds.save_csv(base + ".csv");
    ds.save_binary(base + ".bin");
    rows = ds.rows.size();
  } else if (cfg.experiment == "tpp") {
    const auto ds = nf::generate_event_dataset(cfg);
    ds.save_csv(base + ".csv");
    ds.save_binary(base + ".bin");
    rows = ds.seqs.size();
  } else {
    const auto ds = nf::generate_density_dataset(cfg);
    ds.save_csv(base + ".csv");
    ds.save_binary(base + ".bin");
    rows = ds.samples.rows();
  }
  std::cout << "wrote " << base << ".csv rows=" << rows
            << " checksum=" << file_checksum(base + ".csv") << "\n";
  std::cout << "wrote " << base << ".bin checksum="
            << file_checksum(base + ".bin") << "\n";
  return kExitOk;
}

int cmd_train(const nf::ExperimentConfig& cfg, const std::string& out_dir) {
  const auto rep = run_train(cfg, out_dir);
  std::cout << "config_hash=" << rep.config_hash << " epochs="
            << rep.rows.size() << " train_seconds=" << rep.train_seconds
            << "\n";
  for (const auto& [k, v] : rep.metrics)
    std::cout << k << "=" << v << "\n";
  return kExitOk;
}

int cmd_eval(const nf::ExperimentConfig& cfg, const std::string& model_path,
             const std::string& split_name, const std::string& out_dir) {
  const nf::Split split = nf::split_from_string(split_name);
  fs::create_directories(out_dir);
  json out;
  out["schema_version"] = nf::kReportSchemaVersion;
  out["split"] = split_name;
  if (cfg.experiment == "trajectory" || cfg.experiment == "stiff") {
    const auto ds = nf::generate_trajectory_dataset(cfg);
    const auto model = nf::TrajectoryModel::load(model_path);
    if (model.dim != ds.dim)
      throw std::invalid_argument("model/dataset dimension mismatch");
    nf::SolveStats stats;
    out["mse"] = nf::eval_trajectory_mse(model, ds, split, &stats);
    out["nfev"] = stats.nfev;
  } else if (cfg.experiment == "tpp") {
    const auto ds = nf::generate_event_dataset(cfg);
    const auto model = nf::TppModel::load(model_path);
    out["nll"] = nf::eval_tpp_nll(model, ds, split, cfg.n_mc, cfg.seed);
    out["gt_nll"] = nf::mean_gt_nll(ds, split);
  } else {
    const auto ds = nf::generate_density_dataset(cfg);
    const auto model = nf::DensityModel::load(model_path);
    out["nll"] = nf::eval_density_nll(model, ds, split);
  }
  std::ofstream f(out_dir + "/eval.json");
  f << out.dump(2) << "\n";
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

int cmd_bench(const std::vector<std::string>& config_paths, std::int64_t seed,
              const std::string& out_dir, unsigned parallel) {
  if (config_paths.size() < 2) {
    std::cerr << "bench: need >= 2 configs\n";
    return kExitValidation;
  }
  std::vector<nf::ExperimentConfig> cfgs;
  for (const auto& p : config_paths) cfgs.push_back(load_config(p, seed));
  fs::create_directories(out_dir);

  std::vector<TrainResult> results(cfgs.size());
  auto run_one = [&](std::size_t i) {
    try {
      results[i].report = run_train(cfgs[i], out_dir + "/run_" +
                                                 std::to_string(i));
    } catch (const std::exception& e) {
      results[i].error = e.what();
    }
  };
  if (parallel > 1) {
    std::vector<std::thread> pool;
    std::size_t next = 0;
    for (unsigned w = 0; w < parallel; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < cfgs.size(); i += parallel) run_one(i);
      });
    (void)next;
    for (auto& th : pool) th.join();
  } else {
    for (std::size_t i = 0; i < cfgs.size(); ++i) run_one(i);
  }

  // Last-epoch wall clock of the first successful run sets the baseline
  // for speedup ratios.
  double base_epoch = 0.0;
  for (const auto& r : results)
    if (r.error.empty() && !r.report.rows.empty()) {
      base_epoch = r.report.rows.back().epoch_seconds;
      break;
    }

  json table = json::array();
  std::ofstream csv(out_dir + "/bench.csv");
  csv << "config,hash,status,epochs,last_epoch_seconds,train_seconds,"
         "last_epoch_nfev,final_train_loss,final_val_loss,speedup_vs_first\n";
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    const auto& r = results[i];
    json row;
    row["config"] = config_paths[i];
    row["hash"] = cfgs[i].hash();
    row["status"] = r.error.empty() ? "ok" : "failed";
    if (!r.error.empty()) row["error"] = r.error;
    double last_sec = 0.0, speedup = 0.0, tl = 0.0, vl = 0.0;
    std::size_t nfev = 0, epochs = 0;
    if (r.error.empty() && !r.report.rows.empty()) {
      const auto& last = r.report.rows.back();
      last_sec = last.epoch_seconds;
      nfev = last.nfev;
      tl = last.train_loss;
      vl = last.val_loss;
      epochs = r.report.rows.size();
      speedup = last_sec > 0.0 ? base_epoch / last_sec : 0.0;
    }
    row["epochs"] = epochs;
    row["last_epoch_seconds"] = last_sec;
    row["train_seconds"] = r.error.empty() ? r.report.train_seconds : 0.0;
    row["last_epoch_nfev"] = nfev;
    row["final_train_loss"] = tl;
    row["final_val_loss"] = vl;
    row["speedup_vs_first"] = speedup;
    table.push_back(row);
    csv << config_paths[i] << "," << cfgs[i].hash() << ","
        << (r.error.empty() ? "ok" : "failed") << "," << epochs << ","
        << last_sec << "," << (r.error.empty() ? r.report.train_seconds : 0.0)
        << "," << nfev << "," << tl << "," << vl << "," << speedup << "\n";
  }
  json out;
  out["schema_version"] = nf::kReportSchemaVersion;
  out["rows"] = table;
  std::ofstream jf(out_dir + "/bench.json");
  jf << out.dump(2) << "\n";
  std::cout << out.dump(2) << "\n";
  for (const auto& r : results)
    if (!r.error.empty()) return kExitRuntime;
  return kExitOk;
}

int cmd_tpp(const nf::ExperimentConfig& cfg, const std::string& out_dir) {
  if (cfg.experiment != "tpp")
    throw std::invalid_argument("tpp: config experiment must be 'tpp'");
  const auto rep = run_train(cfg, out_dir);
  std::cout << "test_nll=" << rep.metrics.at("test_nll")
            << " gt_nll_test=" << rep.metrics.at("gt_nll_test") << "\n";
  return kExitOk;
}

int cmd_density(const nf::ExperimentConfig& cfg, const std::string& out_dir) {
  if (cfg.experiment != "density")
    throw std::invalid_argument("density: config experiment must be 'density'");
  const auto rep = run_train(cfg, out_dir);
  const auto model = nf::DensityModel::load(out_dir + "/model.json");

  // Grid densities for external plotting, plus the normalization audit.
  std::ofstream grid(out_dir + "/grid_density.csv");
  grid << "x,y,t,density\n";
  const std::size_t n = 60;
  const double lo = -3.0, hi = 3.0;
  const double h = (hi - lo) / static_cast<double>(n);
  for (double t : {0.25, 0.5, 1.0}) {
    for (std::size_t i = 0; i < n; ++i) {
      nf::Tensor pts(n, 2);
      for (std::size_t j = 0; j < n; ++j) {
        pts(j, 0) = lo + (static_cast<double>(i) + 0.5) * h;
        pts(j, 1) = lo + (static_cast<double>(j) + 0.5) * h;
      }
      const nf::Tensor lp = model.cnf ? model.field.log_prob(t, pts)
                                      : model.coupling.log_prob(t, pts);
      for (std::size_t j = 0; j < n; ++j)
        grid << pts(j, 0) << "," << pts(j, 1) << "," << t << ","
             << std::exp(lp(j, 0)) << "\n";
    }
    const double integral =
        model.cnf ? nf::grid_integral(model.field, t, lo, hi, 200)
                  : nf::grid_integral(model.coupling, t, lo, hi, 200);
    std::cout << "t=" << t << " grid_integral=" << integral << "\n";
  }
  std::cout << "test_nll=" << rep.metrics.at("test_nll") << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neural flow benchmark harness"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", model_path, split_name = "test";
  std::vector<std::string> config_paths;
  std::int64_t seed = -1;
  unsigned parallel = 1;

  auto add_common = [&](CLI::App* sub, bool needs_config = true) {
    auto* opt = sub->add_option("--config", config_path, "config JSON path");
    if (needs_config) opt->required();
    sub->add_option("--seed", seed, "override config seed");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--parallel", parallel, "worker count (bench)");
  };

  auto* gen = app.add_subcommand("gen", "generate dataset files");
  add_common(gen);
  auto* train = app.add_subcommand("train", "train a model");
  add_common(train);
  auto* eval = app.add_subcommand("eval", "evaluate a saved model");
  add_common(eval);
  eval->add_option("--model", model_path, "model JSON path")->required();
  eval->add_option("--split", split_name, "dataset split");
  auto* bench = app.add_subcommand("bench", "compare configs side by side");
  bench->add_option("--config", config_paths, "config JSON paths");
  bench->add_option("--seed", seed, "override config seeds");
  bench->add_option("--out", out_dir, "output directory");
  bench->add_option("--parallel", parallel, "worker count");
  auto* tpp = app.add_subcommand("tpp", "train a point-process model");
  add_common(tpp);
  auto* density = app.add_subcommand("density", "train a density model");
  add_common(density);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (bench->parsed()) return cmd_bench(config_paths, seed, out_dir, parallel);
    const auto cfg = load_config(config_path, seed);
    if (gen->parsed()) return cmd_gen(cfg, out_dir);
    if (train->parsed()) return cmd_train(cfg, out_dir);
    if (eval->parsed()) return cmd_eval(cfg, model_path, split_name, out_dir);
    if (tpp->parsed()) return cmd_tpp(cfg, out_dir);
    if (density->parsed()) return cmd_density(cfg, out_dir);
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
