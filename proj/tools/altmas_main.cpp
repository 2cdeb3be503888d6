// altmas: command-line front end for active metric estimation.
//
//   altmas run --config exp.cfg
//   altmas run --pool-idx imgs lbls --preds p.txt --metrics accuracy,precision:2
//              --strategy altmas --budget 500 --seed 1 --out out/
//   altmas report --log out/altmas.csv --log out/tradition.csv --svg out/cmp.svg
//   altmas synth --kind blobs --n 2000 --mut-acc 0.7 --out data/

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "altmas/altmas.hpp"

namespace fs = std::filesystem;

namespace {

int run_command(altmas::ExperimentConfig config, bool quiet) {
  const auto pool = altmas::load_pool(config);
  const auto specs = altmas::parse_metric_set(config.metrics, pool.num_classes(), config.zero_division);
  std::error_code ec;
  fs::create_directories(config.out_dir, ec);
  if (ec) throw altmas::IoError("cannot create " + config.out_dir.string() + ": " + ec.message());

  std::cerr << "pool: N=" << pool.num_points() << " d=" << pool.dim() << " C=" << pool.num_classes()
            << ", metrics:";
  for (const auto& s : specs) std::cerr << ' ' << s.name();
  std::cerr << '\n';

  std::vector<altmas::ExperimentLog> logs;
  std::ostream* progress = quiet ? nullptr : &std::cerr;
  if (config.strategy == "tradition") {
    logs.push_back(altmas::run_tradition(config, pool, specs));
  } else {
    logs.push_back(altmas::run_active_testing(config, pool, specs, altmas::mc_dropout_surrogate, progress));
    if (config.with_tradition) logs.push_back(altmas::run_tradition(config, pool, specs));
  }
  for (const auto& log : logs) {
    const auto path = config.out_dir / (log.strategy + ".csv");
    altmas::write_csv(log, path, config.log_wall_time);
    std::cout << log.strategy << ": final average relative error "
              << log.final_mean_relative_error() << " (" << path.string() << ")\n";
  }
  altmas::emit_svg(logs, config.out_dir / "report.svg");
  return 0;
}

int report_command(const std::vector<std::string>& log_paths, const std::string& svg_path) {
  std::vector<altmas::ExperimentLog> logs;
  for (const auto& p : log_paths) logs.push_back(altmas::read_csv(p));
  altmas::emit_svg(logs, fs::path(svg_path));
  for (const auto& log : logs) {
    std::cout << log.strategy << ": final average relative error "
              << log.final_mean_relative_error() << '\n';
  }
  return 0;
}

int synth_command(const altmas::SynthOptions& opt, const std::string& out_dir) {
  const auto pool = altmas::synth_blobs(opt);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw altmas::IoError("cannot create " + out_dir + ": " + ec.message());
  const fs::path dir(out_dir);
  altmas::write_csv_pool(pool, dir / "pool.csv");
  altmas::write_predictions(dir / "predictions.txt", pool.mut_predictions());
  altmas::write_truth_metrics(pool, dir / "truth_metrics.csv");
  std::cout << "wrote " << pool.num_points() << " points to " << out_dir << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Label-efficient estimation of classifier metrics"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run an active-testing experiment");
  std::string config_path;
  std::vector<std::string> pool_idx;
  std::string pool_csv, preds, metrics, strategy, out;
  std::size_t budget = 0, n0 = 0, reps = 0, mc = 0, batch = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> overrides;
  bool with_tradition = false, quiet = false;
  run->add_option("--config", config_path, "key = value config file");
  run->add_option("--pool-idx", pool_idx, "IDX image and label files")->expected(2);
  run->add_option("--pool-csv", pool_csv, "CSV pool (label,pred,f0,...)");
  run->add_option("--preds", preds, "model-under-test predictions, one per line");
  run->add_option("--metrics", metrics, "comma-separated metric set");
  run->add_option("--strategy", strategy, "random | bald | altmas | tradition");
  run->add_option("--budget", budget, "oracle queries after the seed set");
  run->add_option("--n0", n0, "seed set size");
  run->add_option("--reps", reps, "repetitions");
  run->add_option("--mc-samples", mc, "MC-dropout passes");
  run->add_option("--batch-size", batch, "points labeled per iteration");
  run->add_option("--seed", seed, "base seed");
  run->add_option("--out", out, "output directory");
  run->add_option("--set", overrides, "extra key=value config entries");
  run->add_flag("--with-tradition", with_tradition, "also run the Tradition baseline");
  run->add_flag("--quiet", quiet, "no per-iteration progress");

  // report
  auto* report = app.add_subcommand("report", "Render logs as an SVG chart");
  std::vector<std::string> log_paths;
  std::string svg_path;
  report->add_option("--log", log_paths, "experiment CSV log (repeatable)")->required();
  report->add_option("--svg", svg_path, "output SVG path")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic pool with known metrics");
  std::string kind = "blobs", synth_out;
  altmas::SynthOptions synth_opt;
  synth->add_option("--kind", kind, "generator (blobs)");
  synth->add_option("--n", synth_opt.num_points, "number of points");
  synth->add_option("--classes", synth_opt.num_classes, "number of classes");
  synth->add_option("--dim", synth_opt.dim, "feature dimension");
  synth->add_option("--mut-acc", synth_opt.mut_accuracy, "model-under-test accuracy");
  synth->add_option("--flip", synth_opt.flip, "random | region");
  synth->add_option("--separation", synth_opt.separation, "class-mean radius");
  synth->add_option("--seed", synth_opt.seed, "generator seed");
  synth->add_option("--out", synth_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) {
      altmas::ExperimentConfig config;
      if (!config_path.empty()) config = altmas::load_config(config_path);
      if (!pool_idx.empty()) {
        config.pool_source = "idx";
        config.pool_images = pool_idx[0];
        config.pool_labels = pool_idx[1];
      }
      if (!pool_csv.empty()) {
        config.pool_source = "csv";
        config.pool_csv = pool_csv;
      }
      if (!preds.empty()) config.predictions = preds;
      if (!metrics.empty()) config.metrics = metrics;
      if (!strategy.empty()) config.strategy = strategy;
      if (run->count("--budget")) config.budget = budget;
      if (run->count("--n0")) config.n0 = n0;
      if (run->count("--reps")) config.repetitions = reps;
      if (run->count("--mc-samples")) config.mc_samples = mc;
      if (run->count("--batch-size")) config.acquisition_batch = batch;
      if (run->count("--seed")) config.seed = seed;
      if (!out.empty()) config.out_dir = out;
      if (with_tradition) config.with_tradition = true;
      for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw altmas::ConfigError("--set expects key=value");
        altmas::apply_config_value(config, kv.substr(0, eq), kv.substr(eq + 1));
      }
      return run_command(config, quiet);
    }
    if (*report) return report_command(log_paths, svg_path);
    if (*synth) {
      if (kind != "blobs") throw altmas::ConfigError("unknown synth kind '" + kind + "'");
      return synth_command(synth_opt, synth_out);
    }
  } catch (const altmas::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
