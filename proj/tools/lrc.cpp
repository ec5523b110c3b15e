// SPDX-License-Identifier: Apache-2.0
//
// lrc — calibrate, compress, evaluate, benchmark and report on low-rank
// weight compression. Exit codes: 0 success, 2 configuration error, 3 I/O
// error, 4 numerical failure. Errors go to stderr as one JSON object; stdout
// carries only the primary result.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "lrc/allocation.hpp"
#include "lrc/bundle_io.hpp"
#include "lrc/calibration.hpp"
#include "lrc/compress.hpp"
#include "lrc/report.hpp"
#include "lrc/stability.hpp"
#include "lrc/synthetic.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumerical = 4;

void print_error(int code, const std::string& kind, const std::string& message) {
  const json doc = {{"error", {{"code", code}, {"kind", kind}, {"message", message}}}};
  std::cerr << doc.dump() << "\n";
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const lrc::ValidationError& e) {
    print_error(kExitConfig, "config", e.what());
    return kExitConfig;
  } catch (const lrc::ShapeError& e) {
    print_error(kExitConfig, "config", e.what());
    return kExitConfig;
  } catch (const lrc::IoError& e) {
    print_error(kExitIo, "io", e.what());
    return kExitIo;
  } catch (const lrc::NumericalError& e) {
    print_error(kExitNumerical, "numerical", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    print_error(kExitFailure, "internal", e.what());
    return kExitFailure;
  }
}

// Config file support: a flat JSON object whose keys are the long option
// names with dashes replaced by underscores. Explicit command-line flags win.
class ConfigFile {
 public:
  ConfigFile(const std::string& path, CLI::App* command) : command_(command) {
    if (path.empty()) {
      return;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) {
      throw lrc::IoError("cannot open config file " + path);
    }
    try {
      in >> values_;
    } catch (const json::exception& e) {
      throw lrc::ValidationError("config file " + path + " is not valid JSON: " + e.what());
    }
    if (!values_.is_object()) {
      throw lrc::ValidationError("config file " + path + " must hold a JSON object");
    }
  }

  template <typename T>
  void apply(const std::string& key, T& value) {
    known_.insert(key);
    if (!values_.contains(key)) {
      return;
    }
    if (command_->get_option("--" + flag_name(key))->count() > 0) {
      return;  // explicit flag wins
    }
    try {
      value = values_.at(key).get<T>();
    } catch (const json::exception&) {
      throw lrc::ValidationError("config field '" + key + "' has the wrong type");
    }
  }

  void finish() const {
    for (const auto& [key, value] : values_.items()) {
      if (known_.count(key) == 0) {
        throw lrc::ValidationError("unknown config field '" + key + "'");
      }
    }
  }

 private:
  static std::string flag_name(std::string key) {
    for (char& c : key) {
      if (c == '_') {
        c = '-';
      }
    }
    return key;
  }

  CLI::App* command_;
  json values_;
  std::set<std::string> known_;
};

std::string format_metric(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.6f", value);
  return buffer;
}

struct CalibrateArgs {
  std::string config;
  std::string model;
  std::string data;
  lrc::Index samples = 256;
  std::uint64_t seed = 0;
  lrc::Index block_size = lrc::kDefaultBlockRows;
  std::string out;
};

int run_calibrate(CalibrateArgs args, CLI::App* command) {
  ConfigFile config(args.config, command);
  config.apply("model", args.model);
  config.apply("data", args.data);
  config.apply("samples", args.samples);
  config.apply("seed", args.seed);
  config.apply("block_size", args.block_size);
  config.apply("out", args.out);
  config.finish();
  if (args.model.empty() || args.data.empty() || args.out.empty()) {
    throw lrc::ValidationError("calibrate requires --model, --data and --out");
  }
  if (args.samples < 1) {
    throw lrc::ValidationError("field 'samples' must be positive");
  }
  if (args.block_size < 1) {
    throw lrc::ValidationError("field 'block_size' must be positive");
  }

  const lrc::ModelBundle model = lrc::open_model(args.model);
  const std::unique_ptr<lrc::DataSource> source = lrc::open_data_source(args.data);
  std::cerr << "calibrating " << model.name << " on " << args.samples << " of "
            << source->batch_count() << " batches\n";

  lrc::CalibrationRun run = lrc::calibrate(model, *source, args.samples, args.seed);
  run.block_rows = args.block_size;
  run.model_descriptor = args.model;
  run.data_descriptor = args.data;
  lrc::save_calibration(run, model, args.out);

  const json summary = {{"out", args.out},
                        {"sidecar", lrc::calibration_sidecar_path(args.out).string()},
                        {"samples", run.sample_count},
                        {"matrices", run.matrix_order().size()}};
  std::cout << summary.dump() << "\n";
  return kExitOk;
}

struct CompressArgs {
  std::string config;
  std::string stats;
  std::string model;  // optional override of the descriptor recorded at calibration
  double ratio = 0.6;
  std::string strategy = "dynamic";
  double delta = 0.5;
  std::vector<double> alpha_grid = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  bool no_uniform_candidate = false;
  std::string val;
  lrc::Index val_batches = 16;
  std::uint64_t seed = 0;
  double rank_tol = lrc::kDefaultRankTol;
  unsigned threads = 0;
  std::string out;
};

int run_compress(CompressArgs args, CLI::App* command) {
  ConfigFile config(args.config, command);
  config.apply("stats", args.stats);
  config.apply("model", args.model);
  config.apply("ratio", args.ratio);
  config.apply("strategy", args.strategy);
  config.apply("delta", args.delta);
  config.apply("alpha_grid", args.alpha_grid);
  config.apply("val", args.val);
  config.apply("val_batches", args.val_batches);
  config.apply("seed", args.seed);
  config.apply("rank_tol", args.rank_tol);
  config.apply("threads", args.threads);
  config.apply("out", args.out);
  config.finish();
  if (args.stats.empty() || args.out.empty()) {
    throw lrc::ValidationError("compress requires --stats and --out");
  }
  if (args.strategy != "uniform" && args.strategy != "dynamic") {
    throw lrc::ValidationError("field 'strategy' must be uniform or dynamic");
  }

  const lrc::CalibrationRun run = lrc::load_calibration(args.stats);
  const std::string model_descriptor = args.model.empty() ? run.model_descriptor : args.model;
  if (model_descriptor.empty()) {
    throw lrc::ValidationError("no model recorded in the calibration artifact; pass --model");
  }
  const lrc::ModelBundle model = lrc::open_model(model_descriptor);
  const std::vector<lrc::LayerStats> stats = lrc::collect_layer_stats(model, run, args.rank_tol);

  lrc::AllocationConfig allocation_config;
  allocation_config.target_ratio = args.ratio;
  allocation_config.retention = args.delta;
  allocation_config.alpha_grid = args.alpha_grid;
  allocation_config.include_uniform_candidate = !args.no_uniform_candidate;

  lrc::CompressionProvenance provenance;
  provenance.strategy = args.strategy;
  provenance.ratio = args.ratio;
  provenance.retention = args.delta;
  provenance.seed = args.seed;

  json summary = {{"out", args.out}, {"strategy", args.strategy}, {"ratio", args.ratio}};

  if (args.strategy == "uniform") {
    const lrc::RankAllocation allocation = lrc::uniform_allocation(stats, allocation_config);
    provenance.alpha = "uniform";
    const lrc::CompressedBundle bundle = lrc::compress(model, run, allocation, provenance);
    lrc::export_bundle(bundle, args.out);
    summary["alpha"] = "uniform";
    summary["parameters"] = bundle.total_parameters();
  } else {
    if (args.val.empty()) {
      throw lrc::ValidationError("dynamic compression requires --val");
    }
    const std::unique_ptr<lrc::DataSource> val_source = lrc::open_data_source(args.val);
    const std::vector<lrc::ActivationBatch> validation =
        lrc::materialize(*val_source, args.val_batches);

    const std::vector<lrc::RankAllocation> candidates =
        lrc::generate_candidates(stats, allocation_config);
    std::cerr << "grid search over " << candidates.size() << " candidates\n";
    const lrc::GridSearchResult search = lrc::grid_search(
        candidates,
        [&](const lrc::RankAllocation& candidate) {
          return lrc::evaluate(model, lrc::compress(model, run, candidate), validation);
        },
        args.threads);
    for (const std::string& failure : search.failures) {
      std::cerr << "candidate failed: " << failure << "\n";
    }

    const lrc::RankAllocation& best = candidates[search.best_index];
    provenance.alpha = best.alpha_label();
    const lrc::CompressedBundle bundle = lrc::compress(model, run, best, provenance);
    lrc::export_bundle(bundle, args.out);

    const std::string report = lrc::allocation_report_json(stats, candidates, search.scores,
                                                           search.best_index, allocation_config);
    std::ofstream report_out(fs::path(args.out) / "allocation_report.json",
                             std::ios::binary | std::ios::trunc);
    if (!report_out) {
      throw lrc::IoError("cannot write allocation report in " + args.out);
    }
    report_out << report;

    summary["alpha"] = best.alpha_label();
    summary["score"] = search.scores[search.best_index];
    summary["parameters"] = bundle.total_parameters();
    summary["report"] = (fs::path(args.out) / "allocation_report.json").string();
  }
  std::cout << summary.dump() << "\n";
  return kExitOk;
}

struct EvaluateArgs {
  std::string config;
  std::string model;
  std::string bundle;
  std::string data;
  lrc::Index batches = -1;
  std::string metric = "relative_frobenius";
};

int run_evaluate(EvaluateArgs args, CLI::App* command) {
  ConfigFile config(args.config, command);
  config.apply("model", args.model);
  config.apply("bundle", args.bundle);
  config.apply("data", args.data);
  config.apply("batches", args.batches);
  config.apply("metric", args.metric);
  config.finish();
  if (args.model.empty() || args.bundle.empty() || args.data.empty()) {
    throw lrc::ValidationError("evaluate requires --model, --bundle and --data");
  }

  const lrc::ModelBundle model = lrc::open_model(args.model);
  const lrc::CompressedBundle bundle = lrc::import_bundle(args.bundle);
  const std::unique_ptr<lrc::DataSource> source = lrc::open_data_source(args.data);
  const double score =
      lrc::evaluate(model, bundle, lrc::materialize(*source, args.batches), args.metric);
  std::cout << format_metric(score) << "\n";
  return kExitOk;
}

struct BenchArgs {
  std::string config;
  std::vector<lrc::Index> shapes = {128, 1024, 2048, 4096};
  double ratio = 0.6;
  std::string dtype = "fp32";
  int seeds = 10;
  lrc::Index block_size = 256;
  unsigned threads = 0;
  std::string out;
  std::string json_out;
};

int run_bench(BenchArgs args, CLI::App* command) {
  ConfigFile config(args.config, command);
  config.apply("shapes", args.shapes);
  config.apply("ratio", args.ratio);
  config.apply("dtype", args.dtype);
  config.apply("seeds", args.seeds);
  config.apply("block_size", args.block_size);
  config.apply("threads", args.threads);
  config.apply("out", args.out);
  config.apply("json", args.json_out);
  config.finish();

  lrc::StabilityConfig suite;
  suite.shapes = args.shapes;
  suite.ratio = args.ratio;
  suite.dtype = lrc::bench_dtype_from_string(args.dtype);
  suite.seeds = args.seeds;
  suite.block_rows = args.block_size;
  suite.threads = args.threads;

  std::cerr << "running " << suite.shapes.size() * static_cast<std::size_t>(suite.seeds)
            << " stability rows at ratio " << suite.ratio << " (" << args.dtype << ")\n";
  const std::vector<lrc::StabilityResult> rows = lrc::run_stability_suite(suite);

  if (args.out.empty()) {
    lrc::write_stability_csv(rows, std::cout);
  } else {
    std::ofstream out(args.out, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw lrc::IoError("cannot write " + args.out);
    }
    lrc::write_stability_csv(rows, out);
    std::cout << args.out << "\n";
  }
  if (!args.json_out.empty()) {
    std::ofstream out(args.json_out, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw lrc::IoError("cannot write " + args.json_out);
    }
    lrc::write_stability_json(suite, rows, out);
  }
  return kExitOk;
}

struct ReportArgs {
  std::string config;
  std::string stats;
  double rank_tol = lrc::kDefaultRankTol;
  std::string out;
};

int run_report(ReportArgs args, CLI::App* command) {
  ConfigFile config(args.config, command);
  config.apply("stats", args.stats);
  config.apply("rank_tol", args.rank_tol);
  config.apply("out", args.out);
  config.finish();
  if (args.stats.empty() || args.out.empty()) {
    throw lrc::ValidationError("report requires --stats and --out");
  }

  const lrc::CalibrationRun run = lrc::load_calibration(args.stats);
  const std::vector<lrc::LayerStats> stats = lrc::collect_layer_stats(run, args.rank_tol);
  fs::create_directories(args.out);

  const fs::path stats_csv = fs::path(args.out) / "matrix_stats.csv";
  const fs::path spectrum_csv = fs::path(args.out) / "loss_spectrum.csv";
  {
    std::ofstream out(stats_csv, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw lrc::IoError("cannot write " + stats_csv.string());
    }
    lrc::write_matrix_stats_csv(stats, out);
  }
  {
    std::ofstream out(spectrum_csv, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw lrc::IoError("cannot write " + spectrum_csv.string());
    }
    lrc::write_loss_spectrum_csv(stats, out);
  }
  const json summary = {{"matrix_stats", stats_csv.string()},
                        {"loss_spectrum", spectrum_csv.string()},
                        {"matrices", stats.size()}};
  std::cout << summary.dump() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"activation-aware low-rank weight compression toolkit"};
  app.require_subcommand(1);

  CalibrateArgs calibrate_args;
  CLI::App* calibrate = app.add_subcommand(
      "calibrate", "Aggregate output covariance and layer statistics over calibration data");
  calibrate->add_option("--config", calibrate_args.config, "JSON config file; flags override it");
  calibrate->add_option("--model", calibrate_args.model, "model container path or synthetic:spec");
  calibrate->add_option("--data", calibrate_args.data, "activation container path or synthetic:spec");
  calibrate->add_option("--samples", calibrate_args.samples, "number of calibration batches")
      ->capture_default_str();
  calibrate->add_option("--seed", calibrate_args.seed, "sample-selection seed")->capture_default_str();
  calibrate->add_option("--block-size", calibrate_args.block_size, "accumulation row-block size")
      ->capture_default_str();
  calibrate->add_option("--out", calibrate_args.out, "output stats container (.safetensors)");

  CompressArgs compress_args;
  CLI::App* compress = app.add_subcommand(
      "compress", "Emit low-rank factors from a calibration artifact at a target ratio");
  compress->add_option("--config", compress_args.config, "JSON config file; flags override it");
  compress->add_option("--stats", compress_args.stats, "calibration artifact path");
  compress->add_option("--model", compress_args.model,
                       "model override (defaults to the descriptor recorded at calibration)");
  compress->add_option("--ratio", compress_args.ratio, "target parameter ratio in (0,1)")
      ->capture_default_str();
  compress->add_option("--strategy", compress_args.strategy, "uniform | dynamic")
      ->capture_default_str();
  compress->add_option("--delta", compress_args.delta, "guaranteed retention fraction in (0,1]")
      ->capture_default_str();
  compress->add_option("--alpha-grid", compress_args.alpha_grid, "comma-separated alpha values")
      ->delimiter(',');
  compress->add_flag("--no-uniform-candidate", compress_args.no_uniform_candidate,
                     "drop the uniform candidate from the grid");
  compress->add_option("--val", compress_args.val, "validation data path or synthetic:spec");
  compress->add_option("--val-batches", compress_args.val_batches,
                       "validation batches used for the grid search")
      ->capture_default_str();
  compress->add_option("--seed", compress_args.seed, "provenance seed recorded in the manifest")
      ->capture_default_str();
  compress->add_option("--rank-tol", compress_args.rank_tol, "numerical-rank tolerance")
      ->capture_default_str();
  compress->add_option("--threads", compress_args.threads, "max parallel candidate evaluations");
  compress->add_option("--out", compress_args.out, "output bundle directory");

  EvaluateArgs evaluate_args;
  CLI::App* evaluate = app.add_subcommand(
      "evaluate", "Score a compressed bundle against its source model on held-out data");
  evaluate->add_option("--config", evaluate_args.config, "JSON config file; flags override it");
  evaluate->add_option("--model", evaluate_args.model, "model container path or synthetic:spec");
  evaluate->add_option("--bundle", evaluate_args.bundle, "compressed bundle directory");
  evaluate->add_option("--data", evaluate_args.data, "validation data path or synthetic:spec");
  evaluate->add_option("--batches", evaluate_args.batches, "limit on validation batches (-1 = all)")
      ->capture_default_str();
  evaluate->add_option("--metric", evaluate_args.metric, "registered metric name")
      ->capture_default_str();

  BenchArgs bench_args;
  CLI::App* bench = app.add_subcommand(
      "bench", "Numerical-stability suite: engine vs direct-SVD oracle vs Cholesky whitening");
  bench->add_option("--config", bench_args.config, "JSON config file; flags override it");
  bench->add_option("--shapes", bench_args.shapes, "square instance sizes, comma separated")
      ->delimiter(',')
      ->capture_default_str();
  bench->add_option("--ratio", bench_args.ratio, "compression ratio")->capture_default_str();
  bench->add_option("--dtype", bench_args.dtype, "fp32 | fp64")->capture_default_str();
  bench->add_option("--seeds", bench_args.seeds, "seeds per shape")->capture_default_str();
  bench->add_option("--block-size", bench_args.block_size, "accumulation row-block size")
      ->capture_default_str();
  bench->add_option("--threads", bench_args.threads, "parallel rows (0 = hardware)");
  bench->add_option("--out", bench_args.out, "CSV output path (stdout when omitted)");
  bench->add_option("--json", bench_args.json_out, "JSON report path");

  ReportArgs report_args;
  CLI::App* report = app.add_subcommand(
      "report", "Render effective-rank/importance and loss-spectrum tables from a calibration artifact");
  report->add_option("--config", report_args.config, "JSON config file; flags override it");
  report->add_option("--stats", report_args.stats, "calibration artifact path");
  report->add_option("--rank-tol", report_args.rank_tol, "numerical-rank tolerance")
      ->capture_default_str();
  report->add_option("--out", report_args.out, "output directory for the CSV tables");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      return app.exit(e);  // --help and friends
    }
    print_error(kExitConfig, "usage", e.what());
    return kExitConfig;
  }

  if (calibrate->parsed()) {
    return guarded([&] { return run_calibrate(calibrate_args, calibrate); });
  }
  if (compress->parsed()) {
    return guarded([&] { return run_compress(compress_args, compress); });
  }
  if (evaluate->parsed()) {
    return guarded([&] { return run_evaluate(evaluate_args, evaluate); });
  }
  if (bench->parsed()) {
    return guarded([&] { return run_bench(bench_args, bench); });
  }
  if (report->parsed()) {
    return guarded([&] { return run_report(report_args, report); });
  }
  return kExitConfig;
}
