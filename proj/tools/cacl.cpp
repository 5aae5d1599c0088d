// Command-line driver: train, eval, compress, report.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "cacl/compression.hpp"
#include "cacl/harness.hpp"
#include "cacl/serialize.hpp"
#include "cacl/trainer.hpp"

namespace fs = std::filesystem;
using namespace cacl;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
  const RunConfig cfg = load_run_config(config_path);
  fs::create_directories(out_dir);
  const fs::path out(out_dir);
  const std::vector<TaskDataset> stream = generate_stream(cfg.stream);
  const RunResult result = run_continual(stream, cfg.network, cfg.train);
  for (const std::string& w : result.warnings) std::cerr << "warning: " << w << '\n';

  switch (cfg.train.mode) {
    case TrainMode::kFull:
    case TrainMode::kFixed:
      save_space(result.shared, (out / "model.cacl").string());
      break;
    case TrainMode::kSingleTask:
      for (std::size_t t = 0; t < result.single_task.size(); ++t)
        save_space(result.single_task[t], (out / ("model_task" + std::to_string(t + 1) + ".cacl")).string());
      break;
    case TrainMode::kBaselineUb:
      break;
  }
  if (cfg.save_uncompressed && !result.uncompressed.empty()) {
    // Sorted but unpruned factors with the same heads, for `compress`.
    SharedSpace raw(cfg.network);
    for (std::size_t t = 0; t < result.uncompressed.size(); ++t) {
      const TaskHead& head = cfg.train.mode == TrainMode::kSingleTask ? result.single_task[t].head(1)
                                                                       : result.shared.head(t + 1);
      raw = raw.append(result.uncompressed[t], head);
    }
    save_space(raw, (out / "uncompressed.cacl").string());
  }
  for (std::size_t t = 0; t < stream.size(); ++t)
    write_labeled_csv((out / ("task" + std::to_string(t + 1) + "_test.csv")).string(), stream[t].test_x,
                      stream[t].test_y);
  write_text(out / "metrics.json", metrics_to_json(result.report, cfg));
  write_text(out / "ranks.csv", ranks_csv(result.report));

  std::printf("ACC %.2f%%  BWT %.2f%%  Size %.6f MB (%zu bytes)\n", 100.0 * result.report.acc,
              100.0 * result.report.bwt, size_mb(result.report.size_bytes.back()), result.report.size_bytes.back());
  return 0;
}

int cmd_eval(const std::string& model_path, std::size_t task, const std::string& data_path) {
  const SharedSpace shared = load_space(model_path);
  const LabeledSamples data = read_labeled_csv(data_path, shared.spec().input_size());
  const double acc = accuracy(task_logits(shared, task, data.x), data.y);
  std::printf("task %zu accuracy %.17g (%zu samples)\n", task, acc, data.y.size());
  return 0;
}

int cmd_compress(const std::string& model_path, double energy, const std::string& out_path) {
  const SharedSpace shared = load_space(model_path);
  PruneConfig cfg;
  cfg.energy_e = energy;
  std::vector<std::vector<LayerCompressionStats>> stats;
  const SharedSpace out = recompress(shared, cfg, &stats);
  save_space(out, out_path);
  std::printf("%-5s %-6s %8s %8s %14s %14s %12s %12s\n", "task", "layer", "before", "after", "tail_energy",
              "sq_error", "gram_dev_U", "gram_dev_V");
  for (std::size_t t = 0; t < stats.size(); ++t)
    for (std::size_t l = 0; l < stats[t].size(); ++l) {
      const LayerCompressionStats& s = stats[t][l];
      std::printf("%-5zu %-6zu %8zu %8zu %14.6e %14.6e %12.3e %12.3e\n", t + 1, l + 1, s.rank_before, s.rank_after,
                  s.tail_energy, s.squared_error, s.gram_deviation_u, s.gram_deviation_v);
    }
  std::printf("size %zu -> %zu bytes\n", size_bytes(param_count(shared)), size_bytes(param_count(out)));
  return 0;
}

int cmd_report(const std::string& runs_dir) {
  std::fputs(format_summary_table(aggregate_runs(runs_dir)).c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compression-aware continual learning over a shared SVD-factorized space"};
  app.require_subcommand(1);

  std::string config, out_dir, model, data, out_file, runs;
  std::size_t task = 0;
  double energy = 1e-5;

  CLI::App* train = app.add_subcommand("train", "Train a task stream and write model, metrics and ranks");
  train->add_option("--config", config, "Flat JSON run configuration")->required();
  train->add_option("--out", out_dir, "Output directory")->required();

  CLI::App* eval = app.add_subcommand("eval", "Accuracy of one task on a labeled CSV file");
  eval->add_option("--model", model, "Shared-space file")->required();
  eval->add_option("--task", task, "Task id (from 1)")->required();
  eval->add_option("--data", data, "CSV samples: label,f1,...,fd")->required();

  CLI::App* compress = app.add_subcommand("compress", "Re-prune every task block of a saved space");
  compress->add_option("--model", model, "Shared-space file")->required();
  compress->add_option("--energy", energy, "Pruning intensity e in [0, 1)")->required();
  compress->add_option("--out", out_file, "Output shared-space file")->required();

  CLI::App* report = app.add_subcommand("report", "Aggregate run directories into mean(std) rows");
  report->add_option("--runs", runs, "Directory holding run directories")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(config, out_dir);
    if (*eval) return cmd_eval(model, task, data);
    if (*compress) return cmd_compress(model, energy, out_file);
    if (*report) return cmd_report(runs);
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
