#include "cacl/harness.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace cacl {

using nlohmann::json;

namespace {

template <class T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

std::size_t get_count(const json& j, const std::string& key) {
  if (!j.is_number_integer() || j.get<long long>() < 0)
    throw ConfigError("config key '" + key + "' must be a non-negative integer");
  return j.get<std::size_t>();
}

std::vector<std::size_t> get_counts(const json& j, const std::string& key) {
  if (!j.is_array()) throw ConfigError("config key '" + key + "' must be a list of integers");
  std::vector<std::size_t> out;
  for (const json& v : j) out.push_back(get_count(v, key));
  return out;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

const char* criterion_name(EnergyCriterion c) {
  return c == EnergyCriterion::kRetainedFraction ? "retained_fraction" : "tail_to_retained";
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");

  RunConfig cfg;
  cfg.stream.input_channels = 3;
  cfg.stream.input_height = 8;
  cfg.stream.input_width = 8;
  std::vector<std::size_t> channels{16, 16, 32}, kernels{3, 3, 2}, strides{2, 2, 1}, padding{1, 1, 0};
  std::vector<float> dropout;
  bool stream_seed_set = false;

  for (const auto& [key, v] : j.items()) {
    TaskStreamSpec& s = cfg.stream;
    TrainConfig& t = cfg.train;
    if (key == "name") cfg.name = get_as<std::string>(v, key);
    else if (key == "stream_kind") {
      const auto kind = get_as<std::string>(v, key);
      if (kind == "synthetic_blobs") s.kind = StreamKind::kSyntheticBlobs;
      else if (kind == "split_file") s.kind = StreamKind::kSplitFile;
      else throw ConfigError("stream_kind must be synthetic_blobs or split_file");
    } else if (key == "tasks") s.tasks = get_count(v, key);
    else if (key == "classes_per_task") s.classes_per_task = get_count(v, key);
    else if (key == "samples_per_class") s.samples_per_class = get_count(v, key);
    else if (key == "input_channels") s.input_channels = get_count(v, key);
    else if (key == "input_height") s.input_height = get_count(v, key);
    else if (key == "input_width") s.input_width = get_count(v, key);
    else if (key == "overlap") s.overlap = get_as<double>(v, key);
    else if (key == "overlap_step") s.overlap_step = get_as<double>(v, key);
    else if (key == "mean_rank") s.mean_rank = get_count(v, key);
    else if (key == "test_fraction") s.test_fraction = get_as<double>(v, key);
    else if (key == "data_file") s.path = get_as<std::string>(v, key);
    else if (key == "class_partition") s.class_partition = get_as<std::vector<std::vector<int>>>(v, key);
    else if (key == "stream_seed") {
      s.seed = get_as<std::uint64_t>(v, key);
      stream_seed_set = true;
    } else if (key == "conv_channels") channels = get_counts(v, key);
    else if (key == "conv_kernels") kernels = get_counts(v, key);
    else if (key == "conv_strides") strides = get_counts(v, key);
    else if (key == "conv_padding") padding = get_counts(v, key);
    else if (key == "dropout") {
      if (v.is_number()) dropout = {get_as<float>(v, key)};
      else dropout = get_as<std::vector<float>>(v, key);
    } else if (key == "epochs") t.epochs = get_count(v, key);
    else if (key == "batch_size") t.batch_size = get_count(v, key);
    else if (key == "base_lr") t.base_lr = get_as<double>(v, key);
    else if (key == "lr_drop_epochs") t.lr_drop_epochs = get_counts(v, key);
    else if (key == "lr_drop_factor") t.lr_drop_factor = get_as<double>(v, key);
    else if (key == "lambda_orth") t.weights.lambda_orth = get_as<double>(v, key);
    else if (key == "lambda_sparse") t.weights.lambda_sparse = get_as<double>(v, key);
    else if (key == "energy_e") t.prune.energy_e = get_as<double>(v, key);
    else if (key == "min_rank") t.prune.min_rank = get_count(v, key);
    else if (key == "energy_criterion") {
      const auto c = get_as<std::string>(v, key);
      if (c == "retained_fraction") t.prune.criterion = EnergyCriterion::kRetainedFraction;
      else if (c == "tail_to_retained") t.prune.criterion = EnergyCriterion::kTailToRetained;
      else throw ConfigError("energy_criterion must be retained_fraction or tail_to_retained");
    } else if (key == "mode") t.mode = parse_mode(get_as<std::string>(v, key));
    else if (key == "seed") t.seed = get_as<std::uint64_t>(v, key);
    else if (key == "adam_beta1") t.adam.beta1 = get_as<double>(v, key);
    else if (key == "adam_beta2") t.adam.beta2 = get_as<double>(v, key);
    else if (key == "adam_epsilon") t.adam.epsilon = get_as<double>(v, key);
    else if (key == "save_uncompressed") cfg.save_uncompressed = get_as<bool>(v, key);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  if (!stream_seed_set) cfg.stream.seed = cfg.train.seed;

  const std::size_t layers = channels.size();
  if (layers == 0) throw ConfigError("conv_channels must list at least one layer");
  if (kernels.size() != layers || strides.size() != layers || padding.size() != layers)
    throw ConfigError("conv_channels, conv_kernels, conv_strides and conv_padding must have equal length");
  if (dropout.empty()) dropout.assign(layers, 0.0f);
  if (dropout.size() == 1) dropout.assign(layers, dropout.front());
  if (dropout.size() != layers) throw ConfigError("dropout must be a number or one value per layer");

  NetworkSpec& n = cfg.network;
  n.input_channels = cfg.stream.input_channels;
  n.input_height = cfg.stream.input_height;
  n.input_width = cfg.stream.input_width;
  n.classes = cfg.stream.kind == StreamKind::kSplitFile && !cfg.stream.class_partition.empty()
                  ? cfg.stream.class_partition.front().size()
                  : cfg.stream.classes_per_task;
  std::size_t in_channels = n.input_channels;
  for (std::size_t l = 0; l < layers; ++l) {
    n.layers.push_back(LayerSpec{{channels[l], in_channels, kernels[l], kernels[l]}, strides[l], padding[l], dropout[l]});
    in_channels = channels[l];
  }
  if (cfg.name.empty()) cfg.name = mode_name(cfg.train.mode);

  cfg.stream.validate();
  n.validate();
  cfg.train.validate();
  if (cfg.stream.kind == StreamKind::kSplitFile)
    for (const auto& group : cfg.stream.class_partition)
      if (group.size() != n.classes) throw ConfigError("every task in class_partition needs the same class count");
  return cfg;
}

RunConfig load_run_config(const std::string& path) { return parse_run_config(read_text(path)); }

std::string run_config_to_json(const RunConfig& cfg) {
  const TaskStreamSpec& s = cfg.stream;
  const TrainConfig& t = cfg.train;
  json j;
  j["name"] = cfg.name;
  j["stream_kind"] = s.kind == StreamKind::kSyntheticBlobs ? "synthetic_blobs" : "split_file";
  j["tasks"] = s.tasks;
  j["classes_per_task"] = s.classes_per_task;
  j["samples_per_class"] = s.samples_per_class;
  j["input_channels"] = s.input_channels;
  j["input_height"] = s.input_height;
  j["input_width"] = s.input_width;
  j["overlap"] = s.overlap;
  j["overlap_step"] = s.overlap_step;
  j["mean_rank"] = s.mean_rank;
  j["test_fraction"] = s.test_fraction;
  if (s.kind == StreamKind::kSplitFile) {
    j["data_file"] = s.path;
    j["class_partition"] = s.class_partition;
  }
  j["stream_seed"] = s.seed;
  std::vector<std::size_t> channels, kernels, strides, padding;
  std::vector<float> dropout;
  for (const LayerSpec& l : cfg.network.layers) {
    channels.push_back(l.shape.c);
    kernels.push_back(l.shape.h);
    strides.push_back(l.stride);
    padding.push_back(l.padding);
    dropout.push_back(l.dropout);
  }
  j["conv_channels"] = channels;
  j["conv_kernels"] = kernels;
  j["conv_strides"] = strides;
  j["conv_padding"] = padding;
  j["dropout"] = dropout;
  j["epochs"] = t.epochs;
  j["batch_size"] = t.batch_size;
  j["base_lr"] = t.base_lr;
  j["lr_drop_epochs"] = t.lr_drop_epochs;
  j["lr_drop_factor"] = t.lr_drop_factor;
  j["lambda_orth"] = t.weights.lambda_orth;
  j["lambda_sparse"] = t.weights.lambda_sparse;
  j["energy_e"] = t.prune.energy_e;
  j["min_rank"] = t.prune.min_rank;
  j["energy_criterion"] = criterion_name(t.prune.criterion);
  j["mode"] = mode_name(t.mode);
  j["seed"] = t.seed;
  j["adam_beta1"] = t.adam.beta1;
  j["adam_beta2"] = t.adam.beta2;
  j["adam_epsilon"] = t.adam.epsilon;
  j["save_uncompressed"] = cfg.save_uncompressed;
  return j.dump(2);
}

std::string metrics_to_json(const MetricsReport& report, const RunConfig& cfg) {
  json j;
  json matrix = json::array();
  for (const auto& row : report.acc_matrix) {
    json r = json::array();
    for (double a : row) r.push_back(std::isnan(a) ? json(nullptr) : json(a));
    matrix.push_back(r);
  }
  j["acc_matrix"] = matrix;
  j["acc"] = report.acc;
  j["bwt"] = report.bwt;
  j["size_bytes"] = report.size_bytes;
  j["size_mb"] = report.size_bytes.empty() ? 0.0 : size_mb(report.size_bytes.back());
  j["ranks"] = report.ranks;
  j["wall_seconds"] = report.wall_seconds;
  j["config"] = json::parse(run_config_to_json(cfg));
  return j.dump(2);
}

std::string ranks_csv(const MetricsReport& report) {
  std::ostringstream out;
  out << "task";
  for (std::size_t l = 0; l < report.ranks.size(); ++l) out << ",layer" << l + 1;
  out << '\n';
  const std::size_t tasks = report.ranks.empty() ? 0 : report.ranks.front().size();
  for (std::size_t t = 0; t < tasks; ++t) {
    out << t + 1;
    for (const auto& layer : report.ranks) out << ',' << layer[t];
    out << '\n';
  }
  return out.str();
}

std::vector<RunSummary> aggregate_runs(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError(dir + " is not a directory");
  std::vector<fs::path> files;
  if (fs::exists(fs::path(dir) / "metrics.json")) files.push_back(fs::path(dir) / "metrics.json");
  std::set<fs::path> subdirs;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory()) subdirs.insert(entry.path());
  for (const auto& sub : subdirs)
    if (fs::exists(sub / "metrics.json")) files.push_back(sub / "metrics.json");
  if (files.empty()) throw IoError("no metrics.json found under " + dir);

  struct Samples {
    std::vector<double> acc, bwt, size;
  };
  std::map<std::string, Samples> groups;
  std::vector<std::string> order;
  for (const auto& f : files) {
    json j;
    try {
      j = json::parse(read_text(f.string()));
      const std::string name = j.at("config").at("name").get<std::string>();
      if (!groups.count(name)) order.push_back(name);
      Samples& s = groups[name];
      s.acc.push_back(100.0 * j.at("acc").get<double>());
      s.bwt.push_back(100.0 * j.at("bwt").get<double>());
      s.size.push_back(size_mb(j.at("size_bytes").back().get<std::size_t>()));
    } catch (const json::exception& e) {
      throw DataError(f.string() + ": malformed metrics file: " + e.what());
    }
  }
  std::vector<RunSummary> out;
  for (const auto& name : order) {
    const Samples& s = groups[name];
    RunSummary r;
    r.name = name;
    r.runs = s.acc.size();
    auto mean = [](const std::vector<double>& v) {
      double m = 0.0;
      for (double x : v) m += x;
      return m / static_cast<double>(v.size());
    };
    r.acc_mean = mean(s.acc);
    r.bwt_mean = mean(s.bwt);
    r.size_mean = mean(s.size);
    r.acc_std = sample_std(s.acc, r.acc_mean);
    r.bwt_std = sample_std(s.bwt, r.bwt_mean);
    r.size_std = sample_std(s.size, r.size_mean);
    out.push_back(r);
  }
  return out;
}

std::string format_summary_table(const std::vector<RunSummary>& rows) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-20s %5s  %-14s %-14s %-14s\n", "method", "runs", "ACC%", "BWT%", "Size(MB)");
  out += line;
  auto cell = [](double m, double s) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f(%.2f)", m, s);
    return std::string(buf);
  };
  for (const RunSummary& r : rows) {
    std::snprintf(line, sizeof line, "%-20s %5zu  %-14s %-14s %-14s\n", r.name.c_str(), r.runs,
                  cell(r.acc_mean, r.acc_std).c_str(), cell(r.bwt_mean, r.bwt_std).c_str(),
                  cell(r.size_mean, r.size_std).c_str());
    out += line;
  }
  return out;
}

}  // namespace cacl
