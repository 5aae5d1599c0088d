// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails. Pass criterion numbers as arguments
// to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cacl/compression.hpp"
#include "cacl/harness.hpp"
#include "cacl/regularizers.hpp"
#include "cacl/serialize.hpp"
#include "cacl/trainer.hpp"

using namespace cacl;
using namespace cacl::ad;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

Matrix gaussian(std::size_t rows, std::size_t cols, std::mt19937_64& gen, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (float& x : m.storage()) x = static_cast<float>(n(gen));
  return m;
}

Matrix uniform(std::size_t rows, std::size_t cols, std::mt19937_64& gen, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> u(lo, hi);
  Matrix m(rows, cols);
  for (float& x : m.storage()) x = u(gen);
  return m;
}

Matrix away_from_zero(std::size_t rows, std::size_t cols, std::mt19937_64& gen) {
  std::uniform_real_distribution<float> mag(0.2f, 1.0f);
  std::bernoulli_distribution neg(0.5);
  Matrix m(rows, cols);
  for (float& x : m.storage()) x = (neg(gen) ? -1.0f : 1.0f) * mag(gen);
  return m;
}

MatrixD reconstruct_d(const Matrix& u, std::span<const float> sigma, const Matrix& v, std::size_t k) {
  MatrixD out(u.rows(), v.rows());
  for (std::size_t i = 0; i < u.rows(); ++i)
    for (std::size_t j = 0; j < v.rows(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += static_cast<double>(u(i, p)) * sigma[p] * v(j, p);
      out(i, j) = s;
    }
  return out;
}

// Reference 5-task configuration shipped in configs/, with the seed overridden.
RunConfig stream_config(const std::string& mode, std::uint64_t seed) {
  RunConfig c = load_run_config(std::string(CACL_CONFIG_DIR) + "/stream5_" + mode + ".json");
  c.train.seed = seed;
  c.stream.seed = seed;
  return c;
}

struct StreamRun {
  RunResult result;
  std::vector<TaskDataset> data;
};

std::map<std::pair<std::string, std::uint64_t>, StreamRun>& stream_cache() {
  static std::map<std::pair<std::string, std::uint64_t>, StreamRun> cache;
  return cache;
}

const StreamRun& stream_run(const std::string& mode, std::uint64_t seed) {
  auto& cache = stream_cache();
  const auto key = std::make_pair(mode, seed);
  auto it = cache.find(key);
  if (it == cache.end()) {
    const RunConfig c = stream_config(mode, seed);
    StreamRun run;
    run.data = generate_stream(c.stream);
    run.result = run_continual(run.data, c.network, c.train);
    it = cache.emplace(key, std::move(run)).first;
  }
  return it->second;
}

// ---- 1 ----
Outcome zero_forgetting() {
  const StreamRun& run = stream_run("full", 1);
  const RunResult& r = run.result;
  std::size_t identical = 0;
  for (std::size_t i = 0; i < r.logits_at_completion.size(); ++i) {
    // Recompute from the final space independently of what the trainer recorded.
    const Matrix now = task_logits(r.shared, i + 1, run.data[i].test_x);
    if (bitwise_equal(r.logits_at_completion[i], r.logits_final[i]) && bitwise_equal(now, r.logits_final[i]))
      ++identical;
  }
  const bool pass = identical == 5 && r.report.bwt == 0.0;
  return {pass, fmt("%.0f/5 tasks bitwise identical, BWT = %g", static_cast<double>(identical), r.report.bwt)};
}

// ---- 2 ----
Outcome svd_correctness() {
  std::mt19937_64 gen(2024);
  std::uniform_int_distribution<std::size_t> rows(1, 64), cols(1, 600);
  std::uniform_real_distribution<double> log_scale(-3.0, 3.0);
  double worst_rec = 0.0, worst_gram = 0.0;
  std::size_t unsorted = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t m = rows(gen), n = cols(gen);
    if (trial % 2) std::swap(m, n), m = std::min<std::size_t>(m, 600), n = std::min<std::size_t>(n, 64);
    const Matrix a = gaussian(m, n, gen, std::pow(10.0, log_scale(gen)));
    const SvdFactors f = svd(a);
    const MatrixD back = reconstruct_d(f.u, f.sigma, f.v, f.rank());
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      num += std::pow(back[k] - a[k], 2);
      den += static_cast<double>(a[k]) * a[k];
    }
    worst_rec = std::max(worst_rec, std::sqrt(num / den));
    worst_gram = std::max({worst_gram, gram_deviation_max(f.u), gram_deviation_max(f.v)});
    for (std::size_t k = 1; k < f.rank(); ++k)
      if (f.sigma[k] > f.sigma[k - 1]) ++unsorted;
  }
  const bool pass = worst_rec <= 1e-4 && worst_gram <= 1e-5 && unsorted == 0;
  return {pass, fmt("worst relative reconstruction %.2e, worst Gram deviation %.2e, unsorted %g", worst_rec,
                    worst_gram, static_cast<double>(unsorted))};
}

// ---- 3 ----
Outcome rank_k_identity() {
  std::mt19937_64 gen(77);
  std::uniform_int_distribution<std::size_t> dim(1, 48);
  double worst = 0.0;
  std::size_t checks = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = dim(gen), n = dim(gen), r = std::min(m, n);
    SvdFactors f;
    f.u = random_orthonormal(m, r, gen());
    f.v = random_orthonormal(n, r, gen());
    std::uniform_real_distribution<float> s(0.05f, 5.0f);
    for (std::size_t k = 0; k < r; ++k) f.sigma.push_back(s(gen));
    std::sort(f.sigma.rbegin(), f.sigma.rend());
    const MatrixD a = reconstruct_d(f.u, f.sigma, f.v, r);
    for (std::size_t k = 1; k <= r; ++k) {
      const Matrix ak = rank_k_approx(f, k);
      double err = 0.0, tail = 0.0, total = 0.0;
      for (std::size_t e = 0; e < a.size(); ++e) {
        err += std::pow(a[e] - ak[e], 2);
        total += a[e] * a[e];
      }
      for (std::size_t i = k; i < r; ++i) tail += static_cast<double>(f.sigma[i]) * f.sigma[i];
      // k = r has no tail; the float rounding of A_k is the only residual.
      const double rel = tail > 0.0 ? std::abs(err - tail) / tail : err / total;
      worst = std::max(worst, rel);
      ++checks;
    }
  }
  return {worst <= 1e-6, fmt("%g (A, k) pairs, worst relative deviation %.2e", static_cast<double>(checks), worst)};
}

// ---- 4 ----
NodeId weighted_sum(Graph& g, NodeId x, std::mt19937_64& gen) {
  const Matrix& v = g.value(x);
  const NodeId w = g.constant(uniform(v.cols(), 1, gen));
  const NodeId ones = g.constant(Matrix(1, v.rows(), 1.0f));
  return g.mat_mul(ones, g.mat_mul(x, w));
}

Outcome gradient_oracle() {
  using Builder = std::function<NodeId(Graph&, std::mt19937_64&, int)>;
  const std::vector<std::pair<std::string, Builder>> cases = {
      {"mat_mul",
       [](Graph& g, std::mt19937_64& r, int) {
         return weighted_sum(g, g.mat_mul(g.parameter(uniform(3, 4, r)), g.parameter(uniform(4, 2, r))), r);
       }},
      {"add",
       [](Graph& g, std::mt19937_64& r, int) {
         return weighted_sum(g, g.add(g.parameter(uniform(3, 4, r)), g.parameter(uniform(3, 4, r))), r);
       }},
      {"scale", [](Graph& g, std::mt19937_64& r,
                   int) { return weighted_sum(g, g.scale(g.parameter(uniform(3, 4, r)), -2.3f), r); }},
      {"transpose", [](Graph& g, std::mt19937_64& r,
                       int) { return weighted_sum(g, g.transpose(g.parameter(uniform(3, 4, r))), r); }},
      {"diag_embed",
       [](Graph& g, std::mt19937_64& r, int) {
         return weighted_sum(g, g.mat_mul(g.constant(uniform(5, 4, r)), g.diag_embed(g.parameter(uniform(4, 1, r)))),
                             r);
       }},
      {"relu", [](Graph& g, std::mt19937_64& r,
                  int) { return weighted_sum(g, g.relu(g.parameter(away_from_zero(4, 5, r))), r); }},
      {"conv2d",
       [](Graph& g, std::mt19937_64& r, int i) {
         const ConvGeometry geo{2, 5, 5, 3, 3, static_cast<std::size_t>(1 + i % 2), static_cast<std::size_t>(i % 2)};
         return weighted_sum(
             g, g.conv2d(g.parameter(uniform(3, geo.patch_size(), r)), g.parameter(uniform(2, geo.in_size(), r)), geo),
             r);
       }},
      {"linear",
       [](Graph& g, std::mt19937_64& r, int) {
         return weighted_sum(
             g, g.linear(g.parameter(uniform(4, 6, r)), g.parameter(uniform(6, 3, r)), g.parameter(uniform(1, 3, r))),
             r);
       }},
      {"softmax_cross_entropy",
       [](Graph& g, std::mt19937_64& r, int i) {
         return g.softmax_cross_entropy(g.parameter(uniform(4, 3, r, -2, 2)), {i % 3, (i + 1) % 3, 2, 0});
       }},
      {"frobenius_norm",
       [](Graph& g, std::mt19937_64& r, int) { return g.frobenius_norm(g.parameter(uniform(3, 4, r))); }},
      {"l1_norm", [](Graph& g, std::mt19937_64& r, int) { return g.l1_norm(g.parameter(away_from_zero(6, 1, r))); }},
      {"l2_norm", [](Graph& g, std::mt19937_64& r, int) { return g.l2_norm(g.parameter(uniform(6, 1, r))); }},
      {"dropout",
       [](Graph& g, std::mt19937_64& r, int i) {
         return weighted_sum(g, g.dropout(g.parameter(uniform(4, 5, r)), 0.3f, 100 + i, true), r);
       }},
      {"divide",
       [](Graph& g, std::mt19937_64& r, int) {
         const NodeId a = g.parameter(away_from_zero(6, 1, r));
         const NodeId b = g.add(g.l2_norm(g.parameter(uniform(3, 1, r))), g.constant(Matrix(1, 1, 0.5f)));
         return g.divide(g.l1_norm(a), b);
       }},
      {"composed network objective",
       [](Graph& g, std::mt19937_64& r, int i) {
         NetworkSpec spec;
         spec.input_channels = 2;
         spec.input_height = 5;
         spec.input_width = 5;
         spec.layers = {LayerSpec{{3, 2, 3, 3}, 2, 1, 0.0f}, LayerSpec{{4, 3, 3, 3}, 1, 0, 0.0f}};
         spec.classes = 2;
         std::vector<Matrix> shared;
         std::vector<FactorNodes> nodes;
         for (const LayerSpec& l : spec.layers) {
           const std::size_t rank = 2;
           shared.push_back(uniform(l.shape.rows(), l.shape.cols(), r, -0.5f, 0.5f));
           nodes.push_back(FactorNodes{g.parameter(uniform(l.shape.rows(), rank, r)),
                                       g.parameter(away_from_zero(rank, 1, r)),
                                       g.parameter(uniform(l.shape.cols(), rank, r))});
         }
         const std::vector<NodeId> weights = compose_weights_graph(g, shared, nodes);
         const HeadNodes head{g.parameter(uniform(spec.head_input_dim(), 2, r)), g.parameter(uniform(1, 2, r))};
         const NodeId x = g.constant(uniform(3, spec.input_size(), r));
         const NodeId logits = forward_graph(g, spec, weights, head, x, true, 7 + i);
         const NodeId task = g.softmax_cross_entropy(logits, {0, 1, i % 2});
         return total_loss_graph(g, task, l_orth_graph(g, nodes), l_sparse_graph(g, nodes), LossWeights{1.0, 0.4});
       }},
  };
  std::string failed;
  double worst = 0.0;
  std::size_t instances = 0;
  for (const auto& [name, build] : cases) {
    for (int i = 0; i < 20; ++i) {
      std::mt19937_64 gen(1000 * instances + i);
      Graph g;
      const NodeId loss = build(g, gen, i);
      const GradCheckReport rep = grad_check(g, loss, 1e-3, 1e-3);
      std::size_t checked = 0;
      for (const auto& e : rep.entries) checked += e.checked;
      worst = std::max(worst, rep.worst);
      if (!rep.passed || checked == 0) failed += " " + name + "#" + std::to_string(i);
    }
    ++instances;
  }
  const bool pass = failed.empty();
  return {pass, fmt("%g cases x 20 instances, worst deviation %.2e", static_cast<double>(cases.size()), worst) +
                    (pass ? "" : "; failing:" + failed)};
}

// ---- 5 ----
std::size_t brute_force_topk(const std::vector<float>& sigma, double e, std::size_t min_rank) {
  const std::size_t r = sigma.size();
  double total = 0.0;
  for (float s : sigma) total += static_cast<double>(s) * s;
  std::size_t best = r;
  if (total == 0.0) best = 0;
  for (std::size_t k = r; k-- > 0;) {
    double kept = 0.0;
    for (std::size_t i = 0; i < k; ++i) kept += static_cast<double>(sigma[i]) * sigma[i];
    if (total > 0.0 && kept / total >= 1.0 - e) best = k;
  }
  return std::min(r, std::max(best, min_rank));
}

Outcome pruning_traces() {
  std::size_t mismatches = 0, checks = 0;
  auto check_layer = [&](const std::vector<float>& sigma, double e, std::size_t expect) {
    PruneConfig cfg;
    cfg.energy_e = e;
    TaskFactors f;
    const std::size_t r = sigma.size();
    Matrix u(3, r), v(2, r);
    for (std::size_t k = 0; k < r; ++k) u(k % 3, k) = v(k % 2, k) = static_cast<float>(k + 1);
    f.layers.push_back(LayerFactors{u, sigma, v});
    const TaskFactors p = energy_prune(f, cfg);
    const LayerFactors& out = p.layers[0];
    bool ok = out.rank() == expect && std::equal(out.sigma.begin(), out.sigma.end(), sigma.begin());
    for (std::size_t k = 0; ok && k < out.rank(); ++k)
      for (std::size_t i = 0; i < 3; ++i) ok = ok && out.u(i, k) == u(i, k);
    ++checks;
    if (!ok) ++mismatches;
  };
  check_layer({3, 2, 1, 0.001f}, 1e-5, 3);
  check_layer({5, 0, 0}, 1e-5, 1);
  check_layer({2, 1}, 0.5, 1);
  const std::size_t traces_bad = mismatches;

  std::mt19937_64 gen(5);
  std::uniform_int_distribution<std::size_t> len(1, 40);
  std::uniform_int_distribution<int> style(0, 4);
  std::uniform_real_distribution<float> val(0.0f, 3.0f);
  const double es[] = {0.0, 1e-5, 0.5};
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<float> sigma(len(gen));
    const int s = style(gen);
    for (float& x : sigma) {
      x = val(gen);
      if (s == 1) x = std::round(x);                       // ties and zeros
      if (s == 2 && val(gen) < 1.5f) x = 0.0f;             // many zeros
      if (s == 3) x = std::pow(10.0f, -4.0f * val(gen));   // wide dynamic range
    }
    if (s == 4) std::fill(sigma.begin(), sigma.end(), val(gen));  // all ties
    if (trial % 97 == 0) std::fill(sigma.begin(), sigma.end(), 0.0f);
    std::sort(sigma.rbegin(), sigma.rend());
    const double e = es[trial % 3];
    check_layer(sigma, e, brute_force_topk(sigma, e, 1));
  }
  const bool pass = mismatches == 0;
  return {pass, fmt("%g/%g layers match the brute-force oracle, worked traces wrong: %g",
                    static_cast<double>(checks - mismatches), static_cast<double>(checks),
                    static_cast<double>(traces_bad))};
}

// ---- 6, 7: single-task toy protocol ----
struct ToyResult {
  std::vector<double> gram;  // per layer, max of U and V deviation / r^2
  std::size_t total_rank = 0;
  double accuracy = 0.0;
};

ToyResult toy_run(std::uint64_t seed, double lambda_orth, double lambda_sparse) {
  TaskStreamSpec ss;
  ss.tasks = 1;
  ss.overlap = 2.0;
  ss.samples_per_class = 200;
  ss.seed = seed;
  NetworkSpec spec;
  spec.input_channels = 3;
  spec.input_height = 8;
  spec.input_width = 8;
  spec.classes = 2;
  spec.layers = {LayerSpec{{8, 3, 3, 3}, 2, 1, 0.0f}, LayerSpec{{16, 8, 4, 4}, 1, 0, 0.0f}};
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.batch_size = 32;
  cfg.base_lr = 1e-2;
  cfg.lr_drop_epochs = {60, 80};
  cfg.weights = {lambda_orth, lambda_sparse};
  cfg.seed = seed;
  const auto stream = generate_stream(ss);
  const TrainedTask t = train_task(stream[0], SharedSpace(spec), expand(spec, 1, seed), cfg);
  ToyResult out;
  for (const LayerFactors& l : t.factors.layers) {
    const double r2 = static_cast<double>(l.rank()) * l.rank();
    out.gram.push_back(std::max(gram_deviation_fro(l.u), gram_deviation_fro(l.v)) / r2);
  }
  const TaskFactors c = compress(t.factors, cfg.prune);
  for (const LayerFactors& l : c.layers) out.total_rank += l.rank();
  const SharedSpace s = SharedSpace(spec).append(c, t.head);
  out.accuracy = accuracy(task_logits(s, 1, stream[0].test_x), stream[0].test_y);
  return out;
}

Outcome orthogonality_efficacy() {
  bool pass = true;
  double worst_on = 0.0, min_ratio = 1e300;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const ToyResult on = toy_run(seed, 1.0, 0.0);
    const ToyResult off = toy_run(seed, 0.0, 0.0);
    for (std::size_t l = 0; l < on.gram.size(); ++l) {
      worst_on = std::max(worst_on, on.gram[l]);
      min_ratio = std::min(min_ratio, off.gram[l] / on.gram[l]);
      if (!(on.gram[l] < 1e-2) || !(off.gram[l] > 5.0 * on.gram[l])) pass = false;
    }
  }
  return {pass, fmt("worst deviation/r^2 with lambda_orth=1: %.2e, smallest off/on ratio %.3g", worst_on, min_ratio)};
}

Outcome sparsity_compression() {
  double rank_on = 0, rank_off = 0, acc_on = 0, acc_off = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const ToyResult on = toy_run(seed, 1.0, 0.4);
    const ToyResult off = toy_run(seed, 1.0, 0.0);
    rank_on += on.total_rank / 3.0;
    rank_off += off.total_rank / 3.0;
    acc_on += on.accuracy / 3.0;
    acc_off += off.accuracy / 3.0;
  }
  const bool pass = rank_on < rank_off && acc_off - acc_on <= 0.02;
  return {pass, fmt("mean total rank %.2f vs %.2f, mean accuracy %.2f%% vs %.2f%%", rank_on, rank_off, 100 * acc_on,
                    100 * acc_off)};
}

// ---- 8, 10 ----
double mean_acc(const std::string& mode) {
  double s = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) s += stream_run(mode, seed).result.report.acc / 3.0;
  return s;
}

double mean_size(const std::string& mode) {
  double s = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed)
    s += static_cast<double>(stream_run(mode, seed).result.report.size_bytes.back()) / 3.0;
  return s;
}

Outcome compression_vs_dense() {
  const double full_size = mean_size("full"), ub_size = mean_size("baseline_ub");
  const double full_acc = mean_acc("full"), ub_acc = mean_acc("baseline_ub");
  const bool pass = full_size <= 0.6 * ub_size && ub_acc - full_acc <= 0.05;
  return {pass, fmt("size %.0f vs %.0f bytes (ratio %.3f), ACC %.2f%%", full_size, ub_size, full_size / ub_size,
                    100 * full_acc) +
                    fmt(" vs %.2f%% (3 seeds)", 100 * ub_acc)};
}

Outcome ablation_ordering() {
  const double ub = mean_acc("baseline_ub"), st = mean_acc("st"), fixed = mean_acc("fixed");
  const double st_size = mean_size("st"), full_size = mean_size("full");
  const bool pass = ub >= st && st >= fixed - 0.02 && st_size >= full_size;
  return {pass, fmt("ACC ub %.2f%% st %.2f%% fixed %.2f%%, ", 100 * ub, 100 * st, 100 * fixed) +
                    fmt("size st %.0f full %.0f bytes", st_size, full_size)};
}

// ---- 9 ----
Outcome dynamic_allocation() {
  int votes = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RunConfig c = stream_config("full", seed);
    c.stream.tasks = 4;
    c.stream.overlap = 1.0;
    c.stream.overlap_step = 2.0;
    const RunResult r = run_continual(generate_stream(c.stream), c.network, c.train);
    std::vector<std::size_t> appended(4, 0);
    for (const auto& layer : r.report.ranks)
      for (std::size_t t = 0; t < 4; ++t) appended[t] += layer[t];
    const bool varies = std::set<std::size_t>(appended.begin(), appended.end()).size() > 1;
    const bool hardest_most = std::all_of(appended.begin(), appended.end() - 1,
                                          [&](std::size_t a) { return a < appended.back(); });
    if (varies && hardest_most) ++votes;
    per_seed += " [";
    for (std::size_t t = 0; t < 4; ++t) per_seed += (t ? " " : "") + std::to_string(appended[t]);
    per_seed += "]";
  }
  return {votes >= 3, fmt("%g/5 seeds give the hardest task the strict maximum; appended ranks", votes) + per_seed};
}

// ---- 11 ----
Outcome serialization() {
  std::mt19937_64 gen(11);
  std::size_t lossless = 0, truncations = 0, bad_truncations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    NetworkSpec spec;
    std::uniform_int_distribution<std::size_t> small(1, 4);
    spec.input_channels = small(gen);
    spec.input_height = spec.input_width = 4 + small(gen);
    spec.classes = 1 + small(gen);
    spec.layers = {LayerSpec{{small(gen) + 1, spec.input_channels, 3, 3}, 2, 1, 0.1f}};
    spec.layers.push_back(LayerSpec{{small(gen) + 2, spec.layers[0].shape.c, 2, 2}, 1, 0, 0.0f});
    SharedSpace s(spec);
    const std::size_t tasks = small(gen);
    for (std::size_t t = 1; t <= tasks; ++t) {
      TaskFactors f;
      for (const LayerSpec& l : spec.layers) {
        const std::size_t r = std::min<std::size_t>(small(gen) - 1, l.shape.rows());
        LayerFactors lf{gaussian(l.shape.rows(), r, gen), {}, gaussian(l.shape.cols(), r, gen)};
        for (std::size_t k = 0; k < r; ++k) lf.sigma.push_back(static_cast<float>(r - k) * 0.7f);
        f.layers.push_back(std::move(lf));
      }
      s = s.append(f, make_head(spec, gen()));
    }
    const auto bytes = encode_space(s);
    const std::string path = "acceptance_roundtrip.cacl";
    save_space(s, path);
    const SharedSpace back = load_space(path);
    if (back == s && encode_space(back) == bytes) ++lossless;
    for (std::size_t n = 0; n < bytes.size(); n += 64) {
      ++truncations;
      try {
        decode_space(std::span(bytes.data(), n));
        ++bad_truncations;
      } catch (const FormatError&) {
      }
    }
    std::remove(path.c_str());
  }
  const bool pass = lossless == 100 && bad_truncations == 0;
  return {pass, fmt("%g/100 lossless round trips, %g/%g truncations rejected", static_cast<double>(lossless),
                    static_cast<double>(truncations - bad_truncations), static_cast<double>(truncations))};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"zero forgetting", zero_forgetting},
      {"SVD correctness", svd_correctness},
      {"rank-k error identity", rank_k_identity},
      {"gradient oracle", gradient_oracle},
      {"pruning trace equivalence", pruning_traces},
      {"orthogonality efficacy", orthogonality_efficacy},
      {"sparsity to compression", sparsity_compression},
      {"compression vs dense baseline", compression_vs_dense},
      {"dynamic allocation", dynamic_allocation},
      {"ablation ordering", ablation_ordering},
      {"serialization", serialization},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s criterion %2d (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
