// Acceptance run: one PASS/FAIL line per criterion A1..A10.
//
//   scnn_acceptance [--only A1,A5] [--out-dir DIR]
//
// Training-based criteria write their loss logs and MAE tables to DIR.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "CLI11.hpp"
#include "scnn/baselines.hpp"
#include "scnn/data.hpp"
#include "scnn/experiment.hpp"
#include "scnn/fusion.hpp"
#include "scnn/gradcheck.hpp"
#include "scnn/layers.hpp"
#include "scnn/metrics.hpp"
#include "scnn/network.hpp"
#include "scnn/optim.hpp"

namespace fs = std::filesystem;
using namespace scnn;

namespace {

using Clock = std::chrono::steady_clock;
using Rng = std::mt19937_64;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void progress(const std::string& msg) { std::cerr << "  .. " << msg << std::endl; }

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  os << text;
}

Tensor4 random_tensor(const Shape4& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor4 t(s);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = d(rng);
  return t;
}

// ---------------------------------------------------------------------------
// Training runs shared by A3, A4 and A10. A run's first n log entries do not
// depend on its length, so a longer cached run serves shorter requests.

constexpr int kBatch = 8;
constexpr std::uint64_t kDataStream = 0xDA7A;

class Runs {
 public:
  explicit Runs(fs::path dir) : dir_(std::move(dir)) {}

  const TrainResult& get(Variant v, double density, std::uint64_t seed, int iterations) {
    const auto key = std::make_tuple(v, density, seed);
    auto it = cache_.find(key);
    if (it != cache_.end() && static_cast<int>(it->second.log.size()) >= iterations) return it->second;
    NetworkSpec spec;
    spec.variant = v;
    SceneConfig scene;  // 64x64
    const SyntheticSource source(scene, density, kBatch, derive_seed(seed, kDataStream));
    TrainConfig cfg;
    cfg.iterations = iterations;
    cfg.batch_size = kBatch;
    cfg.seed = seed;
    const auto t0 = Clock::now();
    TrainResult r = train(spec, source, cfg);
    progress("trained " + std::string(to_string(v)) + " at " + fmt("%g", density * 100) + "% seed " +
             std::to_string(seed) + " for " + std::to_string(iterations) + " iterations in " +
             fmt("%.0f", seconds_since(t0)) + " s, final loss " + fmt("%.4g", r.log.back().loss));
    std::ostringstream log;
    write_log_csv(r.log, log);
    write_file(dir_ / ("train_" + std::string(to_string(v)) + "_d" + fmt("%g", density * 100) + "_s" +
                       std::to_string(seed) + ".csv"),
               log.str());
    return cache_[key] = std::move(r);
  }

 private:
  fs::path dir_;
  std::map<std::tuple<Variant, double, std::uint64_t>, TrainResult> cache_;
};

const std::vector<DepthMap>& held_out_scenes() {
  static const std::vector<DepthMap> scenes = make_scenes(SceneConfig{}, 64, 0x4E1D07);
  return scenes;
}

constexpr std::uint64_t kEvalSeed = 0xE7A1;

// ---------------------------------------------------------------------------

Outcome a1_gradients() {
  const auto t0 = Clock::now();
  const GradcheckConfig cfg;  // default kernels, 12x12, 4 channels, 20 trials, step 1e-6
  const GradcheckReport r = run_gradcheck(cfg);
  const double secs = seconds_since(t0);
  const double worst = r.max_rel_error();
  Eigen::Index checked = 0;
  for (const auto& e : r.entries) checked += e.checked;
  const bool pass = r.passed(1e-5) && secs < 60.0 && cfg.trials >= 20;
  return {pass, "max rel error " + fmt("%.2e", worst) + " over " + std::to_string(checked) + " components, " +
                    std::to_string(cfg.trials) + " trials, " + fmt("%.1f", secs) + " s"};
}

Outcome a2_dense_equivalence() {
  Rng rng(2);
  double worst = 0.0;
  for (int k = 0; k <= 5; ++k) {
    for (int trial = 0; trial < 4; ++trial) {
      const Tensor4 x = random_tensor({2, 3, 16, 16}, rng);
      ConvParams p = ConvParams::zeros(4, 3, k);
      p.weights = random_tensor(p.weights.shape(), rng);
      p.bias = Eigen::VectorXd::Random(4);
      ConvParams scaled = p;
      const double K = 2.0 * k + 1.0;
      scaled.weights *= 1.0 / (K * K + kDefaultEpsilon);
      const Tensor4 sparse = crop_spatial(sparse_conv2d_forward(x, Mask::ones({2, 1, 16, 16}), p).values, k);
      const Tensor4 dense = crop_spatial(conv2d_forward(x, scaled), k);
      // Outputs cross zero, so differences are relative to the map's own scale.
      const double scale = dense.array().abs().maxCoeff();
      worst = std::max(worst, (sparse.array() - dense.array()).abs().maxCoeff() / scale);
    }
  }
  return {worst < 1e-12, "max interior rel diff " + fmt("%.2e", worst) + " for kernel sizes 1..11"};
}

Outcome a3_sparsity_invariance(Runs& runs, const fs::path& out) {
  const std::vector<double> densities{0.05, 0.10, 0.20, 0.50, 1.00};
  std::map<Variant, std::vector<double>> mae;
  std::string csv = "variant,5,10,20,50,100\n";
  for (Variant v : {Variant::SparseConvNet, Variant::ConvNet, Variant::ConvNetPlusMask}) {
    const ModelState& m = runs.get(v, 0.10, 1, 2000).model;
    csv += std::string(to_string(v));
    for (double d : densities) {
      mae[v].push_back(evaluate_model(m, held_out_scenes(), d, kEvalSeed).mae);
      csv += "," + fmt("%.9g", mae[v].back());
    }
    csv += "\n";
  }
  write_file(out / "a3_mae_matrix.csv", csv);
  const auto& s = mae[Variant::SparseConvNet];
  const auto& c = mae[Variant::ConvNet];
  const double s_max = *std::max_element(s.begin(), s.end());
  const bool a = s_max <= 2.0 * s[1];
  const bool b = c[3] >= 3.0 * c[1] || c[3] >= 3.0 * s[3];
  std::string detail = "SparseConvNet max/MAE@10% = " + fmt("%.3f", s_max / s[1]) + " (<= 2); ConvNet MAE@50%/@10% = " +
                       fmt("%.3f", c[3] / c[1]) + ", ConvNet/SparseConvNet @50% = " + fmt("%.3f", c[3] / s[3]) +
                       " (either >= 3)";
  std::cerr << csv;
  return {a && b, detail};
}

Outcome a4_diagonal(Runs& runs, const fs::path& out) {
  std::map<Variant, double> mae;
  std::string csv = "variant,mae_at_5\n";
  for (Variant v : {Variant::SparseConvNet, Variant::ConvNetPlusMask, Variant::ConvNet}) {
    mae[v] = evaluate_model(runs.get(v, 0.05, 1, 2000).model, held_out_scenes(), 0.05, kEvalSeed).mae;
    csv += std::string(to_string(v)) + "," + fmt("%.9g", mae[v]) + "\n";
  }
  write_file(out / "a4_mae_at_5.csv", csv);
  const double s = mae[Variant::SparseConvNet], cm = mae[Variant::ConvNetPlusMask], c = mae[Variant::ConvNet];
  return {s < cm && s < c, "MAE@5%: SparseConvNet " + fmt("%.4g", s) + ", ConvNet+mask " + fmt("%.4g", cm) +
                               ", ConvNet " + fmt("%.4g", c)};
}

Outcome a5_unobserved_invariance() {
  Rng rng(5);
  int sparse_identical = 0, dense_changed = 0;
  const int trials = 5;
  for (int t = 0; t < trials; ++t) {
    NetworkSpec spec;
    ModelState sparse = build(spec, 100 + t);
    spec.variant = Variant::ConvNet;
    ModelState dense = build(spec, 100 + t);
    for (auto* m : {&sparse, &dense})
      for (auto& p : m->layers) p.bias = Eigen::VectorXd::Random(p.bias.size()) * 0.1;
    SceneConfig scene;
    scene.seed = 500 + t;
    const DepthMap d0 = sparsify(generate_scene(scene), 0.05, 600 + t);
    scene.seed = 700 + t;
    const DepthMap d1 = sparsify(generate_scene(scene), 0.05, 800 + t);
    const std::vector<DepthMap> maps{d0, d1};
    const Tensor4 depth = stack_depths(maps);
    const Mask mask = stack_masks(maps);
    Tensor4 garbage = depth;
    std::uniform_real_distribution<double> wild(-1e4, 1e4);
    for (Eigen::Index i = 0; i < garbage.size(); ++i)
      if (mask.tensor().data()[i] == 0.0) garbage.data()[i] = wild(rng);
    const Tensor4 a = predict(sparse, depth, mask).values, b = predict(sparse, garbage, mask).values;
    sparse_identical += (a.array() == b.array()).all();
    const Tensor4 c = predict(dense, depth, mask).values, e = predict(dense, garbage, mask).values;
    dense_changed += !(c.array() == e.array()).all();
  }
  return {sparse_identical == trials && dense_changed == trials,
          "SparseConvNet bit-identical in " + std::to_string(sparse_identical) + "/" + std::to_string(trials) +
              ", ConvNet changed in " + std::to_string(dense_changed) + "/" + std::to_string(trials)};
}

Outcome a6_baseline_oracles() {
  Rng rng(6);
  double worst_nw = 0.0;
  int pool_mismatch = 0;
  std::uniform_real_distribution<double> dens(0.03, 0.4), depth(2.0, 80.0), bw(0.5, 4.0);
  for (int map = 0; map < 50; ++map) {
    const double p = dens(rng);
    DepthMap d(16, 16);
    std::bernoulli_distribution coin(p);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        if (coin(rng)) d.set(y, x, depth(rng));
    if (d.observed_count() == 0) d.set(8, 8, depth(rng));
    const double h = bw(rng), r = (map % 2 == 0) ? 3.0 * h : 1.0 + 8.0 * std::uniform_real_distribution<double>()(rng);
    const int pool_r = 1 + map % 4;

    const DepthMap nw = nadaraya_watson(d, NWConfig{h, r});
    const DepthMap pool = closest_depth_pool(d, PoolConfig{pool_r});
    for (int v = 0; v < 16; ++v)
      for (int u = 0; u < 16; ++u) {
        double num = 0.0, den = 0.0, best = 0.0;
        for (int y = 0; y < 16; ++y)
          for (int x = 0; x < 16; ++x) {
            if (!d.observed(y, x)) continue;
            const double dist2 = (y - v) * (y - v) + (x - u) * (x - u);
            if (std::sqrt(dist2) <= r) {
              const double k = std::exp(-dist2 / (2.0 * h * h));
              num += k * d(y, x);
              den += k;
            }
            if (std::abs(y - v) <= pool_r && std::abs(x - u) <= pool_r && (best == 0.0 || d(y, x) < best)) best = d(y, x);
          }
        const double want_nw = den > 0.0 ? num / den : 0.0;
        const double got = nw(v, u);
        if (got != want_nw) worst_nw = std::max(worst_nw, std::abs(got - want_nw) / std::max(std::abs(got), std::abs(want_nw)));
        const double want_pool = d.observed(v, u) ? d(v, u) : best;
        if (std::abs(pool(v, u) - want_pool) > 1e-12 * std::abs(want_pool)) ++pool_mismatch;
      }
  }
  return {worst_nw < 1e-12 && pool_mismatch == 0,
          "50 maps: NW max rel diff " + fmt("%.2e", worst_nw) + ", pooling mismatches " + std::to_string(pool_mismatch)};
}

Outcome a7_metrics() {
  int failures = 0;
  auto check = [&](bool ok) { failures += !ok; };
  auto near = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); };
  auto row = [](std::initializer_list<double> v) {
    DepthMap d(1, static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) d.set(0, i++, x);
    return d;
  };

  const DepthMap gt = row({1.0, 5.0, 20.0});
  const MetricsReport same = evaluate(gt, gt, Unit::DisparityPx);
  check(same.mae == 0.0 && same.rmse == 0.0 && same.delta1 == 1.0 && same.delta2 == 1.0 && same.delta3 == 1.0 &&
        same.kitti_outlier_rate == 0.0);

  const MetricsReport two = evaluate(row({2.0, 4.0}), row({1.0, 2.0}));
  check(near(two.mae, 1.5) && near(two.rmse, std::sqrt(2.5)) && two.delta1 == 0.0 && two.delta2 == 0.0 &&
        two.delta3 == 0.0);

  check(evaluate(row({54.0}), row({50.0}), Unit::DisparityPx).kitti_outlier_rate == 1.0);

  Rng rng(7);
  std::uniform_real_distribution<double> u(0.1, 100.0);
  for (int t = 0; t < 1000; ++t) {
    DepthMap p(1, 32), g(1, 32);
    for (int i = 0; i < 32; ++i) {
      p.set(0, i, u(rng));
      g.set(0, i, u(rng));
    }
    const MetricsReport r = evaluate(p, g, Unit::DisparityPx);
    check(r.delta1 <= r.delta2 && r.delta2 <= r.delta3 && r.rmse >= r.mae);
  }
  return {failures == 0, "hand values and 1000 random vectors, " + std::to_string(failures) + " failures"};
}

Outcome a8_fusion() {
  Eigen::Index outliers = 0, outliers_removed = 0, inliers = 0, inliers_kept = 0;
  int rate_drops = 0, denser = 0;
  const int scenes = 20;
  for (int s = 0; s < scenes; ++s) {
    FusionScenarioConfig cfg;
    cfg.seed = 1000 + s;
    const FusionScenario sc = make_fusion_scenario(cfg);
    const FusionResult r = fuse_pipeline(sc.scans, sc.reference, sc.truth, FusionConfig{cfg.n_scans, cfg.tau},
                                         kKittiFocalBaseline);
    for (Eigen::Index y = 0; y < sc.truth.height(); ++y)
      for (Eigen::Index x = 0; x < sc.truth.width(); ++x) {
        if (!r.accumulated.observed(y, x)) continue;
        const double rel = std::abs(r.accumulated(y, x) - sc.truth(y, x)) / sc.truth(y, x);
        if (rel >= 2.0 * cfg.tau) {
          ++outliers;
          outliers_removed += !r.cleaned.observed(y, x);
        } else if (rel < cfg.tau / 2.0) {
          ++inliers;
          inliers_kept += r.cleaned.observed(y, x);
        }
      }
    rate_drops += *r.cleaned_metrics.kitti_outlier_rate < *r.accumulated_metrics.kitti_outlier_rate;
    denser += *r.cleaned_metrics.density > *r.raw.density;
  }
  const double kept = static_cast<double>(inliers_kept) / static_cast<double>(inliers);
  const bool pass = outliers > 0 && outliers_removed == outliers && kept >= 0.99 && rate_drops == scenes &&
                    denser == scenes;
  return {pass, "outliers removed " + std::to_string(outliers_removed) + "/" + std::to_string(outliers) +
                    ", inliers kept " + fmt("%.4f", kept) + ", KITTI rate drops in " + std::to_string(rate_drops) +
                    "/20, denser than raw in " + std::to_string(denser) + "/20"};
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(SCNN_CLI_PATH) + " " + args + " >> " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().filename() == "cli.log") continue;
    std::ifstream is(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    files[fs::relative(e.path(), dir).string()] = ss.str();
  }
  return files;
}

Outcome a9_determinism(const fs::path& out) {
  const fs::path root = out / "a9";
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path log = root / "cli.log";
  const std::string r = root.string();
  const std::vector<std::pair<std::string, std::string>> commands{
      {"gen-data", "--seed 1 --out-dir " + r + "/data gen-data --count 4 --size 32 --split val"},
      {"train", "--seed 2 --out-dir " + r + "/train train --iters 5 --batch 2 --size 32 --kernels 5,3 --channels 4 "
                "--val " + r + "/data/val --eval-every 5"},
      {"eval", "--seed 2 --out-dir " + r + "/eval eval --model " + r + "/train/model.scnn --data " + r +
                   "/data/val --density-sweep 5,20,100"},
      {"gradcheck", "--seed 3 --out-dir " + r + "/gradcheck gradcheck --spec tiny --trials 2"},
      {"baseline", "--seed 4 --out-dir " + r + "/baseline baseline --method nw --data " + r + "/data/val"},
      {"gen-fusion", "--seed 5 --out-dir " + r + "/fusion gen-fusion --size 32"},
      {"fuse", "--out-dir " + r + "/fused fuse --scans '" + r + "/fusion/scan_*.pgm' --reference " + r +
                   "/fusion/reference.pgm --truth " + r + "/fusion/truth.pgm"},
      {"sparsify", "--seed 6 --out-dir " + r + "/sparsify sparsify --density 0.3 --input " + r +
                       "/data/val/000000_dense.pgm"},
  };
  std::vector<std::string> bad;
  for (int pass = 0; pass < 2; ++pass) {
    const auto before = pass == 1 ? snapshot(root) : std::map<std::string, std::string>{};
    for (const auto& [name, args] : commands) {
      if (run_cli(args, log) != 0) bad.push_back(name + " (exit code)");
    }
    if (pass == 1) {
      const auto after = snapshot(root);
      if (before.size() != after.size()) bad.push_back("file set");
      for (const auto& [file, bytes] : before) {
        auto it = after.find(file);
        if (it == after.end() || it->second != bytes) bad.push_back(file);
      }
    }
  }
  const std::size_t files = snapshot(root).size();
  std::string detail = std::to_string(commands.size()) + " subcommands, " + std::to_string(files) + " artifacts";
  if (!bad.empty()) {
    detail += "; differing:";
    for (const auto& b : bad) detail += " " + b;
  }
  return {bad.empty(), detail};
}

Outcome a10_convergence(Runs& runs, const fs::path& out) {
  constexpr int kAt = 500, kWindow = 50;
  int wins = 0;
  std::string csv = "seed,sparse_loss_at_500,conv_loss_at_500,sparse_mean_451_500,conv_mean_451_500\n";
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto& s = runs.get(Variant::SparseConvNet, 0.05, seed, kAt).log;
    const auto& c = runs.get(Variant::ConvNet, 0.05, seed, kAt).log;
    double sm = 0.0, cm = 0.0;
    for (int i = kAt - kWindow; i < kAt; ++i) {
      sm += s[i].loss / kWindow;
      cm += c[i].loss / kWindow;
    }
    wins += sm < cm;
    csv += std::to_string(seed) + "," + fmt("%.9g", s[kAt - 1].loss) + "," + fmt("%.9g", c[kAt - 1].loss) + "," +
           fmt("%.9g", sm) + "," + fmt("%.9g", cm) + "\n";
  }
  write_file(out / "a10_convergence.csv", csv);
  std::cerr << csv;
  return {wins >= 4, "SparseConvNet below ConvNet at iteration 500 (mean of iterations 451-500) in " +
                         std::to_string(wins) + "/5 seeds"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria A1-A10"};
  std::string only;
  std::string out_dir = "acceptance_out";
  app.add_option("--only", only, "Comma-separated subset, e.g. A1,A5");
  app.add_option("--out-dir", out_dir, "Directory for tables and logs")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  std::set<std::string> selected;
  std::stringstream ss(only);
  for (std::string item; std::getline(ss, item, ',');) selected.insert(item);
  const fs::path out(out_dir);
  fs::create_directories(out);
  Runs runs(out);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"A1", a1_gradients},
      {"A2", a2_dense_equivalence},
      {"A3", [&] { return a3_sparsity_invariance(runs, out); }},
      {"A4", [&] { return a4_diagonal(runs, out); }},
      {"A5", a5_unobserved_invariance},
      {"A6", a6_baseline_oracles},
      {"A7", a7_metrics},
      {"A8", a8_fusion},
      {"A9", [&] { return a9_determinism(out); }},
      {"A10", [&] { return a10_convergence(runs, out); }},
  };

  int failed = 0;
  std::string summary;
  for (const auto& [name, fn] : criteria) {
    if (!selected.empty() && !selected.count(name)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const std::string line = std::string(o.pass ? "PASS " : "FAIL ") + name + ": " + o.detail + " [" +
                             fmt("%.0f", seconds_since(t0)) + " s]";
    std::cout << line << std::endl;
    summary += line + "\n";
    failed += !o.pass;
  }
  write_file(out / "summary.txt", summary);
  return failed == 0 ? 0 : 1;
}
