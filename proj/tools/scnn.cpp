// Command line front end: gen-data -> train -> eval, plus the baselines,
// depth fusion, sparsification and gradient checking.

#include <glob.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "scnn/baselines.hpp"
#include "scnn/data.hpp"
#include "scnn/experiment.hpp"
#include "scnn/fusion.hpp"
#include "scnn/gradcheck.hpp"
#include "scnn/metrics.hpp"
#include "scnn/network.hpp"
#include "scnn/optim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

struct Globals {
  std::uint64_t seed = 0;
  std::string out_dir = ".";
};

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw scnn::ConfigError("bad integer '" + item + "' in list '" + text + "'");
    }
  }
  return out;
}

std::string fmt(double v, const char* spec = "%.9g") {
  char buf[40];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

fs::path ensure_out_dir(const Globals& g) {
  fs::path dir(g.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw scnn::IoError("cannot create output directory " + dir.string());
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw scnn::IoError("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw scnn::IoError("failed writing " + path.string());
}

/// Records the resolved flags of `sub` (every option, defaults included) so
/// that `scnn <argv...>` replays the run.
void write_manifest(const Globals& g, const CLI::App& sub) {
  json flags = json::object();
  std::vector<std::string> argv{sub.get_name()};
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string name = opt->get_lnames().front();
    if (name == "help") continue;
    if (opt->get_type_size() == 0) {
      const bool set = opt->count() > 0;
      flags[name] = set;
      if (set) argv.push_back("--" + name);
      continue;
    }
    const auto results = opt->results();
    std::string value = results.empty() ? opt->get_default_str() : results.front();
    flags[name] = value;
    if (!value.empty()) {
      argv.push_back("--" + name);
      argv.push_back(value);
    }
  }
  argv.insert(argv.end(), {"--seed", std::to_string(g.seed), "--out-dir", g.out_dir});
  json manifest{{"subcommand", sub.get_name()},
                {"seed", g.seed},
                {"out_dir", g.out_dir},
                {"flags", flags},
                {"argv", argv}};
  write_text(ensure_out_dir(g) / (sub.get_name() + "_manifest.json"), manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  int count = 16;
  int size = 64;
  double density = 0.05;
  int boxes = 4;
  std::string split = "train";
};

int run_gen_data(const Globals& g, const GenDataArgs& a) {
  if (!(a.density > 0.0 && a.density <= 1.0)) throw scnn::ConfigError("--density must lie in (0, 1]");
  if (a.count < 1 || a.size < 1) throw scnn::ConfigError("--count and --size must be positive");
  const fs::path dir = ensure_out_dir(g) / a.split;
  fs::create_directories(dir);
  scnn::SceneConfig scene;
  scene.height = scene.width = a.size;
  scene.boxes = a.boxes;
  const auto dense = scnn::make_scenes(scene, a.count, g.seed);
  std::int64_t observed = 0, total = 0;
  for (int i = 0; i < a.count; ++i) {
    const scnn::DepthMap sparse =
        scnn::sparsify(dense[i], a.density, scnn::derive_seed(g.seed, 0xD5, static_cast<std::uint64_t>(i)));
    scnn::write_depth_pgm(dense[i], scnn::dense_path(dir, i));
    scnn::write_depth_pgm(sparse, scnn::sparse_path(dir, i));
    observed += sparse.observed_count();
    total += sparse.size();
  }
  std::cout << "wrote " << a.count << " pairs to " << dir.string() << ", density "
            << fmt(static_cast<double>(observed) / static_cast<double>(total)) << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string variant = "sparse";
  double density = 0.10;
  int iters = 2000;
  double lr = 1e-3;
  std::string loss = "l2";
  int batch = 8;
  int size = 64;
  int channels = 16;
  std::string kernels = "11,7,5,3,3";
  std::string data;
  std::string val;
  int eval_every = 0;
  std::string out;
};

scnn::NetworkSpec make_spec(const std::string& variant, int channels, const std::string& kernels) {
  scnn::NetworkSpec spec;
  spec.variant = scnn::parse_variant(variant);
  spec.channels = channels;
  spec.kernel_sizes = parse_int_list(kernels);
  spec.validate();
  return spec;
}

int run_train(const Globals& g, const TrainArgs& a) {
  const scnn::NetworkSpec spec = make_spec(a.variant, a.channels, a.kernels);
  scnn::TrainConfig cfg;
  cfg.loss = scnn::parse_loss(a.loss);
  cfg.learning_rate = a.lr;
  cfg.iterations = a.iters;
  cfg.batch_size = a.batch;
  cfg.seed = g.seed;
  cfg.eval_every = a.eval_every;
  cfg.validate();
  if (!(a.density > 0.0 && a.density <= 1.0)) throw scnn::ConfigError("--density must lie in (0, 1]");

  std::unique_ptr<scnn::DataSource> source;
  if (a.data.empty()) {
    scnn::SceneConfig scene;
    scene.height = scene.width = a.size;
    source = std::make_unique<scnn::SyntheticSource>(scene, a.density, a.batch, g.seed);
  } else {
    source = std::make_unique<scnn::DatasetSource>(scnn::load_dense_maps(a.data), a.density, a.batch, g.seed);
  }
  scnn::Evaluator evaluator;
  std::vector<scnn::DepthMap> val;
  if (!a.val.empty()) {
    val = scnn::load_dense_maps(a.val);
    evaluator = [&](const scnn::ModelState& m) {
      return scnn::evaluate_model(m, val, a.density, g.seed).mae;
    };
  }
  const fs::path dir = ensure_out_dir(g);
  const scnn::TrainResult result = scnn::train(spec, *source, cfg, evaluator);
  const fs::path ckpt = a.out.empty() ? dir / "model.scnn" : fs::path(a.out);
  scnn::save(result.model, ckpt);
  std::ostringstream log;
  scnn::write_log_csv(result.log, log);
  write_text(dir / "train_log.csv", log.str());
  std::cout << "trained " << scnn::to_string(spec.variant) << " for " << a.iters << " iterations";
  if (!result.log.empty()) std::cout << ", final loss " << fmt(result.log.back().loss);
  std::cout << "\ncheckpoint " << ckpt.string() << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string model;
  std::string data;
  std::string sweep = "5,10,20,50,100";
  std::string variant;
  int channels = 16;
  std::string kernels = "11,7,5,3,3";
};

int run_eval(const Globals& g, const EvalArgs& a) {
  const scnn::ModelState model = scnn::load(a.model);
  if (!a.variant.empty()) scnn::require_compatible(model, make_spec(a.variant, a.channels, a.kernels));
  const auto densities = scnn::parse_density_sweep(a.sweep);
  const auto dense = scnn::load_dense_maps(a.data);

  std::string header = "model", row = fs::path(a.model).filename().string();
  std::string detail = "density," + std::string(scnn::report_csv_header()) + "\n";
  json mae = json::object();
  for (double d : densities) {
    const scnn::MetricsReport r = scnn::evaluate_model(model, dense, d, g.seed);
    const std::string label = fmt(d * 100.0, "%g");
    header += "," + label;
    row += "," + fmt(r.mae);
    mae[label] = json::parse(fmt(r.mae));
    detail += label + "," + scnn::report_to_csv_row(r) + "\n";
  }
  const std::string csv = header + "\n" + row + "\n";
  const json j{{"model", fs::path(a.model).filename().string()},
               {"variant", std::string(scnn::to_string(model.variant))},
               {"mae", mae}};
  const fs::path dir = ensure_out_dir(g);
  write_text(dir / "eval.csv", csv);
  write_text(dir / "eval.json", j.dump() + "\n");
  write_text(dir / "eval_metrics.csv", detail);
  std::cout << csv << j.dump() << "\n";
  return kExitOk;
}

struct GradcheckArgs {
  std::string spec = "default";
  int trials = 20;
  double tolerance = 1e-5;
  bool zero_weights = false;
  bool corrupt = false;
};

int run_gradcheck(const Globals& g, const GradcheckArgs& a) {
  scnn::GradcheckConfig cfg;
  if (a.spec == "tiny") {
    cfg.kernel_sizes = {3, 3};
  } else if (a.spec != "default") {
    cfg.kernel_sizes = parse_int_list(a.spec);
  }
  cfg.trials = a.trials;
  cfg.tolerance = a.tolerance;
  cfg.zero_weights = a.zero_weights;
  cfg.corrupt = a.corrupt;
  cfg.seed = g.seed;
  const scnn::GradcheckReport report = scnn::run_gradcheck(cfg);
  std::string csv = "check,checked,max_rel_error\n";
  for (const auto& e : report.entries) {
    csv += e.name + "," + std::to_string(e.checked) + "," + fmt(e.max_rel_error, "%.3e") + "\n";
  }
  write_text(ensure_out_dir(g) / "gradcheck.csv", csv);
  std::cout << csv << "max relative error " << fmt(report.max_rel_error(), "%.3e") << " (tolerance "
            << fmt(a.tolerance, "%.1e") << ")\n";
  return report.passed(a.tolerance) ? kExitOk : kExitValidation;
}

struct BaselineArgs {
  std::string method = "nw";
  std::string input;
  std::string truth;
  std::string data;
  double density = 0.05;
  double h = 2.0;
  double r = 0.0;
  std::string output;
};

scnn::DepthMap apply_baseline(const BaselineArgs& a, const scnn::DepthMap& sparse) {
  if (a.method == "nw") return scnn::nadaraya_watson(sparse, scnn::NWConfig{a.h, a.r});
  if (a.method == "pool") {
    const int radius = a.r > 0.0 ? static_cast<int>(a.r) : 2;
    return scnn::closest_depth_pool(sparse, scnn::PoolConfig{radius});
  }
  throw scnn::ConfigError("unknown baseline method '" + a.method + "' (nw|pool)");
}

int run_baseline(const Globals& g, const BaselineArgs& a) {
  const fs::path dir = ensure_out_dir(g);
  scnn::MetricsAccumulator acc;
  if (!a.data.empty()) {
    const auto dense = scnn::load_dense_maps(a.data);
    for (std::size_t i = 0; i < dense.size(); ++i) {
      const auto sparse = scnn::sparsify(dense[i], a.density, scnn::derive_seed(g.seed, 0xBA5E, i));
      const scnn::Mask input = sparse.mask();
      acc.add(apply_baseline(a, sparse), dense[i], &input);
    }
  } else {
    if (a.input.empty()) throw scnn::ConfigError("baseline needs --input or --data");
    const scnn::DepthMap sparse = scnn::read_depth_pgm(fs::path(a.input));
    const scnn::DepthMap filled = apply_baseline(a, sparse);
    const fs::path out = a.output.empty() ? dir / "baseline.pgm" : fs::path(a.output);
    scnn::write_depth_pgm(filled, out);
    std::cout << "wrote " << out.string() << "\n";
    if (a.truth.empty()) return kExitOk;
    const scnn::Mask input = sparse.mask();
    acc.add(filled, scnn::read_depth_pgm(fs::path(a.truth)), &input);
  }
  const scnn::MetricsReport r = acc.report();
  write_text(dir / "baseline_metrics.json", scnn::report_to_json(r) + "\n");
  std::cout << scnn::report_csv_header() << "\n" << scnn::report_to_csv_row(r) << "\n"
            << scnn::report_to_json(r) << "\n";
  return kExitOk;
}

struct FuseArgs {
  std::string scans;
  std::string reference;
  std::string truth;
  double tau = 0.05;
  double focal_baseline = scnn::kKittiFocalBaseline;
};

std::vector<std::string> expand_glob(const std::string& pattern) {
  glob_t g{};
  const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
  std::vector<std::string> out;
  if (rc == 0) {
    for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  }
  globfree(&g);
  if (out.empty()) throw scnn::IoError("no files match '" + pattern + "'");
  return out;  // glob() sorts its matches
}

int run_fuse(const Globals& g, const FuseArgs& a) {
  std::vector<scnn::DepthMap> scans;
  for (const auto& path : expand_glob(a.scans)) scans.push_back(scnn::read_depth_pgm(fs::path(path)));
  const scnn::DepthMap reference = scnn::read_depth_pgm(fs::path(a.reference));
  const scnn::DepthMap truth = scnn::read_depth_pgm(fs::path(a.truth));
  scnn::FusionConfig cfg;
  cfg.n_scans = static_cast<int>(scans.size());
  cfg.tau = a.tau;
  std::optional<double> fb;
  if (a.focal_baseline > 0.0) fb = a.focal_baseline;
  const scnn::FusionResult r = scnn::fuse_pipeline(scans, reference, truth, cfg, fb);

  const fs::path dir = ensure_out_dir(g);
  scnn::write_depth_pgm(r.cleaned, dir / "fused.pgm");
  std::string csv = "stage," + std::string(scnn::report_csv_header()) + "\n";
  csv += "raw," + scnn::report_to_csv_row(r.raw) + "\n";
  csv += "accumulated," + scnn::report_to_csv_row(r.accumulated_metrics) + "\n";
  csv += "cleaned," + scnn::report_to_csv_row(r.cleaned_metrics) + "\n";
  write_text(dir / "fusion.csv", csv);
  std::cout << csv;
  return kExitOk;
}

struct GenFusionArgs {
  int size = 64;
  int scans = 11;
  double keep = 0.05;
};

int run_gen_fusion(const Globals& g, const GenFusionArgs& a) {
  scnn::FusionScenarioConfig cfg;
  cfg.scene.height = cfg.scene.width = a.size;
  cfg.n_scans = a.scans;
  cfg.scan_keep = a.keep;
  cfg.seed = g.seed;
  const scnn::FusionScenario s = scnn::make_fusion_scenario(cfg);
  const fs::path dir = ensure_out_dir(g);
  for (std::size_t i = 0; i < s.scans.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "scan_%02zu.pgm", i);
    scnn::write_depth_pgm(s.scans[i], dir / name);
  }
  scnn::write_depth_pgm(s.reference, dir / "reference.pgm");
  scnn::write_depth_pgm(s.truth, dir / "truth.pgm");
  std::cout << "wrote " << s.scans.size() << " scans, reference.pgm and truth.pgm to " << dir.string() << "\n";
  return kExitOk;
}

struct SparsifyArgs {
  std::string input;
  std::string output;
  double density = 0.05;
};

int run_sparsify(const Globals& g, const SparsifyArgs& a) {
  const scnn::DepthMap in = scnn::read_depth_pgm(fs::path(a.input));
  const scnn::DepthMap out = scnn::sparsify(in, a.density, g.seed);
  const fs::path path = a.output.empty() ? ensure_out_dir(g) / "sparse.pgm" : fs::path(a.output);
  scnn::write_depth_pgm(out, path);
  std::cout << "wrote " << path.string() << ", density " << fmt(out.density()) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparsity-invariant CNNs for depth completion"};
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Output directory")->capture_default_str();

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write synthetic sparse/dense depth PGM pairs");
  gen_cmd->add_option("--count", gen.count)->capture_default_str();
  gen_cmd->add_option("--size", gen.size)->capture_default_str();
  gen_cmd->add_option("--density", gen.density, "Keep probability in (0,1]")->capture_default_str();
  gen_cmd->add_option("--boxes", gen.boxes)->capture_default_str();
  gen_cmd->add_option("--split", gen.split)->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a network");
  train_cmd->add_option("--variant", tr.variant, "sparse|conv|conv_mask")->capture_default_str();
  train_cmd->add_option("--density", tr.density, "Input keep probability")->capture_default_str();
  train_cmd->add_option("--iters", tr.iters)->capture_default_str();
  train_cmd->add_option("--lr", tr.lr)->capture_default_str();
  train_cmd->add_option("--loss", tr.loss, "l2|l1")->capture_default_str();
  train_cmd->add_option("--batch", tr.batch)->capture_default_str();
  train_cmd->add_option("--size", tr.size, "Scene size without --data")->capture_default_str();
  train_cmd->add_option("--channels", tr.channels)->capture_default_str();
  train_cmd->add_option("--kernels", tr.kernels)->capture_default_str();
  train_cmd->add_option("--data", tr.data, "Dataset directory (default: procedural scenes)");
  train_cmd->add_option("--val", tr.val, "Validation directory for eval_mae");
  train_cmd->add_option("--eval-every", tr.eval_every)->capture_default_str();
  train_cmd->add_option("--out", tr.out, "Checkpoint path (default <out-dir>/model.scnn)");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "MAE of a checkpoint across input densities");
  eval_cmd->add_option("--model", ev.model)->required();
  eval_cmd->add_option("--data", ev.data)->required();
  eval_cmd->add_option("--density-sweep", ev.sweep, "Percentages")->capture_default_str();
  eval_cmd->add_option("--variant", ev.variant, "Check the checkpoint against this spec");
  eval_cmd->add_option("--channels", ev.channels)->capture_default_str();
  eval_cmd->add_option("--kernels", ev.kernels)->capture_default_str();

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of all backward passes");
  gc_cmd->add_option("--spec", gc.spec, "default|tiny|<kernel list>")->capture_default_str();
  gc_cmd->add_option("--trials", gc.trials)->capture_default_str();
  gc_cmd->add_option("--tolerance", gc.tolerance)->capture_default_str();
  gc_cmd->add_flag("--zero-weights", gc.zero_weights);
  gc_cmd->add_flag("--corrupt", gc.corrupt, "Test hook: perturb analytic gradients");

  BaselineArgs bl;
  auto* bl_cmd = app.add_subcommand("baseline", "Nadaraya-Watson or closest-depth pooling");
  bl_cmd->add_option("--method", bl.method, "nw|pool")->capture_default_str();
  bl_cmd->add_option("--input", bl.input, "Sparse depth PGM");
  bl_cmd->add_option("--truth", bl.truth, "Dense depth PGM for metrics");
  bl_cmd->add_option("--data", bl.data, "Dataset directory (re-sparsified at --density)");
  bl_cmd->add_option("--density", bl.density)->capture_default_str();
  bl_cmd->add_option("--h", bl.h, "Kernel bandwidth (nw)")->capture_default_str();
  bl_cmd->add_option("--r", bl.r, "Support radius (nw, 0 = 3h) or window radius (pool)")->capture_default_str();
  bl_cmd->add_option("--output", bl.output);

  FuseArgs fu;
  auto* fuse_cmd = app.add_subcommand("fuse", "Accumulate scans and reject points inconsistent with a reference");
  fuse_cmd->add_option("--scans", fu.scans, "Glob of scan PGMs")->required();
  fuse_cmd->add_option("--reference", fu.reference)->required();
  fuse_cmd->add_option("--truth", fu.truth)->required();
  fuse_cmd->add_option("--tau", fu.tau)->capture_default_str();
  fuse_cmd->add_option("--focal-baseline", fu.focal_baseline,
                       "Score in disparity space with this f*B (0 = meters)")->capture_default_str();

  GenFusionArgs gf;
  auto* gf_cmd = app.add_subcommand("gen-fusion", "Write a synthetic multi-scan fusion scenario");
  gf_cmd->add_option("--size", gf.size)->capture_default_str();
  gf_cmd->add_option("--scans", gf.scans)->capture_default_str();
  gf_cmd->add_option("--keep", gf.keep)->capture_default_str();

  SparsifyArgs sp;
  auto* sp_cmd = app.add_subcommand("sparsify", "Random dropout of a depth PGM");
  sp_cmd->add_option("--input", sp.input)->required();
  sp_cmd->add_option("--output", sp.output);
  sp_cmd->add_option("--density", sp.density)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  try {
    for (CLI::App* sub : app.get_subcommands()) write_manifest(g, *sub);
    if (*gen_cmd) return run_gen_data(g, gen);
    if (*train_cmd) return run_train(g, tr);
    if (*eval_cmd) return run_eval(g, ev);
    if (*gc_cmd) return run_gradcheck(g, gc);
    if (*bl_cmd) return run_baseline(g, bl);
    if (*fuse_cmd) return run_fuse(g, fu);
    if (*gf_cmd) return run_gen_fusion(g, gf);
    if (*sp_cmd) return run_sparsify(g, sp);
  } catch (const scnn::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const scnn::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const scnn::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}
