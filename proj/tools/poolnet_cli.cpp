// poolnet: experiment front end. Exit codes: 0 success, 1 experiment failure
// (divergence, failed gradient check), 2 usage or configuration error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>

#include <CLI11.hpp>
#include <json.hpp>

#include "json_config.hpp"
#include "poolnet/arch.hpp"
#include "poolnet/data.hpp"
#include "poolnet/experiments.hpp"
#include "poolnet/gradcheck.hpp"
#include "poolnet/optim.hpp"
#include "poolnet/pooling.hpp"
#include "poolnet/report.hpp"
#include "poolnet/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace poolnet::cli {
namespace {

/// Bad flags, bad config values or missing inputs.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::optional<std::uint64_t> seed;
  std::string out;

  std::uint64_t resolve_seed() {
    if (!seed) {
      std::random_device rd;
      seed = (std::uint64_t{rd()} << 32) ^ rd();
    }
    return *seed;
  }
  fs::path dir(const std::string &cmd) const { return out.empty() ? fs::path("poolnet-out") / cmd : fs::path(out); }
};

void add_common(CLI::App *sub, Common &c) {
  sub->fallthrough();
  sub->add_option("--seed", c.seed, "RNG seed (drawn at random and echoed when absent)");
  sub->add_option("--out", c.out, "Output directory (default poolnet-out/<command>)");
}

fs::path require_data_dir(const std::string &data) {
  if (data.empty())
    throw UsageError("no dataset: pass --data DIR or set CIFAR10_DIR");
  if (!fs::is_directory(data))
    throw UsageError("dataset directory '" + data + "' does not exist");
  return data;
}

// ---------------------------------------------------------------------------
// train

struct TrainOpts {
  Common common;
  std::string arch = "A-LeNet5-a";
  std::string spec_file;
  std::optional<int> epochs;
  std::optional<std::size_t> batch;
  std::string data;
  std::size_t synthetic = 0;
  std::size_t train_limit = 0;
  std::size_t test_limit = 0;
  std::string precision = "float";
  std::string nesterov = "rate_in_velocity";
  std::string init = "he_normal";
  bool no_augment = false;
  bool no_decay_bias = false;
  bool no_eval_initial = false;
  bool no_checkpoint = false;
  bool paper_scale = false;
  bool desk_scale = false;
  bool dry_run = false;
  std::optional<double> eta_cl, eta_fc;
};

constexpr int kDeskEpochs = 20;

TrainConfig resolve_train(TrainOpts &o) {
  TrainConfig cfg = TrainConfig::for_arch(o.arch);
  if (!o.spec_file.empty()) {
    std::ifstream in(o.spec_file);
    if (!in)
      throw UsageError("cannot open spec file '" + o.spec_file + "'");
    try {
      cfg.spec = arch_spec_from_json(json::parse(in));
    } catch (const json::exception &e) {
      throw UsageError("spec file '" + o.spec_file + "': " + e.what());
    }
    shape_trace(cfg.spec);
  }
  if (o.paper_scale && o.desk_scale)
    throw UsageError("--paper-scale and --desk-scale are exclusive");
  cfg.epochs = o.paper_scale ? cfg.hyper.epochs : kDeskEpochs;
  if (o.epochs)
    cfg.epochs = *o.epochs;
  if (o.batch)
    cfg.batch_size = *o.batch;
  if (o.eta_cl)
    cfg.hyper.conv.schedule.base_rate = *o.eta_cl;
  if (o.eta_fc)
    cfg.hyper.fc.schedule.base_rate = *o.eta_fc;
  cfg.seed = o.common.resolve_seed();
  cfg.train_limit = o.train_limit;
  cfg.test_limit = o.test_limit;
  cfg.augment.enabled = !o.no_augment;
  cfg.sgd.decay_bias_and_norm = !o.no_decay_bias;
  cfg.eval_initial = !o.no_eval_initial;
  cfg.precision = o.precision == "double" ? Precision::Double : Precision::Float;
  cfg.sgd.form = o.nesterov == "rate_outside" ? NesterovForm::RateOutside : NesterovForm::RateInVelocity;
  cfg.init = o.init == "he_uniform" ? InitScheme::HeUniform : InitScheme::HeNormal;
  if (!o.no_checkpoint)
    cfg.checkpoint = o.common.dir("train") / "checkpoint.bin";
  return cfg;
}

int cmd_train(TrainOpts &o) {
  TrainConfig cfg = resolve_train(o);
  const fs::path dir = o.common.dir("train");
  json echo = to_json(cfg);
  echo["data"] = o.synthetic ? "synthetic:" + std::to_string(o.synthetic) : o.data;
  std::cout << "train " << cfg.spec.name << ": epochs " << cfg.epochs << ", batch " << cfg.batch_size << ", eta CL "
            << cfg.hyper.conv.eta() << " FC " << cfg.hyper.fc.eta() << ", seed " << cfg.seed << "\n";
  if (o.dry_run) {
    std::cout << echo.dump(2) << "\n";
    return 0;
  }

  Dataset train_set, test_set;
  if (o.synthetic) {
    train_set = synthetic_cifar_like(o.synthetic, cfg.seed, Split::Train);
    test_set = synthetic_cifar_like(std::max<std::size_t>(o.synthetic / 5, 10), derive_seed(cfg.seed, 7), Split::Test);
  } else {
    std::tie(train_set, test_set) = load_cifar10(require_data_dir(o.data));
  }

  fs::create_directories(dir);
  const TrainReport report = train(cfg, train_set, test_set, [](const EpochRecord &e) {
    std::printf("epoch %3d  loss %.4f  train %.4f  test %.4f  lr %.3g/%.3g  %.1fs\n", e.epoch, e.train_loss,
                e.train_acc, e.test_acc, e.lr_conv, e.lr_fc, e.seconds);
    std::fflush(stdout);
    return true;
  });

  json j = to_json(report);
  j["config"] = echo;
  write_json_report(dir / "report.json", j);
  std::vector<std::vector<double>> rows;
  for (const auto &e : report.epochs)
    rows.push_back({double(e.epoch), e.train_loss, e.train_acc, e.test_acc, e.lr_conv, e.lr_fc});
  write_csv(dir / "curve.csv", {"epoch", "loss", "train_acc", "test_acc", "lr_conv", "lr_fc"}, rows);
  std::cout << "final test accuracy " << report.final_test_acc << " (" << report.status << "), wrote " << dir << "\n";
  return report.diverged ? 1 : 0;
}

// ---------------------------------------------------------------------------
// sptp

struct SpTpOpts {
  Common common;
  std::string mode = "chain";
  std::optional<std::size_t> extent, samples;
  std::size_t layers = 10;
  std::vector<std::size_t> depths = {1};
  std::vector<std::size_t> ns;
  bool identity = false;
  bool paper_scale = false;
  bool desk_scale = false;
  std::string data;
  std::size_t inputs = 100;
  std::size_t filter_sets = 5;
  bool gaussian_inputs = false;
};

int cmd_sptp(SpTpOpts &o) {
  if (o.paper_scale && o.desk_scale)
    throw UsageError("--paper-scale and --desk-scale are exclusive");
  const fs::path dir = o.common.dir("sptp");
  const std::uint64_t seed = o.common.resolve_seed();

  if (o.mode == "vgg8") {
    Tensor<float> images;
    std::string source;
    if (o.gaussian_inputs) {
      images = Tensor<float>(Shape{o.inputs, 3, 32, 32});
      GaussianStream stream(32, 3, derive_seed(seed, 99));
      for (std::size_t i = 0; i < o.inputs; ++i)
        std::ranges::copy(stream.at<float>(i).data(), images.sample(i).begin());
      source = "gaussian";
    } else {
      const Dataset test = load_cifar10_file(require_data_dir(o.data) / "test_batch.bin", Split::Test).head(o.inputs);
      std::vector<std::size_t> idx(test.size());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      images = gather_batch<float>(test, idx);
      source = o.data;
    }
    SpTpVgg8Config cfg;
    cfg.filter_sets = o.filter_sets;
    cfg.seed = seed;
    cfg.identity_filters = o.identity;
    const SpTpPoint pt = sp_tp_vgg8(images, cfg);
    std::printf("vgg8 sp/tp: p = %.6f  stderr %.2e  sample_stderr %.2e  (%zu comparisons)\n", pt.estimate.p,
                pt.estimate.std_error, pt.sample_stderr, pt.estimate.trials);
    json j = {{"mode", "vgg8"},
              {"config",
               {{"inputs", images.shape().n},
                {"filter_sets", cfg.filter_sets},
                {"depths", cfg.depths},
                {"seed", seed},
                {"identity_filters", cfg.identity_filters},
                {"source", source}}},
              {"estimate", to_json(pt)}};
    write_json_report(dir / "report.json", j);
    write_csv(dir / "curve.csv", {"n", "p", "stderr", "sample_stderr"},
              {{double(pt.n), pt.estimate.p, pt.estimate.std_error, pt.sample_stderr}});
    return 0;
  }
  if (o.mode != "chain")
    throw UsageError("--mode must be chain or vgg8");

  SpTpConfig cfg;
  if (o.paper_scale) {
    cfg.extent = 1024;
    cfg.ns = {2, 4, 6, 8, 10};
    cfg.samples = 20000;
  }
  if (o.extent)
    cfg.extent = *o.extent;
  if (o.samples)
    cfg.samples = *o.samples;
  if (!o.ns.empty())
    cfg.ns = o.ns;
  cfg.layers = o.layers;
  cfg.depths = o.depths;
  cfg.identity_filters = o.identity;
  cfg.seed = seed;
  try {
    cfg.validate();
  } catch (const std::invalid_argument &e) {
    throw UsageError(e.what());
  }
  const SpTpResult res = sp_tp_sweep(cfg);
  json curve = json::array();
  std::vector<std::vector<double>> rows;
  for (const auto &pt : res.curve) {
    std::printf("n = %2zu  p = %.6f  stderr %.2e  sample_stderr %.2e\n", pt.n, pt.estimate.p, pt.estimate.std_error,
                pt.sample_stderr);
    curve.push_back(to_json(pt));
    rows.push_back({double(pt.n), pt.estimate.p, pt.estimate.std_error, pt.sample_stderr});
  }
  write_json_report(dir / "report.json",
                    {{"mode", "chain"}, {"config", to_json(cfg)}, {"inputs_matched", res.inputs_matched}, {"curve", curve}});
  write_csv(dir / "curve.csv", {"n", "p", "stderr", "sample_stderr"}, rows);
  return res.inputs_matched ? 0 : 1;
}

// ---------------------------------------------------------------------------
// tree

struct TreeOpts {
  Common common;
  std::size_t depth = 3;
  std::vector<double> levels = {1, 10, 1000};
  std::size_t trials = 100000;
};

int cmd_tree(TreeOpts &o) {
  const std::uint64_t seed = o.common.resolve_seed();
  ProbabilityEstimate e;
  try {
    e = tree_disagreement_prob(o.depth, o.levels, o.trials, seed);
  } catch (const std::invalid_argument &err) {
    throw UsageError(err.what());
  }
  std::printf("depth %zu: P(global > greedy) = %.6f  stderr %.2e  (%zu trials)\n", o.depth, e.p, e.std_error, e.trials);
  write_json_report(o.common.dir("tree") / "report.json",
                    {{"config", {{"depth", o.depth}, {"levels", o.levels}, {"trials", o.trials}, {"seed", seed}}},
                     {"estimate", to_json(e)}});
  return 0;
}

// ---------------------------------------------------------------------------
// routes

struct RoutesOpts {
  Common common;
  std::string stack;
  std::optional<std::size_t> window;
  std::size_t samples = 1;
};

json to_json(const RouteReport &r) {
  return {{"n", r.n},
          {"c", r.c},
          {"block_row", r.block_row},
          {"block_col", r.block_col},
          {"window", r.window},
          {"count", r.count},
          {"bbox", {r.bbox_rows, r.bbox_cols}},
          {"enclosing_cell", r.enclosing_cell},
          {"locality", std::string(to_string(r.locality))}};
}

int cmd_routes(RoutesOpts &o) {
  PoolingStack stack;
  try {
    stack = PoolingStack::parse(o.stack);
  } catch (const std::invalid_argument &e) {
    throw UsageError(e.what());
  }
  const std::size_t factor = stack.total_factor();
  const std::size_t window = o.window.value_or(factor);
  if (window == 0 || window % factor != 0)
    throw UsageError("--window " + std::to_string(window) + " must be a multiple of the stack factor " +
                     std::to_string(factor));
  if (o.samples == 0)
    throw UsageError("--samples must be >= 1");
  const std::uint64_t seed = o.common.resolve_seed();
  GaussianStream stream(window, 1, seed);
  std::map<std::size_t, std::size_t> counts;
  std::map<std::string, std::size_t> locality;
  json windows = json::array();
  for (std::size_t s = 0; s < o.samples; ++s) {
    const RouteMask mask = route_mask(stack, stream.at<double>(s));
    const auto reports = window == factor ? route_report(mask) : route_report(mask.active, window);
    for (const auto &r : reports) {
      ++counts[r.count];
      ++locality[std::string(to_string(r.locality))];
      if (windows.size() < 16)
        windows.push_back(to_json(r));
    }
  }
  const json first = windows.front();
  std::cout << stack.str() << " on " << window << "x" << window << ": count " << first["count"] << ", "
            << first["locality"].get<std::string>() << " (enclosing cell " << first["enclosing_cell"] << ", bbox "
            << first["bbox"][0] << "x" << first["bbox"][1] << ")\n";
  if (o.samples > 1) {
    std::cout << "over " << o.samples << " inputs:";
    for (const auto &[c, k] : counts)
      std::cout << " count " << c << " x" << k << ";";
    for (const auto &[l, k] : locality)
      std::cout << " " << l << " x" << k << ";";
    std::cout << "\n";
  }
  json count_hist = json::object();
  for (const auto &[c, k] : counts)
    count_hist[std::to_string(c)] = k;
  write_json_report(o.common.dir("routes") / "report.json",
                    {{"config", {{"stack", stack.str()}, {"window", window}, {"samples", o.samples}, {"seed", seed}}},
                     {"expected_routes", stack.expected_routes()},
                     {"count_histogram", count_hist},
                     {"locality_histogram", locality},
                     {"windows", windows}});
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradOpts {
  Common common;
  bool all = false;
  std::vector<std::string> only;
  std::size_t trials = 20;
};

int cmd_gradcheck(GradOpts &o) {
  GradcheckOptions opt;
  opt.trials = o.trials;
  opt.seed = o.common.resolve_seed();
  std::vector<GradcheckRow> rows;
  try {
    rows = run_gradcheck(opt, o.all ? std::vector<std::string>{} : o.only);
  } catch (const std::invalid_argument &e) {
    throw UsageError(e.what());
  }
  bool ok = true;
  json table = json::array();
  std::printf("%-16s %7s %12s %10s  %s\n", "check", "trials", "max_rel_err", "tolerance", "result");
  for (const auto &r : rows) {
    std::printf("%-16s %7zu %12.3e %10.0e  %s\n", r.name.c_str(), r.trials, r.max_rel_error, r.tolerance,
                r.passed ? "pass" : "FAIL");
    ok = ok && r.passed;
    table.push_back(to_json(r));
  }
  write_json_report(o.common.dir("gradcheck") / "report.json",
                    {{"config", {{"trials", opt.trials}, {"h", opt.h}, {"seed", opt.seed}}}, {"rows", table}, {"passed", ok}});
  return ok ? 0 : 1;
}

// ---------------------------------------------------------------------------
// arch

struct ArchOpts {
  std::string name;
  bool list = false;
  bool as_json = false;
};

int cmd_arch(ArchOpts &o) {
  if (o.list || o.name.empty()) {
    for (const auto &n : arch_names())
      std::cout << n << "\n";
    return 0;
  }
  const ArchSpec spec = build_spec(o.name);
  std::optional<TrainHyper> hyper;
  try {
    hyper = hyper_table(spec.name);
  } catch (const std::invalid_argument &) {
  }
  if (o.as_json) {
    json j = {{"spec", to_json(spec)}, {"flatten_width", flatten_width(spec)}, {"parameters", param_count(spec)}};
    if (hyper)
      j["hyper"] = to_json(*hyper);
    std::cout << j.dump(2) << "\n";
    return 0;
  }
  std::cout << spec.name << "  input " << spec.in_channels << "x" << spec.in_height << "x" << spec.in_width << "\n";
  for (const auto &t : shape_trace(spec))
    std::printf("  %-24s -> %zu x %zu x %zu\n", t.label.c_str(), t.out.c, t.out.h, t.out.w);
  std::cout << "flatten width " << flatten_width(spec) << ", parameters " << param_count(spec) << "\n";
  if (hyper) {
    for (const auto *g : {&hyper->conv, &hyper->fc}) {
      if (hyper->single_group && g == &hyper->fc)
        break;
      std::cout << (hyper->single_group ? "all" : g == &hyper->conv ? "CL " : "FC ") << "  eta " << g->eta() << "  mu "
                << g->momentum << "  alpha " << g->l2 << "  decay";
      for (const auto &p : g->schedule.pieces)
        std::cout << " (" << p.factor << ", " << p.period << ") " << p.when.str() << ";";
      std::cout << " phase " << g->schedule.phase << "\n";
    }
    std::cout << "epochs " << hyper->epochs << ", batch " << hyper->batch_size << "\n";
  }
  return 0;
}

} // namespace
} // namespace poolnet::cli

int main(int argc, char **argv) {
  using namespace poolnet::cli;
  CLI::App app{"poolnet: pooling-stack CNN experiments"};
  app.require_subcommand(1);
  // Config files hold the flags of the subcommand named on the command line.
  auto config = std::make_shared<JsonConfig>();
  for (int i = 1; i < argc; ++i)
    if (argv[i][0] != '-') {
      config->section = argv[i];
      break;
    }
  app.set_config("--config", "", "JSON file whose keys mirror the subcommand's long flags");
  app.config_formatter(config);

  TrainOpts train;
  auto *t = app.add_subcommand("train", "Train an architecture on CIFAR-10 (or synthetic data)");
  add_common(t, train.common);
  t->add_option("--arch", train.arch, "Architecture name (see `poolnet arch --list`)");
  t->add_option("--spec", train.spec_file, "JSON architecture spec overriding --arch's layers");
  t->add_option("--epochs", train.epochs, "Epoch count (overrides presets)");
  t->add_option("--batch", train.batch, "Batch size");
  t->add_option("--data", train.data, "CIFAR-10 binary directory")->envname("CIFAR10_DIR");
  t->add_option("--synthetic", train.synthetic, "Train on N synthetic CIFAR-shaped samples instead");
  t->add_option("--train-limit", train.train_limit, "Use only the first N training samples");
  t->add_option("--test-limit", train.test_limit, "Use only the first N test samples");
  t->add_option("--precision", train.precision)->check(CLI::IsMember({"float", "double"}));
  t->add_option("--nesterov-form", train.nesterov)->check(CLI::IsMember({"rate_in_velocity", "rate_outside"}));
  t->add_option("--init", train.init)->check(CLI::IsMember({"he_normal", "he_uniform"}));
  t->add_option("--eta-cl", train.eta_cl, "Override the conv-group base rate");
  t->add_option("--eta-fc", train.eta_fc, "Override the FC-group base rate");
  t->add_flag("--no-augment", train.no_augment);
  t->add_flag("--no-decay-bias", train.no_decay_bias, "Skip L2 on biases and batch-norm terms");
  t->add_flag("--no-eval-initial", train.no_eval_initial);
  t->add_flag("--no-checkpoint", train.no_checkpoint);
  t->add_flag("--paper-scale", train.paper_scale, "Published epoch count");
  t->add_flag("--desk-scale", train.desk_scale, "20 epochs (default)");
  t->add_flag("--dry-run", train.dry_run, "Print the resolved config and exit");

  SpTpOpts sptp;
  auto *s = app.add_subcommand("sptp", "Sequence vs top pooling Monte-Carlo");
  add_common(s, sptp.common);
  s->add_option("--mode", sptp.mode)->check(CLI::IsMember({"chain", "vgg8"}));
  s->add_option("--extent", sptp.extent, "Square input side");
  s->add_option("--layers", sptp.layers);
  s->add_option("--depth", sptp.depths, "Conv output channels (one value, or one per layer)");
  s->add_option("--n", sptp.ns, "Pooling counts to sweep");
  s->add_option("--samples", sptp.samples);
  s->add_flag("--identity-filters", sptp.identity);
  s->add_flag("--paper-scale", sptp.paper_scale, "1024^2 inputs, n = 2..10, 20000 samples");
  s->add_flag("--desk-scale", sptp.desk_scale, "256^2 inputs, n = 2,4,6, 2000 samples (default)");
  s->add_option("--data", sptp.data, "CIFAR-10 directory for --mode vgg8")->envname("CIFAR10_DIR");
  s->add_option("--inputs", sptp.inputs, "Inputs for --mode vgg8");
  s->add_option("--filter-sets", sptp.filter_sets, "Filter sets for --mode vgg8");
  s->add_flag("--gaussian-inputs", sptp.gaussian_inputs, "Use Gaussian images for --mode vgg8");

  TreeOpts tree;
  auto *tr = app.add_subcommand("tree", "Greedy vs global path disagreement on random value trees");
  add_common(tr, tree.common);
  tr->add_option("--depth", tree.depth);
  tr->add_option("--levels", tree.levels, "Node values, drawn uniformly")->delimiter(',');
  tr->add_option("--trials", tree.trials);

  RoutesOpts routes;
  auto *r = app.add_subcommand("routes", "Backprop route count and locality of a pooling stack");
  add_common(r, routes.common);
  r->add_option("--stack", routes.stack, "e.g. \"AP3,MP2\" (leftmost applied first)")->required();
  r->add_option("--window", routes.window, "Window side (default: stack factor)");
  r->add_option("--samples", routes.samples, "Random inputs to summarize");

  GradOpts grad;
  auto *g = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  add_common(g, grad.common);
  g->add_flag("--all", grad.all, "Run every check (default when --only is absent)");
  g->add_option("--only", grad.only, "Subset of checks");
  g->add_option("--trials", grad.trials);

  ArchOpts arch;
  auto *a = app.add_subcommand("arch", "Print an architecture's shape trace and published hyperparameters");
  a->add_option("name", arch.name);
  a->add_flag("--list", arch.list);
  a->add_flag("--json", arch.as_json);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (t->parsed())
      return cmd_train(train);
    if (s->parsed())
      return cmd_sptp(sptp);
    if (tr->parsed())
      return cmd_tree(tree);
    if (r->parsed())
      return cmd_routes(routes);
    if (g->parsed())
      return cmd_gradcheck(grad);
    return cmd_arch(arch);
  } catch (const UsageError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const poolnet::DataError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "failed: " << e.what() << "\n";
    return 1;
  }
}
