// Command-line driver: data generation, training, evaluation, gradient
// checking and the fusion-mode ablation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "baanet/config.hpp"
#include "baanet/dataset.hpp"
#include "baanet/gradcheck_suite.hpp"
#include "baanet/pipeline.hpp"
#include "baanet/serialization.hpp"

namespace fs = std::filesystem;
using namespace baanet;

namespace {

enum ExitCode { kOk = 0, kCheckFailed = 1, kUsage = 2, kIo = 3, kNumeric = 4 };

struct GlobalFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool quiet = false;
};

struct TrainFlags {
  std::optional<std::string> data;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> learning_rate;
  std::optional<std::string> fusion;
  std::optional<std::size_t> seeds;
};

class Log {
 public:
  explicit Log(bool quiet) : quiet_(quiet) {}
  template <typename... Args>
  void operator()(const char* fmt, Args... args) const {
    if (quiet_) return;
    if constexpr (sizeof...(Args) == 0) {
      std::fputs(fmt, stdout);
    } else {
      std::printf(fmt, args...);
    }
    std::fflush(stdout);
  }

 private:
  bool quiet_;
};

RunConfig resolve_config(const GlobalFlags& g, const TrainFlags& t) {
  RunConfig cfg;
  if (!g.config_path.empty()) cfg = load_config(g.config_path);
  if (g.seed) cfg.seed = *g.seed;
  if (g.out) cfg.output_dir = *g.out;
  if (t.data) cfg.dataset_path = *t.data;
  if (t.epochs) cfg.epochs = *t.epochs;
  if (t.batch_size) cfg.batch_size = *t.batch_size;
  if (t.learning_rate) cfg.learning_rate = *t.learning_rate;
  if (t.fusion) cfg.model.fusion = fusion_from_string(*t.fusion);
  if (t.seeds) cfg.ablation_seeds = *t.seeds;
  cfg.validate();
  return cfg;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) { write_file(path, std::span<const char>(text)); }

Dataset load_required_dataset(const RunConfig& cfg) {
  if (cfg.dataset_path.empty()) throw ConfigError("no dataset given (use --data or the data.path config key)");
  return load_dataset(cfg.dataset_path);
}

void print_subsets(const Log& log, const std::vector<SubsetResult>& results) {
  for (const auto& r : results) {
    if (r.result) {
      log("  %-12s mr2 %.4f  (%zu gt)\n", r.name.c_str(), r.result->mr2, r.result->gt_count);
    } else {
      log("  %-12s absent\n", r.name.c_str());
    }
  }
}

int cmd_gen_data(const GlobalFlags& g, std::size_t n, double train_ratio, const std::string& noise, const Log& log) {
  if (n < 1) throw ConfigError("--n must be at least 1");
  if (!g.out) throw ConfigError("gen-data needs --out DIR");
  RunConfig cfg;
  if (!g.config_path.empty()) cfg = load_config(g.config_path);
  if (g.seed) cfg.seed = *g.seed;
  const Dataset ds = make_dataset(*g.out, n, train_ratio, NoiseProfile::from_name(noise), cfg.seed);
  std::size_t day = 0, objects = 0;
  for (const auto& s : ds.samples) {
    day += s.illumination == Illumination::day ? 1 : 0;
    objects += s.gts.size();
  }
  log("wrote %zu samples to %s: %zu train / %zu test, %zu day / %zu night, %zu objects\n", ds.samples.size(),
      g.out->c_str(), ds.subset(Split::train).size(), ds.subset(Split::test).size(), day, ds.samples.size() - day,
      objects);
  return kOk;
}

int cmd_train(const RunConfig& cfg, const Log& log) {
  const Dataset ds = load_required_dataset(cfg);
  const fs::path out = cfg.output_dir;
  ensure_dir(out);
  log("training %s for %zu epochs on %zu samples\n", std::string(to_string(cfg.model.fusion)).c_str(), cfg.epochs,
      ds.subset(Split::train).size());
  const TrainResult r = train(cfg, ds, [&](const EpochMetrics& m) {
    log("epoch %zu  L_I %.4f  L_cls1 %.4f  L_cls2 %.4f  L_reg1 %.4f  L_reg2 %.4f  total %.4f\n", m.epoch,
        m.mean.illum, m.mean.cls1, m.mean.cls2, m.mean.reg1, m.mean.reg2, m.total);
  });
  save_checkpoint(out / "checkpoint.baac", make_checkpoint(cfg, r));
  std::ostringstream csv;
  write_metrics_csv(csv, r.epochs);
  write_text(out / "metrics.csv", csv.str());
  log("wrote %s and %s\n", (out / "checkpoint.baac").c_str(), (out / "metrics.csv").c_str());
  return kOk;
}

int cmd_eval(const GlobalFlags& g, const TrainFlags& t, const std::string& checkpoint, const Log& log) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  RunConfig cfg;
  const BaaNet net = model_from_checkpoint(ck, &cfg);
  // Evaluation settings and paths come from the command line over the snapshot.
  if (!g.config_path.empty()) cfg.eval = load_config(g.config_path).eval;
  if (g.out) cfg.output_dir = *g.out;
  if (t.data) cfg.dataset_path = *t.data;
  const Dataset ds = load_required_dataset(cfg);
  std::vector<EvalImage> images;
  const auto results = evaluate(net, ds, cfg.eval, &images);
  const fs::path out = cfg.output_dir;
  ensure_dir(out);
  std::ostringstream dets, csv;
  write_detections_csv(dets, images);
  write_eval_csv(csv, results);
  write_text(out / "detections.csv", dets.str());
  write_text(out / "eval.csv", csv.str());
  log("evaluated %zu test images\n", images.size());
  print_subsets(log, results);
  return kOk;
}

int cmd_gradcheck(const std::string& module, double tolerance, const Log& log) {
  const auto checks = run_gradcheck(module, tolerance);
  bool ok = true;
  for (const auto& c : checks) {
    const GradCheckEntry* w = c.report.worst();
    ok = ok && c.report.passed;
    log("%s  %-6s %-26s max rel err %.3e", c.report.passed ? "PASS" : "FAIL", c.module.c_str(), c.name.c_str(),
        c.report.max_rel_error);
    if (w && !c.report.passed) {
      log("  worst %s[%zu] analytic %.9g numeric %.9g", w->name.c_str(), w->worst_index, w->analytic, w->numeric);
    }
    log("\n");
  }
  if (!ok) {
    // Failure details go to stderr even under --quiet.
    for (const auto& c : checks) {
      if (c.report.passed) continue;
      for (const auto& e : c.report.entries) {
        if (e.max_rel_error <= tolerance) continue;
        std::fprintf(stderr, "gradcheck failed: %s/%s parameter %s worst rel err %.3e at [%zu]\n", c.module.c_str(),
                     c.name.c_str(), e.name.c_str(), e.max_rel_error, e.worst_index);
      }
    }
    return kCheckFailed;
  }
  log("all %zu checks passed at tolerance %g\n", checks.size(), tolerance);
  return kOk;
}

int cmd_ablate(const RunConfig& cfg, const Log& log) {
  const Dataset ds = load_required_dataset(cfg);
  const fs::path out = cfg.output_dir;
  ensure_dir(out);
  const auto runs = run_ablation(cfg, ds, [&](const AblationRun& r) {
    const SubsetResult* all = find_subset(r.subsets, "all");
    log("%-18s seed %llu  mr2(all) %.4f\n", std::string(to_string(r.mode)).c_str(),
        static_cast<unsigned long long>(r.seed), all && all->result ? all->result->mr2 : 1.0);
  });
  const auto summary = summarize_ablation(runs);
  std::ostringstream csv;
  write_ablation_csv(csv, runs, summary);
  write_text(out / "ablation.csv", csv.str());
  for (const auto& a : summary) {
    if (a.subset == "all" || a.subset == "day" || a.subset == "night") {
      log("%-18s %-6s mean %.4f  spread %.4f\n", std::string(to_string(a.mode)).c_str(), a.subset.c_str(), a.mean,
          a.spread);
    }
  }
  log("wrote %s\n", (out / "ablation.csv").c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multispectral detection with bi-directional attention gates"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags g;
  app.add_option("--config", g.config_path, "JSON config file with flat dotted keys");
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--quiet", g.quiet, "Only report errors");

  TrainFlags t;
  auto add_train_flags = [&t](CLI::App* sub, bool ablate) {
    sub->add_option("--data", t.data, "Dataset directory");
    sub->add_option("--epochs", t.epochs, "Training epochs")->check(CLI::PositiveNumber);
    sub->add_option("--batch-size", t.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
    sub->add_option("--lr", t.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
    if (ablate) {
      sub->add_option("--seeds", t.seeds, "Number of seeds per fusion mode")->check(CLI::PositiveNumber);
    } else {
      sub->add_option("--fusion", t.fusion, "baa_gate | baa_gate_no_illum | concat_baseline")
          ->check(CLI::IsMember({"baa_gate", "baa_gate_no_illum", "concat_baseline"}));
    }
  };

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic paired RGB/TIR dataset");
  std::size_t n = 0;
  double train_ratio = 0.8;
  std::string noise = "default";
  gen->add_option("--n", n, "Number of samples")->required();
  gen->add_option("--train-ratio", train_ratio, "Fraction of samples in the train split")->check(CLI::Range(0.0, 1.0));
  gen->add_option("--noise", noise, "Noise profile")->check(CLI::IsMember({"default", "clean"}));

  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  add_train_flags(train_cmd, false);

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  std::string checkpoint;
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", t.data, "Dataset directory");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  std::string module = "all";
  double tolerance = 1e-4;
  gc->add_option("--module", module, "all | ops | gate | illum | model")
      ->check(CLI::IsMember({"all", "ops", "gate", "illum", "model"}));
  gc->add_option("--tolerance", tolerance, "Maximum relative error")->check(CLI::NonNegativeNumber);

  auto* ablate = app.add_subcommand("ablate", "Train and evaluate every fusion mode over several seeds");
  add_train_flags(ablate, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  const Log log(g.quiet);
  try {
    if (*gen) return cmd_gen_data(g, n, train_ratio, noise, log);
    if (*train_cmd) return cmd_train(resolve_config(g, t), log);
    if (*eval_cmd) return cmd_eval(g, t, checkpoint, log);
    if (*gc) return cmd_gradcheck(module, tolerance, log);
    if (*ablate) return cmd_ablate(resolve_config(g, t), log);
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIo;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric abort: %s\n", e.what());
    return kNumeric;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n\n%s", e.what(), app.help().c_str());
    return kUsage;
  }
  return kUsage;
}
