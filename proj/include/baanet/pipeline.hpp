#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "baanet/config.hpp"
#include "baanet/dataset.hpp"
#include "baanet/evaluator.hpp"
#include "baanet/model.hpp"
#include "baanet/optim.hpp"
#include "baanet/serialization.hpp"

namespace baanet {

struct EpochMetrics {
  std::size_t epoch = 0;
  LossTerms mean;
  double total = 0.0;
};

struct TrainResult {
  ParamStore params;
  std::vector<EpochMetrics> epochs;
  std::uint64_t steps = 0;
};

/// Called after every epoch; may be empty.
using EpochCallback = std::function<void(const EpochMetrics&)>;

inline std::vector<const Sample*> require_split(const Dataset& ds, Split split) {
  auto samples = ds.subset(split);
  if (samples.empty()) throw ConfigError(std::string("dataset has an empty ") + std::string(to_string(split)) + " split");
  return samples;
}

/// Seeded minibatch Adam over the training split. Gradients are averaged over
/// the batch; stored parameters are rounded to checkpoint precision at the end
/// so the in-memory model equals its saved form.
inline TrainResult train(const RunConfig& cfg, const Dataset& ds, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  const auto samples = require_split(ds, Split::train);
  BaaNet net(cfg.model, cfg.illum, derive_seed(cfg.seed, 1));
  AdamState adam;
  adam.learning_rate = cfg.learning_rate;

  TrainResult result;
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 1000 + epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    LossTerms sum;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      ParamGrads grads(net.params().size());
      for (std::size_t k = start; k < end; ++k) {
        const Sample& s = *samples[order[k]];
        Graph g(&net.params());
        const ModelForward f = net.forward(g, BaaNet::batched(s.rgb), BaaNet::batched(s.tir));
        const ModelLoss l = net.loss(f, s.gts, s.illumination, cfg.loss);
        g.backward(l.total);
        ParamGrads pg = g.param_grads();
        for (std::size_t i = 0; i < pg.size(); ++i) {
          if (!pg[i]) continue;
          if (!grads[i]) {
            grads[i] = std::move(pg[i]);
          } else {
            auto dst = grads[i]->data();
            auto src = pg[i]->data();
            for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += src[e];
          }
        }
        sum += l.terms;
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!grads[i]) grads[i] = Tensor(net.params().value(i).shape(), 0.0);
        for (double& v : grads[i]->data()) v *= inv;
      }
      adam_step(adam, net.params(), grads);
      ++result.steps;
    }
    EpochMetrics m;
    m.epoch = epoch;
    const double n = static_cast<double>(order.size());
    m.mean = {sum.illum / n, sum.cls1 / n, sum.cls2 / n, sum.reg1 / n, sum.reg2 / n};
    m.total = total_loss_value(m.mean, cfg.loss);
    result.epochs.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  round_to_storage_precision(net.params());
  result.params = net.params();
  return result;
}

inline void write_metrics_csv(std::ostream& os, const std::vector<EpochMetrics>& epochs) {
  os << "epoch,L_I,L_cls1,L_cls2,L_reg1,L_reg2,total\n";
  for (const auto& m : epochs) {
    os << m.epoch << ',' << format_double(m.mean.illum) << ',' << format_double(m.mean.cls1) << ','
       << format_double(m.mean.cls2) << ',' << format_double(m.mean.reg1) << ',' << format_double(m.mean.reg2) << ','
       << format_double(m.total) << '\n';
  }
}

/// The config snapshot leaves out the output directory, so the same run
/// written to two places produces identical bytes.
inline Checkpoint make_checkpoint(const RunConfig& cfg, const TrainResult& r) {
  RunConfig snapshot = cfg;
  snapshot.output_dir = ".";
  Checkpoint ck;
  ck.step = r.steps;
  ck.params = r.params;
  ck.config = to_json(snapshot).dump(1);
  return ck;
}

/// Rebuilds the model a checkpoint was trained with.
inline BaaNet model_from_checkpoint(const Checkpoint& ck, RunConfig* cfg_out = nullptr) {
  RunConfig cfg = parse_config_text(ck.config);
  if (cfg_out) *cfg_out = cfg;
  return BaaNet(cfg.model, cfg.illum, ck.params);
}

/// Evaluation parallelism: BAANET_THREADS if set (>= 1), else the hardware count.
inline std::size_t eval_threads() {
  if (const char* env = std::getenv("BAANET_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<std::size_t>(v);
    throw ConfigError(std::string("BAANET_THREADS must be a positive integer, got '") + env + "'");
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Runs `fn(i)` for i in [0, n) on up to `threads` workers. Each index is
/// handled by exactly one worker, so results stored per index are independent
/// of the thread count.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct DetectionRecord {
  std::string image_id;
  Detection det;
};

/// Inference on one split. Output order follows the dataset order.
inline std::vector<EvalImage> run_inference(const BaaNet& net, const Dataset& ds, Split split,
                                            std::size_t threads = eval_threads()) {
  const auto samples = require_split(ds, split);
  std::vector<EvalImage> images(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    const Sample& s = *samples[i];
    EvalImage im;
    im.id = s.id;
    im.illumination = s.illumination;
    im.gts = s.gts;
    for (const Detection& d : net.detect(s.rgb, s.tir)) im.detections.push_back({d.box, d.score});
    images[i] = std::move(im);
  });
  return images;
}

inline void write_detections_csv(std::ostream& os, const std::vector<EvalImage>& images) {
  os << "image_id,cx,cy,w,h,score\n";
  for (const auto& im : images) {
    for (const auto& d : im.detections) {
      os << im.id << ',' << format_double(d.box.cx) << ',' << format_double(d.box.cy) << ','
         << format_double(d.box.w) << ',' << format_double(d.box.h) << ',' << format_double(d.score) << '\n';
    }
  }
}

inline std::vector<SubsetResult> evaluate(const BaaNet& net, const Dataset& ds, const EvalConfig& cfg,
                                          std::vector<EvalImage>* images_out = nullptr) {
  auto images = run_inference(net, ds, Split::test);
  auto results = subset_eval(images, cfg);
  if (images_out) *images_out = std::move(images);
  return results;
}

struct AblationRun {
  FusionMode mode = FusionMode::baa_gate;
  std::uint64_t seed = 0;
  std::vector<SubsetResult> subsets;
  std::vector<EpochMetrics> epochs;
};

struct AblationSummary {
  FusionMode mode = FusionMode::baa_gate;
  std::string subset;
  double mean = 0.0;
  double spread = 0.0;  // sample standard deviation across seeds
  std::size_t runs = 0;
};

inline const std::vector<FusionMode>& ablation_modes() {
  static const std::vector<FusionMode> modes = {FusionMode::concat_baseline, FusionMode::baa_gate_no_illum,
                                                FusionMode::baa_gate};
  return modes;
}

/// Seeds used by an ablation: master, master + 1, ... (shared by every mode).
inline std::vector<std::uint64_t> ablation_seed_list(const RunConfig& cfg) {
  std::vector<std::uint64_t> seeds;
  for (std::size_t k = 0; k < cfg.ablation_seeds; ++k) seeds.push_back(cfg.seed + k);
  return seeds;
}

using AblationCallback = std::function<void(const AblationRun&)>;

inline std::vector<AblationRun> run_ablation(const RunConfig& cfg, const Dataset& ds,
                                             const AblationCallback& on_run = {}) {
  std::vector<AblationRun> runs;
  for (std::uint64_t seed : ablation_seed_list(cfg)) {
    for (FusionMode mode : ablation_modes()) {
      RunConfig rc = cfg;
      rc.seed = seed;
      rc.model.fusion = mode;
      TrainResult tr = train(rc, ds);
      BaaNet net(rc.model, rc.illum, tr.params);
      AblationRun run{mode, seed, evaluate(net, ds, rc.eval), tr.epochs};
      if (on_run) on_run(run);
      runs.push_back(std::move(run));
    }
  }
  return runs;
}

inline std::vector<AblationSummary> summarize_ablation(const std::vector<AblationRun>& runs) {
  std::vector<AblationSummary> out;
  for (FusionMode mode : ablation_modes()) {
    for (const std::string& subset : subset_names()) {
      std::vector<double> v;
      for (const auto& r : runs) {
        if (r.mode != mode) continue;
        const SubsetResult* s = find_subset(r.subsets, subset);
        if (s && s->result) v.push_back(s->result->mr2);
      }
      if (v.empty()) continue;
      AblationSummary a{mode, subset, 0.0, 0.0, v.size()};
      a.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - a.mean) * (x - a.mean);
        a.spread = std::sqrt(ss / static_cast<double>(v.size() - 1));
      }
      out.push_back(a);
    }
  }
  return out;
}

inline const AblationSummary* find_summary(const std::vector<AblationSummary>& s, FusionMode mode,
                                           const std::string& subset) {
  for (const auto& a : s)
    if (a.mode == mode && a.subset == subset) return &a;
  return nullptr;
}

/// Columns `mode,seed,subset,mr2,spread`: one row per mode, subset and seed,
/// then per mode and subset a `mean` row carrying the cross-seed spread.
inline void write_ablation_csv(std::ostream& os, const std::vector<AblationRun>& runs,
                               const std::vector<AblationSummary>& summary) {
  os << "mode,seed,subset,mr2,spread\n";
  for (const auto& r : runs) {
    for (const auto& s : r.subsets) {
      if (!s.result) continue;
      os << to_string(r.mode) << ',' << r.seed << ',' << s.name << ',' << format_double(s.result->mr2) << ",\n";
    }
  }
  for (const auto& a : summary) {
    os << to_string(a.mode) << ",mean," << a.subset << ',' << format_double(a.mean) << ','
       << format_double(a.spread) << '\n';
  }
}

}  // namespace baanet
