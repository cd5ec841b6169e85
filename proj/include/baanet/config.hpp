#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <set>
#include <vector>

#include "json.hpp"

#include "baanet/evaluator.hpp"
#include "baanet/illumination.hpp"
#include "baanet/losses.hpp"
#include "baanet/model.hpp"
#include "baanet/serialization.hpp"

namespace baanet {

/// Raised for unusable configuration values or unknown keys.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  std::size_t epochs = 8;
  std::size_t batch_size = 8;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  std::string dataset_path;
  std::string output_dir = ".";
  std::size_t ablation_seeds = 3;
  ModelConfig model;
  IllumConfig illum;
  LossConfig loss;
  EvalConfig eval;

  void validate() const {
    if (epochs < 1) throw ConfigError("train.epochs must be at least 1");
    if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
    if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
    if (ablation_seeds < 1) throw ConfigError("ablate.seeds must be at least 1");
    try {
      model.validate();
      illum.validate();
      loss.validate();
      eval.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
};

namespace detail {

inline std::string occlusion_list(const std::set<OcclusionTag>& tags) {
  std::string out;
  for (OcclusionTag t : tags) {
    if (!out.empty()) out += ',';
    out += to_string(t);
  }
  return out;
}

inline std::set<OcclusionTag> parse_occlusion_list(const std::string& s) {
  std::set<OcclusionTag> tags;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t end = std::min(s.find(',', start), s.size());
    if (end > start) tags.insert(occlusion_from_string(s.substr(start, end - start)));
    start = end + 1;
  }
  return tags;
}

}  // namespace detail

/// Flat dotted-key representation, e.g. {"train.epochs": 8, "model.fusion": "baa_gate"}.
inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["train.epochs"] = c.epochs;
  j["train.batch_size"] = c.batch_size;
  j["train.learning_rate"] = c.learning_rate;
  j["seed"] = c.seed;
  j["data.path"] = c.dataset_path;
  j["out"] = c.output_dir;
  j["ablate.seeds"] = c.ablation_seeds;
  j["model.fusion"] = to_string(c.model.fusion);
  j["model.stage_channels"] = c.model.stage_channels;
  j["model.anchor_heights"] = c.model.anchor_heights;
  j["model.anchor_ratio"] = c.model.anchor_ratio;
  j["model.stage1_neg_iou"] = c.model.stage1_neg_iou;
  j["model.stage1_pos_iou"] = c.model.stage1_pos_iou;
  j["model.stage2_neg_iou"] = c.model.stage2_neg_iou;
  j["model.stage2_pos_iou"] = c.model.stage2_pos_iou;
  j["model.nms_iou"] = c.model.nms_iou;
  j["model.score_floor"] = c.model.score_floor;
  j["model.max_detections"] = c.model.max_detections;
  j["model.gate_reduction"] = c.model.gate_reduction;
  j["model.cls_prior"] = c.model.cls_prior;
  j["illum.k1"] = c.illum.k1;
  j["illum.k2"] = c.illum.k2;
  j["illum.resize"] = c.illum.resize_hw;
  j["loss.alpha"] = c.loss.alpha;
  j["loss.gamma"] = c.loss.gamma;
  j["loss.weight_illum"] = c.loss.weight_illum;
  j["loss.weight_cls1"] = c.loss.weight_cls1;
  j["loss.weight_cls2"] = c.loss.weight_cls2;
  j["loss.weight_reg1"] = c.loss.weight_reg1;
  j["loss.weight_reg2"] = c.loss.weight_reg2;
  j["eval.iou_threshold"] = c.eval.iou_threshold;
  j["eval.fppi_min"] = c.eval.fppi_min;
  j["eval.fppi_max"] = c.eval.fppi_max;
  j["eval.n_points"] = c.eval.n_points;
  j["eval.reasonable_min_height"] = c.eval.reasonable_min_height;
  j["eval.allowed_occlusion"] = detail::occlusion_list(c.eval.allowed_occlusion);
  return j;
}

/// Applies every key of a flat object on top of `base`. Unknown keys are errors.
inline RunConfig apply_json(RunConfig c, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object with flat dotted keys");
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "train.epochs") c.epochs = v.get<std::size_t>();
      else if (key == "train.batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "train.learning_rate") c.learning_rate = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "data.path") c.dataset_path = v.get<std::string>();
      else if (key == "out") c.output_dir = v.get<std::string>();
      else if (key == "ablate.seeds") c.ablation_seeds = v.get<std::size_t>();
      else if (key == "model.fusion") c.model.fusion = fusion_from_string(v.get<std::string>());
      else if (key == "model.stage_channels") c.model.stage_channels = v.get<std::vector<std::size_t>>();
      else if (key == "model.anchor_heights") c.model.anchor_heights = v.get<std::vector<double>>();
      else if (key == "model.anchor_ratio") c.model.anchor_ratio = v.get<double>();
      else if (key == "model.stage1_neg_iou") c.model.stage1_neg_iou = v.get<double>();
      else if (key == "model.stage1_pos_iou") c.model.stage1_pos_iou = v.get<double>();
      else if (key == "model.stage2_neg_iou") c.model.stage2_neg_iou = v.get<double>();
      else if (key == "model.stage2_pos_iou") c.model.stage2_pos_iou = v.get<double>();
      else if (key == "model.nms_iou") c.model.nms_iou = v.get<double>();
      else if (key == "model.score_floor") c.model.score_floor = v.get<double>();
      else if (key == "model.max_detections") c.model.max_detections = v.get<std::size_t>();
      else if (key == "model.gate_reduction") c.model.gate_reduction = v.get<std::size_t>();
      else if (key == "model.cls_prior") c.model.cls_prior = v.get<double>();
      else if (key == "illum.k1") c.illum.k1 = v.get<double>();
      else if (key == "illum.k2") c.illum.k2 = v.get<double>();
      else if (key == "illum.resize") c.illum.resize_hw = v.get<std::size_t>();
      else if (key == "loss.alpha") c.loss.alpha = v.get<double>();
      else if (key == "loss.gamma") c.loss.gamma = v.get<double>();
      else if (key == "loss.weight_illum") c.loss.weight_illum = v.get<double>();
      else if (key == "loss.weight_cls1") c.loss.weight_cls1 = v.get<double>();
      else if (key == "loss.weight_cls2") c.loss.weight_cls2 = v.get<double>();
      else if (key == "loss.weight_reg1") c.loss.weight_reg1 = v.get<double>();
      else if (key == "loss.weight_reg2") c.loss.weight_reg2 = v.get<double>();
      else if (key == "eval.iou_threshold") c.eval.iou_threshold = v.get<double>();
      else if (key == "eval.fppi_min") c.eval.fppi_min = v.get<double>();
      else if (key == "eval.fppi_max") c.eval.fppi_max = v.get<double>();
      else if (key == "eval.n_points") c.eval.n_points = v.get<std::size_t>();
      else if (key == "eval.reasonable_min_height") c.eval.reasonable_min_height = v.get<double>();
      else if (key == "eval.allowed_occlusion") c.eval.allowed_occlusion = detail::parse_occlusion_list(v.get<std::string>());
      else throw ConfigError("unknown config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
  return c;
}

inline RunConfig parse_config_text(const std::string& text, RunConfig base = {}) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return apply_json(std::move(base), j);
}

inline RunConfig load_config(const std::filesystem::path& path, RunConfig base = {}) {
  const auto bytes = read_file(path);
  try {
    return parse_config_text(std::string(bytes.begin(), bytes.end()), std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace baanet
