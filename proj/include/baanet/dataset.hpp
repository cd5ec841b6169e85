#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "baanet/serialization.hpp"
#include "baanet/synthdata.hpp"

namespace baanet {

enum class Split { train, test };

inline std::string_view to_string(Split s) { return s == Split::train ? "train" : "test"; }

struct Dataset {
  std::size_t width = 64;
  std::size_t height = 64;
  std::uint64_t seed = 0;
  std::string noise_profile = "default";
  std::vector<Sample> samples;
  std::vector<Split> splits;

  [[nodiscard]] std::vector<const Sample*> subset(Split s) const {
    std::vector<const Sample*> out;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (splits[i] == s) out.push_back(&samples[i]);
    return out;
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    if (a.width != b.width || a.height != b.height || a.seed != b.seed || a.noise_profile != b.noise_profile ||
        a.splits != b.splits || a.samples.size() != b.samples.size()) {
      return false;
    }
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
      const Sample& x = a.samples[i];
      const Sample& y = b.samples[i];
      if (x.id != y.id || !(x.rgb == y.rgb) || !(x.tir == y.tir) || x.gts != y.gts ||
          x.illumination != y.illumination) {
        return false;
      }
    }
    return true;
  }
};

inline std::string sample_id(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return buf;
}

/// Number of training samples for a split ratio (rounded to nearest).
inline std::size_t train_count(std::size_t n, double train_ratio) {
  if (!(train_ratio >= 0.0 && train_ratio <= 1.0)) throw std::invalid_argument("train ratio must lie in [0,1]");
  return static_cast<std::size_t>(std::llround(static_cast<double>(n) * train_ratio));
}

/// Deterministic in-memory dataset. Even ids are day scenes, odd ids night,
/// so both splits are balanced. Pixels are rounded to float precision so the
/// dataset equals what a write/load cycle returns.
inline Dataset generate_dataset(std::size_t n, double train_ratio, const NoiseProfile& noise, std::uint64_t seed,
                                const SceneDistribution& dist = {}) {
  if (n < 1) throw std::invalid_argument("dataset needs at least one sample");
  Dataset ds;
  ds.width = dist.width;
  ds.height = dist.height;
  ds.seed = seed;
  ds.noise_profile = noise.name;
  const std::size_t n_train = train_count(n, train_ratio);
  for (std::size_t i = 0; i < n; ++i) {
    const Illumination regime = i % 2 == 0 ? Illumination::day : Illumination::night;
    Sample s = render(sample_scene(regime, noise, dist, derive_seed(seed, i)));
    s.id = sample_id(i);
    for (double& v : s.rgb.data()) v = static_cast<double>(static_cast<float>(v));
    for (double& v : s.tir.data()) v = static_cast<double>(static_cast<float>(v));
    ds.samples.push_back(std::move(s));
    ds.splits.push_back(i < n_train ? Split::train : Split::test);
  }
  return ds;
}

inline nlohmann::json manifest_json(const Dataset& ds) {
  nlohmann::json j;
  j["format"] = "baanet-dataset";
  j["version"] = 1;
  j["image_width"] = ds.width;
  j["image_height"] = ds.height;
  j["seed"] = ds.seed;
  j["noise_profile"] = ds.noise_profile;
  auto& list = j["samples"] = nlohmann::json::array();
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const Sample& s = ds.samples[i];
    nlohmann::json e;
    e["id"] = s.id;
    e["split"] = to_string(ds.splits[i]);
    e["illumination"] = to_string(s.illumination);
    e["rgb"] = s.id + "_rgb.baat";
    e["tir"] = s.id + "_tir.baat";
    auto& objs = e["objects"] = nlohmann::json::array();
    for (const GroundTruth& g : s.gts) {
      objs.push_back({{"cx", g.box.cx},
                      {"cy", g.box.cy},
                      {"w", g.box.w},
                      {"h", g.box.h},
                      {"height_px", g.height_px},
                      {"occlusion", to_string(g.occlusion)}});
    }
    list.push_back(std::move(e));
  }
  return j;
}

inline void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  for (const Sample& s : ds.samples) {
    save_tensor(dir / (s.id + "_rgb.baat"), s.rgb);
    save_tensor(dir / (s.id + "_tir.baat"), s.tir);
  }
  const std::string text = manifest_json(ds).dump(1) + "\n";
  write_file(dir / "manifest.json", text);
}

/// Generates a dataset and persists it under `dir`.
inline Dataset make_dataset(const std::filesystem::path& dir, std::size_t n, double train_ratio,
                            const NoiseProfile& noise, std::uint64_t seed, const SceneDistribution& dist = {}) {
  Dataset ds = generate_dataset(n, train_ratio, noise, seed, dist);
  write_dataset(dir, ds);
  return ds;
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  const auto bytes = read_file(manifest_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(manifest_path.string() + ": " + e.what());
  }
  Dataset ds;
  try {
    ds.width = j.at("image_width").get<std::size_t>();
    ds.height = j.at("image_height").get<std::size_t>();
    ds.seed = j.at("seed").get<std::uint64_t>();
    ds.noise_profile = j.at("noise_profile").get<std::string>();
    for (const auto& e : j.at("samples")) {
      Sample s;
      s.id = e.at("id").get<std::string>();
      s.illumination = illumination_from_string(e.at("illumination").get<std::string>());
      s.rgb = load_tensor(dir / e.at("rgb").get<std::string>());
      s.tir = load_tensor(dir / e.at("tir").get<std::string>());
      for (const auto& o : e.at("objects")) {
        GroundTruth g;
        g.box = {o.at("cx").get<double>(), o.at("cy").get<double>(), o.at("w").get<double>(), o.at("h").get<double>()};
        g.height_px = o.at("height_px").get<double>();
        g.occlusion = occlusion_from_string(o.at("occlusion").get<std::string>());
        s.gts.push_back(g);
      }
      const std::string split = e.at("split").get<std::string>();
      if (split != "train" && split != "test") throw IoError(manifest_path.string() + ": bad split " + split);
      ds.splits.push_back(split == "train" ? Split::train : Split::test);
      ds.samples.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(manifest_path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw IoError(manifest_path.string() + ": " + e.what());
  }
  return ds;
}

}  // namespace baanet
