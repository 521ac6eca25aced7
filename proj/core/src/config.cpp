// SPDX-License-Identifier: Apache-2.0
#include "tfm/config.hpp"

#include <set>

#include "json.hpp"
#include "tfm/error.hpp"

namespace tfm {

using nlohmann::json;

void PipelineConfig::validate() const {
  if (window < 1) throw ConfigError("window must be >= 1");
  if (f_t < 1 || f_t > window) throw ConfigError("need 1 <= f_t <= window");
  if (tole_pts < 1 || tole_pts > f_t) throw ConfigError("need 1 <= tole_pts <= f_t");
  if (n_t < 1) throw ConfigError("n_t must be >= 1");
  point_cloud_range.validate();
  perceptual_range.validate();
  fusion.validate();
  if (!(training.learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (training.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (training.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(training.eval_fraction > 0.0 && training.eval_fraction < 1.0)) {
    throw ConfigError("eval_fraction must lie in (0, 1)");
  }
  if (!(training.tile_occlusion_rate >= 0.0 && training.tile_occlusion_rate <= 1.0)) {
    throw ConfigError("tile_occlusion_rate must lie in [0, 1]");
  }
}

namespace {

json range_json(const RangeSpec& r) { return {r.x_min, r.x_max, r.y_min, r.y_max}; }

RangeSpec parse_range(const json& j, const char* key) {
  if (!j.is_array() || j.size() != 4) {
    throw InputError(std::string(key) + " must be [x_min, x_max, y_min, y_max]");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw InputError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw InputError("unknown config key: " + where + key);
  }
}

}  // namespace

std::string config_to_json(const PipelineConfig& cfg) {
  json j;
  j["window"] = cfg.window;
  j["f_t"] = cfg.f_t;
  j["tole_pts"] = cfg.tole_pts;
  j["n_t"] = cfg.n_t;
  j["point_cloud_range"] = range_json(cfg.point_cloud_range);
  j["perceptual_range"] = range_json(cfg.perceptual_range);
  j["fusion"] = {{"pipe", std::string(pipe_name(cfg.fusion.pipe))},
                 {"depth", cfg.fusion.depth},
                 {"normalize_coords", cfg.fusion.normalize_coords},
                 {"heads", cfg.fusion.heads},
                 {"dim", cfg.fusion.dim}};
  j["paradigm"] = std::string(paradigm_name(cfg.paradigm));
  j["seed"] = cfg.seed;
  j["training"] = {{"learning_rate", cfg.training.learning_rate},
                   {"epochs", cfg.training.epochs},
                   {"grad_clip", cfg.training.grad_clip},
                   {"batch_size", cfg.training.batch_size},
                   {"eval_fraction", cfg.training.eval_fraction},
                   {"tile_occlusion_rate", cfg.training.tile_occlusion_rate},
                   {"evidence_noise", cfg.training.evidence_noise}};
  return j.dump(2) + "\n";
}

PipelineConfig config_from_json(std::string_view text) {
  PipelineConfig cfg;
  try {
    const json j = json::parse(text);
    reject_unknown(j,
                   {"window", "f_t", "tole_pts", "n_t", "point_cloud_range", "perceptual_range",
                    "fusion", "paradigm", "seed", "training"},
                   "");
    cfg.window = j.value("window", cfg.window);
    cfg.f_t = j.value("f_t", cfg.f_t);
    cfg.tole_pts = j.value("tole_pts", cfg.tole_pts);
    cfg.n_t = j.value("n_t", cfg.n_t);
    if (j.contains("point_cloud_range")) cfg.point_cloud_range = parse_range(j["point_cloud_range"], "point_cloud_range");
    if (j.contains("perceptual_range")) cfg.perceptual_range = parse_range(j["perceptual_range"], "perceptual_range");
    if (j.contains("fusion")) {
      const json& f = j["fusion"];
      reject_unknown(f, {"pipe", "depth", "normalize_coords", "heads", "dim"}, "fusion.");
      if (f.contains("pipe")) cfg.fusion.pipe = parse_pipe(f["pipe"].get<std::string>());
      cfg.fusion.depth = f.value("depth", cfg.fusion.depth);
      cfg.fusion.normalize_coords = f.value("normalize_coords", cfg.fusion.normalize_coords);
      cfg.fusion.heads = f.value("heads", cfg.fusion.heads);
      cfg.fusion.dim = f.value("dim", cfg.fusion.dim);
    }
    if (j.contains("paradigm")) cfg.paradigm = parse_paradigm(j["paradigm"].get<std::string>());
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("training")) {
      const json& t = j["training"];
      reject_unknown(t,
                     {"learning_rate", "epochs", "grad_clip", "batch_size", "eval_fraction",
                      "tile_occlusion_rate", "evidence_noise"},
                     "training.");
      cfg.training.learning_rate = t.value("learning_rate", cfg.training.learning_rate);
      cfg.training.epochs = t.value("epochs", cfg.training.epochs);
      cfg.training.grad_clip = t.value("grad_clip", cfg.training.grad_clip);
      cfg.training.batch_size = t.value("batch_size", cfg.training.batch_size);
      cfg.training.eval_fraction = t.value("eval_fraction", cfg.training.eval_fraction);
      cfg.training.tile_occlusion_rate = t.value("tile_occlusion_rate", cfg.training.tile_occlusion_rate);
      cfg.training.evidence_noise = t.value("evidence_noise", cfg.training.evidence_noise);
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("config JSON: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace tfm
