// SPDX-License-Identifier: Apache-2.0
// tfm: command line front end for flow extraction, encoding, fusion, scene
// synthesis, the end-to-end pipeline and the probe experiment.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tfm/config.hpp"
#include "tfm/error.hpp"
#include "tfm/experiment.hpp"
#include "tfm/flow.hpp"
#include "tfm/gradient_suite.hpp"
#include "tfm/pipeline.hpp"
#include "tfm/scene.hpp"
#include "tfm/spatial.hpp"
#include "tfm/temporal.hpp"
#include "tfm/tensor_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitConfig = 4;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw tfm::InputError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw tfm::InputError("cannot read " + path.string());
  return in;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw tfm::InputError("cannot write " + path.string());
  out << text;
}

tfm::RangeSpec parse_range_flag(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw tfm::InputError("bad range value '" + part + "'");
    }
  }
  if (v.size() != 4) throw tfm::InputError("--range expects x_min,x_max,y_min,y_max");
  tfm::RangeSpec r{v[0], v[1], v[2], v[3]};
  r.validate();
  return r;
}

bool parse_switch(const std::string& text) {
  if (text == "on" || text == "true" || text == "1") return true;
  if (text == "off" || text == "false" || text == "0") return false;
  throw tfm::InputError("expected on|off, got '" + text + "'");
}

// A named tensor from a file, or the file's only tensor.
tfm::Tensor2D load_matrix(const fs::path& path, const std::string& name) {
  const auto tensors = tfm::load_tensors(path);
  for (const auto& t : tensors) {
    if (t.name == name) return t.as_matrix();
  }
  if (tensors.size() == 1) return tensors.front().as_matrix();
  throw tfm::InputError(path.string() + " has no tensor named " + name);
}

tfm::PipelineConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  return tfm::config_from_json(read_file(path));
}

void emit(bool as_json, const json& j, const std::string& text) {
  if (as_json) {
    std::cout << j.dump(2) << "\n";
  } else if (!text.empty()) {
    std::cout << text;
  }
}

template <typename F>
int guarded(F&& body) {
  try {
    body();
    return kExitOk;
  } catch (const tfm::InputError& e) {
    std::cerr << "tfm: input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const tfm::NumericError& e) {
    std::cerr << "tfm: numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const tfm::ConfigError& e) {
    std::cerr << "tfm: config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const json::exception& e) {
    std::cerr << "tfm: input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "tfm: input error: " << e.what() << "\n";
    return kExitInput;
  }
}

// Model weights: loaded from a file when given, otherwise initialised from
// the seed.
tfm::ParamStore model_params(const tfm::TfmModel& model, const std::string& weights) {
  tfm::ParamStore store = model.make_params();
  if (!weights.empty()) tfm::load_params_into(weights, store);
  return store;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Traffic-flow-aware lane feature fusion"};
  app.require_subcommand(1);
  bool as_json = false;
  int status = kExitOk;

  // extract
  auto* extract = app.add_subcommand("extract", "Warp a trajectory log into the current ego frame");
  std::string traj_path, pose_path, out_path, range_text;
  std::optional<std::int64_t> frame;
  int window = 20;
  extract->add_option("--traj", traj_path, "Trajectory log (JSON lines)")->required();
  extract->add_option("--poses", pose_path, "Ego pose log (JSON lines)")->required();
  extract->add_option("--frame", frame, "Current frame (default: latest pose)");
  extract->add_option("--window", window, "Historical frames")->capture_default_str();
  extract->add_option("--range", range_text, "Clip range x_min,x_max,y_min,y_max");
  extract->add_option("--out", out_path, "Output flow JSON (default: stdout)");
  extract->add_flag("--json", as_json, "Print a machine-readable summary");
  extract->callback([&] {
    status = guarded([&] {
      if (window < 1) throw tfm::ConfigError("--window must be >= 1");
      auto traj = open_input(traj_path);
      auto poses_in = open_input(pose_path);
      std::size_t unknown = 0;
      const auto obs = tfm::read_trajectory_log(traj, &unknown);
      const auto poses = tfm::read_pose_log(poses_in);
      if (poses.empty()) throw tfm::InputError("pose log is empty");
      const std::int64_t current = frame.value_or(poses.rbegin()->first);
      const tfm::RangeSpec range = range_text.empty() ? tfm::RangeSpec{} : parse_range_flag(range_text);
      tfm::FlowFrameSet flow = tfm::clip_to_range(tfm::build_flow(obs, poses, current, window), range);
      flow.stats.unknown_category = unknown;
      const std::string text = tfm::flow_to_json(flow);
      if (!out_path.empty()) write_file(out_path, text);
      json summary{{"current_frame", current},
                   {"window", window},
                   {"instances", flow.instances.size()},
                   {"observations", flow.stats.parsed},
                   {"out_of_window", flow.stats.out_of_window},
                   {"unknown_category", flow.stats.unknown_category}};
      if (!out_path.empty()) summary["out"] = out_path;
      if (as_json) {
        emit(true, summary, "");
      } else if (out_path.empty()) {
        std::cout << text;
      } else {
        std::cout << "extracted " << flow.instances.size() << " instances at frame " << current << " -> "
                  << out_path << "\n";
      }
    });
  });

  // encode-temporal
  auto* encode = app.add_subcommand("encode-temporal", "Filter, select and encode flow instances");
  std::string flow_path, weights_path, mask_out, norm_text = "on", enc_range;
  int tole_pts = 5, f_t = 20;
  std::size_t n_t = 30, dim = 16, heads = 2;
  std::uint64_t seed = 0;
  encode->add_option("--flow", flow_path, "Flow JSON from extract")->required();
  encode->add_option("--tole-pts", tole_pts, "Minimum valid frames")->capture_default_str();
  encode->add_option("--n-t", n_t, "Instance cap")->capture_default_str();
  encode->add_option("--f-t", f_t, "Frames per instance")->capture_default_str();
  encode->add_option("--norm", norm_text, "Normalize coordinates (on|off)")->capture_default_str();
  encode->add_option("--range", enc_range, "Perceptual range x_min,x_max,y_min,y_max");
  encode->add_option("--dim", dim, "Feature width")->capture_default_str();
  encode->add_option("--heads", heads, "Attention heads")->capture_default_str();
  encode->add_option("--weights", weights_path, "Parameter file (default: seeded init)");
  encode->add_option("--seed", seed, "Initialisation seed")->capture_default_str();
  encode->add_option("--out", out_path, "Output tensor file")->required();
  encode->add_option("--mask-out", mask_out, "Write flow validity for the spatial mask (JSON)");
  encode->add_flag("--json", as_json, "Print a machine-readable summary");
  encode->callback([&] {
    status = guarded([&] {
      tfm::PipelineConfig cfg;
      cfg.tole_pts = tole_pts;
      cfg.f_t = f_t;
      cfg.n_t = n_t;
      cfg.fusion.dim = dim;
      cfg.fusion.heads = heads;
      cfg.fusion.normalize_coords = parse_switch(norm_text);
      cfg.seed = seed;
      if (!enc_range.empty()) cfg.perceptual_range = parse_range_flag(enc_range);
      const tfm::FlowFrameSet flow = tfm::flow_from_json(read_file(flow_path));
      cfg.window = std::max(flow.window, f_t);
      const tfm::TfmModel model(cfg);
      const tfm::ParamStore store = model_params(model, weights_path);
      const tfm::PreparedFlow prepared = tfm::prepare_flow(cfg, flow);
      const tfm::TemporalOutput out = model.temporal().forward(store, prepared.selection.batch,
                                                               prepared.selection.mask);
      tfm::save_tensors(out_path, {tfm::NamedTensor::from_matrix("tf_feat", out.features)});
      json validity = json::array();
      for (bool v : out.validity) validity.push_back(v);
      if (!mask_out.empty()) write_file(mask_out, json{{"flow_validity", validity}}.dump(2) + "\n");
      const json summary{{"candidates", prepared.candidates},
                         {"real_instances", prepared.selection.batch.real_count()},
                         {"rows", out.features.rows()},
                         {"dim", out.features.cols()},
                         {"flow_validity", validity},
                         {"out", out_path}};
      emit(as_json, summary,
           "encoded " + std::to_string(prepared.selection.batch.real_count()) + " of " +
               std::to_string(prepared.candidates) + " candidates -> " + out_path + "\n");
    });
  });

  // fuse
  auto* fuse_cmd = app.add_subcommand("fuse", "Fuse lane features with encoded flow");
  std::string lane_path, tf_path, mask_path, pipe_text = "lt-ll", paradigm_text = "point";
  int depth = 1;
  fuse_cmd->add_option("--lane", lane_path, "Lane feature tensor file")->required();
  fuse_cmd->add_option("--flow", tf_path, "Encoded flow tensor file")->required();
  fuse_cmd->add_option("--mask", mask_path, "Spatial mask JSON (full grid or flow validity)");
  fuse_cmd->add_option("--pipe", pipe_text, "Fusion pipe (lt-ll|all)")->capture_default_str();
  fuse_cmd->add_option("--depth", depth, "Layers per module (1-3)")->capture_default_str();
  fuse_cmd->add_option("--paradigm", paradigm_text, "Query paradigm (instance|point)")->capture_default_str();
  fuse_cmd->add_option("--heads", heads, "Attention heads")->capture_default_str();
  fuse_cmd->add_option("--weights", weights_path, "Parameter file (default: seeded init)");
  fuse_cmd->add_option("--seed", seed, "Initialisation seed")->capture_default_str();
  fuse_cmd->add_option("--out", out_path, "Output tensor file")->required();
  fuse_cmd->add_flag("--json", as_json, "Print a machine-readable summary");
  fuse_cmd->callback([&] {
    status = guarded([&] {
      const tfm::Tensor2D lanes = load_matrix(lane_path, "lane_feat");
      const tfm::Tensor2D flows = load_matrix(tf_path, "tf_feat");
      if (lanes.cols() != flows.cols()) throw tfm::InputError("lane and flow feature widths differ");
      tfm::PipelineConfig cfg;
      cfg.fusion.dim = lanes.cols();
      cfg.fusion.heads = heads;
      cfg.fusion.depth = depth;
      cfg.fusion.pipe = tfm::parse_pipe(pipe_text);
      cfg.paradigm = tfm::parse_paradigm(paradigm_text);
      cfg.seed = seed;
      const tfm::TfmModel model(cfg);
      const tfm::ParamStore store = model_params(model, weights_path);
      tfm::SpatialMask mask = mask_path.empty()
                                  ? tfm::build_spatial_mask(lanes.rows(), std::vector<bool>(flows.rows(), true))
                                  : tfm::spatial_mask_from_json(read_file(mask_path), lanes.rows());
      if (mask.lanes != lanes.rows() || mask.flows != flows.rows()) {
        throw tfm::InputError("mask shape does not match lane/flow rows");
      }
      const tfm::FusionOutput fused = model.fusion().forward(store, lanes, flows, mask);
      const tfm::FeatureMatrix out = model.composer().forward(store, fused.stages[3], lanes, cfg.paradigm);
      tfm::save_tensors(out_path, {tfm::NamedTensor::from_matrix("lane_feat_prime", out)});
      const json summary{{"lanes", lanes.rows()},
                         {"flows", flows.rows()},
                         {"pipe", tfm::pipe_name(cfg.fusion.pipe)},
                         {"paradigm", tfm::paradigm_name(cfg.paradigm)},
                         {"depth", depth},
                         {"out", out_path}};
      emit(as_json, summary, "fused " + std::to_string(lanes.rows()) + " lane tokens -> " + out_path + "\n");
    });
  });

  // synth
  auto* synth = app.add_subcommand("synth", "Generate synthetic scenes");
  std::string spec_path, out_dir;
  std::size_t count = 1;
  bool occlusion_heavy = false;
  synth->add_option("--spec", spec_path, "Scene spec JSON (otherwise random scenes)");
  synth->add_option("--count", count, "Number of random scenes")->capture_default_str();
  synth->add_option("--seed", seed, "Scene seed")->capture_default_str();
  synth->add_flag("--occlusion-heavy", occlusion_heavy, "High occlusion and frame-drop rates");
  synth->add_option("--dim", dim, "Lane feature width")->capture_default_str();
  synth->add_option("--out-dir", out_dir, "Output directory")->required();
  synth->add_flag("--json", as_json, "Print a machine-readable summary");
  synth->callback([&] {
    status = guarded([&] {
      const tfm::TrainingConfig training;
      json dirs = json::array();
      if (!spec_path.empty()) {
        const tfm::SceneSpec spec = tfm::scene_spec_from_json(read_file(spec_path));
        tfm::write_scene(out_dir, spec, training, dim);
        dirs.push_back(out_dir);
      } else {
        for (const auto& d : tfm::build_dataset(out_dir, count, seed, occlusion_heavy, training, dim)) {
          dirs.push_back(d.string());
        }
      }
      emit(as_json, json{{"scenes", dirs}}, "wrote " + std::to_string(dirs.size()) + " scene(s) to " + out_dir + "\n");
    });
  });

  // run
  auto* run = app.add_subcommand("run", "Run the full pipeline on one scene");
  std::string config_path, diag_path, weights_out;
  std::optional<std::uint64_t> run_seed;
  bool timings = false;
  run->add_option("--config", config_path, "Pipeline config JSON");
  run->add_option("--traj", traj_path, "Trajectory log (JSON lines)")->required();
  run->add_option("--poses", pose_path, "Ego pose log (JSON lines)")->required();
  run->add_option("--lane", lane_path, "Lane feature tensor file")->required();
  run->add_option("--frame", frame, "Current frame (default: latest pose)");
  run->add_option("--weights", weights_path, "Parameter file (default: seeded init)");
  run->add_option("--seed", run_seed, "Override the config seed");
  run->add_option("--out", out_path, "Output tensor file")->required();
  run->add_option("--diagnostics", diag_path, "Write diagnostics JSON");
  run->add_option("--save-weights", weights_out, "Write the parameters used");
  run->add_flag("--timings", timings, "Include stage timings in the printed summary");
  run->add_flag("--json", as_json, "Print diagnostics as JSON");
  run->callback([&] {
    status = guarded([&] {
      tfm::PipelineConfig cfg = load_config(config_path);
      if (run_seed) cfg.seed = *run_seed;
      const tfm::TfmModel model(cfg);
      const tfm::ParamStore store = model_params(model, weights_path);
      const tfm::Tensor2D lanes = load_matrix(lane_path, "lane_feat");
      if (lanes.cols() != cfg.fusion.dim) {
        throw tfm::InputError("lane feature width " + std::to_string(lanes.cols()) + " does not match dim " +
                              std::to_string(cfg.fusion.dim));
      }
      auto traj = open_input(traj_path);
      auto poses = open_input(pose_path);
      const tfm::PipelineResult result = tfm::run_pipeline(cfg, store, traj, poses, lanes, frame);
      tfm::save_tensors(out_path, {tfm::NamedTensor::from_matrix("lane_feat_prime", result.lanes_prime)});
      if (!diag_path.empty()) write_file(diag_path, tfm::diagnostics_to_json(result.diagnostics, false));
      if (!weights_out.empty()) tfm::save_params(weights_out, store);
      const tfm::Diagnostics& d = result.diagnostics;
      if (as_json) {
        std::cout << tfm::diagnostics_to_json(d, timings);
      } else {
        std::printf("frame %lld: %zu observations, %zu candidates, %zu real instances -> %s\n",
                    static_cast<long long>(d.current_frame), d.observations, d.candidates, d.real_instances,
                    out_path.c_str());
        if (timings) {
          for (const auto& [stage, ms] : d.timings_ms) std::printf("  %-20s %8.3f ms\n", stage.c_str(), ms);
        }
      }
    });
  });

  // experiment
  auto* experiment = app.add_subcommand("experiment", "Train and evaluate the occupancy probe");
  std::string dataset_dir;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::size_t generate = 0;
  std::uint64_t data_seed = 0;
  bool infer_without = false;
  experiment->add_option("--config", config_path, "Pipeline config JSON");
  experiment->add_option("--dataset", dataset_dir, "Directory of scene_* folders")->required();
  experiment->add_option("--generate", generate, "Generate this many occlusion-heavy scenes first");
  experiment->add_option("--data-seed", data_seed, "Seed for --generate")->capture_default_str();
  experiment->add_option("--seeds", seeds, "Training seeds")->delimiter(',')->capture_default_str();
  experiment->add_flag("--infer-without-flow", infer_without, "Also evaluate the flow-trained probe without flow");
  experiment->add_option("--out", out_path, "Write the report JSON");
  experiment->add_flag("--json", as_json, "Print the report as JSON");
  experiment->callback([&] {
    status = guarded([&] {
      const tfm::PipelineConfig cfg = load_config(config_path);
      if (generate > 0) tfm::build_dataset(dataset_dir, generate, data_seed, true, cfg.training, cfg.fusion.dim);
      const tfm::ExperimentReport report = tfm::run_experiment(cfg, dataset_dir, seeds, infer_without);
      if (!out_path.empty()) write_file(out_path, tfm::report_to_json(report, false));
      if (as_json) {
        std::cout << tfm::report_to_json(report, true);
        return;
      }
      std::printf("%zu train / %zu eval scenes, %.1f s\n", report.train_scenes, report.eval_scenes, report.seconds);
      for (const auto& r : report.seeds) {
        std::printf("seed %llu: with flow %.5f  without flow %.5f", static_cast<unsigned long long>(r.seed),
                    r.with_flow, r.without_flow);
        if (infer_without) std::printf("  train-with/infer-without %.5f", r.train_with_infer_without);
        std::printf("\n");
      }
      std::printf("median: with flow %.5f  without flow %.5f", report.median_with_flow, report.median_without_flow);
      if (infer_without) std::printf("  train-with/infer-without %.5f", report.median_train_with_infer_without);
      std::printf("\n");
    });
  });

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  double h = 1e-3, tolerance = 1e-4;
  gradcheck->add_option("--seed", seed, "Seed for inputs and weights")->capture_default_str();
  gradcheck->add_option("--step", h, "Finite-difference step")->capture_default_str();
  gradcheck->add_option("--tolerance", tolerance, "Maximum relative error")->capture_default_str();
  gradcheck->add_flag("--json", as_json, "Print results as JSON");
  gradcheck->callback([&] {
    status = guarded([&] {
      const auto reports = tfm::run_gradient_suite(seed, h);
      json cases = json::array();
      bool ok = true;
      std::ostringstream text;
      for (const auto& r : reports) {
        const bool pass = r.result.max_relative_error < tolerance;
        ok = ok && pass;
        cases.push_back({{"name", r.name},
                         {"coordinates", r.coordinates},
                         {"max_relative_error", r.result.max_relative_error},
                         {"pass", pass}});
        char line[160];
        std::snprintf(line, sizeof line, "%-24s %5zu coords  max rel err %.3e  %s\n", r.name.c_str(), r.coordinates,
                      r.result.max_relative_error, pass ? "ok" : "FAIL");
        text << line;
      }
      emit(as_json, json{{"tolerance", tolerance}, {"h", h}, {"pass", ok}, {"cases", cases}}, text.str());
      if (!ok) throw tfm::NumericError("gradient check exceeded tolerance");
    });
  });

  // config
  auto* config = app.add_subcommand("config", "Print or validate a pipeline config");
  bool defaults = false;
  config->add_flag("--default", defaults, "Print the default config");
  config->add_option("--validate", config_path, "Parse, validate and print a config in canonical form");
  config->add_flag("--json", as_json, "Same output; configs are always JSON");
  config->callback([&] {
    status = guarded([&] {
      if (!defaults && config_path.empty()) throw tfm::InputError("config: pass --default or --validate <path>");
      std::cout << tfm::config_to_json(defaults ? tfm::PipelineConfig{} : load_config(config_path));
    });
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }
  return status;
}
