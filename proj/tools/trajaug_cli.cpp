// trajaug: command line front end for demo generation, segmentation,
// augmentation, validation and the ratio harness.
//
// Exit codes: 0 ok, 1 usage/config error, 2 validation failure, 3 stage failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "trajaug/error.hpp"
#include "trajaug/pipeline.hpp"

using namespace trajaug;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kInvalid = 2;
constexpr int kStageFailure = 3;

struct Globals {
  std::uint64_t seed = 0;
  int workers = 1;
  std::string config;
};

void emit(const ojson& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream f(out);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot write " + out);
  f << j.dump(2) << "\n";
}

std::vector<double> split_doubles(const std::string& s, std::size_t expect, const char* flag) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw Error(ErrorCode::ConfigError, std::string(flag) + ": '" + item + "' is not a number");
    }
  }
  if (expect && out.size() != expect)
    throw Error(ErrorCode::ConfigError, std::string(flag) + " expects " + std::to_string(expect) + " values");
  return out;
}

Range as_range(const std::string& s, const char* flag) {
  const auto v = split_doubles(s, 2, flag);
  return {v[0], v[1]};
}

TaskDefinition task_for(const std::string& given, const Dataset& ds) {
  return load_task_definition(given.empty() ? ds.task_schema.task_id : given);
}

TaskCausalSpec spec_for(const std::string& given, const Dataset& ds) {
  return load_causal_spec_or_bundled(given.empty() ? ds.task_schema.task_id : given);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trajectory data augmentation engine"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  Globals g;
  app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
  app.add_option("--workers", g.workers, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--config", g.config, "Pipeline config (JSON) for `run`");

  // gen-demos
  auto* gen = app.add_subcommand("gen-demos", "Roll out the scripted expert");
  std::string gen_task = "stack", gen_spec, gen_out;
  std::size_t gen_count = 10;
  gen->add_option("--task", gen_task, "Bundled task name or task JSON")->capture_default_str();
  gen->add_option("--spec", gen_spec, "Causal spec (defaults to the task's bundled spec)");
  gen->add_option("--count", gen_count)->capture_default_str();
  gen->add_option("--out", gen_out, "Output dataset directory")->required();

  // segment
  auto* seg = app.add_subcommand("segment", "Label causal phases from gripper transitions");
  std::string seg_in, seg_out, seg_spec;
  SegmentationConfig seg_cfg;
  seg->add_option("--in", seg_in)->required();
  seg->add_option("--out", seg_out)->required();
  seg->add_option("--spec", seg_spec);
  seg->add_option("--close-threshold", seg_cfg.close_threshold)->capture_default_str();
  seg->add_option("--debounce", seg_cfg.debounce_steps)->capture_default_str();
  seg->add_option("--min-phase-len", seg_cfg.min_phase_len)->capture_default_str();

  // augment-se3
  auto* se3 = app.add_subcommand("augment-se3", "Retarget source phases to new object poses");
  std::string se3_in, se3_out, se3_spec, se3_task, se3_pos, se3_yaw;
  GenerateConfig se3_cfg;
  se3_cfg.n_target = 10;
  se3->add_option("--in", se3_in)->required();
  se3->add_option("--out", se3_out)->required();
  se3->add_option("--spec", se3_spec);
  se3->add_option("--task", se3_task);
  se3->add_option("--count", se3_cfg.n_target)->capture_default_str();
  se3->add_option("--budget", se3_cfg.budget, "Attempt budget (default 10x count)");
  se3->add_option("--pos-range", se3_pos, "x0,x1,y0,y1 for every entity");
  se3->add_option("--yaw-range", se3_yaw, "a,b radians for every entity");
  se3->add_option("--max-pos-step", se3_cfg.interp.max_pos_step)->capture_default_str();
  se3->add_option("--max-rot-step", se3_cfg.interp.max_rot_step)->capture_default_str();
  std::string se3_report;
  se3->add_option("--report", se3_report, "Write the JSON report here instead of stdout");

  // augment-causal
  auto* cf = app.add_subcommand("augment-causal", "Offline counterfactual augmentation");
  std::string cf_in, cf_out, cf_spec, cf_policy = "any", cf_report;
  CounterfactualConfig cf_cfg;
  cf->add_option("--in", cf_in)->required();
  cf->add_option("--out", cf_out)->required();
  cf->add_option("--spec", cf_spec);
  cf->add_option("--swap-prob", cf_cfg.swap_probability)->capture_default_str();
  cf->add_option("--copies", cf_cfg.copies_per_trajectory)->capture_default_str();
  cf->add_option("--donor-policy", cf_policy)->check(CLI::IsMember({"any", "aligned"}))->capture_default_str();
  cf->add_option("--jitter", cf_cfg.gripper_jitter_range, "Gripper transit jitter range")->capture_default_str();
  cf->add_option("--report", cf_report);

  // augment-obs
  auto* obs = app.add_subcommand("augment-obs", "Proprioceptive noise and schematic image augmentation");
  std::string obs_in, obs_out, obs_task, obs_images, obs_crop, obs_jitter, obs_blur;
  double obs_sigma = 0.01;
  std::vector<int> obs_perm;
  bool obs_force = false;
  int obs_size = 96;
  obs->add_option("--in", obs_in)->required();
  obs->add_option("--out", obs_out)->required();
  obs->add_option("--task", obs_task);
  obs->add_option("--noise-sigma", obs_sigma)->capture_default_str();
  obs->add_option("--images", obs_images, "Write augmented renders of first/last timesteps here");
  obs->add_option("--image-size", obs_size)->capture_default_str();
  obs->add_option("--crop-scale", obs_crop, "a,b area fraction");
  obs->add_option("--jitter", obs_jitter, "b0,b1,c0,c1,s0,s1,h0,h1 brightness/contrast/saturation/hue");
  obs->add_option("--permute", obs_perm, "Channel permutation, e.g. 2 0 1")->expected(3);
  obs->add_option("--blur-sigma", obs_blur, "a,b pixels");
  obs->add_flag("--force", obs_force, "Allow color ops on color-sensitive tasks");

  // validate / replay
  auto* val = app.add_subcommand("validate", "Check invariants, replays and expert consistency");
  std::string val_in, val_task, val_spec, val_out;
  val->add_option("--in", val_in)->required();
  val->add_option("--task", val_task);
  val->add_option("--spec", val_spec);
  val->add_option("--out", val_out, "Report file");

  auto* rep = app.add_subcommand("replay", "Replay stored actions through the simulator");
  std::string rep_in, rep_task, rep_out;
  bool rep_strict = false;
  rep->add_option("--in", rep_in)->required();
  rep->add_option("--task", rep_task);
  rep->add_option("--out", rep_out, "Report file");
  rep->add_flag("--strict", rep_strict, "Exit nonzero when any replay fails");

  // ratio-study
  auto* ratio = app.add_subcommand("ratio-study", "Emit base + r x synthetic datasets");
  std::string ratio_in, ratio_out, ratio_spec, ratio_list = "0,1,2,3,5,10";
  ratio->add_option("--in", ratio_in)->required();
  ratio->add_option("--out", ratio_out)->required();
  ratio->add_option("--spec", ratio_spec);
  ratio->add_option("--ratios", ratio_list)->capture_default_str();

  // stats
  auto* st = app.add_subcommand("stats", "Dataset summary");
  std::string st_in, st_out;
  st->add_option("--in", st_in)->required();
  st->add_option("--out", st_out, "Report file");

  // run
  auto* run = app.add_subcommand("run", "Run a staged pipeline from --config");
  std::string run_out, run_root;
  run->add_option("--out", run_out, "Report file");
  run->add_option("--output-root", run_root, "Override the config's output_root");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) {
      const TaskDefinition task = load_task_definition(gen_task);
      const TaskCausalSpec spec = load_causal_spec_or_bundled(gen_spec.empty() ? task.task_id : gen_spec);
      const Dataset ds = stage_gen(task, spec, gen_count, g.seed, g.workers);
      save_dataset(ds, gen_out);
      emit(stats(ds).to_json(), "");
    } else if (*seg) {
      const Dataset ds = load_dataset(seg_in);
      const Dataset out = stage_segment(ds, spec_for(seg_spec, ds), seg_cfg, g.workers);
      save_dataset(out, seg_out);
      emit(stats(out).to_json(), "");
    } else if (*se3) {
      const Dataset ds = load_dataset(se3_in);
      const TaskDefinition task = task_for(se3_task, ds);
      const TaskCausalSpec spec = spec_for(se3_spec, ds);
      se3_cfg.master_seed = g.seed;
      se3_cfg.workers = g.workers;
      if (!se3_pos.empty() || !se3_yaw.empty()) {
        for (auto sp : task.entities) {
          if (!se3_pos.empty()) {
            const auto v = split_doubles(se3_pos, 4, "--pos-range");
            sp.sampler.box.lo.head<2>() << v[0], v[2];
            sp.sampler.box.hi.head<2>() << v[1], v[3];
          }
          if (!se3_yaw.empty()) {
            const auto [a, b] = as_range(se3_yaw, "--yaw-range");
            sp.sampler.yaw_min = a;
            sp.sampler.yaw_max = b;
          }
          se3_cfg.spawn_overrides.push_back(sp);
        }
      }
      GenerateReport gr;
      const Dataset gen_ds = generate_demos(ds, spec, task, se3_cfg, &gr);
      Dataset out = ds;
      for (const auto& t : gen_ds.trajectories) out.trajectories.push_back(t);
      save_dataset(out, se3_out);
      emit({{"attempts", gr.attempts}, {"accepted", gr.accepted}, {"acceptance_rate", gr.acceptance_rate()}},
           se3_report);
    } else if (*cf) {
      const Dataset ds = load_dataset(cf_in);
      cf_cfg.master_seed = g.seed;
      cf_cfg.workers = g.workers;
      cf_cfg.donor_policy = donor_policy_from_string(cf_policy);
      AugmentReport ar;
      const Dataset out = augment_offline(ds, spec_for(cf_spec, ds), cf_cfg, &ar);
      save_dataset(out, cf_out);
      for (const auto& id : ar.no_donor_copies) std::cerr << "warning: no donor available for " << id << "\n";
      emit({{"sources", ar.sources}, {"copies", ar.copies}, {"swaps", ar.swaps},
            {"no_donor_copies", ar.no_donor_copies}},
           cf_report);
    } else if (*obs) {
      const Dataset ds = load_dataset(obs_in);
      const Dataset out = stage_obs(ds, obs_sigma, g.seed, g.workers);
      save_dataset(out, obs_out);
      if (!obs_images.empty()) {
        const TaskDefinition task = task_for(obs_task, ds);
        VisualAugConfig vc;
        vc.seed = g.seed;
        vc.color_sensitive = task.color_sensitive;
        vc.force = obs_force;
        if (!obs_crop.empty()) vc.crop_scale = as_range(obs_crop, "--crop-scale");
        if (!obs_blur.empty()) vc.blur_sigma = as_range(obs_blur, "--blur-sigma");
        if (!obs_jitter.empty()) {
          const auto v = split_doubles(obs_jitter, 8, "--jitter");
          vc.brightness = {v[0], v[1]};
          vc.contrast = {v[2], v[3]};
          vc.saturation = {v[4], v[5]};
          vc.hue = {v[6], v[7]};
        }
        vc.validate();
        if (!obs_perm.empty() && task.color_sensitive && !obs_force)
          throw Error(ErrorCode::ConfigError, "channel permutation refused: task colors are task-relevant (use --force)");
        fs::create_directories(obs_images);
        for (const auto& t : ds.trajectories) {
          if (t.timesteps.empty()) continue;
          Rng rng(derive_seed(vc.seed, t.traj_id));
          for (std::size_t k : {std::size_t{0}, t.size() - 1}) {
            ImageArray img = rasterize(state_from_timestep(t.timesteps[k], task), task, obs_size, obs_size);
            img = random_resized_crop(img, vc, rng);
            if (!obs_jitter.empty()) img = color_jitter(img, vc, rng);
            if (!obs_perm.empty()) img = channel_permute(img, {obs_perm[0], obs_perm[1], obs_perm[2]});
            img = random_blur(img, vc, rng);
            write_ppm(img, fs::path(obs_images) / (t.traj_id + "_t" + std::to_string(k) + ".ppm"));
          }
        }
      }
      emit(stats(out).to_json(), "");
    } else if (*val) {
      const Dataset ds = load_dataset(val_in);
      const ValidationReport vr = validate_trajectories(ds, task_for(val_task, ds), spec_for(val_spec, ds), g.workers);
      emit(vr.to_json(), val_out);
      return vr.ok() ? kOk : kInvalid;
    } else if (*rep) {
      const Dataset ds = load_dataset(rep_in);
      const ValidationReport vr = replay_all(ds, task_for(rep_task, ds), g.workers);
      emit(vr.to_json(), rep_out);
      return rep_strict && !vr.ok() ? kInvalid : kOk;
    } else if (*ratio) {
      const Dataset ds = load_dataset(ratio_in);
      RatioPlan plan;
      plan.ratios = split_doubles(ratio_list, 0, "--ratios");
      CounterfactualConfig cc;
      cc.master_seed = g.seed;
      cc.workers = g.workers;
      const auto results = ratio_study(ds, plan, spec_for(ratio_spec, ds), cc);
      ojson table = ojson::array();
      for (const auto& r : results) {
        const std::string name = "ratio_" + format_double(r.ratio);
        save_dataset(r.dataset, fs::path(ratio_out) / name);
        table.push_back({{"ratio", r.ratio},
                         {"real_count", r.real_count},
                         {"synthetic_count", r.synthetic_count},
                         {"dataset", name}});
      }
      fs::create_directories(ratio_out);
      std::ofstream(fs::path(ratio_out) / "ratio_manifest.json") << table.dump(2) << "\n";
      emit(table, "");
    } else if (*st) {
      emit(stats(load_dataset(st_in)).to_json(), st_out);
    } else if (*run) {
      if (g.config.empty()) throw Error(ErrorCode::ConfigError, "run needs --config");
      PipelineConfig pc = load_pipeline_config(g.config);
      if (app.get_option("--seed")->count()) pc.master_seed = g.seed;
      if (app.get_option("--workers")->count()) pc.workers = g.workers;
      if (!run_root.empty()) pc.output_root = run_root;
      const PipelineResult res = run_pipeline(pc);
      emit(res.report, run_out);
      return res.valid ? kOk : kInvalid;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.code()) {
      case ErrorCode::ConfigError:
      case ErrorCode::UnknownTask: return kUsage;
      case ErrorCode::InvariantViolation:
      case ErrorCode::SchemaVersionMismatch: return kInvalid;
      default: return kStageFailure;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kStageFailure;
  }
  return kOk;
}
