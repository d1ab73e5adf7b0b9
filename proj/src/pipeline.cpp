#include "trajaug/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "trajaug/error.hpp"
#include "trajaug/parallel.hpp"

namespace trajaug {

namespace {

constexpr double kStateTol = 1e-9;

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool poses_close(const Pose& a, const Pose& b, double tol) {
  const auto [dp, da] = pose_error(a, b);
  return dp <= tol && da <= tol;
}

/// First mismatch between a recorded and a simulated state.
std::optional<std::string> state_mismatch(const Timestep& rec, const SimState& sim) {
  for (const auto& e : sim.entities) {
    const EntityState* r = rec.find_entity(e.entity_id);
    if (!r) return "missing entity " + e.entity_id;
    if (!poses_close(r->pose, e.pose, kStateTol)) return "entity " + e.entity_id + " drifted";
    for (const auto& x : e.extra) {
      const auto v = r->extra_value(x.name);
      if (!v || std::abs(*v - x.value) > kStateTol) return "entity " + e.entity_id + " " + x.name + " drifted";
    }
  }
  const RobotState* r = rec.find_robot(sim.gripper.agent_id);
  if (!r) return "missing robot " + sim.gripper.agent_id;
  if (!poses_close(r->eef_pose, sim.gripper.eef_pose, kStateTol)) return "eef pose drifted";
  if (std::abs(r->gripper_aperture - sim.gripper.gripper_aperture) > kStateTol) return "aperture drifted";
  return std::nullopt;
}

std::optional<std::string> replay_fidelity(const Trajectory& traj, const TaskDefinition& task) {
  if (traj.timesteps.empty()) return "empty trajectory";
  SimState s = state_from_timestep(traj.timesteps.front(), task);
  for (std::size_t i = 0; i < traj.size(); ++i) {
    if (auto m = state_mismatch(traj.timesteps[i], s)) return "timestep " + std::to_string(i) + ": " + *m;
    const Action* a = traj.timesteps[i].find_action(task.agent_id);
    if (!a) return "timestep " + std::to_string(i) + ": no action";
    s = step(task, s, *a);
  }
  const bool ok = check_success(s, task);
  if (ok != traj.success)
    return std::string("replay ") + (ok ? "succeeds" : "fails") + " but recorded success is " +
           (traj.success ? "true" : "false");
  return std::nullopt;
}

bool replayable(const Trajectory& t) {
  return t.provenance == Provenance::human_source || t.provenance == Provenance::se3_synthetic;
}

ojson box_json(const Box& b) {
  return {{"lo", {b.lo.x(), b.lo.y(), b.lo.z()}}, {"hi", {b.hi.x(), b.hi.y(), b.hi.z()}}};
}

std::string stage_dir_name(std::size_t i, const std::string& name) {
  std::string n = std::to_string(i);
  if (n.size() < 2) n.insert(0, 2 - n.size(), '0');
  return n + "_" + name;
}

void write_dataset_fresh(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::remove_all(dir);
  save_dataset(ds, dir);
}

template <typename T>
T param(const ojson& j, const char* key, T fallback) {
  const auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const ojson::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("bad value for '") + key + "': " + e.what());
  }
}

int stage_rank(const std::string& name) {
  if (name == "gen") return 0;
  if (name == "segment") return 1;
  if (name == "se3" || name == "causal" || name == "obs") return 2;
  if (name == "validate") return 3;
  return -1;
}

}  // namespace

TaskCausalSpec load_causal_spec_or_bundled(const std::string& path_or_name) {
  if (path_or_name == "stack" || path_or_name == "coffee") return bundled_causal_spec(path_or_name);
  if (!std::filesystem::exists(path_or_name))
    throw Error(ErrorCode::UnknownTask, "'" + path_or_name + "' is neither a bundled spec nor a file");
  return load_causal_spec(path_or_name);
}

// -- validation ---------------------------------------------------------------

ojson ValidationReport::to_json() const {
  ojson j;
  j["checked"] = checked;
  j["skipped"] = skipped;
  j["failed"] = failures.size();
  j["failures"] = ojson::array();
  for (const auto& f : failures) j["failures"].push_back({{"traj_id", f.traj_id}, {"reason", f.reason}});
  return j;
}

std::optional<std::string> expert_consistency(const Trajectory& traj, const TaskDefinition& task,
                                              const TaskCausalSpec& spec, double tol) {
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const Timestep& ts = traj.timesteps[i];
    if (ts.interp) continue;
    if (!ts.phase) return "timestep " + std::to_string(i) + " is unlabeled";
    if (*ts.phase < 0 || static_cast<std::size_t>(*ts.phase) >= spec.phases.size())
      return "timestep " + std::to_string(i) + " has unknown phase";
    const Action* stored = ts.find_action(task.agent_id);
    if (!stored) return "timestep " + std::to_string(i) + " has no action";
    const SimState s = state_from_timestep(ts, task);
    const Action a = expert_action(s, task, spec.phases[static_cast<std::size_t>(*ts.phase)]);
    const auto [dp, da] = pose_error(a.target_eef_pose, stored->target_eef_pose);
    if (dp > tol || da > tol)
      return "timestep " + std::to_string(i) + ": expert disagrees (" + format_double(dp) + " m, " +
             format_double(da) + " rad)";
  }
  return std::nullopt;
}

ValidationReport validate_trajectories(const Dataset& ds, const TaskDefinition& task, const TaskCausalSpec& spec,
                                       int workers) {
  ValidationReport rep;
  rep.checked = ds.trajectories.size();
  try {
    validate_dataset(ds);
  } catch (const Error& e) {
    rep.failures.push_back({"<dataset>", e.what()});
    return rep;
  }
  std::vector<std::optional<std::string>> result(ds.trajectories.size());
  parallel_for(ds.trajectories.size(), workers, [&](std::size_t i) {
    const Trajectory& t = ds.trajectories[i];
    try {
      switch (t.provenance) {
        case Provenance::human_source:
        case Provenance::se3_synthetic: result[i] = replay_fidelity(t, task); break;
        case Provenance::counterfactual_synthetic: result[i] = expert_consistency(t, task, spec); break;
        case Provenance::mixed: break;
      }
    } catch (const Error& e) {
      result[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < result.size(); ++i)
    if (result[i]) rep.failures.push_back({ds.trajectories[i].traj_id, *result[i]});
  return rep;
}

ValidationReport replay_all(const Dataset& ds, const TaskDefinition& task, int workers) {
  ValidationReport rep;
  for (const auto& t : ds.trajectories) (replayable(t) ? rep.checked : rep.skipped)++;
  std::vector<std::optional<std::string>> result(ds.trajectories.size());
  parallel_for(ds.trajectories.size(), workers, [&](std::size_t i) {
    if (!replayable(ds.trajectories[i])) return;
    try {
      if (!replay(ds.trajectories[i], task).success) result[i] = "replay did not reach success";
    } catch (const Error& e) {
      result[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < result.size(); ++i)
    if (result[i]) rep.failures.push_back({ds.trajectories[i].traj_id, *result[i]});
  return rep;
}

// -- stats --------------------------------------------------------------------

DatasetStats stats(const Dataset& ds) {
  DatasetStats s;
  for (const auto& t : ds.trajectories) {
    const std::string prov(to_string(t.provenance));
    ++s.trajectories_by_provenance[prov];
    s.timesteps_by_provenance[prov] += t.size();
    std::map<int, std::size_t> lengths;
    for (const auto& ts : t.timesteps) {
      if (ts.phase) ++lengths[*ts.phase];
      for (const auto& e : ts.entities) {
        auto [it, fresh] = s.entity_bounds.try_emplace(e.entity_id, Box{e.pose.position, e.pose.position});
        if (!fresh) {
          it->second.lo = it->second.lo.cwiseMin(e.pose.position);
          it->second.hi = it->second.hi.cwiseMax(e.pose.position);
        }
      }
    }
    for (const auto& [phase, len] : lengths) ++s.phase_lengths[phase][len];
  }
  return s;
}

ojson DatasetStats::to_json() const {
  ojson j;
  std::size_t trajs = 0, steps = 0;
  for (const auto& [k, v] : trajectories_by_provenance) trajs += v;
  for (const auto& [k, v] : timesteps_by_provenance) steps += v;
  j["trajectories"] = trajs;
  j["timesteps"] = steps;
  j["trajectories_by_provenance"] = ojson::object();
  for (const auto& [k, v] : trajectories_by_provenance) j["trajectories_by_provenance"][k] = v;
  j["timesteps_by_provenance"] = ojson::object();
  for (const auto& [k, v] : timesteps_by_provenance) j["timesteps_by_provenance"][k] = v;
  j["phase_lengths"] = ojson::object();
  for (const auto& [phase, hist] : phase_lengths) {
    ojson h = ojson::object();
    for (const auto& [len, n] : hist) h[std::to_string(len)] = n;
    j["phase_lengths"][std::to_string(phase)] = h;
  }
  j["entity_bounds"] = ojson::object();
  for (const auto& [id, b] : entity_bounds) j["entity_bounds"][id] = box_json(b);
  return j;
}

// -- ratio harness --------------------------------------------------------------

void RatioPlan::validate() const {
  for (double r : ratios)
    if (!(r >= 0.0) || !std::isfinite(r)) throw Error(ErrorCode::ConfigError, "ratios must be finite and >= 0");
}

std::vector<RatioResult> ratio_study(const Dataset& base, const RatioPlan& plan, const TaskCausalSpec& spec,
                                     const CounterfactualConfig& cfg) {
  plan.validate();
  std::vector<const Trajectory*> real;
  for (const auto& t : base.trajectories)
    if (t.provenance != Provenance::counterfactual_synthetic) real.push_back(&t);
  const std::size_t n = real.size();

  std::vector<RatioResult> out;
  for (double r : plan.ratios) {
    const auto want = static_cast<std::size_t>(std::llround(r * static_cast<double>(n)));
    RatioResult res{r, n, want, {}};
    Dataset ds;
    ds.schema_version = base.schema_version;
    ds.task_schema = base.task_schema;
    for (const Trajectory* t : real) ds.trajectories.push_back(*t);
    if (want > 0) {
      CounterfactualConfig c = cfg;
      c.copies_per_trajectory = static_cast<int>((want + n - 1) / n);
      AugmentReport rep;
      Dataset aug = augment_offline(ds, spec, c, &rep);
      if (!rep.no_donor_copies.empty())
        throw Error(ErrorCode::NoDonorAvailable, "ratio " + format_double(r) + ": no donor for copy '" +
                                                      rep.no_donor_copies.front() + "'");
      // copies come out source-major; take whole copy rounds first so a
      // partial round covers a prefix of the sources
      const std::size_t copies = static_cast<std::size_t>(c.copies_per_trajectory);
      for (std::size_t k = 0; k < copies; ++k)
        for (std::size_t s = 0; s < n && ds.trajectories.size() < n + want; ++s)
          ds.trajectories.push_back(std::move(aug.trajectories[n + s * copies + k]));
    }
    res.dataset = std::move(ds);
    out.push_back(std::move(res));
  }
  return out;
}

// -- pipeline -------------------------------------------------------------------

void PipelineConfig::validate() const {
  int last = -1;
  bool has_gen = false;
  for (const auto& s : stages) {
    const int rank = stage_rank(s.name);
    if (rank < 0) throw Error(ErrorCode::ConfigError, "unknown stage '" + s.name + "'");
    if (rank < last || (rank == last && rank != 2))
      throw Error(ErrorCode::ConfigError, "stage '" + s.name + "' out of order (gen, segment, se3|causal|obs, validate)");
    last = rank;
    has_gen |= rank == 0;
  }
  if (!stages.empty() && !has_gen && !input)
    throw Error(ErrorCode::ConfigError, "pipeline without a gen stage needs an input dataset");
  if (workers < 1) throw Error(ErrorCode::ConfigError, "workers must be >= 1");
}

PipelineConfig parse_pipeline_config(std::string_view json_text) {
  PipelineConfig cfg;
  try {
    const ojson j = ojson::parse(json_text);
    cfg.task = j.value("task", cfg.task);
    cfg.causal_spec = j.value("causal_spec", cfg.causal_spec);
    cfg.master_seed = j.value("master_seed", cfg.master_seed);
    cfg.workers = j.value("workers", cfg.workers);
    cfg.output_root = j.value("output_root", cfg.output_root.string());
    if (j.contains("input")) cfg.input = j.at("input").get<std::string>();
    for (const auto& s : j.value("stages", ojson::array())) {
      StageConfig sc;
      sc.name = s.at("stage").get<std::string>();
      sc.params = s;
      sc.params.erase("stage");
      cfg.stages.push_back(std::move(sc));
    }
  } catch (const ojson::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("malformed pipeline config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  return parse_pipeline_config(read_file(path));
}

Dataset stage_gen(const TaskDefinition& task, const TaskCausalSpec& spec, std::size_t count, std::uint64_t seed,
                  int workers) {
  Dataset ds;
  ds.task_schema = task.schema();
  ds.trajectories.resize(count);
  parallel_for(count, workers, [&](std::size_t i) {
    ds.trajectories[i] = rollout_expert(task, spec, derive_seed(seed, "gen", i), "demo_" + std::to_string(i));
  });
  return ds;
}

Dataset stage_segment(const Dataset& ds, const TaskCausalSpec& spec, const SegmentationConfig& cfg, int workers) {
  Dataset out = ds;
  parallel_for(ds.trajectories.size(), workers, [&](std::size_t i) {
    out.trajectories[i] = assign_phases(ds.trajectories[i], spec, cfg);
  });
  return out;
}

Dataset stage_obs(const Dataset& ds, double sigma, std::uint64_t seed, int workers) {
  std::vector<const Trajectory*> src;
  for (const auto& t : ds.trajectories)
    if (t.provenance != Provenance::mixed) src.push_back(&t);
  std::vector<Trajectory> made(src.size());
  parallel_for(src.size(), workers, [&](std::size_t i) {
    Rng rng(derive_seed(seed, src[i]->traj_id));
    made[i] = proprio_noise(*src[i], sigma, rng);
    made[i].traj_id = src[i]->traj_id + "_obs";
    made[i].provenance = Provenance::mixed;
  });
  Dataset out = ds;
  for (auto& t : made) out.trajectories.push_back(std::move(t));
  return out;
}

PipelineResult run_pipeline(const PipelineConfig& cfg) {
  cfg.validate();
  PipelineResult result;
  ojson& report = result.report;
  report["task"] = cfg.task;
  report["causal_spec"] = cfg.causal_spec;
  report["master_seed"] = cfg.master_seed;
  report["stages"] = ojson::array();
  if (cfg.stages.empty()) return result;

  const TaskDefinition task = load_task_definition(cfg.task);
  const TaskCausalSpec spec = load_causal_spec_or_bundled(cfg.causal_spec);
  std::filesystem::create_directories(cfg.output_root);

  Dataset ds;
  if (cfg.input) ds = load_dataset(*cfg.input);
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    const StageConfig& st = cfg.stages[i];
    const std::uint64_t seed = derive_seed(cfg.master_seed, st.name, i);
    const std::size_t before = ds.trajectories.size();
    ojson entry;
    entry["stage"] = st.name;
    entry["seed"] = seed;
    try {
      if (st.name == "gen") {
        ds = stage_gen(task, spec, param<std::size_t>(st.params, "count", 10), seed, cfg.workers);
      } else if (st.name == "segment") {
        SegmentationConfig sc;
        sc.close_threshold = param(st.params, "close_threshold", sc.close_threshold);
        sc.debounce_steps = param(st.params, "debounce", sc.debounce_steps);
        sc.min_phase_len = param(st.params, "min_phase_len", sc.min_phase_len);
        ds = stage_segment(ds, spec, sc, cfg.workers);
      } else if (st.name == "se3") {
        GenerateConfig gc;
        gc.master_seed = seed;
        gc.n_target = param<std::size_t>(st.params, "count", 10);
        gc.budget = param<std::size_t>(st.params, "budget", 0);
        gc.interp.max_pos_step = param(st.params, "max_pos_step", gc.interp.max_pos_step);
        gc.interp.max_rot_step = param(st.params, "max_rot_step", gc.interp.max_rot_step);
        gc.workers = cfg.workers;
        GenerateReport gr;
        Dataset gen = generate_demos(ds, spec, task, gc, &gr);
        for (auto& t : gen.trajectories) ds.trajectories.push_back(std::move(t));
        entry["attempts"] = gr.attempts;
        entry["accepted"] = gr.accepted;
        entry["acceptance_rate"] = gr.acceptance_rate();
      } else if (st.name == "causal") {
        CounterfactualConfig cc;
        cc.master_seed = seed;
        cc.copies_per_trajectory = param(st.params, "copies", cc.copies_per_trajectory);
        cc.swap_probability = param(st.params, "swap_prob", cc.swap_probability);
        cc.donor_policy = donor_policy_from_string(param<std::string>(st.params, "donor_policy", "any"));
        cc.gripper_jitter_range = param(st.params, "jitter", cc.gripper_jitter_range);
        cc.workers = cfg.workers;
        AugmentReport ar;
        ds = augment_offline(ds, spec, cc, &ar);
        entry["copies"] = ar.copies;
        entry["swaps"] = ar.swaps;
        entry["no_donor_copies"] = ar.no_donor_copies;
      } else if (st.name == "obs") {
        ds = stage_obs(ds, param(st.params, "noise_sigma", 0.01), seed, cfg.workers);
      } else if (st.name == "validate") {
        const ValidationReport vr = validate_trajectories(ds, task, spec, cfg.workers);
        entry["validation"] = vr.to_json();
        result.valid = result.valid && vr.ok();
      }
      entry["input_trajectories"] = before;
      entry["output_trajectories"] = ds.trajectories.size();
      if (st.name != "validate") {
        const auto dir = cfg.output_root / stage_dir_name(i, st.name);
        write_dataset_fresh(ds, dir);
        entry["output"] = stage_dir_name(i, st.name);
      }
    } catch (const Error& e) {
      throw Error(ErrorCode::StageFailure, "stage " + std::to_string(i) + " (" + st.name + "): " + e.what());
    } catch (const std::exception& e) {
      throw Error(ErrorCode::StageFailure, "stage " + std::to_string(i) + " (" + st.name + "): " + e.what());
    }
    report["stages"].push_back(std::move(entry));
  }
  report["valid"] = result.valid;
  std::ofstream(cfg.output_root / "report.json") << report.dump(2) << "\n";
  return result;
}

}  // namespace trajaug
