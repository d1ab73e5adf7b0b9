#include "trajaug/counterfactual.hpp"

#include <algorithm>

#include "trajaug/error.hpp"
#include "trajaug/parallel.hpp"
#include "trajaug/segmentation.hpp"

namespace trajaug {

namespace {

bool is_agent(const PhaseSpec& phase, const std::string& node) {
  return std::any_of(phase.agent_graphs.begin(), phase.agent_graphs.end(),
                     [&](const AgentGraph& g) { return g.agent_id == node; });
}

/// Partitions of the joined phase graph free of every agent and the target.
std::vector<Partition> swappable(const PhaseSpec& phase) {
  std::vector<Partition> out;
  for (auto& p : partitions(phase.joined())) {
    if (p.contains(phase.target_entity)) continue;
    if (std::any_of(p.members.begin(), p.members.end(), [&](const auto& m) { return is_agent(phase, m); }))
      continue;
    out.push_back(std::move(p));
  }
  return out;
}

void require_labeled(const Trajectory& traj) {
  for (const auto& ts : traj.timesteps)
    if (!ts.phase)
      throw Error(ErrorCode::UnlabeledTrajectory,
                  "trajectory '" + traj.traj_id + "' timestep " + std::to_string(ts.t) + " has no phase label");
}

bool is_source(const Trajectory& t) { return t.provenance != Provenance::counterfactual_synthetic; }

}  // namespace

std::string_view to_string(DonorPolicy p) {
  return p == DonorPolicy::same_phase_any_timestep ? "same_phase_any_timestep" : "same_phase_aligned_timestep";
}

DonorPolicy donor_policy_from_string(std::string_view s) {
  if (s == "any" || s == "same_phase_any_timestep") return DonorPolicy::same_phase_any_timestep;
  if (s == "aligned" || s == "same_phase_aligned_timestep") return DonorPolicy::same_phase_aligned_timestep;
  throw Error(ErrorCode::ConfigError, "unknown donor policy '" + std::string(s) + "'");
}

void CounterfactualConfig::validate() const {
  if (!(swap_probability >= 0.0 && swap_probability <= 1.0))
    throw Error(ErrorCode::ConfigError, "swap_probability must lie in [0,1]");
  if (!(gripper_jitter_range >= 0.0)) throw Error(ErrorCode::ConfigError, "gripper_jitter_range must be >= 0");
  if (copies_per_trajectory < 1) throw Error(ErrorCode::ConfigError, "copies_per_trajectory must be >= 1");
  if (debounce_steps < 0) throw Error(ErrorCode::ConfigError, "debounce_steps must be >= 0");
}

std::string partition_signature(const Partition& p) {
  std::string s;
  for (const auto& m : p.members) {
    if (!s.empty()) s += '+';
    s += m;
  }
  return s;
}

std::vector<const DonorSegment*> PhaseIndex::query(int phase, const std::string& signature,
                                                   const std::string& self) const {
  std::vector<const DonorSegment*> out;
  const auto it = donors.find({phase, signature});
  if (it == donors.end()) return out;
  for (const auto& d : it->second)
    if (d.traj_id != self) out.push_back(&d);
  return out;
}

PhaseIndex build_phase_index(const Dataset& ds, const TaskCausalSpec& spec) {
  PhaseIndex index;
  index.task_id = spec.task_id;
  for (const auto& traj : ds.trajectories) {
    if (!is_source(traj)) continue;
    require_labeled(traj);
    for (const auto& phase : spec.phases) {
      const auto range = phase_range(traj, phase.phase_index);
      if (!range) continue;
      for (const auto& part : swappable(phase)) {
        DonorSegment seg{traj.traj_id, range->first, range->second, {}};
        for (std::size_t i = range->first; i < range->second; ++i) {
          std::vector<EntityState> snap;
          for (const auto& m : part.members) {
            const EntityState* e = traj.timesteps[i].find_entity(m);
            if (!e)
              throw Error(ErrorCode::InvariantViolation,
                          "trajectory '" + traj.traj_id + "' lacks entity " + m + " named by the causal spec");
            snap.push_back(*e);
          }
          seg.snapshots.push_back(std::move(snap));
        }
        index.donors[{phase.phase_index, partition_signature(part)}].push_back(std::move(seg));
      }
    }
  }
  return index;
}

Trajectory counterfactual_copy(const Trajectory& traj, const PhaseIndex& index, const TaskCausalSpec& spec,
                               const CounterfactualConfig& cfg, Rng& rng, std::size_t* swaps, bool* missing) {
  Trajectory out = traj;
  out.provenance = Provenance::counterfactual_synthetic;
  for (const auto& phase : spec.phases) {
    const auto range = phase_range(traj, phase.phase_index);
    if (!range) continue;
    for (const auto& part : swappable(phase)) {
      if (!rng.bernoulli(cfg.swap_probability)) continue;
      const auto donors = index.query(phase.phase_index, partition_signature(part), traj.traj_id);
      if (donors.empty()) {
        if (missing) *missing = true;
        continue;
      }
      const DonorSegment& d = *donors[rng.index(donors.size())];
      const std::size_t fixed = cfg.donor_policy == DonorPolicy::same_phase_any_timestep
                                    ? static_cast<std::size_t>(rng.index(d.snapshots.size()))
                                    : 0;
      for (std::size_t i = range->first; i < range->second; ++i) {
        const std::size_t k = cfg.donor_policy == DonorPolicy::same_phase_any_timestep
                                  ? fixed
                                  : std::min(i - range->first, d.snapshots.size() - 1);
        for (const auto& donor_state : d.snapshots[k])
          for (auto& e : out.timesteps[i].entities)
            if (e.entity_id == donor_state.entity_id) e = donor_state;
      }
      // Attached objects always share the robot's partition, so a swap never
      // moves something the gripper holds and no re-projection is needed.
      if (swaps) ++*swaps;
    }
  }
  if (cfg.gripper_jitter_range > 0.0) out = gripper_transit_jitter(out, spec, cfg, rng);
  return out;
}

Trajectory gripper_transit_jitter(const Trajectory& traj, const TaskCausalSpec& spec,
                                  const CounterfactualConfig& cfg, Rng& rng) {
  if (cfg.gripper_jitter_range == 0.0) return traj;
  require_labeled(traj);
  Trajectory out = traj;
  const auto margin = static_cast<std::size_t>(cfg.debounce_steps);
  for (const auto& phase : spec.phases) {
    if (!phase.grasp_closes) continue;
    const auto range = phase_range(traj, phase.phase_index);
    if (!range) continue;
    const std::size_t lo = range->first == 0 ? 0 : range->first + margin;
    const std::size_t hi = range->second >= margin ? range->second - margin : 0;
    for (std::size_t i = lo; i < hi; ++i) {
      Timestep& ts = out.timesteps[i];
      for (auto& r : ts.robots) {
        if (r.gripper_aperture < cfg.close_threshold) continue;  // closed means holding or about to
        const double d = rng.uniform(-cfg.gripper_jitter_range, cfg.gripper_jitter_range);
        r.gripper_aperture = std::clamp(r.gripper_aperture + d, 0.0, 1.0);
        for (auto& a : ts.actions)
          if (a.agent_id == r.agent_id) a.gripper_command = std::clamp(a.gripper_command + d, 0.0, 1.0);
      }
    }
  }
  return out;
}

Dataset augment_offline(const Dataset& ds, const TaskCausalSpec& spec, const CounterfactualConfig& cfg,
                        AugmentReport* report) {
  cfg.validate();
  if (ds.task_schema.task_id != spec.task_id)
    throw Error(ErrorCode::ConfigError,
                "causal spec is for '" + spec.task_id + "' but the dataset is '" + ds.task_schema.task_id + "'");
  const PhaseIndex index = build_phase_index(ds, spec);

  std::vector<const Trajectory*> sources;
  for (const auto& t : ds.trajectories)
    if (is_source(t)) sources.push_back(&t);
  const auto copies = static_cast<std::size_t>(cfg.copies_per_trajectory);

  std::vector<Trajectory> made(sources.size() * copies);
  std::vector<std::size_t> swap_counts(made.size(), 0);
  std::vector<char> missing(made.size(), 0);
  parallel_for(made.size(), cfg.workers, [&](std::size_t item) {
    const Trajectory& src = *sources[item / copies];
    const std::size_t c = item % copies;
    Rng rng(derive_seed(cfg.master_seed, src.traj_id, c));
    bool miss = false;
    made[item] = counterfactual_copy(src, index, spec, cfg, rng, &swap_counts[item], &miss);
    made[item].traj_id = src.traj_id + "_cf" + std::to_string(c);
    missing[item] = miss;
  });

  Dataset out = ds;
  out.trajectories.reserve(ds.trajectories.size() + made.size());
  for (auto& t : made) out.trajectories.push_back(std::move(t));
  if (report) {
    report->sources = sources.size();
    report->copies = made.size();
    for (std::size_t i = 0; i < made.size(); ++i) {
      report->swaps += swap_counts[i];
      if (missing[i]) report->no_donor_copies.push_back(out.trajectories[ds.trajectories.size() + i].traj_id);
    }
  }
  return out;
}

}  // namespace trajaug
