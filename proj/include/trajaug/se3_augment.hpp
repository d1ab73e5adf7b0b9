// SE(3)-equivariant demo generation: per-phase source sub-trajectories are
// re-anchored on the current pose of the phase's target object, joined by an
// interpolated approach, executed in the simulator and kept only on success.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "trajaug/causal.hpp"
#include "trajaug/dataset.hpp"
#include "trajaug/toysim.hpp"

namespace trajaug {

struct InterpolationConfig {
  double max_pos_step = 0.02;  // m per step
  double max_rot_step = 0.1;   // rad per step

  void validate() const;  // throws ConfigError
};

/// Maps the target's poses, every eef pose and every action target by T.
/// Throws TargetMissing when a timestep lacks `target`.
Trajectory transform_subtrajectory(const Trajectory& sub, const SE3Transform& T, const std::string& target);

/// Actions moving from `from` to `to` in the fewest steps that respect both
/// bounds. The last action targets `to` exactly; from == to gives none.
std::vector<Action> interpolate_prefix(const Pose& from, const Pose& to, const InterpolationConfig& cfg,
                                       double gripper, const std::string& agent_id);

struct GenerateConfig {
  std::uint64_t master_seed = 0;
  std::size_t n_target = 0;
  std::size_t budget = 0;  // attempts; 0 means 10 * n_target
  InterpolationConfig interp;
  /// Per-entity pose samplers replacing the task's spawn distributions.
  std::vector<EntitySpawn> spawn_overrides;
  int workers = 1;
};

/// Where each phase of a generated trajectory came from.
struct PhaseTrace {
  int phase = 0;
  std::string source_id;
  std::size_t source_begin = 0;  // first timestep of the phase in the source
  std::size_t begin = 0;         // first retargeted (non-interp) timestep in the output
  std::size_t length = 0;
};

struct GenerateReport {
  std::size_t attempts = 0;
  std::size_t accepted = 0;
  std::vector<std::vector<PhaseTrace>> traces;  // one per accepted trajectory
  double acceptance_rate() const { return attempts ? static_cast<double>(accepted) / attempts : 0.0; }
};

/// One attempt. Returns the executed trajectory when it ends in success.
std::optional<Trajectory> generate_attempt(const std::vector<const Trajectory*>& sources,
                                           const TaskCausalSpec& spec, const TaskDefinition& task,
                                           const GenerateConfig& cfg, std::size_t attempt,
                                           std::vector<PhaseTrace>* trace = nullptr);

/// Returns `n_target` accepted trajectories (ids "se3_<attempt>", provenance
/// se3_synthetic) in attempt order. Sources are the successful, phase-labeled
/// trajectories of `ds`. Throws BudgetExhausted with the acceptance rate.
Dataset generate_demos(const Dataset& ds, const TaskCausalSpec& spec, const TaskDefinition& task,
                       const GenerateConfig& cfg, GenerateReport* report = nullptr);

}  // namespace trajaug
