#include "trajaug/se3_augment.hpp"

#include <algorithm>
#include <cmath>

#include "trajaug/error.hpp"
#include "trajaug/parallel.hpp"
#include "trajaug/segmentation.hpp"

namespace trajaug {

namespace {

constexpr double kCeilSlack = 1e-12;
constexpr double kWorkspaceTol = 1e-9;

std::vector<EntitySpawn> effective_spawns(const TaskDefinition& task, const std::vector<EntitySpawn>& overrides) {
  std::vector<EntitySpawn> out = task.entities;
  for (const auto& o : overrides) {
    auto it = std::find_if(out.begin(), out.end(), [&](const EntitySpawn& e) { return e.entity_id == o.entity_id; });
    if (it == out.end())
      throw Error(ErrorCode::ConfigError, "pose sampler override for unknown entity " + o.entity_id);
    o.sampler.validate(task.workspace);
    it->sampler = o.sampler;
  }
  return out;
}

const RobotState& robot_of(const Timestep& ts, const std::string& agent) {
  const RobotState* r = ts.find_robot(agent);
  if (!r) throw Error(ErrorCode::AgentNotFound, "timestep " + std::to_string(ts.t) + " has no robot " + agent);
  return *r;
}

}  // namespace

void InterpolationConfig::validate() const {
  if (!(max_pos_step > 0.0) || !(max_rot_step > 0.0))
    throw Error(ErrorCode::ConfigError, "interpolation step bounds must be positive");
}

Trajectory transform_subtrajectory(const Trajectory& sub, const SE3Transform& T, const std::string& target) {
  Trajectory out = sub;
  for (auto& ts : out.timesteps) {
    bool found = false;
    for (auto& e : ts.entities)
      if (e.entity_id == target) {
        e.pose = apply(T, e.pose);
        found = true;
      }
    if (!found)
      throw Error(ErrorCode::TargetMissing,
                  "sub-trajectory '" + sub.traj_id + "' timestep " + std::to_string(ts.t) + " lacks " + target);
    for (auto& r : ts.robots) r.eef_pose = apply(T, r.eef_pose);
    for (auto& a : ts.actions) a.target_eef_pose = apply(T, a.target_eef_pose);
  }
  return out;
}

std::vector<Action> interpolate_prefix(const Pose& from, const Pose& to, const InterpolationConfig& cfg,
                                       double gripper, const std::string& agent_id) {
  cfg.validate();
  const auto [dist, ang] = pose_error(from, to);
  const double n_pos = std::ceil(dist / cfg.max_pos_step - kCeilSlack);
  const double n_rot = std::ceil(ang / cfg.max_rot_step - kCeilSlack);
  const auto n = static_cast<std::size_t>(std::max({n_pos, n_rot, 0.0}));
  std::vector<Action> out;
  if (n == 0 && from == to) return out;
  const std::size_t steps = std::max<std::size_t>(n, 1);
  out.reserve(steps);
  for (std::size_t k = 1; k < steps; ++k) {
    const double f = static_cast<double>(k) / static_cast<double>(steps);
    out.push_back({Pose::exact(from.position + f * (to.position - from.position),
                               slerp(from.orientation, to.orientation, f)),
                   gripper, agent_id});
  }
  out.push_back({to, gripper, agent_id});
  return out;
}

std::optional<Trajectory> generate_attempt(const std::vector<const Trajectory*>& sources,
                                           const TaskCausalSpec& spec, const TaskDefinition& task,
                                           const GenerateConfig& cfg, std::size_t attempt,
                                           std::vector<PhaseTrace>* trace) {
  if (sources.empty()) throw Error(ErrorCode::ConfigError, "SE(3) generation needs at least one successful source");
  Rng rng(derive_seed(cfg.master_seed, "se3", attempt));
  SimState state = reset_with(task, effective_spawns(task, cfg.spawn_overrides), rng);

  Trajectory out;
  out.traj_id = "se3_" + std::to_string(attempt);
  out.task_id = task.task_id;
  out.provenance = Provenance::se3_synthetic;
  std::vector<PhaseTrace> local;

  auto execute = [&](const Action& a, int phase, bool interp) {
    if (!task.workspace.contains(a.target_eef_pose.position, kWorkspaceTol)) return false;
    Timestep ts = observe(state, static_cast<std::int64_t>(out.timesteps.size()));
    ts.actions = {a};
    ts.phase = phase;
    ts.interp = interp;
    out.timesteps.push_back(std::move(ts));
    state = step(task, state, a);
    return true;
  };

  for (const auto& phase : spec.phases) {
    const Trajectory& src = *sources[rng.index(sources.size())];
    const auto range = phase_range(src, phase.phase_index);
    if (!range) return std::nullopt;
    const Trajectory sub = slice_subtrajectory(src, range->first, range->second);
    const EntityState* src_target = sub.timesteps.front().find_entity(phase.target_entity);
    if (!src_target)
      throw Error(ErrorCode::TargetMissing, "source '" + src.traj_id + "' lacks " + phase.target_entity);
    const SE3Transform T = relative_transform(src_target->pose, state.entity(phase.target_entity).pose);
    const Trajectory moved = transform_subtrajectory(sub, T, phase.target_entity);

    const RobotState& first = robot_of(moved.timesteps.front(), task.agent_id);
    for (const auto& a : interpolate_prefix(state.gripper.eef_pose, first.eef_pose, cfg.interp,
                                            first.gripper_aperture, task.agent_id))
      if (!execute(a, phase.phase_index, true)) return std::nullopt;

    local.push_back({phase.phase_index, src.traj_id, range->first, out.timesteps.size(), moved.size()});
    for (const auto& ts : moved.timesteps) {
      const Action* a = ts.find_action(task.agent_id);
      if (!a) throw Error(ErrorCode::InvariantViolation, "source '" + src.traj_id + "' lacks actions");
      if (!execute(*a, phase.phase_index, false)) return std::nullopt;
    }
  }
  if (!check_success(state, task)) return std::nullopt;
  out.success = true;
  if (trace) *trace = std::move(local);
  return out;
}

Dataset generate_demos(const Dataset& ds, const TaskCausalSpec& spec, const TaskDefinition& task,
                       const GenerateConfig& cfg, GenerateReport* report) {
  cfg.interp.validate();
  std::vector<const Trajectory*> sources;
  for (const auto& t : ds.trajectories) {
    if (!t.success) continue;
    for (const auto& ts : t.timesteps)
      if (!ts.phase) throw Error(ErrorCode::UnlabeledTrajectory, "source '" + t.traj_id + "' is not phase-labeled");
    sources.push_back(&t);
  }

  Dataset out;
  out.schema_version = ds.schema_version;
  out.task_schema = ds.task_schema;
  GenerateReport rep;
  const std::size_t budget = cfg.budget ? cfg.budget : 10 * cfg.n_target;

  // Attempts run in fixed-size batches; acceptance is decided in attempt order,
  // so the result does not depend on the worker count.
  constexpr std::size_t kBatch = 64;
  std::size_t next = 0;
  while (out.trajectories.size() < cfg.n_target && next < budget) {
    const std::size_t n = std::min(kBatch, budget - next);
    std::vector<std::optional<Trajectory>> results(n);
    std::vector<std::vector<PhaseTrace>> traces(n);
    parallel_for(n, cfg.workers, [&](std::size_t i) {
      results[i] = generate_attempt(sources, spec, task, cfg, next + i, &traces[i]);
    });
    for (std::size_t i = 0; i < n && out.trajectories.size() < cfg.n_target; ++i) {
      rep.attempts = next + i + 1;
      if (!results[i]) continue;
      out.trajectories.push_back(std::move(*results[i]));
      rep.traces.push_back(std::move(traces[i]));
    }
    next += n;
  }
  rep.accepted = out.trajectories.size();
  if (report) *report = rep;
  if (out.trajectories.size() < cfg.n_target)
    throw Error(ErrorCode::BudgetExhausted,
                "accepted " + std::to_string(rep.accepted) + " of " + std::to_string(cfg.n_target) + " after " +
                    std::to_string(rep.attempts) + " attempts (acceptance rate " +
                    format_double(rep.acceptance_rate()) + ")");
  return out;
}

}  // namespace trajaug
