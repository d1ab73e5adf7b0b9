// Quasi-static kinematic manipulation simulator with scripted experts.
//
// The world is a table, a floating yaw-only gripper and a handful of rigid
// objects. Grasping is proximity based: when the gripper closes within
// `grasp_radius` of an object's centre the object is rigidly attached at its
// current offset. Released objects drop onto the highest support under them.
// A receptacle may carry a revolute lid that closes under downward pushes.
//
// All functions are pure: state in, state out. Experts compute their action
// from the gripper, the phase target and (when placing) the carried object
// only, which makes them invariant to every other entity by construction.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trajaug/causal.hpp"
#include "trajaug/dataset.hpp"
#include "trajaug/geometry.hpp"
#include "trajaug/image.hpp"
#include "trajaug/rng.hpp"

namespace trajaug {

/// Axis-aligned position box plus a yaw interval about world z.
struct PoseSampler {
  Box box;
  double yaw_min = 0.0;
  double yaw_max = 0.0;

  Pose sample(Rng& rng) const;
  bool degenerate() const { return (box.lo.array() == box.hi.array()).all() && yaw_min == yaw_max; }
  void validate(const Box& workspace) const;  // throws ConfigError
};

enum class TaskType { stack, coffee };

struct EntitySpawn {
  std::string entity_id;
  EntityKind kind = EntityKind::block;
  PoseSampler sampler;
  std::vector<NamedScalar> extras;  // initial values
};

struct SimParams {
  double max_pos_step = 0.02;
  double max_rot_step = 0.1;
  double aperture_slew = 1.0;  // per step
  double close_threshold = 0.5;
  double grasp_radius = 0.02;
  double push_radius = 0.03;
  double min_separation = 0.08;
};

struct SuccessParams {
  double xy_tol = 0.015;
  double z_tol = 0.005;
  double lid_closed = 0.1;
};

struct ExpertParams {
  double approach_height = 0.1;
  double retreat_height = 0.15;
  double align_tol = 1e-6;
  int retreat_steps = 3;
  int max_steps = 2000;
};

/// Geometry of the bundled objects (metres, receptacle frame for offsets).
struct Geometry {
  double block_size = 0.05;
  double pod_height = 0.04;
  Vector3 holder_offset{-0.05, 0.0, 0.06};
  double holder_radius = 0.02;
  double lid_hinge_x = -0.05;
  double lid_contact_x = 0.03;
  double lid_hinge_z = 0.12;
  double lid_initial = 1.2;
};

struct TaskDefinition {
  std::string task_id;
  TaskType type = TaskType::stack;
  std::string agent_id = "robot0";
  Box workspace;
  Pose home_pose;
  std::vector<EntitySpawn> entities;
  SimParams sim;
  SuccessParams success;
  ExpertParams expert;
  Geometry geometry;
  bool color_sensitive = false;
  /// stack: entity ids bottom to top. coffee: {pod, machine}.
  std::vector<std::string> roles;

  TaskSchema schema() const;
  const EntitySpawn& spawn(std::string_view id) const;
  double height_of(std::string_view id) const;
  void validate() const;  // throws ConfigError
};

/// Bundled toy tasks: "stack" (three blocks) and "coffee" (pod + lidded machine).
TaskDefinition bundled_task(std::string_view task_id);
TaskCausalSpec bundled_causal_spec(std::string_view task_id);

TaskDefinition parse_task_definition(std::string_view json_text);
/// Accepts a JSON file or the name of a bundled task.
TaskDefinition load_task_definition(const std::string& path_or_name);
std::string task_definition_to_json(const TaskDefinition& task);

struct Attachment {
  std::string entity_id;
  SE3Transform grasp_offset;  // eef⁻¹ ∘ object
  bool operator==(const Attachment&) const = default;
};

struct SimState {
  std::vector<EntityState> entities;  // schema order; lids carry "lid_angle"
  RobotState gripper;
  std::optional<Attachment> attachment;
  std::int64_t step_count = 0;

  const EntityState& entity(std::string_view id) const;
  EntityState& entity(std::string_view id);
  bool operator==(const SimState&) const = default;
};

/// Object poses sampled from the task's spawn distributions, rejection
/// sampled for `min_separation`; gripper at home, open.
SimState reset(const TaskDefinition& task, std::uint64_t seed);
/// Same, drawing from explicit per-entity samplers (ids must match the task).
SimState reset_with(const TaskDefinition& task, const std::vector<EntitySpawn>& spawns, Rng& rng);

SimState step(const TaskDefinition& task, const SimState& s, const Action& a);

/// Task-level success, or the phase-level predicate when `phase` is given.
bool check_success(const SimState& s, const TaskDefinition& task, std::optional<int> phase = std::nullopt);

Action expert_action(const SimState& s, const TaskDefinition& task, const PhaseSpec& phase);

/// Observation part of a timestep (no actions, no phase).
Timestep observe(const SimState& s, std::int64_t t);
/// Rebuilds a simulator state from a recorded timestep. The attachment is
/// inferred: a closed gripper holds the nearest graspable object within
/// `grasp_radius`.
SimState state_from_timestep(const Timestep& ts, const TaskDefinition& task);

Trajectory rollout_expert(const TaskDefinition& task, const TaskCausalSpec& spec, std::uint64_t seed,
                          std::string traj_id = {});

struct ReplayResult {
  SimState final_state;
  bool success = false;
};
ReplayResult replay(const Trajectory& traj, const TaskDefinition& task);

/// Planar group action on a full simulator state (objects and gripper).
SimState transform_state(const SimState& s, const SE3Transform& g);
Action transform_action(const Action& a, const SE3Transform& g);

/// Schematic top-down rendering of the workspace.
ImageArray rasterize(const SimState& s, const TaskDefinition& task, int height, int width);

}  // namespace trajaug
