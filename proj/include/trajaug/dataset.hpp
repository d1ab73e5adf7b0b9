// Demonstration data model and its on-disk representation.
//
// A dataset directory holds `manifest.json` plus one `traj_<id>.jsonl` per
// trajectory (one timestep per line). Output bytes are a pure function of
// the in-memory value: keys are emitted in a fixed order and floats use the
// shortest decimal that round-trips.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trajaug/geometry.hpp"

namespace trajaug {

inline constexpr std::string_view kSchemaVersion = "1.0";

struct NamedScalar {
  std::string name;
  double value = 0.0;
  bool operator==(const NamedScalar&) const = default;
};

struct EntityState {
  std::string entity_id;
  Pose pose;
  std::vector<NamedScalar> extra;

  std::optional<double> extra_value(std::string_view name) const;
  void set_extra(std::string_view name, double value);
  bool operator==(const EntityState&) const = default;
};

struct RobotState {
  Pose eef_pose;
  double gripper_aperture = 1.0;  // 1 = fully open
  std::string agent_id;
  bool operator==(const RobotState&) const = default;
};

/// Absolute world-frame end-effector target.
struct Action {
  Pose target_eef_pose;
  double gripper_command = 1.0;
  std::string agent_id;
  bool operator==(const Action&) const = default;
};

struct Timestep {
  std::int64_t t = 0;
  std::vector<EntityState> entities;
  std::vector<RobotState> robots;
  std::vector<Action> actions;
  std::optional<int> phase;
  bool interp = false;  // part of an interpolation prefix

  const EntityState* find_entity(std::string_view id) const;
  EntityState* find_entity(std::string_view id);
  const RobotState* find_robot(std::string_view agent) const;
  RobotState* find_robot(std::string_view agent);
  const Action* find_action(std::string_view agent) const;
  Action* find_action(std::string_view agent);

  bool operator==(const Timestep&) const = default;
};

enum class Provenance { human_source, se3_synthetic, counterfactual_synthetic, mixed };

std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

struct Trajectory {
  std::string traj_id;
  std::string task_id;
  std::vector<Timestep> timesteps;
  bool success = false;
  Provenance provenance = Provenance::human_source;

  std::size_t size() const { return timesteps.size(); }
  bool operator==(const Trajectory&) const = default;
};

enum class EntityKind { block, pod, receptacle, bin, tool };

std::string_view to_string(EntityKind k);
EntityKind entity_kind_from_string(std::string_view s);

struct EntityDecl {
  std::string entity_id;
  EntityKind kind = EntityKind::block;
  std::vector<std::string> extras;
  bool operator==(const EntityDecl&) const = default;
};

struct TaskSchema {
  std::string task_id;
  std::vector<EntityDecl> entities;
  std::vector<std::string> agents;
  Box workspace;
  bool operator==(const TaskSchema&) const = default;
};

struct Dataset {
  std::string schema_version{kSchemaVersion};
  TaskSchema task_schema;
  std::vector<Trajectory> trajectories;
  bool operator==(const Dataset&) const = default;
};

/// Throws Error(InvariantViolation) naming the offending trajectory/timestep.
void validate_schema(const TaskSchema& schema);
void validate_trajectory(const Trajectory& traj, const TaskSchema& schema);
void validate_dataset(const Dataset& ds);

Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);

/// Timesteps [t0, t1) re-indexed from zero; id gets a `_s<t0>_<t1>` suffix.
Trajectory slice_subtrajectory(const Trajectory& traj, std::size_t t0, std::size_t t1);

/// Shortest round-trip decimal; always carries a '.' or exponent so that
/// integral values (and -0) parse back as doubles.
std::string format_double(double v);

std::string timestep_to_jsonl(const Timestep& ts);
Timestep timestep_from_json_line(std::string_view line);

}  // namespace trajaug
