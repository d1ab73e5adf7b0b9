#include "trajaug/toysim.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "trajaug/error.hpp"

namespace trajaug {

using json = nlohmann::ordered_json;

namespace {

constexpr double kArriveSlack = 1e-9;  // relative slack on step bounds
constexpr double kSupportEps = 1e-6;
constexpr const char* kLidAngle = "lid_angle";

bool graspable(EntityKind k) {
  return k == EntityKind::block || k == EntityKind::pod || k == EntityKind::tool;
}

bool is_closed(const TaskDefinition& task, double aperture) {
  return aperture < task.sim.close_threshold;
}

Pose step_toward(const Pose& from, const Pose& goal, double max_pos, double max_rot) {
  const Vector3 d = goal.position - from.position;
  const double len = d.norm();
  const Vector3 p = len <= max_pos * (1.0 + kArriveSlack) ? goal.position
                                                            : Vector3(from.position + d * (max_pos / len));
  const double ang = geodesic_angle(from.orientation, goal.orientation);
  const Quaternion q = ang <= max_rot * (1.0 + kArriveSlack)
                           ? goal.orientation
                           : slerp(from.orientation, goal.orientation, max_rot / ang);
  return Pose::exact(p, q);
}

Pose offset_pose(const Pose& frame, const Vector3& local) {
  return Pose::exact(frame.position + frame.orientation * local, frame.orientation);
}

double lid_span(const Geometry& g) { return g.lid_contact_x - g.lid_hinge_x; }

/// Top surface height of `support` at which `obj` would rest, if `obj`'s
/// centre lies over it.
std::optional<double> support_top(const TaskDefinition& task, const EntityState& support,
                                  const Vector3& obj_center) {
  const auto kind = task.spawn(support.entity_id).kind;
  const Geometry& g = task.geometry;
  if (kind == EntityKind::receptacle) {
    const Vector3 holder = support.pose.position + support.pose.orientation * g.holder_offset;
    if ((obj_center.head<2>() - holder.head<2>()).norm() <= g.holder_radius) return holder.z();
    return std::nullopt;
  }
  if (!graspable(kind)) return std::nullopt;
  // footprint of the supporting object, yaw-aware
  const Vector3 local = support.pose.orientation.conjugate() * (obj_center - support.pose.position);
  const double half = 0.5 * (kind == EntityKind::pod ? g.pod_height : g.block_size);
  if (std::abs(local.x()) > half || std::abs(local.y()) > half) return std::nullopt;
  return support.pose.position.z() + 0.5 * task.height_of(support.entity_id);
}

void drop(const TaskDefinition& task, SimState& s, const std::string& id) {
  EntityState& obj = s.entity(id);
  const double half_h = 0.5 * task.height_of(id);
  const double bottom = obj.pose.position.z() - half_h;
  double best = 0.0;  // table
  for (const auto& other : s.entities) {
    if (other.entity_id == id) continue;
    const auto top = support_top(task, other, obj.pose.position);
    if (top && *top <= bottom + kSupportEps) best = std::max(best, *top);
  }
  obj.pose.position.z() = best + half_h;
}

void push_lids(const TaskDefinition& task, SimState& s, const Vector3& before, const Vector3& after) {
  if (!(after.z() < before.z())) return;
  const Geometry& g = task.geometry;
  const double span = lid_span(g);
  for (auto& e : s.entities) {
    const auto angle = e.extra_value(kLidAngle);
    if (!angle) continue;
    const Vector3 local = e.pose.orientation.conjugate() * (after - e.pose.position);
    if (std::hypot(local.x() - g.lid_contact_x, local.y()) > task.sim.push_radius) continue;
    const double contact_z = g.lid_hinge_z + span * std::tan(*angle);
    if (!(local.z() < contact_z)) continue;
    const double pushed = std::atan2(std::max(local.z() - g.lid_hinge_z, 0.0), span);
    if (pushed < *angle) e.set_extra(kLidAngle, std::clamp(pushed, 0.0, std::numbers::pi / 2));
  }
}

std::optional<Attachment> find_grasp(const TaskDefinition& task, const SimState& s) {
  const Pose& eef = s.gripper.eef_pose;
  const EntityState* best = nullptr;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& e : s.entities) {
    if (!graspable(task.spawn(e.entity_id).kind)) continue;
    const double d = (e.pose.position - eef.position).norm();
    if (d <= task.sim.grasp_radius && d < best_d) {
      best = &e;
      best_d = d;
    }
  }
  if (!best) return std::nullopt;
  return Attachment{best->entity_id,
                    compose(inverse(SE3Transform::from_pose(eef)), SE3Transform::from_pose(best->pose))};
}

bool on_top(const TaskDefinition& task, const SimState& s, const std::string& top, const std::string& base) {
  const auto& t = s.entity(top).pose.position;
  const auto& b = s.entity(base).pose.position;
  const double expect_z = b.z() + 0.5 * (task.height_of(top) + task.height_of(base));
  return (t.head<2>() - b.head<2>()).norm() <= task.success.xy_tol &&
         std::abs(t.z() - expect_z) <= task.success.z_tol;
}

bool pod_in_holder(const TaskDefinition& task, const SimState& s) {
  const auto& pod = s.entity(task.roles.at(0)).pose.position;
  const auto& m = s.entity(task.roles.at(1)).pose;
  const Vector3 holder = m.position + m.orientation * task.geometry.holder_offset;
  return (pod.head<2>() - holder.head<2>()).norm() <= task.success.xy_tol &&
         std::abs(pod.z() - (holder.z() + 0.5 * task.geometry.pod_height)) <= task.success.z_tol;
}

// -- expert helpers ------------------------------------------------------------

/// Move over the goal at a safe height, then straight onto it.
Action approach(const TaskDefinition& task, const Pose& eef, const Pose& goal, double hover_z,
                double cmd_moving, double cmd_at_goal) {
  const double tol = task.expert.align_tol;
  const auto [pos_err, ang_err] = pose_error(eef, goal);
  if (pos_err <= tol && ang_err <= tol) return {goal, cmd_at_goal, task.agent_id};

  const double xy_err = (eef.position.head<2>() - goal.position.head<2>()).norm();
  Pose via = goal;
  if (!(xy_err <= tol && ang_err <= tol))
    via.position.z() = std::max(eef.position.z(), hover_z);
  return {step_toward(eef, via, task.sim.max_pos_step, task.sim.max_rot_step), cmd_moving, task.agent_id};
}

Pose grasp_pose(const EntityState& target) {
  return Pose::exact(target.pose.position, yaw_quat(yaw_of(target.pose.orientation)));
}

/// Where the carried object should rest when placed relative to `target`.
Pose placement_pose(const TaskDefinition& task, const SimState& s, const EntityState& target,
                    const std::string& carried) {
  if (task.type == TaskType::coffee) {
    const Geometry& g = task.geometry;
    return offset_pose(target.pose, g.holder_offset + Vector3(0, 0, 0.5 * task.height_of(carried)));
  }
  (void)s;
  const double dz = 0.5 * (task.height_of(target.entity_id) + task.height_of(carried));
  return Pose::exact(target.pose.position + Vector3(0, 0, dz), target.pose.orientation);
}

Action lid_push(const TaskDefinition& task, const Pose& eef, const EntityState& machine) {
  const Geometry& g = task.geometry;
  const double angle = machine.extra_value(kLidAngle).value_or(0.0);
  const Pose bottom = offset_pose(machine.pose, Vector3(g.lid_contact_x, 0, g.lid_hinge_z));
  const double hover =
      machine.pose.position.z() + g.lid_hinge_z + lid_span(g) * std::tan(angle) + task.expert.approach_height;
  const Action a = approach(task, eef, bottom, hover, 1.0, 1.0);
  return a;
}

Action retreat(const TaskDefinition& task, const Pose& eef, const EntityState& target) {
  Pose goal = eef;
  goal.position.z() = std::max(eef.position.z(), target.pose.position.z() + task.expert.retreat_height);
  return {step_toward(eef, goal, task.sim.max_pos_step, task.sim.max_rot_step), 1.0, task.agent_id};
}

std::vector<EntitySpawn> spawns_from_json(const json& arr) {
  std::vector<EntitySpawn> out;
  for (const auto& je : arr) {
    EntitySpawn sp;
    sp.entity_id = je.at("id").get<std::string>();
    sp.kind = entity_kind_from_string(je.at("kind").get<std::string>());
    const auto lo = je.at("pos_lo").get<std::vector<double>>();
    const auto hi = je.at("pos_hi").get<std::vector<double>>();
    if (lo.size() != 3 || hi.size() != 3) throw Error(ErrorCode::ConfigError, "pos_lo/pos_hi need 3 values");
    sp.sampler.box = {Vector3(lo[0], lo[1], lo[2]), Vector3(hi[0], hi[1], hi[2])};
    const auto yaw = je.value("yaw_range", std::vector<double>{0.0, 0.0});
    if (yaw.size() != 2) throw Error(ErrorCode::ConfigError, "yaw_range needs 2 values");
    sp.sampler.yaw_min = yaw[0];
    sp.sampler.yaw_max = yaw[1];
    if (je.contains("extras"))
      for (const auto& [k, v] : je.at("extras").items()) sp.extras.push_back({k, v.get<double>()});
    out.push_back(std::move(sp));
  }
  return out;
}

json vec_json(const Vector3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vector3 vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw Error(ErrorCode::ConfigError, "expected 3-vector");
  return {v[0], v[1], v[2]};
}

}  // namespace

// -- PoseSampler / TaskDefinition ------------------------------------------------

Pose PoseSampler::sample(Rng& rng) const {
  const Vector3 p(rng.uniform(box.lo.x(), box.hi.x()), rng.uniform(box.lo.y(), box.hi.y()),
                  rng.uniform(box.lo.z(), box.hi.z()));
  return Pose::exact(p, yaw_quat(rng.uniform(yaw_min, yaw_max)));
}

void PoseSampler::validate(const Box& workspace) const {
  if (!(box.lo.array() <= box.hi.array()).all() || yaw_min > yaw_max)
    throw Error(ErrorCode::ConfigError, "pose sampler ranges must satisfy min <= max");
  if (!workspace.contains(box.lo) || !workspace.contains(box.hi))
    throw Error(ErrorCode::ConfigError, "pose sampler box must lie inside the workspace");
}

TaskSchema TaskDefinition::schema() const {
  TaskSchema s;
  s.task_id = task_id;
  for (const auto& e : entities) {
    EntityDecl d{e.entity_id, e.kind, {}};
    for (const auto& x : e.extras) d.extras.push_back(x.name);
    s.entities.push_back(std::move(d));
  }
  s.agents = {agent_id};
  s.workspace = workspace;
  return s;
}

const EntitySpawn& TaskDefinition::spawn(std::string_view id) const {
  for (const auto& e : entities)
    if (e.entity_id == id) return e;
  throw Error(ErrorCode::TargetMissing, "task " + task_id + " has no entity " + std::string(id));
}

double TaskDefinition::height_of(std::string_view id) const {
  switch (spawn(id).kind) {
    case EntityKind::pod: return geometry.pod_height;
    case EntityKind::block:
    case EntityKind::tool: return geometry.block_size;
    case EntityKind::receptacle:
    case EntityKind::bin: return geometry.lid_hinge_z;
  }
  return geometry.block_size;
}

void TaskDefinition::validate() const {
  if (workspace.degenerate()) throw Error(ErrorCode::ConfigError, task_id + ": degenerate workspace");
  for (const auto& e : entities) e.sampler.validate(workspace);
  const auto positive = {sim.max_pos_step, sim.max_rot_step, sim.aperture_slew, sim.grasp_radius,
                         success.xy_tol, success.z_tol, success.lid_closed};
  for (double v : positive)
    if (!(v > 0)) throw Error(ErrorCode::ConfigError, task_id + ": step bounds and tolerances must be positive");
  if (!(sim.close_threshold > 0 && sim.close_threshold < 1))
    throw Error(ErrorCode::ConfigError, task_id + ": close_threshold must lie in (0,1)");
  const std::size_t need = type == TaskType::stack ? 2 : 2;
  if (roles.size() < need) throw Error(ErrorCode::ConfigError, task_id + ": roles incomplete");
  for (const auto& r : roles) (void)spawn(r);
}

TaskDefinition bundled_task(std::string_view task_id) {
  TaskDefinition t;
  t.task_id = std::string(task_id);
  t.workspace = {Vector3(-0.5, -0.5, 0.0), Vector3(0.5, 0.5, 0.6)};
  t.home_pose = Pose::planar(0.0, 0.0, 0.45, 0.0);
  if (task_id == "stack") {
    t.type = TaskType::stack;
    t.color_sensitive = true;
    const double z = 0.5 * t.geometry.block_size;
    for (const char* id : {"A", "B", "C"})
      t.entities.push_back({id, EntityKind::block,
                            {{Vector3(-0.15, -0.15, z), Vector3(0.15, 0.15, z)}, -0.5, 0.5}, {}});
    t.roles = {"B", "A", "C"};
    return t;
  }
  if (task_id == "coffee") {
    t.type = TaskType::coffee;
    t.sim.min_separation = 0.15;
    t.entities.push_back({"pod", EntityKind::pod,
                          {{Vector3(-0.15, -0.15, 0.5 * t.geometry.pod_height),
                            Vector3(0.15, 0.15, 0.5 * t.geometry.pod_height)},
                           -0.5, 0.5},
                          {}});
    t.entities.push_back({"machine", EntityKind::receptacle,
                          {{Vector3(-0.15, -0.15, 0.0), Vector3(0.15, 0.15, 0.0)}, -0.5, 0.5},
                          {{kLidAngle, t.geometry.lid_initial}}});
    t.roles = {"pod", "machine"};
    return t;
  }
  throw Error(ErrorCode::UnknownTask, "no bundled task '" + std::string(task_id) + "'");
}

TaskCausalSpec bundled_causal_spec(std::string_view task_id) {
  using Edges = std::vector<std::pair<std::string, std::string>>;
  auto phase = [](int idx, std::vector<std::string> nodes, const Edges& edges, std::string target,
                  bool closes) {
    PhaseSpec p;
    p.phase_index = idx;
    p.agent_graphs.push_back({"robot0", CausalGraph::from_edges(std::move(nodes), edges)});
    p.target_entity = std::move(target);
    p.grasp_closes = closes;
    return p;
  };
  TaskCausalSpec spec;
  spec.task_id = std::string(task_id);
  if (task_id == "stack") {
    const std::vector<std::string> n = {"robot0", "A", "B", "C"};
    spec.phases.push_back(phase(0, n, {{"robot0", "A"}}, "A", true));
    spec.phases.push_back(phase(1, n, {{"robot0", "A"}, {"A", "B"}}, "B", false));
    spec.phases.push_back(phase(2, n, {{"robot0", "C"}, {"B", "A"}}, "C", true));
    spec.phases.push_back(phase(3, n, {{"robot0", "C"}, {"C", "A"}, {"B", "A"}}, "A", false));
    spec.segment_merge_map = {0, 1, 2, 3};
  } else if (task_id == "coffee") {
    const std::vector<std::string> n = {"robot0", "pod", "machine"};
    spec.phases.push_back(phase(0, n, {{"robot0", "pod"}}, "pod", true));
    spec.phases.push_back(phase(1, n, {{"robot0", "pod"}, {"pod", "machine"}, {"robot0", "machine"}},
                                "machine", false));
    spec.segment_merge_map = {0, 1, 1};
  } else {
    throw Error(ErrorCode::UnknownTask, "no bundled causal spec for '" + std::string(task_id) + "'");
  }
  validate_causal_spec(spec);
  return spec;
}

TaskDefinition parse_task_definition(std::string_view json_text) {
  TaskDefinition t;
  try {
    const json j = json::parse(json_text);
    t.task_id = j.at("task_id").get<std::string>();
    const auto type = j.at("type").get<std::string>();
    if (type == "stack") t.type = TaskType::stack;
    else if (type == "coffee") t.type = TaskType::coffee;
    else throw Error(ErrorCode::UnknownTask, "unknown task type '" + type + "'");
    t.agent_id = j.value("agent_id", t.agent_id);
    t.workspace = {vec_from(j.at("workspace").at("lo")), vec_from(j.at("workspace").at("hi"))};
    const auto& home = j.at("home");
    t.home_pose = Pose(vec_from(home.at("pos")), yaw_quat(home.value("yaw", 0.0)));
    t.color_sensitive = j.value("color_sensitive", false);
    t.roles = j.at("roles").get<std::vector<std::string>>();
    t.entities = spawns_from_json(j.at("entities"));
    if (auto it = j.find("sim"); it != j.end()) {
      auto& s = t.sim;
      s.max_pos_step = it->value("max_pos_step", s.max_pos_step);
      s.max_rot_step = it->value("max_rot_step", s.max_rot_step);
      s.aperture_slew = it->value("aperture_slew", s.aperture_slew);
      s.close_threshold = it->value("close_threshold", s.close_threshold);
      s.grasp_radius = it->value("grasp_radius", s.grasp_radius);
      s.push_radius = it->value("push_radius", s.push_radius);
      s.min_separation = it->value("min_separation", s.min_separation);
    }
    if (auto it = j.find("success"); it != j.end()) {
      auto& s = t.success;
      s.xy_tol = it->value("xy_tol", s.xy_tol);
      s.z_tol = it->value("z_tol", s.z_tol);
      s.lid_closed = it->value("lid_closed", s.lid_closed);
    }
    if (auto it = j.find("expert"); it != j.end()) {
      auto& e = t.expert;
      e.approach_height = it->value("approach_height", e.approach_height);
      e.retreat_height = it->value("retreat_height", e.retreat_height);
      e.align_tol = it->value("align_tol", e.align_tol);
      e.retreat_steps = it->value("retreat_steps", e.retreat_steps);
      e.max_steps = it->value("max_steps", e.max_steps);
    }
    if (auto it = j.find("geometry"); it != j.end()) {
      auto& g = t.geometry;
      g.block_size = it->value("block_size", g.block_size);
      g.pod_height = it->value("pod_height", g.pod_height);
      if (it->contains("holder_offset")) g.holder_offset = vec_from(it->at("holder_offset"));
      g.holder_radius = it->value("holder_radius", g.holder_radius);
      g.lid_hinge_x = it->value("lid_hinge_x", g.lid_hinge_x);
      g.lid_contact_x = it->value("lid_contact_x", g.lid_contact_x);
      g.lid_hinge_z = it->value("lid_hinge_z", g.lid_hinge_z);
      g.lid_initial = it->value("lid_initial", g.lid_initial);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("malformed task definition: ") + e.what());
  }
  t.validate();
  return t;
}

TaskDefinition load_task_definition(const std::string& path_or_name) {
  if (path_or_name == "stack" || path_or_name == "coffee") return bundled_task(path_or_name);
  if (!std::filesystem::exists(path_or_name))
    throw Error(ErrorCode::UnknownTask, "'" + path_or_name + "' is neither a bundled task nor a file");
  std::ifstream in(path_or_name);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open task definition " + path_or_name);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_task_definition(ss.str());
}

std::string task_definition_to_json(const TaskDefinition& t) {
  json j;
  j["task_id"] = t.task_id;
  j["type"] = t.type == TaskType::stack ? "stack" : "coffee";
  j["agent_id"] = t.agent_id;
  j["color_sensitive"] = t.color_sensitive;
  j["workspace"] = {{"lo", vec_json(t.workspace.lo)}, {"hi", vec_json(t.workspace.hi)}};
  j["home"] = {{"pos", vec_json(t.home_pose.position)}, {"yaw", yaw_of(t.home_pose.orientation)}};
  j["roles"] = t.roles;
  j["entities"] = json::array();
  for (const auto& e : t.entities) {
    json je = {{"id", e.entity_id},
               {"kind", std::string(to_string(e.kind))},
               {"pos_lo", vec_json(e.sampler.box.lo)},
               {"pos_hi", vec_json(e.sampler.box.hi)},
               {"yaw_range", {e.sampler.yaw_min, e.sampler.yaw_max}}};
    if (!e.extras.empty()) {
      je["extras"] = json::object();
      for (const auto& x : e.extras) je["extras"][x.name] = x.value;
    }
    j["entities"].push_back(std::move(je));
  }
  j["sim"] = {{"max_pos_step", t.sim.max_pos_step},     {"max_rot_step", t.sim.max_rot_step},
              {"aperture_slew", t.sim.aperture_slew},   {"close_threshold", t.sim.close_threshold},
              {"grasp_radius", t.sim.grasp_radius},     {"push_radius", t.sim.push_radius},
              {"min_separation", t.sim.min_separation}};
  j["success"] = {{"xy_tol", t.success.xy_tol}, {"z_tol", t.success.z_tol}, {"lid_closed", t.success.lid_closed}};
  j["expert"] = {{"approach_height", t.expert.approach_height},
                 {"retreat_height", t.expert.retreat_height},
                 {"align_tol", t.expert.align_tol},
                 {"retreat_steps", t.expert.retreat_steps},
                 {"max_steps", t.expert.max_steps}};
  const auto& g = t.geometry;
  j["geometry"] = {{"block_size", g.block_size},       {"pod_height", g.pod_height},
                   {"holder_offset", vec_json(g.holder_offset)},
                   {"holder_radius", g.holder_radius}, {"lid_hinge_x", g.lid_hinge_x},
                   {"lid_contact_x", g.lid_contact_x}, {"lid_hinge_z", g.lid_hinge_z},
                   {"lid_initial", g.lid_initial}};
  return j.dump(2) + "\n";
}

// -- state -------------------------------------------------------------------

const EntityState& SimState::entity(std::string_view id) const {
  for (const auto& e : entities)
    if (e.entity_id == id) return e;
  throw Error(ErrorCode::TargetMissing, "no entity " + std::string(id) + " in state");
}

EntityState& SimState::entity(std::string_view id) {
  for (auto& e : entities)
    if (e.entity_id == id) return e;
  throw Error(ErrorCode::TargetMissing, "no entity " + std::string(id) + " in state");
}

SimState reset_with(const TaskDefinition& task, const std::vector<EntitySpawn>& spawns, Rng& rng) {
  SimState s;
  s.gripper = {task.home_pose, 1.0, task.agent_id};
  constexpr int kMaxRejections = 1000;
  for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
    s.entities.clear();
    bool ok = true;
    for (const auto& decl : task.entities) {
      const auto it = std::find_if(spawns.begin(), spawns.end(),
                                   [&](const EntitySpawn& sp) { return sp.entity_id == decl.entity_id; });
      const EntitySpawn& sp = it == spawns.end() ? decl : *it;
      EntityState e{decl.entity_id, sp.sampler.sample(rng), sp.extras};
      for (const auto& other : s.entities)
        if ((other.pose.position.head<2>() - e.pose.position.head<2>()).norm() < task.sim.min_separation)
          ok = false;
      s.entities.push_back(std::move(e));
    }
    if (ok) return s;
  }
  throw Error(ErrorCode::PlacementFailure,
              task.task_id + ": no non-overlapping placement after 1000 rejections");
}

SimState reset(const TaskDefinition& task, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "reset"));
  return reset_with(task, task.entities, rng);
}

SimState step(const TaskDefinition& task, const SimState& s, const Action& a) {
  SimState n = s;
  ++n.step_count;

  const Pose& cur = s.gripper.eef_pose;
  const Pose target = Pose::exact(task.workspace.clamp(a.target_eef_pose.position), a.target_eef_pose.orientation);
  Pose moved = step_toward(cur, target, task.sim.max_pos_step, task.sim.max_rot_step);
  moved.position = task.workspace.clamp(moved.position);
  n.gripper.eef_pose = moved;

  const double cmd = std::clamp(a.gripper_command, 0.0, 1.0);
  const double ap = s.gripper.gripper_aperture;
  n.gripper.gripper_aperture = std::abs(cmd - ap) <= task.sim.aperture_slew
                                   ? cmd
                                   : std::clamp(ap + std::copysign(task.sim.aperture_slew, cmd - ap), 0.0, 1.0);
  const bool was_closed = is_closed(task, ap);
  const bool closed = is_closed(task, n.gripper.gripper_aperture);

  if (n.attachment) {
    n.entity(n.attachment->entity_id).pose =
        compose(SE3Transform::from_pose(moved), n.attachment->grasp_offset).as_pose();
  }
  push_lids(task, n, cur.position, moved.position);

  if (n.attachment && !closed) {
    const std::string id = n.attachment->entity_id;
    n.attachment.reset();
    drop(task, n, id);
  } else if (!n.attachment && closed && !was_closed) {
    n.attachment = find_grasp(task, n);
  }
  return n;
}

bool check_success(const SimState& s, const TaskDefinition& task, std::optional<int> phase) {
  switch (task.type) {
    case TaskType::stack: {
      const auto& order = task.roles;
      auto stacked_to = [&](std::size_t level) {
        for (std::size_t i = 1; i <= level && i < order.size(); ++i)
          if (!on_top(task, s, order[i], order[i - 1])) return false;
        return true;
      };
      if (!phase) return !s.attachment && stacked_to(order.size() - 1);
      const auto p = static_cast<std::size_t>(*phase);
      if (p % 2 == 0) {
        const std::size_t next = p / 2 + 1;
        return next < order.size() && s.attachment && s.attachment->entity_id == order[next] &&
               stacked_to(next - 1);
      }
      return !s.attachment && stacked_to((p + 1) / 2);
    }
    case TaskType::coffee: {
      const bool done = !s.attachment && pod_in_holder(task, s) &&
                        s.entity(task.roles.at(1)).extra_value(kLidAngle).value_or(0.0) <= task.success.lid_closed;
      if (phase && *phase == 0) return s.attachment && s.attachment->entity_id == task.roles.at(0);
      return done;
    }
  }
  throw Error(ErrorCode::UnknownTask, task.task_id);
}

Action expert_action(const SimState& s, const TaskDefinition& task, const PhaseSpec& phase) {
  const EntityState* target = nullptr;
  for (const auto& e : s.entities)
    if (e.entity_id == phase.target_entity) target = &e;
  if (!target)
    throw Error(ErrorCode::UnreachableTarget, "phase " + std::to_string(phase.phase_index) + " target " +
                                                  phase.target_entity + " not in state");
  const Pose& eef = s.gripper.eef_pose;
  const bool closed = is_closed(task, s.gripper.gripper_aperture);
  const double approach_h = task.expert.approach_height;

  if (phase.grasp_closes) {
    if (s.attachment) return {eef, 0.0, task.agent_id};
    if (closed) return {eef, 1.0, task.agent_id};
    const Pose goal = grasp_pose(*target);
    return approach(task, eef, goal, goal.position.z() + approach_h, 1.0, 0.0);
  }

  if (s.attachment) {
    const Pose rest = placement_pose(task, s, *target, s.attachment->entity_id);
    const Pose goal = compose(SE3Transform::from_pose(rest), inverse(s.attachment->grasp_offset)).as_pose();
    return approach(task, eef, goal, goal.position.z() + approach_h, 0.0, 1.0);
  }
  if (closed) return {eef, 1.0, task.agent_id};
  if (task.type == TaskType::coffee &&
      target->extra_value(kLidAngle).value_or(0.0) > task.success.lid_closed)
    return lid_push(task, eef, *target);
  return retreat(task, eef, *target);
}

Timestep observe(const SimState& s, std::int64_t t) {
  Timestep ts;
  ts.t = t;
  ts.entities = s.entities;
  ts.robots = {s.gripper};
  return ts;
}

SimState state_from_timestep(const Timestep& ts, const TaskDefinition& task) {
  SimState s;
  for (const auto& decl : task.entities) {
    const EntityState* e = ts.find_entity(decl.entity_id);
    if (!e) throw Error(ErrorCode::InitialStateMissing, "timestep lacks entity " + decl.entity_id);
    s.entities.push_back(*e);
  }
  const RobotState* r = ts.find_robot(task.agent_id);
  if (!r) throw Error(ErrorCode::InitialStateMissing, "timestep lacks robot " + task.agent_id);
  s.gripper = *r;
  s.step_count = ts.t;
  if (is_closed(task, r->gripper_aperture)) s.attachment = find_grasp(task, s);
  return s;
}

Trajectory rollout_expert(const TaskDefinition& task, const TaskCausalSpec& spec, std::uint64_t seed,
                          std::string traj_id) {
  Trajectory traj;
  traj.traj_id = traj_id.empty() ? "demo_" + std::to_string(seed) : std::move(traj_id);
  traj.task_id = task.task_id;
  traj.provenance = Provenance::human_source;

  SimState state = reset(task, seed);
  std::size_t segment = 0;
  int retreat_left = -1;
  const auto& merge = spec.segment_merge_map;
  for (int i = 0; i < task.expert.max_steps; ++i) {
    const int phase = merge[std::min(segment, merge.size() - 1)];
    const Action a = expert_action(state, task, spec.phases.at(static_cast<std::size_t>(phase)));
    Timestep ts = observe(state, i);
    ts.actions = {a};
    ts.phase = phase;
    traj.timesteps.push_back(std::move(ts));

    SimState next = step(task, state, a);
    if (is_closed(task, next.gripper.gripper_aperture) != is_closed(task, state.gripper.gripper_aperture))
      ++segment;
    state = std::move(next);

    if (retreat_left < 0 && check_success(state, task)) retreat_left = task.expert.retreat_steps;
    if (retreat_left == 0) {
      traj.success = check_success(state, task);
      if (!traj.success) break;
      return traj;
    }
    if (retreat_left > 0) --retreat_left;
  }
  throw Error(ErrorCode::ExpertFailure,
              "expert did not complete task " + task.task_id + " for seed " + std::to_string(seed));
}

ReplayResult replay(const Trajectory& traj, const TaskDefinition& task) {
  if (traj.timesteps.empty())
    throw Error(ErrorCode::InitialStateMissing, "trajectory '" + traj.traj_id + "' is empty");
  SimState state = state_from_timestep(traj.timesteps.front(), task);
  for (const auto& ts : traj.timesteps) {
    const Action* a = ts.find_action(task.agent_id);
    if (!a) throw Error(ErrorCode::InitialStateMissing, "trajectory '" + traj.traj_id + "' lacks actions");
    state = step(task, state, *a);
  }
  const bool ok = check_success(state, task);
  return {std::move(state), ok};
}

SimState transform_state(const SimState& s, const SE3Transform& g) {
  SimState out = s;
  for (auto& e : out.entities) e.pose = apply(g, e.pose);
  out.gripper.eef_pose = apply(g, out.gripper.eef_pose);
  return out;
}

Action transform_action(const Action& a, const SE3Transform& g) {
  Action out = a;
  out.target_eef_pose = apply(g, a.target_eef_pose);
  return out;
}

ImageArray rasterize(const SimState& s, const TaskDefinition& task, int height, int width) {
  ImageArray img(height, width, 235);
  const Box& ws = task.workspace;
  auto to_px = [&](const Vector3& p) {
    const double u = (p.x() - ws.lo.x()) / (ws.hi.x() - ws.lo.x());
    const double v = (p.y() - ws.lo.y()) / (ws.hi.y() - ws.lo.y());
    return std::pair<double, double>{(1.0 - v) * (height - 1), u * (width - 1)};
  };
  const double px_per_m = (width - 1) / (ws.hi.x() - ws.lo.x());
  auto fill_square = [&](const Pose& pose, double half_m, std::array<std::uint8_t, 3> rgb) {
    const auto [cy, cx] = to_px(pose.position);
    const double yaw = yaw_of(pose.orientation);
    const double half = half_m * px_per_m;
    const int r = static_cast<int>(std::ceil(half * std::numbers::sqrt2));
    for (int y = std::max(0, static_cast<int>(cy) - r); y <= std::min(height - 1, static_cast<int>(cy) + r); ++y)
      for (int x = std::max(0, static_cast<int>(cx) - r); x <= std::min(width - 1, static_cast<int>(cx) + r); ++x) {
        const double dx = x - cx, dy = cy - y;
        const double lx = std::cos(yaw) * dx + std::sin(yaw) * dy;
        const double ly = -std::sin(yaw) * dx + std::cos(yaw) * dy;
        if (std::abs(lx) <= half && std::abs(ly) <= half)
          for (int c = 0; c < 3; ++c) img.at(y, x, c) = rgb[static_cast<std::size_t>(c)];
      }
  };
  static constexpr std::array<std::array<std::uint8_t, 3>, 4> palette = {
      {{{40, 160, 60}}, {{200, 50, 40}}, {{50, 80, 200}}, {{200, 170, 40}}}};
  // draw lower objects first so stacks show their top block
  std::vector<const EntityState*> order;
  for (const auto& e : s.entities) order.push_back(&e);
  std::stable_sort(order.begin(), order.end(), [](const EntityState* a, const EntityState* b) {
    return a->pose.position.z() < b->pose.position.z();
  });
  for (const EntityState* e : order) {
    const auto idx = static_cast<std::size_t>(std::distance(
        task.entities.begin(), std::find_if(task.entities.begin(), task.entities.end(),
                                            [&](const EntitySpawn& sp) { return sp.entity_id == e->entity_id; })));
    const auto kind = task.spawn(e->entity_id).kind;
    const double half = kind == EntityKind::receptacle ? 0.08 : 0.5 * task.height_of(e->entity_id);
    fill_square(e->pose, half, palette[idx % palette.size()]);
  }
  const auto [gy, gx] = to_px(s.gripper.eef_pose.position);
  const std::uint8_t shade = is_closed(task, s.gripper.gripper_aperture) ? 0 : 90;
  for (int d = -4; d <= 4; ++d) {
    const int y = static_cast<int>(gy) + d, x = static_cast<int>(gx) + d;
    for (int c = 0; c < 3; ++c) {
      if (y >= 0 && y < height && gx >= 0 && gx < width) img.at(y, static_cast<int>(gx), c) = shade;
      if (x >= 0 && x < width && gy >= 0 && gy < height) img.at(static_cast<int>(gy), x, c) = shade;
    }
  }
  return img;
}

}  // namespace trajaug
