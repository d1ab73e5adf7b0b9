#include "trajaug/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "trajaug/error.hpp"

namespace trajaug {

using json = nlohmann::ordered_json;

namespace {

constexpr double kUnitTol = 1e-9;

template <typename Vec, typename Pred>
auto find_by(Vec& items, Pred pred) -> decltype(&items.front()) {
  auto it = std::find_if(items.begin(), items.end(), pred);
  return it == items.end() ? nullptr : &*it;
}

[[noreturn]] void violation(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::InvariantViolation, where + ": " + what);
}

std::string where(const Trajectory& traj, std::optional<std::size_t> idx = std::nullopt) {
  std::string w = "trajectory '" + traj.traj_id + "'";
  if (idx) w += " timestep " + std::to_string(*idx);
  return w;
}

bool valid_id(std::string_view id) {
  return !id.empty() && std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
  });
}

void check_quat(const Quaternion& q, const std::string& w) {
  if (!q.coeffs().allFinite()) violation(w, "non-finite quaternion");
  if (std::abs(q.norm() - 1.0) > kUnitTol) violation(w, "quaternion not unit length");
}

void check_pose(const Pose& p, const std::string& w) {
  if (!p.position.allFinite()) violation(w, "non-finite position");
  check_quat(p.orientation, w);
}

// -- writer ---------------------------------------------------------------

void put_string(std::string& out, std::string_view s) {
  out += json(std::string(s)).dump();
}

void put_vec(std::string& out, const Vector3& v) {
  out += '[';
  for (int i = 0; i < 3; ++i) {
    if (i) out += ',';
    out += format_double(v[i]);
  }
  out += ']';
}

void put_quat(std::string& out, const Quaternion& q) {
  out += '[' + format_double(q.w()) + ',' + format_double(q.x()) + ',' + format_double(q.y()) +
         ',' + format_double(q.z()) + ']';
}

// -- reader ---------------------------------------------------------------

Vector3 read_vec(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::InvariantViolation, "expected 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Pose read_pose(const json& pos, const json& quat) {
  if (!quat.is_array() || quat.size() != 4)
    throw Error(ErrorCode::InvariantViolation, "expected quaternion [w,x,y,z]");
  const Quaternion q(quat[0].get<double>(), quat[1].get<double>(), quat[2].get<double>(),
                     quat[3].get<double>());
  check_quat(q, "pose");
  return Pose::exact(read_vec(pos), q);
}

json read_json_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvariantViolation, p.string() + ": " + e.what());
  }
}

void write_file(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + p.string());
}

std::string traj_file_name(const std::string& id) { return "traj_" + id + ".jsonl"; }

}  // namespace

// -- accessors -------------------------------------------------------------

std::optional<double> EntityState::extra_value(std::string_view name) const {
  for (const auto& e : extra)
    if (e.name == name) return e.value;
  return std::nullopt;
}

void EntityState::set_extra(std::string_view name, double value) {
  for (auto& e : extra)
    if (e.name == name) {
      e.value = value;
      return;
    }
  extra.push_back({std::string(name), value});
}

const EntityState* Timestep::find_entity(std::string_view id) const {
  return find_by(entities, [&](const EntityState& e) { return e.entity_id == id; });
}
EntityState* Timestep::find_entity(std::string_view id) {
  return find_by(entities, [&](const EntityState& e) { return e.entity_id == id; });
}
const RobotState* Timestep::find_robot(std::string_view agent) const {
  return find_by(robots, [&](const RobotState& r) { return r.agent_id == agent; });
}
RobotState* Timestep::find_robot(std::string_view agent) {
  return find_by(robots, [&](const RobotState& r) { return r.agent_id == agent; });
}
const Action* Timestep::find_action(std::string_view agent) const {
  return find_by(actions, [&](const Action& a) { return a.agent_id == agent; });
}
Action* Timestep::find_action(std::string_view agent) {
  return find_by(actions, [&](const Action& a) { return a.agent_id == agent; });
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::human_source: return "human_source";
    case Provenance::se3_synthetic: return "se3_synthetic";
    case Provenance::counterfactual_synthetic: return "counterfactual_synthetic";
    case Provenance::mixed: return "mixed";
  }
  return "mixed";
}

Provenance provenance_from_string(std::string_view s) {
  for (auto p : {Provenance::human_source, Provenance::se3_synthetic,
                 Provenance::counterfactual_synthetic, Provenance::mixed})
    if (to_string(p) == s) return p;
  throw Error(ErrorCode::InvariantViolation, "unknown provenance '" + std::string(s) + "'");
}

std::string_view to_string(EntityKind k) {
  switch (k) {
    case EntityKind::block: return "block";
    case EntityKind::pod: return "pod";
    case EntityKind::receptacle: return "receptacle";
    case EntityKind::bin: return "bin";
    case EntityKind::tool: return "tool";
  }
  return "block";
}

EntityKind entity_kind_from_string(std::string_view s) {
  for (auto k : {EntityKind::block, EntityKind::pod, EntityKind::receptacle, EntityKind::bin,
                 EntityKind::tool})
    if (to_string(k) == s) return k;
  throw Error(ErrorCode::InvariantViolation, "unknown entity kind '" + std::string(s) + "'");
}

// -- validation ------------------------------------------------------------

void validate_schema(const TaskSchema& schema) {
  std::set<std::string> ids;
  for (const auto& e : schema.entities) {
    if (!ids.insert(e.entity_id).second) violation("schema", "duplicate entity id " + e.entity_id);
  }
  std::set<std::string> agents(schema.agents.begin(), schema.agents.end());
  if (agents.size() != schema.agents.size()) violation("schema", "duplicate agent id");
  for (const auto& a : schema.agents)
    if (ids.count(a)) violation("schema", "agent id collides with entity id " + a);
  if (schema.workspace.degenerate()) violation("schema", "degenerate workspace box");
}

void validate_trajectory(const Trajectory& traj, const TaskSchema& schema) {
  if (!valid_id(traj.traj_id)) violation(where(traj), "traj_id must match [A-Za-z0-9_.-]+");
  if (traj.task_id != schema.task_id) violation(where(traj), "task_id does not match schema");
  if (traj.timesteps.empty()) violation(where(traj), "empty trajectory");

  std::set<std::string> schema_ids;
  for (const auto& e : schema.entities) schema_ids.insert(e.entity_id);
  const std::set<std::string> schema_agents(schema.agents.begin(), schema.agents.end());

  std::optional<int> last_phase;
  for (std::size_t i = 0; i < traj.timesteps.size(); ++i) {
    const Timestep& ts = traj.timesteps[i];
    const std::string w = where(traj, i);
    if (ts.t < 0) violation(w, "negative t");
    if (i > 0 && ts.t <= traj.timesteps[i - 1].t) violation(w, "t not strictly increasing");

    std::set<std::string> ids;
    for (const auto& e : ts.entities) {
      if (!ids.insert(e.entity_id).second) violation(w, "duplicate entity " + e.entity_id);
      check_pose(e.pose, w + " entity " + e.entity_id);
      const auto decl = std::find_if(schema.entities.begin(), schema.entities.end(),
                                     [&](const EntityDecl& d) { return d.entity_id == e.entity_id; });
      if (decl == schema.entities.end()) violation(w, "entity not in schema: " + e.entity_id);
      for (const auto& x : e.extra) {
        if (std::find(decl->extras.begin(), decl->extras.end(), x.name) == decl->extras.end())
          violation(w, "extra '" + x.name + "' not declared for " + e.entity_id);
        if (!std::isfinite(x.value)) violation(w, "non-finite extra " + x.name);
      }
    }
    if (ids != schema_ids) violation(w, "entity set differs from schema");

    std::set<std::string> agents;
    for (const auto& r : ts.robots) {
      if (!agents.insert(r.agent_id).second) violation(w, "duplicate robot " + r.agent_id);
      if (!schema_agents.count(r.agent_id)) violation(w, "robot not in schema: " + r.agent_id);
      check_pose(r.eef_pose, w + " robot " + r.agent_id);
      if (!(r.gripper_aperture >= 0.0 && r.gripper_aperture <= 1.0))
        violation(w, "gripper aperture outside [0,1]");
    }
    std::set<std::string> acted;
    for (const auto& a : ts.actions) {
      if (!acted.insert(a.agent_id).second) violation(w, "two actions for " + a.agent_id);
      check_pose(a.target_eef_pose, w + " action " + a.agent_id);
      if (!(a.gripper_command >= 0.0 && a.gripper_command <= 1.0))
        violation(w, "gripper command outside [0,1]");
      if (!schema.workspace.contains(a.target_eef_pose.position, 1e-9))
        violation(w, "action target outside workspace");
    }
    if (acted != agents) violation(w, "actions do not match robot agents one-to-one");

    if (ts.phase) {
      if (*ts.phase < 0) violation(w, "negative phase");
      if (last_phase && *ts.phase < *last_phase) violation(w, "phase labels decrease");
      last_phase = ts.phase;
    }
  }
}

void validate_dataset(const Dataset& ds) {
  validate_schema(ds.task_schema);
  std::set<std::string> ids;
  for (const auto& traj : ds.trajectories) {
    if (!ids.insert(traj.traj_id).second) violation(where(traj), "duplicate traj_id");
    validate_trajectory(traj, ds.task_schema);
  }
}

// -- serialization ------------------------------------------------------------

std::string format_double(double v) {
  if (!std::isfinite(v)) throw Error(ErrorCode::InvariantViolation, "cannot serialize non-finite value");
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, end);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

std::string timestep_to_jsonl(const Timestep& ts) {
  std::string out;
  out.reserve(512);
  out += "{\"t\":" + std::to_string(ts.t) + ",\"entities\":[";
  for (std::size_t i = 0; i < ts.entities.size(); ++i) {
    const auto& e = ts.entities[i];
    if (i) out += ',';
    out += "{\"id\":";
    put_string(out, e.entity_id);
    out += ",\"pos\":";
    put_vec(out, e.pose.position);
    out += ",\"quat\":";
    put_quat(out, e.pose.orientation);
    out += ",\"extra\":{";
    for (std::size_t k = 0; k < e.extra.size(); ++k) {
      if (k) out += ',';
      put_string(out, e.extra[k].name);
      out += ':' + format_double(e.extra[k].value);
    }
    out += "}}";
  }
  out += "],\"robots\":[";
  for (std::size_t i = 0; i < ts.robots.size(); ++i) {
    const auto& r = ts.robots[i];
    if (i) out += ',';
    out += "{\"agent_id\":";
    put_string(out, r.agent_id);
    out += ",\"eef_pos\":";
    put_vec(out, r.eef_pose.position);
    out += ",\"eef_quat\":";
    put_quat(out, r.eef_pose.orientation);
    out += ",\"aperture\":" + format_double(r.gripper_aperture) + '}';
  }
  out += "],\"actions\":[";
  for (std::size_t i = 0; i < ts.actions.size(); ++i) {
    const auto& a = ts.actions[i];
    if (i) out += ',';
    out += "{\"agent_id\":";
    put_string(out, a.agent_id);
    out += ",\"target_pos\":";
    put_vec(out, a.target_eef_pose.position);
    out += ",\"target_quat\":";
    put_quat(out, a.target_eef_pose.orientation);
    out += ",\"gripper\":" + format_double(a.gripper_command) + '}';
  }
  out += "],\"phase\":";
  out += ts.phase ? std::to_string(*ts.phase) : "null";
  if (ts.interp) out += ",\"interp\":true";
  out += '}';
  return out;
}

Timestep timestep_from_json_line(std::string_view line) {
  const json j = json::parse(line);
  Timestep ts;
  ts.t = j.at("t").get<std::int64_t>();
  for (const auto& je : j.at("entities")) {
    EntityState e;
    e.entity_id = je.at("id").get<std::string>();
    e.pose = read_pose(je.at("pos"), je.at("quat"));
    for (const auto& [k, v] : je.at("extra").items()) e.extra.push_back({k, v.get<double>()});
    ts.entities.push_back(std::move(e));
  }
  for (const auto& jr : j.at("robots")) {
    RobotState r;
    r.agent_id = jr.at("agent_id").get<std::string>();
    r.eef_pose = read_pose(jr.at("eef_pos"), jr.at("eef_quat"));
    r.gripper_aperture = jr.at("aperture").get<double>();
    ts.robots.push_back(std::move(r));
  }
  for (const auto& ja : j.at("actions")) {
    Action a;
    a.agent_id = ja.at("agent_id").get<std::string>();
    a.target_eef_pose = read_pose(ja.at("target_pos"), ja.at("target_quat"));
    a.gripper_command = ja.at("gripper").get<double>();
    ts.actions.push_back(std::move(a));
  }
  if (const auto& p = j.at("phase"); !p.is_null()) ts.phase = p.get<int>();
  if (auto it = j.find("interp"); it != j.end()) ts.interp = it->get<bool>();
  return ts;
}

namespace {

std::string manifest_bytes(const Dataset& ds) {
  const auto& s = ds.task_schema;
  std::string out = "{\n  \"schema_version\": ";
  put_string(out, ds.schema_version);
  out += ",\n  \"task_schema\": {\n    \"task_id\": ";
  put_string(out, s.task_id);
  out += ",\n    \"entities\": [";
  for (std::size_t i = 0; i < s.entities.size(); ++i) {
    const auto& e = s.entities[i];
    out += i ? ",\n      " : "\n      ";
    out += "{\"entity_id\": ";
    put_string(out, e.entity_id);
    out += ", \"kind\": ";
    put_string(out, to_string(e.kind));
    out += ", \"extras\": [";
    for (std::size_t k = 0; k < e.extras.size(); ++k) {
      if (k) out += ", ";
      put_string(out, e.extras[k]);
    }
    out += "]}";
  }
  out += s.entities.empty() ? "]" : "\n    ]";
  out += ",\n    \"agents\": [";
  for (std::size_t i = 0; i < s.agents.size(); ++i) {
    if (i) out += ", ";
    put_string(out, s.agents[i]);
  }
  out += "],\n    \"workspace\": {\"lo\": ";
  put_vec(out, s.workspace.lo);
  out += ", \"hi\": ";
  put_vec(out, s.workspace.hi);
  out += "}\n  },\n  \"trajectories\": [";
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
    const auto& t = ds.trajectories[i];
    out += i ? ",\n    " : "\n    ";
    out += "{\"traj_id\": ";
    put_string(out, t.traj_id);
    out += ", \"task_id\": ";
    put_string(out, t.task_id);
    out += ", \"success\": ";
    out += t.success ? "true" : "false";
    out += ", \"provenance\": ";
    put_string(out, to_string(t.provenance));
    out += ", \"length\": " + std::to_string(t.size()) + ", \"file\": ";
    put_string(out, traj_file_name(t.traj_id));
    out += '}';
  }
  out += ds.trajectories.empty() ? "]" : "\n  ]";
  out += "\n}\n";
  return out;
}

TaskSchema read_schema(const json& j) {
  TaskSchema s;
  s.task_id = j.at("task_id").get<std::string>();
  for (const auto& je : j.at("entities")) {
    EntityDecl d;
    d.entity_id = je.at("entity_id").get<std::string>();
    d.kind = entity_kind_from_string(je.at("kind").get<std::string>());
    d.extras = je.at("extras").get<std::vector<std::string>>();
    s.entities.push_back(std::move(d));
  }
  s.agents = j.at("agents").get<std::vector<std::string>>();
  s.workspace.lo = read_vec(j.at("workspace").at("lo"));
  s.workspace.hi = read_vec(j.at("workspace").at("hi"));
  return s;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  validate_dataset(ds);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
  for (const auto& traj : ds.trajectories) {
    std::string bytes;
    for (const auto& ts : traj.timesteps) {
      bytes += timestep_to_jsonl(ts);
      bytes += '\n';
    }
    write_file(dir / traj_file_name(traj.traj_id), bytes);
  }
  write_file(dir / "manifest.json", manifest_bytes(ds));
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::is_regular_file(manifest_path))
    throw Error(ErrorCode::MissingManifest, "no manifest.json in " + dir.string());
  const json m = read_json_file(manifest_path);

  Dataset ds;
  try {
    ds.schema_version = m.at("schema_version").get<std::string>();
    if (ds.schema_version.substr(0, 2) != kSchemaVersion.substr(0, 2))
      throw Error(ErrorCode::SchemaVersionMismatch,
                  "dataset schema " + ds.schema_version + ", supported 1.x");
    ds.task_schema = read_schema(m.at("task_schema"));

    for (const auto& jt : m.at("trajectories")) {
      Trajectory traj;
      traj.traj_id = jt.at("traj_id").get<std::string>();
      traj.task_id = jt.at("task_id").get<std::string>();
      traj.success = jt.at("success").get<bool>();
      traj.provenance = provenance_from_string(jt.at("provenance").get<std::string>());
      if (!valid_id(traj.traj_id)) violation(where(traj), "invalid traj_id");

      const auto path = dir / jt.at("file").get<std::string>();
      std::ifstream in(path, std::ios::binary);
      if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
      std::string line;
      std::size_t lineno = 0;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
          traj.timesteps.push_back(timestep_from_json_line(line));
        } catch (const Error& e) {
          violation(where(traj, lineno), e.what());
        } catch (const json::exception& e) {
          violation(where(traj, lineno), e.what());
        }
        ++lineno;
      }
      ds.trajectories.push_back(std::move(traj));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvariantViolation, "malformed manifest: " + std::string(e.what()));
  }
  validate_dataset(ds);
  return ds;
}

Trajectory slice_subtrajectory(const Trajectory& traj, std::size_t t0, std::size_t t1) {
  if (!(t0 < t1 && t1 <= traj.size()))
    throw Error(ErrorCode::RangeError, "slice [" + std::to_string(t0) + ", " + std::to_string(t1) +
                                           ") of trajectory with " + std::to_string(traj.size()) +
                                           " timesteps");
  Trajectory out;
  out.traj_id = traj.traj_id + "_s" + std::to_string(t0) + "_" + std::to_string(t1);
  out.task_id = traj.task_id;
  out.success = traj.success;
  out.provenance = traj.provenance;
  out.timesteps.assign(traj.timesteps.begin() + static_cast<std::ptrdiff_t>(t0),
                       traj.timesteps.begin() + static_cast<std::ptrdiff_t>(t1));
  for (std::size_t i = 0; i < out.timesteps.size(); ++i)
    out.timesteps[i].t = static_cast<std::int64_t>(i);
  return out;
}

}  // namespace trajaug
