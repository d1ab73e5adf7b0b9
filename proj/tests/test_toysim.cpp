#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numbers>

#include "support.hpp"
#include "trajaug/error.hpp"
#include "trajaug/segmentation.hpp"
#include "trajaug/toysim.hpp"

using namespace trajaug;

namespace {

std::vector<std::pair<SimState, int>> visited_states(const TaskDefinition& task, const TaskCausalSpec& spec,
                                                     std::uint64_t seed) {
  const Trajectory t = rollout_expert(task, spec, seed);
  std::vector<std::pair<SimState, int>> out;
  SimState s = state_from_timestep(t.timesteps.front(), task);
  for (const auto& ts : t.timesteps) {
    out.emplace_back(s, *ts.phase);
    s = step(task, s, ts.actions.front());
  }
  return out;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::StageFailure;
}

}  // namespace

TEST_CASE("reset is deterministic and respects samplers") {
  const auto task = bundled_task("stack");
  CHECK(reset(task, 5) == reset(task, 5));
  CHECK_FALSE(reset(task, 5) == reset(task, 6));
  const SimState s = reset(task, 9);
  CHECK(s.gripper.gripper_aperture == 1.0);
  CHECK(s.gripper.eef_pose == task.home_pose);
  for (const auto& e : s.entities) CHECK(task.spawn(e.entity_id).sampler.box.contains(e.pose.position));

  SUBCASE("degenerate samplers give exactly the specified poses") {
    auto t = task;
    for (std::size_t i = 0; i < t.entities.size(); ++i) {
      const Vector3 p(-0.2 + 0.2 * static_cast<double>(i), 0.1, 0.025);
      t.entities[i].sampler = {{p, p}, 0.3, 0.3};
    }
    const SimState d = reset(t, 1);
    for (std::size_t i = 0; i < t.entities.size(); ++i) {
      CHECK(d.entities[i].pose.position == t.entities[i].sampler.box.lo);
      CHECK(d.entities[i].pose.orientation.coeffs() == yaw_quat(0.3).coeffs());
    }
  }
  SUBCASE("forced overlap fails") {
    auto t = task;
    for (auto& e : t.entities) e.sampler = {{Vector3(0, 0, 0.025), Vector3(0, 0, 0.025)}, 0, 0};
    CHECK(code_of([&] { reset(t, 1); }) == ErrorCode::PlacementFailure);
  }
}

TEST_CASE("step: fixed point, bounds and determinism") {
  const auto task = bundled_task("stack");
  const SimState s = reset(task, 2);
  const Action hold{s.gripper.eef_pose, s.gripper.gripper_aperture, task.agent_id};
  SimState n = step(task, s, hold);
  n.step_count = s.step_count;
  CHECK(n == s);

  const Action far{Pose::planar(0.4, -0.3, 0.05, 2.0), 1.0, task.agent_id};
  const SimState m = step(task, s, far);
  CHECK((m.gripper.eef_pose.position - s.gripper.eef_pose.position).norm() <= task.sim.max_pos_step * (1 + 1e-12));
  CHECK(geodesic_angle(m.gripper.eef_pose.orientation, s.gripper.eef_pose.orientation) <=
        task.sim.max_rot_step * (1 + 1e-12));
  CHECK(step(task, s, far) == m);

  const Action outside{Pose::planar(3.0, 0, 0.3, 0), 1.0, task.agent_id};
  SimState w = s;
  for (int i = 0; i < 200; ++i) w = step(task, w, outside);
  CHECK(w.gripper.eef_pose.position.x() == task.workspace.hi.x());
}

TEST_CASE("attachment invariant along expert rollouts") {
  for (const char* name : {"stack", "coffee"}) {
    const auto task = bundled_task(name);
    const auto spec = bundled_causal_spec(name);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      bool attached_seen = false;
      for (const auto& [s, phase] : visited_states(task, spec, seed)) {
        if (!s.attachment) continue;
        attached_seen = true;
        const Pose expect = compose(SE3Transform::from_pose(s.gripper.eef_pose), s.attachment->grasp_offset).as_pose();
        const auto [dp, da] = pose_error(expect, s.entity(s.attachment->entity_id).pose);
        CHECK(dp <= 1e-12);
        CHECK(da <= 1e-7);
      }
      CHECK(attached_seen);
    }
  }
}

TEST_CASE("released block snaps onto the block below") {
  auto task = bundled_task("stack");
  SimState s = reset(task, 3);
  EntityState& a = s.entity("A");
  EntityState& b = s.entity("B");
  b.pose = Pose::planar(0.1, 0.1, 0.025, 0.0);
  a.pose = Pose::planar(0.1, 0.1, 0.09, 0.0);  // hovering above B, held
  s.gripper = {a.pose, 0.0, task.agent_id};
  s.attachment = Attachment{"A", SE3Transform::identity()};
  const SimState r = step(task, s, {a.pose, 1.0, task.agent_id});
  CHECK_FALSE(r.attachment.has_value());
  CHECK(r.entity("A").pose.position.z() == doctest::Approx(0.025 + task.geometry.block_size).epsilon(1e-12));
  // lands on the table when nothing is underneath
  s.entity("B").pose = Pose::planar(-0.3, -0.3, 0.025, 0.0);
  const SimState t = step(task, s, {a.pose, 1.0, task.agent_id});
  CHECK(t.entity("A").pose.position.z() == doctest::Approx(0.025).epsilon(1e-12));
}

TEST_CASE("lid closes under downward pushes and stays in range") {
  const auto task = bundled_task("coffee");
  const auto spec = bundled_causal_spec("coffee");
  double prev = task.geometry.lid_initial;
  for (const auto& [s, phase] : visited_states(task, spec, 4)) {
    const double lid = *s.entity("machine").extra_value("lid_angle");
    CHECK(lid >= 0.0);
    CHECK(lid <= std::numbers::pi / 2);
    CHECK(lid <= prev);
    prev = lid;
  }
  CHECK(prev <= task.success.lid_closed);
}

TEST_CASE("success predicates") {
  const auto task = bundled_task("stack");
  CHECK_FALSE(check_success(reset(task, 1), task));
  SimState s = reset(task, 1);
  s.entity("B").pose = Pose::planar(0.0, 0.0, 0.025, 0.2);
  s.entity("A").pose = Pose::planar(0.0, 0.0, 0.075, 0.2);
  s.entity("C").pose = Pose::planar(0.0, 0.0, 0.125, 0.2);
  CHECK(check_success(s, task));
  s.entity("C").pose.position.x() = 0.02;
  CHECK_FALSE(check_success(s, task));
  CHECK(check_success(s, task, 1));  // A on B already
}

TEST_CASE("rollout then replay reproduces the final state") {
  for (const char* name : {"stack", "coffee"}) {
    const auto task = bundled_task(name);
    const auto spec = bundled_causal_spec(name);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Trajectory t = rollout_expert(task, spec, seed);
      CHECK(t.success);
      const auto r = replay(t, task);
      CHECK(r.success);
      // one more step from the last recorded state must equal the replay's end
      const SimState last = step(task, state_from_timestep(t.timesteps.back(), task), t.timesteps.back().actions[0]);
      for (const auto& e : last.entities) {
        const auto [dp, da] = pose_error(e.pose, r.final_state.entity(e.entity_id).pose);
        CHECK(dp <= 1e-12);
        CHECK(da <= 1e-12);
      }
    }
  }
}

TEST_CASE("replay with a displaced grasp action fails") {
  const auto task = bundled_task("stack");
  const auto spec = bundled_causal_spec("stack");
  Trajectory t = rollout_expert(task, spec, 7);
  const auto range = phase_range(t, 0);
  REQUIRE(range);
  auto& a = t.timesteps[range->second - 1].actions[0];  // the closing action
  a.target_eef_pose.position.x() += 0.5;
  CHECK_FALSE(replay(t, task).success);
}

TEST_CASE("expert depends only on its phase's dependent partition") {
  std::mt19937_64 g(31);
  int trials = 0;
  for (const char* name : {"stack", "coffee"}) {
    const auto task = bundled_task(name);
    const auto spec = bundled_causal_spec(name);
    for (std::uint64_t seed = 0; seed < 12; ++seed)
      for (const auto& [s, phase] : visited_states(task, spec, seed)) {
        const auto& ph = spec.phases[static_cast<std::size_t>(phase)];
        Partition dependent;
        for (const auto& p : partitions(ph.joined()))
          if (p.contains(task.agent_id)) dependent = p;
        SimState perturbed = s;
        bool touched = false;
        for (auto& e : perturbed.entities) {
          if (dependent.contains(e.entity_id)) continue;
          e.pose = Pose(testing::random_vec(g, -0.4, 0.4), testing::random_quat(g));
          for (auto& x : e.extra) x.value = std::uniform_real_distribution<double>(0, 1.5)(g);
          touched = true;
        }
        if (!touched) continue;
        ++trials;
        CHECK(expert_action(perturbed, task, ph) == expert_action(s, task, ph));
      }
  }
  CHECK(trials >= 1000);
}

TEST_CASE("expert is equivariant under planar transforms") {
  std::mt19937_64 g(32);
  for (const char* name : {"stack", "coffee"}) {
    const auto task = bundled_task(name);
    const auto spec = bundled_causal_spec(name);
    const auto states = visited_states(task, spec, 3);
    for (int i = 0; i < 150; ++i) {
      const auto& [s, phase] = states[static_cast<std::size_t>(g() % states.size())];
      const auto& ph = spec.phases[static_cast<std::size_t>(phase)];
      const SE3Transform gt = testing::random_planar(g);
      const Action lhs = expert_action(transform_state(s, gt), task, ph);
      const Action rhs = transform_action(expert_action(s, task, ph), gt);
      const auto [dp, da] = pose_error(lhs.target_eef_pose, rhs.target_eef_pose);
      CHECK(dp <= 1e-9);
      CHECK(da <= 1e-9);
      CHECK(lhs.gripper_command == rhs.gripper_command);
    }
  }
}

TEST_CASE("expert grasp rules and missing targets") {
  const auto task = bundled_task("stack");
  const auto spec = bundled_causal_spec("stack");
  SimState s = reset(task, 2);
  s.gripper.eef_pose = Pose(s.entity("A").pose.position, yaw_quat(yaw_of(s.entity("A").pose.orientation)));
  CHECK(expert_action(s, task, spec.phases[0]).gripper_command == 0.0);
  s.entities.erase(s.entities.begin());
  CHECK(code_of([&] { expert_action(s, task, spec.phases[0]); }) == ErrorCode::UnreachableTarget);
}

TEST_CASE("task definitions round-trip through JSON and reject bad values") {
  for (const char* name : {"stack", "coffee"}) {
    const auto task = bundled_task(name);
    const auto back = parse_task_definition(task_definition_to_json(task));
    CHECK(task_definition_to_json(back) == task_definition_to_json(task));
    CHECK(back.schema() == task.schema());
    CHECK(load_task_definition(std::string(TRAJAUG_CONFIG_DIR "/") + name + "_task.json").schema() == task.schema());
  }
  CHECK(code_of([] { bundled_task("juggle"); }) == ErrorCode::UnknownTask);
  auto json = task_definition_to_json(bundled_task("stack"));
  json.replace(json.find("\"xy_tol\": 0.015"), 15, "\"xy_tol\": -1.0");
  CHECK(code_of([&] { parse_task_definition(json); }) == ErrorCode::ConfigError);
}

TEST_CASE("rasterize produces the requested shape") {
  const auto task = bundled_task("coffee");
  const ImageArray img = rasterize(reset(task, 1), task, 48, 64);
  CHECK(img.height == 48);
  CHECK(img.width == 64);
  CHECK(img.valid());
}
