#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numbers>

#include "support.hpp"
#include "trajaug/error.hpp"
#include "trajaug/pipeline.hpp"
#include "trajaug/se3_augment.hpp"
#include "trajaug/toysim.hpp"

using namespace trajaug;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::StageFailure;
}

/// Gripper pose relative to `target` at every timestep.
Pose gripper_in_target(const Timestep& ts, const std::string& target) {
  return relative_pose(ts.find_entity(target)->pose, ts.robots[0].eef_pose);
}

}  // namespace

TEST_CASE("interpolation examples") {
  const InterpolationConfig cfg;
  CHECK(interpolate_prefix(Pose(), Pose(), cfg, 1.0, "robot0").empty());

  const Pose to = Pose::planar(0.1, 0, 0, 0);
  const auto lin = interpolate_prefix(Pose(), to, cfg, 0.7, "robot0");
  REQUIRE(lin.size() == 5);
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(lin[k].target_eef_pose.position.x() == doctest::Approx(0.02 * static_cast<double>(k + 1)).epsilon(1e-12));
    CHECK(lin[k].gripper_command == 0.7);
    CHECK(lin[k].agent_id == "robot0");
  }
  CHECK(lin.back().target_eef_pose == to);

  const InterpolationConfig rot{0.02, std::numbers::pi / 6};
  const auto yaw = interpolate_prefix(Pose(), Pose::planar(0, 0, 0, std::numbers::pi / 2), rot, 1.0, "robot0");
  REQUIRE(yaw.size() == 3);
  CHECK(geodesic_angle(yaw[1].target_eef_pose.orientation, yaw_quat(std::numbers::pi / 3)) <= 1e-12);
  for (const auto& a : yaw) CHECK(a.target_eef_pose.position == Vector3::Zero());
}

TEST_CASE("interpolation respects both step bounds") {
  std::mt19937_64 g(41);
  const InterpolationConfig cfg;
  for (int i = 0; i < 300; ++i) {
    const Pose from = testing::random_pose(g), to = testing::random_pose(g);
    const auto acts = interpolate_prefix(from, to, cfg, 1.0, "robot0");
    REQUIRE(!acts.empty());
    Pose prev = from;
    for (const auto& a : acts) {
      CHECK((a.target_eef_pose.position - prev.position).norm() <= cfg.max_pos_step + 1e-12);
      CHECK(geodesic_angle(a.target_eef_pose.orientation, prev.orientation) <= cfg.max_rot_step + 1e-12);
      prev = a.target_eef_pose;
    }
    CHECK(acts.back().target_eef_pose == to);
    // fewest steps: one fewer would break a bound
    const double n = static_cast<double>(acts.size() - 1);
    CHECK(((to.position - from.position).norm() > n * cfg.max_pos_step ||
           geodesic_angle(from.orientation, to.orientation) > n * cfg.max_rot_step));
  }
}

TEST_CASE("interpolation config validation") {
  CHECK(code_of([] { InterpolationConfig{0.0, 0.1}.validate(); }) == ErrorCode::ConfigError);
  CHECK(code_of([] { InterpolationConfig{0.02, -1.0}.validate(); }) == ErrorCode::ConfigError);
}

TEST_CASE("transform_subtrajectory") {
  const auto task = bundled_task("stack");
  const auto spec = bundled_causal_spec("stack");
  const Trajectory t = rollout_expert(task, spec, 11);

  CHECK(transform_subtrajectory(t, SE3Transform::identity(), "A") == t);

  SUBCASE("pure translation shifts every mapped position") {
    const Vector3 d(0.05, -0.02, 0.0);
    const Trajectory m = transform_subtrajectory(t, SE3Transform(Quaternion::Identity(), d), "A");
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto& a = m.timesteps[i];
      const auto& b = t.timesteps[i];
      CHECK((a.find_entity("A")->pose.position - b.find_entity("A")->pose.position - d).norm() <= 1e-15);
      CHECK(a.find_entity("A")->pose.orientation.coeffs() == b.find_entity("A")->pose.orientation.coeffs());
      CHECK((a.robots[0].eef_pose.position - b.robots[0].eef_pose.position - d).norm() <= 1e-15);
      CHECK((a.actions[0].target_eef_pose.position - b.actions[0].target_eef_pose.position - d).norm() <= 1e-15);
      CHECK(a.robots[0].gripper_aperture == b.robots[0].gripper_aperture);
      CHECK(a.actions[0].gripper_command == b.actions[0].gripper_command);
      // non-target entities are untouched
      CHECK(a.find_entity("C")->pose == b.find_entity("C")->pose);
    }
  }
  SUBCASE("random rigid motions preserve the gripper pose in the target frame") {
    std::mt19937_64 g(42);
    for (int k = 0; k < 20; ++k) {
      const SE3Transform T = testing::random_transform(g);
      const Trajectory m = transform_subtrajectory(t, T, "A");
      for (std::size_t i = 0; i < t.size(); ++i) {
        const auto [dp, da] = pose_error(gripper_in_target(m.timesteps[i], "A"), gripper_in_target(t.timesteps[i], "A"));
        CHECK(dp <= 1e-12);
        CHECK(da <= 1e-7);
      }
    }
  }
  SUBCASE("a 90 degree yaw about the target") {
    const Pose a0 = t.timesteps[0].find_entity("A")->pose;
    const SE3Transform about = compose(compose(SE3Transform(Quaternion::Identity(), a0.position),
                                               SE3Transform(yaw_quat(std::numbers::pi / 2), Vector3::Zero())),
                                       SE3Transform(Quaternion::Identity(), -a0.position));
    const Trajectory m = transform_subtrajectory(t, about, "A");
    CHECK((m.timesteps[0].find_entity("A")->pose.position - a0.position).norm() <= 1e-15);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto [dp, da] = pose_error(gripper_in_target(m.timesteps[i], "A"), gripper_in_target(t.timesteps[i], "A"));
      CHECK(dp <= 1e-12);
      CHECK(da <= 1e-7);
    }
  }
  Trajectory broken = t;
  broken.timesteps[3].entities.erase(broken.timesteps[3].entities.begin());
  CHECK(code_of([&] { transform_subtrajectory(broken, SE3Transform::identity(), "A"); }) == ErrorCode::TargetMissing);
}

TEST_CASE("degenerate samplers at the source's initial poses replicate it on the first attempt") {
  auto task = bundled_task("stack");
  const auto spec = bundled_causal_spec("stack");
  const std::vector<Pose> fixed{Pose::planar(-0.2, 0.1, 0.025, 0.3), Pose::planar(0.15, -0.1, 0.025, -0.4),
                                Pose::planar(0.05, 0.25, 0.025, 0.1)};
  GenerateConfig cfg;
  cfg.master_seed = 1;
  for (std::size_t i = 0; i < task.entities.size(); ++i) {
    const double yaw = yaw_of(fixed[i].orientation);
    task.entities[i].sampler = {{fixed[i].position, fixed[i].position}, yaw, yaw};
    cfg.spawn_overrides.push_back(task.entities[i]);
  }
  const Trajectory src = rollout_expert(task, spec, 13);
  std::vector<PhaseTrace> trace;
  const auto out = generate_attempt({&src}, spec, task, cfg, 0, &trace);
  REQUIRE(out.has_value());
  CHECK(out->success);
  // identity retarget: no interpolation needed and the states reproduce the source
  REQUIRE(out->size() == src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    CHECK_FALSE(out->timesteps[i].interp);
    const auto [dp, da] = pose_error(out->timesteps[i].robots[0].eef_pose, src.timesteps[i].robots[0].eef_pose);
    CHECK(dp <= 1e-12);
    CHECK(da <= 1e-7);
  }
}

TEST_CASE("generate_demos: counts, provenance, relative poses and replay") {
  for (const char* name : {"stack", "coffee"}) {
    const auto task = bundled_task(name);
    const auto spec = bundled_causal_spec(name);
    const Dataset src = stage_gen(task, spec, 4, 7, 1);
    GenerateConfig cfg;
    cfg.master_seed = 5;
    cfg.n_target = 0;
    CHECK(generate_demos(src, spec, task, cfg).trajectories.empty());

    cfg.n_target = 15;
    GenerateReport rep;
    const Dataset out = generate_demos(src, spec, task, cfg, &rep);
    REQUIRE(out.trajectories.size() == 15);
    REQUIRE(rep.traces.size() == 15);
    CHECK(rep.acceptance_rate() >= 0.9);
    for (std::size_t k = 0; k < out.trajectories.size(); ++k) {
      const Trajectory& t = out.trajectories[k];
      CHECK(t.provenance == Provenance::se3_synthetic);
      CHECK(t.traj_id.rfind("se3_", 0) == 0);
      CHECK(replay(t, task).success);
      for (const auto& tr : rep.traces[k]) {
        const Trajectory* s = nullptr;
        for (const auto& c : src.trajectories)
          if (c.traj_id == tr.source_id) s = &c;
        REQUIRE(s != nullptr);
        const std::string& target = spec.phases[static_cast<std::size_t>(tr.phase)].target_entity;
        for (std::size_t i = 0; i < tr.length; ++i) {
          const auto& a = t.timesteps[tr.begin + i];
          CHECK_FALSE(a.interp);
          CHECK(*a.phase == tr.phase);
          const auto [dp, da] =
              pose_error(gripper_in_target(a, target), gripper_in_target(s->timesteps[tr.source_begin + i], target));
          CHECK(dp <= 1e-9);
          CHECK(da <= 1e-9);
        }
      }
    }
    // worker count does not matter
    cfg.workers = 3;
    CHECK(generate_demos(src, spec, task, cfg) == out);
  }
}

TEST_CASE("budget exhaustion reports the acceptance rate") {
  const auto task = bundled_task("stack");
  const auto spec = bundled_causal_spec("stack");
  const Dataset src = stage_gen(task, spec, 2, 1, 1);
  GenerateConfig cfg;
  cfg.n_target = 3;
  cfg.budget = 2;
  try {
    generate_demos(src, spec, task, cfg);
    FAIL("expected BudgetExhausted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BudgetExhausted);
    CHECK(std::string(e.what()).find("acceptance") != std::string::npos);
  }
}
