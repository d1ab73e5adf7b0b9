// Shared fixtures for the test binaries.
#pragma once

#include <unistd.h>

#include <array>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>

#include "trajaug/dataset.hpp"
#include "trajaug/geometry.hpp"
#include "trajaug/rng.hpp"

namespace testing {

using namespace trajaug;

inline Quaternion random_quat(std::mt19937_64& g) {
  std::normal_distribution<double> n;
  Quaternion q(n(g), n(g), n(g), n(g));
  return unit_canonical(q);
}

inline Vector3 random_vec(std::mt19937_64& g, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(g), u(g), u(g)};
}

inline Pose random_pose(std::mt19937_64& g) { return {random_vec(g), random_quat(g)}; }

inline SE3Transform random_transform(std::mt19937_64& g) { return {random_quat(g), random_vec(g)}; }

inline SE3Transform random_planar(std::mt19937_64& g, double xy = 0.1) {
  std::uniform_real_distribution<double> yaw(-std::numbers::pi, std::numbers::pi), t(-xy, xy);
  return SE3Transform::planar(yaw(g), Vector3(t(g), t(g), 0.0));
}

/// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("trajaug_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

/// Random but schema-valid dataset with awkward doubles (tiny, huge-ish,
/// negative zero) to stress the writer.
inline Dataset random_dataset(std::uint64_t seed, int n_traj = 3) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> u(-0.4, 0.4), ap(0.0, 1.0);
  Dataset ds;
  ds.task_schema.task_id = "rand";
  ds.task_schema.entities = {{"cube", EntityKind::block, {}}, {"lid.box", EntityKind::receptacle, {"lid_angle", "hinge"}}};
  ds.task_schema.agents = {"arm_0", "arm-1"};
  ds.task_schema.workspace = {Vector3(-0.5, -0.5, 0.0), Vector3(0.5, 0.5, 0.6)};
  const std::array<Provenance, 4> provs = {Provenance::human_source, Provenance::se3_synthetic,
                                           Provenance::counterfactual_synthetic, Provenance::mixed};
  for (int k = 0; k < n_traj; ++k) {
    Trajectory t;
    t.traj_id = "t" + std::to_string(k);
    t.task_id = "rand";
    t.success = (g() & 1) != 0;
    t.provenance = provs[static_cast<std::size_t>(g() % 4)];
    const int len = 1 + static_cast<int>(g() % 6);
    int phase = 0;
    for (int i = 0; i < len; ++i) {
      Timestep ts;
      ts.t = i * 2 + static_cast<int>(g() % 2);
      auto pose = [&] { return Pose(Vector3(u(g), u(g), std::abs(u(g))), random_quat(g)); };
      ts.entities.push_back({"cube", pose(), {}});
      ts.entities.push_back({"lid.box", pose(), {{"lid_angle", u(g) * 1e-7}, {"hinge", -0.0}}});
      for (const char* a : {"arm_0", "arm-1"}) {
        ts.robots.push_back({pose(), ap(g), a});
        ts.actions.push_back({pose(), (g() & 1) ? 1.0 : ap(g), a});
      }
      if (g() % 3 == 0) ++phase;
      if (k % 2 == 0) ts.phase = phase;
      ts.interp = (g() % 4) == 0;
      t.timesteps.push_back(std::move(ts));
    }
    ds.trajectories.push_back(std::move(t));
  }
  return ds;
}

}  // namespace testing
