#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"
#include "trajaug/geometry.hpp"

using namespace trajaug;
using testing::random_pose;
using testing::random_transform;

namespace {

// 4x4 homogeneous matrices as an independent model of the group.
Eigen::Matrix4d H(const SE3Transform& t) { return t.matrix(); }

double mat_err(const Eigen::Matrix4d& a, const Eigen::Matrix4d& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("group laws hold against the homogeneous-matrix model") {
  std::mt19937_64 g(11);
  for (int i = 0; i < 500; ++i) {
    const auto a = random_transform(g), b = random_transform(g), c = random_transform(g);
    CHECK(mat_err(H(compose(a, b)), H(a) * H(b)) <= 1e-12);
    CHECK(mat_err(H(compose(compose(a, b), c)), H(compose(a, compose(b, c)))) <= 1e-12);
    CHECK(mat_err(H(compose(a, inverse(a))), Eigen::Matrix4d::Identity()) <= 1e-12);
    CHECK(mat_err(H(compose(SE3Transform::identity(), a)), H(a)) <= 1e-14);
    const Vector3 p = testing::random_vec(g);
    CHECK((apply(compose(a, b), p) - apply(a, apply(b, p))).norm() <= 1e-12);
    CHECK(std::abs(compose(a, b).rotation.norm() - 1.0) <= 1e-12);
  }
}

TEST_CASE("relative_transform maps src onto dst") {
  std::mt19937_64 g(12);
  for (int i = 0; i < 500; ++i) {
    const Pose src = random_pose(g), dst = random_pose(g);
    const auto [dp, da] = pose_error(apply(relative_transform(src, dst), src), dst);
    CHECK(dp <= 1e-12);
    CHECK(da <= 1e-7);  // acos-free geodesic, but near-identity angles lose half the digits
  }
  SUBCASE("src == dst gives identity") {
    const Pose p = random_pose(g);
    const auto T = relative_transform(p, p);
    CHECK(geodesic_angle(T.rotation, Quaternion::Identity()) <= 1e-12);
    CHECK(T.translation.norm() <= 1e-15);
  }
  SUBCASE("pure translation") {
    const auto T = relative_transform(Pose(), Pose::planar(0.1, 0, 0, 0));
    CHECK(T.translation == Vector3(0.1, 0, 0));
    CHECK(T.rotation.coeffs() == Quaternion::Identity().coeffs());
  }
  SUBCASE("yaw 90 degrees moves body point (1,0,0) to (0,1,0)") {
    const auto T = relative_transform(Pose(), Pose::planar(0, 0, 0, std::numbers::pi / 2));
    CHECK((apply(T, Vector3(1, 0, 0)) - Vector3(0, 1, 0)).norm() <= 1e-15);
  }
}

TEST_CASE("relative_pose is invariant under a common left transform") {
  std::mt19937_64 g(13);
  for (int i = 0; i < 200; ++i) {
    const Pose a = random_pose(g), b = random_pose(g);
    const auto T = random_transform(g);
    const auto [dp, da] = pose_error(relative_pose(a, b), relative_pose(apply(T, a), apply(T, b)));
    CHECK(dp <= 1e-12);
    CHECK(da <= 1e-7);
  }
}

TEST_CASE("quaternions are kept canonical") {
  std::mt19937_64 g(14);
  for (int i = 0; i < 200; ++i) {
    const Quaternion q = testing::random_quat(g);
    const Pose p = Pose::exact(Vector3::Zero(), Quaternion(-q.coeffs()));
    CHECK(p.orientation.w() >= 0.0);
    CHECK(p.orientation.coeffs() == q.coeffs());
  }
  CHECK(canonical(Quaternion(0, 0, -1, 0)).coeffs() == Quaternion(0, 0, 1, 0).coeffs());
}

TEST_CASE("geodesic angle and yaw helpers") {
  for (double yaw : {-3.0, -1.0, 0.0, 0.5, 3.1}) {
    CHECK(yaw_of(yaw_quat(yaw)) == doctest::Approx(yaw).epsilon(1e-12));
    CHECK(geodesic_angle(Quaternion::Identity(), yaw_quat(yaw)) == doctest::Approx(std::abs(yaw)).epsilon(1e-12));
  }
  // slerp between yaws is angle-linear
  const Quaternion q = slerp(yaw_quat(0.0), yaw_quat(std::numbers::pi / 2), 2.0 / 3.0);
  CHECK(geodesic_angle(q, yaw_quat(std::numbers::pi / 3)) <= 1e-12);
}

TEST_CASE("box helpers") {
  const Box b{Vector3(-1, -1, 0), Vector3(1, 1, 2)};
  CHECK(b.contains(Vector3(1, 1, 2)));
  CHECK_FALSE(b.contains(Vector3(1.1, 0, 0)));
  CHECK(b.contains(Vector3(1 + 1e-10, 0, 0), 1e-9));
  CHECK(b.clamp(Vector3(3, -3, 1)) == Vector3(1, -1, 1));
  CHECK_FALSE(b.degenerate());
  CHECK(Box{Vector3::Zero(), Vector3(1, 0, 1)}.degenerate());
}
