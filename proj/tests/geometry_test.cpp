// klio - LiDAR-inertial odometry with an EKF backend
// SPDX-License-Identifier: MIT

#include <gtest/gtest.h>

#include <random>

#include "klio/geometry.hpp"

using namespace klio;

namespace {

Vec3 random_vec(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return Vec3(u(rng), u(rng), u(rng));
}

Rotation random_rotation(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::Quaterniond q(u(rng), u(rng), u(rng), u(rng));
  while (q.norm() < 1e-3) q = Eigen::Quaterniond(u(rng), u(rng), u(rng), u(rng));
  return Rotation::from_quaternion(q);
}

Pose random_pose(std::mt19937_64& rng, double translation_scale = 5.0) {
  return Pose(random_rotation(rng), random_vec(rng, translation_scale));
}

}  // namespace

TEST(So3Exp, Identity) {
  const Rotation r = so3_exp(Vec3::Zero());
  EXPECT_LT((r.matrix() - Mat3::Identity()).norm(), 1e-15);
}

TEST(So3Exp, QuarterTurnAboutZ) {
  const Rotation r = so3_exp(Vec3(0, 0, M_PI / 2));
  const Vec3 mapped = r * Vec3(1, 0, 0);
  EXPECT_LT((mapped - Vec3(0, 1, 0)).norm(), 1e-12);
}

TEST(So3Exp, RejectsNonFinite) {
  EXPECT_THROW(so3_exp(Vec3(std::nan(""), 0, 0)), std::invalid_argument);
}

TEST(So3Exp, LogRoundTrip) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> angle(0.0, M_PI - 1e-6);
  for (int i = 0; i < 1000; ++i) {
    Vec3 axis = random_vec(rng, 1.0);
    while (axis.norm() < 1e-6) axis = random_vec(rng, 1.0);
    const Vec3 v = axis.normalized() * angle(rng);
    const Vec3 recovered = so3_log(so3_exp(v));
    EXPECT_LT((recovered - v).norm(), 1e-9) << "v = " << v.transpose();
  }
}

TEST(So3Log, Identity) {
  EXPECT_LT(so3_log(Rotation::identity()).norm(), 1e-15);
}

TEST(So3Log, PiAboutX) {
  const Rotation r = so3_exp(Vec3(M_PI, 0, 0));
  const Vec3 v = so3_log(r);
  EXPECT_LT((v - Vec3(M_PI, 0, 0)).norm(), 1e-9);
}

TEST(So3Log, NearPiSweep) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> angle(M_PI - 1e-4, M_PI - 1e-12);
  for (int i = 0; i < 500; ++i) {
    Vec3 axis = random_vec(rng, 1.0);
    while (axis.norm() < 1e-6) axis = random_vec(rng, 1.0);
    const Vec3 v = axis.normalized() * angle(rng);
    const Vec3 recovered = so3_log(so3_exp(v));
    EXPECT_LT((recovered - v).norm(), 1e-6) << "v = " << v.transpose();
  }
}

TEST(TransformPoint, Identity) {
  EXPECT_LT((Pose::identity() * Vec3(1, 2, 3) - Vec3(1, 2, 3)).norm(), 1e-15);
}

TEST(TransformPoint, PureTranslation) {
  const Pose t(Rotation::identity(), Vec3(0.3, 0, 0));
  EXPECT_LT((t * Vec3::Zero() - Vec3(0.3, 0, 0)).norm(), 1e-15);
}

TEST(TransformPoint, InverseRoundTrip) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const Pose t = random_pose(rng);
    const Vec3 p = random_vec(rng, 10.0);
    EXPECT_LT((t.inverse() * (t * p) - p).norm(), 1e-12);
  }
}

TEST(Pose, CompositionAssociativityOnPoints) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const Pose t1 = random_pose(rng);
    const Pose t2 = random_pose(rng);
    const Vec3 p = random_vec(rng, 10.0);
    EXPECT_LT(((t1 * t2) * p - t1 * (t2 * p)).norm(), 1e-10);
  }
}

TEST(Pose, InverseIsIdentity) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 100; ++i) {
    const Pose t = random_pose(rng);
    const Pose id = t * t.inverse();
    EXPECT_LT((id.rotation.matrix() - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT(id.translation.norm(), 1e-9);
  }
}

TEST(Rotation, OrthonormalityThroughLongChains) {
  std::mt19937_64 rng(13);
  Rotation r;
  for (int i = 0; i < 10000; ++i) r = r * random_rotation(rng);
  const double drift = (r.matrix().transpose() * r.matrix() - Mat3::Identity()).cwiseAbs().maxCoeff();
  EXPECT_LT(drift, 1e-8);
  // And well below the invariant bound for chains of length <= 1000.
  Rotation short_chain;
  for (int i = 0; i < 1000; ++i) short_chain = short_chain * random_rotation(rng);
  const Mat3 m = short_chain.matrix();
  EXPECT_LT((m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Rotation, FromMatrixRejectsNonRotation) {
  Mat3 m = Mat3::Identity();
  m(0, 0) = 2.0;
  EXPECT_THROW(Rotation::from_matrix(m), std::invalid_argument);
}

TEST(PoseTangent, BoxplusBoxminusRoundTrip) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 200; ++i) {
    const Pose t = random_pose(rng);
    Vec6 delta;
    delta.head<3>() = random_vec(rng, 0.5);
    delta.tail<3>() = random_vec(rng, 2.0);
    const Vec6 recovered = boxminus(boxplus(t, delta), t);
    EXPECT_LT((recovered - delta).norm(), 1e-9);
  }
}

TEST(RightJacobian, MatchesFiniteDifference) {
  std::mt19937_64 rng(23);
  const double eps = 1e-7;
  for (int i = 0; i < 50; ++i) {
    const Vec3 phi = random_vec(rng, 1.5);
    const Mat3 jr = right_jacobian_so3(phi);
    for (int axis = 0; axis < 3; ++axis) {
      Vec3 d = Vec3::Zero();
      d[axis] = eps;
      // exp(phi + d) vs exp(phi) exp(Jr d)
      const Vec3 fd = (so3_exp(phi).inverse() * so3_exp(phi + d)).log() / eps;
      EXPECT_LT((fd - jr.col(axis)).norm(), 1e-5);
    }
  }
}
