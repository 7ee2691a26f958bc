#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>

#include <Eigen/Core>

namespace reach {

inline constexpr int kNumJoints = 6;

/// Cartesian point in metres.
struct Pose3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Eigen::Vector3d vec() const { return {x, y, z}; }
  static Pose3 from(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }
  bool operator==(const Pose3&) const = default;
};

double distance(const Pose3& a, const Pose3& b);
double squared_distance(const Pose3& a, const Pose3& b);

/// One revolute joint: a fixed origin transform relative to the parent frame,
/// followed by a rotation of theta about `axis` (expressed in the joint frame).
struct JointSpec {
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
  Eigen::Vector3d origin_translation = Eigen::Vector3d::Zero();
  Eigen::Matrix3d origin_rotation = Eigen::Matrix3d::Identity();
  double limit_lo = -M_PI;
  double limit_hi = M_PI;
};

using JointAngles = std::array<double, kNumJoints>;

class ArmModel {
 public:
  ArmModel(std::array<JointSpec, kNumJoints> joints, Eigen::Vector3d tool_offset);

  /// Approximation of the WidowX MKII workspace: axes (z, y, y, y, x, y),
  /// 0.41 m maximum reach.
  static ArmModel default_model();

  /// Loads the key-value geometry file (see configs/arm_default.ini).
  static ArmModel load(const std::filesystem::path& path);

  const std::array<JointSpec, kNumJoints>& joints() const { return joints_; }
  const Eigen::Vector3d& tool_offset() const { return tool_offset_; }

  /// Sum of origin translation magnitudes plus tool offset length.
  double max_reach() const;

 private:
  std::array<JointSpec, kNumJoints> joints_;
  Eigen::Vector3d tool_offset_;
};

/// End-effector position. Throws std::domain_error on non-finite angles.
Pose3 forward_kinematics(const ArmModel& model, const JointAngles& q);

/// Clamps each angle into its joint limits. Throws std::domain_error on NaN.
JointAngles clamp_angles(const ArmModel& model, std::span<const double> raw);

/// Region from which goals are drawn: an axis-aligned box cut by a spherical
/// shell around the base.
struct GoalRegion {
  Eigen::Vector3d box_lo{-0.25, -0.25, 0.10};
  Eigen::Vector3d box_hi{0.25, 0.25, 0.35};
  double min_radius = 0.15;
  double max_radius = 0.41;

  bool contains(const Pose3& p) const;
};

/// True iff p lies inside the goal-sampling region and within the arm's reach.
bool workspace_contains(const ArmModel& model, const Pose3& p,
                        const GoalRegion& region = {});

Eigen::Matrix3d axis_angle_matrix(const Eigen::Vector3d& axis, double angle);

}  // namespace reach
