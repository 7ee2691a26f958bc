#include "reach/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Geometry>

#include "reach/config.hpp"
#include "reach/errors.hpp"

namespace reach {

namespace {

constexpr double kWorkspaceReach = 0.41;

void validate(const JointSpec& j, int index) {
  const std::string tag = "joint " + std::to_string(index + 1);
  if (std::abs(j.axis.norm() - 1.0) > 1e-12) {
    throw ConfigError(tag + ": axis must have unit norm");
  }
  const Eigen::Matrix3d& r = j.origin_rotation;
  if ((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
      std::abs(r.determinant() - 1.0) > 1e-9) {
    throw ConfigError(tag + ": origin rotation is not a proper rotation");
  }
  if (!(j.limit_lo < j.limit_hi)) {
    throw ConfigError(tag + ": limit_lo must be below limit_hi");
  }
}

Eigen::Vector3d read_vec3(const Config& cfg, const std::string& key,
                          const Eigen::Vector3d& fallback) {
  const auto v = cfg.get_doubles(key, {fallback.x(), fallback.y(), fallback.z()});
  if (v.size() != 3) throw ConfigError("key '" + key + "': expected 3 numbers");
  return {v[0], v[1], v[2]};
}

}  // namespace

double squared_distance(const Pose3& a, const Pose3& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

double distance(const Pose3& a, const Pose3& b) { return std::sqrt(squared_distance(a, b)); }

Eigen::Matrix3d axis_angle_matrix(const Eigen::Vector3d& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

ArmModel::ArmModel(std::array<JointSpec, kNumJoints> joints, Eigen::Vector3d tool_offset)
    : joints_(std::move(joints)), tool_offset_(std::move(tool_offset)) {
  for (int i = 0; i < kNumJoints; ++i) validate(joints_[i], i);
  if (std::abs(max_reach() - kWorkspaceReach) > 1e-6) {
    throw ConfigError("arm maximum reach must be " + std::to_string(kWorkspaceReach) +
                      " m, got " + std::to_string(max_reach()));
  }
}

double ArmModel::max_reach() const {
  double sum = tool_offset_.norm();
  for (const auto& j : joints_) sum += j.origin_translation.norm();
  return sum;
}

ArmModel ArmModel::default_model() {
  std::array<JointSpec, kNumJoints> j;
  const Eigen::Vector3d axes[kNumJoints] = {
      Eigen::Vector3d::UnitZ(), Eigen::Vector3d::UnitY(), Eigen::Vector3d::UnitY(),
      Eigen::Vector3d::UnitY(), Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitY()};
  // Shoulder sits on the base axis; upper arm, forearm, wrist and gripper links.
  const double link_z[kNumJoints] = {0.0, 0.0, 0.15, 0.15, 0.05, 0.03};
  for (int i = 0; i < kNumJoints; ++i) {
    j[i].axis = axes[i];
    j[i].origin_translation = {0.0, 0.0, link_z[i]};
    j[i].limit_lo = i == 0 ? -2.6 : -1.57;
    j[i].limit_hi = i == 0 ? 2.6 : 1.57;
  }
  return ArmModel(j, {0.0, 0.0, 0.03});
}

ArmModel ArmModel::load(const std::filesystem::path& path) {
  const Config cfg = Config::load(path);
  std::array<JointSpec, kNumJoints> joints;
  for (int i = 0; i < kNumJoints; ++i) {
    const std::string sec = "joint" + std::to_string(i + 1) + ".";
    if (!cfg.has(sec + "axis")) throw ConfigError(path.string() + ": missing " + sec + "axis");
    JointSpec& j = joints[i];
    const Eigen::Vector3d axis = read_vec3(cfg, sec + "axis", Eigen::Vector3d::UnitZ());
    j.axis = axis;
    j.origin_translation = read_vec3(cfg, sec + "translation", Eigen::Vector3d::Zero());
    const auto rot = cfg.get_doubles(sec + "rotation", {0.0, 0.0, 1.0, 0.0});
    if (rot.size() != 4) throw ConfigError(sec + "rotation: expected ax, ay, az, angle");
    const Eigen::Vector3d rot_axis(rot[0], rot[1], rot[2]);
    j.origin_rotation = rot[3] == 0.0 ? Eigen::Matrix3d::Identity()
                                      : axis_angle_matrix(rot_axis.normalized(), rot[3]);
    j.limit_lo = cfg.get_double(sec + "limit_lo", -M_PI);
    j.limit_hi = cfg.get_double(sec + "limit_hi", M_PI);
  }
  return ArmModel(joints, read_vec3(cfg, "tool.offset", Eigen::Vector3d::Zero()));
}

Pose3 forward_kinematics(const ArmModel& model, const JointAngles& q) {
  Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();
  Eigen::Vector3d pos = Eigen::Vector3d::Zero();
  const auto& joints = model.joints();
  for (int i = 0; i < kNumJoints; ++i) {
    if (!std::isfinite(q[i])) throw std::domain_error("forward_kinematics: non-finite joint angle");
    pos += rot * joints[i].origin_translation;
    rot = rot * joints[i].origin_rotation * axis_angle_matrix(joints[i].axis, q[i]);
  }
  return Pose3::from(pos + rot * model.tool_offset());
}

JointAngles clamp_angles(const ArmModel& model, std::span<const double> raw) {
  if (raw.size() != kNumJoints) throw UsageError("clamp_angles: expected 6 angles");
  JointAngles out;
  for (int i = 0; i < kNumJoints; ++i) {
    if (std::isnan(raw[i])) throw std::domain_error("clamp_angles: NaN angle");
    const auto& j = model.joints()[i];
    out[i] = std::clamp(raw[i], j.limit_lo, j.limit_hi);
  }
  return out;
}

bool GoalRegion::contains(const Pose3& p) const {
  const Eigen::Vector3d v = p.vec();
  if (!v.allFinite()) return false;
  if ((v.array() < box_lo.array()).any() || (v.array() > box_hi.array()).any()) return false;
  const double r = v.norm();
  return r >= min_radius && r <= max_radius;
}

bool workspace_contains(const ArmModel& model, const Pose3& p, const GoalRegion& region) {
  return region.contains(p) && p.vec().norm() <= model.max_reach();
}

}  // namespace reach
