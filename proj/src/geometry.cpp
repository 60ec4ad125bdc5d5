#include "active_mocap/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/SVD>
#include <Eigen/Geometry>

#include "active_mocap/errors.hpp"

namespace active_mocap::geometry {

int Detection2D::visible_count() const {
  return static_cast<int>(std::count(visible.begin(), visible.end(), true));
}

double wrap_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  a = std::fmod(a, kTwoPi);
  if (a <= -std::numbers::pi) a += kTwoPi;
  if (a > std::numbers::pi) a -= kTwoPi;
  return a;
}

CameraPose normalized(CameraPose pose) {
  pose.pitch = std::clamp(pose.pitch, -std::numbers::pi / 2, std::numbers::pi / 2);
  pose.yaw = wrap_angle(pose.yaw);
  return pose;
}

Vec3 forward_axis(const CameraPose& pose) {
  const double cp = std::cos(pose.pitch), sp = std::sin(pose.pitch);
  const double cy = std::cos(pose.yaw), sy = std::sin(pose.yaw);
  return {cp * cy, cp * sy, sp};
}

Mat3 world_to_camera(const CameraPose& pose) {
  const Vec3 forward = forward_axis(pose);
  const Vec3 right(std::sin(pose.yaw), -std::cos(pose.yaw), 0.0);
  const Vec3 down = forward.cross(right);
  Mat3 r;
  r.row(0) = right.transpose();
  r.row(1) = down.transpose();
  r.row(2) = forward.transpose();
  return r;
}

Vec3 to_camera_frame(const CameraPose& pose, const Vec3& point) {
  return world_to_camera(pose) * (point - pose.position);
}

namespace {

constexpr double kNearPlane = 1e-6;

}  // namespace

std::optional<Vec2> project_unbounded(const CameraPose& pose,
                                      const CameraIntrinsics& intr,
                                      const Vec3& point) {
  const Vec3 c = to_camera_frame(pose, point);
  if (!(c.z() > kNearPlane)) return std::nullopt;
  return Vec2(intr.focal * c.x() / c.z() + intr.cx,
              intr.focal * c.y() / c.z() + intr.cy);
}

std::optional<Vec2> project(const CameraPose& pose,
                            const CameraIntrinsics& intr, const Vec3& point) {
  auto px = project_unbounded(pose, intr, point);
  if (!px) return std::nullopt;
  if (px->x() < 0.0 || px->x() >= intr.width || px->y() < 0.0 ||
      px->y() >= intr.height)
    return std::nullopt;
  return px;
}

Vec3 back_project(const CameraPose& pose, const CameraIntrinsics& intr,
                  const Vec2& pixel) {
  const Vec3 ray_cam((pixel.x() - intr.cx) / intr.focal,
                     (pixel.y() - intr.cy) / intr.focal, 1.0);
  return (world_to_camera(pose).transpose() * ray_cam).normalized();
}

Vec3 triangulate_dlt(std::span<const View> views) {
  if (views.size() < 2)
    throw DegenerateGeometry("triangulation needs at least 2 views, got " +
                             std::to_string(views.size()));

  // Rays that are all parallel carry no depth information.
  std::vector<Vec3> rays;
  rays.reserve(views.size());
  for (const auto& v : views) rays.push_back(back_project(v.pose, v.intrinsics, v.pixel));
  double widest = 0.0;
  for (size_t i = 0; i < rays.size(); ++i)
    for (size_t j = i + 1; j < rays.size(); ++j)
      widest = std::max(widest, std::atan2(rays[i].cross(rays[j]).norm(),
                                           rays[i].dot(rays[j])));
  if (widest < kParallelRayTolerance)
    throw DegenerateGeometry("all viewing rays are parallel");

  // Condition the world frame: centre on the camera centroid, unit mean spread.
  Vec3 centroid = Vec3::Zero();
  for (const auto& v : views) centroid += v.pose.position;
  centroid /= static_cast<double>(views.size());
  double spread = 0.0;
  for (const auto& v : views) spread += (v.pose.position - centroid).norm();
  spread /= static_cast<double>(views.size());
  if (spread < 1e-9) spread = 1.0;

  Eigen::MatrixXd design(2 * views.size(), 4);
  for (size_t i = 0; i < views.size(); ++i) {
    const auto& v = views[i];
    const Mat3 r = world_to_camera(v.pose);
    Eigen::Matrix<double, 3, 4> p;
    p.leftCols<3>() = r * spread;
    p.col(3) = -r * (v.pose.position - centroid);
    // Normalized image coordinates: centred on the principal point, scaled by
    // the focal length.
    const double x = (v.pixel.x() - v.intrinsics.cx) / v.intrinsics.focal;
    const double y = (v.pixel.y() - v.intrinsics.cy) / v.intrinsics.focal;
    Eigen::RowVector4d a = x * p.row(2) - p.row(0);
    Eigen::RowVector4d b = y * p.row(2) - p.row(1);
    design.row(2 * i) = a / a.norm();
    design.row(2 * i + 1) = b / b.norm();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeFullV);
  const Eigen::Vector4d h = svd.matrixV().col(3);
  if (std::abs(h(3)) < 1e-12)
    throw DegenerateGeometry("triangulated point lies at infinity");
  return centroid + spread * h.head<3>() / h(3);
}

double reprojection_rms(std::span<const View> views, const Vec3& point) {
  if (views.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& v : views) {
    auto px = project_unbounded(v.pose, v.intrinsics, point);
    if (!px) return std::numeric_limits<double>::infinity();
    sum += (*px - v.pixel).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(views.size()));
}

Vec3 triangulate_ransac(std::span<const View> views, const RansacOptions& opts,
                        std::mt19937_64& rng) {
  if (views.size() < 2)
    throw DegenerateGeometry("triangulation needs at least 2 views, got " +
                             std::to_string(views.size()));
  const size_t n = views.size();
  const size_t num_pairs = n * (n - 1) / 2;

  std::vector<std::pair<size_t, size_t>> candidates;
  if (num_pairs <= static_cast<size_t>(std::max(opts.iterations, 1))) {
    for (size_t i = 0; i < n; ++i)
      for (size_t j = i + 1; j < n; ++j) candidates.emplace_back(i, j);
  } else {
    std::uniform_int_distribution<size_t> pick(0, n - 1);
    for (int it = 0; it < opts.iterations; ++it) {
      size_t i = pick(rng), j = pick(rng);
      while (j == i) j = pick(rng);
      candidates.emplace_back(std::min(i, j), std::max(i, j));
    }
  }

  std::vector<size_t> best_inliers;
  double best_residual = std::numeric_limits<double>::infinity();
  for (auto [i, j] : candidates) {
    const std::array<View, 2> pair{views[i], views[j]};
    Vec3 guess;
    try {
      guess = triangulate_dlt(pair);
    } catch (const DegenerateGeometry&) {
      continue;
    }
    std::vector<size_t> inliers;
    double residual = 0.0;
    for (size_t k = 0; k < n; ++k) {
      auto px = project_unbounded(views[k].pose, views[k].intrinsics, guess);
      if (!px) continue;
      const double err = (*px - views[k].pixel).norm();
      if (err < opts.inlier_threshold) {
        inliers.push_back(k);
        residual += err;
      }
    }
    if (inliers.size() > best_inliers.size() ||
        (inliers.size() == best_inliers.size() && residual < best_residual)) {
      best_inliers = std::move(inliers);
      best_residual = residual;
    }
  }

  if (best_inliers.size() < 2 || best_inliers.size() == n)
    return triangulate_dlt(views);
  std::vector<View> subset;
  subset.reserve(best_inliers.size());
  for (size_t k : best_inliers) subset.push_back(views[k]);
  try {
    return triangulate_dlt(subset);
  } catch (const DegenerateGeometry&) {
    return triangulate_dlt(views);
  }
}

double mpjpe(const Skeleton3D& estimate, const Skeleton3D& truth) {
  double sum = 0.0;
  for (int j = 0; j < kNumJoints; ++j)
    sum += (estimate.joints[j] - truth.joints[j]).norm();
  return 1000.0 * sum / kNumJoints;
}

double geman_mcclure(double x, double c) {
  const double q = (x / c) * (x / c);
  return 2.0 * q / (q + 4.0);
}

}  // namespace active_mocap::geometry
