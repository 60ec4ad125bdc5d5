#pragma once

// Camera model, projection, triangulation and the error primitives shared by
// every other module.
//
// Conventions: right-handed world frame with z up. A camera's forward axis is
// obtained by rotating +x by `yaw` about world z and then by `pitch` about the
// camera's lateral axis (positive pitch looks up). The optical frame is the
// usual (right, down, forward) triple, so image u grows to the right and v
// grows downward.

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace active_mocap::geometry {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr int kNumJoints = 17;

// COCO keypoint order.
enum Joint : int {
  kNose = 0,
  kLeftEye,
  kRightEye,
  kLeftEar,
  kRightEar,
  kLeftShoulder,
  kRightShoulder,
  kLeftElbow,
  kRightElbow,
  kLeftWrist,
  kRightWrist,
  kLeftHip,
  kRightHip,
  kLeftKnee,
  kRightKnee,
  kLeftAnkle,
  kRightAnkle,
};

struct CameraPose {
  Vec3 position = Vec3::Zero();
  double pitch = 0.0;  // radians, [-pi/2, pi/2]
  double yaw = 0.0;    // radians, (-pi, pi]
};

struct CameraIntrinsics {
  double focal = 320.0;  // fx = fy, pixels
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;
};

struct Skeleton3D {
  std::array<Vec3, kNumJoints> joints;

  static Skeleton3D filled(const Vec3& p) {
    Skeleton3D s;
    s.joints.fill(p);
    return s;
  }
};

struct Detection2D {
  std::array<Vec2, kNumJoints> keypoints;
  std::array<bool, kNumJoints> visible{};
  // (cx, cy, w, h) normalized to the image; all zero when nothing is visible.
  std::array<double, 4> bbox{};

  int visible_count() const;
};

// A single observation of one 3D point.
struct View {
  CameraPose pose;
  CameraIntrinsics intrinsics;
  Vec2 pixel;
};

// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

// Clamps pitch and wraps yaw.
CameraPose normalized(CameraPose pose);

// Rows are the camera's (right, down, forward) axes in world coordinates.
Mat3 world_to_camera(const CameraPose& pose);

Vec3 forward_axis(const CameraPose& pose);

// Point expressed in the optical frame (right, down, forward).
Vec3 to_camera_frame(const CameraPose& pose, const Vec3& point);

// Pixel coordinates of `point`, present iff it lies in front of the camera and
// inside the image.
std::optional<Vec2> project(const CameraPose& pose,
                            const CameraIntrinsics& intr, const Vec3& point);

// Like `project` but without the image-bounds test. Used for reprojection
// residuals.
std::optional<Vec2> project_unbounded(const CameraPose& pose,
                                      const CameraIntrinsics& intr,
                                      const Vec3& point);

// Unit ray direction in world coordinates through `pixel`.
Vec3 back_project(const CameraPose& pose, const CameraIntrinsics& intr,
                  const Vec2& pixel);

inline constexpr double kParallelRayTolerance = 1e-6;  // radians

// Linear triangulation of one point from >= 2 views. Pixels are mapped to
// normalized image coordinates and the world frame is re-centred on the
// camera centroid before the SVD solve.
// Throws DegenerateGeometry for < 2 views or all rays parallel.
Vec3 triangulate_dlt(std::span<const View> views);

struct RansacOptions {
  double inlier_threshold = 3.0;  // pixels
  int iterations = 50;
};

// Two-view minimal-set RANSAC followed by a DLT refit on the best inlier set.
// When the number of distinct pairs does not exceed `iterations` every pair
// is tried exhaustively and `rng` is left untouched.
Vec3 triangulate_ransac(std::span<const View> views, const RansacOptions& opts,
                        std::mt19937_64& rng);

// Root-mean over views of the pixel reprojection error.
double reprojection_rms(std::span<const View> views, const Vec3& point);

// Mean per-joint Euclidean distance in millimetres.
double mpjpe(const Skeleton3D& estimate, const Skeleton3D& truth);

// 2(x/c)^2 / ((x/c)^2 + 4)
double geman_mcclure(double x, double c);

inline constexpr double kGemanMcClureScaleMm = 50.0;

}  // namespace active_mocap::geometry
