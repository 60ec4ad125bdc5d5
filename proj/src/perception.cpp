#include "active_mocap/perception.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

#include "active_mocap/errors.hpp"
#include "active_mocap/seeding.hpp"

namespace active_mocap::perception {

namespace {

double median(std::vector<double> v) {
  const size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

const HumanDetection* AgentPacket::find(int human_id) const {
  for (const auto& d : detections)
    if (d.human_id == human_id) return &d;
  return nullptr;
}

const HumanEstimate* ReconstructionResult::find(int human_id) const {
  for (const auto& h : humans)
    if (h.human_id == human_id) return &h;
  return nullptr;
}

std::vector<HumanDetection> detect(const world::CameraAgentState& camera,
                                   const world::WorldState& world,
                                   const PerceptionConfig& cfg, std::mt19937_64& rng) {
  std::vector<HumanDetection> out;
  std::normal_distribution<double> noise(0.0, 1.0);
  const auto& intr = camera.intrinsics;
  for (const auto& human : world.humans) {
    const Skeleton3D skel = world::skeleton_of(human);
    HumanDetection hd;
    hd.human_id = human.id;
    auto& det = hd.detection;
    for (int j = 0; j < geometry::kNumJoints; ++j) {
      det.keypoints[j] = geometry::Vec2::Zero();
      if (world::occluded(camera, skel.joints[j], world.humans, human.id)) continue;
      geometry::Vec2 px = *geometry::project(camera.pose, intr, skel.joints[j]);
      if (cfg.noise_sigma > 0.0) {
        px.x() += cfg.noise_sigma * noise(rng);
        px.y() += cfg.noise_sigma * noise(rng);
      }
      // Keep visible keypoints inside the image.
      px.x() = std::clamp(px.x(), 0.0, std::nextafter(double(intr.width), 0.0));
      px.y() = std::clamp(px.y(), 0.0, std::nextafter(double(intr.height), 0.0));
      det.keypoints[j] = px;
      det.visible[j] = true;
    }
    if (det.visible_count() < cfg.min_visible_joints) continue;
    double u0 = intr.width, v0 = intr.height, u1 = 0.0, v1 = 0.0;
    for (int j = 0; j < geometry::kNumJoints; ++j) {
      if (!det.visible[j]) continue;
      u0 = std::min(u0, det.keypoints[j].x());
      u1 = std::max(u1, det.keypoints[j].x());
      v0 = std::min(v0, det.keypoints[j].y());
      v1 = std::max(v1, det.keypoints[j].y());
    }
    det.bbox = {0.5 * (u0 + u1) / intr.width, 0.5 * (v0 + v1) / intr.height,
                (u1 - u0) / intr.width, (v1 - v0) / intr.height};
    out.push_back(hd);
  }
  return out;
}

AgentPacket make_packet(const world::CameraAgentState& camera,
                        std::vector<HumanDetection> detections) {
  return AgentPacket{camera.id, camera.pose, camera.intrinsics, std::move(detections)};
}

std::optional<double> body_yaw(const Skeleton3D& s,
                               const std::array<bool, geometry::kNumJoints>& valid) {
  using namespace geometry;
  if (!valid[kLeftShoulder] || !valid[kRightShoulder] || !valid[kLeftHip] || !valid[kRightHip])
    return std::nullopt;
  const Vec3 shoulder = s.joints[kLeftShoulder] - s.joints[kRightShoulder];
  const Vec3 spine = 0.5 * (s.joints[kLeftShoulder] + s.joints[kRightShoulder]) -
                     0.5 * (s.joints[kLeftHip] + s.joints[kRightHip]);
  const Vec3 forward = shoulder.cross(spine);
  if (forward.head<2>().norm() < 1e-9) return std::nullopt;
  return std::atan2(forward.y(), forward.x());
}

HumanEstimate reconstruct_human(std::span<const AgentPacket> packets, CameraMask subset,
                                int human_id, const ReconstructionOptions& opts) {
  HumanEstimate est;
  est.human_id = human_id;
  std::vector<const AgentPacket*> members;
  std::vector<const Detection2D*> dets;
  for (const auto& p : packets) {
    if (p.sender_id < 0 || p.sender_id >= 32 || !(subset & (1u << p.sender_id))) continue;
    if (const auto* d = p.find(human_id)) {
      members.push_back(&p);
      dets.push_back(&d->detection);
    }
  }
  for (const auto* p : members) est.cameras.push_back(p->sender_id);
  for (auto& j : est.skeleton.joints) j = Vec3::Zero();
  if (members.size() < 2) return est;

  std::vector<geometry::View> views;
  for (int j = 0; j < geometry::kNumJoints; ++j) {
    views.clear();
    for (size_t k = 0; k < members.size(); ++k)
      if (dets[k]->visible[j])
        views.push_back({members[k]->pose, members[k]->intrinsics, dets[k]->keypoints[j]});
    if (views.size() < 2) continue;
    try {
      if (opts.method == TriangulationMethod::kRansac) {
        std::mt19937_64 rng(mix_seed(opts.ransac_seed ^ mix_seed(uint64_t(human_id) << 8 | uint64_t(j)) ^
                                mix_seed(uint64_t(subset) + 0x51ed27ULL)));
        est.skeleton.joints[j] = geometry::triangulate_ransac(views, opts.ransac, rng);
      } else {
        est.skeleton.joints[j] = geometry::triangulate_dlt(views);
      }
      est.joint_valid[j] = est.skeleton.joints[j].allFinite();
      if (!est.joint_valid[j]) est.skeleton.joints[j] = Vec3::Zero();
    } catch (const DegenerateGeometry&) {
    }
  }
  std::vector<double> xs, ys, zs;
  for (int j = 0; j < geometry::kNumJoints; ++j) {
    if (!est.joint_valid[j]) continue;
    xs.push_back(est.skeleton.joints[j].x());
    ys.push_back(est.skeleton.joints[j].y());
    zs.push_back(est.skeleton.joints[j].z());
  }
  if (xs.empty()) return est;
  est.reconstructed = true;
  est.position = Vec3(median(xs), median(ys), median(zs));
  est.yaw = body_yaw(est.skeleton, est.joint_valid);
  return est;
}

ReconstructionResult reconstruct(std::span<const AgentPacket> packets, CameraMask subset,
                                 const ReconstructionOptions& opts) {
  std::vector<int> ids;
  for (const auto& p : packets)
    for (const auto& d : p.detections) ids.push_back(d.human_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  ReconstructionResult result;
  for (int id : ids) result.humans.push_back(reconstruct_human(packets, subset, id, opts));
  return result;
}

std::vector<int> human_slot_order(int agent_id, std::span<const AgentPacket> packets,
                                  const ReconstructionResult& recon, int target_id,
                                  int max_humans) {
  const AgentPacket* self = nullptr;
  for (const auto& p : packets)
    if (p.sender_id == agent_id) self = &p;
  std::vector<int> ids;
  for (const auto& h : recon.humans)
    if (h.reconstructed && h.human_id != target_id) ids.push_back(h.human_id);
  if (self)
    for (const auto& d : self->detections)
      if (d.human_id != target_id) ids.push_back(d.human_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  ids.insert(ids.begin(), target_id);
  if (static_cast<int>(ids.size()) > max_humans) ids.resize(max_humans);
  return ids;
}

std::vector<double> assemble_observation(int agent_id, std::span<const AgentPacket> packets,
                                         const ReconstructionResult& recon, int target_id,
                                         const ObservationLayout& layout) {
  std::vector<double> obs(layout.size(), 0.0);
  const AgentPacket* self = nullptr;
  for (const auto& p : packets)
    if (p.sender_id == agent_id) self = &p;
  if (!self) throw Error("agent " + std::to_string(agent_id) + " missing from packets");
  const double scale = 1.0 / layout.arena_size;

  // Camera slots: self first, then peers by id.
  std::vector<const AgentPacket*> order{self};
  std::vector<const AgentPacket*> peers;
  for (const auto& p : packets)
    if (p.sender_id != agent_id) peers.push_back(&p);
  std::sort(peers.begin(), peers.end(),
            [](auto* a, auto* b) { return a->sender_id < b->sender_id; });
  order.insert(order.end(), peers.begin(), peers.end());
  for (int slot = 0; slot < layout.max_cameras && slot < static_cast<int>(order.size()); ++slot) {
    const auto& pose = order[slot]->pose;
    double* c = obs.data() + slot * kCameraSlotSize;
    c[0] = pose.position.x() * scale;
    c[1] = pose.position.y() * scale;
    c[2] = pose.position.z() * scale;
    c[3] = std::sin(pose.yaw);
    c[4] = std::cos(pose.yaw);
    c[5] = std::sin(pose.pitch);
    c[6] = std::cos(pose.pitch);
    c[7] = slot == 0 ? 1.0 : 0.0;
    c[8] = 1.0;
  }

  const auto ids = human_slot_order(agent_id, packets, recon, target_id, layout.max_humans);
  for (size_t slot = 0; slot < ids.size(); ++slot) {
    const int id = ids[slot];
    double* h = obs.data() + layout.human_offset(static_cast<int>(slot));
    const HumanDetection* own = self->find(id);
    if (own) {
      for (int k = 0; k < 4; ++k) h[human_field::kBbox + k] = own->detection.bbox[k];
      h[human_field::kVisible] = 1.0;
      h[human_field::kJointFraction] =
          static_cast<double>(own->detection.visible_count()) / geometry::kNumJoints;
      h[human_field::kConfidence] = 1.0;
    }
    if (const auto* est = recon.find(id); est && est->reconstructed) {
      const Vec3 local = geometry::to_camera_frame(self->pose, est->position) * scale;
      for (int k = 0; k < 3; ++k) {
        h[human_field::kLocalPos + k] = local(k);
        h[human_field::kWorldPos + k] = est->position(k) * scale;
      }
      if (est->yaw) {
        const double local_yaw = geometry::wrap_angle(*est->yaw - self->pose.yaw);
        h[human_field::kLocalYaw] = std::sin(local_yaw);
        h[human_field::kLocalYaw + 1] = std::cos(local_yaw);
        h[human_field::kWorldYaw] = std::sin(*est->yaw);
        h[human_field::kWorldYaw + 1] = std::cos(*est->yaw);
      }
    }
    h[human_field::kIsTarget] = id == target_id ? 1.0 : 0.0;
  }
  return obs;
}

}  // namespace active_mocap::perception
