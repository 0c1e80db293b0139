#include "traverse/core.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <limits>
#include <string>
#include <thread>

#include "traverse/error.hpp"

namespace traverse {

Pose6DoF::Pose6DoF(const Point3& translation, const Eigen::Quaterniond& rotation)
    : translation_(translation), rotation_(rotation) {
  const double norm = rotation_.norm();
  require(std::isfinite(norm) && norm > 0.0, ErrorCode::InvalidArgument,
          "pose quaternion must be finite and non-zero");
  require(translation_.allFinite(), ErrorCode::InvalidArgument, "pose translation must be finite");
  // Already-unit quaternions are kept as is so pose files re-load bit-exactly.
  if (std::abs(norm - 1.0) > 4.0 * std::numeric_limits<double>::epsilon()) rotation_.coeffs() /= norm;
}

Pose6DoF Pose6DoF::from_components(double tx, double ty, double tz, double qw, double qx,
                                   double qy, double qz) {
  return {Point3(tx, ty, tz), Eigen::Quaterniond(qw, qx, qy, qz)};
}

Pose6DoF Pose6DoF::from_yaw(double yaw, const Point3& translation) {
  return {translation, Eigen::Quaterniond(std::cos(yaw / 2), 0.0, 0.0, std::sin(yaw / 2))};
}

Pose6DoF compose(const Pose6DoF& a, const Pose6DoF& b) {
  return {a.rotation() * b.translation() + a.translation(), a.rotation() * b.rotation()};
}

Pose6DoF inverse(const Pose6DoF& pose) {
  const Eigen::Quaterniond inv = pose.rotation().conjugate();
  return {-(inv * pose.translation()), inv};
}

PointCloud::PointCloud(std::vector<Point3> pts, std::vector<double> inten)
    : points(std::move(pts)), intensity(std::move(inten)) {
  require(intensity.empty() || intensity.size() == points.size(), ErrorCode::LengthMismatch,
          "intensity channel length " + std::to_string(intensity.size()) +
              " differs from point count " + std::to_string(points.size()));
}

void PointCloud::append(const PointCloud& other) {
  if (other.empty()) return;
  if (has_intensity() || other.has_intensity()) {
    intensity.resize(points.size(), 0.0);
    if (other.has_intensity()) {
      intensity.insert(intensity.end(), other.intensity.begin(), other.intensity.end());
    } else {
      intensity.insert(intensity.end(), other.size(), 0.0);
    }
  }
  points.insert(points.end(), other.points.begin(), other.points.end());
}

PointCloud transform_to_global(const PointCloud& cloud, const Pose6DoF& pose) {
  const Eigen::Matrix3d rot = pose.rotation_matrix();
  const Point3& t = pose.translation();
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.emplace_back(rot * p + t);
  out.intensity = cloud.intensity;
  return out;
}

Traversal::Traversal(std::uint64_t id, std::vector<Frame> frames)
    : id_(id), frames_(std::move(frames)) {
  require(!frames_.empty(), ErrorCode::InvalidArgument,
          "traversal " + std::to_string(id_) + " has no frames");
  for (std::size_t i = 1; i < frames_.size(); ++i) {
    require(frames_[i].frame_id > frames_[i - 1].frame_id, ErrorCode::InvalidArgument,
            "traversal " + std::to_string(id_) + ": frame ids must be strictly increasing");
    require(frames_[i].arclength >= frames_[i - 1].arclength,
            ErrorCode::NonMonotonicArclength,
            "traversal " + std::to_string(id_) + ": arclength decreases at frame " +
                std::to_string(frames_[i].frame_id));
  }
}

unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("TRAVERSE_P2_THREADS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, unsigned threads,
                  const std::function<void(std::size_t, std::size_t)>& body) {
  if (n == 0) return;
  const std::size_t workers = std::min<std::size_t>(resolve_threads(threads), n);
  if (workers <= 1) {
    body(0, n);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(n, begin + chunk);
      if (begin >= end) break;
      pool.emplace_back([&body, &errors, w, begin, end] {
        try {
          body(begin, end);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace traverse
