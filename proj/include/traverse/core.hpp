#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace traverse {

/// A point in meters. Global coordinates are kept relative to the dataset
/// origin offset, in 64-bit reals.
using Point3 = Eigen::Vector3d;

/// Rigid transform taking sensor-frame points into the global frame.
/// The rotation is a unit quaternion with component order (w, x, y, z).
class Pose6DoF {
 public:
  Pose6DoF() = default;

  /// Normalizes the quaternion. Throws InvalidArgument for a zero or
  /// non-finite quaternion.
  Pose6DoF(const Point3& translation, const Eigen::Quaterniond& rotation);

  /// Convenience constructor using the file-format component order.
  static Pose6DoF from_components(double tx, double ty, double tz, double qw, double qx,
                                  double qy, double qz);

  static Pose6DoF identity() { return {}; }

  /// Pure rotation about +z, then translation.
  static Pose6DoF from_yaw(double yaw, const Point3& translation = Point3::Zero());

  [[nodiscard]] const Point3& translation() const { return translation_; }
  [[nodiscard]] const Eigen::Quaterniond& rotation() const { return rotation_; }
  [[nodiscard]] Eigen::Matrix3d rotation_matrix() const { return rotation_.toRotationMatrix(); }

  [[nodiscard]] Point3 apply(const Point3& p) const { return rotation_ * p + translation_; }

 private:
  Point3 translation_ = Point3::Zero();
  Eigen::Quaterniond rotation_ = Eigen::Quaterniond::Identity();
};

/// compose(a, b) applies b first, then a.
Pose6DoF compose(const Pose6DoF& a, const Pose6DoF& b);
Pose6DoF inverse(const Pose6DoF& pose);

/// Ordered points with an optional parallel intensity channel in [0, 1].
struct PointCloud {
  std::vector<Point3> points;
  std::vector<double> intensity;  // empty, or same length as points

  PointCloud() = default;
  explicit PointCloud(std::vector<Point3> pts, std::vector<double> inten = {});

  [[nodiscard]] std::size_t size() const { return points.size(); }
  [[nodiscard]] bool empty() const { return points.empty(); }
  [[nodiscard]] bool has_intensity() const { return !intensity.empty(); }
  [[nodiscard]] double intensity_at(std::size_t i) const {
    return intensity.empty() ? 0.0 : intensity[i];
  }

  void append(const PointCloud& other);
};

PointCloud transform_to_global(const PointCloud& cloud, const Pose6DoF& pose);

struct Frame {
  std::uint64_t frame_id = 0;
  PointCloud cloud;  // sensor frame
  Pose6DoF pose;     // sensor -> global
  double arclength = 0.0;
};

/// One pass along the route. Construction validates that there is at least
/// one frame, ids are strictly increasing and arclengths non-decreasing.
class Traversal {
 public:
  Traversal(std::uint64_t id, std::vector<Frame> frames);

  [[nodiscard]] std::uint64_t id() const { return id_; }
  [[nodiscard]] const std::vector<Frame>& frames() const { return frames_; }
  [[nodiscard]] double min_arclength() const { return frames_.front().arclength; }
  [[nodiscard]] double max_arclength() const { return frames_.back().arclength; }

 private:
  std::uint64_t id_;
  std::vector<Frame> frames_;
};

/// Accumulated global-frame cloud of one traversal around route location l.
struct DenseCloud {
  std::uint64_t traversal_id = 0;
  double location = 0.0;
  PointCloud cloud;
  std::vector<std::uint64_t> source_frame_ids;
};

/// Integer voxel coordinate, floor(p / size) per axis.
struct VoxelKey {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t z = 0;

  friend bool operator==(const VoxelKey&, const VoxelKey&) = default;
  friend auto operator<=>(const VoxelKey&, const VoxelKey&) = default;
};

inline VoxelKey voxel_key(const Point3& p, double voxel_size) {
  return {static_cast<std::int64_t>(std::floor(p.x() / voxel_size)),
          static_cast<std::int64_t>(std::floor(p.y() / voxel_size)),
          static_cast<std::int64_t>(std::floor(p.z() / voxel_size))};
}

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const noexcept {
    // Large primes from the classic spatial-hashing scheme.
    return static_cast<std::size_t>(k.x * 73856093LL) ^ static_cast<std::size_t>(k.y * 19349669LL) ^
           static_cast<std::size_t>(k.z * 83492791LL);
  }
};

/// Number of worker threads: explicit value if non-zero, else the
/// TRAVERSE_P2_THREADS environment variable, else hardware concurrency.
unsigned resolve_threads(unsigned requested);

/// Runs body(begin, end) over contiguous chunks of [0, n). Chunks are
/// disjoint so per-index results never depend on the thread count.
void parallel_for(std::size_t n, unsigned threads,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace traverse
