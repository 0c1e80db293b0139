#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "traverse/core.hpp"

namespace traverse {

/// Voxel size plus the crop box (global frame) shared by every traversal of
/// a location. Voxel keys are floor(p / voxel_size), independent of bounds.
struct VoxelGridSpec {
  double voxel_size = 0.5;
  Point3 min = Point3::Zero();
  Point3 max = Point3::Zero();

  void validate() const;
  [[nodiscard]] bool contains(const Point3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  [[nodiscard]] Point3 voxel_center(const VoxelKey& key) const {
    return Point3((static_cast<double>(key.x) + 0.5) * voxel_size,
                  (static_cast<double>(key.y) + 0.5) * voxel_size,
                  (static_cast<double>(key.z) + 0.5) * voxel_size);
  }

  friend bool operator==(const VoxelGridSpec& a, const VoxelGridSpec& b) {
    return a.voxel_size == b.voxel_size && a.min == b.min && a.max == b.max;
  }
};

/// Extent of all clouds, padded by one voxel on every side.
/// Errors: EmptyInput if every cloud is empty.
VoxelGridSpec make_grid_spec(std::span<const DenseCloud> clouds, double voxel_size);

/// Sparse voxel -> fixed-length float32 feature vector.
class VoxelFeatures {
 public:
  VoxelFeatures() = default;
  VoxelFeatures(VoxelGridSpec spec, std::size_t dim) : spec_(spec), dim_(dim) {}

  [[nodiscard]] const VoxelGridSpec& spec() const { return spec_; }
  [[nodiscard]] std::size_t dim() const { return dim_; }
  [[nodiscard]] std::size_t size() const { return keys_.size(); }
  [[nodiscard]] bool empty() const { return keys_.empty(); }

  [[nodiscard]] std::optional<std::span<const float>> find(const VoxelKey& key) const;

  /// Errors: DimensionMismatch if features.size() != dim, InvalidArgument if
  /// the key is already present.
  void insert(const VoxelKey& key, std::span<const float> features);

  /// Keys in insertion order.
  [[nodiscard]] const std::vector<VoxelKey>& keys() const { return keys_; }
  [[nodiscard]] std::vector<VoxelKey> sorted_keys() const;

  friend bool operator==(const VoxelFeatures& a, const VoxelFeatures& b);

 private:
  VoxelGridSpec spec_;
  std::size_t dim_ = 0;
  std::vector<VoxelKey> keys_;
  std::vector<float> data_;
  std::unordered_map<VoxelKey, std::size_t, VoxelKeyHash> slot_;
};

/// Turns the points of one voxel into a feature vector. Implementations must
/// be deterministic; a learned featurizer can be plugged in here.
class VoxelFeaturizer {
 public:
  virtual ~VoxelFeaturizer() = default;
  [[nodiscard]] virtual std::size_t dimension() const = 0;
  [[nodiscard]] virtual std::string name() const = 0;
  virtual void describe(const VoxelKey& key, const VoxelGridSpec& spec,
                        std::span<const Point3> points, std::span<const double> intensity,
                        std::span<float> out) const = 0;
};

/// Eight statistics per voxel, offsets measured from the voxel center:
///   0 ln(1 + count)            4 occupied fraction of the 2x2x2 sub-voxels
///   1 mean z offset            5 mean distance to the voxel center
///   2 population stdev of z    6 min z offset
///   3 mean intensity           7 max z offset
class HandcraftedFeaturizer final : public VoxelFeaturizer {
 public:
  static constexpr std::size_t kDimension = 8;
  static constexpr std::size_t kCountFeature = 0;

  [[nodiscard]] std::size_t dimension() const override { return kDimension; }
  [[nodiscard]] std::string name() const override { return "handcrafted8"; }
  void describe(const VoxelKey& key, const VoxelGridSpec& spec, std::span<const Point3> points,
                std::span<const double> intensity, std::span<float> out) const override;
};

struct FeaturizeResult {
  VoxelFeatures features;
  std::size_t dropped_points = 0;  // outside spec bounds
};

/// Errors: EmptyAfterCropping if no point lies inside the spec bounds.
FeaturizeResult featurize_traversal(const DenseCloud& dense, const VoxelGridSpec& spec,
                                    const VoxelFeaturizer& featurizer = HandcraftedFeaturizer{});

enum class AggregationMode { Mean, Max };

std::string to_string(AggregationMode mode);
/// Accepts "mean" or "max". Errors: InvalidArgument.
AggregationMode parse_aggregation_mode(const std::string& text);

/// Per-voxel elementwise mean (over the traversals occupying the voxel) or
/// max. Errors: EmptyInput, SpecMismatch.
VoxelFeatures aggregate(std::span<const VoxelFeatures> per_traversal, AggregationMode mode);

/// Feature vector of the voxel containing q with an occupancy flag appended
/// (dimension d + 1). Unoccupied voxels give zeros and flag 0.
std::vector<double> query_point(const VoxelFeatures& store, const Point3& q);

// SQF1: "SQF1", f64 voxel_size, f64 min[3], f64 max[3], u32 d, u64 count,
// then count records sorted by key: i32 x, y, z, d x f32.
void save_store(const VoxelFeatures& store, const std::filesystem::path& path);
VoxelFeatures load_store(const std::filesystem::path& path);

}  // namespace traverse
