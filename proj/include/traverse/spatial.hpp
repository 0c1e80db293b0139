#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "traverse/core.hpp"

namespace traverse {

/// Immutable voxel hash grid answering fixed-radius neighbor counts.
///
/// Points are bucketed by floor(p / cell_size) and stored contiguously per
/// cell. A query visits only the ceil(r / cell_size) shell of cells around
/// the query cell, skipping cells whose nearest face is already >= r away.
/// Counting uses squared distances against r^2 with a strict `<`.
class RadiusCountIndex {
 public:
  RadiusCountIndex(std::span<const Point3> points, double cell_size);

  [[nodiscard]] double cell_size() const { return cell_size_; }
  [[nodiscard]] std::size_t total_points() const { return points_.size(); }
  [[nodiscard]] std::size_t num_cells() const { return cells_.size(); }

  /// Points stored in the given cell; empty if the cell is unoccupied.
  [[nodiscard]] std::span<const Point3> cell(const VoxelKey& key) const;

  /// Occupied cell keys in ascending order.
  [[nodiscard]] std::vector<VoxelKey> cell_keys() const;

  [[nodiscard]] std::uint32_t count_within(const Point3& q, double r) const;

 private:
  struct Range {
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
  };

  double cell_size_;
  std::unordered_map<VoxelKey, std::uint32_t, VoxelKeyHash> cells_;  // key -> slot in ranges_
  std::vector<Range> ranges_;
  std::vector<Point3> points_;  // grouped by cell
};

/// Errors: InvalidArgument if cell_size <= 0.
RadiusCountIndex build_index(const PointCloud& cloud, double cell_size);

/// Number of indexed points with ||p - q|| < r. Errors: InvalidArgument if r <= 0.
std::uint32_t count_within(const RadiusCountIndex& index, const Point3& q, double r);

/// Linear-scan reference for count_within.
std::uint32_t count_brute(std::span<const Point3> points, const Point3& q, double r);
std::uint32_t count_brute(const PointCloud& cloud, const Point3& q, double r);

/// Order-preserving batch of count_within, split across `threads` workers
/// (0 = auto). Results are identical for any thread count.
std::vector<std::uint32_t> count_within_batch(const RadiusCountIndex& index,
                                              std::span<const Point3> queries, double r,
                                              unsigned threads = 0);

struct BenchmarkResult {
  std::size_t num_points = 0;
  std::size_t num_queries = 0;
  double radius = 0.0;
  double cell_size = 0.0;
  double build_seconds = 0.0;
  double index_seconds = 0.0;  // batch counting only
  double brute_seconds = 0.0;
  bool counts_match = false;
  std::uint64_t total_neighbors = 0;

  /// Brute-force time over indexed time including the build.
  [[nodiscard]] double speedup() const { return brute_seconds / (build_seconds + index_seconds); }
};

/// Times indexed against brute-force batch counting on points drawn
/// uniformly from a 100 x 100 x 4 m slab (queries from the same slab).
/// Errors: InvalidArgument.
BenchmarkResult benchmark_index(std::size_t num_points, std::size_t num_queries, double radius,
                                double cell_size, std::uint64_t seed, unsigned threads = 0);

}  // namespace traverse
