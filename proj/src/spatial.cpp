#include "traverse/spatial.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include "traverse/error.hpp"

namespace traverse {

RadiusCountIndex::RadiusCountIndex(std::span<const Point3> points, double cell_size)
    : cell_size_(cell_size) {
  require(cell_size > 0.0 && std::isfinite(cell_size), ErrorCode::InvalidArgument,
          "cell_size must be positive");
  require(points.size() < std::numeric_limits<std::uint32_t>::max(), ErrorCode::InvalidArgument,
          "too many points for one index");

  // Counting sort by cell: first pass sizes each bucket, second pass scatters.
  std::vector<std::uint32_t> slot_of_point;
  slot_of_point.reserve(points.size());
  std::vector<std::uint32_t> sizes;
  cells_.reserve(points.size() / 4 + 1);
  for (const auto& p : points) {
    const VoxelKey key = voxel_key(p, cell_size_);
    const auto [it, inserted] = cells_.try_emplace(key, static_cast<std::uint32_t>(sizes.size()));
    if (inserted) sizes.push_back(0);
    ++sizes[it->second];
    slot_of_point.push_back(it->second);
  }

  ranges_.resize(sizes.size());
  std::uint32_t running = 0;
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    ranges_[s] = {running, running};
    running += sizes[s];
  }

  points_.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) points_[ranges_[slot_of_point[i]].end++] = points[i];
}

std::span<const Point3> RadiusCountIndex::cell(const VoxelKey& key) const {
  const auto it = cells_.find(key);
  if (it == cells_.end()) return {};
  const Range& range = ranges_[it->second];
  return {points_.data() + range.begin, range.end - range.begin};
}

std::vector<VoxelKey> RadiusCountIndex::cell_keys() const {
  std::vector<VoxelKey> keys;
  keys.reserve(cells_.size());
  for (const auto& [k, _] : cells_) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  return keys;
}

namespace {

// Squared distance from coordinate v to the slab [lo, lo + size) along one axis.
inline double axis_gap_sq(double v, double lo, double size) {
  if (v < lo) return (lo - v) * (lo - v);
  const double hi = lo + size;
  if (v > hi) return (v - hi) * (v - hi);
  return 0.0;
}

}  // namespace

std::uint32_t RadiusCountIndex::count_within(const Point3& q, double r) const {
  require(r > 0.0, ErrorCode::InvalidArgument, "radius must be positive");
  if (points_.empty()) return 0;

  const double r2 = r * r;
  const auto shell = static_cast<std::int64_t>(std::ceil(r / cell_size_));
  const VoxelKey center = voxel_key(q, cell_size_);

  std::uint32_t count = 0;
  for (std::int64_t dx = -shell; dx <= shell; ++dx) {
    const std::int64_t ix = center.x + dx;
    const double gx = axis_gap_sq(q.x(), static_cast<double>(ix) * cell_size_, cell_size_);
    if (gx >= r2) continue;
    for (std::int64_t dy = -shell; dy <= shell; ++dy) {
      const std::int64_t iy = center.y + dy;
      const double gxy = gx + axis_gap_sq(q.y(), static_cast<double>(iy) * cell_size_, cell_size_);
      if (gxy >= r2) continue;
      for (std::int64_t dz = -shell; dz <= shell; ++dz) {
        const std::int64_t iz = center.z + dz;
        const double g = gxy + axis_gap_sq(q.z(), static_cast<double>(iz) * cell_size_, cell_size_);
        if (g >= r2) continue;
        const auto it = cells_.find(VoxelKey{ix, iy, iz});
        if (it == cells_.end()) continue;
        const Range& range = ranges_[it->second];
        const Point3* p = points_.data() + range.begin;
        const Point3* end = points_.data() + range.end;
        for (; p != end; ++p) {
          const double ddx = p->x() - q.x();
          const double ddy = p->y() - q.y();
          const double ddz = p->z() - q.z();
          count += (ddx * ddx + ddy * ddy + ddz * ddz < r2) ? 1u : 0u;
        }
      }
    }
  }
  return count;
}

RadiusCountIndex build_index(const PointCloud& cloud, double cell_size) {
  return {cloud.points, cell_size};
}

std::uint32_t count_within(const RadiusCountIndex& index, const Point3& q, double r) {
  return index.count_within(q, r);
}

std::uint32_t count_brute(std::span<const Point3> points, const Point3& q, double r) {
  require(r > 0.0, ErrorCode::InvalidArgument, "radius must be positive");
  const double r2 = r * r;
  std::uint32_t count = 0;
  for (const auto& p : points) {
    const double dx = p.x() - q.x();
    const double dy = p.y() - q.y();
    const double dz = p.z() - q.z();
    count += (dx * dx + dy * dy + dz * dz < r2) ? 1u : 0u;
  }
  return count;
}

std::uint32_t count_brute(const PointCloud& cloud, const Point3& q, double r) {
  return count_brute(std::span<const Point3>(cloud.points), q, r);
}

std::vector<std::uint32_t> count_within_batch(const RadiusCountIndex& index,
                                              std::span<const Point3> queries, double r,
                                              unsigned threads) {
  require(r > 0.0, ErrorCode::InvalidArgument, "radius must be positive");
  std::vector<std::uint32_t> counts(queries.size(), 0);
  parallel_for(queries.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) counts[i] = index.count_within(queries[i], r);
  });
  return counts;
}

BenchmarkResult benchmark_index(std::size_t num_points, std::size_t num_queries, double radius,
                                double cell_size, std::uint64_t seed, unsigned threads) {
  require(num_points > 0 && num_queries > 0, ErrorCode::InvalidArgument,
          "benchmark needs at least one point and one query");
  require(radius > 0.0 && cell_size > 0.0, ErrorCode::InvalidArgument, "radius and cell size must be positive");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> xy(0.0, 100.0);
  std::uniform_real_distribution<double> z(0.0, 4.0);
  const auto draw = [&](std::size_t n) {
    std::vector<Point3> out(n);
    for (auto& p : out) {
      const double x = xy(rng);
      const double y = xy(rng);
      p = Point3(x, y, z(rng));
    }
    return out;
  };
  const std::vector<Point3> points = draw(num_points);
  const std::vector<Point3> queries = draw(num_queries);

  using clock = std::chrono::steady_clock;
  const auto seconds = [](clock::time_point a, clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
  };

  BenchmarkResult res;
  res.num_points = num_points;
  res.num_queries = num_queries;
  res.radius = radius;
  res.cell_size = cell_size;

  const auto t0 = clock::now();
  const RadiusCountIndex index(points, cell_size);
  const auto t1 = clock::now();
  const auto indexed = count_within_batch(index, queries, radius, threads);
  const auto t2 = clock::now();
  std::vector<std::uint32_t> brute(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) brute[i] = count_brute(points, queries[i], radius);
  });
  const auto t3 = clock::now();

  res.build_seconds = seconds(t0, t1);
  res.index_seconds = seconds(t1, t2);
  res.brute_seconds = seconds(t2, t3);
  res.counts_match = indexed == brute;
  for (auto c : indexed) res.total_neighbors += c;
  return res;
}

}  // namespace traverse
