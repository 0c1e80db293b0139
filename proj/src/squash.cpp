#include "traverse/squash.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "binary_io.hpp"
#include "traverse/error.hpp"

namespace traverse {

void VoxelGridSpec::validate() const {
  require(voxel_size > 0.0 && std::isfinite(voxel_size), ErrorCode::InvalidArgument,
          "voxel_size must be positive");
  require(min.allFinite() && max.allFinite() && (max.array() > min.array()).all(),
          ErrorCode::InvalidArgument, "grid bounds must be finite and non-degenerate");
}

VoxelGridSpec make_grid_spec(std::span<const DenseCloud> clouds, double voxel_size) {
  require(voxel_size > 0.0, ErrorCode::InvalidArgument, "voxel_size must be positive");
  Point3 lo = Point3::Constant(std::numeric_limits<double>::infinity());
  Point3 hi = Point3::Constant(-std::numeric_limits<double>::infinity());
  std::size_t n = 0;
  for (const auto& d : clouds) {
    for (const auto& p : d.cloud.points) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
      ++n;
    }
  }
  require(n > 0, ErrorCode::EmptyInput, "cannot derive grid bounds from empty clouds");
  VoxelGridSpec spec;
  spec.voxel_size = voxel_size;
  spec.min = lo - Point3::Constant(voxel_size);
  spec.max = hi + Point3::Constant(voxel_size);
  return spec;
}

std::optional<std::span<const float>> VoxelFeatures::find(const VoxelKey& key) const {
  const auto it = slot_.find(key);
  if (it == slot_.end()) return std::nullopt;
  return std::span<const float>(data_.data() + it->second * dim_, dim_);
}

void VoxelFeatures::insert(const VoxelKey& key, std::span<const float> features) {
  require(features.size() == dim_, ErrorCode::DimensionMismatch,
          "feature vector has " + std::to_string(features.size()) + " values, store expects " +
              std::to_string(dim_));
  const auto [it, inserted] = slot_.try_emplace(key, keys_.size());
  require(inserted, ErrorCode::InvalidArgument, "voxel inserted twice");
  keys_.push_back(key);
  data_.insert(data_.end(), features.begin(), features.end());
}

std::vector<VoxelKey> VoxelFeatures::sorted_keys() const {
  std::vector<VoxelKey> out = keys_;
  std::sort(out.begin(), out.end());
  return out;
}

bool operator==(const VoxelFeatures& a, const VoxelFeatures& b) {
  if (!(a.spec_ == b.spec_) || a.dim_ != b.dim_ || a.size() != b.size()) return false;
  for (const auto& key : a.keys_) {
    const auto va = a.find(key);
    const auto vb = b.find(key);
    if (!vb || !std::equal(va->begin(), va->end(), vb->begin(), vb->end())) return false;
  }
  return true;
}

void HandcraftedFeaturizer::describe(const VoxelKey& key, const VoxelGridSpec& spec,
                                     std::span<const Point3> points,
                                     std::span<const double> intensity,
                                     std::span<float> out) const {
  const Point3 center = spec.voxel_center(key);
  const auto n = static_cast<double>(points.size());

  double sum_z = 0.0;
  double min_z = std::numeric_limits<double>::infinity();
  double max_z = -std::numeric_limits<double>::infinity();
  double sum_radial = 0.0;
  double sum_intensity = 0.0;
  unsigned occupied_mask = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Point3 d = points[i] - center;
    sum_z += d.z();
    min_z = std::min(min_z, d.z());
    max_z = std::max(max_z, d.z());
    sum_radial += d.norm();
    sum_intensity += intensity.empty() ? 0.0 : intensity[i];
    const unsigned octant = (d.x() >= 0.0 ? 1u : 0u) | (d.y() >= 0.0 ? 2u : 0u) | (d.z() >= 0.0 ? 4u : 0u);
    occupied_mask |= 1u << octant;
  }
  const double mean_z = sum_z / n;
  double var_z = 0.0;
  for (const auto& p : points) {
    const double dz = (p.z() - center.z()) - mean_z;
    var_z += dz * dz;
  }
  var_z /= n;

  out[0] = static_cast<float>(std::log1p(n));
  out[1] = static_cast<float>(mean_z);
  out[2] = static_cast<float>(std::sqrt(var_z));
  out[3] = static_cast<float>(sum_intensity / n);
  out[4] = static_cast<float>(std::popcount(occupied_mask) / 8.0);
  out[5] = static_cast<float>(sum_radial / n);
  out[6] = static_cast<float>(min_z);
  out[7] = static_cast<float>(max_z);
}

FeaturizeResult featurize_traversal(const DenseCloud& dense, const VoxelGridSpec& spec,
                                    const VoxelFeaturizer& featurizer) {
  spec.validate();
  // Group point indices by voxel, keeping first-seen voxel order.
  std::unordered_map<VoxelKey, std::size_t, VoxelKeyHash> slot;
  std::vector<VoxelKey> order;
  std::vector<std::vector<std::size_t>> members;
  std::size_t dropped = 0;
  const auto& pts = dense.cloud.points;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!spec.contains(pts[i])) {
      ++dropped;
      continue;
    }
    const VoxelKey key = voxel_key(pts[i], spec.voxel_size);
    const auto [it, inserted] = slot.try_emplace(key, order.size());
    if (inserted) {
      order.push_back(key);
      members.emplace_back();
    }
    members[it->second].push_back(i);
  }
  if (order.empty()) {
    throw Error(ErrorCode::EmptyAfterCropping,
                "traversal " + std::to_string(dense.traversal_id) + ": no points inside grid bounds (" +
                    std::to_string(dropped) + " dropped)");
  }

  // Featurize in sorted key order so the store layout is canonical.
  std::vector<std::size_t> perm(order.size());
  for (std::size_t s = 0; s < perm.size(); ++s) perm[s] = s;
  std::sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) { return order[a] < order[b]; });

  FeaturizeResult result{VoxelFeatures(spec, featurizer.dimension()), dropped};
  std::vector<float> buffer(featurizer.dimension());
  std::vector<Point3> vp;
  std::vector<double> vi;
  for (std::size_t s : perm) {
    vp.clear();
    vi.clear();
    for (std::size_t i : members[s]) {
      vp.push_back(pts[i]);
      vi.push_back(dense.cloud.intensity_at(i));
    }
    featurizer.describe(order[s], spec, vp, vi, buffer);
    result.features.insert(order[s], buffer);
  }
  return result;
}

std::string to_string(AggregationMode mode) { return mode == AggregationMode::Mean ? "mean" : "max"; }

AggregationMode parse_aggregation_mode(const std::string& text) {
  if (text == "mean") return AggregationMode::Mean;
  if (text == "max") return AggregationMode::Max;
  throw Error(ErrorCode::InvalidArgument, "aggregation mode must be 'mean' or 'max', got '" + text + "'");
}

VoxelFeatures aggregate(std::span<const VoxelFeatures> per_traversal, AggregationMode mode) {
  require(!per_traversal.empty(), ErrorCode::EmptyInput, "nothing to aggregate");
  const VoxelGridSpec& spec = per_traversal.front().spec();
  const std::size_t dim = per_traversal.front().dim();
  for (const auto& f : per_traversal) {
    require(f.spec() == spec && f.dim() == dim, ErrorCode::SpecMismatch,
            "all per-traversal stores must share grid spec and feature dimension");
  }

  std::vector<VoxelKey> keys;
  for (const auto& f : per_traversal) keys.insert(keys.end(), f.keys().begin(), f.keys().end());
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

  VoxelFeatures out(spec, dim);
  std::vector<double> acc(dim);
  std::vector<float> merged(dim);
  for (const auto& key : keys) {
    std::size_t present = 0;
    for (const auto& f : per_traversal) {
      const auto v = f.find(key);
      if (!v) continue;
      for (std::size_t k = 0; k < dim; ++k) {
        const double x = (*v)[k];
        if (present == 0) {
          acc[k] = x;
        } else if (mode == AggregationMode::Mean) {
          acc[k] += x;
        } else {
          acc[k] = std::max(acc[k], x);
        }
      }
      ++present;
    }
    for (std::size_t k = 0; k < dim; ++k) {
      merged[k] = static_cast<float>(mode == AggregationMode::Mean ? acc[k] / static_cast<double>(present)
                                                                   : acc[k]);
    }
    out.insert(key, merged);
  }
  return out;
}

std::vector<double> query_point(const VoxelFeatures& store, const Point3& q) {
  std::vector<double> out(store.dim() + 1, 0.0);
  const auto v = store.find(voxel_key(q, store.spec().voxel_size));
  if (v) {
    std::copy(v->begin(), v->end(), out.begin());
    out.back() = 1.0;
  }
  return out;
}

void save_store(const VoxelFeatures& store, const std::filesystem::path& path) {
  detail::ByteWriter out;
  out.magic("SQF1");
  const auto& spec = store.spec();
  out.put(spec.voxel_size);
  for (int k = 0; k < 3; ++k) out.put(spec.min[k]);
  for (int k = 0; k < 3; ++k) out.put(spec.max[k]);
  out.put(static_cast<std::uint32_t>(store.dim()));
  out.put(static_cast<std::uint64_t>(store.size()));
  constexpr auto lo = std::numeric_limits<std::int32_t>::min();
  constexpr auto hi = std::numeric_limits<std::int32_t>::max();
  for (const auto& key : store.sorted_keys()) {
    for (std::int64_t c : {key.x, key.y, key.z}) {
      require(c >= lo && c <= hi, ErrorCode::InvalidArgument, "voxel key exceeds SQF1 int32 range");
      out.put(static_cast<std::int32_t>(c));
    }
    const std::span<const float> values = *store.find(key);
    for (float v : values) out.put(v);
  }
  out.save(path);
}

VoxelFeatures load_store(const std::filesystem::path& path) {
  detail::ByteReader in(path);
  in.expect_magic("SQF1");
  VoxelGridSpec spec;
  spec.voxel_size = in.get<double>();
  for (int k = 0; k < 3; ++k) spec.min[k] = in.get<double>();
  for (int k = 0; k < 3; ++k) spec.max[k] = in.get<double>();
  const auto dim = in.get<std::uint32_t>();
  const auto count = in.get<std::uint64_t>();
  const std::size_t record = 12 + 4 * static_cast<std::size_t>(dim);
  require(count <= in.remaining() / record, ErrorCode::TruncatedFile,
          in.name() + ": header promises " + std::to_string(count) + " records at byte offset " +
              std::to_string(in.offset()) + " but the file is shorter");

  VoxelFeatures store(spec, dim);
  std::vector<float> v(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    VoxelKey key;
    key.x = in.get<std::int32_t>();
    key.y = in.get<std::int32_t>();
    key.z = in.get<std::int32_t>();
    for (auto& x : v) x = in.get<float>();
    store.insert(key, v);
  }
  return store;
}

}  // namespace traverse
