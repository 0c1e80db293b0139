#include "traverse/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <unordered_map>

#include <json.hpp>

#include "binary_io.hpp"
#include "traverse/error.hpp"

namespace traverse {

namespace fs = std::filesystem;

void AccumulationConfig::validate() const {
  require(spacing_m > 0.0 && std::isfinite(spacing_m), ErrorCode::InvalidArgument,
          "spacing_m must be positive");
  require(window_hm > 0.0 && std::isfinite(window_hm), ErrorCode::InvalidArgument,
          "window_hm must be positive");
  require(window_hm >= spacing_m / 2.0, ErrorCode::InvalidArgument,
          "window_hm must be at least spacing_m / 2 so locations tile the route");
}

PointCloud load_point_cloud(const fs::path& path) {
  detail::ByteReader in(path);
  in.expect_magic("PCB1");
  const auto count = in.get<std::uint32_t>();
  in.ensure(static_cast<std::size_t>(count) * 16);

  PointCloud cloud;
  cloud.points.reserve(count);
  cloud.intensity.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t record_offset = in.offset();
    const float x = in.get<float>();
    const float y = in.get<float>();
    const float z = in.get<float>();
    const float intensity = in.get<float>();
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z) || !std::isfinite(intensity)) {
      throw Error(ErrorCode::NonFinitePoint, in.name() + ": non-finite value in record " +
                                                 std::to_string(i) + " at byte offset " +
                                                 std::to_string(record_offset));
    }
    cloud.points.emplace_back(x, y, z);
    cloud.intensity.push_back(intensity);
  }
  return cloud;
}

void write_point_cloud(const PointCloud& cloud, const fs::path& path) {
  require(cloud.size() <= std::numeric_limits<std::uint32_t>::max(), ErrorCode::InvalidArgument,
          "cloud too large for PCB1");
  detail::ByteWriter out;
  out.magic("PCB1");
  out.put(static_cast<std::uint32_t>(cloud.size()));
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point3& p = cloud.points[i];
    out.put(static_cast<float>(p.x()));
    out.put(static_cast<float>(p.y()));
    out.put(static_cast<float>(p.z()));
    out.put(static_cast<float>(cloud.intensity_at(i)));
  }
  out.save(path);
}

namespace {

template <typename T>
bool parse_token(std::string_view token, T& value) {
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  return ec == std::errc() && ptr == end;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) tokens.push_back(line.substr(start, i - start));
  }
  return tokens;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, ptr};
}

}  // namespace

std::vector<PoseRecord> load_poses(const fs::path& path, const Point3& origin) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open " + path.string());

  std::vector<PoseRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = split_ws(line);
    if (tokens.empty() || tokens.front().front() == '#') continue;

    const auto malformed = [&](const std::string& why) {
      return Error(ErrorCode::MalformedRecord,
                   path.string() + ":" + std::to_string(line_no) + ": " + why);
    };
    if (tokens.size() != 9) throw malformed("expected 9 fields, got " + std::to_string(tokens.size()));

    std::uint64_t id = 0;
    if (!parse_token(tokens[0], id)) throw malformed("bad frame_id '" + std::string(tokens[0]) + "'");
    double v[8];
    for (int k = 0; k < 8; ++k) {
      if (!parse_token(tokens[k + 1], v[k]) || !std::isfinite(v[k])) {
        throw malformed("bad numeric field '" + std::string(tokens[k + 1]) + "'");
      }
    }
    const double qnorm = std::sqrt(v[3] * v[3] + v[4] * v[4] + v[5] * v[5] + v[6] * v[6]);
    if (qnorm == 0.0) throw malformed("zero quaternion");

    PoseRecord rec;
    rec.frame_id = id;
    rec.pose = Pose6DoF::from_components(v[0] - origin.x(), v[1] - origin.y(), v[2] - origin.z(),
                                         v[3], v[4], v[5], v[6]);
    rec.arclength = v[7];
    if (!records.empty() && rec.arclength < records.back().arclength) {
      throw Error(ErrorCode::NonMonotonicArclength,
                  path.string() + ":" + std::to_string(line_no) + ": arclength " +
                      format_double(rec.arclength) + " after " +
                      format_double(records.back().arclength));
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void write_poses(std::span<const PoseRecord> poses, const fs::path& path, const Point3& origin) {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << "# frame_id tx ty tz qw qx qy qz arclength\n";
  for (const auto& rec : poses) {
    const Point3 t = rec.pose.translation() + origin;
    const auto& q = rec.pose.rotation();
    out << rec.frame_id << ' ' << format_double(t.x()) << ' ' << format_double(t.y()) << ' '
        << format_double(t.z()) << ' ' << format_double(q.w()) << ' ' << format_double(q.x())
        << ' ' << format_double(q.y()) << ' ' << format_double(q.z()) << ' '
        << format_double(rec.arclength) << '\n';
  }
  require(static_cast<bool>(out), ErrorCode::IoError, "write failed for " + path.string());
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open manifest " + path.string());

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ManifestInvalid, path.string() + ": " + e.what());
  }

  const fs::path base = path.parent_path();
  const auto resolve = [&](const std::string& p) {
    const fs::path candidate(p);
    return candidate.is_absolute() ? candidate : base / candidate;
  };

  DatasetManifest manifest;
  try {
    if (doc.contains("origin_offset")) {
      const auto& o = doc.at("origin_offset");
      if (!o.is_array() || o.size() != 3) {
        throw Error(ErrorCode::ManifestInvalid, path.string() + ": origin_offset must be [x, y, z]");
      }
      manifest.origin_offset = Point3(o[0].get<double>(), o[1].get<double>(), o[2].get<double>());
    }
    if (!doc.contains("traversals") || doc.at("traversals").empty()) {
      throw Error(ErrorCode::ManifestEmpty, path.string() + ": no traversals listed");
    }
    for (const auto& t : doc.at("traversals")) {
      TraversalEntry entry;
      entry.traversal_id = t.at("id").get<std::uint64_t>();
      entry.pose_file = resolve(t.at("poses").get<std::string>());
      for (const auto& f : t.at("frames")) entry.frame_files.push_back(resolve(f.get<std::string>()));
      manifest.traversals.push_back(std::move(entry));
    }
    if (doc.contains("locations")) manifest.locations = doc.at("locations").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ManifestInvalid, path.string() + ": " + e.what());
  }

  std::vector<std::uint64_t> ids;
  for (const auto& t : manifest.traversals) {
    require(std::find(ids.begin(), ids.end(), t.traversal_id) == ids.end(),
            ErrorCode::ManifestInvalid,
            path.string() + ": duplicate traversal id " + std::to_string(t.traversal_id));
    ids.push_back(t.traversal_id);
    require(fs::exists(t.pose_file), ErrorCode::IoError, "missing pose file " + t.pose_file.string());
    for (const auto& f : t.frame_files) {
      require(fs::exists(f), ErrorCode::IoError, "missing frame file " + f.string());
    }
  }
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  const fs::path base = path.parent_path();
  const auto relative = [&](const fs::path& p) {
    if (base.empty()) return p.generic_string();
    std::error_code ec;
    const fs::path rel = fs::relative(p, base, ec);
    return (ec || rel.empty()) ? p.generic_string() : rel.generic_string();
  };

  nlohmann::json doc;
  doc["origin_offset"] = {manifest.origin_offset.x(), manifest.origin_offset.y(),
                          manifest.origin_offset.z()};
  doc["traversals"] = nlohmann::json::array();
  for (const auto& t : manifest.traversals) {
    nlohmann::json entry;
    entry["id"] = t.traversal_id;
    entry["poses"] = relative(t.pose_file);
    entry["frames"] = nlohmann::json::array();
    for (const auto& f : t.frame_files) entry["frames"].push_back(relative(f));
    doc["traversals"].push_back(std::move(entry));
  }
  if (manifest.locations) doc["locations"] = *manifest.locations;

  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
}

std::vector<Traversal> load_traversals(const DatasetManifest& manifest) {
  require(!manifest.traversals.empty(), ErrorCode::ManifestEmpty, "manifest lists no traversals");
  std::vector<Traversal> traversals;
  traversals.reserve(manifest.traversals.size());
  for (const auto& entry : manifest.traversals) {
    const auto poses = load_poses(entry.pose_file, manifest.origin_offset);
    require(poses.size() == entry.frame_files.size(), ErrorCode::ManifestInvalid,
            "traversal " + std::to_string(entry.traversal_id) + ": " +
                std::to_string(entry.frame_files.size()) + " frame files but " +
                std::to_string(poses.size()) + " pose records");
    std::vector<Frame> frames;
    frames.reserve(poses.size());
    for (std::size_t i = 0; i < poses.size(); ++i) {
      frames.push_back(Frame{poses[i].frame_id, load_point_cloud(entry.frame_files[i]),
                             poses[i].pose, poses[i].arclength});
    }
    traversals.emplace_back(entry.traversal_id, std::move(frames));
  }
  return traversals;
}

DenseCloud accumulate_dense(const Traversal& traversal, double location,
                            const AccumulationConfig& cfg) {
  cfg.validate();
  DenseCloud dense;
  dense.traversal_id = traversal.id();
  dense.location = location;

  const double lo = location - cfg.window_hm;
  const double hi = location + cfg.window_hm;
  std::size_t total = 0;
  for (const auto& f : traversal.frames()) {
    if (f.arclength >= lo && f.arclength <= hi) total += f.cloud.size();
  }
  dense.cloud.points.reserve(total);
  for (const auto& f : traversal.frames()) {
    if (f.arclength < lo || f.arclength > hi) continue;
    dense.cloud.append(transform_to_global(f.cloud, f.pose));
    dense.source_frame_ids.push_back(f.frame_id);
  }
  if (dense.source_frame_ids.empty()) {
    throw Error(ErrorCode::NoFramesInWindow,
                "traversal " + std::to_string(traversal.id()) + " has no frames within " +
                    format_double(cfg.window_hm) + " m of location " + format_double(location));
  }
  return dense;
}

std::vector<double> locations_for_route(std::span<const Traversal> traversals,
                                        const AccumulationConfig& cfg) {
  cfg.validate();
  require(!traversals.empty(), ErrorCode::EmptyInput, "no traversals");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& t : traversals) {
    lo = std::min(lo, t.min_arclength());
    hi = std::max(hi, t.max_arclength());
  }
  // The 1e-9 slack absorbs representation error in (hi - lo) / spacing.
  const auto steps = static_cast<std::size_t>(std::floor((hi - lo) / cfg.spacing_m + 1e-9));
  std::vector<double> out;
  out.reserve(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) out.push_back(lo + static_cast<double>(i) * cfg.spacing_m);
  return out;
}

double nearest_location(std::span<const double> locations, double arclength) {
  require(!locations.empty(), ErrorCode::EmptyInput, "no locations");
  double best = locations.front();
  for (double l : locations) {
    const double d = std::abs(l - arclength);
    const double d_best = std::abs(best - arclength);
    if (d < d_best || (d == d_best && l < best)) best = l;
  }
  return best;
}

PointCloud voxel_downsample(const PointCloud& cloud, double voxel_size) {
  require(voxel_size > 0.0, ErrorCode::InvalidArgument, "voxel_size must be positive");
  struct Acc {
    Point3 sum = Point3::Zero();
    double intensity = 0.0;
    std::size_t n = 0;
  };
  std::unordered_map<VoxelKey, std::size_t, VoxelKeyHash> slot;
  std::vector<Acc> acc;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto [it, inserted] = slot.try_emplace(voxel_key(cloud.points[i], voxel_size), acc.size());
    if (inserted) acc.emplace_back();
    Acc& a = acc[it->second];
    a.sum += cloud.points[i];
    a.intensity += cloud.intensity_at(i);
    ++a.n;
  }
  PointCloud out;
  out.points.reserve(acc.size());
  for (const auto& a : acc) {
    out.points.push_back(a.sum / static_cast<double>(a.n));
    if (cloud.has_intensity()) out.intensity.push_back(a.intensity / static_cast<double>(a.n));
  }
  return out;
}

}  // namespace traverse
