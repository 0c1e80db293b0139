#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "traverse/core.hpp"

namespace traverse {

/// Route spacing between locations (m) and half-width of the accumulation
/// window (H_m). Construct through validate() or check explicitly.
struct AccumulationConfig {
  double spacing_m = 2.0;
  double window_hm = 20.0;

  /// Throws InvalidArgument unless spacing > 0, window > 0 and
  /// window >= spacing / 2.
  void validate() const;
};

struct PoseRecord {
  std::uint64_t frame_id = 0;
  Pose6DoF pose;
  double arclength = 0.0;
};

// PCB1: "PCB1", u32 count, count x (f32 x, y, z, intensity), little-endian.

/// Loads a PCB1 cloud. Intensity is always present on the result.
/// Errors: BadMagic, TruncatedFile, NonFinitePoint (each names the byte offset).
PointCloud load_point_cloud(const std::filesystem::path& path);

/// Writes a PCB1 cloud. Coordinates are narrowed to float32; a cloud without
/// intensity is written with intensity 0.
void write_point_cloud(const PointCloud& cloud, const std::filesystem::path& path);

/// Parses `frame_id tx ty tz qw qx qy qz arclength` lines; `#` lines and
/// blank lines are skipped. `origin` is subtracted from every translation.
/// Errors: MalformedRecord (with line number), NonMonotonicArclength.
std::vector<PoseRecord> load_poses(const std::filesystem::path& path,
                                   const Point3& origin = Point3::Zero());

/// Writes poses with 17 significant digits so reads are bit-exact. `origin`
/// is added back to every translation.
void write_poses(std::span<const PoseRecord> poses, const std::filesystem::path& path,
                 const Point3& origin = Point3::Zero());

struct TraversalEntry {
  std::uint64_t traversal_id = 0;
  std::vector<std::filesystem::path> frame_files;  // resolved, ordered like the pose records
  std::filesystem::path pose_file;
};

/// JSON manifest:
///   { "origin_offset": [x, y, z],
///     "traversals": [ { "id": 0, "poses": "t0/poses.txt",
///                       "frames": ["t0/f000000.pcb", ...] }, ... ],
///     "locations": [ ... ] }            // optional
/// Relative paths resolve against the manifest's directory.
struct DatasetManifest {
  Point3 origin_offset = Point3::Zero();
  std::vector<TraversalEntry> traversals;
  std::optional<std::vector<double>> locations;
};

/// Errors: IoError, ManifestInvalid, ManifestEmpty (no traversals).
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Writes paths relative to the manifest's directory when possible.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Loads every traversal referenced by the manifest, pairing the i-th frame
/// file with the i-th pose record.
std::vector<Traversal> load_traversals(const DatasetManifest& manifest);

/// Union of globally transformed frames with arclength in [l - H_m, l + H_m].
/// Errors: NoFramesInWindow.
DenseCloud accumulate_dense(const Traversal& traversal, double location,
                            const AccumulationConfig& cfg);

/// Arithmetic sequence from the minimum route arclength in steps of
/// spacing_m, not exceeding the maximum.
std::vector<double> locations_for_route(std::span<const Traversal> traversals,
                                        const AccumulationConfig& cfg);

/// Location nearest to the given arclength; ties resolve to the lower one.
/// Errors: EmptyInput.
double nearest_location(std::span<const double> locations, double arclength);

/// Optional post-step: one centroid per occupied voxel, in order of first
/// occurrence. Intensity is averaged the same way.
PointCloud voxel_downsample(const PointCloud& cloud, double voxel_size);

}  // namespace traverse
