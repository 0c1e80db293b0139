#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "traverse/align.hpp"
#include "traverse/core.hpp"
#include "traverse/ingest.hpp"
#include "traverse/labels.hpp"
#include "traverse/p2.hpp"
#include "traverse/squash.hpp"

namespace traverse::sim {

/// Straight-route synthetic scene, repeated T times. The route runs along +x
/// from 0 to route_length; frames are spaced along it and each frame returns
/// the surface points whose x lies in its slab. Static geometry is a ground
/// plane plus buildings and poles; ephemeral objects (cars, pedestrians)
/// appear in exactly `presence_k` random traversals each. Ephemeral bodies
/// are sampled above `ephemeral_clearance` (no wheel/foot band returns).
struct SceneSpec {
  double route_length = 60.0;
  double frame_spacing = 1.0;
  double corridor_half_width = 10.0;
  double sensor_height = 1.8;
  std::size_t num_traversals = 5;
  double surface_density = 50.0;  // points / m^2, every surface
  std::size_t num_buildings = 6;
  std::size_t num_poles = 6;
  std::size_t num_cars = 4;
  std::size_t num_pedestrians = 6;
  std::size_t presence_k = 1;
  double ephemeral_jitter = 0.3;     // stdev of per-traversal xy offset (m), clipped at 3 sigma
  double ephemeral_clearance = 0.4;  // m
  double sensor_noise = 0.02;        // stdev per axis (m)
  double loc_noise_translation = 0.0;  // stdev per axis of recorded pose error (m)
  double loc_noise_yaw = 0.0;          // stdev of recorded yaw error (rad)
  double intensity = 0.5;
  std::uint64_t seed = 0;

  /// Errors: InvalidArgument.
  void validate() const;
};

enum class PointLabel : std::uint8_t { Static = 0, Ephemeral = 1 };

struct GroundTruth {
  /// labels[t][f][j]: label of point j of frame f in traversal t.
  std::vector<std::vector<std::vector<PointLabel>>> labels;
  /// object_ids[t][f][j]: ephemeral object index, or -1 for static points.
  std::vector<std::vector<std::vector<std::int32_t>>> object_ids;
  /// True ephemeral boxes present in each traversal (global frame).
  std::vector<std::vector<OrientedBox>> ephemeral_boxes;
  /// Traversal indices in which each ephemeral object appears, ascending.
  std::vector<std::vector<std::size_t>> presence;
};

struct Scene {
  std::vector<Traversal> traversals;
  GroundTruth truth;
};

/// Deterministic in spec.seed. Static geometry depends only on the seed, so
/// scenes that differ only in T or noise share the same buildings and poles.
Scene generate_scene(const SceneSpec& spec);

/// Settings for scoring a scene through the full accumulate -> P2 pipeline.
struct EvalConfig {
  P2Config p2;
  AccumulationConfig accumulation{10.0, 10.0};
  double query_fraction = 0.1;  // Bernoulli subsample of each frame's points
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

struct ScoredPoints {
  std::vector<Point3> points;  // global frame, as recorded
  std::vector<double> scores;
  std::vector<PointLabel> labels;
  std::vector<std::int32_t> object_ids;
};

/// Scores sampled points of every traversal against the dense clouds of all
/// traversals at the nearest route location.
ScoredPoints score_scene(const Scene& scene, const EvalConfig& eval);

/// traversal_alignment_dataset over the scene's traversals with the
/// evaluation's accumulation, radius and sampling settings.
AlignmentDataset scene_alignment_dataset(const Scene& scene, const EvalConfig& eval,
                                         double voxel_size = 0.5,
                                         AggregationMode mode = AggregationMode::Mean);

struct SeparationReport {
  double mean_static = 0.0;
  double mean_ephemeral = 0.0;
  std::size_t n_static = 0;
  std::size_t n_ephemeral = 0;
  std::optional<double> auc;  // absent if either class is empty
};

/// ROC AUC of static (positive) versus ephemeral by score, via the rank-sum
/// formulation with tied ranks averaged. Errors: LengthMismatch.
SeparationReport evaluate_separation(std::span<const double> scores,
                                     std::span<const PointLabel> labels);

struct TraversalSweepRow {
  std::size_t num_traversals = 0;
  SeparationReport report;
};

struct NoiseSweepRow {
  double noise = 0.0;
  SeparationReport report;
};

/// One row per T value; every row uses spec.seed. Errors: InvalidArgument if any T < 2.
std::vector<TraversalSweepRow> sweep_traversals(const SceneSpec& spec,
                                                std::span<const std::size_t> t_values,
                                                const EvalConfig& eval);

/// One row per translation-noise level (loc_noise_translation); every row uses spec.seed.
std::vector<NoiseSweepRow> sweep_localization_noise(const SceneSpec& spec,
                                                    std::span<const double> noise_values,
                                                    const EvalConfig& eval);

/// Writes the scene as an ingestible dataset: manifest.json, t<id>/poses.txt,
/// t<id>/f<frame>.pcb, per-frame truth t<id>/f<frame>.gtl and
/// t<id>/ephemeral_boxes.txt. Returns the manifest path.
std::filesystem::path write_scene(const Scene& scene, const std::filesystem::path& dir,
                                  const Point3& origin_offset = Point3::Zero());

// GTL1: "GTL1", u32 count, count x u8 label (0 static, 1 ephemeral).
void write_truth_labels(std::span<const PointLabel> labels, const std::filesystem::path& path);
std::vector<PointLabel> read_truth_labels(const std::filesystem::path& path);

}  // namespace traverse::sim
