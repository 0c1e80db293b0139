#include "traverse/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "binary_io.hpp"
#include "traverse/error.hpp"

namespace traverse::sim {

namespace fs = std::filesystem;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(seed ^ splitmix64(stream)) + index);
}

enum Stream : std::uint64_t { kSurface = 1, kPoseNoise = 2, kQuerySample = 3 };

struct BoxGeometry {
  Point3 base;  // center of the footprint at z = 0
  double length = 1.0;
  double width = 1.0;
  double z0 = 0.0;
  double z1 = 1.0;
  double yaw = 0.0;
};

struct EphemeralObject {
  BoxGeometry box;
  bool is_car = true;
  double height = 1.0;  // physical height including the clearance band
  double radius = 1.0;  // circumscribed footprint radius
};

// Uniform surface samples on the four sides and the top of a yawed box.
void sample_box_surface(const BoxGeometry& b, double density, std::mt19937_64& rng,
                        std::vector<Point3>& out) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double hl = b.length / 2.0;
  const double hw = b.width / 2.0;
  const double h = b.z1 - b.z0;
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  const auto emit = [&](double lx, double ly, double z) {
    out.emplace_back(b.base.x() + c * lx - s * ly, b.base.y() + s * lx + c * ly, z);
  };
  const auto count = [&](double area) { return static_cast<std::size_t>(std::llround(area * density)); };

  for (std::size_t i = 0, n = count(b.length * b.width); i < n; ++i) {
    emit((2 * u(rng) - 1) * hl, (2 * u(rng) - 1) * hw, b.z1);
  }
  for (double side : {-1.0, 1.0}) {
    for (std::size_t i = 0, n = count(b.width * h); i < n; ++i) {
      emit(side * hl, (2 * u(rng) - 1) * hw, b.z0 + u(rng) * h);
    }
    for (std::size_t i = 0, n = count(b.length * h); i < n; ++i) {
      emit((2 * u(rng) - 1) * hl, side * hw, b.z0 + u(rng) * h);
    }
  }
}

double clipped_normal(std::normal_distribution<double>& n, std::mt19937_64& rng, double sigma) {
  return std::clamp(n(rng), -3.0, 3.0) * sigma;
}

}  // namespace

void SceneSpec::validate() const {
  const auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  const auto non_negative = [](double v) { return v >= 0.0 && std::isfinite(v); };
  require(positive(route_length) && positive(frame_spacing) && positive(corridor_half_width),
          ErrorCode::InvalidArgument, "route length, frame spacing and corridor width must be positive");
  require(corridor_half_width > 6.5, ErrorCode::InvalidArgument,
          "corridor half width must exceed 6.5 m to fit road, poles and buildings");
  require(route_length > 6.0, ErrorCode::InvalidArgument, "route must be longer than 6 m");
  require(num_traversals >= 2, ErrorCode::InvalidArgument, "a scene needs at least 2 traversals");
  require(positive(surface_density), ErrorCode::InvalidArgument, "surface density must be positive");
  require(presence_k >= 1 && presence_k <= num_traversals, ErrorCode::InvalidArgument,
          "presence_k must be in [1, T]");
  require(non_negative(ephemeral_jitter) && non_negative(ephemeral_clearance) &&
              non_negative(sensor_noise) && non_negative(loc_noise_translation) &&
              non_negative(loc_noise_yaw),
          ErrorCode::InvalidArgument, "noise and jitter values must be non-negative");
  require(ephemeral_clearance < 1.5, ErrorCode::InvalidArgument, "ephemeral clearance must be below 1.5 m");
  require(intensity >= 0.0 && intensity <= 1.0, ErrorCode::InvalidArgument, "intensity must be in [0, 1]");
}

Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  const double L = spec.route_length;
  const double hw = spec.corridor_half_width;
  const std::size_t T = spec.num_traversals;

  // Geometry stream: static layout, then ephemeral placement, then presence.
  std::mt19937_64 geo(spec.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u(geo); };

  std::vector<BoxGeometry> statics;
  for (std::size_t b = 0; b < spec.num_buildings; ++b) {
    const double side = (b % 2 == 0) ? -1.0 : 1.0;
    BoxGeometry g;
    g.length = uniform(6.0, 12.0);
    g.width = uniform(2.0, 4.0);
    g.z1 = uniform(3.0, 8.0);
    g.base = Point3(uniform(0.0, L), side * (hw - g.width / 2.0), 0.0);
    statics.push_back(g);
  }
  for (std::size_t p = 0; p < spec.num_poles; ++p) {
    const double side = (p % 2 == 0) ? 1.0 : -1.0;
    BoxGeometry g;
    g.length = 0.3;
    g.width = 0.3;
    g.z1 = 4.0;
    g.base = Point3(uniform(1.0, L - 1.0), side * 6.0, 0.0);
    statics.push_back(g);
  }

  // Ephemeral objects live on the road (|y| <= 2.5) and never come within
  // 1 m of each other, even after worst-case jitter.
  const double jitter_reach = 3.0 * spec.ephemeral_jitter;
  std::vector<EphemeralObject> objects;
  const std::size_t n_objects = spec.num_cars + spec.num_pedestrians;
  for (std::size_t k = 0; k < n_objects; ++k) {
    const bool car = k < spec.num_cars;
    EphemeralObject o;
    o.is_car = car;
    o.box.length = car ? 4.5 : 0.6;
    o.box.width = car ? 1.8 : 0.6;
    o.height = car ? 1.5 : 1.7;
    o.box.z0 = spec.ephemeral_clearance;
    o.box.z1 = o.height;
    o.radius = std::hypot(o.box.length / 2.0, o.box.width / 2.0);
    bool placed = false;
    for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
      o.box.base = Point3(uniform(3.0, L - 3.0), uniform(-2.5, 2.5), 0.0);
      o.box.yaw = car ? uniform(-0.1, 0.1) + (u(geo) < 0.5 ? 0.0 : std::numbers::pi)
                      : uniform(-std::numbers::pi, std::numbers::pi);
      placed = std::all_of(objects.begin(), objects.end(), [&](const EphemeralObject& other) {
        const double gap = (o.box.base - other.box.base).head<2>().norm() - o.radius - other.radius;
        return gap >= 1.0 + 2.0 * jitter_reach;
      });
    }
    require(placed, ErrorCode::InvalidArgument, "scene too crowded to place ephemeral objects");
    objects.push_back(o);
  }

  std::vector<std::vector<std::size_t>> presence(n_objects);
  {
    std::vector<std::size_t> order(T);
    for (std::size_t k = 0; k < n_objects; ++k) {
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), geo);
      presence[k].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(spec.presence_k));
      std::sort(presence[k].begin(), presence[k].end());
    }
  }

  const auto n_frames = static_cast<std::size_t>(std::max<long long>(1, std::llround(L / spec.frame_spacing)));

  Scene scene;
  scene.truth.labels.resize(T);
  scene.truth.object_ids.resize(T);
  scene.truth.ephemeral_boxes.resize(T);
  scene.truth.presence = presence;

  for (std::size_t t = 0; t < T; ++t) {
    std::mt19937_64 rng(derive_seed(spec.seed, kSurface, t));
    std::mt19937_64 pose_rng(derive_seed(spec.seed, kPoseNoise, t));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<Point3> pts;
    std::vector<std::int32_t> owner;

    const auto ground_n = static_cast<std::size_t>(std::llround(L * 2.0 * hw * spec.surface_density));
    for (std::size_t i = 0; i < ground_n; ++i) pts.emplace_back(unit(rng) * L, (2.0 * unit(rng) - 1.0) * hw, 0.0);
    for (const auto& g : statics) sample_box_surface(g, spec.surface_density, rng, pts);
    owner.assign(pts.size(), -1);
    // Noise is drawn per object right after sampling, so static returns do not
    // depend on which ephemeral objects are present.
    const auto add_noise = [&](std::size_t from) {
      for (std::size_t i = from; i < pts.size(); ++i) {
        pts[i].x() += normal(rng) * spec.sensor_noise;
        pts[i].y() += normal(rng) * spec.sensor_noise;
        pts[i].z() += normal(rng) * spec.sensor_noise;
      }
    };
    add_noise(0);

    for (std::size_t k = 0; k < n_objects; ++k) {
      if (!std::binary_search(presence[k].begin(), presence[k].end(), t)) continue;
      BoxGeometry g = objects[k].box;
      g.base.x() += clipped_normal(normal, rng, spec.ephemeral_jitter);
      g.base.y() += clipped_normal(normal, rng, spec.ephemeral_jitter);
      const std::size_t first = pts.size();
      sample_box_surface(g, spec.surface_density, rng, pts);
      owner.resize(pts.size(), static_cast<std::int32_t>(k));
      add_noise(first);

      OrientedBox box;
      box.center = Point3(g.base.x(), g.base.y(), objects[k].height / 2.0);
      box.length = g.length;
      box.width = g.width;
      box.height = objects[k].height;
      box.yaw = normalize_yaw(g.yaw);
      box.score = 1.0;
      box.label = objects[k].is_car ? "car" : "pedestrian";
      scene.truth.ephemeral_boxes[t].push_back(box);
    }

    // Slab assignment keeps generation order within each frame.
    std::vector<std::vector<std::size_t>> members(n_frames);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto f = static_cast<long long>(std::floor(pts[i].x() / spec.frame_spacing));
      members[static_cast<std::size_t>(std::clamp<long long>(f, 0, static_cast<long long>(n_frames) - 1))]
          .push_back(i);
    }

    std::vector<Frame> frames;
    frames.reserve(n_frames);
    auto& labels_t = scene.truth.labels[t];
    auto& ids_t = scene.truth.object_ids[t];
    for (std::size_t f = 0; f < n_frames; ++f) {
      const double arclength = (static_cast<double>(f) + 0.5) * spec.frame_spacing;
      const Point3 sensor(arclength, 0.0, spec.sensor_height);

      // Recorded pose error; drawn for every frame so noise levels stay paired.
      const Point3 dt(normal(pose_rng), normal(pose_rng), normal(pose_rng));
      const double dyaw = normal(pose_rng);
      const Pose6DoF recorded =
          Pose6DoF::from_yaw(dyaw * spec.loc_noise_yaw, sensor + dt * spec.loc_noise_translation);

      Frame frame;
      frame.frame_id = f;
      frame.arclength = arclength;
      frame.pose = recorded;
      frame.cloud.points.reserve(members[f].size());
      std::vector<PointLabel> lab;
      std::vector<std::int32_t> ids;
      for (std::size_t i : members[f]) {
        frame.cloud.points.push_back(pts[i] - sensor);
        lab.push_back(owner[i] < 0 ? PointLabel::Static : PointLabel::Ephemeral);
        ids.push_back(owner[i]);
      }
      frame.cloud.intensity.assign(frame.cloud.points.size(), spec.intensity);
      frames.push_back(std::move(frame));
      labels_t.push_back(std::move(lab));
      ids_t.push_back(std::move(ids));
    }
    scene.traversals.emplace_back(t, std::move(frames));
  }
  return scene;
}

namespace {

struct Bucket {
  std::vector<Point3> points;
  std::vector<PointLabel> labels;
  std::vector<std::int32_t> ids;
};

// Bernoulli-sampled global points of every frame, grouped by the route
// location nearest to the frame.
std::vector<Bucket> query_buckets(const Scene& scene, const EvalConfig& eval,
                                  std::span<const double> locations) {
  require(eval.query_fraction > 0.0 && eval.query_fraction <= 1.0, ErrorCode::InvalidArgument,
          "query fraction must be in (0, 1]");
  std::vector<Bucket> buckets(locations.size());
  for (std::size_t t = 0; t < scene.traversals.size(); ++t) {
    std::mt19937_64 rng(derive_seed(eval.seed, kQuerySample, t));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto& frames = scene.traversals[t].frames();
    for (std::size_t f = 0; f < frames.size(); ++f) {
      const double l = nearest_location(locations, frames[f].arclength);
      const auto li = static_cast<std::size_t>(std::find(locations.begin(), locations.end(), l) - locations.begin());
      Bucket& b = buckets[li];
      const Eigen::Matrix3d rot = frames[f].pose.rotation_matrix();
      const Point3& trans = frames[f].pose.translation();
      for (std::size_t j = 0; j < frames[f].cloud.size(); ++j) {
        if (unit(rng) >= eval.query_fraction) continue;
        b.points.push_back(rot * frames[f].cloud.points[j] + trans);
        b.labels.push_back(scene.truth.labels[t][f][j]);
        b.ids.push_back(scene.truth.object_ids[t][f][j]);
      }
    }
  }
  return buckets;
}

std::vector<DenseCloud> dense_at(const Scene& scene, double location, const AccumulationConfig& cfg) {
  std::vector<DenseCloud> dense;
  dense.reserve(scene.traversals.size());
  for (const auto& trav : scene.traversals) dense.push_back(accumulate_dense(trav, location, cfg));
  return dense;
}

}  // namespace

ScoredPoints score_scene(const Scene& scene, const EvalConfig& eval) {
  const auto locations = locations_for_route(scene.traversals, eval.accumulation);
  std::vector<Bucket> buckets = query_buckets(scene, eval, locations);

  ScoredPoints out;
  for (std::size_t li = 0; li < locations.size(); ++li) {
    Bucket& b = buckets[li];
    if (b.points.empty()) continue;
    const auto dense = dense_at(scene, locations[li], eval.accumulation);
    const P2Scorer scorer(dense, eval.p2);
    const P2Result r = scorer.score(b.points, false, eval.threads);
    out.points.insert(out.points.end(), b.points.begin(), b.points.end());
    out.scores.insert(out.scores.end(), r.scores.begin(), r.scores.end());
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    out.object_ids.insert(out.object_ids.end(), b.ids.begin(), b.ids.end());
  }
  return out;
}

AlignmentDataset scene_alignment_dataset(const Scene& scene, const EvalConfig& eval, double voxel_size,
                                         AggregationMode mode) {
  AlignmentSampling sampling;
  sampling.accumulation = eval.accumulation;
  sampling.p2 = eval.p2;
  sampling.voxel_size = voxel_size;
  sampling.mode = mode;
  sampling.query_fraction = eval.query_fraction;
  sampling.seed = derive_seed(eval.seed, kQuerySample, 0);
  sampling.threads = eval.threads;
  return traversal_alignment_dataset(scene.traversals, sampling);
}

SeparationReport evaluate_separation(std::span<const double> scores, std::span<const PointLabel> labels) {
  require(scores.size() == labels.size(), ErrorCode::LengthMismatch,
          std::to_string(scores.size()) + " scores for " + std::to_string(labels.size()) + " labels");
  SeparationReport rep;
  double sum_s = 0.0;
  double sum_e = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == PointLabel::Static) {
      sum_s += scores[i];
      ++rep.n_static;
    } else {
      sum_e += scores[i];
      ++rep.n_ephemeral;
    }
  }
  if (rep.n_static > 0) rep.mean_static = sum_s / static_cast<double>(rep.n_static);
  if (rep.n_ephemeral > 0) rep.mean_ephemeral = sum_e / static_cast<double>(rep.n_ephemeral);
  if (rep.n_static == 0 || rep.n_ephemeral == 0) return rep;

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum_static = 0.0;
  for (std::size_t start = 0; start < order.size();) {
    std::size_t end = start + 1;
    while (end < order.size() && scores[order[end]] == scores[order[start]]) ++end;
    const double avg_rank = (static_cast<double>(start + 1) + static_cast<double>(end)) / 2.0;
    for (std::size_t i = start; i < end; ++i) {
      if (labels[order[i]] == PointLabel::Static) rank_sum_static += avg_rank;
    }
    start = end;
  }
  const auto ns = static_cast<double>(rep.n_static);
  const auto ne = static_cast<double>(rep.n_ephemeral);
  rep.auc = (rank_sum_static - ns * (ns + 1.0) / 2.0) / (ns * ne);
  return rep;
}

std::vector<TraversalSweepRow> sweep_traversals(const SceneSpec& spec, std::span<const std::size_t> t_values,
                                                const EvalConfig& eval) {
  for (auto t : t_values) require(t >= 2, ErrorCode::InvalidArgument, "every T in a sweep must be >= 2");
  std::vector<TraversalSweepRow> rows(t_values.size());
  EvalConfig inner = eval;
  inner.threads = t_values.size() > 1 ? 1 : eval.threads;
  parallel_for(t_values.size(), eval.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      SceneSpec s = spec;
      s.num_traversals = t_values[i];
      s.presence_k = std::min(s.presence_k, s.num_traversals);
      const ScoredPoints scored = score_scene(generate_scene(s), inner);
      rows[i] = {t_values[i], evaluate_separation(scored.scores, scored.labels)};
    }
  });
  return rows;
}

std::vector<NoiseSweepRow> sweep_localization_noise(const SceneSpec& spec, std::span<const double> noise_values,
                                                    const EvalConfig& eval) {
  for (double n : noise_values) {
    require(n >= 0.0 && std::isfinite(n), ErrorCode::InvalidArgument, "noise levels must be non-negative");
  }
  std::vector<NoiseSweepRow> rows(noise_values.size());
  EvalConfig inner = eval;
  inner.threads = noise_values.size() > 1 ? 1 : eval.threads;
  parallel_for(noise_values.size(), eval.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      SceneSpec s = spec;
      s.loc_noise_translation = noise_values[i];
      const ScoredPoints scored = score_scene(generate_scene(s), inner);
      rows[i] = {noise_values[i], evaluate_separation(scored.scores, scored.labels)};
    }
  });
  return rows;
}

void write_truth_labels(std::span<const PointLabel> labels, const fs::path& path) {
  detail::ByteWriter out;
  out.magic("GTL1");
  out.put(static_cast<std::uint32_t>(labels.size()));
  for (auto l : labels) out.put(static_cast<std::uint8_t>(l));
  out.save(path);
}

std::vector<PointLabel> read_truth_labels(const fs::path& path) {
  detail::ByteReader in(path);
  in.expect_magic("GTL1");
  const auto n = in.get<std::uint32_t>();
  in.ensure(n);
  std::vector<PointLabel> labels(n);
  for (auto& l : labels) {
    const auto v = in.get<std::uint8_t>();
    require(v <= 1, ErrorCode::MalformedRecord,
            in.name() + ": invalid label at byte offset " + std::to_string(in.offset() - 1));
    l = static_cast<PointLabel>(v);
  }
  return labels;
}

fs::path write_scene(const Scene& scene, const fs::path& dir, const Point3& origin_offset) {
  fs::create_directories(dir);
  DatasetManifest manifest;
  manifest.origin_offset = origin_offset;
  for (std::size_t t = 0; t < scene.traversals.size(); ++t) {
    const Traversal& trav = scene.traversals[t];
    const fs::path tdir = dir / ("t" + std::to_string(trav.id()));
    fs::create_directories(tdir);
    TraversalEntry entry;
    entry.traversal_id = trav.id();
    entry.pose_file = tdir / "poses.txt";
    std::vector<PoseRecord> poses;
    for (std::size_t f = 0; f < trav.frames().size(); ++f) {
      const Frame& frame = trav.frames()[f];
      char name[32];
      std::snprintf(name, sizeof(name), "f%06llu", static_cast<unsigned long long>(frame.frame_id));
      const fs::path cloud_path = tdir / (std::string(name) + ".pcb");
      write_point_cloud(frame.cloud, cloud_path);
      write_truth_labels(scene.truth.labels[t][f], tdir / (std::string(name) + ".gtl"));
      entry.frame_files.push_back(cloud_path);
      poses.push_back({frame.frame_id, frame.pose, frame.arclength});
    }
    write_poses(poses, entry.pose_file, origin_offset);
    save_labels(scene.truth.ephemeral_boxes[t], tdir / "ephemeral_boxes.txt");
    manifest.traversals.push_back(std::move(entry));
  }
  const fs::path manifest_path = dir / "manifest.json";
  write_manifest(manifest, manifest_path);
  return manifest_path;
}

}  // namespace traverse::sim
