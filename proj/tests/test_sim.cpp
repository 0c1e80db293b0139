#include <doctest.h>

#include <cmath>
#include <random>

#include "test_util.hpp"
#include "traverse/sim.hpp"

using namespace traverse;
using namespace traverse::sim;
using testutil::TempDir;

namespace {

SceneSpec small_spec(std::uint64_t seed = 1) {
  SceneSpec s;
  s.route_length = 40.0;
  s.num_traversals = 3;
  s.surface_density = 20.0;
  s.num_buildings = 3;
  s.num_poles = 2;
  s.num_cars = 2;
  s.num_pedestrians = 2;
  s.seed = seed;
  return s;
}

std::vector<Point3> static_points(const Scene& scene, std::size_t t) {
  std::vector<Point3> out;
  const auto& frames = scene.traversals[t].frames();
  for (std::size_t f = 0; f < frames.size(); ++f) {
    for (std::size_t j = 0; j < frames[f].cloud.size(); ++j) {
      if (scene.truth.labels[t][f][j] == PointLabel::Static) out.push_back(frames[f].cloud.points[j]);
    }
  }
  return out;
}

// Pairwise AUC: P(static > ephemeral) + 0.5 P(tie).
double pairwise_auc(const std::vector<double>& s, const std::vector<PointLabel>& l) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (l[i] != PointLabel::Static) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (l[j] != PointLabel::Ephemeral) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

}  // namespace

TEST_CASE("scene spec validation") {
  CHECK_NOTHROW(SceneSpec{}.validate());
  SceneSpec s;
  s.num_traversals = 1;
  CHECK_ERROR(s.validate(), ErrorCode::InvalidArgument);
  s = SceneSpec{};
  s.presence_k = 6;
  CHECK_ERROR(s.validate(), ErrorCode::InvalidArgument);
  s = SceneSpec{};
  s.surface_density = 0.0;
  CHECK_ERROR(s.validate(), ErrorCode::InvalidArgument);
  s = SceneSpec{};
  s.loc_noise_translation = -1.0;
  CHECK_ERROR(s.validate(), ErrorCode::InvalidArgument);
  s = small_spec();
  s.route_length = 30.0;
  s.num_cars = 20;
  CHECK_ERROR(generate_scene(s), ErrorCode::InvalidArgument);
}

TEST_CASE("scene generation is deterministic in the seed") {
  const Scene a = generate_scene(small_spec(5));
  const Scene b = generate_scene(small_spec(5));
  const Scene c = generate_scene(small_spec(6));
  REQUIRE(a.traversals.size() == 3);
  for (std::size_t t = 0; t < 3; ++t) {
    REQUIRE(a.traversals[t].frames().size() == b.traversals[t].frames().size());
    for (std::size_t f = 0; f < a.traversals[t].frames().size(); ++f) {
      CHECK(a.traversals[t].frames()[f].cloud.points == b.traversals[t].frames()[f].cloud.points);
    }
  }
  CHECK(a.truth.labels == b.truth.labels);
  CHECK(a.truth.presence == b.truth.presence);
  CHECK(static_points(a, 0) != static_points(c, 0));
}

TEST_CASE("static geometry does not depend on the traversal count") {
  SceneSpec s2 = small_spec(9);
  s2.num_traversals = 2;
  SceneSpec s4 = small_spec(9);
  s4.num_traversals = 4;
  s4.presence_k = 2;
  const Scene a = generate_scene(s2);
  const Scene b = generate_scene(s4);
  CHECK(static_points(a, 0) == static_points(b, 0));
  CHECK(static_points(a, 1) == static_points(b, 1));
}

TEST_CASE("ground truth layout") {
  SceneSpec spec = small_spec(3);
  spec.presence_k = 2;
  spec.sensor_noise = 0.0;
  const Scene scene = generate_scene(spec);
  const std::size_t n_obj = spec.num_cars + spec.num_pedestrians;
  REQUIRE(scene.truth.presence.size() == n_obj);
  std::vector<std::size_t> per_t(spec.num_traversals, 0);
  for (const auto& p : scene.truth.presence) {
    CHECK(p.size() == 2);
    CHECK(std::is_sorted(p.begin(), p.end()));
    for (auto t : p) ++per_t[t];
  }
  for (std::size_t t = 0; t < spec.num_traversals; ++t) {
    const auto& trav = scene.traversals[t];
    CHECK(trav.id() == t);
    CHECK(scene.truth.ephemeral_boxes[t].size() == per_t[t]);
    CHECK(trav.frames().size() == 40);
    for (std::size_t f = 0; f < trav.frames().size(); ++f) {
      const Frame& frame = trav.frames()[f];
      CHECK(frame.arclength == doctest::Approx(f + 0.5));
      REQUIRE(scene.truth.labels[t][f].size() == frame.cloud.size());
      REQUIRE(scene.truth.object_ids[t][f].size() == frame.cloud.size());
      const PointCloud global = transform_to_global(frame.cloud, frame.pose);
      for (std::size_t j = 0; j < frame.cloud.size(); ++j) {
        const auto id = scene.truth.object_ids[t][f][j];
        CHECK((scene.truth.labels[t][f][j] == PointLabel::Ephemeral) == (id >= 0));
        // Interior frames hold the x slab [f, f + 1); the end frames also take overhang.
        if (f > 0 && f + 1 < trav.frames().size()) {
          CHECK(global.points[j].x() >= static_cast<double>(f) - 1e-9);
          CHECK(global.points[j].x() <= static_cast<double>(f + 1) + 1e-9);
        }
        if (id < 0) continue;
        const auto& p = scene.truth.presence[static_cast<std::size_t>(id)];
        CHECK(std::binary_search(p.begin(), p.end(), t));
        CHECK(global.points[j].z() >= spec.ephemeral_clearance - 1e-9);
      }
    }
  }
}

TEST_CASE("ephemeral points lie inside their truth boxes") {
  SceneSpec spec = small_spec(4);
  spec.sensor_noise = 0.0;
  const Scene scene = generate_scene(spec);
  std::size_t checked = 0;
  for (std::size_t t = 0; t < scene.traversals.size(); ++t) {
    // Boxes are listed in object order, for the objects present in t.
    std::vector<std::int64_t> box_of(scene.truth.presence.size(), -1);
    std::int64_t next = 0;
    for (std::size_t k = 0; k < scene.truth.presence.size(); ++k) {
      const auto& p = scene.truth.presence[k];
      if (std::binary_search(p.begin(), p.end(), t)) box_of[k] = next++;
    }
    REQUIRE(static_cast<std::size_t>(next) == scene.truth.ephemeral_boxes[t].size());
    const auto& frames = scene.traversals[t].frames();
    for (std::size_t f = 0; f < frames.size(); ++f) {
      const auto g = transform_to_global(frames[f].cloud, frames[f].pose);
      for (std::size_t j = 0; j < g.size(); ++j) {
        const auto id = scene.truth.object_ids[t][f][j];
        if (id < 0) continue;
        REQUIRE(box_of[static_cast<std::size_t>(id)] >= 0);
        OrientedBox box = scene.truth.ephemeral_boxes[t][static_cast<std::size_t>(box_of[static_cast<std::size_t>(id)])];
        box.length += 1e-6;
        box.width += 1e-6;
        box.height += 1e-6;
        CHECK(points_in_box(box, std::vector<Point3>{g.points[j]}).size() == 1);
        ++checked;
      }
    }
  }
  CHECK(checked > 0);
}

TEST_CASE("localization noise perturbs only the recorded poses") {
  SceneSpec clean = small_spec(2);
  SceneSpec noisy = clean;
  noisy.loc_noise_translation = 0.5;
  noisy.loc_noise_yaw = 0.01;
  const Scene a = generate_scene(clean);
  const Scene b = generate_scene(noisy);
  double moved = 0.0;
  for (std::size_t f = 0; f < a.traversals[0].frames().size(); ++f) {
    const auto& fa = a.traversals[0].frames()[f];
    const auto& fb = b.traversals[0].frames()[f];
    CHECK(fa.cloud.points == fb.cloud.points);
    CHECK(fa.pose.translation() == Point3(fa.arclength, 0.0, clean.sensor_height));
    moved += (fa.pose.translation() - fb.pose.translation()).norm();
  }
  CHECK(moved > 0.0);
}

TEST_CASE("separation metric") {
  using L = PointLabel;
  const std::vector<L> labels{L::Static, L::Static, L::Ephemeral, L::Ephemeral};
  const auto perfect = evaluate_separation(std::vector<double>{0.9, 0.8, 0.1, 0.2}, labels);
  REQUIRE(perfect.auc.has_value());
  CHECK(*perfect.auc == 1.0);
  CHECK(perfect.mean_static == doctest::Approx(0.85));
  CHECK(perfect.mean_ephemeral == doctest::Approx(0.15));
  CHECK(perfect.n_static == 2);
  CHECK(perfect.n_ephemeral == 2);
  CHECK(*evaluate_separation(std::vector<double>{0.1, 0.2, 0.9, 0.8}, labels).auc == 0.0);
  CHECK(*evaluate_separation(std::vector<double>{0.5, 0.5, 0.5, 0.5}, labels).auc == 0.5);
  // One static beats both ephemerals, the other ties one and loses one: (2 + 0.5) / 4.
  CHECK(*evaluate_separation(std::vector<double>{0.9, 0.3, 0.3, 0.5}, labels).auc == 0.625);

  CHECK_FALSE(evaluate_separation(std::vector<double>{0.1}, std::vector<L>{L::Static}).auc.has_value());
  CHECK_ERROR(evaluate_separation(std::vector<double>{0.1}, labels), ErrorCode::LengthMismatch);

  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> level(0, 9);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(300);
    std::vector<L> l(300);
    for (std::size_t i = 0; i < s.size(); ++i) {
      l[i] = coin(rng) ? L::Ephemeral : L::Static;
      s[i] = level(rng) / 10.0 + (l[i] == L::Static ? 0.1 : 0.0);
    }
    CHECK(std::abs(*evaluate_separation(s, l).auc - pairwise_auc(s, l)) < 1e-12);
  }
}

TEST_CASE("scoring a small scene separates static from ephemeral") {
  SceneSpec spec = small_spec(11);
  spec.surface_density = 30.0;
  const Scene scene = generate_scene(spec);
  EvalConfig eval;
  eval.seed = 4;
  const ScoredPoints sp = score_scene(scene, eval);
  REQUIRE(sp.scores.size() == sp.points.size());
  REQUIRE(sp.labels.size() == sp.points.size());
  REQUIRE(sp.object_ids.size() == sp.points.size());
  const auto rep = evaluate_separation(sp.scores, sp.labels);
  CHECK(rep.n_ephemeral > 0);
  CHECK(rep.mean_static > 0.8);
  CHECK(rep.mean_ephemeral < 0.3);
  CHECK(*rep.auc > 0.95);

  eval.threads = 3;
  CHECK(score_scene(scene, eval).scores == sp.scores);
  eval.query_fraction = 0.0;
  CHECK_ERROR(score_scene(scene, eval), ErrorCode::InvalidArgument);
}

TEST_CASE("sweeps share the seed and validate their inputs") {
  SceneSpec spec = small_spec(12);
  EvalConfig eval;
  eval.query_fraction = 0.05;
  const std::vector<std::size_t> ts{2, 3};
  const auto rows = sweep_traversals(spec, ts, eval);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].num_traversals == 2);
  SceneSpec direct = spec;
  direct.num_traversals = 3;
  const auto ref = evaluate_separation(score_scene(generate_scene(direct), eval).scores,
                                       score_scene(generate_scene(direct), eval).labels);
  CHECK(rows[1].report.auc == ref.auc);
  CHECK(rows[1].report.mean_static == ref.mean_static);
  CHECK_ERROR(sweep_traversals(spec, std::vector<std::size_t>{1}, eval), ErrorCode::InvalidArgument);

  const auto noise = sweep_localization_noise(spec, std::vector<double>{0.0, 1.0}, eval);
  REQUIRE(noise.size() == 2);
  CHECK(noise[1].noise == 1.0);
  CHECK(*noise[1].report.auc < *noise[0].report.auc);
  CHECK_ERROR(sweep_localization_noise(spec, std::vector<double>{-0.1}, eval), ErrorCode::InvalidArgument);
}

TEST_CASE("scene alignment dataset") {
  const Scene scene = generate_scene(small_spec(13));
  EvalConfig eval;
  eval.query_fraction = 0.05;
  const AlignmentDataset ds = scene_alignment_dataset(scene, eval);
  CHECK(ds.rows() > 100);
  CHECK(ds.dim() == HandcraftedFeaturizer::kDimension + 1 + 3);
  for (double t : ds.targets) {
    CHECK(t >= 0.0);
    CHECK(t <= 1.0);
  }
  const AlignmentDataset again = scene_alignment_dataset(scene, eval);
  CHECK(again.features == ds.features);
  CHECK(again.targets == ds.targets);
}

TEST_CASE("GTL1 round trip and errors") {
  TempDir dir("gtl");
  std::mt19937_64 rng(14);
  std::vector<PointLabel> labels(5000);
  for (auto& l : labels) l = rng() % 3 == 0 ? PointLabel::Ephemeral : PointLabel::Static;
  write_truth_labels(labels, dir / "a.gtl");
  CHECK(std::filesystem::file_size(dir / "a.gtl") == 8 + labels.size());
  CHECK(read_truth_labels(dir / "a.gtl") == labels);
  write_truth_labels(std::vector<PointLabel>{}, dir / "e.gtl");
  CHECK(read_truth_labels(dir / "e.gtl").empty());

  std::filesystem::resize_file(dir / "a.gtl", 100);
  CHECK_ERROR(read_truth_labels(dir / "a.gtl"), ErrorCode::TruncatedFile);
  write_truth_labels(std::vector<PointLabel>{PointLabel::Static, static_cast<PointLabel>(7)}, dir / "bad.gtl");
  CHECK_ERROR(read_truth_labels(dir / "bad.gtl"), ErrorCode::MalformedRecord);
}

TEST_CASE("written scenes load back through the manifest") {
  TempDir dir("scene");
  const Scene scene = generate_scene(small_spec(15));
  const auto manifest_path = write_scene(scene, dir.path(), Point3(1000.0, -2000.0, 5.0));
  CHECK(manifest_path == dir / "manifest.json");
  const DatasetManifest m = load_manifest(manifest_path);
  REQUIRE(m.traversals.size() == 3);
  CHECK(m.origin_offset == Point3(1000.0, -2000.0, 5.0));
  const auto loaded = load_traversals(m);
  for (std::size_t t = 0; t < 3; ++t) {
    const auto& a = scene.traversals[t].frames();
    const auto& b = loaded[t].frames();
    REQUIRE(a.size() == b.size());
    for (std::size_t f = 0; f < a.size(); ++f) {
      CHECK(a[f].arclength == b[f].arclength);
      CHECK((a[f].pose.translation() - b[f].pose.translation()).norm() < 1e-9);
      REQUIRE(a[f].cloud.size() == b[f].cloud.size());
      for (std::size_t j = 0; j < a[f].cloud.size(); ++j) {
        CHECK((a[f].cloud.points[j] - b[f].cloud.points[j]).cwiseAbs().maxCoeff() < 1e-5);
      }
    }
    CHECK(read_truth_labels(dir / ("t" + std::to_string(t)) / "f000000.gtl") == scene.truth.labels[t][0]);
    CHECK(load_labels(dir / ("t" + std::to_string(t)) / "ephemeral_boxes.txt").size() ==
          scene.truth.ephemeral_boxes[t].size());
  }
}
