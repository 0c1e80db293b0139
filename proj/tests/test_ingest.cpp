#include <doctest.h>

#include <cstring>
#include <fstream>
#include <limits>
#include <random>

#include "test_util.hpp"
#include "traverse/ingest.hpp"

using namespace traverse;
using testutil::TempDir;

namespace {

void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void push_u32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void push_f32(std::vector<unsigned char>& b, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  push_u32(b, bits);
}

std::vector<unsigned char> pcb_header(std::uint32_t count) {
  std::vector<unsigned char> b{'P', 'C', 'B', '1'};
  push_u32(b, count);
  return b;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

// Frames with `points_per_frame[i]` points each at arclength i (step 1),
// poses translated by (arclength, 0, 0).
Traversal line_traversal(std::uint64_t id, const std::vector<std::size_t>& points_per_frame) {
  std::vector<Frame> frames;
  for (std::size_t i = 0; i < points_per_frame.size(); ++i) {
    Frame f;
    f.frame_id = i;
    f.arclength = static_cast<double>(i);
    f.pose = Pose6DoF(Point3(static_cast<double>(i), 0, 0), Eigen::Quaterniond::Identity());
    for (std::size_t k = 0; k < points_per_frame[i]; ++k) {
      f.cloud.points.emplace_back(0.0, static_cast<double>(k), 0.0);
    }
    frames.push_back(f);
  }
  return {id, frames};
}

}  // namespace

TEST_CASE("PCB1 header count 0 loads as an empty cloud") {
  TempDir dir("pcb");
  write_bytes(dir / "empty.pcb", pcb_header(0));
  CHECK(load_point_cloud(dir / "empty.pcb").empty());
}

TEST_CASE("PCB1 single record") {
  TempDir dir("pcb");
  auto bytes = pcb_header(1);
  for (float v : {1.5f, -2.0f, 0.25f, 0.5f}) push_f32(bytes, v);
  write_bytes(dir / "one.pcb", bytes);
  const PointCloud c = load_point_cloud(dir / "one.pcb");
  REQUIRE(c.size() == 1);
  CHECK(c.points[0] == Point3(1.5, -2.0, 0.25));
  CHECK(c.intensity[0] == 0.5);

  write_point_cloud(c, dir / "again.pcb");
  CHECK(read_bytes(dir / "again.pcb") == bytes);
}

TEST_CASE("PCB1 round trip of 10000 random points is bit identical") {
  TempDir dir("pcb");
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<float> u(-500.0f, 500.0f);
  std::uniform_real_distribution<float> i01(0.0f, 1.0f);
  PointCloud c;
  for (int i = 0; i < 10000; ++i) {
    c.points.emplace_back(u(rng), u(rng), u(rng));
    c.intensity.push_back(i01(rng));
  }
  write_point_cloud(c, dir / "r.pcb");
  CHECK(std::filesystem::file_size(dir / "r.pcb") == 8 + 16 * 10000);
  const PointCloud back = load_point_cloud(dir / "r.pcb");
  CHECK(back.points == c.points);
  CHECK(back.intensity == c.intensity);
}

TEST_CASE("PCB1 cloud without intensity is written with zeros") {
  TempDir dir("pcb");
  write_point_cloud(PointCloud({Point3(1, 2, 3)}), dir / "n.pcb");
  const PointCloud back = load_point_cloud(dir / "n.pcb");
  REQUIRE(back.size() == 1);
  CHECK(back.intensity[0] == 0.0);
}

TEST_CASE("PCB1 errors name the byte offset") {
  TempDir dir("pcb");
  write_bytes(dir / "magic.pcb", {'P', 'C', 'B', '2', 0, 0, 0, 0});
  CHECK_ERROR(load_point_cloud(dir / "magic.pcb"), ErrorCode::BadMagic);

  auto trunc = pcb_header(2);
  for (float v : {1.0f, 2.0f, 3.0f, 4.0f, 5.0f}) push_f32(trunc, v);
  write_bytes(dir / "trunc.pcb", trunc);
  try {
    (void)load_point_cloud(dir / "trunc.pcb");
    FAIL("expected TruncatedFile");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TruncatedFile);
    CHECK(std::string(e.what()).find("offset 8") != std::string::npos);
  }

  write_bytes(dir / "short.pcb", {'P', 'C'});
  CHECK_ERROR(load_point_cloud(dir / "short.pcb"), ErrorCode::BadMagic);

  auto nan = pcb_header(2);
  for (float v : {1.0f, 2.0f, 3.0f, 4.0f}) push_f32(nan, v);
  for (float v : {1.0f, std::numeric_limits<float>::quiet_NaN(), 3.0f, 4.0f}) push_f32(nan, v);
  write_bytes(dir / "nan.pcb", nan);
  try {
    (void)load_point_cloud(dir / "nan.pcb");
    FAIL("expected NonFinitePoint");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFinitePoint);
    CHECK(std::string(e.what()).find("offset 24") != std::string::npos);
  }

  CHECK_ERROR(load_point_cloud(dir / "missing.pcb"), ErrorCode::IoError);
}

TEST_CASE("pose files") {
  TempDir dir("poses");
  write_text(dir / "empty.txt", "");
  CHECK(load_poses(dir / "empty.txt").empty());

  write_text(dir / "id.txt", "# header\n\n7 1 2 3 1 0 0 0 4.5\n");
  const auto one = load_poses(dir / "id.txt");
  REQUIRE(one.size() == 1);
  CHECK(one[0].frame_id == 7);
  CHECK(one[0].pose.translation() == Point3(1, 2, 3));
  CHECK(one[0].pose.rotation().w() == 1.0);
  CHECK(one[0].pose.rotation().vec().isZero());
  CHECK(one[0].arclength == 4.5);

  write_text(dir / "norm.txt", "0 0 0 0 0.999 0 0 0 0\n");
  const auto n = load_poses(dir / "norm.txt");
  CHECK(std::abs(n[0].pose.rotation().norm() - 1.0) < 1e-9);
  CHECK(std::abs(n[0].pose.rotation().w() - 1.0) < 1e-9);

  write_text(dir / "origin.txt", "0 1000.5 2000.25 3 1 0 0 0 0\n");
  const auto o = load_poses(dir / "origin.txt", Point3(1000, 2000, 0));
  CHECK(o[0].pose.translation() == Point3(0.5, 0.25, 3));
}

TEST_CASE("pose file errors") {
  TempDir dir("poses");
  write_text(dir / "short.txt", "0 0 0 0 1 0 0 0 0\n# ok\n1 0 0 0 1 0 0 1\n");
  try {
    (void)load_poses(dir / "short.txt");
    FAIL("expected MalformedRecord");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MalformedRecord);
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }
  write_text(dir / "word.txt", "0 0 0 zero 1 0 0 0 0\n");
  CHECK_ERROR(load_poses(dir / "word.txt"), ErrorCode::MalformedRecord);
  write_text(dir / "zeroq.txt", "0 0 0 0 0 0 0 0 0\n");
  CHECK_ERROR(load_poses(dir / "zeroq.txt"), ErrorCode::MalformedRecord);
  write_text(dir / "back.txt", "0 0 0 0 1 0 0 0 5\n1 0 0 0 1 0 0 0 4\n");
  CHECK_ERROR(load_poses(dir / "back.txt"), ErrorCode::NonMonotonicArclength);
  CHECK_ERROR(load_poses(dir / "absent.txt"), ErrorCode::IoError);
}

TEST_CASE("pose round trip is bit exact") {
  TempDir dir("poses");
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> u(-1e4, 1e4);
  std::vector<PoseRecord> recs;
  double arc = 0.0;
  for (std::uint64_t i = 0; i < 500; ++i) {
    arc += std::abs(nd(rng));
    recs.push_back({i * 3, Pose6DoF::from_components(u(rng), u(rng), u(rng), nd(rng), nd(rng), nd(rng), nd(rng)),
                    arc});
  }
  write_poses(recs, dir / "p.txt");
  const auto back = load_poses(dir / "p.txt");
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].frame_id == recs[i].frame_id);
    CHECK(back[i].arclength == recs[i].arclength);
    CHECK(back[i].pose.translation() == recs[i].pose.translation());
    CHECK(back[i].pose.rotation().coeffs() == recs[i].pose.rotation().coeffs());
  }
}

TEST_CASE("manifest round trip and validation") {
  TempDir dir("manifest");
  std::filesystem::create_directories(dir / "t0");
  write_point_cloud(PointCloud({Point3(0, 0, 0), Point3(1, 0, 0)}), dir / "t0/f0.pcb");
  write_point_cloud(PointCloud({Point3(0, 1, 0)}), dir / "t0/f1.pcb");
  write_text(dir / "t0/poses.txt", "0 100 0 0 1 0 0 0 0\n1 101 0 0 1 0 0 0 1\n");

  DatasetManifest m;
  m.origin_offset = Point3(100, 0, 0);
  m.traversals.push_back({5, {dir / "t0/f0.pcb", dir / "t0/f1.pcb"}, dir / "t0/poses.txt"});
  m.locations = std::vector<double>{0.0, 1.0};
  write_manifest(m, dir / "manifest.json");

  const std::string text = [&] {
    std::ifstream in(dir / "manifest.json");
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }();
  CHECK(text.find("\"t0/poses.txt\"") != std::string::npos);

  const DatasetManifest back = load_manifest(dir / "manifest.json");
  CHECK(back.origin_offset == m.origin_offset);
  REQUIRE(back.traversals.size() == 1);
  CHECK(back.traversals[0].traversal_id == 5);
  CHECK(std::filesystem::equivalent(back.traversals[0].pose_file, dir / "t0/poses.txt"));
  REQUIRE(back.locations.has_value());
  CHECK(*back.locations == std::vector<double>{0.0, 1.0});

  const auto travs = load_traversals(back);
  REQUIRE(travs.size() == 1);
  CHECK(travs[0].frames().size() == 2);
  CHECK(travs[0].frames()[1].pose.translation() == Point3(1, 0, 0));

  write_text(dir / "empty.json", R"({"origin_offset": [0, 0, 0], "traversals": []})");
  CHECK_ERROR(load_manifest(dir / "empty.json"), ErrorCode::ManifestEmpty);
  write_text(dir / "broken.json", "{ not json");
  CHECK_ERROR(load_manifest(dir / "broken.json"), ErrorCode::ManifestInvalid);
  write_text(dir / "nofield.json", R"({"traversals": [{"id": 0, "frames": []}]})");
  CHECK_ERROR(load_manifest(dir / "nofield.json"), ErrorCode::ManifestInvalid);
  write_text(dir / "origin.json", R"({"origin_offset": [0, 0], "traversals": [{"id": 0, "poses": "t0/poses.txt", "frames": []}]})");
  CHECK_ERROR(load_manifest(dir / "origin.json"), ErrorCode::ManifestInvalid);
  write_text(dir / "dup.json",
             R"({"traversals": [{"id": 1, "poses": "t0/poses.txt", "frames": []},
                                {"id": 1, "poses": "t0/poses.txt", "frames": []}]})");
  CHECK_ERROR(load_manifest(dir / "dup.json"), ErrorCode::ManifestInvalid);
  write_text(dir / "gone.json", R"({"traversals": [{"id": 1, "poses": "t0/poses.txt", "frames": ["nope.pcb"]}]})");
  CHECK_ERROR(load_manifest(dir / "gone.json"), ErrorCode::IoError);
  CHECK_ERROR(load_manifest(dir / "absent.json"), ErrorCode::IoError);

  write_text(dir / "count.json", R"({"traversals": [{"id": 1, "poses": "t0/poses.txt", "frames": ["t0/f0.pcb"]}]})");
  CHECK_ERROR(load_traversals(load_manifest(dir / "count.json")), ErrorCode::ManifestInvalid);
}

TEST_CASE("accumulation config validation") {
  CHECK_NOTHROW(AccumulationConfig{2.0, 1.0}.validate());
  CHECK_ERROR((AccumulationConfig{0.0, 1.0}.validate()), ErrorCode::InvalidArgument);
  CHECK_ERROR((AccumulationConfig{2.0, 0.0}.validate()), ErrorCode::InvalidArgument);
  CHECK_ERROR((AccumulationConfig{2.0, 0.9}.validate()), ErrorCode::InvalidArgument);
}

TEST_CASE("accumulate_dense selects the closed window") {
  const std::vector<std::size_t> counts{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
  const Traversal t = line_traversal(0, counts);
  const DenseCloud d = accumulate_dense(t, 5.0, {2.0, 3.0});
  CHECK(d.source_frame_ids == std::vector<std::uint64_t>{2, 3, 4, 5, 6, 7, 8});
  std::size_t expected = 0;
  for (std::size_t i = 2; i <= 8; ++i) expected += counts[i];
  CHECK(d.cloud.size() == expected);
  CHECK(d.location == 5.0);
  // Frame order, then point order within each frame.
  CHECK(d.cloud.points.front() == Point3(2, 0, 0));
  CHECK(d.cloud.points[counts[2]] == Point3(3, 0, 0));
  CHECK(d.cloud.points.back() == Point3(8, static_cast<double>(counts[8] - 1), 0));
}

TEST_CASE("accumulate_dense errors and single frame") {
  const Traversal t = line_traversal(0, {1, 1, 1});
  CHECK_ERROR(accumulate_dense(t, 0.5, {0.5, 0.25}), ErrorCode::NoFramesInWindow);

  Frame f;
  f.frame_id = 4;
  f.arclength = 12.0;
  f.pose = Pose6DoF::from_yaw(0.3, Point3(5, 6, 7));
  f.cloud = PointCloud({Point3(1, 2, 3), Point3(-1, 0, 2)}, {0.2, 0.4});
  const Traversal single(1, {f});
  const DenseCloud d = accumulate_dense(single, 12.0, {2.0, 1.0});
  const PointCloud g = transform_to_global(f.cloud, f.pose);
  CHECK(d.cloud.points == g.points);
  CHECK(d.cloud.intensity == g.intensity);
  CHECK(d.source_frame_ids == std::vector<std::uint64_t>{4});
}

TEST_CASE("locations along the route") {
  const auto route = [](double lo, double hi) {
    std::vector<Frame> frames(2);
    frames[0].frame_id = 0;
    frames[0].arclength = lo;
    frames[1].frame_id = 1;
    frames[1].arclength = hi;
    return std::vector<Traversal>{Traversal(0, frames)};
  };
  CHECK(locations_for_route(route(0, 10), {2.0, 1.0}) == std::vector<double>{0, 2, 4, 6, 8, 10});
  CHECK(locations_for_route(route(0, 9.5), {2.0, 1.0}) == std::vector<double>{0, 2, 4, 6, 8});
  CHECK(locations_for_route(route(3, 3), {2.0, 1.0}) == std::vector<double>{3});

  const auto l = locations_for_route(route(0, 0.3), {0.1, 0.05});
  CHECK(l.size() == 4);

  std::vector<Frame> a(1);
  a[0].arclength = 4.0;
  std::vector<Frame> b(1);
  b[0].arclength = 1.0;
  const std::vector<Traversal> two{Traversal(0, a), Traversal(1, b)};
  CHECK(locations_for_route(two, {1.5, 1.0}) == std::vector<double>{1.0, 2.5, 4.0});
}

TEST_CASE("location windows cover the route up to the last window") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> step(0.0, 3.0);
  std::vector<Frame> frames;
  double arc = 0.0;
  for (std::uint64_t i = 0; i < 200; ++i) {
    Frame f;
    f.frame_id = i;
    f.arclength = arc;
    f.cloud.points.emplace_back(0, 0, 0);
    frames.push_back(f);
    arc += step(rng);
  }
  const std::vector<Traversal> trav{Traversal(0, frames)};
  const AccumulationConfig cfg{4.0, 2.0};
  const auto locs = locations_for_route(trav, cfg);
  std::vector<bool> seen(200, false);
  for (double l : locs) {
    try {
      for (auto id : accumulate_dense(trav[0], l, cfg).source_frame_ids) seen[id] = true;
    } catch (const Error&) {
    }
  }
  // The tail past the last location is only covered up to its half-window.
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].arclength <= locs.back() + cfg.window_hm) CHECK(seen[i]);
  }
  CHECK(locs.back() + cfg.spacing_m > frames.back().arclength);
}

TEST_CASE("nearest location prefers the lower one on ties") {
  const std::vector<double> locs{0.0, 2.0, 4.0};
  CHECK(nearest_location(locs, 1.0) == 0.0);
  CHECK(nearest_location(locs, 1.1) == 2.0);
  CHECK(nearest_location(locs, 100.0) == 4.0);
  const std::vector<double> unsorted{4.0, 2.0};
  CHECK(nearest_location(unsorted, 3.0) == 2.0);
  CHECK_ERROR(nearest_location(std::vector<double>{}, 1.0), ErrorCode::EmptyInput);
}

TEST_CASE("voxel downsample keeps one centroid per voxel") {
  PointCloud c({Point3(0.1, 0.1, 0.1), Point3(0.3, 0.1, 0.1), Point3(1.5, 0, 0)}, {0.2, 0.4, 1.0});
  const PointCloud d = voxel_downsample(c, 1.0);
  REQUIRE(d.size() == 2);
  CHECK((d.points[0] - Point3(0.2, 0.1, 0.1)).norm() < 1e-15);
  CHECK(d.points[1] == Point3(1.5, 0, 0));
  CHECK(std::abs(d.intensity[0] - 0.3) < 1e-15);
  CHECK_ERROR(voxel_downsample(c, 0.0), ErrorCode::InvalidArgument);
}
