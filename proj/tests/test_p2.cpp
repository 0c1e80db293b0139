#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "test_util.hpp"
#include "traverse/p2.hpp"

using namespace traverse;
using testutil::TempDir;

namespace {

using Row = std::vector<std::uint32_t>;

// Normalized entropy written from the textbook definition, in any log base.
double entropy_score(const Row& row, double base) {
  const double total = std::accumulate(row.begin(), row.end(), 0.0);
  if (total == 0.0) return 0.0;
  double h = 0.0;
  for (auto n : row) {
    if (n == 0) continue;
    const double p = n / total;
    h -= p * std::log(p) / std::log(base);
  }
  return h / (std::log(static_cast<double>(row.size())) / std::log(base));
}

DenseCloud cloud_of(std::uint64_t id, std::vector<Point3> pts) {
  DenseCloud d;
  d.traversal_id = id;
  d.cloud = PointCloud(std::move(pts));
  return d;
}

Row random_row(std::mt19937_64& rng, std::size_t t_max = 12) {
  std::uniform_int_distribution<std::size_t> len(2, t_max);
  std::uniform_int_distribution<std::uint32_t> cnt(0, 40);
  Row r(len(rng));
  for (auto& v : r) v = cnt(rng);
  return r;
}

}  // namespace

TEST_CASE("normalize_counts") {
  const auto p = normalize_counts(Row{3, 1});
  REQUIRE(p.has_value());
  CHECK((*p)[0] == 0.75);
  CHECK((*p)[1] == 0.25);
  const auto u = normalize_counts(Row{5, 5, 5});
  REQUIRE(u.has_value());
  for (double v : *u) CHECK(std::abs(v - 1.0 / 3.0) < 1e-15);
  CHECK_FALSE(normalize_counts(Row{0, 0}).has_value());

  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const Row r = random_row(rng);
    const auto q = normalize_counts(r);
    if (!q) continue;
    CHECK(std::abs(std::accumulate(q->begin(), q->end(), 0.0) - 1.0) < 1e-12);
  }
}

TEST_CASE("p2_score reference values") {
  CHECK(p2_score(Row{0, 0}) == 0.0);
  CHECK(std::abs(p2_score(Row{7, 7}) - 1.0) < 1e-12);
  CHECK(p2_score(Row{5, 0}) == 0.0);
  // H(0.75, 0.25) / ln 2 evaluated directly.
  const double h = -(0.75 * std::log(0.75) + 0.25 * std::log(0.25));
  CHECK(std::abs(p2_score(Row{3, 1}) - h / std::log(2.0)) < 1e-9);
  CHECK(std::abs(p2_score(Row{3, 1}) - 0.81128) < 1e-5);
  CHECK_ERROR(p2_score(Row{4}), ErrorCode::TooFewTraversals);
  CHECK_ERROR(p2_score(Row{}), ErrorCode::TooFewTraversals);
}

TEST_CASE("p2_score matches the entropy definition in any base") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 500; ++i) {
    const Row r = random_row(rng);
    const double s = p2_score(r);
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
    CHECK(std::abs(s - entropy_score(r, std::exp(1.0))) < 1e-12);
    CHECK(std::abs(s - entropy_score(r, 2.0)) < 1e-12);
  }
}

TEST_CASE("p2_score invariances") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 300; ++i) {
    Row r = random_row(rng);
    const double s = p2_score(r);
    Row perm = r;
    std::shuffle(perm.begin(), perm.end(), rng);
    CHECK(std::abs(p2_score(perm) - s) < 1e-12);
    for (std::uint32_t k : {2u, 3u, 17u}) {
      Row scaled = r;
      for (auto& v : scaled) v *= k;
      CHECK(std::abs(p2_score(scaled) - s) < 1e-12);
    }
  }
}

TEST_CASE("uniform rows score 1 and single-support rows score 0") {
  for (std::size_t t = 2; t <= 30; ++t) {
    CHECK(std::abs(p2_score(Row(t, 9)) - 1.0) < 1e-12);
    Row single(t, 0);
    single[t / 2] = 13;
    CHECK(p2_score(single) == 0.0);
  }
}

TEST_CASE("neighbor counts and scores over dense clouds") {
  const P2Config cfg;
  const std::vector<DenseCloud> clouds{cloud_of(0, {Point3(0, 0, 0), Point3(0.1, 0, 0), Point3(5, 5, 5)}),
                                       cloud_of(1, {Point3(0, 0.1, 0), Point3(0, 0, 0.1)}),
                                       cloud_of(2, {Point3(5, 5, 5.1)})};
  const std::vector<Point3> qs{Point3(0, 0, 0), Point3(5, 5, 5), Point3(100, 0, 0)};
  const CountMatrix m = neighbor_counts(clouds, qs, cfg);
  REQUIRE(m.rows() == 3);
  REQUIRE(m.cols() == 3);
  for (std::size_t i = 0; i < qs.size(); ++i) {
    for (std::size_t t = 0; t < clouds.size(); ++t) CHECK(m.at(i, t) == count_brute(clouds[t].cloud, qs[i], 0.3));
  }
  CHECK(m.row(0)[0] == 2);
  CHECK(m.row(0)[1] == 2);
  CHECK(m.row(0)[2] == 0);

  const P2Result r = compute_p2(clouds, qs, cfg, true);
  REQUIRE(r.per_traversal_counts.has_value());
  CHECK(std::abs(r.scores[0] - std::log(2.0) / std::log(3.0)) < 1e-12);
  CHECK(std::abs(r.scores[1] - std::log(2.0) / std::log(3.0)) < 1e-12);
  CHECK(r.scores[2] == 0.0);
  CHECK_FALSE(compute_p2(clouds, qs, cfg).per_traversal_counts.has_value());
}

TEST_CASE("far query, equal support and single support") {
  const P2Config cfg;
  const std::vector<DenseCloud> two{cloud_of(0, {Point3(0, 0, 0)}), cloud_of(1, {Point3(0, 0, 0.05)})};
  const auto far = neighbor_counts(two, std::vector<Point3>{Point3(10, 10, 10)}, cfg);
  CHECK(far.row(0)[0] == 0);
  CHECK(far.row(0)[1] == 0);
  CHECK(std::abs(compute_p2(two, std::vector<Point3>{Point3(0, 0, 0.02)}, cfg).scores[0] - 1.0) < 1e-9);

  const std::vector<DenseCloud> lopsided{cloud_of(0, {Point3(0, 0, 0), Point3(0, 0, 0.1)}),
                                         cloud_of(1, {Point3(3, 0, 0)})};
  CHECK(compute_p2(lopsided, std::vector<Point3>{Point3(0, 0, 0)}, cfg).scores[0] == 0.0);

  CHECK_ERROR(compute_p2(std::vector<DenseCloud>{cloud_of(0, {})}, std::vector<Point3>{}, cfg),
              ErrorCode::TooFewTraversals);
  P2Config three;
  three.min_traversals = 3;
  CHECK_ERROR(P2Scorer(two, three), ErrorCode::TooFewTraversals);
  P2Config bad;
  bad.radius_r = 0.0;
  CHECK_ERROR(compute_p2(two, std::vector<Point3>{}, bad), ErrorCode::InvalidArgument);
}

TEST_CASE("planted neighbors match the brute-force oracle") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 4.0);
  std::vector<DenseCloud> clouds;
  for (std::uint64_t t = 0; t < 6; ++t) {
    std::vector<Point3> pts;
    for (int i = 0; i < 3000; ++i) pts.emplace_back(u(rng), u(rng), u(rng) / 4.0);
    clouds.push_back(cloud_of(t, pts));
  }
  std::vector<Point3> qs;
  for (int i = 0; i < 500; ++i) qs.emplace_back(u(rng), u(rng), u(rng) / 4.0);
  P2Config cfg;
  cfg.radius_r = 0.25;
  const P2Scorer scorer(clouds, cfg);
  const CountMatrix m = scorer.neighbor_counts(qs, 3);
  const P2Result r = scorer.score(qs, false, 1);
  for (std::size_t i = 0; i < qs.size(); ++i) {
    Row row;
    for (std::size_t t = 0; t < clouds.size(); ++t) {
      CHECK(m.at(i, t) == count_brute(clouds[t].cloud, qs[i], 0.25));
      row.push_back(m.at(i, t));
    }
    CHECK(r.scores[i] == p2_score(row));
  }
  CHECK(scorer.score(qs, false, 4).scores == r.scores);
}

TEST_CASE("P2S1 round trip and errors") {
  TempDir dir("p2s");
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<double> scores;
  for (int i = 0; i < 4096; ++i) scores.push_back(u(rng));
  write_p2_scores(scores, dir / "s.p2s");
  CHECK(std::filesystem::file_size(dir / "s.p2s") == 8 + 4 * scores.size());
  CHECK(read_p2_scores(dir / "s.p2s") == scores);

  write_p2_scores(std::vector<double>{}, dir / "e.p2s");
  CHECK(read_p2_scores(dir / "e.p2s").empty());

  std::filesystem::resize_file(dir / "s.p2s", 100);
  CHECK_ERROR(read_p2_scores(dir / "s.p2s"), ErrorCode::TruncatedFile);
  CHECK_ERROR(read_p2_scores(dir / "absent.p2s"), ErrorCode::IoError);
}

TEST_CASE("score histogram") {
  const std::vector<double> s{0.0, 0.049, 0.05, 0.5, 0.999, 1.0};
  const auto h = score_histogram(s, 20);
  REQUIRE(h.size() == 20);
  CHECK(h[0] == 2);
  CHECK(h[1] == 1);
  CHECK(h[10] == 1);
  CHECK(h[19] == 2);
  CHECK(std::accumulate(h.begin(), h.end(), std::uint64_t{0}) == s.size());
  const auto empty = score_histogram(std::vector<double>{});
  CHECK(std::accumulate(empty.begin(), empty.end(), std::uint64_t{0}) == 0);
  CHECK_ERROR(score_histogram(s, 0), ErrorCode::InvalidArgument);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> many(10000);
  for (auto& v : many) v = u(rng);
  const auto hm = score_histogram(many, 20);
  CHECK(std::accumulate(hm.begin(), hm.end(), std::uint64_t{0}) == many.size());
}
