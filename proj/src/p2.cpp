#include "traverse/p2.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "binary_io.hpp"
#include "traverse/error.hpp"

namespace traverse {

void P2Config::validate() const {
  require(radius_r > 0.0 && std::isfinite(radius_r), ErrorCode::InvalidArgument,
          "radius_r must be positive");
  require(min_traversals >= 2, ErrorCode::InvalidArgument, "min_traversals must be at least 2");
}

std::optional<std::vector<double>> normalize_counts(std::span<const std::uint32_t> row) {
  std::uint64_t total = 0;
  for (auto n : row) total += n;
  if (total == 0) return std::nullopt;
  std::vector<double> p(row.size());
  const auto denom = static_cast<double>(total);
  for (std::size_t t = 0; t < row.size(); ++t) p[t] = static_cast<double>(row[t]) / denom;
  return p;
}

double p2_score(std::span<const std::uint32_t> row) {
  require(row.size() >= 2, ErrorCode::TooFewTraversals,
          "P2 needs at least 2 traversals, got " + std::to_string(row.size()));
  const auto p = normalize_counts(row);
  if (!p) return 0.0;
  double entropy = 0.0;
  for (double pt : *p) {
    if (pt > 0.0) entropy -= pt * std::log(pt);
  }
  const double score = entropy / std::log(static_cast<double>(row.size()));
  // Only absorbs rounding overshoot; real values never leave [0, 1].
  return std::clamp(score, 0.0, 1.0);
}

P2Scorer::P2Scorer(std::span<const DenseCloud> dense_clouds, const P2Config& cfg) : cfg_(cfg) {
  cfg_.validate();
  require(dense_clouds.size() >= cfg_.min_traversals, ErrorCode::TooFewTraversals,
          "got " + std::to_string(dense_clouds.size()) + " traversals, need at least " +
              std::to_string(cfg_.min_traversals));
  indices_.reserve(dense_clouds.size());
  for (const auto& d : dense_clouds) indices_.push_back(build_index(d.cloud, cfg_.radius_r));
}

CountMatrix P2Scorer::neighbor_counts(std::span<const Point3> queries, unsigned threads) const {
  CountMatrix counts(queries.size(), indices_.size());
  parallel_for(queries.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t t = 0; t < indices_.size(); ++t) {
        counts.at(i, t) = indices_[t].count_within(queries[i], cfg_.radius_r);
      }
    }
  });
  return counts;
}

P2Result P2Scorer::score(std::span<const Point3> queries, bool keep_counts,
                         unsigned threads) const {
  CountMatrix counts = neighbor_counts(queries, threads);
  P2Result result;
  result.scores.resize(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) result.scores[i] = p2_score(counts.row(i));
  if (keep_counts) result.per_traversal_counts = std::move(counts);
  return result;
}

CountMatrix neighbor_counts(std::span<const DenseCloud> dense_clouds,
                            std::span<const Point3> queries, const P2Config& cfg,
                            unsigned threads) {
  return P2Scorer(dense_clouds, cfg).neighbor_counts(queries, threads);
}

P2Result compute_p2(std::span<const DenseCloud> dense_clouds, std::span<const Point3> queries,
                    const P2Config& cfg, bool keep_counts, unsigned threads) {
  return P2Scorer(dense_clouds, cfg).score(queries, keep_counts, threads);
}

void write_p2_scores(std::span<const double> scores, const std::filesystem::path& path) {
  require(scores.size() <= std::numeric_limits<std::uint32_t>::max(), ErrorCode::InvalidArgument,
          "too many scores for P2S1");
  detail::ByteWriter out;
  out.magic("P2S1");
  out.put(static_cast<std::uint32_t>(scores.size()));
  for (double s : scores) out.put(static_cast<float>(s));
  out.save(path);
}

std::vector<double> read_p2_scores(const std::filesystem::path& path) {
  detail::ByteReader in(path);
  in.expect_magic("P2S1");
  const auto count = in.get<std::uint32_t>();
  in.ensure(static_cast<std::size_t>(count) * 4);
  std::vector<double> scores(count);
  for (auto& s : scores) s = in.get<float>();
  return scores;
}

std::vector<std::uint64_t> score_histogram(std::span<const double> scores, std::size_t bins) {
  require(bins > 0, ErrorCode::InvalidArgument, "histogram needs at least one bin");
  std::vector<std::uint64_t> hist(bins, 0);
  for (double s : scores) {
    const double clamped = std::clamp(s, 0.0, 1.0);
    auto b = static_cast<std::size_t>(clamped * static_cast<double>(bins));
    ++hist[std::min(b, bins - 1)];
  }
  return hist;
}

}  // namespace traverse
