#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "traverse/core.hpp"
#include "traverse/spatial.hpp"

namespace traverse {

struct P2Config {
  double radius_r = 0.3;
  std::size_t min_traversals = 2;

  void validate() const;
};

/// Row-major (query x traversal) matrix of neighbor counts N_t(q).
class CountMatrix {
 public:
  CountMatrix() = default;
  CountMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0) {}

  [[nodiscard]] std::size_t rows() const { return rows_; }
  [[nodiscard]] std::size_t cols() const { return cols_; }
  [[nodiscard]] std::span<const std::uint32_t> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }
  [[nodiscard]] std::uint32_t& at(std::size_t i, std::size_t t) { return data_[i * cols_ + t]; }
  [[nodiscard]] std::uint32_t at(std::size_t i, std::size_t t) const { return data_[i * cols_ + t]; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint32_t> data_;
};

struct P2Result {
  std::vector<double> scores;
  std::optional<CountMatrix> per_traversal_counts;
};

/// Categorical distribution of a count row across traversals, or nullopt
/// when every count is zero.
std::optional<std::vector<double>> normalize_counts(std::span<const std::uint32_t> row);

/// Normalized entropy H(P) / ln(T) of a count row; 0 when all counts are
/// zero. Uses 0 * ln 0 = 0. Errors: TooFewTraversals if the row has < 2 entries.
double p2_score(std::span<const std::uint32_t> row);

/// Per-traversal radius indices over a fixed set of dense clouds, reusable
/// across many query batches.
class P2Scorer {
 public:
  /// Errors: TooFewTraversals if fewer than cfg.min_traversals clouds.
  P2Scorer(std::span<const DenseCloud> dense_clouds, const P2Config& cfg);

  [[nodiscard]] std::size_t num_traversals() const { return indices_.size(); }
  [[nodiscard]] const P2Config& config() const { return cfg_; }

  [[nodiscard]] CountMatrix neighbor_counts(std::span<const Point3> queries,
                                            unsigned threads = 0) const;
  [[nodiscard]] P2Result score(std::span<const Point3> queries, bool keep_counts = false,
                               unsigned threads = 0) const;

 private:
  P2Config cfg_;
  std::vector<RadiusCountIndex> indices_;
};

CountMatrix neighbor_counts(std::span<const DenseCloud> dense_clouds,
                            std::span<const Point3> queries, const P2Config& cfg,
                            unsigned threads = 0);

P2Result compute_p2(std::span<const DenseCloud> dense_clouds, std::span<const Point3> queries,
                    const P2Config& cfg, bool keep_counts = false, unsigned threads = 0);

// P2S1: "P2S1", u32 count, count x f32 score, little-endian.
void write_p2_scores(std::span<const double> scores, const std::filesystem::path& path);
std::vector<double> read_p2_scores(const std::filesystem::path& path);

/// Equal-width histogram over [0, 1]; a score of exactly 1 lands in the last bin.
std::vector<std::uint64_t> score_histogram(std::span<const double> scores, std::size_t bins = 20);

}  // namespace traverse
