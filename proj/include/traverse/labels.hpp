#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "traverse/core.hpp"

namespace traverse {

/// Pseudo-label box in the global frame. Yaw is about +z, kept in (-pi, pi].
struct OrientedBox {
  Point3 center = Point3::Zero();
  double length = 1.0;
  double width = 1.0;
  double height = 1.0;
  double yaw = 0.0;
  double score = 1.0;
  std::string label = "object";

  /// Errors: InvalidArgument for non-positive dims or non-finite values.
  void validate() const;
};

/// Maps an angle into (-pi, pi].
double normalize_yaw(double yaw);

/// Indices of points inside the box (boundary inclusive), ascending.
std::vector<std::size_t> points_in_box(const OrientedBox& box, std::span<const Point3> points);

/// Nearest-rank percentile: sorted ascending, element at rank
/// ceil(fraction * n) (1-indexed). Errors: EmptyInput, InvalidArgument.
double percentile_nearest_rank(std::span<const double> values, double fraction);

struct FilterConfig {
  double percentile = 0.20;
  double threshold = 0.7;
  std::size_t min_points = 1;

  void validate() const;
};

enum class RejectReason { TooPersistent, TooFewPoints };
std::string to_string(RejectReason reason);

struct BoxVerdict {
  std::size_t box_id = 0;  // index into the input list
  std::size_t point_count = 0;
  std::optional<double> percentile_score;  // absent when the box has no points
  bool kept = false;
  std::optional<RejectReason> reason;
};

struct FilterOutcome {
  std::vector<OrientedBox> kept;
  std::vector<BoxVerdict> verdicts;  // one per input box, input order

  [[nodiscard]] std::vector<BoxVerdict> rejected() const;
};

/// Keeps a box iff it holds >= min_points points and the nearest-rank
/// percentile of their scores is strictly below the threshold.
/// Errors: LengthMismatch if scores and cloud differ in length.
FilterOutcome filter_pseudo_labels(std::span<const OrientedBox> boxes, const PointCloud& cloud,
                                   std::span<const double> scores, const FilterConfig& cfg);

/// Text format, one box per line:
///   class cx cy cz length width height yaw score
/// `#` lines and blank lines are ignored. Values are written with 17
/// significant digits. Errors: MalformedRecord (with line number), IoError.
std::vector<OrientedBox> load_labels(const std::filesystem::path& path);
void save_labels(std::span<const OrientedBox> boxes, const std::filesystem::path& path);

/// CSV: box_id,label,points,percentile,kept,reason
void write_filter_report(const FilterOutcome& outcome, std::span<const OrientedBox> boxes,
                         const std::filesystem::path& path);

}  // namespace traverse
