#include "traverse/labels.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "traverse/error.hpp"

namespace traverse {

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return {buf, ptr};
}

}  // namespace

void OrientedBox::validate() const {
  require(center.allFinite() && std::isfinite(yaw) && std::isfinite(score), ErrorCode::InvalidArgument,
          "box values must be finite");
  require(length > 0.0 && width > 0.0 && height > 0.0, ErrorCode::InvalidArgument,
          "box dimensions must be positive");
}

double normalize_yaw(double yaw) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double y = std::fmod(yaw, two_pi);
  if (y > std::numbers::pi) y -= two_pi;
  if (y <= -std::numbers::pi) y += two_pi;
  return y;
}

std::vector<std::size_t> points_in_box(const OrientedBox& box, std::span<const Point3> points) {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const double hl = box.length / 2.0;
  const double hw = box.width / 2.0;
  const double hh = box.height / 2.0;
  std::vector<std::size_t> inside;
  for (std::size_t j = 0; j < points.size(); ++j) {
    const Point3 d = points[j] - box.center;
    // Rotate by -yaw into the box frame.
    const double x = c * d.x() + s * d.y();
    const double y = -s * d.x() + c * d.y();
    if (std::abs(x) <= hl && std::abs(y) <= hw && std::abs(d.z()) <= hh) inside.push_back(j);
  }
  return inside;
}

double percentile_nearest_rank(std::span<const double> values, double fraction) {
  require(!values.empty(), ErrorCode::EmptyInput, "percentile of an empty set");
  require(fraction > 0.0 && fraction < 1.0, ErrorCode::InvalidArgument, "fraction must be in (0, 1)");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  // The 1e-9 slack keeps products like 0.7 * 10 = 7.000000000000001 at rank 7.
  auto rank = static_cast<std::size_t>(std::ceil(fraction * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

void FilterConfig::validate() const {
  require(percentile > 0.0 && percentile < 1.0, ErrorCode::InvalidArgument, "percentile must be in (0, 1)");
  require(std::isfinite(threshold), ErrorCode::InvalidArgument, "threshold must be finite");
}

std::string to_string(RejectReason reason) {
  return reason == RejectReason::TooPersistent ? "TooPersistent" : "TooFewPoints";
}

std::vector<BoxVerdict> FilterOutcome::rejected() const {
  std::vector<BoxVerdict> out;
  std::copy_if(verdicts.begin(), verdicts.end(), std::back_inserter(out),
               [](const BoxVerdict& v) { return !v.kept; });
  return out;
}

FilterOutcome filter_pseudo_labels(std::span<const OrientedBox> boxes, const PointCloud& cloud,
                                   std::span<const double> scores, const FilterConfig& cfg) {
  cfg.validate();
  require(scores.size() == cloud.size(), ErrorCode::LengthMismatch,
          std::to_string(scores.size()) + " scores for " + std::to_string(cloud.size()) + " points");
  FilterOutcome outcome;
  std::vector<double> box_scores;
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    const auto inside = points_in_box(boxes[b], cloud.points);
    BoxVerdict v;
    v.box_id = b;
    v.point_count = inside.size();
    if (!inside.empty()) {
      box_scores.clear();
      for (auto j : inside) box_scores.push_back(scores[j]);
      v.percentile_score = percentile_nearest_rank(box_scores, cfg.percentile);
    }
    if (inside.empty() || inside.size() < cfg.min_points) {
      v.reason = RejectReason::TooFewPoints;
    } else if (!(*v.percentile_score < cfg.threshold)) {
      v.reason = RejectReason::TooPersistent;
    } else {
      v.kept = true;
      outcome.kept.push_back(boxes[b]);
    }
    outcome.verdicts.push_back(v);
  }
  return outcome;
}

std::vector<OrientedBox> load_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open " + path.string());
  std::vector<OrientedBox> boxes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string first;
    if (!(fields >> first) || first.front() == '#') continue;

    std::vector<std::string> rest;
    for (std::string tok; fields >> tok;) rest.push_back(tok);
    const auto fail = [&](const std::string& why) {
      return Error(ErrorCode::MalformedRecord, path.string() + ":" + std::to_string(line_no) + ": " + why);
    };
    if (rest.size() != 8) throw fail("expected 9 fields, got " + std::to_string(rest.size() + 1));
    double v[8];
    for (int k = 0; k < 8; ++k) {
      const auto& tok = rest[static_cast<std::size_t>(k)];
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v[k]);
      if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v[k])) {
        throw fail("bad numeric field '" + tok + "'");
      }
    }
    OrientedBox box;
    box.label = first;
    box.center = Point3(v[0], v[1], v[2]);
    box.length = v[3];
    box.width = v[4];
    box.height = v[5];
    box.yaw = normalize_yaw(v[6]);
    box.score = v[7];
    try {
      box.validate();
    } catch (const Error& e) {
      throw fail(e.what());
    }
    boxes.push_back(std::move(box));
  }
  return boxes;
}

void save_labels(std::span<const OrientedBox> boxes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << "# class cx cy cz length width height yaw score\n";
  for (const auto& b : boxes) {
    require(!b.label.empty() && b.label.find_first_of(" \t\n#") == std::string::npos,
            ErrorCode::InvalidArgument, "box class must be a single non-empty token");
    out << b.label << ' ' << format_double(b.center.x()) << ' ' << format_double(b.center.y()) << ' '
        << format_double(b.center.z()) << ' ' << format_double(b.length) << ' '
        << format_double(b.width) << ' ' << format_double(b.height) << ' ' << format_double(b.yaw)
        << ' ' << format_double(b.score) << '\n';
  }
  require(static_cast<bool>(out), ErrorCode::IoError, "write failed for " + path.string());
}

void write_filter_report(const FilterOutcome& outcome, std::span<const OrientedBox> boxes,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << "box_id,label,points,percentile,kept,reason\n";
  for (const auto& v : outcome.verdicts) {
    out << v.box_id << ',' << boxes[v.box_id].label << ',' << v.point_count << ','
        << (v.percentile_score ? format_double(*v.percentile_score) : std::string()) << ','
        << (v.kept ? 1 : 0) << ',' << (v.reason ? to_string(*v.reason) : std::string()) << '\n';
  }
}

}  // namespace traverse
