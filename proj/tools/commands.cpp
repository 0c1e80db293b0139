#include "commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <utility>

#include "traverse/error.hpp"
#include "traverse/p2.hpp"
#include "traverse/spatial.hpp"

namespace traverse::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, res.ptr};
}

template <typename T>
std::string fmt_list(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += fmt(values[i]);
    } else {
      out += std::to_string(values[i]);
    }
  }
  return out;
}

// Effective parameters of a run, written as `key=value` lines in the order added.
class RunMeta {
 public:
  RunMeta(const std::string& command, const RunConfig& run) {
    add("command", command);
    add("manifest", run.manifest.empty() ? std::string("-") : run.manifest.string());
    add("threads", std::to_string(run.threads));
    add("seed", std::to_string(run.seed));
  }

  void add(const std::string& key, const std::string& value) { entries_.emplace_back(key, value); }
  void add(const std::string& key, double value) { add(key, fmt(value)); }
  void add(const std::string& key, std::size_t value) { add(key, std::to_string(value)); }
  void add(const std::string& key, bool value) { add(key, std::string(value ? "true" : "false")); }

  void save(const fs::path& dir) const {
    std::ostringstream text;
    for (const auto& [k, v] : entries_) text << k << '=' << v << '\n';
    write_text(dir / "run_meta.txt", text.str());
  }

  static void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::IoError, "cannot open " + path.string() + " for writing");
    out << text;
    require(static_cast<bool>(out), ErrorCode::IoError, "failed writing " + path.string());
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

void prepare_out(const RunConfig& run) {
  std::error_code ec;
  fs::create_directories(run.out, ec);
  require(!ec && fs::is_directory(run.out), ErrorCode::IoError,
          "cannot create output directory " + run.out.string());
}

DatasetManifest require_manifest(const RunConfig& run) {
  require(!run.manifest.empty(), ErrorCode::InvalidArgument, "--manifest is required");
  return load_manifest(run.manifest);
}

std::vector<double> route_locations(const DatasetManifest& manifest, std::span<const Traversal> traversals,
                                    const AccumulationConfig& cfg) {
  if (manifest.locations) {
    require(!manifest.locations->empty(), ErrorCode::ManifestInvalid, "manifest lists no locations");
    return *manifest.locations;
  }
  return locations_for_route(traversals, cfg);
}

// Re-raises a library error with extra context, keeping its code.
template <typename F>
auto with_context(const std::string& context, F&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), context + ": " + e.what());
  }
}

void add_accumulation(RunMeta& meta, const AccumulationConfig& cfg) {
  meta.add("spacing_m", cfg.spacing_m);
  meta.add("window_hm", cfg.window_hm);
}

std::string separation_header() { return "mean_static,mean_ephemeral,n_static,n_ephemeral,auc"; }

std::string separation_fields(const sim::SeparationReport& r) {
  return fmt(r.mean_static) + ',' + fmt(r.mean_ephemeral) + ',' + std::to_string(r.n_static) + ',' +
         std::to_string(r.n_ephemeral) + ',' + (r.auc ? fmt(*r.auc) : std::string());
}

void add_scene(RunMeta& meta, const sim::SceneSpec& s) {
  meta.add("route_length", s.route_length);
  meta.add("frame_spacing", s.frame_spacing);
  meta.add("corridor_half_width", s.corridor_half_width);
  meta.add("sensor_height", s.sensor_height);
  meta.add("num_traversals", s.num_traversals);
  meta.add("surface_density", s.surface_density);
  meta.add("num_buildings", s.num_buildings);
  meta.add("num_poles", s.num_poles);
  meta.add("num_cars", s.num_cars);
  meta.add("num_pedestrians", s.num_pedestrians);
  meta.add("presence_k", s.presence_k);
  meta.add("ephemeral_jitter", s.ephemeral_jitter);
  meta.add("ephemeral_clearance", s.ephemeral_clearance);
  meta.add("sensor_noise", s.sensor_noise);
  meta.add("loc_noise_translation", s.loc_noise_translation);
  meta.add("loc_noise_yaw", s.loc_noise_yaw);
  meta.add("intensity", s.intensity);
  meta.add("scene_seed", std::to_string(s.seed));
}

}  // namespace

std::string dense_file_name(std::uint64_t traversal_id, double location) {
  return "dense_t" + std::to_string(traversal_id) + "_l" + std::to_string(std::llround(location * 1000.0)) + ".pcb";
}

void cmd_accumulate(const RunConfig& run, const AccumulateOptions& opt) {
  opt.accumulation.validate();
  require(opt.downsample_voxel >= 0.0, ErrorCode::InvalidArgument, "--downsample must be >= 0");
  const DatasetManifest manifest = require_manifest(run);
  prepare_out(run);
  const auto traversals = load_traversals(manifest);
  const auto locations = route_locations(manifest, traversals, opt.accumulation);

  std::ostringstream summary;
  summary << "traversal_id,location_m,frames,points,file\n";
  for (const auto& trav : traversals) {
    for (double l : locations) {
      DenseCloud dense = with_context("traversal " + std::to_string(trav.id()) + " at location " + fmt(l),
                                      [&] { return accumulate_dense(trav, l, opt.accumulation); });
      if (opt.downsample_voxel > 0.0) dense.cloud = voxel_downsample(dense.cloud, opt.downsample_voxel);
      const std::string name = dense_file_name(trav.id(), l);
      write_point_cloud(dense.cloud, run.out / name);
      summary << trav.id() << ',' << fmt(l) << ',' << dense.source_frame_ids.size() << ',' << dense.cloud.size()
              << ',' << name << '\n';
    }
  }
  RunMeta::write_text(run.out / "dense_summary.csv", summary.str());

  RunMeta meta("accumulate", run);
  add_accumulation(meta, opt.accumulation);
  meta.add("locations", manifest.locations ? std::string("manifest") : std::string("route"));
  meta.add("downsample_voxel", opt.downsample_voxel);
  meta.add("num_locations", locations.size());
  meta.save(run.out);
}

void cmd_p2(const RunConfig& run, const P2Options& opt) {
  opt.accumulation.validate();
  P2Config cfg;
  cfg.radius_r = opt.radius;
  cfg.validate();
  const bool from_frame = opt.traversal.has_value() || opt.frame.has_value();
  require(from_frame != !opt.scan.empty(), ErrorCode::InvalidArgument,
          "give either --traversal with --frame, or --scan with --arclength");
  require(!from_frame || (opt.traversal && opt.frame), ErrorCode::InvalidArgument,
          "--traversal and --frame must be given together");
  require(from_frame || opt.arclength.has_value(), ErrorCode::InvalidArgument, "--scan needs --arclength");

  const DatasetManifest manifest = require_manifest(run);
  prepare_out(run);
  const auto traversals = load_traversals(manifest);
  const auto locations = route_locations(manifest, traversals, opt.accumulation);

  PointCloud scan;
  double arclength = 0.0;
  std::optional<std::uint64_t> self;
  if (from_frame) {
    const auto trav = std::find_if(traversals.begin(), traversals.end(),
                                   [&](const Traversal& t) { return t.id() == *opt.traversal; });
    require(trav != traversals.end(), ErrorCode::InvalidArgument,
            "no traversal " + std::to_string(*opt.traversal) + " in manifest");
    const auto& frames = trav->frames();
    const auto frame = std::find_if(frames.begin(), frames.end(),
                                    [&](const Frame& f) { return f.frame_id == *opt.frame; });
    require(frame != frames.end(), ErrorCode::InvalidArgument,
            "no frame " + std::to_string(*opt.frame) + " in traversal " + std::to_string(*opt.traversal));
    scan = transform_to_global(frame->cloud, frame->pose);
    arclength = frame->arclength;
    if (!opt.include_self) self = trav->id();
  } else {
    scan = load_point_cloud(opt.scan);
    arclength = *opt.arclength;
  }
  const double location = nearest_location(locations, arclength);

  std::vector<DenseCloud> dense;
  for (const auto& trav : traversals) {
    if (self && trav.id() == *self) continue;
    if (!opt.dense_dir.empty()) {
      DenseCloud d;
      d.traversal_id = trav.id();
      d.location = location;
      d.cloud = load_point_cloud(opt.dense_dir / dense_file_name(trav.id(), location));
      dense.push_back(std::move(d));
    } else {
      dense.push_back(with_context("traversal " + std::to_string(trav.id()) + " at location " + fmt(location),
                                   [&] { return accumulate_dense(trav, location, opt.accumulation); }));
    }
  }

  const P2Result result = compute_p2(dense, scan.points, cfg, false, run.threads);
  write_p2_scores(result.scores, run.out / "p2_scores.p2s");
  write_point_cloud(scan, run.out / "scan_points.pcb");

  const auto hist = score_histogram(result.scores, 20);
  std::ostringstream csv;
  csv << "bin,lower,upper,count\n";
  for (std::size_t b = 0; b < hist.size(); ++b) {
    csv << b << ',' << fmt(static_cast<double>(b) / 20.0) << ',' << fmt(static_cast<double>(b + 1) / 20.0) << ','
        << hist[b] << '\n';
  }
  RunMeta::write_text(run.out / "p2_histogram.csv", csv.str());

  RunMeta meta("p2", run);
  meta.add("radius_r", cfg.radius_r);
  add_accumulation(meta, opt.accumulation);
  meta.add("scan", from_frame ? "traversal " + std::to_string(*opt.traversal) + " frame " + std::to_string(*opt.frame)
                              : opt.scan.string());
  meta.add("arclength", arclength);
  meta.add("location", location);
  meta.add("include_self", opt.include_self);
  meta.add("dense_source", opt.dense_dir.empty() ? std::string("manifest") : opt.dense_dir.string());
  meta.add("traversals_scored", dense.size());
  meta.add("points", scan.size());
  meta.save(run.out);
}

void cmd_featurize(const RunConfig& run, const FeaturizeOptions& opt) {
  opt.accumulation.validate();
  require(opt.voxel_size > 0.0 && std::isfinite(opt.voxel_size), ErrorCode::InvalidArgument,
          "--voxel-size must be positive");
  const DatasetManifest manifest = require_manifest(run);
  prepare_out(run);
  const auto traversals = load_traversals(manifest);
  const auto locations = route_locations(manifest, traversals, opt.accumulation);
  const HandcraftedFeaturizer featurizer;

  std::ostringstream summary;
  summary << "location_m,traversals,voxels,dropped_points,file\n";
  for (double l : locations) {
    const std::string where = "location " + fmt(l);
    std::vector<DenseCloud> dense;
    for (const auto& trav : traversals) {
      dense.push_back(with_context("traversal " + std::to_string(trav.id()) + " at " + where,
                                   [&] { return accumulate_dense(trav, l, opt.accumulation); }));
    }
    const VoxelGridSpec spec = with_context(where, [&] { return make_grid_spec(dense, opt.voxel_size); });
    std::vector<VoxelFeatures> per_traversal;
    std::size_t dropped = 0;
    for (const auto& d : dense) {
      FeaturizeResult r = with_context("traversal " + std::to_string(d.traversal_id) + " at " + where,
                                       [&] { return featurize_traversal(d, spec, featurizer); });
      dropped += r.dropped_points;
      if (opt.per_traversal) {
        const std::string name =
            "squash_t" + std::to_string(d.traversal_id) + "_l" + std::to_string(std::llround(l * 1000.0)) + ".sqf";
        save_store(r.features, run.out / name);
      }
      per_traversal.push_back(std::move(r.features));
    }
    const VoxelFeatures agg = aggregate(per_traversal, opt.mode);
    const std::string name = "squash_l" + std::to_string(std::llround(l * 1000.0)) + ".sqf";
    save_store(agg, run.out / name);
    summary << fmt(l) << ',' << dense.size() << ',' << agg.size() << ',' << dropped << ',' << name << '\n';
  }
  RunMeta::write_text(run.out / "featurize_summary.csv", summary.str());

  RunMeta meta("featurize", run);
  add_accumulation(meta, opt.accumulation);
  meta.add("voxel_size", opt.voxel_size);
  meta.add("aggregation", to_string(opt.mode));
  meta.add("featurizer", featurizer.name());
  meta.add("per_traversal", opt.per_traversal);
  meta.save(run.out);
}

void cmd_train_head(const RunConfig& run, const TrainHeadOptions& opt) {
  opt.train.validate();
  opt.sampling.accumulation.validate();
  const DatasetManifest manifest = require_manifest(run);
  prepare_out(run);
  const auto traversals = load_traversals(manifest);

  AlignmentSampling sampling = opt.sampling;
  sampling.seed = run.seed;
  sampling.threads = run.threads;
  const AlignmentDataset data = traversal_alignment_dataset(traversals, sampling);

  MlpSpec spec;
  spec.widths.push_back(data.dim());
  spec.widths.insert(spec.widths.end(), opt.hidden.begin(), opt.hidden.end());
  spec.widths.push_back(1);
  spec.seed = run.seed;
  TrainConfig train = opt.train;
  train.seed = run.seed;
  const TrainResult result = train_head(data, spec, train);

  save_mlp(result.mlp, run.out / "head.mlp");
  std::ostringstream csv;
  csv << "epoch,train_l1,validation_l1\n";
  for (const auto& h : result.history) csv << h.epoch << ',' << fmt(h.train_l1) << ',' << fmt(h.validation_l1) << '\n';
  RunMeta::write_text(run.out / "loss_history.csv", csv.str());

  RunMeta meta("train-head", run);
  add_accumulation(meta, sampling.accumulation);
  meta.add("radius_r", sampling.p2.radius_r);
  meta.add("voxel_size", sampling.voxel_size);
  meta.add("aggregation", to_string(sampling.mode));
  meta.add("query_fraction", sampling.query_fraction);
  meta.add("widths", fmt_list(spec.widths));
  meta.add("learning_rate", train.learning_rate);
  meta.add("momentum", train.momentum);
  meta.add("batch_size", train.batch_size);
  meta.add("epochs", train.epochs);
  meta.add("validation_fraction", train.validation_fraction);
  meta.add("rows", data.rows());
  meta.save(run.out);
}

void cmd_filter(const RunConfig& run, const FilterOptions& opt) {
  opt.filter.validate();
  require(!opt.labels.empty() && !opt.cloud.empty() && !opt.scores.empty(), ErrorCode::InvalidArgument,
          "filter needs --labels, --cloud and --scores");
  prepare_out(run);
  const auto boxes = load_labels(opt.labels);
  const PointCloud cloud = load_point_cloud(opt.cloud);
  const auto scores = read_p2_scores(opt.scores);
  const FilterOutcome outcome = filter_pseudo_labels(boxes, cloud, scores, opt.filter);
  save_labels(outcome.kept, run.out / "kept_labels.txt");
  write_filter_report(outcome, boxes, run.out / "filter_report.csv");

  RunMeta meta("filter", run);
  meta.add("labels", opt.labels.string());
  meta.add("cloud", opt.cloud.string());
  meta.add("scores", opt.scores.string());
  meta.add("percentile", opt.filter.percentile);
  meta.add("percentile_estimator", std::string("nearest-rank, element ceil(fraction * n) of the ascending scores"));
  meta.add("threshold", opt.filter.threshold);
  meta.add("threshold_rule", std::string("keep if percentile < threshold"));
  meta.add("min_points", opt.filter.min_points);
  meta.add("boxes", boxes.size());
  meta.add("kept", outcome.kept.size());
  meta.save(run.out);
}

void cmd_simulate(const RunConfig& run, const SimulateOptions& opt) {
  sim::SceneSpec spec = opt.scene;
  spec.seed = run.seed;
  spec.validate();
  sim::EvalConfig eval = opt.eval;
  eval.seed = run.seed;
  eval.threads = run.threads;
  eval.p2.validate();
  eval.accumulation.validate();
  for (auto t : opt.sweep_traversals) require(t >= 2, ErrorCode::InvalidArgument, "--sweep-t values must be >= 2");
  for (double n : opt.sweep_noise) require(n >= 0.0, ErrorCode::InvalidArgument, "--sweep-noise values must be >= 0");
  prepare_out(run);

  const sim::Scene scene = sim::generate_scene(spec);
  if (opt.write_dataset) sim::write_scene(scene, run.out / "dataset");

  const sim::ScoredPoints scored = sim::score_scene(scene, eval);
  write_p2_scores(scored.scores, run.out / "sim_scores.p2s");
  sim::write_truth_labels(scored.labels, run.out / "sim_labels.gtl");
  write_point_cloud(PointCloud(scored.points), run.out / "sim_points.pcb");
  const auto report = sim::evaluate_separation(scored.scores, scored.labels);
  RunMeta::write_text(run.out / "separation.csv", separation_header() + '\n' + separation_fields(report) + '\n');

  if (!opt.sweep_traversals.empty()) {
    std::ostringstream csv;
    csv << "num_traversals," << separation_header() << '\n';
    for (const auto& row : sim::sweep_traversals(spec, opt.sweep_traversals, eval)) {
      csv << row.num_traversals << ',' << separation_fields(row.report) << '\n';
    }
    RunMeta::write_text(run.out / "sweep_traversals.csv", csv.str());
  }
  if (!opt.sweep_noise.empty()) {
    std::ostringstream csv;
    csv << "loc_noise_translation," << separation_header() << '\n';
    for (const auto& row : sim::sweep_localization_noise(spec, opt.sweep_noise, eval)) {
      csv << fmt(row.noise) << ',' << separation_fields(row.report) << '\n';
    }
    RunMeta::write_text(run.out / "sweep_noise.csv", csv.str());
  }

  RunMeta meta("simulate", run);
  add_scene(meta, spec);
  meta.add("radius_r", eval.p2.radius_r);
  add_accumulation(meta, eval.accumulation);
  meta.add("query_fraction", eval.query_fraction);
  meta.add("sweep_traversals", fmt_list(opt.sweep_traversals));
  meta.add("sweep_noise", fmt_list(opt.sweep_noise));
  meta.add("write_dataset", opt.write_dataset);
  meta.save(run.out);
}

void cmd_bench(const RunConfig& run, const BenchOptions& opt) {
  const double cell = opt.cell_size > 0.0 ? opt.cell_size : opt.radius;
  prepare_out(run);
  const BenchmarkResult r = benchmark_index(opt.points, opt.queries, opt.radius, cell, run.seed, run.threads);
  std::ostringstream csv;
  csv << "points,queries,radius,cell_size,build_s,index_s,brute_s,speedup,counts_match,total_neighbors\n";
  csv << r.num_points << ',' << r.num_queries << ',' << fmt(r.radius) << ',' << fmt(r.cell_size) << ','
      << fmt(r.build_seconds) << ',' << fmt(r.index_seconds) << ',' << fmt(r.brute_seconds) << ','
      << fmt(r.speedup()) << ',' << (r.counts_match ? "true" : "false") << ',' << r.total_neighbors << '\n';
  RunMeta::write_text(run.out / "bench.csv", csv.str());
  std::cout << "indexed " << fmt(r.build_seconds + r.index_seconds) << " s, brute " << fmt(r.brute_seconds)
            << " s, speedup " << fmt(r.speedup()) << "x, counts " << (r.counts_match ? "match" : "DIFFER") << '\n';

  RunMeta meta("bench", run);
  meta.add("points", r.num_points);
  meta.add("queries", r.num_queries);
  meta.add("radius_r", r.radius);
  meta.add("cell_size", r.cell_size);
  meta.save(run.out);
  require(r.counts_match, ErrorCode::InvalidArgument, "indexed and brute-force counts differ");
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Repeated-traversal persistency scoring pipeline", "traverse-p2"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string manifest;
  std::string out = ".";
  app.add_option("--manifest", manifest, "Dataset manifest (JSON)");
  app.add_option("--out", out, "Output directory")->capture_default_str();
  app.add_option("--threads", cfg.threads, "Worker threads, 0 = auto")->capture_default_str();
  app.add_option("--seed", cfg.seed, "Seed for every random choice")->capture_default_str();

  const auto add_window = [](CLI::App* sub, AccumulationConfig& acc) {
    sub->add_option("--spacing", acc.spacing_m, "Route location spacing (m)")->capture_default_str();
    sub->add_option("--window", acc.window_hm, "Accumulation half-window H_m (m)")->capture_default_str();
  };

  AccumulateOptions acc_opt;
  auto* acc = app.add_subcommand("accumulate", "Write dense clouds per traversal and location");
  add_window(acc, acc_opt.accumulation);
  acc->add_option("--downsample", acc_opt.downsample_voxel, "Centroid voxel size, 0 = off")->capture_default_str();

  P2Options p2_opt;
  std::uint64_t p2_traversal = 0;
  std::uint64_t p2_frame = 0;
  double p2_arclength = 0.0;
  std::string p2_scan;
  std::string p2_dense;
  auto* p2 = app.add_subcommand("p2", "Score a scan against past traversals");
  add_window(p2, p2_opt.accumulation);
  p2->add_option("--radius", p2_opt.radius, "Neighbor radius r (m)")->capture_default_str();
  auto* p2_t = p2->add_option("--traversal", p2_traversal, "Scan traversal id");
  auto* p2_f = p2->add_option("--frame", p2_frame, "Scan frame id");
  p2->add_option("--scan", p2_scan, "Global-frame PCB1 scan");
  auto* p2_a = p2->add_option("--arclength", p2_arclength, "Arclength of --scan");
  p2->add_flag("--include-self", p2_opt.include_self, "Keep the scan's own traversal");
  p2->add_option("--dense-dir", p2_dense, "Directory of accumulate outputs");

  FeaturizeOptions feat_opt;
  std::string feat_agg = "mean";
  auto* feat = app.add_subcommand("featurize", "Build per-location voxel feature stores");
  add_window(feat, feat_opt.accumulation);
  feat->add_option("--voxel-size", feat_opt.voxel_size, "Voxel edge (m)")->capture_default_str();
  feat->add_option("--agg", feat_agg, "Aggregation across traversals")
      ->check(CLI::IsMember({"mean", "max"}))
      ->capture_default_str();
  feat->add_flag("--per-traversal", feat_opt.per_traversal, "Also write one store per traversal");

  TrainHeadOptions train_opt;
  std::string train_agg = "mean";
  auto* train = app.add_subcommand("train-head", "Train the score regression head");
  add_window(train, train_opt.sampling.accumulation);
  train->add_option("--radius", train_opt.sampling.p2.radius_r, "Neighbor radius r (m)")->capture_default_str();
  train->add_option("--voxel-size", train_opt.sampling.voxel_size, "Voxel edge (m)")->capture_default_str();
  train->add_option("--agg", train_agg, "Aggregation across traversals")
      ->check(CLI::IsMember({"mean", "max"}))
      ->capture_default_str();
  train->add_option("--query-fraction", train_opt.sampling.query_fraction, "Sampled share of frame points")
      ->capture_default_str();
  train->add_option("--lr", train_opt.train.learning_rate, "Learning rate")->capture_default_str();
  train->add_option("--epochs", train_opt.train.epochs, "Epochs")->capture_default_str();
  train->add_option("--batch", train_opt.train.batch_size, "Minibatch size")->capture_default_str();
  train->add_option("--momentum", train_opt.train.momentum, "SGD momentum")->capture_default_str();
  train->add_option("--val-fraction", train_opt.train.validation_fraction, "Validation share")->capture_default_str();
  train->add_option("--hidden", train_opt.hidden, "Hidden layer widths")->delimiter(',')->capture_default_str();

  FilterOptions filter_opt;
  std::string f_labels;
  std::string f_cloud;
  std::string f_scores;
  auto* filter = app.add_subcommand("filter", "Drop pseudo-labels on persistent background");
  filter->add_option("--labels", f_labels, "Pseudo-label text file")->required();
  filter->add_option("--cloud", f_cloud, "Global-frame PCB1 cloud")->required();
  filter->add_option("--scores", f_scores, "P2S1 scores aligned with --cloud")->required();
  filter->add_option("--percentile", filter_opt.filter.percentile, "Percentile fraction")->capture_default_str();
  filter->add_option("--threshold", filter_opt.filter.threshold, "Keep if percentile < threshold")
      ->capture_default_str();
  filter->add_option("--min-points", filter_opt.filter.min_points, "Minimum points per box")->capture_default_str();

  SimulateOptions sim_opt;
  bool no_dataset = false;
  auto* simc = app.add_subcommand("simulate", "Generate a synthetic scene and score it");
  auto& sc = sim_opt.scene;
  simc->add_option("--route-length", sc.route_length, "Route length (m)")->capture_default_str();
  simc->add_option("--frame-spacing", sc.frame_spacing, "Frame spacing (m)")->capture_default_str();
  simc->add_option("--traversals", sc.num_traversals, "Number of traversals T")->capture_default_str();
  simc->add_option("--density", sc.surface_density, "Surface density (points/m^2)")->capture_default_str();
  simc->add_option("--buildings", sc.num_buildings, "Buildings")->capture_default_str();
  simc->add_option("--poles", sc.num_poles, "Poles")->capture_default_str();
  simc->add_option("--cars", sc.num_cars, "Cars")->capture_default_str();
  simc->add_option("--pedestrians", sc.num_pedestrians, "Pedestrians")->capture_default_str();
  simc->add_option("--presence-k", sc.presence_k, "Traversals each ephemeral object appears in")
      ->capture_default_str();
  simc->add_option("--jitter", sc.ephemeral_jitter, "Ephemeral position jitter stdev (m)")->capture_default_str();
  simc->add_option("--sensor-noise", sc.sensor_noise, "Sensor noise stdev (m)")->capture_default_str();
  simc->add_option("--loc-noise", sc.loc_noise_translation, "Pose translation noise stdev (m)")
      ->capture_default_str();
  simc->add_option("--loc-noise-yaw", sc.loc_noise_yaw, "Pose yaw noise stdev (rad)")->capture_default_str();
  simc->add_option("--radius", sim_opt.eval.p2.radius_r, "Neighbor radius r (m)")->capture_default_str();
  add_window(simc, sim_opt.eval.accumulation);
  simc->add_option("--query-fraction", sim_opt.eval.query_fraction, "Scored share of points")->capture_default_str();
  simc->add_option("--sweep-t", sim_opt.sweep_traversals, "Traversal counts to sweep")->delimiter(',');
  simc->add_option("--sweep-noise", sim_opt.sweep_noise, "Pose noise levels to sweep (m)")->delimiter(',');
  simc->add_flag("--no-dataset", no_dataset, "Skip writing the dataset files");

  BenchOptions bench_opt;
  auto* bench = app.add_subcommand("bench", "Time indexed against brute-force radius counting");
  bench->add_option("--points", bench_opt.points, "Indexed points")->capture_default_str();
  bench->add_option("--queries", bench_opt.queries, "Queries")->capture_default_str();
  bench->add_option("--radius", bench_opt.radius, "Radius (m)")->capture_default_str();
  bench->add_option("--cell", bench_opt.cell_size, "Cell size, 0 = radius")->capture_default_str();

  for (auto* sub : {acc, p2, feat, train, filter, simc, bench}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  cfg.manifest = manifest;
  cfg.out = out;
  std::string name = "traverse-p2";
  try {
    if (acc->parsed()) {
      name += " accumulate";
      cmd_accumulate(cfg, acc_opt);
    } else if (p2->parsed()) {
      name += " p2";
      if (p2_t->count() > 0) p2_opt.traversal = p2_traversal;
      if (p2_f->count() > 0) p2_opt.frame = p2_frame;
      if (p2_a->count() > 0) p2_opt.arclength = p2_arclength;
      p2_opt.scan = p2_scan;
      p2_opt.dense_dir = p2_dense;
      cmd_p2(cfg, p2_opt);
    } else if (feat->parsed()) {
      name += " featurize";
      feat_opt.mode = parse_aggregation_mode(feat_agg);
      cmd_featurize(cfg, feat_opt);
    } else if (train->parsed()) {
      name += " train-head";
      train_opt.sampling.mode = parse_aggregation_mode(train_agg);
      cmd_train_head(cfg, train_opt);
    } else if (filter->parsed()) {
      name += " filter";
      filter_opt.labels = f_labels;
      filter_opt.cloud = f_cloud;
      filter_opt.scores = f_scores;
      cmd_filter(cfg, filter_opt);
    } else if (simc->parsed()) {
      name += " simulate";
      sim_opt.write_dataset = !no_dataset;
      cmd_simulate(cfg, sim_opt);
    } else if (bench->parsed()) {
      name += " bench";
      cmd_bench(cfg, bench_opt);
    }
  } catch (const Error& e) {
    std::cerr << name << ": " << e.what() << '\n';
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::cerr << name << ": " << to_string(ErrorCode::IoError) << ": " << e.what() << '\n';
    return static_cast<int>(ErrorCode::IoError);
  } catch (const std::exception& e) {
    std::cerr << name << ": unexpected failure: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace traverse::cli
