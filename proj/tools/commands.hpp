#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "traverse/align.hpp"
#include "traverse/ingest.hpp"
#include "traverse/labels.hpp"
#include "traverse/sim.hpp"
#include "traverse/squash.hpp"

namespace traverse::cli {

/// Flags shared by every subcommand.
struct RunConfig {
  std::filesystem::path manifest;
  std::filesystem::path out = ".";
  unsigned threads = 0;  // 0 = TRAVERSE_P2_THREADS, else hardware concurrency
  std::uint64_t seed = 0;
};

struct AccumulateOptions {
  AccumulationConfig accumulation;
  double downsample_voxel = 0.0;  // 0 disables the centroid post-step
};

struct P2Options {
  AccumulationConfig accumulation;
  double radius = 0.3;
  // Scan selection: a manifest frame, or a global-frame PCB1 file plus the
  // arclength used to pick its location.
  std::optional<std::uint64_t> traversal;
  std::optional<std::uint64_t> frame;
  std::filesystem::path scan;
  std::optional<double> arclength;
  bool include_self = false;       // score a manifest frame against its own traversal too
  std::filesystem::path dense_dir;  // read dense_t*_l*.pcb from here instead of accumulating
};

struct FeaturizeOptions {
  AccumulationConfig accumulation;
  double voxel_size = 0.5;
  AggregationMode mode = AggregationMode::Mean;
  bool per_traversal = false;
};

struct TrainHeadOptions {
  AlignmentSampling sampling;
  TrainConfig train;
  std::vector<std::size_t> hidden{32, 32};
};

struct FilterOptions {
  std::filesystem::path labels;
  std::filesystem::path cloud;
  std::filesystem::path scores;
  FilterConfig filter;
};

struct SimulateOptions {
  sim::SceneSpec scene;
  sim::EvalConfig eval;
  std::vector<std::size_t> sweep_traversals;
  std::vector<double> sweep_noise;
  bool write_dataset = true;
};

struct BenchOptions {
  std::size_t points = 1'000'000;
  std::size_t queries = 10'000;
  double radius = 0.3;
  double cell_size = 0.0;  // 0 = radius
};

/// `dense_t{t}_l{l_mm}.pcb` with l_mm the location rounded to millimeters.
std::string dense_file_name(std::uint64_t traversal_id, double location);

void cmd_accumulate(const RunConfig& run, const AccumulateOptions& opt);
void cmd_p2(const RunConfig& run, const P2Options& opt);
void cmd_featurize(const RunConfig& run, const FeaturizeOptions& opt);
void cmd_train_head(const RunConfig& run, const TrainHeadOptions& opt);
void cmd_filter(const RunConfig& run, const FilterOptions& opt);
void cmd_simulate(const RunConfig& run, const SimulateOptions& opt);
void cmd_bench(const RunConfig& run, const BenchOptions& opt);

/// Parses argv and runs one subcommand. Returns the process exit code: 0 on
/// success, 1 for usage errors, 2 for unexpected failures, otherwise the
/// numeric ErrorCode.
int run(int argc, const char* const* argv);

}  // namespace traverse::cli
