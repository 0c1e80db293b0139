#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "traverse/core.hpp"
#include "traverse/ingest.hpp"
#include "traverse/p2.hpp"
#include "traverse/squash.hpp"

namespace traverse {

/// Fully connected regression head: ReLU hidden layers, sigmoid output.
struct MlpSpec {
  std::vector<std::size_t> widths;  // input, hidden..., 1
  std::uint64_t seed = 0;

  /// Default head [input_dim, 32, 32, 1].
  static MlpSpec for_input(std::size_t input_dim, std::uint64_t seed = 0);
  void validate() const;
};

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;     // out
};

class Mlp {
 public:
  /// All-zero parameters.
  explicit Mlp(std::vector<std::size_t> widths, std::uint64_t init_seed = 0);

  /// Weights and biases drawn uniformly from +-1/sqrt(fan_in), seeded by spec.seed.
  static Mlp initialize(const MlpSpec& spec);

  [[nodiscard]] const std::vector<std::size_t>& widths() const { return widths_; }
  [[nodiscard]] std::size_t input_dim() const { return widths_.front(); }
  [[nodiscard]] std::uint64_t init_seed() const { return init_seed_; }
  [[nodiscard]] const std::vector<DenseLayer>& layers() const { return layers_; }
  [[nodiscard]] std::vector<DenseLayer>& layers() { return layers_; }

  /// Errors: DimensionMismatch.
  [[nodiscard]] double forward(std::span<const double> features) const;

  /// One prediction per row of `features` (samples x input_dim).
  [[nodiscard]] Eigen::VectorXd forward_batch(const Eigen::MatrixXd& features) const;

  [[nodiscard]] std::size_t parameter_count() const;
  /// Flattened layer by layer: weights row-major, then bias.
  [[nodiscard]] std::vector<double> parameters() const;
  void set_parameters(std::span<const double> flat);

  friend bool operator==(const Mlp& a, const Mlp& b);

 private:
  std::vector<std::size_t> widths_;
  std::uint64_t init_seed_ = 0;
  std::vector<DenseLayer> layers_;
};

/// Mean absolute error. Errors: EmptyBatch, LengthMismatch.
double l1_loss(std::span<const double> predicted, std::span<const double> target);

struct BackwardResult {
  double loss = 0.0;
  std::vector<DenseLayer> gradients;  // same shapes as the layers

  /// Flattened in the same order as Mlp::parameters().
  [[nodiscard]] std::vector<double> flat() const;
};

/// Mean L1 loss of the batch and its gradient with respect to every
/// parameter. The kink of |x| at exactly zero uses subgradient 0.
/// Errors: EmptyBatch, LengthMismatch, DimensionMismatch.
BackwardResult backward(const Mlp& mlp, const Eigen::MatrixXd& features,
                        std::span<const double> targets);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  std::size_t epochs = 50;
  double momentum = 0.9;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AlignmentDataset {
  Eigen::MatrixXd features;  // rows x dim
  std::vector<double> targets;

  [[nodiscard]] std::size_t rows() const { return targets.size(); }
  [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }
};

struct EpochLoss {
  std::size_t epoch = 0;
  double train_l1 = 0.0;
  double validation_l1 = 0.0;

  friend bool operator==(const EpochLoss&, const EpochLoss&) = default;
};

struct TrainResult {
  Mlp mlp;
  std::vector<EpochLoss> history;
};

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Seeded shuffle, then the first round(fraction * n) rows (at least one)
/// become validation. Errors: DatasetTooSmall if n < 2.
DatasetSplit split_dataset(std::size_t rows, double validation_fraction, std::uint64_t seed);

/// Minibatch SGD with momentum on the mean L1 loss. Deterministic for fixed
/// seeds. Errors: DatasetTooSmall, DimensionMismatch, InvalidArgument.
TrainResult train_head(const AlignmentDataset& dataset, const MlpSpec& mlp_spec,
                       const TrainConfig& cfg);

/// Alignment input for one point: the aggregated store query (d + 1 values)
/// followed by the per-traversal ln(1 + count) of the point's voxel, sorted
/// descending (0 where a traversal leaves the voxel empty).
std::vector<double> alignment_features(const VoxelFeatures& aggregated,
                                       std::span<const VoxelFeatures> per_traversal,
                                       const Point3& q);

/// Errors: LengthMismatch.
AlignmentDataset build_alignment_dataset(const VoxelFeatures& aggregated,
                                         std::span<const VoxelFeatures> per_traversal,
                                         std::span<const Point3> queries,
                                         std::span<const double> targets);

/// How alignment rows are drawn from a set of traversals.
struct AlignmentSampling {
  AccumulationConfig accumulation{10.0, 10.0};
  P2Config p2;
  double voxel_size = 0.5;
  AggregationMode mode = AggregationMode::Mean;
  double query_fraction = 0.1;  // Bernoulli subsample of each frame's points
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

/// For every route location: the sampled global points of the frames nearest
/// to it, featurized against that location's per-traversal and aggregated
/// voxel stores, with P2 scores over all traversals as targets. Rows are
/// grouped by location. Errors: InvalidArgument, EmptyInput, plus those of
/// accumulation and scoring.
AlignmentDataset traversal_alignment_dataset(std::span<const Traversal> traversals,
                                             const AlignmentSampling& sampling);

/// One prediction per occupied voxel of the store, fed the store vector with
/// occupancy flag 1. Errors: DimensionMismatch.
std::map<VoxelKey, double> predict_p2_map(const Mlp& mlp, const VoxelFeatures& store);

/// Same, for heads trained on alignment_features (evaluated at voxel centers).
std::map<VoxelKey, double> predict_p2_map(const Mlp& mlp, const VoxelFeatures& aggregated,
                                          std::span<const VoxelFeatures> per_traversal);

// MLP1: "MLP1", u32 layer-width count, u32 widths..., u64 init seed, then per
// layer f64 weights (row-major, out x in) followed by f64 bias.
void save_mlp(const Mlp& mlp, const std::filesystem::path& path);
Mlp load_mlp(const std::filesystem::path& path);

}  // namespace traverse
