#include "traverse/align.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>

#include "binary_io.hpp"
#include "traverse/error.hpp"

namespace traverse {

namespace {

// Keeps the sigmoid strictly inside (0, 1) where the double result would round to an endpoint.
constexpr double kOutputFloor = std::numeric_limits<double>::min();
constexpr double kOutputCeil = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;

double sigmoid(double z) {
  const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return std::clamp(s, kOutputFloor, kOutputCeil);
}

void check_batch(const Mlp& mlp, const Eigen::MatrixXd& features, std::span<const double> targets) {
  require(targets.size() > 0, ErrorCode::EmptyBatch, "batch is empty");
  require(static_cast<std::size_t>(features.rows()) == targets.size(), ErrorCode::LengthMismatch,
          "feature rows and targets differ in length");
  require(static_cast<std::size_t>(features.cols()) == mlp.input_dim(), ErrorCode::DimensionMismatch,
          "features have " + std::to_string(features.cols()) + " columns, head expects " +
              std::to_string(mlp.input_dim()));
}

}  // namespace

MlpSpec MlpSpec::for_input(std::size_t input_dim, std::uint64_t seed) {
  return {{input_dim, 32, 32, 1}, seed};
}

void MlpSpec::validate() const {
  require(widths.size() >= 2, ErrorCode::InvalidArgument, "an MLP needs at least input and output widths");
  require(widths.back() == 1, ErrorCode::InvalidArgument, "the last layer width must be 1");
  for (auto w : widths) require(w > 0, ErrorCode::InvalidArgument, "layer widths must be positive");
}

Mlp::Mlp(std::vector<std::size_t> widths, std::uint64_t init_seed)
    : widths_(std::move(widths)), init_seed_(init_seed) {
  MlpSpec{widths_, init_seed_}.validate();
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(widths_[l]);
    const auto out = static_cast<Eigen::Index>(widths_[l + 1]);
    layers_.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
  }
}

Mlp Mlp::initialize(const MlpSpec& spec) {
  spec.validate();
  Mlp mlp(spec.widths, spec.seed);
  std::mt19937_64 rng(spec.seed);
  for (auto& layer : mlp.layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weights.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) layer.weights(i, j) = dist(rng);
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = dist(rng);
  }
  return mlp;
}

double Mlp::forward(std::span<const double> features) const {
  require(features.size() == input_dim(), ErrorCode::DimensionMismatch,
          "input has " + std::to_string(features.size()) + " values, head expects " +
              std::to_string(input_dim()));
  Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(features.data(),
                                                        static_cast<Eigen::Index>(features.size()));
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::VectorXd z = layers_[l].weights * a + layers_[l].bias;
    if (l + 1 < layers_.size()) {
      a = z.cwiseMax(0.0);
    } else {
      return sigmoid(z(0));
    }
  }
  return 0.0;  // unreachable: validate() guarantees an output layer
}

Eigen::VectorXd Mlp::forward_batch(const Eigen::MatrixXd& features) const {
  require(static_cast<std::size_t>(features.cols()) == input_dim(), ErrorCode::DimensionMismatch,
          "features have " + std::to_string(features.cols()) + " columns, head expects " +
              std::to_string(input_dim()));
  Eigen::MatrixXd a = features.transpose();
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = (layers_[l].weights * a).colwise() + layers_[l].bias;
    a = (l + 1 < layers_.size()) ? Eigen::MatrixXd(z.cwiseMax(0.0))
                                 : Eigen::MatrixXd(z.unaryExpr(std::function<double(double)>(sigmoid)));
  }
  return a.row(0).transpose();
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += static_cast<std::size_t>(layer.weights.size() + layer.bias.size());
  return n;
}

std::vector<double> Mlp::parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& layer : layers_) {
    for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) flat.push_back(layer.weights(i, j));
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) flat.push_back(layer.bias(i));
  }
  return flat;
}

void Mlp::set_parameters(std::span<const double> flat) {
  require(flat.size() == parameter_count(), ErrorCode::DimensionMismatch, "wrong parameter count");
  std::size_t k = 0;
  for (auto& layer : layers_) {
    for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) layer.weights(i, j) = flat[k++];
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = flat[k++];
  }
}

bool operator==(const Mlp& a, const Mlp& b) {
  return a.widths_ == b.widths_ && a.init_seed_ == b.init_seed_ && a.parameters() == b.parameters();
}

double l1_loss(std::span<const double> predicted, std::span<const double> target) {
  require(!predicted.empty(), ErrorCode::EmptyBatch, "L1 loss of an empty batch");
  require(predicted.size() == target.size(), ErrorCode::LengthMismatch,
          "prediction and target lengths differ");
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) sum += std::abs(predicted[i] - target[i]);
  return sum / static_cast<double>(predicted.size());
}

std::vector<double> BackwardResult::flat() const {
  std::vector<double> out;
  for (const auto& g : gradients) {
    for (Eigen::Index i = 0; i < g.weights.rows(); ++i) {
      for (Eigen::Index j = 0; j < g.weights.cols(); ++j) out.push_back(g.weights(i, j));
    }
    for (Eigen::Index i = 0; i < g.bias.size(); ++i) out.push_back(g.bias(i));
  }
  return out;
}

BackwardResult backward(const Mlp& mlp, const Eigen::MatrixXd& features,
                        std::span<const double> targets) {
  check_batch(mlp, features, targets);
  const auto& layers = mlp.layers();
  const std::size_t depth = layers.size();
  const auto n = static_cast<double>(targets.size());

  // Forward pass, keeping pre-activations z[l] and activations a[l] (a[0] = input).
  std::vector<Eigen::MatrixXd> a(depth + 1);
  std::vector<Eigen::MatrixXd> z(depth);
  a[0] = features.transpose();
  for (std::size_t l = 0; l < depth; ++l) {
    z[l] = (layers[l].weights * a[l]).colwise() + layers[l].bias;
    a[l + 1] = (l + 1 < depth) ? Eigen::MatrixXd(z[l].cwiseMax(0.0))
                               : Eigen::MatrixXd(z[l].unaryExpr(std::function<double(double)>(sigmoid)));
  }

  BackwardResult result;
  const Eigen::RowVectorXd out = a[depth].row(0);
  Eigen::MatrixXd delta(1, out.size());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const double diff = out(i) - targets[static_cast<std::size_t>(i)];
    loss += std::abs(diff);
    const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    delta(0, i) = sign / n * out(i) * (1.0 - out(i));
  }
  result.loss = loss / n;

  result.gradients.resize(depth);
  for (std::size_t l = depth; l-- > 0;) {
    result.gradients[l].weights = delta * a[l].transpose();
    result.gradients[l].bias = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd upstream = layers[l].weights.transpose() * delta;
    delta = upstream.array() * (z[l - 1].array() > 0.0).cast<double>();
  }
  return result;
}

void TrainConfig::validate() const {
  require(learning_rate >= 0.0 && std::isfinite(learning_rate), ErrorCode::InvalidArgument,
          "learning rate must be finite and non-negative");
  require(batch_size >= 1, ErrorCode::InvalidArgument, "batch size must be at least 1");
  require(momentum >= 0.0 && momentum < 1.0, ErrorCode::InvalidArgument, "momentum must be in [0, 1)");
  require(validation_fraction > 0.0 && validation_fraction < 1.0, ErrorCode::InvalidArgument,
          "validation fraction must be in (0, 1)");
}

DatasetSplit split_dataset(std::size_t rows, double validation_fraction, std::uint64_t seed) {
  require(rows >= 2, ErrorCode::DatasetTooSmall,
          "need at least 2 rows to split, got " + std::to_string(rows));
  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(rows)));
  n_val = std::clamp<std::size_t>(n_val, 1, rows - 1);
  DatasetSplit split;
  split.validation.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  return split;
}

namespace {

double subset_l1(const Mlp& mlp, const AlignmentDataset& data, std::span<const std::size_t> rows) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), data.features.cols());
  std::vector<double> t(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = data.features.row(static_cast<Eigen::Index>(rows[i]));
    t[i] = data.targets[rows[i]];
  }
  const Eigen::VectorXd pred = mlp.forward_batch(x);
  return l1_loss(std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())), t);
}

}  // namespace

TrainResult train_head(const AlignmentDataset& dataset, const MlpSpec& mlp_spec,
                       const TrainConfig& cfg) {
  cfg.validate();
  mlp_spec.validate();
  require(dataset.rows() >= 2, ErrorCode::DatasetTooSmall,
          "need at least 2 rows, got " + std::to_string(dataset.rows()));
  require(static_cast<std::size_t>(dataset.features.rows()) == dataset.rows(), ErrorCode::LengthMismatch,
          "feature rows and targets differ in length");
  require(dataset.dim() == mlp_spec.widths.front(), ErrorCode::DimensionMismatch,
          "dataset has " + std::to_string(dataset.dim()) + " features, head expects " +
              std::to_string(mlp_spec.widths.front()));

  const DatasetSplit split = split_dataset(dataset.rows(), cfg.validation_fraction, cfg.seed);
  TrainResult result{Mlp::initialize(mlp_spec), {}};
  Mlp& mlp = result.mlp;

  std::vector<DenseLayer> velocity;
  for (const auto& layer : mlp.layers()) {
    velocity.push_back({Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()),
                        Eigen::VectorXd::Zero(layer.bias.size())});
  }

  std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<std::size_t> order = split.train;
  Eigen::MatrixXd batch_x;
  std::vector<double> batch_t;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      batch_x.resize(static_cast<Eigen::Index>(stop - start), dataset.features.cols());
      batch_t.resize(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        batch_x.row(static_cast<Eigen::Index>(i - start)) =
            dataset.features.row(static_cast<Eigen::Index>(order[i]));
        batch_t[i - start] = dataset.targets[order[i]];
      }
      const BackwardResult g = backward(mlp, batch_x, batch_t);
      for (std::size_t l = 0; l < velocity.size(); ++l) {
        velocity[l].weights = cfg.momentum * velocity[l].weights - cfg.learning_rate * g.gradients[l].weights;
        velocity[l].bias = cfg.momentum * velocity[l].bias - cfg.learning_rate * g.gradients[l].bias;
        mlp.layers()[l].weights += velocity[l].weights;
        mlp.layers()[l].bias += velocity[l].bias;
      }
    }
    result.history.push_back(
        {epoch + 1, subset_l1(mlp, dataset, split.train), subset_l1(mlp, dataset, split.validation)});
  }
  return result;
}

std::vector<double> alignment_features(const VoxelFeatures& aggregated,
                                       std::span<const VoxelFeatures> per_traversal,
                                       const Point3& q) {
  std::vector<double> row = query_point(aggregated, q);
  const std::size_t base = row.size();
  for (const auto& store : per_traversal) {
    const auto v = store.find(voxel_key(q, store.spec().voxel_size));
    row.push_back(v ? static_cast<double>((*v)[HandcraftedFeaturizer::kCountFeature]) : 0.0);
  }
  std::sort(row.begin() + static_cast<std::ptrdiff_t>(base), row.end(), std::greater<>());
  return row;
}

AlignmentDataset build_alignment_dataset(const VoxelFeatures& aggregated,
                                         std::span<const VoxelFeatures> per_traversal,
                                         std::span<const Point3> queries,
                                         std::span<const double> targets) {
  require(queries.size() == targets.size(), ErrorCode::LengthMismatch,
          "queries and targets differ in length");
  const std::size_t dim = aggregated.dim() + 1 + per_traversal.size();
  AlignmentDataset data;
  data.features.resize(static_cast<Eigen::Index>(queries.size()), static_cast<Eigen::Index>(dim));
  data.targets.assign(targets.begin(), targets.end());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto row = alignment_features(aggregated, per_traversal, queries[i]);
    for (std::size_t k = 0; k < dim; ++k) data.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = row[k];
  }
  return data;
}

AlignmentDataset traversal_alignment_dataset(std::span<const Traversal> traversals,
                                             const AlignmentSampling& sampling) {
  require(sampling.query_fraction > 0.0 && sampling.query_fraction <= 1.0, ErrorCode::InvalidArgument,
          "query fraction must be in (0, 1]");
  sampling.p2.validate();
  const auto locations = locations_for_route(traversals, sampling.accumulation);

  std::vector<std::vector<Point3>> queries(locations.size());
  for (std::size_t t = 0; t < traversals.size(); ++t) {
    std::mt19937_64 rng(sampling.seed + 0x9E3779B97F4A7C15ULL * (t + 1));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (const Frame& frame : traversals[t].frames()) {
      const double l = nearest_location(locations, frame.arclength);
      auto& bucket = queries[static_cast<std::size_t>(
          std::find(locations.begin(), locations.end(), l) - locations.begin())];
      for (const Point3& p : frame.cloud.points) {
        if (unit(rng) < sampling.query_fraction) bucket.push_back(frame.pose.apply(p));
      }
    }
  }

  const HandcraftedFeaturizer featurizer;
  std::vector<AlignmentDataset> parts;
  Eigen::Index rows = 0;
  for (std::size_t li = 0; li < locations.size(); ++li) {
    if (queries[li].empty()) continue;
    std::vector<DenseCloud> dense;
    for (const auto& trav : traversals) dense.push_back(accumulate_dense(trav, locations[li], sampling.accumulation));
    const P2Result scored = compute_p2(dense, queries[li], sampling.p2, false, sampling.threads);
    const VoxelGridSpec spec = make_grid_spec(dense, sampling.voxel_size);
    std::vector<VoxelFeatures> per_traversal;
    for (const auto& d : dense) per_traversal.push_back(featurize_traversal(d, spec, featurizer).features);
    const VoxelFeatures agg = aggregate(per_traversal, sampling.mode);
    parts.push_back(build_alignment_dataset(agg, per_traversal, queries[li], scored.scores));
    rows += parts.back().features.rows();
  }
  require(!parts.empty(), ErrorCode::EmptyInput, "no query points were sampled");

  AlignmentDataset out;
  out.features.resize(rows, parts.front().features.cols());
  Eigen::Index at = 0;
  for (const auto& part : parts) {
    out.features.middleRows(at, part.features.rows()) = part.features;
    at += part.features.rows();
    out.targets.insert(out.targets.end(), part.targets.begin(), part.targets.end());
  }
  return out;
}

std::map<VoxelKey, double> predict_p2_map(const Mlp& mlp, const VoxelFeatures& store) {
  require(mlp.input_dim() == store.dim() + 1, ErrorCode::DimensionMismatch,
          "head expects " + std::to_string(mlp.input_dim()) + " inputs, store provides " +
              std::to_string(store.dim() + 1));
  std::map<VoxelKey, double> out;
  std::vector<double> x(store.dim() + 1);
  for (const auto& key : store.sorted_keys()) {
    const auto v = *store.find(key);
    std::copy(v.begin(), v.end(), x.begin());
    x.back() = 1.0;
    out.emplace(key, mlp.forward(x));
  }
  return out;
}

std::map<VoxelKey, double> predict_p2_map(const Mlp& mlp, const VoxelFeatures& aggregated,
                                          std::span<const VoxelFeatures> per_traversal) {
  require(mlp.input_dim() == aggregated.dim() + 1 + per_traversal.size(), ErrorCode::DimensionMismatch,
          "head expects " + std::to_string(mlp.input_dim()) + " inputs, store provides " +
              std::to_string(aggregated.dim() + 1 + per_traversal.size()));
  std::map<VoxelKey, double> out;
  for (const auto& key : aggregated.sorted_keys()) {
    const auto x = alignment_features(aggregated, per_traversal, aggregated.spec().voxel_center(key));
    out.emplace(key, mlp.forward(x));
  }
  return out;
}

void save_mlp(const Mlp& mlp, const std::filesystem::path& path) {
  detail::ByteWriter out;
  out.magic("MLP1");
  out.put(static_cast<std::uint32_t>(mlp.widths().size()));
  for (auto w : mlp.widths()) out.put(static_cast<std::uint32_t>(w));
  out.put(mlp.init_seed());
  for (double v : mlp.parameters()) out.put(v);
  out.save(path);
}

Mlp load_mlp(const std::filesystem::path& path) {
  detail::ByteReader in(path);
  in.expect_magic("MLP1");
  const auto n_widths = in.get<std::uint32_t>();
  require(n_widths >= 2 && n_widths <= in.remaining() / 4, ErrorCode::TruncatedFile,
          in.name() + ": implausible layer count at byte offset " + std::to_string(in.offset() - 4));
  std::vector<std::size_t> widths(n_widths);
  for (auto& w : widths) w = in.get<std::uint32_t>();
  const auto seed = in.get<std::uint64_t>();
  Mlp mlp(widths, seed);
  std::vector<double> flat(mlp.parameter_count());
  in.ensure(flat.size() * sizeof(double));
  for (auto& v : flat) v = in.get<double>();
  mlp.set_parameters(flat);
  return mlp;
}

}  // namespace traverse
