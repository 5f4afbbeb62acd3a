#include "deepc/trajectory_data.hpp"

#include "deepc/error.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <string>

namespace deepc {

namespace {

// Singular values of a matrix, computed on a square triangular factor when the
// matrix is far from square (orthogonal reduction keeps the spectrum).
Vector singular_values(const Matrix& matrix) {
  if (matrix.size() == 0) {
    return Vector();
  }
  const Index rows = matrix.rows();
  const Index cols = matrix.cols();
  if (rows > 2 * cols || cols > 2 * rows) {
    Matrix tall = rows >= cols ? matrix : matrix.transpose();
    Eigen::HouseholderQR<Matrix> qr(tall);
    const Index k = tall.cols();
    Matrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    return Eigen::JacobiSVD<Matrix>(r).singularValues();
  }
  return Eigen::JacobiSVD<Matrix>(matrix).singularValues();
}

Vector column_std(const Matrix& samples, const Vector& mean) {
  const double n = static_cast<double>(samples.rows());
  Vector out(samples.cols());
  for (Index c = 0; c < samples.cols(); ++c) {
    out(c) = std::sqrt((samples.col(c).array() - mean(c)).square().sum() / n);
  }
  return out;
}

void repair_degenerate(Vector& std_dev, std::vector<bool>& flags) {
  flags.assign(static_cast<std::size_t>(std_dev.size()), false);
  for (Index i = 0; i < std_dev.size(); ++i) {
    if (!(std_dev(i) >= NormalizationStats::kDegenerateStd)) {
      std_dev(i) = 1.0;
      flags[static_cast<std::size_t>(i)] = true;
    }
  }
}

}  // namespace

Trajectory::Trajectory(Matrix inputs, Matrix outputs, double sample_period)
    : inputs_(std::move(inputs)), outputs_(std::move(outputs)), sample_period_(sample_period) {
  if (inputs_.rows() < 1) {
    throw Error(ErrorKind::insufficient_data, "trajectory must contain at least one sample");
  }
  if (inputs_.rows() != outputs_.rows()) {
    throw Error(ErrorKind::dimension_mismatch,
                "trajectory inputs have " + std::to_string(inputs_.rows()) + " samples but outputs have " +
                    std::to_string(outputs_.rows()));
  }
  if (!(sample_period_ > 0.0)) {
    throw Error(ErrorKind::invalid_argument, "sample period must be positive");
  }
}

NormalizationStats NormalizationStats::from_samples(const Matrix& inputs, const Matrix& outputs) {
  if (inputs.rows() == 0 || outputs.rows() == 0) {
    throw Error(ErrorKind::insufficient_data, "normalization needs at least one sample");
  }
  NormalizationStats stats;
  stats.input_mean = inputs.colwise().mean().transpose();
  stats.output_mean = outputs.colwise().mean().transpose();
  stats.input_std = column_std(inputs, stats.input_mean);
  stats.output_std = column_std(outputs, stats.output_mean);
  repair_degenerate(stats.input_std, stats.degenerate_inputs);
  repair_degenerate(stats.output_std, stats.degenerate_outputs);
  return stats;
}

Vector NormalizationStats::normalize_input(const Vector& u) const {
  return (u - input_mean).cwiseQuotient(input_std);
}

Vector NormalizationStats::normalize_output(const Vector& y) const {
  return (y - output_mean).cwiseQuotient(output_std);
}

Vector NormalizationStats::denormalize_input(const Vector& u) const {
  return u.cwiseProduct(input_std) + input_mean;
}

Vector NormalizationStats::denormalize_output(const Vector& y) const {
  return y.cwiseProduct(output_std) + output_mean;
}

namespace {

std::pair<Matrix, Matrix> pooled_samples(const std::vector<Trajectory>& trajectories) {
  Index total = 0;
  for (const auto& t : trajectories) total += t.length();
  Matrix inputs(total, trajectories.front().input_dim());
  Matrix outputs(total, trajectories.front().output_dim());
  Index row = 0;
  for (const auto& t : trajectories) {
    inputs.middleRows(row, t.length()) = t.inputs();
    outputs.middleRows(row, t.length()) = t.outputs();
    row += t.length();
  }
  return {std::move(inputs), std::move(outputs)};
}

}  // namespace

Dataset::Dataset(std::vector<Trajectory> trajectories, bool aligned)
    : trajectories_(std::move(trajectories)), aligned_(aligned) {
  validate();
  auto [inputs, outputs] = pooled_samples(trajectories_);
  stats_ = NormalizationStats::from_samples(inputs, outputs);
}

Dataset::Dataset(std::vector<Trajectory> trajectories, NormalizationStats stats, bool aligned)
    : trajectories_(std::move(trajectories)), stats_(std::move(stats)), aligned_(aligned) {
  validate();
  if (stats_.input_mean.size() != input_dim() || stats_.input_std.size() != input_dim() ||
      stats_.output_mean.size() != output_dim() || stats_.output_std.size() != output_dim()) {
    throw Error(ErrorKind::dimension_mismatch, "normalization statistics do not match dataset dimensions");
  }
  if ((stats_.input_std.array() <= 0.0).any() || (stats_.output_std.array() <= 0.0).any()) {
    throw Error(ErrorKind::invalid_argument, "normalization std entries must be strictly positive");
  }
}

void Dataset::validate() const {
  if (trajectories_.empty()) {
    throw Error(ErrorKind::insufficient_data, "dataset must contain at least one trajectory");
  }
  const auto& first = trajectories_.front();
  for (std::size_t i = 1; i < trajectories_.size(); ++i) {
    const auto& t = trajectories_[i];
    if (t.input_dim() != first.input_dim() || t.output_dim() != first.output_dim()) {
      throw Error(ErrorKind::dimension_mismatch,
                  "trajectory " + std::to_string(i) + " has different input/output dimensions");
    }
    if (std::abs(t.sample_period() - first.sample_period()) > 1e-12 * first.sample_period()) {
      throw Error(ErrorKind::invalid_argument, "trajectory " + std::to_string(i) + " has a different sample period");
    }
  }
}

Index Dataset::total_samples() const {
  Index total = 0;
  for (const auto& t : trajectories_) total += t.length();
  return total;
}

Matrix DataMatrices::stacked() const {
  Matrix out(past_inputs.rows() + past_outputs.rows() + future_inputs.rows() + future_outputs.rows(), columns());
  out << past_inputs, past_outputs, future_inputs, future_outputs;
  return out;
}

void DataMatrices::validate() const {
  const Index k = past_inputs.cols();
  if (past_outputs.cols() != k || future_inputs.cols() != k || future_outputs.cols() != k) {
    throw Error(ErrorKind::dimension_mismatch, "data matrix blocks have different column counts");
  }
  if (past_length < 1 || horizon < 1) {
    throw Error(ErrorKind::invalid_argument, "past length and horizon must be positive");
  }
  const Index m = past_inputs.rows() / past_length;
  const Index p = past_outputs.rows() / past_length;
  if (past_inputs.rows() != past_length * m || past_outputs.rows() != past_length * p ||
      future_inputs.rows() != horizon * m || future_outputs.rows() != horizon * p) {
    throw Error(ErrorKind::dimension_mismatch, "data matrix row counts do not match past length / horizon");
  }
  if (!origins.empty() && static_cast<Index>(origins.size()) != k) {
    throw Error(ErrorKind::dimension_mismatch, "column origin count does not match column count");
  }
}

Matrix build_hankel(const Matrix& signal, Index depth) {
  const Index length = signal.rows();
  const Index dim = signal.cols();
  if (depth < 1) {
    throw Error(ErrorKind::invalid_argument, "Hankel depth must be at least 1");
  }
  if (depth > length) {
    throw Error(ErrorKind::insufficient_data,
                "insufficient data length: depth " + std::to_string(depth) + " exceeds signal length " +
                    std::to_string(length));
  }
  const Index cols = length - depth + 1;
  Matrix hankel(depth * dim, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index block = 0; block < depth; ++block) {
      hankel.block(block * dim, j, dim, 1) = signal.row(j + block).transpose();
    }
  }
  return hankel;
}

DataMatrices build_data_matrices(const Dataset& dataset, Index past_length, Index horizon) {
  if (past_length < 1 || horizon < 1) {
    throw Error(ErrorKind::invalid_argument, "past length and horizon must be positive");
  }
  const Index depth = past_length + horizon;
  const auto& trajectories = dataset.trajectories();
  Index total_cols = 0;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    if (trajectories[i].length() < depth) {
      throw Error(ErrorKind::insufficient_data,
                  "insufficient data length: trajectory " + std::to_string(i) + " has " +
                      std::to_string(trajectories[i].length()) + " samples, need " + std::to_string(depth));
    }
    total_cols += trajectories[i].length() - depth + 1;
  }

  const Index m = dataset.input_dim();
  const Index p = dataset.output_dim();
  Matrix input_hankel(depth * m, total_cols);
  Matrix output_hankel(depth * p, total_cols);
  DataMatrices out;
  out.past_length = past_length;
  out.horizon = horizon;
  out.origins.reserve(static_cast<std::size_t>(total_cols));

  Index col = 0;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const Matrix hu = build_hankel(trajectories[i].inputs(), depth);
    const Matrix hy = build_hankel(trajectories[i].outputs(), depth);
    input_hankel.middleCols(col, hu.cols()) = hu;
    output_hankel.middleCols(col, hy.cols()) = hy;
    for (Index j = 0; j < hu.cols(); ++j) out.origins.push_back({i, j});
    col += hu.cols();
  }

  out.past_inputs = input_hankel.topRows(past_length * m);
  out.future_inputs = input_hankel.bottomRows(horizon * m);
  out.past_outputs = output_hankel.topRows(past_length * p);
  out.future_outputs = output_hankel.bottomRows(horizon * p);
  return out;
}

Index numerical_rank(const Matrix& matrix) {
  const Vector sv = singular_values(matrix);
  if (sv.size() == 0) return 0;
  const double tol = static_cast<double>(std::max(matrix.rows(), matrix.cols())) * sv.maxCoeff() * 1e-12;
  return static_cast<Index>((sv.array() > tol).count());
}

bool is_persistently_exciting(const Matrix& signal, Index order) {
  const Matrix signals[] = {signal};
  return is_collectively_persistently_exciting(signals, order);
}

bool is_collectively_persistently_exciting(std::span<const Matrix> signals, Index order) {
  if (signals.empty()) return false;
  const Index dim = signals.front().cols();
  Index cols = 0;
  for (const auto& s : signals) {
    if (s.cols() != dim) {
      throw Error(ErrorKind::dimension_mismatch, "signals have different channel counts");
    }
    if (s.rows() < order) {
      throw Error(ErrorKind::insufficient_data,
                  "insufficient data length: order " + std::to_string(order) + " exceeds signal length " +
                      std::to_string(s.rows()));
    }
    cols += s.rows() - order + 1;
  }
  // Full row rank needs at least order * dim columns.
  if (cols < order * dim) return false;
  Matrix mosaic(order * dim, cols);
  Index col = 0;
  for (const auto& s : signals) {
    const Matrix h = build_hankel(s, order);
    mosaic.middleCols(col, h.cols()) = h;
    col += h.cols();
  }
  return numerical_rank(mosaic) == order * dim;
}

double min_singular_value(const Matrix& matrix) {
  const Vector sv = singular_values(matrix);
  return sv.size() == 0 ? 0.0 : sv.minCoeff();
}

double min_singular_value(const DataMatrices& matrices) {
  return min_singular_value(matrices.stacked());
}

}  // namespace deepc
