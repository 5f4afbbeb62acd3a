#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace deepc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Recorded input/output sequence. Row k of `inputs` is the input applied at
/// sample k and row k of `outputs` is the measurement taken one period later,
/// i.e. the response to that input.
class Trajectory {
 public:
  Trajectory(Matrix inputs, Matrix outputs, double sample_period);

  [[nodiscard]] Index length() const { return inputs_.rows(); }
  [[nodiscard]] Index input_dim() const { return inputs_.cols(); }
  [[nodiscard]] Index output_dim() const { return outputs_.cols(); }
  [[nodiscard]] double sample_period() const { return sample_period_; }
  [[nodiscard]] const Matrix& inputs() const { return inputs_; }
  [[nodiscard]] const Matrix& outputs() const { return outputs_; }

 private:
  Matrix inputs_;
  Matrix outputs_;
  double sample_period_;
};

/// Per-channel z-score statistics. Channels whose spread is below
/// `kDegenerateStd` get a unit std and are flagged.
struct NormalizationStats {
  static constexpr double kDegenerateStd = 1e-9;

  Vector input_mean;
  Vector input_std;
  Vector output_mean;
  Vector output_std;
  std::vector<bool> degenerate_inputs;
  std::vector<bool> degenerate_outputs;

  /// Population statistics over the rows of the two sample matrices.
  static NormalizationStats from_samples(const Matrix& inputs, const Matrix& outputs);

  [[nodiscard]] Vector normalize_input(const Vector& u) const;
  [[nodiscard]] Vector normalize_output(const Vector& y) const;
  [[nodiscard]] Vector denormalize_input(const Vector& u) const;
  [[nodiscard]] Vector denormalize_output(const Vector& y) const;
};

/// A set of trajectories sharing dimensions and sample period, with
/// normalization statistics fixed at construction.
class Dataset {
 public:
  /// Statistics are computed from all samples of all trajectories.
  explicit Dataset(std::vector<Trajectory> trajectories, bool aligned = false);
  Dataset(std::vector<Trajectory> trajectories, NormalizationStats stats, bool aligned);

  [[nodiscard]] const std::vector<Trajectory>& trajectories() const { return trajectories_; }
  [[nodiscard]] const NormalizationStats& stats() const { return stats_; }
  [[nodiscard]] bool aligned() const { return aligned_; }
  [[nodiscard]] Index input_dim() const { return trajectories_.front().input_dim(); }
  [[nodiscard]] Index output_dim() const { return trajectories_.front().output_dim(); }
  [[nodiscard]] double sample_period() const { return trajectories_.front().sample_period(); }
  [[nodiscard]] Index total_samples() const;

 private:
  void validate() const;

  std::vector<Trajectory> trajectories_;
  NormalizationStats stats_;
  bool aligned_;
};

/// Where a data-matrix column came from.
struct ColumnOrigin {
  std::size_t trajectory = 0;
  Index start = 0;

  friend bool operator==(const ColumnOrigin&, const ColumnOrigin&) = default;
};

/// Past/future partition of the (mosaic) input and output Hankel matrices.
/// All four blocks share the same column count; column j of every block is
/// the same length-(past_length + horizon) window.
struct DataMatrices {
  Index past_length = 0;
  Index horizon = 0;
  Matrix past_inputs;     // past_length * m rows
  Matrix past_outputs;    // past_length * p rows
  Matrix future_inputs;   // horizon * m rows
  Matrix future_outputs;  // horizon * p rows
  std::vector<ColumnOrigin> origins;

  [[nodiscard]] Index columns() const { return past_inputs.cols(); }
  [[nodiscard]] Index input_dim() const { return past_length > 0 ? past_inputs.rows() / past_length : 0; }
  [[nodiscard]] Index output_dim() const { return past_length > 0 ? past_outputs.rows() / past_length : 0; }

  /// col(past_inputs, past_outputs, future_inputs, future_outputs).
  [[nodiscard]] Matrix stacked() const;

  /// Checks the block-shape invariants; throws on violation.
  void validate() const;
};

/// Block Hankel matrix of depth `depth` built from a T x d signal (rows are
/// samples). Column j stacks samples j .. j+depth-1.
[[nodiscard]] Matrix build_hankel(const Matrix& signal, Index depth);

/// Mosaic-Hankel data matrices: per-trajectory Hankel blocks of depth
/// past_length + horizon concatenated in trajectory order, then partitioned.
[[nodiscard]] DataMatrices build_data_matrices(const Dataset& dataset, Index past_length, Index horizon);

/// Numerical rank: singular values above max_dim * sigma_max * 1e-12 count.
[[nodiscard]] Index numerical_rank(const Matrix& matrix);

[[nodiscard]] bool is_persistently_exciting(const Matrix& signal, Index order);

/// Rank test on the horizontally concatenated Hankel matrices of several signals.
[[nodiscard]] bool is_collectively_persistently_exciting(std::span<const Matrix> signals, Index order);

/// Smallest singular value of an arbitrary matrix (min(rows, cols) values).
[[nodiscard]] double min_singular_value(const Matrix& matrix);

/// Smallest singular value of the stacked data matrix.
[[nodiscard]] double min_singular_value(const DataMatrices& matrices);

}  // namespace deepc
