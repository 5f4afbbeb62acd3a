#pragma once

#include "deepc/qp_solver.hpp"
#include "deepc/trajectory_data.hpp"

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

namespace deepc {

enum class Strategy { contextual, random, full };

[[nodiscard]] std::string_view to_string(Strategy strategy);
[[nodiscard]] Strategy strategy_from_string(std::string_view name);

/// Per-window frame rule. `planar_pose` expects outputs (x, y, v, psi) and maps
/// the anchor pose to the origin; `translation_xyz` expects (x, y, z) first and
/// maps the anchor position to (0, 0, 1).
enum class AlignmentRule { none, planar_pose, translation_xyz };

[[nodiscard]] std::string_view to_string(AlignmentRule rule);

/// Expresses the physical output channels of `output` in the frame anchored at
/// `anchor`. Channels beyond the plant outputs are passed through.
[[nodiscard]] Vector align_sample(const Vector& output, const Vector& anchor, AlignmentRule rule);

/// Inverse of align_sample.
[[nodiscard]] Vector unalign_sample(const Vector& local, const Vector& anchor, AlignmentRule rule);

/// Per-channel interval set. Empty vectors mean unbounded.
struct ChannelBounds {
  Vector lower;
  Vector upper;

  [[nodiscard]] static ChannelBounds unbounded(Index channels);
  [[nodiscard]] bool empty() const { return lower.size() == 0 && upper.size() == 0; }
  [[nodiscard]] bool is_finite(Index channel) const;
  [[nodiscard]] Vector clamp(const Vector& value) const;
  void validate(Index channels, std::string_view what) const;
};

struct ControllerConfig {
  Index past_length = 5;
  Index horizon = 10;
  Index sample_count = 30;
  Vector output_weights;  // diagonal of Q, physical output channels
  Vector input_weights;   // diagonal of R
  Vector input_reference;  // nominal input the R penalty pulls toward; empty means zero
  double lambda_g_bar = 1.0;
  double lambda_sigma = 100.0;
  ChannelBounds input_bounds;
  ChannelBounds output_bounds;
  Strategy strategy = Strategy::contextual;
  std::optional<double> softmin_temperature;
  bool incremental_inputs = true;
  QpSettings qp;

  void validate(Index input_dim, Index output_dim) const;
};

/// Data matrices in the controller's working representation: aligned per
/// window, inputs optionally replaced by increments with the absolute inputs
/// appended to the outputs, and every channel z-scored.
struct PreprocessedData {
  DataMatrices matrices;
  NormalizationStats stats;  // of the working inputs and working outputs
  AlignmentRule alignment = AlignmentRule::none;
  bool incremental_inputs = true;
  Index input_dim = 0;
  Index output_dim = 0;  // physical outputs
  double sample_period = 0.0;

  [[nodiscard]] Index working_output_dim() const { return incremental_inputs ? output_dim + input_dim : output_dim; }
};

/// Builds the working representation from raw physical trajectories. Increments
/// of each trajectory start from a zero prior input.
[[nodiscard]] PreprocessedData preprocess_dataset(const Dataset& raw, AlignmentRule alignment, Index past_length,
                                                  Index horizon, bool incremental_inputs = true);

// ---------------------------------------------------------------------------
// QP assembly, all quantities in the working (normalized) representation.

struct QpWeights {
  Vector output_weights;  // per working output channel
  Vector input_weights;   // per working input channel
  bool penalize_input_rate = false;
  double lambda_g_bar = 1.0;
  double lambda_sigma = 100.0;
  ChannelBounds input_bounds;   // rows on the planned inputs
  ChannelBounds output_bounds;  // rows on the predicted outputs
};

struct QpContext {
  Vector initial_inputs;   // past_length * m
  Vector initial_outputs;  // past_length * p
  Vector reference;        // horizon * p
  Vector previous_input;   // m, used by the rate penalty
  Vector input_reference;  // m, target of the input penalty; empty means zero
};

/// Offsets of the blocks of the decision vector col(g, u, y, t+, t-).
struct QpLayout {
  Index columns = 0;
  Index inputs = 0;
  Index outputs = 0;
  Index slacks = 0;

  [[nodiscard]] Index g() const { return 0; }
  [[nodiscard]] Index u() const { return columns; }
  [[nodiscard]] Index y() const { return columns + inputs; }
  [[nodiscard]] Index t_plus() const { return columns + inputs + outputs; }
  [[nodiscard]] Index t_minus() const { return t_plus() + slacks; }
  [[nodiscard]] Index variables() const { return t_minus() + slacks; }
};

[[nodiscard]] QpLayout qp_layout(const DataMatrices& matrices);

/// Regularized tracking problem: quadratic output tracking, input and rate
/// penalties, lambda_g |g|^2 with lambda_g = lambda_g_bar * columns, and an
/// L1 penalty on the initial-output slack split as t+ - t-.
[[nodiscard]] QpProblem assemble_qp(const DataMatrices& matrices, const QpContext& context, const QpWeights& weights);

// ---------------------------------------------------------------------------

struct ControllerState {
  Index past_length = 0;
  std::deque<Vector> inputs;   // applied inputs, oldest first
  std::deque<Vector> outputs;  // outputs measured after each input
  Vector input_before_window;  // input preceding inputs.front()
  Vector last_applied_input;
  std::optional<QpSolution> warm_start;
  std::vector<Index> warm_start_indices;

  [[nodiscard]] static ControllerState initial(Index past_length, const Vector& nominal_input);
  [[nodiscard]] bool warmed_up() const { return static_cast<Index>(inputs.size()) == past_length; }
  /// Records an applied input and the measurement that followed it.
  void commit(const Vector& input, const Vector& output);
};

struct StepResult {
  Vector applied_input;
  Matrix planned_inputs;     // horizon x m, physical
  Matrix predicted_outputs;  // horizon x p, physical world frame
  Vector g;
  Vector sigma_y;
  double solve_time = 0.0;  // seconds
  std::vector<Index> selected_indices;
  double sigma_min = 0.0;
  QpStatus qp_status = QpStatus::solved;
  bool selection_truncated = false;
  QpSolution solution;
};

struct FullProblemCache;

class DeepcController {
 public:
  DeepcController(PreprocessedData data, ControllerConfig config);

  [[nodiscard]] const PreprocessedData& data() const { return data_; }
  [[nodiscard]] const ControllerConfig& config() const { return config_; }
  [[nodiscard]] const QpWeights& weights() const { return weights_; }

  /// Working-representation context for the current buffers and a physical
  /// reference (horizon x p, world frame).
  [[nodiscard]] QpContext make_context(const ControllerState& state, const Matrix& reference) const;

  /// One receding-horizon step. The state is not modified.
  [[nodiscard]] StepResult control_step(const ControllerState& state, const Matrix& reference,
                                        std::uint64_t seed) const;

 private:
  [[nodiscard]] Vector working_initial_outputs(const ControllerState& state) const;

  PreprocessedData data_;
  ControllerConfig config_;
  QpWeights weights_;
  Vector distance_weights_;
  double full_sigma_min_ = 0.0;
  std::shared_ptr<FullProblemCache> full_cache_;  // factored QP of the full data matrices
};

/// sqrt((y - r)' diag(Q) (y - r)).
[[nodiscard]] double tracking_error(const Vector& y, const Vector& r, const Vector& output_weights);

}  // namespace deepc
