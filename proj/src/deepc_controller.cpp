#include "deepc/deepc_controller.hpp"

#include "deepc/error.hpp"
#include "deepc/plants.hpp"
#include "deepc/sampling.hpp"

#include <chrono>
#include <mutex>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace deepc {

namespace {

constexpr double kInfinity = std::numeric_limits<double>::infinity();

constexpr Index kPlanarChannels = 4;
constexpr Index kTranslationChannels = 3;

void require_channels(Index size, AlignmentRule rule) {
  const Index needed =
      rule == AlignmentRule::planar_pose ? kPlanarChannels
                     : rule == AlignmentRule::translation_xyz ? kTranslationChannels
                                                               : 0;
  if (size < needed) {
    throw Error(ErrorKind::dimension_mismatch,
                "alignment rule " + std::string(to_string(rule)) + " needs at least " + std::to_string(needed) +
                    " output channels");
  }
}

// Channel-major view of a block whose rows interleave `channels` channels over time.
Matrix channel_samples(const Matrix& block, Index channels) {
  return Eigen::Map<const Matrix>(block.data(), channels, block.size() / channels).transpose();
}

void normalize_block(Matrix& block, const Vector& mean, const Vector& std) {
  Eigen::Map<Matrix> view(block.data(), mean.size(), block.size() / mean.size());
  view = (view.colwise() - mean).array().colwise() / std.array();
}

Vector shift_bounds(const Vector& bound, const Vector& mean, const Vector& std) {
  return (bound - mean).cwiseQuotient(std);
}

}  // namespace

std::string_view to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::contextual:
      return "contextual";
    case Strategy::random:
      return "random";
    case Strategy::full:
      return "full";
  }
  return "unknown";
}

Strategy strategy_from_string(std::string_view name) {
  if (name == "contextual") return Strategy::contextual;
  if (name == "random") return Strategy::random;
  if (name == "full") return Strategy::full;
  throw Error(ErrorKind::config, "unknown strategy '" + std::string(name) + "'");
}

std::string_view to_string(AlignmentRule rule) {
  switch (rule) {
    case AlignmentRule::none:
      return "none";
    case AlignmentRule::planar_pose:
      return "planar_pose";
    case AlignmentRule::translation_xyz:
      return "translation_xyz";
  }
  return "unknown";
}

Vector align_sample(const Vector& output, const Vector& anchor, AlignmentRule rule) {
  Vector out = output;
  switch (rule) {
    case AlignmentRule::none:
      break;
    case AlignmentRule::planar_pose: {
      require_channels(std::min(output.size(), anchor.size()), rule);
      const double c = std::cos(anchor(3));
      const double s = std::sin(anchor(3));
      const double dx = output(0) - anchor(0);
      const double dy = output(1) - anchor(1);
      out(0) = c * dx + s * dy;
      out(1) = -s * dx + c * dy;
      out(3) = wrap_angle(output(3) - anchor(3));
      break;
    }
    case AlignmentRule::translation_xyz:
      require_channels(std::min(output.size(), anchor.size()), rule);
      out.head<3>() = output.head<3>() - anchor.head<3>() + Eigen::Vector3d(0.0, 0.0, 1.0);
      break;
  }
  return out;
}

Vector unalign_sample(const Vector& local, const Vector& anchor, AlignmentRule rule) {
  Vector out = local;
  switch (rule) {
    case AlignmentRule::none:
      break;
    case AlignmentRule::planar_pose: {
      require_channels(std::min(local.size(), anchor.size()), rule);
      const double c = std::cos(anchor(3));
      const double s = std::sin(anchor(3));
      out(0) = anchor(0) + c * local(0) - s * local(1);
      out(1) = anchor(1) + s * local(0) + c * local(1);
      out(3) = wrap_angle(local(3) + anchor(3));
      break;
    }
    case AlignmentRule::translation_xyz:
      require_channels(std::min(local.size(), anchor.size()), rule);
      out.head<3>() = local.head<3>() + anchor.head<3>() - Eigen::Vector3d(0.0, 0.0, 1.0);
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------

ChannelBounds ChannelBounds::unbounded(Index channels) {
  return {Vector::Constant(channels, -kInfinity), Vector::Constant(channels, kInfinity)};
}

bool ChannelBounds::is_finite(Index channel) const {
  if (empty()) return false;
  return std::isfinite(lower(channel)) || std::isfinite(upper(channel));
}

Vector ChannelBounds::clamp(const Vector& value) const {
  if (empty()) return value;
  return value.cwiseMax(lower).cwiseMin(upper);
}

void ChannelBounds::validate(Index channels, std::string_view what) const {
  if (empty()) return;
  if (lower.size() != channels || upper.size() != channels) {
    throw Error(ErrorKind::dimension_mismatch, std::string(what) + " bounds need " + std::to_string(channels) +
                                                   " entries per side");
  }
  for (Index i = 0; i < channels; ++i) {
    if (std::isnan(lower(i)) || std::isnan(upper(i)) || lower(i) > upper(i)) {
      throw Error(ErrorKind::invalid_argument,
                  std::string(what) + " bounds of channel " + std::to_string(i) + " are not well ordered");
    }
  }
}

void ControllerConfig::validate(Index input_dim, Index output_dim) const {
  if (past_length < 1 || horizon < 1 || sample_count < 1) {
    throw Error(ErrorKind::invalid_argument, "past_length, horizon and sample_count must be at least 1");
  }
  if (output_weights.size() != output_dim) {
    throw Error(ErrorKind::dimension_mismatch, "Q needs " + std::to_string(output_dim) + " diagonal entries");
  }
  if (input_weights.size() != input_dim) {
    throw Error(ErrorKind::dimension_mismatch, "R needs " + std::to_string(input_dim) + " diagonal entries");
  }
  if ((output_weights.array() < 0.0).any() || (input_weights.array() < 0.0).any() ||
      !output_weights.allFinite() || !input_weights.allFinite()) {
    throw Error(ErrorKind::invalid_argument, "Q and R must be finite and nonnegative");
  }
  if (!(lambda_g_bar >= 0.0) || !(lambda_sigma >= 0.0)) {
    throw Error(ErrorKind::invalid_argument, "regularization weights must be nonnegative");
  }
  if (softmin_temperature && !(*softmin_temperature > 0.0)) {
    throw Error(ErrorKind::invalid_argument, "softmin temperature must be positive");
  }
  if (input_reference.size() != 0 && (input_reference.size() != input_dim || !input_reference.allFinite())) {
    throw Error(ErrorKind::dimension_mismatch, "input reference needs " + std::to_string(input_dim) + " finite entries");
  }
  input_bounds.validate(input_dim, "input");
  output_bounds.validate(output_dim, "output");
}

// ---------------------------------------------------------------------------

PreprocessedData preprocess_dataset(const Dataset& raw, AlignmentRule alignment, Index past_length, Index horizon,
                                    bool incremental_inputs) {
  const Index m = raw.input_dim();
  const Index p = raw.output_dim();
  require_channels(p, alignment);
  const Index pw = incremental_inputs ? p + m : p;

  std::vector<Trajectory> working;
  working.reserve(raw.trajectories().size());
  for (const Trajectory& traj : raw.trajectories()) {
    Matrix inputs = traj.inputs();
    Matrix outputs = traj.outputs();
    if (incremental_inputs) {
      for (Index k = inputs.rows() - 1; k > 0; --k) inputs.row(k) -= traj.inputs().row(k - 1);
      outputs.conservativeResize(Eigen::NoChange, pw);
      outputs.rightCols(m) = traj.inputs();
    }
    working.emplace_back(std::move(inputs), std::move(outputs), traj.sample_period());
  }
  const Dataset working_set(std::move(working));

  PreprocessedData out;
  out.matrices = build_data_matrices(working_set, past_length, horizon);
  out.alignment = alignment;
  out.incremental_inputs = incremental_inputs;
  out.input_dim = m;
  out.output_dim = p;
  out.sample_period = raw.sample_period();

  DataMatrices& dm = out.matrices;
  if (alignment != AlignmentRule::none) {
    for (Index j = 0; j < dm.columns(); ++j) {
      const Vector anchor = dm.past_outputs.col(j).segment((past_length - 1) * pw, p);
      for (Index k = 0; k < past_length; ++k) {
        auto seg = dm.past_outputs.col(j).segment(k * pw, pw);
        seg = align_sample(seg, anchor, alignment);
      }
      for (Index k = 0; k < horizon; ++k) {
        auto seg = dm.future_outputs.col(j).segment(k * pw, pw);
        seg = align_sample(seg, anchor, alignment);
      }
    }
  }

  Matrix input_samples(dm.past_inputs.size() / m + dm.future_inputs.size() / m, m);
  input_samples << channel_samples(dm.past_inputs, m), channel_samples(dm.future_inputs, m);
  Matrix output_samples(dm.past_outputs.size() / pw + dm.future_outputs.size() / pw, pw);
  output_samples << channel_samples(dm.past_outputs, pw), channel_samples(dm.future_outputs, pw);
  out.stats = NormalizationStats::from_samples(input_samples, output_samples);

  normalize_block(dm.past_inputs, out.stats.input_mean, out.stats.input_std);
  normalize_block(dm.future_inputs, out.stats.input_mean, out.stats.input_std);
  normalize_block(dm.past_outputs, out.stats.output_mean, out.stats.output_std);
  normalize_block(dm.future_outputs, out.stats.output_mean, out.stats.output_std);
  return out;
}

// ---------------------------------------------------------------------------

QpLayout qp_layout(const DataMatrices& matrices) {
  QpLayout layout;
  layout.columns = matrices.columns();
  layout.inputs = matrices.future_inputs.rows();
  layout.outputs = matrices.future_outputs.rows();
  layout.slacks = matrices.past_outputs.rows();
  return layout;
}

QpProblem assemble_qp(const DataMatrices& dm, const QpContext& ctx, const QpWeights& w) {
  dm.validate();
  const Index m = dm.input_dim();
  const Index p = dm.output_dim();
  const Index past = dm.past_length;
  const Index horizon = dm.horizon;
  const QpLayout L = qp_layout(dm);
  const Index K = L.columns;

  if (ctx.initial_inputs.size() != past * m || ctx.initial_outputs.size() != past * p ||
      ctx.reference.size() != horizon * p || w.output_weights.size() != p || w.input_weights.size() != m) {
    throw Error(ErrorKind::dimension_mismatch, "QP context or weights do not match the data matrices");
  }
  if (ctx.input_reference.size() != 0 && ctx.input_reference.size() != m) {
    throw Error(ErrorKind::dimension_mismatch, "input reference does not match the input dimension");
  }
  if (w.penalize_input_rate && ctx.previous_input.size() != m) {
    throw Error(ErrorKind::dimension_mismatch, "rate penalty needs the previous input");
  }
  w.input_bounds.validate(m, "input");
  w.output_bounds.validate(p, "output");

  const Index n = L.variables();
  QpProblem qp;
  qp.q = Vector::Zero(n);

  std::vector<Eigen::Triplet<double>> pt;
  pt.reserve(static_cast<std::size_t>(n + 2 * L.inputs));
  const double lambda_g = w.lambda_g_bar * static_cast<double>(K);
  for (Index j = 0; j < K; ++j) pt.emplace_back(L.g() + j, L.g() + j, 2.0 * lambda_g);
  for (Index k = 0; k < horizon; ++k) {
    for (Index c = 0; c < m; ++c) {
      const Index i = L.u() + k * m + c;
      const double r = w.input_weights(c);
      pt.emplace_back(i, i, 2.0 * r);
      if (ctx.input_reference.size() == m) qp.q(i) -= 2.0 * r * ctx.input_reference(c);
      if (!w.penalize_input_rate || r == 0.0) continue;
      pt.emplace_back(i, i, 2.0 * r);
      if (k == 0) {
        qp.q(i) -= 2.0 * r * ctx.previous_input(c);
      } else {
        pt.emplace_back(i - m, i - m, 2.0 * r);
        pt.emplace_back(i, i - m, -2.0 * r);
        pt.emplace_back(i - m, i, -2.0 * r);
      }
    }
    for (Index c = 0; c < p; ++c) {
      const Index i = L.y() + k * p + c;
      const double qw = w.output_weights(c);
      pt.emplace_back(i, i, 2.0 * qw);
      qp.q(i) = -2.0 * qw * ctx.reference(k * p + c);
    }
  }
  qp.q.segment(L.t_plus(), 2 * L.slacks).setConstant(w.lambda_sigma);
  qp.P.resize(n, n);
  qp.P.setFromTriplets(pt.begin(), pt.end());

  Index bounded_inputs = 0;
  for (Index c = 0; c < m; ++c) bounded_inputs += w.input_bounds.is_finite(c) ? 1 : 0;
  Index bounded_outputs = 0;
  for (Index c = 0; c < p; ++c) bounded_outputs += w.output_bounds.is_finite(c) ? 1 : 0;

  const Index r_up = 0;
  const Index r_yp = r_up + past * m;
  const Index r_uf = r_yp + past * p;
  const Index r_yf = r_uf + horizon * m;
  const Index r_one = r_yf + horizon * p;
  const Index r_slack = r_one + 1;
  const Index r_ubound = r_slack + 2 * L.slacks;
  const Index r_ybound = r_ubound + horizon * bounded_inputs;
  const Index rows = r_ybound + horizon * bounded_outputs;

  std::vector<Eigen::Triplet<double>> at;
  at.reserve(static_cast<std::size_t>(K * (dm.past_inputs.rows() + dm.past_outputs.rows() + L.inputs + L.outputs + 1) +
                                       3 * L.slacks + L.inputs + L.outputs + horizon * (bounded_inputs + bounded_outputs)));
  const auto dense_block = [&](const Matrix& block, Index row0) {
    for (Index j = 0; j < K; ++j) {
      for (Index i = 0; i < block.rows(); ++i) {
        const double v = block(i, j);
        if (v != 0.0) at.emplace_back(row0 + i, L.g() + j, v);
      }
    }
  };
  dense_block(dm.past_inputs, r_up);
  dense_block(dm.past_outputs, r_yp);
  dense_block(dm.future_inputs, r_uf);
  dense_block(dm.future_outputs, r_yf);
  for (Index i = 0; i < L.slacks; ++i) {
    at.emplace_back(r_yp + i, L.t_plus() + i, -1.0);
    at.emplace_back(r_yp + i, L.t_minus() + i, 1.0);
    at.emplace_back(r_slack + i, L.t_plus() + i, 1.0);
    at.emplace_back(r_slack + L.slacks + i, L.t_minus() + i, 1.0);
  }
  for (Index i = 0; i < L.inputs; ++i) at.emplace_back(r_uf + i, L.u() + i, -1.0);
  for (Index i = 0; i < L.outputs; ++i) at.emplace_back(r_yf + i, L.y() + i, -1.0);
  for (Index j = 0; j < K; ++j) at.emplace_back(r_one, L.g() + j, 1.0);

  qp.l = Vector::Zero(rows);
  qp.u = Vector::Zero(rows);
  qp.l.segment(r_up, past * m) = ctx.initial_inputs;
  qp.u.segment(r_up, past * m) = ctx.initial_inputs;
  qp.l.segment(r_yp, past * p) = ctx.initial_outputs;
  qp.u.segment(r_yp, past * p) = ctx.initial_outputs;
  qp.l(r_one) = 1.0;
  qp.u(r_one) = 1.0;
  qp.u.segment(r_slack, 2 * L.slacks).setConstant(kInfinity);

  Index row = r_ubound;
  for (Index k = 0; k < horizon; ++k) {
    for (Index c = 0; c < m; ++c) {
      if (!w.input_bounds.is_finite(c)) continue;
      at.emplace_back(row, L.u() + k * m + c, 1.0);
      qp.l(row) = w.input_bounds.lower(c);
      qp.u(row) = w.input_bounds.upper(c);
      ++row;
    }
  }
  for (Index k = 0; k < horizon; ++k) {
    for (Index c = 0; c < p; ++c) {
      if (!w.output_bounds.is_finite(c)) continue;
      at.emplace_back(row, L.y() + k * p + c, 1.0);
      qp.l(row) = w.output_bounds.lower(c);
      qp.u(row) = w.output_bounds.upper(c);
      ++row;
    }
  }
  qp.A.resize(rows, n);
  qp.A.setFromTriplets(at.begin(), at.end());
  return qp;
}

// ---------------------------------------------------------------------------

ControllerState ControllerState::initial(Index past_length, const Vector& nominal_input) {
  if (past_length < 1) throw Error(ErrorKind::invalid_argument, "past_length must be at least 1");
  ControllerState s;
  s.past_length = past_length;
  s.input_before_window = nominal_input;
  s.last_applied_input = nominal_input;
  return s;
}

void ControllerState::commit(const Vector& input, const Vector& output) {
  inputs.push_back(input);
  outputs.push_back(output);
  last_applied_input = input;
  while (static_cast<Index>(inputs.size()) > past_length) {
    input_before_window = inputs.front();
    inputs.pop_front();
    outputs.pop_front();
  }
}

// ---------------------------------------------------------------------------

struct FullProblemCache {
  std::mutex mutex;
  std::optional<QpWorkspace> workspace;
};

DeepcController::DeepcController(PreprocessedData data, ControllerConfig config)
    : data_(std::move(data)), config_(std::move(config)), full_cache_(std::make_shared<FullProblemCache>()) {
  const Index m = data_.input_dim;
  const Index p = data_.output_dim;
  config_.validate(m, p);
  if (config_.past_length != data_.matrices.past_length || config_.horizon != data_.matrices.horizon) {
    throw Error(ErrorKind::dimension_mismatch, "controller windows do not match the preprocessed data");
  }
  if (config_.incremental_inputs != data_.incremental_inputs) {
    throw Error(ErrorKind::config, "controller input representation does not match the preprocessed data");
  }
  for (Index c = 0; c < p; ++c) {
    if (!config_.output_bounds.is_finite(c)) continue;
    const bool frame_invariant = data_.alignment == AlignmentRule::none ||
                                 (data_.alignment == AlignmentRule::planar_pose && c == 2) ||
                                 (data_.alignment == AlignmentRule::translation_xyz && c >= 3);
    if (!frame_invariant) {
      throw Error(ErrorKind::config, "output bound on channel " + std::to_string(c) +
                                         " is not expressible under alignment " +
                                         std::string(to_string(data_.alignment)));
    }
  }

  const NormalizationStats& st = data_.stats;
  const Index pw = data_.working_output_dim();
  weights_.lambda_g_bar = config_.lambda_g_bar;
  weights_.lambda_sigma = config_.lambda_sigma;
  weights_.input_weights = config_.input_weights;
  weights_.output_weights = Vector::Zero(pw);
  weights_.output_weights.head(p) = config_.output_weights;
  distance_weights_ = Vector::Zero(pw);
  distance_weights_.head(p) = config_.output_weights;
  weights_.output_bounds = ChannelBounds::unbounded(pw);
  weights_.input_bounds = ChannelBounds::unbounded(m);
  if (!config_.output_bounds.empty()) {
    weights_.output_bounds.lower.head(p) =
        shift_bounds(config_.output_bounds.lower, st.output_mean.head(p), st.output_std.head(p));
    weights_.output_bounds.upper.head(p) =
        shift_bounds(config_.output_bounds.upper, st.output_mean.head(p), st.output_std.head(p));
  }
  if (data_.incremental_inputs) {
    weights_.output_weights.tail(m) = config_.input_weights;
    if (!config_.input_bounds.empty()) {
      weights_.output_bounds.lower.tail(m) =
          shift_bounds(config_.input_bounds.lower, st.output_mean.tail(m), st.output_std.tail(m));
      weights_.output_bounds.upper.tail(m) =
          shift_bounds(config_.input_bounds.upper, st.output_mean.tail(m), st.output_std.tail(m));
    }
  } else {
    weights_.penalize_input_rate = true;
    if (!config_.input_bounds.empty()) {
      weights_.input_bounds.lower = shift_bounds(config_.input_bounds.lower, st.input_mean, st.input_std);
      weights_.input_bounds.upper = shift_bounds(config_.input_bounds.upper, st.input_mean, st.input_std);
    }
  }

  if (config_.strategy == Strategy::full || config_.sample_count >= data_.matrices.columns()) {
    full_sigma_min_ = min_singular_value(data_.matrices);
  }
}

Vector DeepcController::working_initial_outputs(const ControllerState& state) const {
  const Index p = data_.output_dim;
  const Index m = data_.input_dim;
  const Index pw = data_.working_output_dim();
  const Vector& anchor = state.outputs.back();
  Vector out(config_.past_length * pw);
  for (Index k = 0; k < config_.past_length; ++k) {
    Vector sample(pw);
    sample.head(p) = state.outputs[static_cast<std::size_t>(k)];
    if (data_.incremental_inputs) sample.tail(m) = state.inputs[static_cast<std::size_t>(k)];
    out.segment(k * pw, pw) = data_.stats.normalize_output(align_sample(sample, anchor, data_.alignment));
  }
  return out;
}

QpContext DeepcController::make_context(const ControllerState& state, const Matrix& reference) const {
  const Index p = data_.output_dim;
  const Index m = data_.input_dim;
  const Index pw = data_.working_output_dim();
  if (!state.warmed_up()) {
    throw Error(ErrorKind::invalid_argument, "controller state holds fewer than past_length measurements");
  }
  if (reference.rows() != config_.horizon || reference.cols() != p) {
    throw Error(ErrorKind::dimension_mismatch, "reference must be horizon x output_dim");
  }
  for (std::size_t k = 0; k < state.inputs.size(); ++k) {
    if (state.inputs[k].size() != m || state.outputs[k].size() != p) {
      throw Error(ErrorKind::dimension_mismatch, "buffered measurement has the wrong dimension");
    }
  }

  QpContext ctx;
  ctx.initial_inputs.resize(config_.past_length * m);
  Vector previous = state.input_before_window;
  for (Index k = 0; k < config_.past_length; ++k) {
    const Vector& u = state.inputs[static_cast<std::size_t>(k)];
    const Vector working = data_.incremental_inputs ? Vector(u - previous) : u;
    ctx.initial_inputs.segment(k * m, m) = data_.stats.normalize_input(working);
    previous = u;
  }
  ctx.initial_outputs = working_initial_outputs(state);

  const Vector& anchor = state.outputs.back();
  const Vector nominal = config_.input_reference.size() == m ? config_.input_reference : Vector::Zero(m);
  ctx.reference.resize(config_.horizon * pw);
  for (Index k = 0; k < config_.horizon; ++k) {
    Vector sample(pw);
    sample.head(p) = align_sample(reference.row(k).transpose(), anchor, data_.alignment);
    if (data_.incremental_inputs) sample.tail(m) = nominal;
    ctx.reference.segment(k * pw, pw) = data_.stats.normalize_output(sample);
  }
  ctx.previous_input = data_.incremental_inputs ? Vector::Zero(m) : data_.stats.normalize_input(state.last_applied_input);
  ctx.input_reference = data_.stats.normalize_input(data_.incremental_inputs ? Vector::Zero(m) : nominal);
  return ctx;
}

StepResult DeepcController::control_step(const ControllerState& state, const Matrix& reference,
                                         std::uint64_t seed) const {
  using Clock = std::chrono::steady_clock;
  const Index m = data_.input_dim;
  const Index p = data_.output_dim;
  const Index pw = data_.working_output_dim();
  const Index K = data_.matrices.columns();
  const Index horizon = config_.horizon;

  const auto start = Clock::now();
  const QpContext ctx = make_context(state, reference);

  StepResult result;
  const bool use_all = config_.strategy == Strategy::full || config_.sample_count >= K;
  if (use_all) {
    result.selected_indices.resize(static_cast<std::size_t>(K));
    std::iota(result.selected_indices.begin(), result.selected_indices.end(), Index{0});
    result.selection_truncated = config_.strategy != Strategy::full && config_.sample_count > K;
  } else if (config_.strategy == Strategy::contextual) {
    SelectionRequest request{ctx.initial_outputs, ctx.reference, distance_weights_, config_.sample_count};
    ContextualOptions options;
    if (config_.softmin_temperature) {
      options.mode = SelectionMode::softmin;
      options.temperature = *config_.softmin_temperature;
    }
    SelectionResult sel = select_contextual(data_.matrices, request, seed, options);
    result.selected_indices = std::move(sel.indices);
  } else {
    result.selected_indices = select_random(K, config_.sample_count, seed).indices;
  }

  std::optional<DataMatrices> restricted;
  if (!use_all) restricted = restrict_columns(data_.matrices, result.selected_indices);
  const DataMatrices& dm = use_all ? data_.matrices : *restricted;

  const QpProblem qp = assemble_qp(dm, ctx, weights_);
  std::optional<QpWarmStart> warm;
  if (state.warm_start && state.warm_start_indices == result.selected_indices &&
      state.warm_start->x.size() == qp.variables() && state.warm_start->y.size() == qp.constraints()) {
    warm = QpWarmStart{state.warm_start->x, state.warm_start->y};
  }
  if (use_all) {
    const std::lock_guard lock(full_cache_->mutex);
    if (!full_cache_->workspace) {
      full_cache_->workspace.emplace(qp, config_.qp);
    } else {
      full_cache_->workspace->update_vectors(qp.q, qp.l, qp.u);
    }
    result.solution = full_cache_->workspace->solve(warm ? &*warm : nullptr);
  } else {
    const QpSolver solver(config_.qp);
    result.solution = solver.solve(qp, warm ? &*warm : nullptr);
  }
  result.solve_time = std::chrono::duration<double>(Clock::now() - start).count();

  result.sigma_min = use_all ? full_sigma_min_ : min_singular_value(dm);
  result.qp_status = result.solution.status;

  const QpLayout layout = qp_layout(dm);
  const Vector& x = result.solution.x;
  result.g = x.segment(layout.g(), layout.columns);
  result.sigma_y = x.segment(layout.t_plus(), layout.slacks) - x.segment(layout.t_minus(), layout.slacks);

  result.planned_inputs.resize(horizon, m);
  Vector running = state.last_applied_input;
  for (Index k = 0; k < horizon; ++k) {
    const Vector working = data_.stats.denormalize_input(x.segment(layout.u() + k * m, m));
    running = data_.incremental_inputs ? Vector(running + working) : working;
    result.planned_inputs.row(k) = running.transpose();
  }
  const Vector& anchor = state.outputs.back();
  result.predicted_outputs.resize(horizon, p);
  for (Index k = 0; k < horizon; ++k) {
    const Vector local = data_.stats.denormalize_output(x.segment(layout.y() + k * pw, pw));
    result.predicted_outputs.row(k) = unalign_sample(local, anchor, data_.alignment).head(p).transpose();
  }

  if (result.qp_status == QpStatus::solved) {
    result.applied_input = config_.input_bounds.clamp(result.planned_inputs.row(0).transpose());
  } else {
    result.applied_input = state.last_applied_input;
    result.planned_inputs.rowwise() = state.last_applied_input.transpose();
  }
  result.planned_inputs.row(0) = result.applied_input.transpose();
  return result;
}

double tracking_error(const Vector& y, const Vector& r, const Vector& output_weights) {
  if (y.size() != r.size() || y.size() != output_weights.size()) {
    throw Error(ErrorKind::dimension_mismatch, "tracking error operands differ in dimension");
  }
  return std::sqrt((y - r).cwiseAbs2().dot(output_weights));
}

}  // namespace deepc
