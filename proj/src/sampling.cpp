#include "deepc/sampling.hpp"

#include "deepc/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace deepc {

namespace {

constexpr double kDegenerateSpread = 1e-9;

void warn_truncation(Index requested, Index available) {
  spdlog::warn("requested {} samples but only {} columns exist; using all columns", requested, available);
}

}  // namespace

Vector past_distances(const Matrix& past_outputs, const Vector& initial_outputs) {
  if (past_outputs.rows() != initial_outputs.size()) {
    throw Error(ErrorKind::dimension_mismatch,
                "past output block has " + std::to_string(past_outputs.rows()) + " rows but initial outputs have " +
                    std::to_string(initial_outputs.size()) + " entries");
  }
  return (past_outputs.colwise() - initial_outputs).colwise().norm().transpose();
}

Vector future_distances(const Matrix& future_outputs, const Vector& reference, const Vector& output_weights) {
  if (future_outputs.rows() != reference.size()) {
    throw Error(ErrorKind::dimension_mismatch,
                "future output block has " + std::to_string(future_outputs.rows()) + " rows but reference has " +
                    std::to_string(reference.size()) + " entries");
  }
  const Index p = output_weights.size();
  if (p == 0 || reference.size() % p != 0) {
    throw Error(ErrorKind::dimension_mismatch, "output weights do not divide the reference length");
  }
  if ((output_weights.array() < 0.0).any()) {
    throw Error(ErrorKind::invalid_argument, "output weights must be nonnegative");
  }
  const Vector weights = output_weights.replicate(reference.size() / p, 1);
  const Matrix diff = future_outputs.colwise() - reference;
  return (diff.array().square().colwise() * weights.array()).colwise().sum().sqrt().transpose();
}

Vector combine_distances(const Vector& past, const Vector& future) {
  if (past.size() != future.size()) {
    throw Error(ErrorKind::dimension_mismatch, "distance vectors have different lengths");
  }
  const auto zscore = [](const Vector& d) -> Vector {
    const double n = static_cast<double>(d.size());
    const double mean = d.mean();
    const double spread = std::sqrt((d.array() - mean).square().sum() / n);
    if (!(spread >= kDegenerateSpread)) return Vector::Zero(d.size());
    return (d.array() - mean) / spread;
  };
  if (past.size() == 0) return Vector();
  return zscore(past) + zscore(future);
}

std::vector<Index> smallest_indices(const Vector& values, Index count) {
  const Index k = std::clamp<Index>(count, 0, values.size());
  std::vector<Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Index{0});
  const auto less = [&](Index a, Index b) { return values(a) < values(b) || (values(a) == values(b) && a < b); };
  std::partial_sort(order.begin(), order.begin() + k, order.end(), less);
  order.resize(static_cast<std::size_t>(k));
  return order;
}

std::vector<Index> softmin_indices(const Vector& values, Index count, double temperature, std::uint64_t seed) {
  if (!(temperature > 0.0)) {
    throw Error(ErrorKind::invalid_argument, "softmin temperature must be positive");
  }
  // Gumbel-top-k: the k largest perturbed log-weights are a sample without
  // replacement with probabilities proportional to the weights.
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vector keys(values.size());
  for (Index i = 0; i < values.size(); ++i) {
    double u = unit(rng);
    while (u <= 0.0) u = unit(rng);
    keys(i) = values(i) / temperature + std::log(-std::log(u));
  }
  return smallest_indices(keys, count);
}

SelectionResult select_contextual(const DataMatrices& matrices, const SelectionRequest& request, std::uint64_t seed,
                                  const ContextualOptions& options) {
  if (request.sample_count < 1) {
    throw Error(ErrorKind::invalid_argument, "sample count must be at least 1");
  }
  const Index p = matrices.output_dim();
  if (request.output_weights.size() != p) {
    throw Error(ErrorKind::dimension_mismatch, "output weight count does not match output dimension");
  }
  SelectionResult result;
  const Vector dp = past_distances(matrices.past_outputs, request.initial_outputs);
  const Vector df = future_distances(matrices.future_outputs, request.reference, request.output_weights);
  result.combined_distances = combine_distances(dp, df);

  const Index k = matrices.columns();
  if (request.sample_count > k) {
    warn_truncation(request.sample_count, k);
    result.truncated = true;
  }
  if (options.mode == SelectionMode::softmin) {
    result.indices = softmin_indices(result.combined_distances, request.sample_count, options.temperature, seed);
  } else {
    result.indices = smallest_indices(result.combined_distances, request.sample_count);
  }
  return result;
}

SelectionResult select_random(Index column_count, Index sample_count, std::uint64_t seed) {
  if (sample_count < 1) {
    throw Error(ErrorKind::invalid_argument, "sample count must be at least 1");
  }
  SelectionResult result;
  if (sample_count > column_count) {
    warn_truncation(sample_count, column_count);
    result.truncated = true;
  }
  const Index k = std::min(sample_count, column_count);
  std::vector<Index> pool(static_cast<std::size_t>(column_count));
  std::iota(pool.begin(), pool.end(), Index{0});
  std::mt19937_64 rng(seed);
  for (Index i = 0; i < k; ++i) {
    std::uniform_int_distribution<Index> pick(i, column_count - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
  }
  pool.resize(static_cast<std::size_t>(k));
  std::sort(pool.begin(), pool.end());
  result.indices = std::move(pool);
  return result;
}

SelectionResult select_all(Index column_count) {
  SelectionResult result;
  result.indices.resize(static_cast<std::size_t>(column_count));
  std::iota(result.indices.begin(), result.indices.end(), Index{0});
  return result;
}

DataMatrices restrict_columns(const DataMatrices& matrices, std::span<const Index> indices) {
  const Index k = matrices.columns();
  for (const Index idx : indices) {
    if (idx < 0 || idx >= k) {
      throw Error(ErrorKind::index_out_of_range,
                  "column index " + std::to_string(idx) + " out of range [0, " + std::to_string(k) + ")");
    }
  }
  const auto n = static_cast<Index>(indices.size());
  DataMatrices out;
  out.past_length = matrices.past_length;
  out.horizon = matrices.horizon;
  out.past_inputs.resize(matrices.past_inputs.rows(), n);
  out.past_outputs.resize(matrices.past_outputs.rows(), n);
  out.future_inputs.resize(matrices.future_inputs.rows(), n);
  out.future_outputs.resize(matrices.future_outputs.rows(), n);
  const bool has_origins = !matrices.origins.empty();
  if (has_origins) out.origins.reserve(indices.size());
  for (Index j = 0; j < n; ++j) {
    const Index src = indices[static_cast<std::size_t>(j)];
    out.past_inputs.col(j) = matrices.past_inputs.col(src);
    out.past_outputs.col(j) = matrices.past_outputs.col(src);
    out.future_inputs.col(j) = matrices.future_inputs.col(src);
    out.future_outputs.col(j) = matrices.future_outputs.col(src);
    if (has_origins) out.origins.push_back(matrices.origins[static_cast<std::size_t>(src)]);
  }
  return out;
}

}  // namespace deepc
