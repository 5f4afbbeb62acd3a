#pragma once

#include "deepc/trajectory_data.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace deepc {

/// Context for one selection: current past-window outputs, upcoming reference
/// and the per-channel output weights (repeated over the horizon).
struct SelectionRequest {
  Vector initial_outputs;  // past_length * p
  Vector reference;        // horizon * p
  Vector output_weights;   // p
  Index sample_count = 1;
};

struct SelectionResult {
  std::vector<Index> indices;
  Vector combined_distances;  // empty for random selection
  bool truncated = false;     // sample_count exceeded the column count
};

enum class SelectionMode { argmin, softmin };

struct ContextualOptions {
  SelectionMode mode = SelectionMode::argmin;
  double temperature = 0.1;
};

/// Euclidean distance of every column of `past_outputs` to `initial_outputs`.
[[nodiscard]] Vector past_distances(const Matrix& past_outputs, const Vector& initial_outputs);

/// Weighted distance sqrt(sum_j w_j (Y[j,i] - r_j)^2) with the channel weights
/// repeated blockwise over the horizon.
[[nodiscard]] Vector future_distances(const Matrix& future_outputs, const Vector& reference,
                                      const Vector& output_weights);

/// Sum of the two z-scored distance vectors (population std). A vector with
/// std below 1e-9 contributes zero.
[[nodiscard]] Vector combine_distances(const Vector& past, const Vector& future);

/// Indices of the `count` smallest entries, ascending by value, ties by index.
[[nodiscard]] std::vector<Index> smallest_indices(const Vector& values, Index count);

/// Draws `count` distinct indices without replacement with probability
/// proportional to exp(-value / temperature).
[[nodiscard]] std::vector<Index> softmin_indices(const Vector& values, Index count, double temperature,
                                                 std::uint64_t seed);

[[nodiscard]] SelectionResult select_contextual(const DataMatrices& matrices, const SelectionRequest& request,
                                                std::uint64_t seed, const ContextualOptions& options = {});

/// Uniform draw of min(sample_count, column_count) distinct column indices.
[[nodiscard]] SelectionResult select_random(Index column_count, Index sample_count, std::uint64_t seed);

/// All columns, in order.
[[nodiscard]] SelectionResult select_all(Index column_count);

/// Column subset of every block (and of the column origins).
[[nodiscard]] DataMatrices restrict_columns(const DataMatrices& matrices, std::span<const Index> indices);

}  // namespace deepc
