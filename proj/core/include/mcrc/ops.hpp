#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "mcrc/autodiff.hpp"

namespace mcrc {

// Every op records its output on the tape of its first operand. All operands
// are treated as matrices (see Tensor::rows / Tensor::cols) and results are
// rank 2.

/// [m x k] . [k x n] -> [m x n]
Var matmul(Var a, Var b);
/// Same shape, or `b` a [1 x n] row broadcast over the rows of `a`.
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Same shape, or `b` a [m x 1] column broadcast across the columns of `a`.
Var mul(Var a, Var b);
Var scale(Var a, double factor);

Var sigmoid(Var a);
Var tanh(Var a);

/// Concatenate along the last axis; all parts share a row count.
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
Var slice_cols(Var a, std::size_t start, std::size_t count);
/// Concatenate along the first axis; all parts share a column count.
Var stack_rows(std::span<const Var> parts);
Var stack_rows(std::initializer_list<Var> parts);
Var slice_rows(Var a, std::size_t start, std::size_t count);

/// Row-wise softmax over the last axis. With a mask (same shape, 0/1),
/// masked entries get probability 0; a fully masked row is an error.
Var softmax(Var a, const Tensor* mask = nullptr);

/// Embedding lookup: row `ids[i]` of `table` becomes output row i.
Var gather_rows(Var table, std::span<const std::size_t> ids);

/// Inverted dropout: keeps each entry with probability 1-p and scales kept
/// entries by 1/(1-p). Identity when `training` is false or p == 0.
Var dropout(Var a, double p, std::mt19937_64& rng, bool training);
/// Multiplies by a fixed, caller-supplied mask (no rescaling).
Var apply_mask(Var a, const Tensor& mask);

/// Row r of the result is factor[r] * a[r].
Var scale_rows(Var a, std::span<const double> factors);
/// keep[r] * a[r] + (1 - keep[r]) * b[r] with keep[r] in {0, 1}.
Var blend_rows(std::span<const double> keep, Var a, Var b);

Var sum(Var a);
/// Sum along the last axis: [m x n] -> [m x 1].
Var sum_cols(Var a);

// Time-major sequences: a batch of B sequences padded to T steps is stored as
// a [T*B x d] matrix whose row t*B + b holds step t of sequence b.

/// out[b] = sum_t weights[b, t] * seq[t*B + b]; weights is [B x T].
Var weighted_time_sum(Var weights, Var seq);
/// Masked mean over time; mask is [B x T] with at least one 1 per row.
Var masked_time_mean(Var seq, const Tensor& mask);
/// [T*B x 1] -> [B x T]
Var time_to_batch(Var column, std::size_t steps, std::size_t batch);
/// [B x n] -> [T*B x n], the block repeated once per step.
Var tile_rows(Var a, std::size_t steps);

/// sum_b weights[b] * -log softmax(logits[b])[targets[b]], optionally over
/// the unmasked entries only. Rows with weight 0 are skipped.
Var cross_entropy(Var logits, std::span<const std::size_t> targets,
                  std::span<const double> weights, const Tensor* mask = nullptr);

}  // namespace mcrc
