#pragma once

#include <span>
#include <vector>

#include "ipgdn/tensor.hpp"

namespace ipgdn::hsic {

/// The d x d centering matrix: delta_pq - 1/d. Symmetric, idempotent, rows sum
/// to zero.
ad::Tensor centering_matrix(int d);

/// Gram matrix of the inner-product kernel over the scalar samples of `e`:
/// Ks are the pairwise products e_p * e_q (the outer product e e^T).
ad::Tensor gram_inner(std::span<const double> e);

/// Empirical HSIC with the inner-product kernel, computed by the trace
/// formula (d-1)^{-2} tr(K R S R). Requires d >= 2 and equal lengths.
double hsic_inner(std::span<const double> e_i, std::span<const double> e_j);

/// Sum of hsic_inner over all ordered channel pairs (i != j) of each listed
/// node's row of `h`, where each row splits into `channels` equal blocks.
/// Differentiable with respect to `h`; an empty node list yields 0.
ad::Tensor independence_loss(const ad::Tensor& h, int channels, const std::vector<int>& node_ids);

}  // namespace ipgdn::hsic
