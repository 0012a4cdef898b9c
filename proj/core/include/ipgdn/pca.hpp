#pragma once

#include "ipgdn/tensor.hpp"

namespace ipgdn::eval {

/// Projects rows onto the top-2 principal directions of the mean-centered
/// data. Sign convention: the largest-magnitude component of each direction
/// is positive (first such index wins ties), so output is deterministic.
/// Requires n >= 2; data with fewer than 2 columns is zero-padded.
ad::Tensor pca_2d(const ad::Tensor& embeddings);

}  // namespace ipgdn::eval
