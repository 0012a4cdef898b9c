#pragma once

#include <filesystem>
#include <vector>

#include "ipgdn/tensor.hpp"

namespace ipgdn {

/// Writes a class-colored scatter plot of 2-D coordinates as standalone SVG:
/// one <circle> per row (carrying the untransformed coordinates in data-x /
/// data-y attributes) plus a class legend. Label -1 renders as "unlabeled".
void write_scatter_svg(const std::filesystem::path& path, const ad::Tensor& coords,
                       const std::vector<int>& labels, int num_classes);

}  // namespace ipgdn
