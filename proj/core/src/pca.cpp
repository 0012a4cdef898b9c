#include "ipgdn/pca.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace ipgdn::eval {

ad::Tensor pca_2d(const ad::Tensor& embeddings) {
  const int n = embeddings.rows();
  const int d = embeddings.cols();
  if (n < 2) throw ValidationError("pca_2d: need at least 2 rows");

  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> x(embeddings.value().data(), n, d);

  RowMat centered = x;
  const Eigen::RowVectorXd mean = x.colwise().mean();
  centered.rowwise() -= mean;

  // Right singular directions via the d x d covariance eigendecomposition.
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw Error("pca_2d: eigendecomposition failed");

  ad::Tensor out(n, 2);
  auto ov = out.mutable_value();
  const int components = std::min(2, d);
  for (int c = 0; c < components; ++c) {
    // Eigenvalues come back ascending; take from the top.
    Eigen::VectorXd dir = solver.eigenvectors().col(d - 1 - c);
    int peak = 0;
    for (int i = 1; i < d; ++i)
      if (std::abs(dir(i)) > std::abs(dir(peak))) peak = i;
    if (dir(peak) < 0.0) dir = -dir;
    const Eigen::VectorXd proj = centered * dir;
    for (int r = 0; r < n; ++r) ov[static_cast<std::size_t>(r) * 2 + c] = proj(r);
  }
  return out;
}

}  // namespace ipgdn::eval
