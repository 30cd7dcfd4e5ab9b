#include "mse2d/pca.hpp"

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace mse2d {

template <class S>
PcaBasis<S> pca_fit(const Tensor<S>& batch, int k) {
  if (batch.rank() != 2) throw std::invalid_argument("pca_fit: expected rank-2 batch");
  const int n = batch.rows();
  const int d = batch.cols();
  if (n < 2) throw std::invalid_argument("pca_fit: need at least 2 rows, got " + std::to_string(n));
  const int k_max = std::min(n - 1, d);
  if (k < 1 || k > k_max) {
    throw std::invalid_argument("pca_fit: k=" + std::to_string(k) + " out of range [1," +
                                std::to_string(k_max) + "] for a " + std::to_string(n) + "x" +
                                std::to_string(d) + " batch");
  }

  Eigen::MatrixXd x(n, d);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < d; ++c) x(r, c) = static_cast<double>(batch.at(r, c));
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;

  if (x.squaredNorm() <= 1e-24 * static_cast<double>(n) * static_cast<double>(d)) {
    throw std::runtime_error("pca_fit: degenerate batch (zero variance)");
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
  Eigen::MatrixXd v = svd.matrixV().leftCols(k);

  // sign convention: largest-magnitude entry of each component positive
  for (int c = 0; c < k; ++c) {
    int arg = 0;
    double best = 0.0;
    for (int r = 0; r < d; ++r) {
      const double a = std::abs(v(r, c));
      if (a > best) {
        best = a;
        arg = r;
      }
    }
    if (v(arg, c) < 0.0) v.col(c) = -v.col(c);
  }

  PcaBasis<S> basis;
  basis.mean = Tensor<S>::zeros(1, d);
  for (int c = 0; c < d; ++c) basis.mean.data[static_cast<size_t>(c)] = static_cast<S>(mean(c));
  basis.components = Tensor<S>::zeros(d, k);
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < k; ++c) basis.components.at(r, c) = static_cast<S>(v(r, c));
  }
  return basis;
}

template <class S>
Tensor<S> pca_project(const Tensor<S>& x, const PcaBasis<S>& basis) {
  if (x.rank() != 2 || x.cols() != basis.mean.cols()) {
    throw std::invalid_argument("pca_project: dims mismatch");
  }
  const int n = x.rows();
  const int d = x.cols();
  const int k = basis.components.cols();
  Tensor<S> out = Tensor<S>::zeros(n, k);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < k; ++c) {
      double acc = 0.0;
      for (int j = 0; j < d; ++j) {
        acc += (static_cast<double>(x.at(r, j)) - static_cast<double>(basis.mean.data[static_cast<size_t>(j)])) *
               static_cast<double>(basis.components.at(j, c));
      }
      out.at(r, c) = static_cast<S>(acc);
    }
  }
  return out;
}

template PcaBasis<float> pca_fit<float>(const Tensor<float>&, int);
template PcaBasis<double> pca_fit<double>(const Tensor<double>&, int);
template Tensor<float> pca_project<float>(const Tensor<float>&, const PcaBasis<float>&);
template Tensor<double> pca_project<double>(const Tensor<double>&, const PcaBasis<double>&);

}  // namespace mse2d
