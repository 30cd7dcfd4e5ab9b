#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace mse2d {

// Dense row-major tensor. Rank is dynamic but everything the encoder and
// losses build is rank 1 or 2; scalars are stored as 1x1.
template <class S>
struct Tensor {
  std::vector<int> dims;
  std::vector<S> data;

  Tensor() = default;

  Tensor(std::vector<int> d, std::vector<S> values)
      : dims(std::move(d)), data(std::move(values)) {
    if (numel_of(dims) != data.size()) {
      throw std::invalid_argument("Tensor: dims/data size mismatch");
    }
  }

  static Tensor zeros(int rows, int cols) {
    return Tensor({rows, cols}, std::vector<S>(static_cast<size_t>(rows) * cols, S(0)));
  }

  static Tensor scalar(S v) { return Tensor({1, 1}, {v}); }

  static Tensor row(std::vector<S> values) {
    const int n = static_cast<int>(values.size());
    return Tensor({1, n}, std::move(values));
  }

  static Tensor from_rows(std::initializer_list<std::initializer_list<S>> rows_in) {
    std::vector<S> flat;
    int cols = -1;
    int rows = 0;
    for (const auto& r : rows_in) {
      if (cols < 0) cols = static_cast<int>(r.size());
      if (static_cast<int>(r.size()) != cols) {
        throw std::invalid_argument("Tensor::from_rows: ragged rows");
      }
      flat.insert(flat.end(), r.begin(), r.end());
      ++rows;
    }
    return Tensor({rows, cols < 0 ? 0 : cols}, std::move(flat));
  }

  size_t numel() const { return data.size(); }
  int rank() const { return static_cast<int>(dims.size()); }

  int rows() const {
    require_rank2("rows");
    return dims[0];
  }
  int cols() const {
    require_rank2("cols");
    return dims[1];
  }

  S& at(int r, int c) {
    require_rank2("at");
    return data[static_cast<size_t>(r) * dims[1] + c];
  }
  S at(int r, int c) const {
    require_rank2("at");
    return data[static_cast<size_t>(r) * dims[1] + c];
  }

  bool same_dims(const Tensor& other) const { return dims == other.dims; }

  bool is_scalar() const { return numel() == 1; }

  S scalar_value() const {
    if (!is_scalar()) throw std::runtime_error("Tensor: not a scalar");
    return data[0];
  }

  bool all_finite() const {
    for (S v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  void fill(S v) { std::fill(data.begin(), data.end(), v); }

  static size_t numel_of(const std::vector<int>& d) {
    size_t n = 1;
    for (int x : d) {
      if (x <= 0) throw std::invalid_argument("Tensor: non-positive dim");
      n *= static_cast<size_t>(x);
    }
    return n;
  }

  std::string dims_str() const {
    std::string s = "[";
    for (size_t i = 0; i < dims.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(dims[i]);
    }
    return s + "]";
  }

 private:
  void require_rank2(const char* who) const {
    if (dims.size() != 2) {
      throw std::runtime_error(std::string("Tensor::") + who + ": expected rank-2 tensor, got " + dims_str());
    }
  }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace mse2d
