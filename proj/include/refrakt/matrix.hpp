#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace refrakt {

/// Dense row-major matrix. Plain storage, no expression templates;
/// heavy lifting lives in kernels.hpp.
template <typename T>
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(int r, int c, T fill = T{})
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  T* row(int i) { return data.data() + static_cast<std::size_t>(i) * cols; }
  const T* row(int i) const {
    return data.data() + static_cast<std::size_t>(i) * cols;
  }

  T& operator()(int i, int j) {
    return data[static_cast<std::size_t>(i) * cols + j];
  }
  T operator()(int i, int j) const {
    return data[static_cast<std::size_t>(i) * cols + j];
  }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  void fill(T v) { data.assign(data.size(), v); }

  bool same_shape(const Matrix& o) const {
    return rows == o.rows && cols == o.cols;
  }

  template <typename U>
  Matrix<U> cast() const {
    Matrix<U> out(rows, cols);
    for (std::size_t i = 0; i < data.size(); ++i)
      out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

}  // namespace refrakt
