#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vts {

// Dense row-major double tensor. Rank is dynamic; most of the codebase uses
// rank 1 (feature vectors), rank 2 (frames, weight matrices) and rank 3
// (channel stacks, kernel banks collapse [O,C,kh,kw] to rank 4).
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, double fill = 0.0);

  static Tensor scalar(double v);
  static Tensor from(std::vector<double> v);
  static Tensor zeros_like(const Tensor& t);

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  double& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

  // rank-2 / rank-3 element access; no bounds checks in release builds
  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * shape[1] + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * shape[1] + c]; }
  double& at(int ch, int r, int c) {
    return data[(static_cast<std::size_t>(ch) * shape[1] + r) * shape[2] + c];
  }
  double at(int ch, int r, int c) const {
    return data[(static_cast<std::size_t>(ch) * shape[1] + r) * shape[2] + c];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool is_scalar() const { return size() == 1; }
  double scalar_value() const { return data[0]; }

  void fill(double v);
  double max_abs() const;
  bool all_finite() const;

  std::string shape_str() const;
};

std::int64_t shape_size(const std::vector<int>& shape);

}  // namespace vts
