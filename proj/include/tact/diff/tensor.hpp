#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tact::diff {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

/// Dense row-major tensor. Rank 0, 1 and 2 are viewed as matrices: a scalar
/// is 1x1, a vector of length n is 1xn, and higher ranks fold trailing axes
/// into columns.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor from_matrix(const Eigen::Ref<const Matrix>& m);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  MatrixMap matrix();
  ConstMatrixMap matrix() const;

  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

/// Insertion-ordered collection of named tensors. Used for model parameters,
/// their gradients and optimizer moments, which all share one layout.
class ParamSet {
 public:
  std::size_t add(std::string name, Tensor tensor);

  std::size_t size() const { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index(std::string_view name) const;

  Tensor& operator[](std::size_t i) { return tensors_[i]; }
  const Tensor& operator[](std::size_t i) const { return tensors_[i]; }
  Tensor& at(std::string_view name) { return tensors_[index(name)]; }
  const Tensor& at(std::string_view name) const { return tensors_[index(name)]; }

  ParamSet zeros_like() const;
  bool same_layout(const ParamSet& other) const;

  /// this += alpha * other
  void axpy(double alpha, const ParamSet& other);
  void scale(double alpha);
  double squared_norm() const;
  std::size_t coordinate_count() const;
  /// Name of the first tensor holding a NaN or infinity, if any.
  std::optional<std::string> first_non_finite() const;

  bool operator==(const ParamSet& other) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

}  // namespace tact::diff
