#include "tact/diff/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace tact::diff {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != product(shape_)) {
    throw std::invalid_argument("Tensor: " + std::to_string(values_.size()) +
                                " values do not fill shape " + shape_string(shape_));
  }
}

Tensor Tensor::from_matrix(const Eigen::Ref<const Matrix>& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  t.matrix() = m;
  return t;
}

std::size_t Tensor::rows() const { return shape_.size() < 2 ? 1 : shape_[0]; }

std::size_t Tensor::cols() const {
  if (shape_.empty()) return 1;
  if (shape_.size() == 1) return shape_[0];
  return values_.size() / shape_[0];
}

MatrixMap Tensor::matrix() {
  return MatrixMap(values_.data(), static_cast<Eigen::Index>(rows()),
                   static_cast<Eigen::Index>(cols()));
}

ConstMatrixMap Tensor::matrix() const {
  return ConstMatrixMap(values_.data(), static_cast<Eigen::Index>(rows()),
                        static_cast<Eigen::Index>(cols()));
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t ParamSet::add(std::string name, Tensor tensor) {
  if (find(name)) throw std::invalid_argument("ParamSet: duplicate tensor name " + name);
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(tensor));
  return tensors_.size() - 1;
}

std::optional<std::size_t> ParamSet::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t ParamSet::index(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw std::out_of_range("ParamSet: no tensor named " + std::string(name));
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (std::size_t i = 0; i < size(); ++i) out.add(names_[i], Tensor(tensors_[i].shape()));
  return out;
}

bool ParamSet::same_layout(const ParamSet& other) const {
  if (size() != other.size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    if (names_[i] != other.names_[i] || tensors_[i].shape() != other.tensors_[i].shape()) {
      return false;
    }
  }
  return true;
}

void ParamSet::axpy(double alpha, const ParamSet& other) {
  if (!same_layout(other)) throw std::invalid_argument("ParamSet::axpy: layout mismatch");
  for (std::size_t i = 0; i < size(); ++i) {
    auto dst = tensors_[i].values();
    auto src = other.tensors_[i].values();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += alpha * src[j];
  }
}

void ParamSet::scale(double alpha) {
  for (auto& t : tensors_) {
    for (double& v : t.values()) v *= alpha;
  }
}

double ParamSet::squared_norm() const {
  double s = 0.0;
  for (const auto& t : tensors_) {
    for (double v : t.values()) s += v * v;
  }
  return s;
}

std::size_t ParamSet::coordinate_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

std::optional<std::string> ParamSet::first_non_finite() const {
  for (std::size_t i = 0; i < size(); ++i) {
    for (double v : tensors_[i].values()) {
      if (!std::isfinite(v)) return names_[i];
    }
  }
  return std::nullopt;
}

}  // namespace tact::diff
