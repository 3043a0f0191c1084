#include "apn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace apn {

const char* dtype_name(DType d) { return d == DType::f32 ? "float32" : "float64"; }

Shape::Shape(std::initializer_list<int> dims) : Shape(std::vector<int>(dims)) {}

Shape::Shape(std::vector<int> dims) : dims_(std::move(dims)) {
  if (dims_.empty() || dims_.size() > 4) {
    throw ShapeError("tensor rank must be 1-4, got " + std::to_string(dims_.size()));
  }
  for (int d : dims_) {
    if (d <= 0) throw ShapeError("tensor dims must be positive: " + str());
  }
}

std::size_t Shape::numel() const {
  std::size_t n = dims_.empty() ? 0 : 1;
  for (int d : dims_) n *= static_cast<std::size_t>(d);
  return n;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << 'x';
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_.numel(), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw ShapeError("buffer of " + std::to_string(data_.size()) + " elements does not match " +
                     shape_.str());
  }
}

template <typename T>
void Tensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape.numel() != data_.size()) {
    throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  return Tensor(std::move(shape), data_);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
Tensor<T> convert(const Tensor<double>& src) {
  std::vector<T> out(src.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(src[i]);
  return Tensor<T>(src.shape(), std::move(out));
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> convert<float>(const Tensor<double>&);
template Tensor<double> convert<double>(const Tensor<double>&);

}  // namespace apn
