#pragma once

#include <Eigen/Core>

#include <functional>
#include <initializer_list>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cvt {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Index shape_numel(const Shape& s) {
  Index n = 1;
  for (Index d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

inline Shape shape_strides(const Shape& s) {
  Shape st(s.size(), 1);
  for (int d = static_cast<int>(s.size()) - 2; d >= 0; --d) st[d] = st[d + 1] * s[d + 1];
  return st;
}

// One node of the computation graph. Storage is flat, row-major.
// grad stays empty until backward first reaches the node.
template <typename Scalar>
struct TensorNode {
  Shape shape;
  ArrayX<Scalar> data;
  ArrayX<Scalar> grad;
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() == 0) grad = ArrayX<Scalar>::Zero(data.size());
  }
};

// Cheap shared handle to a TensorNode.
template <typename Scalar>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = std::make_shared<TensorNode<Scalar>>();
    n->data = ArrayX<Scalar>::Zero(shape_numel(shape));
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor full(Shape shape, Scalar value, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    t.array().setConstant(value);
    return t;
  }

  static Tensor from_data(Shape shape, std::vector<Scalar> values, bool requires_grad = false) {
    if (static_cast<Index>(values.size()) != shape_numel(shape))
      throw std::invalid_argument("Tensor::from_data: " + std::to_string(values.size()) +
                                  " values for shape " + shape_str(shape));
    Tensor t = zeros(std::move(shape), requires_grad);
    for (Index i = 0; i < t.size(); ++i) t.array()(i) = values[static_cast<std::size_t>(i)];
    return t;
  }

  static Tensor scalar(Scalar value) {
    Tensor t = zeros({1});
    t.array()(0) = value;
    return t;
  }

  bool defined() const { return static_cast<bool>(n_); }
  const Shape& shape() const { return n_->shape; }
  Index ndim() const { return static_cast<Index>(n_->shape.size()); }
  Index dim(int i) const {
    if (i < 0) i += static_cast<int>(n_->shape.size());
    return n_->shape[static_cast<std::size_t>(i)];
  }
  Index size() const { return n_->data.size(); }

  Scalar* data() { return n_->data.data(); }
  const Scalar* data() const { return n_->data.data(); }
  ArrayX<Scalar>& array() { return n_->data; }
  const ArrayX<Scalar>& array() const { return n_->data; }

  Scalar value() const {
    if (size() != 1) throw std::invalid_argument("Tensor::value: tensor has " +
                                                 std::to_string(size()) + " elements");
    return n_->data(0);
  }

  Scalar at(std::initializer_list<Index> idx) const {
    const Shape st = shape_strides(n_->shape);
    Index off = 0;
    std::size_t d = 0;
    for (Index i : idx) off += i * st[d++];
    return n_->data(off);
  }

  bool requires_grad() const { return n_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    n_->requires_grad = v;
    return *this;
  }

  bool has_grad() const { return n_->grad.size() != 0; }
  const ArrayX<Scalar>& grad() const { return n_->grad; }
  void zero_grad() {
    if (has_grad()) n_->grad.setZero();
  }
  void clear_grad() { n_->grad.resize(0); }

  const std::shared_ptr<TensorNode<Scalar>>& node() const { return n_; }

 private:
  explicit Tensor(std::shared_ptr<TensorNode<Scalar>> n) : n_(std::move(n)) {}
  std::shared_ptr<TensorNode<Scalar>> n_;
};

// Ordered record of executed ops. Ops are appended in forward execution
// order, so the reverse walk visits each node after all of its consumers.
// A tape activates itself for the constructing thread (tapes nest) and is
// confined to that thread.
template <typename Scalar>
class Tape {
 public:
  Tape() : prev_(active_ref()) { active_ref() = this; }
  ~Tape() { active_ref() = prev_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_ref(); }

  void record(std::function<void()> backward_step) { entries_.push_back(std::move(backward_step)); }
  std::size_t size() const { return entries_.size(); }

  // Seeds d(root)/d(root) = 1 and replays the recorded steps newest-first.
  // Entries are consumed; a tape drives at most one backward pass.
  void backward(const Tensor<Scalar>& root) {
    if (root.size() != 1)
      throw std::invalid_argument("Tape::backward: root must be scalar, got shape " +
                                  shape_str(root.shape()));
    root.node()->ensure_grad();
    root.node()->grad(0) = Scalar(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
    entries_.clear();
  }

 private:
  static Tape*& active_ref() {
    thread_local Tape* active = nullptr;
    return active;
  }
  std::vector<std::function<void()>> entries_;
  Tape* prev_;
};

namespace detail {

template <typename Scalar>
inline bool taping() {
  return Tape<Scalar>::active() != nullptr;
}

template <typename Scalar, typename... Ts>
inline bool track_grad(const Ts&... ts) {
  return taping<Scalar>() && (... || ts.requires_grad());
}

template <typename Scalar>
inline void record(std::function<void()> fn) {
  Tape<Scalar>::active()->record(std::move(fn));
}

}  // namespace detail

}  // namespace cvt
