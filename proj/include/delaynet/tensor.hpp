#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "delaynet/error.hpp"
#include "delaynet/rng.hpp"

namespace delaynet {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl;

/// Backward function of one graph node. Receives the node itself (values and
/// incoming gradient) and accumulates into the parents' gradients. Kept free
/// of self-captures so the graph has no ownership cycles.
using BackwardFn = std::function<void(TensorImpl& self)>;

struct TensorImpl {
  Shape shape;
  std::vector<double> v;  // row-major values
  bool requires_grad = false;
  std::vector<double> g;  // same length as v once touched
  std::vector<std::shared_ptr<TensorImpl>> parents;
  BackwardFn backward_fn;     // empty for leaves
  bool backward_done = false; // guards double-backward from the same root

  void ensure_grad() {
    if (g.size() != v.size()) g.assign(v.size(), 0.0);
  }
};

/// Dense 64-bit real array with optional reverse-mode graph linkage.
/// Value-semantic handle over shared storage: copies alias the same data,
/// which is what the graph needs (ops hold their parents alive).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> values,
                          bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, double mean = 0.0,
                      double stdev = 1.0, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t numel() const { return static_cast<std::int64_t>(impl_->v.size()); }
  std::int64_t dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }

  double* data() { return impl_->v.data(); }
  const double* data() const { return impl_->v.data(); }
  std::vector<double>& values() { return impl_->v; }
  const std::vector<double>& values() const { return impl_->v; }

  /// Single element of a one-element tensor.
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  bool has_grad() const { return impl_->g.size() == impl_->v.size(); }
  const std::vector<double>& grad() const;
  std::vector<double>& grad();
  void zero_grad();

  /// Reverse-mode pass from a one-element tensor. Populates d(this)/d(leaf)
  /// for every requires_grad leaf reachable through the graph. Calling it a
  /// second time on the same root without rebuilding the graph is an error.
  void backward();

  std::shared_ptr<TensorImpl>& impl() { return impl_; }
  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

  /// Graph-building constructor used by the op layer.
  static Tensor make_node(Shape shape, std::vector<double> values,
                          std::vector<std::shared_ptr<TensorImpl>> parents,
                          BackwardFn backward_fn);

  /// Node with preallocated (zeroed) storage, for ops that fill in place.
  static Tensor make_node_uninit(Shape shape,
                                 std::vector<std::shared_ptr<TensorImpl>> parents,
                                 BackwardFn backward_fn);

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
};

/// True when any input carries requires_grad (directly or through its graph).
bool grad_flows(const Tensor& t);

}  // namespace delaynet
