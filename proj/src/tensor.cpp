#include "delaynet/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace delaynet {

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->v.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.values().begin(), t.values().end(), value);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values,
                         bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
    throw config_error("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->v = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::randn(Shape shape, Rng& rng, double mean, double stdev,
                     bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (auto& x : t.values()) x = rng.normal(mean, stdev);
  return t;
}

double Tensor::item() const {
  if (numel() != 1)
    throw config_error("item() on tensor of shape " + shape_str(shape()));
  return impl_->v[0];
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad())
    throw state_error("gradient not populated; run backward() first");
  return impl_->g;
}

std::vector<double>& Tensor::grad() {
  if (!has_grad())
    throw state_error("gradient not populated; run backward() first");
  return impl_->g;
}

void Tensor::zero_grad() {
  impl_->g.assign(impl_->v.size(), 0.0);
}

Tensor Tensor::make_node(Shape shape, std::vector<double> values,
                         std::vector<std::shared_ptr<TensorImpl>> parents,
                         BackwardFn backward_fn) {
  Tensor t = from_data(std::move(shape), std::move(values), false);
  bool needs = false;
  for (const auto& p : parents)
    if (p->requires_grad || p->backward_fn) needs = true;
  if (needs) {
    t.impl_->requires_grad = true;
    t.impl_->parents = std::move(parents);
    t.impl_->backward_fn = std::move(backward_fn);
  }
  return t;
}

Tensor Tensor::make_node_uninit(Shape shape,
                                std::vector<std::shared_ptr<TensorImpl>> parents,
                                BackwardFn backward_fn) {
  return make_node(std::move(shape),
                   std::vector<double>(static_cast<std::size_t>(shape_numel(shape)), 0.0),
                   std::move(parents), std::move(backward_fn));
}

bool grad_flows(const Tensor& t) {
  return t.defined() && (t.requires_grad() || t.impl()->backward_fn);
}

namespace {

// Iterative post-order DFS; returns nodes so that parents come before
// children, i.e. reversed traversal is a valid backward order.
void topo_collect(const std::shared_ptr<TensorImpl>& root,
                  std::vector<TensorImpl*>& order) {
  std::unordered_set<TensorImpl*> seen;
  struct Frame {
    TensorImpl* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  if (seen.insert(root.get()).second) stack.push_back({root.get(), 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      TensorImpl* p = f.node->parents[f.next_parent++].get();
      if (seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }
}

}  // namespace

void Tensor::backward() {
  if (numel() != 1)
    throw config_error("backward() requires a one-element tensor, got shape " +
                       shape_str(shape()));
  if (impl_->backward_done)
    throw state_error("backward() already ran for this graph root");
  impl_->backward_done = true;

  std::vector<TensorImpl*> order;
  topo_collect(impl_, order);

  impl_->ensure_grad();
  impl_->g[0] += 1.0;

  // order has parents before children; walk children first. Gradients are
  // materialized only where they can flow; ops skip parents whose grad
  // buffer is absent.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = *it;
    if (!node->backward_fn) continue;
    node->ensure_grad();
    for (auto& p : node->parents)
      if (p->requires_grad || p->backward_fn) p->ensure_grad();
    node->backward_fn(*node);
  }
}

}  // namespace delaynet
