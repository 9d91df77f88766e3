#include "tsg/tensor.hpp"

#include <cstdio>
#include <unordered_set>

#include "tsg/errors.hpp"

namespace tsg {

void warn(WarningLog* log, const std::string& msg) {
  if (log) {
    log->add(msg);
  } else {
    std::fprintf(stderr, "warning: %s\n", msg.c_str());
  }
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

namespace {
thread_local bool g_grad_enabled = true;

NodePtr make_node(Shape s, bool requires_grad) {
  auto n = std::make_shared<Node>();
  int64_t count = shape_numel(s);
  for (int64_t d : s) {
    if (d <= 0)
      throw DimensionError("tensor dimensions must be positive, got " + shape_str(s));
  }
  n->shape = std::move(s);
  n->value.assign(static_cast<size_t>(count), 0.0);
  n->requires_grad = requires_grad;
  n->ensure_grad();
  return n;
}
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor Tensor::zeros(Shape s, bool requires_grad) {
  return Tensor(make_node(std::move(s), requires_grad));
}

Tensor Tensor::full(Shape s, double v) {
  Tensor t(make_node(std::move(s), false));
  for (double& x : t.node_->value) x = v;
  return t;
}

Tensor Tensor::from(Shape s, std::vector<double> data, bool requires_grad) {
  if (shape_numel(s) != static_cast<int64_t>(data.size()))
    throw DimensionError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(s));
  auto n = make_node(std::move(s), requires_grad);
  n->value = std::move(data);
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) { return full({1}, v); }

Tensor Tensor::randn(Shape s, Rng& rng, double stddev, bool requires_grad) {
  Tensor t = zeros(std::move(s), requires_grad);
  for (double& x : t.node_->value) x = stddev * rng.normal();
  return t;
}

double Tensor::item() const {
  if (numel() != 1)
    throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

void Tensor::zero_grad() {
  if (node_ && node_->requires_grad)
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw ContractError("backward requires a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<null>")));
  if (!loss.requires_grad()) return;  // constant loss: nothing reachable

  // Iterative post-order DFS over requires_grad nodes.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior grads are per-pass scratch; leaf grads persist and accumulate.
  for (Node* n : order) {
    if (n->is_leaf())
      n->ensure_grad();
    else if (n->grad.size() != n->value.size())
      n->grad.assign(n->value.size(), 0.0);
    else
      std::fill(n->grad.begin(), n->grad.end(), 0.0);
  }
  loss.node()->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop();
  }
}

}  // namespace tsg
