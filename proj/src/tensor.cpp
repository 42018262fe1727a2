#include "uta/nn/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace uta::nn {

Tensor::Tensor(std::vector<int> shape, double fill) : shape_(std::move(shape)) {
  for (int d : shape_)
    if (d < 0) throw ShapeError("Tensor: negative dimension");
  data_.assign(shape_count(shape_), fill);
}

Tensor Tensor::from_image(const Image& img) {
  Tensor t({1, 1, img.height(), img.width()});
  std::copy(img.data(), img.data() + img.size(), t.data());
  return t;
}

Image Tensor::to_image() const {
  std::vector<int> spatial;
  for (int d : shape_)
    if (d != 1) spatial.push_back(d);
  if (spatial.size() > 2) throw ShapeError("Tensor::to_image: more than two non-unit dims");
  while (spatial.size() < 2) spatial.insert(spatial.begin(), 1);
  Image img(spatial[0], spatial[1]);
  std::copy(data_.begin(), data_.end(), img.data());
  return img;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << ')';
  return os.str();
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::min_value() const {
  return data_.empty() ? 0.0 : *std::min_element(data_.begin(), data_.end());
}

double Tensor::max_value() const {
  return data_.empty() ? 0.0 : *std::max_element(data_.begin(), data_.end());
}

std::vector<size_t> Tensor::strides() const {
  std::vector<size_t> st(shape_.size(), 1);
  for (int i = static_cast<int>(shape_.size()) - 2; i >= 0; --i)
    st[i] = st[i + 1] * static_cast<size_t>(shape_[i + 1]);
  return st;
}

Tensor& Node::ensure_grad() {
  if (!grad_ready) {
    grad = Tensor(value.shape());
    grad_ready = true;
  }
  return grad;
}

namespace {
std::atomic<std::uint64_t> g_node_counter{0};
thread_local bool g_grad_enabled = true;
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Var::Var(Tensor value, bool requires_grad) {
  node_ = std::make_shared<Node>();
  node_->value = std::move(value);
  node_->requires_grad = requires_grad && g_grad_enabled;
  node_->order = g_node_counter.fetch_add(1);
}

Var Var::wrap(NodePtr n) {
  Var v;
  v.node_ = std::move(n);
  return v;
}

void Var::zero_grad() {
  if (node_) {
    node_->grad = Tensor();
    node_->grad_ready = false;
  }
}

Var make_op(Tensor value, std::vector<NodePtr> parents, std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->order = g_node_counter.fetch_add(1);
  if (g_grad_enabled) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || (p && p->requires_grad);
    if (needs) {
      node->requires_grad = true;
      node->parents = std::move(parents);
      node->backward_fn = std::move(backward_fn);
    }
  }
  return Var::wrap(node);
}

void backward(const Var& root) {
  if (!root.defined()) throw Error("backward: undefined root");
  if (root.value().size() != 1) throw Error("backward: root must be scalar");

  // Collect the reachable grad-requiring subgraph.
  std::vector<NodePtr> order;
  std::unordered_set<Node*> seen;
  std::vector<NodePtr> stack{root.node()};
  while (!stack.empty()) {
    NodePtr n = stack.back();
    stack.pop_back();
    if (!n || !n->requires_grad || seen.count(n.get())) continue;
    seen.insert(n.get());
    order.push_back(n);
    for (const auto& p : n->parents) stack.push_back(p);
  }
  // Creation order is a topological order: children are newer than parents.
  std::sort(order.begin(), order.end(),
            [](const NodePtr& a, const NodePtr& b) { return a->order > b->order; });

  root.node()->ensure_grad()[0] = 1.0;
  for (const NodePtr& n : order) {
    if (!n->grad_ready || !n->backward_fn) continue;
    n->backward_fn(*n);
  }
}

}  // namespace uta::nn
