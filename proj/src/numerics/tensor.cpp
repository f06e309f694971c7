#include "pltts/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pltts {

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

namespace {

struct TapeState {
  std::vector<std::weak_ptr<detail::Node>> nodes;
  std::uint64_t next_seq = 1;
  std::size_t watermark = 4096;
  bool recording = true;
};

TapeState& tape_state() {
  thread_local TapeState state;
  return state;
}

void check_shape(const Shape& shape, std::size_t size) {
  for (auto e : shape)
    if (e == 0) throw ShapeError("tensor: zero extent in shape " + shape_str(shape));
  if (shape_numel(shape) != size)
    throw ShapeError("tensor: shape " + shape_str(shape) + " does not match " +
                     std::to_string(size) + " values");
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  check_shape(shape, data.size());
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw std::logic_error("tensor: use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size())
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[axis];
}

std::span<const double> Tensor::data() const {
  if (!node_) throw std::logic_error("tensor: use of undefined tensor");
  return node_->data;
}

std::span<double> Tensor::mutable_data() {
  if (!node_) throw std::logic_error("tensor: use of undefined tensor");
  if (node_->seq != 0) throw std::logic_error("tensor: op output '" + node_->op + "' is immutable");
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("tensor: item() on shape " + shape_str(shape()));
  return node_->data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  const auto& s = shape();
  if (s.size() != 2) throw ShapeError("tensor: 2-D access on shape " + shape_str(s));
  return node_->data[row * s[1] + col];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!node_) throw std::logic_error("tensor: use of undefined tensor");
  node_->requires_grad = flag;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!node_) throw std::logic_error("tensor: use of undefined tensor");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

const std::string& Tensor::op() const { return node_->op; }

std::uint64_t Tensor::tape_id() const { return node_ ? node_->seq : 0; }

Tensor Tensor::detach() const { return Tensor(shape(), node_->data, false); }

bool grad_enabled() { return tape_state().recording; }

NoGradGuard::NoGradGuard() : previous_(tape_state().recording) { tape_state().recording = false; }

NoGradGuard::~NoGradGuard() { tape_state().recording = previous_; }

namespace tape {

void reset() {
  auto& st = tape_state();
  st.nodes.clear();
  st.watermark = 4096;
}

std::size_t size() { return tape_state().nodes.size(); }

}  // namespace tape

Tensor make_op_result(const std::string& op, Shape shape, std::vector<double> data,
                      const std::vector<Tensor>& inputs,
                      std::function<void(detail::Node&)> backward_fn) {
  for (double v : data)
    if (!std::isfinite(v)) throw NumericError("non-finite value produced by op '" + op + "'");
  check_shape(shape, data.size());

  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;

  auto& st = tape_state();
  bool needs_grad = false;
  if (st.recording)
    for (const auto& t : inputs) needs_grad = needs_grad || t.requires_grad();
  if (!needs_grad) return Tensor(std::move(node));

  node->requires_grad = true;
  node->inputs.reserve(inputs.size());
  for (const auto& t : inputs) node->inputs.push_back(t.node());
  node->backward = std::move(backward_fn);
  node->seq = st.next_seq++;

  if (st.nodes.size() >= st.watermark) {
    std::erase_if(st.nodes, [](const auto& w) { return w.expired(); });
    st.watermark = std::max<std::size_t>(4096, st.nodes.size() * 2);
  }
  st.nodes.push_back(node);
  return Tensor(std::move(node));
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw std::logic_error("backward: undefined loss");
  if (loss.numel() != 1)
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
  if (!loss.requires_grad()) throw std::logic_error("backward: loss does not depend on any parameter");

  auto& root = *loss.node();
  if (root.seq == 0) {  // a leaf scalar
    root.ensure_grad();
    root.grad[0] += 1.0;
    return;
  }

  auto& st = tape_state();
  std::vector<std::shared_ptr<detail::Node>> live;
  live.reserve(st.nodes.size());
  for (const auto& w : st.nodes) {
    auto n = w.lock();
    if (n && n->seq <= root.seq) live.push_back(std::move(n));
  }
  for (auto& n : live) n->grad.clear();

  root.ensure_grad();
  root.grad[0] = 1.0;
  for (auto it = live.rbegin(); it != live.rend(); ++it) {
    auto& n = **it;
    if (n.grad.empty() || !n.backward) continue;
    n.backward(n);
  }
}

}  // namespace pltts
