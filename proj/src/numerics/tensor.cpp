#include "ftp/numerics/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "ftp/core/errors.hpp"

namespace ftp::numerics {

namespace {

thread_local bool grad_enabled = true;

#ifdef NDEBUG
std::atomic<bool> finite_checks_enabled{false};
#else
std::atomic<bool> finite_checks_enabled{true};
#endif

std::atomic<std::uint64_t> sequence_counter{0};

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

bool GradMode::enabled() { return grad_enabled; }
void GradMode::set_enabled(bool enabled) { grad_enabled = enabled; }

void set_finite_checks(bool enabled) { finite_checks_enabled = enabled; }
bool finite_checks() { return finite_checks_enabled; }

std::uint64_t detail::next_sequence() { return ++sequence_counter; }

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T{0}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from_values(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_values(Shape shape, std::vector<T> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  node->sequence = detail::next_sequence();
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from_values({}, {value}, requires_grad);
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return node_->shape;
}

template <typename T>
std::size_t Tensor<T>::extent(int axis) const {
  const auto& s = shape();
  const int r = static_cast<int>(s.size());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  }
  return s[static_cast<std::size_t>(a)];
}

template <typename T>
std::size_t Tensor<T>::numel() const {
  return shape_numel(shape());
}

template <typename T>
std::span<const T> Tensor<T>::values() const {
  shape();
  return node_->value;
}

template <typename T>
std::span<T> Tensor<T>::mutable_values() {
  shape();
  return node_->value;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return node_ && node_->requires_grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool requires_grad) {
  shape();
  if (!is_leaf()) throw ContractError("requires_grad can only be changed on leaf tensors");
  node_->requires_grad = requires_grad;
}

template <typename T>
bool Tensor<T>::is_leaf() const {
  return node_ && !node_->backward;
}

template <typename T>
bool Tensor<T>::has_grad() const {
  return node_ && !node_->value.empty() && node_->grad.size() == node_->value.size();
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!has_grad()) return {};
  return node_->grad;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  shape();
  return node_->grad_buffer();
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (node_) std::fill(node_->grad.begin(), node_->grad.end(), T{0});
}

namespace {

template <typename T>
std::vector<detail::Node<T>*> reverse_order(detail::Node<T>* root) {
  std::vector<detail::Node<T>*> nodes;
  std::unordered_set<detail::Node<T>*> seen;
  std::vector<detail::Node<T>*> stack{root};
  seen.insert(root);
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    nodes.push_back(n);
    for (auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  // Creation order is a valid execution order, so descending sequence
  // numbers give an anti-topological sweep.
  std::sort(nodes.begin(), nodes.end(),
            [](const auto* a, const auto* b) { return a->sequence > b->sequence; });
  return nodes;
}

}  // namespace

template <typename T>
void Tensor<T>::backward() const {
  if (numel() != 1) {
    throw ContractError("backward() requires a scalar, got shape " + shape_str(shape()));
  }
  if (!node_->requires_grad) throw ContractError("backward() on a tensor that does not require grad");

  auto order = reverse_order(node_.get());
  for (auto* n : order) {
    if (n->backward) n->grad.clear();
  }
  auto& seed = node_->grad_buffer();
  if (node_->backward) {
    seed[0] = T{1};
  } else {
    seed[0] += T{1};
  }
  for (auto* n : order) {
    if (!n->backward) continue;
    if (n->grad.size() == n->value.size() && !n->value.empty()) n->backward(*n);
    n->grad.clear();
    n->grad.shrink_to_fit();
  }
}

template <typename T>
std::vector<RecordEntry> Tensor<T>::computation_record() const {
  shape();
  std::vector<RecordEntry> out;
  if (!node_->requires_grad) return out;
  for (auto* n : reverse_order(node_.get())) {
    if (n->backward) out.push_back({n->op, n->sequence});
  }
  return out;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from_values(shape(), std::vector<T>(values().begin(), values().end()), false);
}

template <typename T>
Tensor<T> Tensor<T>::make_result(Shape shape, std::vector<T> values, const char* op,
                                 std::vector<Tensor> inputs, BackwardFn backward) {
  if (finite_checks()) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(values[i])) {
        throw ContractError(std::string("non-finite value produced by ") + op + " at index " +
                            std::to_string(i));
      }
    }
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->op = op;
  node->sequence = detail::next_sequence();
  bool needs_grad = false;
  if (GradMode::enabled() && backward) {
    for (auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
  }
  if (needs_grad) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node_);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace ftp::numerics
