#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ftp::numerics {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() {
  return DType::f32;
}
template <>
constexpr DType dtype_of<double>() {
  return DType::f64;
}

// Global switch for graph recording. Forward passes executed while disabled
// produce plain values that never participate in backward().
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool enabled);
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// When enabled every op verifies its output is finite. Defaults to on in
// debug builds.
void set_finite_checks(bool enabled);
bool finite_checks();

namespace detail {

std::uint64_t next_sequence();

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::uint64_t sequence = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<T>& grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), T{0});
    return grad;
  }
};

}  // namespace detail

struct RecordEntry {
  const char* op;
  std::uint64_t sequence;
};

// Dense row-major array participating in reverse-mode differentiation.
//
// A Tensor is a shared handle: copies alias the same storage, which is how
// tied weights are expressed. Values are immutable after creation except
// through mutable_values(), reserved for optimizer updates and tests.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;
  using BackwardFn = std::function<void(detail::Node<T>&)>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  // Negative axes count from the end.
  std::size_t extent(int axis) const;
  std::size_t numel() const;

  std::span<const T> values() const;
  std::span<T> mutable_values();
  T item() const;
  T value_at(std::size_t flat_index) const { return values()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool requires_grad);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const T> grad() const;
  std::span<T> mutable_grad();
  void zero_grad();

  // Reverse sweep from this scalar. Leaf gradients accumulate across calls.
  void backward() const;
  // Operations reachable from this tensor, in the order backward() visits them.
  std::vector<RecordEntry> computation_record() const;

  // Copy of the values with no graph history.
  Tensor detach() const;
  const void* storage_id() const { return node_.get(); }

  // Used by op implementations to emit a result node.
  static Tensor make_result(Shape shape, std::vector<T> values, const char* op,
                            std::vector<Tensor> inputs, BackwardFn backward);
  const NodePtr& node() const { return node_; }

 private:
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}
  NodePtr node_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace ftp::numerics
