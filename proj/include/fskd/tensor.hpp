#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fskd {

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TensorData {
  std::vector<int> shape;
  std::vector<double> v;  // row-major values
  std::vector<double> g;  // gradient buffer; allocated iff requires_grad
  bool requires_grad = false;

  size_t numel() const { return v.size(); }
  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const { return shape.size() < 2 ? (shape.empty() ? 1 : shape[0]) : shape[1]; }
  double& at(int i, int j) { return v[static_cast<size_t>(i) * static_cast<size_t>(shape[1]) + static_cast<size_t>(j)]; }
  double at(int i, int j) const { return v[static_cast<size_t>(i) * static_cast<size_t>(shape[1]) + static_cast<size_t>(j)]; }
};

using Tensor = std::shared_ptr<TensorData>;

inline size_t shape_numel(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("non-positive dimension in shape");
    n *= static_cast<size_t>(d);
  }
  return n;
}

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

inline Tensor make_tensor(std::vector<int> shape, std::vector<double> values,
                          bool requires_grad) {
  auto t = std::make_shared<TensorData>();
  if (shape_numel(shape) != values.size())
    throw ShapeError("value count does not match shape " + shape_str(shape));
  t->shape = std::move(shape);
  t->v = std::move(values);
  t->requires_grad = requires_grad;
  if (requires_grad) t->g.assign(t->v.size(), 0.0);
  return t;
}

inline Tensor zeros_tensor(std::vector<int> shape, bool requires_grad) {
  size_t n = shape_numel(shape);
  return make_tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

inline Tensor tensor(std::vector<int> shape) { return zeros_tensor(std::move(shape), false); }

inline Tensor tensor(std::vector<int> shape, std::vector<double> values) {
  return make_tensor(std::move(shape), std::move(values), false);
}

// Trainable tensor: requires_grad with a zero-initialized gradient buffer.
inline Tensor param(std::vector<int> shape) { return zeros_tensor(std::move(shape), true); }

inline Tensor param(std::vector<int> shape, std::vector<double> values) {
  return make_tensor(std::move(shape), std::move(values), true);
}

inline Tensor scalar_tensor(double x) { return tensor({1}, {x}); }

inline void zero_grad(const Tensor& t) {
  if (t->requires_grad) t->g.assign(t->v.size(), 0.0);
}

// Value copy with no gradient buffer and no graph history.
inline Tensor detach(const Tensor& t) {
  auto out = std::make_shared<TensorData>();
  out->shape = t->shape;
  out->v = t->v;
  out->requires_grad = false;
  return out;
}

inline Tensor clone(const Tensor& t) {
  auto out = std::make_shared<TensorData>();
  out->shape = t->shape;
  out->v = t->v;
  out->requires_grad = t->requires_grad;
  if (t->requires_grad) out->g.assign(t->v.size(), 0.0);
  return out;
}

inline bool all_finite(const Tensor& t) {
  for (double x : t->v)
    if (!std::isfinite(x)) return false;
  return true;
}

// Reverse-mode tape. Ops append a node when recording is on and at least one
// input carries gradient; backward() replays the tape in reverse insertion
// order, which is a reverse topological order of the recorded graph.
class Graph {
 public:
  enum class Mode { record, no_grad };

  struct Node {
    const char* op;
    std::vector<const TensorData*> inputs;
    const TensorData* output;
    std::function<void()> backward;
  };

  struct Diagnostics {
    long prob_floor_hits = 0;  // log-argument clamps in cross_entropy / kl
  };

  explicit Graph(Mode mode = Mode::record) : mode_(mode) {}

  bool recording() const { return mode_ == Mode::record; }

  void record(const char* op, std::vector<const TensorData*> inputs,
              const TensorData* output, std::function<void()> backward) {
    nodes_.push_back(Node{op, std::move(inputs), output, std::move(backward)});
  }

  void backward(const Tensor& loss) {
    if (backward_done_)
      throw std::logic_error("backward() called twice on the same graph; reset first");
    if (loss->numel() != 1)
      throw ShapeError("backward() requires a scalar loss, got " + shape_str(loss->shape));
    if (!loss->requires_grad)
      throw std::logic_error("backward() on a tensor with no recorded graph");
    loss->g[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
    backward_done_ = true;
  }

  void reset() {
    nodes_.clear();
    backward_done_ = false;
  }

  size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }

  Diagnostics diagnostics;

 private:
  Mode mode_;
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace fskd
