#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sctc/tensor.hpp"

namespace sctc {

// A learned tensor. `grad` is valid only while `has_grad` is set; the
// optimizer clears it after each step.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
  bool has_grad = false;

  void zero_grad();
  void accumulate_grad(const Tensor& g);
};

enum class Init { kZeros, kXavier, kNormal };

// Owns the parameters of one model. Addresses are stable for the lifetime
// of the store; names are unique.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Shape shape, Init init, std::mt19937_64& rng,
                 double scale = 1.0);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  Parameter& get(const std::string& name);

  std::size_t size() const { return params_.size(); }
  std::size_t num_scalars() const;

  // Insertion order.
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.cbegin(); }
  auto end() const { return params_.cend(); }

  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

class Tape;

// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

// Reverse-mode tape. Nodes are appended in topological order by
// construction, so backward is a single reverse sweep.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var param(Parameter& p);

  // Records an op result. `backward` is dropped if no input needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Tensor value, const std::vector<Var>& inputs, Backward backward);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // Gradient accumulator for an input; valid inside backward closures.
  Tensor& grad(Var v);

  // Seeds d(root)/d(root)=1 for a scalar root and propagates. Parameter
  // leaves receive their gradient via Parameter::accumulate_grad.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool grad_ready = false;
    Backward backward;
    Parameter* param = nullptr;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Differentiable operations. All throw DimensionError on incompatible
// shapes. "rows" means leading axes flattened, last axis kept.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var x, double s);
Var add_scalar(Var x, double s);
Var add_bias(Var x, Var bias);  // x[*, d] + bias[d]
Var matmul(Var a, Var b);       // [m,k] x [k,n]
Var transpose(Var x);           // 2-D only
Var relu(Var x);
Var sigmoid(Var x);
Var abs(Var x);
Var softmax(Var x);  // over the last axis
Var sum(Var x);      // scalar
Var mean(Var x);     // scalar
Var reshape(Var x, Shape shape);
Var concat(const std::vector<Var>& parts);  // along the last axis
Var stack_rows(const std::vector<Var>& parts);  // along the first axis
Var gather_rows(Var x, std::span<const std::size_t> rows);
Var slice(Var x, std::size_t row_begin, std::size_t row_count, std::size_t col_begin,
          std::size_t col_count);  // 2-D block
Var layer_norm(Var x, Var gain, Var shift, double eps = 1e-5);

}  // namespace sctc
