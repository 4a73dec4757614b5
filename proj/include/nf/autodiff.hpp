#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "nf/tensor.hpp"

namespace nf {

// A trainable tensor. Models own Parameters; tapes reference them.
struct Parameter {
  Tensor value;
  Parameter() = default;
  explicit Parameter(Tensor v) : value(std::move(v)) {}
};

namespace ad {

class Tape;

struct Node {
  Tensor value;
  Tensor grad;  // allocated during backward
  bool requires_grad = false;
  bool visited = false;
  const Parameter* param = nullptr;  // set for parameter leaves
  std::vector<Node*> parents;
  // Pulls this node's grad into parents' grads.
  std::function<void(Node&)> backprop;

  void accumulate(const Tensor& g);
};

// Handle to a node owned by a Tape.
class Value {
 public:
  Value() = default;
  Value(Tape* tape, Node* node) : tape_(tape), node_(node) {}

  const Tensor& val() const { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  bool valid() const { return node_ != nullptr; }

  Tape* tape() const { return tape_; }
  Node* node() const { return node_; }

 private:
  Tape* tape_ = nullptr;
  Node* node_ = nullptr;
};

using GradMap = std::unordered_map<const Parameter*, Tensor>;

// Ordered record of operations; insertion order is topological.
class Tape {
 public:
  Value constant(Tensor v);
  Value leaf(const Parameter& p);     // gradient collected into GradMap
  Value variable(Tensor v);           // gradient kept on the node
  Value record(Tensor value, std::vector<Node*> parents,
               std::function<void(Node&)> backprop);

  // Reverse sweep from a scalar output. Returns d(output)/d(param) for
  // every parameter leaf reachable from output.
  GradMap backward(const Value& output);

  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::unique_ptr<Node>> nodes_;
};

// ---- primitive operations ----
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value div(const Value& a, const Value& b);
Value neg(const Value& a);
Value scale(const Value& a, double s);
Value add_const(const Value& a, double c);

// x: n x in, W: out x in, b: 1 x out (b may be invalid for no bias)
Value affine(const Value& x, const Value& W, const Value& b);
Value matmul(const Value& a, const Value& b);

Value tanh(const Value& a);
Value sigmoid(const Value& a);
Value elu(const Value& a);
Value exp(const Value& a);
Value log(const Value& a);
Value sin(const Value& a);
Value softplus(const Value& a);
Value square(const Value& a);
Value abs(const Value& a);

Value sum_all(const Value& a);    // 1x1
Value mean_all(const Value& a);   // 1x1
Value sum_cols(const Value& a);   // n x m -> n x 1
Value logsumexp_cols(const Value& a);  // n x K -> n x 1

Value transpose(const Value& a);

Value bcast_cols(const Value& col, std::size_t m);  // n x 1 -> n x m
Value bcast_rows(const Value& row, std::size_t n);  // 1 x m -> n x m
Value concat_cols(const Value& a, const Value& b);
Value select_cols(const Value& a, const std::vector<std::size_t>& idx);
Value select_row(const Value& a, std::size_t i);  // n x m -> 1 x m
// Inverse of two select_cols calls: place XA at columns idxA and XB at idxB.
Value merge_cols(const std::vector<std::size_t>& idxA, const Value& XA,
                 const std::vector<std::size_t>& idxB, const Value& XB,
                 std::size_t total_cols);

}  // namespace ad
}  // namespace nf
