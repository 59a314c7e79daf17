#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

namespace paramask::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense 64-bit tensor. Values are filled at op creation (eager forward);
// gradients are filled by Tape::backward and accumulate across calls until
// Tape::zero_grad.
struct Tensor {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;

  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
};

// Handle into a Tape. Only meaningful together with the tape that issued it.
struct Var {
  std::uint32_t id = 0xffffffffu;
  bool valid() const { return id != 0xffffffffu; }
};

// Reverse-mode tape over a closed set of primitives. Ops run eagerly and
// record a backward rule; node order is creation order, which is topological
// by construction. A tape is confined to one thread; independent tapes may
// run concurrently.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // ---- leaves ----
  Var input(Shape shape, std::vector<double> values);
  Var input_scalar(double v);
  Var zeros(Shape shape);

  // ---- primitives ----
  Var matmul(Var a, Var b);                      // [m,k]x[k,n] -> [m,n]
  Var transpose(Var a);                          // [m,n] -> [n,m]
  Var add(Var a, Var b);                         // same shape
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);                         // elementwise
  Var add_rowvec(Var m, Var row);                // [n,c] + [c] broadcast over rows
  Var scale(Var a, double c);
  Var add_const(Var a, double c);
  Var sigmoid(Var a);
  Var selu(Var a);
  Var relu(Var a);                               // max(x, 0), the hinge
  Var abs(Var a);
  Var softmax_rows(Var a);                       // [n,c], softmax over each row
  Var layer_norm_rows(Var a, Var gain, Var bias);  // per-row LN, eps 1e-5
  Var maxpool(Var a, int axis);                  // [n,c] -> axis 0: [c], axis 1: [n]
  Var sum(Var a);                                // -> scalar
  Var mean(Var a);                               // -> scalar
  Var row_mean(Var a);                           // [n,c] -> [c], mean over rows
  Var scale_rows(Var m, Var v);                  // row i of m times v[i]
  Var gather_rows(Var table, std::vector<std::size_t> idx);
  Var concat_rows(const std::vector<Var>& parts);
  Var slice_rows(Var a, std::size_t start, std::size_t len);
  Var slice_cols(Var a, std::size_t start, std::size_t len);
  Var concat_cols(const std::vector<Var>& parts);
  Var reshape(Var a, Shape shape);               // same numel
  Var cosine(Var u, Var v);                      // -> scalar; zero norm -> 0
  Var bce_sum(Var probs, Var targets);           // -> scalar, probs clamped at 1e-12

  // Hard threshold with straight-through backward: forward z_i = 1 iff
  // a_i > threshold (strict), backward passes the gradient to a unchanged.
  // Entries of a must lie in [0,1].
  Var threshold_st(Var a, double threshold);

  // ---- engine ----
  // loss must be scalar (numel 1). Accumulates into existing gradients.
  void backward(Var loss);
  void zero_grad();

  const Tensor& at(Var v) const;
  double scalar(Var v) const;
  const std::vector<double>& value(Var v) const { return at(v).value; }
  const std::vector<double>& grad(Var v) const { return at(v).grad; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    std::function<void(Tape&)> back;
  };
  // deque, not vector: ops bind references to their operands and then emit
  // the output tensor, so growth must never invalidate existing elements
  std::deque<Tensor> tensors_;
  std::vector<Node> nodes_;
  // scratch adjoints for one backward pass; folded into Tensor::grad at the
  // end so that repeated backward calls accumulate additively
  std::vector<std::vector<double>> adj_;

  Tensor& mut(Var v) { return tensors_[v.id]; }
  std::vector<double>& adj(Var v) { return adj_[v.id]; }
  Var emit(Shape shape);
  void record(std::function<void(Tape&)> back);
  void check_same_shape(const char* op, Var a, Var b) const;
  void check_matrix(const char* op, Var a) const;
};

}  // namespace paramask::ad
