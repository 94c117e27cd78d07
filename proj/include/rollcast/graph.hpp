#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "rollcast/tensor.hpp"

namespace rollcast {

/// Handle to a node in a Graph.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Raised when recorded operations see inconsistent shapes; the message names
/// the offending node.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Reverse-mode automatic differentiation over a recorded computation
/// (define-by-run tape). Values are immutable once created; the backward pass
/// visits nodes exactly once in reverse creation order, which is a valid
/// reverse topological order by construction.
class Graph {
 public:
  enum class Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    AddConst,
    Scale,
    Matmul,
    AddRowvec,
    MulRowvec,
    Tanh,
    Gelu,
    Relu,
    Sqrt,
    RowwiseSum,
    SumAll,
    MeanAll,
    ConcatRows,
    ConcatCols,
    SliceRows,
    SliceCols,
    Reshape,
    Transpose,
    SoftmaxRows,
    LayerNormRows,
    Gather,
    StopGradient,
  };

  // ---- leaves -----------------------------------------------------------
  Var input(const std::string& name, Tensor value);
  Var param(const std::string& name, Tensor value);
  Var constant(Tensor value);

  // ---- recorded primitives ----------------------------------------------
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var add_const(Var a, double c);
  Var scale(Var a, double c);
  /// [M,K] x [K,N] -> [M,N]
  Var matmul(Var a, Var b);
  /// [M,N] + [N] broadcast over rows
  Var add_rowvec(Var a, Var v);
  /// [M,N] * [N] broadcast over rows
  Var mul_rowvec(Var a, Var v);
  Var tanh_(Var a);
  Var gelu(Var a);
  Var relu(Var a);
  Var sqrt_(Var a);
  /// [R,C] -> [R], sum of each row
  Var rowwise_sum(Var a);
  Var sum_all(Var a);
  Var mean_all(Var a);
  Var concat_rows(Var a, Var b);
  Var concat_cols(Var a, Var b);
  Var slice_rows(Var a, std::size_t r0, std::size_t r1);
  Var slice_cols(Var a, std::size_t c0, std::size_t c1);
  Var reshape(Var a, std::vector<std::size_t> shape);
  Var transpose(Var a);
  Var softmax_rows(Var a);
  /// Per-row layer norm with learned gain/bias of width C; eps fixed 1e-5.
  Var layernorm_rows(Var x, Var gain, Var bias);
  /// out[i] = in_flat[index[i]]; backward is scatter-add. Output is rank-1.
  Var gather(Var a, std::vector<std::uint32_t> index);
  /// Passes the value forward, blocks gradient flow.
  Var stop_gradient(Var a);

  // ---- evaluation / differentiation --------------------------------------
  const Tensor& value(Var v) const { return node(v).value; }
  /// Gradient of the last backward() output w.r.t. this node.
  const Tensor& grad(Var v) const;
  bool has_grad(Var v) const;

  /// Backward from a scalar output with seed 1.
  void backward(Var output);
  /// Backward with an explicit output seed (vector-Jacobian product).
  void backward(Var output, const Tensor& seed);
  void clear_grads();

  std::size_t num_nodes() const { return nodes_.size(); }
  const char* op_name(Var v) const;
  Var leaf(const std::string& name) const;
  const std::map<std::string, int>& leaves() const { return leaves_; }

 private:
  struct Node {
    Op op = Op::Leaf;
    Tensor value;
    Tensor grad;
    Tensor aux;  // op-specific saved state (e.g. layernorm x-hat)
    bool grad_live = false;
    int a = -1, b = -1, c = -1;
    std::size_t i0 = 0, i1 = 0;
    double d0 = 0.0;
    std::vector<std::uint32_t> index;
    std::string name;  // leaves only
  };

  Node& node(Var v);
  const Node& node(Var v) const;
  Var push(Node n);
  Tensor& grad_buf(int id);
  void backprop(int id);

  std::vector<Node> nodes_;
  std::map<std::string, int> leaves_;
  bool ran_backward_ = false;
};

const char* op_cstr(Graph::Op op);

}  // namespace rollcast
