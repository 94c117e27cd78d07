#include "rollcast/graph.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace rollcast {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RowMat>;
using CMapM = Eigen::Map<const RowMat>;

CMapM as_mat(const Tensor& t) {
  if (t.rank() != 2) {
    throw ShapeError(std::string("expected rank-2 tensor, got ") + shape_str(t));
  }
  return CMapM(t.data(), static_cast<Eigen::Index>(t.shape()[0]),
               static_cast<Eigen::Index>(t.shape()[1]));
}

MapM as_mat(Tensor& t) {
  return MapM(t.data(), static_cast<Eigen::Index>(t.shape()[0]),
              static_cast<Eigen::Index>(t.shape()[1]));
}

void require(bool ok, const char* op, const std::string& detail) {
  if (!ok) throw ShapeError(std::string(op) + ": " + detail);
}

constexpr double kLnEps = 1e-5;  // layernorm variance floor

double gelu_fwd(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_bwd(double x) {
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) +
         x * std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

}  // namespace

const char* op_cstr(Graph::Op op) {
  switch (op) {
    case Graph::Op::Leaf: return "leaf";
    case Graph::Op::Add: return "add";
    case Graph::Op::Sub: return "sub";
    case Graph::Op::Mul: return "mul";
    case Graph::Op::Div: return "div";
    case Graph::Op::AddConst: return "add_const";
    case Graph::Op::Scale: return "scale";
    case Graph::Op::Matmul: return "matmul";
    case Graph::Op::AddRowvec: return "add_rowvec";
    case Graph::Op::MulRowvec: return "mul_rowvec";
    case Graph::Op::Tanh: return "tanh";
    case Graph::Op::Gelu: return "gelu";
    case Graph::Op::Relu: return "relu";
    case Graph::Op::Sqrt: return "sqrt";
    case Graph::Op::RowwiseSum: return "rowwise_sum";
    case Graph::Op::SumAll: return "sum_all";
    case Graph::Op::MeanAll: return "mean_all";
    case Graph::Op::ConcatRows: return "concat_rows";
    case Graph::Op::ConcatCols: return "concat_cols";
    case Graph::Op::SliceRows: return "slice_rows";
    case Graph::Op::SliceCols: return "slice_cols";
    case Graph::Op::Reshape: return "reshape";
    case Graph::Op::Transpose: return "transpose";
    case Graph::Op::SoftmaxRows: return "softmax_rows";
    case Graph::Op::LayerNormRows: return "layernorm_rows";
    case Graph::Op::Gather: return "gather";
    case Graph::Op::StopGradient: return "stop_gradient";
  }
  return "?";
}

Graph::Node& Graph::node(Var v) {
  if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw std::logic_error("Graph: invalid Var handle");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Graph::Node& Graph::node(Var v) const {
  if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw std::logic_error("Graph: invalid Var handle");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

Var Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::input(const std::string& name, Tensor value) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  n.name = name;
  Var v = push(std::move(n));
  if (!name.empty()) leaves_[name] = v.id;
  return v;
}

Var Graph::param(const std::string& name, Tensor value) {
  return input(name, std::move(value));
}

Var Graph::constant(Tensor value) { return input("", std::move(value)); }

Var Graph::leaf(const std::string& name) const {
  auto it = leaves_.find(name);
  if (it == leaves_.end()) {
    throw std::logic_error("Graph: no leaf named '" + name + "'");
  }
  return Var{it->second};
}

const char* Graph::op_name(Var v) const { return op_cstr(node(v).op); }

// ---- primitive constructors -------------------------------------------

Var Graph::add(Var a, Var b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  require(ta.same_shape(tb), "add",
          "shape mismatch " + shape_str(ta) + " vs " + shape_str(tb));
  Node n;
  n.op = Op::Add;
  n.a = a.id;
  n.b = b.id;
  n.value = ta;
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] += tb[i];
  return push(std::move(n));
}

Var Graph::sub(Var a, Var b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  require(ta.same_shape(tb), "sub",
          "shape mismatch " + shape_str(ta) + " vs " + shape_str(tb));
  Node n;
  n.op = Op::Sub;
  n.a = a.id;
  n.b = b.id;
  n.value = ta;
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] -= tb[i];
  return push(std::move(n));
}

Var Graph::mul(Var a, Var b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  require(ta.same_shape(tb), "mul",
          "shape mismatch " + shape_str(ta) + " vs " + shape_str(tb));
  Node n;
  n.op = Op::Mul;
  n.a = a.id;
  n.b = b.id;
  n.value = ta;
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] *= tb[i];
  return push(std::move(n));
}

Var Graph::div(Var a, Var b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  require(ta.same_shape(tb), "div",
          "shape mismatch " + shape_str(ta) + " vs " + shape_str(tb));
  Node n;
  n.op = Op::Div;
  n.a = a.id;
  n.b = b.id;
  n.value = ta;
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] /= tb[i];
  return push(std::move(n));
}

Var Graph::add_const(Var a, double c) {
  Node n;
  n.op = Op::AddConst;
  n.a = a.id;
  n.d0 = c;
  n.value = node(a).value;
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] += c;
  return push(std::move(n));
}

Var Graph::scale(Var a, double c) {
  Node n;
  n.op = Op::Scale;
  n.a = a.id;
  n.d0 = c;
  n.value = node(a).value;
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] *= c;
  return push(std::move(n));
}

Var Graph::matmul(Var a, Var b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  require(ta.rank() == 2 && tb.rank() == 2, "matmul",
          "operands must be rank-2, got " + shape_str(ta) + " and " + shape_str(tb));
  require(ta.shape()[1] == tb.shape()[0], "matmul",
          "inner dimensions differ: " + shape_str(ta) + " x " + shape_str(tb));
  Node n;
  n.op = Op::Matmul;
  n.a = a.id;
  n.b = b.id;
  n.value = Tensor({ta.shape()[0], tb.shape()[1]});
  as_mat(n.value).noalias() = as_mat(ta) * as_mat(tb);
  return push(std::move(n));
}

Var Graph::add_rowvec(Var a, Var v) {
  const Tensor& ta = node(a).value;
  const Tensor& tv = node(v).value;
  require(ta.rank() == 2 && tv.rank() == 1 && tv.size() == ta.shape()[1],
          "add_rowvec",
          "need [M,N] + [N], got " + shape_str(ta) + " and " + shape_str(tv));
  Node n;
  n.op = Op::AddRowvec;
  n.a = a.id;
  n.b = v.id;
  n.value = ta;
  std::size_t rows = ta.shape()[0], cols = ta.shape()[1];
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) n.value[r * cols + c] += tv[c];
  return push(std::move(n));
}

Var Graph::mul_rowvec(Var a, Var v) {
  const Tensor& ta = node(a).value;
  const Tensor& tv = node(v).value;
  require(ta.rank() == 2 && tv.rank() == 1 && tv.size() == ta.shape()[1],
          "mul_rowvec",
          "need [M,N] * [N], got " + shape_str(ta) + " and " + shape_str(tv));
  Node n;
  n.op = Op::MulRowvec;
  n.a = a.id;
  n.b = v.id;
  n.value = ta;
  std::size_t rows = ta.shape()[0], cols = ta.shape()[1];
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) n.value[r * cols + c] *= tv[c];
  return push(std::move(n));
}

Var Graph::tanh_(Var a) {
  Node n;
  n.op = Op::Tanh;
  n.a = a.id;
  n.value = node(a).value;
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = std::tanh(n.value[i]);
  return push(std::move(n));
}

Var Graph::gelu(Var a) {
  Node n;
  n.op = Op::Gelu;
  n.a = a.id;
  n.value = node(a).value;
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = gelu_fwd(n.value[i]);
  return push(std::move(n));
}

Var Graph::relu(Var a) {
  Node n;
  n.op = Op::Relu;
  n.a = a.id;
  n.value = node(a).value;
  for (std::size_t i = 0; i < n.value.size(); ++i)
    n.value[i] = n.value[i] > 0 ? n.value[i] : 0.0;
  return push(std::move(n));
}

Var Graph::sqrt_(Var a) {
  Node n;
  n.op = Op::Sqrt;
  n.a = a.id;
  n.value = node(a).value;
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = std::sqrt(n.value[i]);
  return push(std::move(n));
}

Var Graph::rowwise_sum(Var a) {
  const Tensor& ta = node(a).value;
  require(ta.rank() == 2, "rowwise_sum", "operand must be rank-2, got " + shape_str(ta));
  Node n;
  n.op = Op::RowwiseSum;
  n.a = a.id;
  std::size_t rows = ta.shape()[0], cols = ta.shape()[1];
  n.value = Tensor({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < cols; ++c) s += ta[r * cols + c];
    n.value[r] = s;
  }
  return push(std::move(n));
}

Var Graph::sum_all(Var a) {
  Node n;
  n.op = Op::SumAll;
  n.a = a.id;
  double s = 0;
  for (double x : node(a).value.vec()) s += x;
  n.value = Tensor::scalar(s);
  return push(std::move(n));
}

Var Graph::mean_all(Var a) {
  const Tensor& ta = node(a).value;
  require(ta.size() > 0, "mean_all", "empty operand");
  Node n;
  n.op = Op::MeanAll;
  n.a = a.id;
  double s = 0;
  for (double x : ta.vec()) s += x;
  n.value = Tensor::scalar(s / static_cast<double>(ta.size()));
  return push(std::move(n));
}

Var Graph::concat_rows(Var a, Var b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  require(ta.rank() == 2 && tb.rank() == 2 && ta.shape()[1] == tb.shape()[1],
          "concat_rows",
          "column counts differ: " + shape_str(ta) + " vs " + shape_str(tb));
  Node n;
  n.op = Op::ConcatRows;
  n.a = a.id;
  n.b = b.id;
  n.i0 = ta.shape()[0];
  n.value = Tensor({ta.shape()[0] + tb.shape()[0], ta.shape()[1]});
  std::copy(ta.vec().begin(), ta.vec().end(), n.value.vec().begin());
  std::copy(tb.vec().begin(), tb.vec().end(),
            n.value.vec().begin() + static_cast<std::ptrdiff_t>(ta.size()));
  return push(std::move(n));
}

Var Graph::concat_cols(Var a, Var b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  require(ta.rank() == 2 && tb.rank() == 2 && ta.shape()[0] == tb.shape()[0],
          "concat_cols",
          "row counts differ: " + shape_str(ta) + " vs " + shape_str(tb));
  Node n;
  n.op = Op::ConcatCols;
  n.a = a.id;
  n.b = b.id;
  std::size_t rows = ta.shape()[0], ca = ta.shape()[1], cb = tb.shape()[1];
  n.i0 = ca;
  n.value = Tensor({rows, ca + cb});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < ca; ++c) n.value[r * (ca + cb) + c] = ta[r * ca + c];
    for (std::size_t c = 0; c < cb; ++c)
      n.value[r * (ca + cb) + ca + c] = tb[r * cb + c];
  }
  return push(std::move(n));
}

Var Graph::slice_rows(Var a, std::size_t r0, std::size_t r1) {
  const Tensor& ta = node(a).value;
  require(ta.rank() == 2, "slice_rows", "operand must be rank-2");
  require(r0 < r1 && r1 <= ta.shape()[0], "slice_rows",
          "range [" + std::to_string(r0) + "," + std::to_string(r1) +
              ") out of bounds for " + shape_str(ta));
  Node n;
  n.op = Op::SliceRows;
  n.a = a.id;
  n.i0 = r0;
  n.i1 = r1;
  std::size_t cols = ta.shape()[1];
  n.value = Tensor({r1 - r0, cols});
  std::copy(ta.vec().begin() + static_cast<std::ptrdiff_t>(r0 * cols),
            ta.vec().begin() + static_cast<std::ptrdiff_t>(r1 * cols),
            n.value.vec().begin());
  return push(std::move(n));
}

Var Graph::slice_cols(Var a, std::size_t c0, std::size_t c1) {
  const Tensor& ta = node(a).value;
  require(ta.rank() == 2, "slice_cols", "operand must be rank-2");
  require(c0 < c1 && c1 <= ta.shape()[1], "slice_cols",
          "range [" + std::to_string(c0) + "," + std::to_string(c1) +
              ") out of bounds for " + shape_str(ta));
  Node n;
  n.op = Op::SliceCols;
  n.a = a.id;
  n.i0 = c0;
  n.i1 = c1;
  std::size_t rows = ta.shape()[0], cols = ta.shape()[1];
  n.value = Tensor({rows, c1 - c0});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = c0; c < c1; ++c)
      n.value[r * (c1 - c0) + (c - c0)] = ta[r * cols + c];
  return push(std::move(n));
}

Var Graph::reshape(Var a, std::vector<std::size_t> shape) {
  const Tensor& ta = node(a).value;
  require(Tensor::count(shape) == ta.size(), "reshape",
          "element count mismatch for " + shape_str(ta));
  Node n;
  n.op = Op::Reshape;
  n.a = a.id;
  n.value = Tensor(std::move(shape), ta.vec());
  return push(std::move(n));
}

Var Graph::transpose(Var a) {
  const Tensor& ta = node(a).value;
  require(ta.rank() == 2, "transpose", "operand must be rank-2, got " + shape_str(ta));
  Node n;
  n.op = Op::Transpose;
  n.a = a.id;
  n.value = Tensor({ta.shape()[1], ta.shape()[0]});
  as_mat(n.value) = as_mat(ta).transpose();
  return push(std::move(n));
}

Var Graph::softmax_rows(Var a) {
  const Tensor& ta = node(a).value;
  require(ta.rank() == 2, "softmax_rows", "operand must be rank-2");
  Node n;
  n.op = Op::SoftmaxRows;
  n.a = a.id;
  n.value = ta;
  std::size_t rows = ta.shape()[0], cols = ta.shape()[1];
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = n.value.data() + r * cols;
    double m = row[0];
    for (std::size_t c = 1; c < cols; ++c) m = std::max(m, row[c]);
    double z = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - m);
      z += row[c];
    }
    for (std::size_t c = 0; c < cols; ++c) row[c] /= z;
  }
  return push(std::move(n));
}

Var Graph::layernorm_rows(Var x, Var gain, Var bias) {
  const Tensor& tx = node(x).value;
  const Tensor& tg = node(gain).value;
  const Tensor& tb = node(bias).value;
  require(tx.rank() == 2, "layernorm_rows", "input must be rank-2");
  std::size_t rows = tx.shape()[0], cols = tx.shape()[1];
  require(tg.rank() == 1 && tg.size() == cols && tb.rank() == 1 && tb.size() == cols,
          "layernorm_rows", "gain/bias must be [C] for input " + shape_str(tx));
  Node n;
  n.op = Op::LayerNormRows;
  n.a = x.id;
  n.b = gain.id;
  n.c = bias.id;
  n.value = Tensor({rows, cols});
  // aux: x-hat per element, plus inverse std per row appended at the end
  n.aux = Tensor({rows * cols + rows});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = tx.data() + r * cols;
    double mu = 0;
    for (std::size_t c = 0; c < cols; ++c) mu += row[c];
    mu /= static_cast<double>(cols);
    double var = 0;
    for (std::size_t c = 0; c < cols; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(cols);
    double inv_std = 1.0 / std::sqrt(var + kLnEps);
    n.aux[rows * cols + r] = inv_std;
    for (std::size_t c = 0; c < cols; ++c) {
      double xh = (row[c] - mu) * inv_std;
      n.aux[r * cols + c] = xh;
      n.value[r * cols + c] = xh * tg[c] + tb[c];
    }
  }
  return push(std::move(n));
}

Var Graph::gather(Var a, std::vector<std::uint32_t> index) {
  const Tensor& ta = node(a).value;
  for (std::uint32_t i : index) {
    require(i < ta.size(), "gather", "index " + std::to_string(i) +
                                         " out of range for " + shape_str(ta));
  }
  Node n;
  n.op = Op::Gather;
  n.a = a.id;
  n.value = Tensor({index.size()});
  for (std::size_t i = 0; i < index.size(); ++i) n.value[i] = ta[index[i]];
  n.index = std::move(index);
  return push(std::move(n));
}

Var Graph::stop_gradient(Var a) {
  Node n;
  n.op = Op::StopGradient;
  n.a = a.id;
  n.value = node(a).value;
  return push(std::move(n));
}

// ---- backward -----------------------------------------------------------

const Tensor& Graph::grad(Var v) const {
  const Node& n = node(v);
  if (!ran_backward_) {
    throw std::logic_error("Graph::grad: backward has not been run");
  }
  if (!n.grad_live) {
    throw std::logic_error("Graph::grad: node has no gradient path to the output");
  }
  return n.grad;
}

bool Graph::has_grad(Var v) const { return ran_backward_ && node(v).grad_live; }

Tensor& Graph::grad_buf(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.grad_live) {
    n.grad = Tensor(n.value.shape());
    n.grad_live = true;
  }
  return n.grad;
}

void Graph::clear_grads() {
  for (Node& n : nodes_) {
    n.grad_live = false;
    n.grad = Tensor();
  }
  ran_backward_ = false;
}

void Graph::backward(Var output) {
  const Node& out = node(output);
  if (out.value.size() != 1) {
    throw std::logic_error(
        "Graph::backward: output must be scalar; got " + shape_str(out.value));
  }
  backward(output, Tensor::scalar(1.0));
}

void Graph::backward(Var output, const Tensor& seed) {
  Node& out = node(output);
  if (!seed.same_shape(out.value)) {
    throw ShapeError("backward: seed shape " + shape_str(seed) +
                     " does not match output " + shape_str(out.value));
  }
  {
    Tensor& g = grad_buf(output.id);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  }
  for (int id = output.id; id >= 0; --id) {
    if (nodes_[static_cast<std::size_t>(id)].grad_live) backprop(id);
  }
  ran_backward_ = true;
}

void Graph::backprop(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  const Tensor& g = n.grad;
  switch (n.op) {
    case Op::Leaf:
    case Op::StopGradient:
      break;
    case Op::Add: {
      Tensor& ga = grad_buf(n.a);
      Tensor& gb = grad_buf(n.b);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] += g[i];
      }
      break;
    }
    case Op::Sub: {
      Tensor& ga = grad_buf(n.a);
      Tensor& gb = grad_buf(n.b);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] -= g[i];
      }
      break;
    }
    case Op::Mul: {
      const Tensor& va = nodes_[static_cast<std::size_t>(n.a)].value;
      const Tensor& vb = nodes_[static_cast<std::size_t>(n.b)].value;
      Tensor& ga = grad_buf(n.a);
      Tensor& gb = grad_buf(n.b);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * vb[i];
        gb[i] += g[i] * va[i];
      }
      break;
    }
    case Op::Div: {
      const Tensor& va = nodes_[static_cast<std::size_t>(n.a)].value;
      const Tensor& vb = nodes_[static_cast<std::size_t>(n.b)].value;
      Tensor& ga = grad_buf(n.a);
      Tensor& gb = grad_buf(n.b);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] / vb[i];
        gb[i] -= g[i] * va[i] / (vb[i] * vb[i]);
      }
      break;
    }
    case Op::AddConst: {
      Tensor& ga = grad_buf(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      break;
    }
    case Op::Scale: {
      Tensor& ga = grad_buf(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.d0;
      break;
    }
    case Op::Matmul: {
      const Tensor& va = nodes_[static_cast<std::size_t>(n.a)].value;
      const Tensor& vb = nodes_[static_cast<std::size_t>(n.b)].value;
      as_mat(grad_buf(n.a)).noalias() += as_mat(g) * as_mat(vb).transpose();
      as_mat(grad_buf(n.b)).noalias() += as_mat(va).transpose() * as_mat(g);
      break;
    }
    case Op::AddRowvec: {
      Tensor& ga = grad_buf(n.a);
      Tensor& gv = grad_buf(n.b);
      std::size_t rows = g.shape()[0], cols = g.shape()[1];
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
          ga[r * cols + c] += g[r * cols + c];
          gv[c] += g[r * cols + c];
        }
      break;
    }
    case Op::MulRowvec: {
      const Tensor& va = nodes_[static_cast<std::size_t>(n.a)].value;
      const Tensor& vv = nodes_[static_cast<std::size_t>(n.b)].value;
      Tensor& ga = grad_buf(n.a);
      Tensor& gv = grad_buf(n.b);
      std::size_t rows = g.shape()[0], cols = g.shape()[1];
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
          ga[r * cols + c] += g[r * cols + c] * vv[c];
          gv[c] += g[r * cols + c] * va[r * cols + c];
        }
      break;
    }
    case Op::Tanh: {
      Tensor& ga = grad_buf(n.a);
      for (std::size_t i = 0; i < g.size(); ++i)
        ga[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
      break;
    }
    case Op::Gelu: {
      const Tensor& va = nodes_[static_cast<std::size_t>(n.a)].value;
      Tensor& ga = grad_buf(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * gelu_bwd(va[i]);
      break;
    }
    case Op::Relu: {
      const Tensor& va = nodes_[static_cast<std::size_t>(n.a)].value;
      Tensor& ga = grad_buf(n.a);
      for (std::size_t i = 0; i < g.size(); ++i)
        ga[i] += va[i] > 0 ? g[i] : 0.0;
      break;
    }
    case Op::Sqrt: {
      Tensor& ga = grad_buf(n.a);
      for (std::size_t i = 0; i < g.size(); ++i)
        ga[i] += g[i] * 0.5 / n.value[i];
      break;
    }
    case Op::RowwiseSum: {
      Tensor& ga = grad_buf(n.a);
      std::size_t rows = ga.shape()[0], cols = ga.shape()[1];
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += g[r];
      break;
    }
    case Op::SumAll: {
      Tensor& ga = grad_buf(n.a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
      break;
    }
    case Op::MeanAll: {
      Tensor& ga = grad_buf(n.a);
      double s = g[0] / static_cast<double>(ga.size());
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s;
      break;
    }
    case Op::ConcatRows: {
      Tensor& ga = grad_buf(n.a);
      Tensor& gb = grad_buf(n.b);
      std::size_t na = ga.size();
      for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
      break;
    }
    case Op::ConcatCols: {
      Tensor& ga = grad_buf(n.a);
      Tensor& gb = grad_buf(n.b);
      std::size_t rows = g.shape()[0], ca = n.i0, cb = g.shape()[1] - n.i0;
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < ca; ++c)
          ga[r * ca + c] += g[r * (ca + cb) + c];
        for (std::size_t c = 0; c < cb; ++c)
          gb[r * cb + c] += g[r * (ca + cb) + ca + c];
      }
      break;
    }
    case Op::SliceRows: {
      Tensor& ga = grad_buf(n.a);
      std::size_t cols = ga.shape()[1];
      for (std::size_t i = 0; i < g.size(); ++i) ga[n.i0 * cols + i] += g[i];
      break;
    }
    case Op::SliceCols: {
      Tensor& ga = grad_buf(n.a);
      std::size_t rows = ga.shape()[0], cols = ga.shape()[1], w = n.i1 - n.i0;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < w; ++c)
          ga[r * cols + n.i0 + c] += g[r * w + c];
      break;
    }
    case Op::Reshape: {
      Tensor& ga = grad_buf(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      break;
    }
    case Op::Transpose: {
      Tensor& ga = grad_buf(n.a);
      as_mat(ga).noalias() += as_mat(g).transpose();
      break;
    }
    case Op::SoftmaxRows: {
      Tensor& ga = grad_buf(n.a);
      std::size_t rows = g.shape()[0], cols = g.shape()[1];
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = n.value.data() + r * cols;
        const double* gy = g.data() + r * cols;
        double dot = 0;
        for (std::size_t c = 0; c < cols; ++c) dot += gy[c] * y[c];
        for (std::size_t c = 0; c < cols; ++c)
          ga[r * cols + c] += y[c] * (gy[c] - dot);
      }
      break;
    }
    case Op::LayerNormRows: {
      Tensor& gx = grad_buf(n.a);
      Tensor& gg = grad_buf(n.b);
      Tensor& gb = grad_buf(n.c);
      const Tensor& vg = nodes_[static_cast<std::size_t>(n.b)].value;
      std::size_t rows = g.shape()[0], cols = g.shape()[1];
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xh = n.aux.data() + r * cols;
        double inv_std = n.aux[rows * cols + r];
        const double* gy = g.data() + r * cols;
        double m1 = 0, m2 = 0;  // mean(gy*g), mean(gy*g*xh)
        for (std::size_t c = 0; c < cols; ++c) {
          double t = gy[c] * vg[c];
          m1 += t;
          m2 += t * xh[c];
          gg[c] += gy[c] * xh[c];
          gb[c] += gy[c];
        }
        m1 /= static_cast<double>(cols);
        m2 /= static_cast<double>(cols);
        for (std::size_t c = 0; c < cols; ++c) {
          gx[r * cols + c] += inv_std * (gy[c] * vg[c] - m1 - xh[c] * m2);
        }
      }
      break;
    }
    case Op::Gather: {
      Tensor& ga = grad_buf(n.a);
      for (std::size_t i = 0; i < n.index.size(); ++i) ga[n.index[i]] += g[i];
      break;
    }
  }
}

}  // namespace rollcast
