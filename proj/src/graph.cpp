#include "omcl/graph.hpp"

#include <algorithm>
#include <cmath>

#include "omcl/kernels.hpp"

namespace omcl {

const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::relu: return "relu";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::scale_const: return "scale_const";
    case Op::scale_var: return "scale_var";
    case Op::add_rowvec: return "add_rowvec";
    case Op::matmul: return "matmul";
    case Op::matmul_nt: return "matmul_nt";
    case Op::conv2d: return "conv2d";
    case Op::maxpool2: return "maxpool2";
    case Op::reshape: return "reshape";
    case Op::l2norm_rows: return "l2norm_rows";
    case Op::concat_rows: return "concat_rows";
    case Op::slice_rows: return "slice_rows";
    case Op::select_cols: return "select_cols";
    case Op::logsumexp_rows: return "logsumexp_rows";
    case Op::append_col: return "append_col";
    case Op::softmax_ext: return "softmax_ext";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
  }
  return "?";
}

namespace {

[[noreturn]] void shape_fail(Op op, const std::string& detail) {
  throw ShapeError(std::string(op_name(op)) + ": " + detail);
}

void require_matrix(Op op, const Tensor& t, const char* which) {
  if (t.ndim() != 2)
    shape_fail(op, std::string(which) + " must be 2-D, got " + shape_str(t.shape));
}

constexpr double kNormFloor = 1e-12;
constexpr double kZeroRowThreshold = 1e-9;

}  // namespace

Var Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Graph::Node& Graph::at(Var v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
    throw Error("invalid graph handle");
  return nodes_[static_cast<size_t>(v.id)];
}

const Tensor& Graph::value(Var v) const { return at(v).value; }

const std::vector<double>& Graph::grad(Var v) const {
  const Node& n = at(v);
  if (n.grad.size() != n.value.data.size())
    throw Error("grad read before backward()");
  return n.grad;
}

Var Graph::leaf(Tensor t) {
  Node n;
  n.op = Op::leaf;
  n.value = std::move(t);
  return push(std::move(n));
}

Var Graph::add(Var a, Var b) {
  const Tensor& ta = at(a).value;
  const Tensor& tb = at(b).value;
  if (!ta.same_shape(tb))
    shape_fail(Op::add, "operands " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  Node n;
  n.op = Op::add;
  n.in0 = a.id;
  n.in1 = b.id;
  n.value = ta;
  for (size_t i = 0; i < tb.data.size(); ++i) n.value.data[i] += tb.data[i];
  return push(std::move(n));
}

Var Graph::sub(Var a, Var b) {
  const Tensor& ta = at(a).value;
  const Tensor& tb = at(b).value;
  if (!ta.same_shape(tb))
    shape_fail(Op::sub, "operands " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  Node n;
  n.op = Op::sub;
  n.in0 = a.id;
  n.in1 = b.id;
  n.value = ta;
  for (size_t i = 0; i < tb.data.size(); ++i) n.value.data[i] -= tb.data[i];
  return push(std::move(n));
}

Var Graph::mul(Var a, Var b) {
  const Tensor& ta = at(a).value;
  const Tensor& tb = at(b).value;
  if (!ta.same_shape(tb))
    shape_fail(Op::mul, "operands " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  Node n;
  n.op = Op::mul;
  n.in0 = a.id;
  n.in1 = b.id;
  n.value = ta;
  for (size_t i = 0; i < tb.data.size(); ++i) n.value.data[i] *= tb.data[i];
  return push(std::move(n));
}

Var Graph::relu(Var x) {
  Node n;
  n.op = Op::relu;
  n.in0 = x.id;
  n.value = at(x).value;
  for (double& v : n.value.data) v = v > 0.0 ? v : 0.0;
  return push(std::move(n));
}

Var Graph::exp(Var x) {
  Node n;
  n.op = Op::exp;
  n.in0 = x.id;
  n.value = at(x).value;
  for (double& v : n.value.data) v = std::exp(v);
  return push(std::move(n));
}

Var Graph::log(Var x) {
  Node n;
  n.op = Op::log;
  n.in0 = x.id;
  n.value = at(x).value;
  for (double& v : n.value.data) v = std::log(v);
  return push(std::move(n));
}

Var Graph::scale(Var x, double c) {
  Node n;
  n.op = Op::scale_const;
  n.in0 = x.id;
  n.c = c;
  n.value = at(x).value;
  for (double& v : n.value.data) v *= c;
  return push(std::move(n));
}

Var Graph::scale_var(Var x, Var s) {
  const Tensor& ts = at(s).value;
  if (ts.size() != 1)
    shape_fail(Op::scale_var, "scale must be a single element, got " + shape_str(ts.shape));
  Node n;
  n.op = Op::scale_var;
  n.in0 = x.id;
  n.in1 = s.id;
  n.value = at(x).value;
  const double s_val = ts.data[0];
  for (double& v : n.value.data) v *= s_val;
  return push(std::move(n));
}

Var Graph::add_rowvec(Var x, Var b) {
  const Tensor& tx = at(x).value;
  const Tensor& tb = at(b).value;
  require_matrix(Op::add_rowvec, tx, "input");
  if (tb.ndim() != 1 || tb.dim(0) != tx.dim(1))
    shape_fail(Op::add_rowvec,
               "row vector " + shape_str(tb.shape) + " vs matrix " + shape_str(tx.shape));
  Node n;
  n.op = Op::add_rowvec;
  n.in0 = x.id;
  n.in1 = b.id;
  n.value = tx;
  const int rows = tx.dim(0), cols = tx.dim(1);
  for (int i = 0; i < rows; ++i) {
    double* row = n.value.data.data() + static_cast<size_t>(i) * cols;
    for (int j = 0; j < cols; ++j) row[j] += tb.data[static_cast<size_t>(j)];
  }
  return push(std::move(n));
}

Var Graph::matmul(Var a, Var b) {
  const Tensor& ta = at(a).value;
  const Tensor& tb = at(b).value;
  require_matrix(Op::matmul, ta, "lhs");
  require_matrix(Op::matmul, tb, "rhs");
  if (ta.dim(1) != tb.dim(0))
    shape_fail(Op::matmul, "lhs " + shape_str(ta.shape) + " rhs " + shape_str(tb.shape));
  Node n;
  n.op = Op::matmul;
  n.in0 = a.id;
  n.in1 = b.id;
  n.value = Tensor::zeros({ta.dim(0), tb.dim(1)});
  kernels::matmul(ta.data.data(), tb.data.data(), n.value.data.data(), ta.dim(0),
                  ta.dim(1), tb.dim(1));
  return push(std::move(n));
}

Var Graph::matmul_nt(Var a, Var b) {
  const Tensor& ta = at(a).value;
  const Tensor& tb = at(b).value;
  require_matrix(Op::matmul_nt, ta, "lhs");
  require_matrix(Op::matmul_nt, tb, "rhs");
  if (ta.dim(1) != tb.dim(1))
    shape_fail(Op::matmul_nt,
               "lhs " + shape_str(ta.shape) + " rhs " + shape_str(tb.shape));
  Node n;
  n.op = Op::matmul_nt;
  n.in0 = a.id;
  n.in1 = b.id;
  n.value = Tensor::zeros({ta.dim(0), tb.dim(0)});
  kernels::matmul_nt(ta.data.data(), tb.data.data(), n.value.data.data(), ta.dim(0),
                     ta.dim(1), tb.dim(0));
  return push(std::move(n));
}

Var Graph::conv2d(Var x, Var w, Var bias, int pad) {
  const Tensor& tx = at(x).value;
  const Tensor& tw = at(w).value;
  if (tx.ndim() != 4)
    shape_fail(Op::conv2d, "input must be [B,H,W,C], got " + shape_str(tx.shape));
  if (tw.ndim() != 4)
    shape_fail(Op::conv2d, "weights must be [Co,kh,kw,Ci], got " + shape_str(tw.shape));
  if (tw.dim(3) != tx.dim(3))
    shape_fail(Op::conv2d, "input channels " + shape_str(tx.shape) + " vs weights " +
                               shape_str(tw.shape));
  const int batch = tx.dim(0), h = tx.dim(1), wd = tx.dim(2), ci = tx.dim(3);
  const int co = tw.dim(0), kh = tw.dim(1), kw = tw.dim(2);
  const int ho = h + 2 * pad - kh + 1, wo = wd + 2 * pad - kw + 1;
  if (ho <= 0 || wo <= 0)
    shape_fail(Op::conv2d, "kernel " + shape_str(tw.shape) + " too large for input " +
                               shape_str(tx.shape));
  const double* bias_ptr = nullptr;
  if (bias.valid()) {
    const Tensor& tb = at(bias).value;
    if (tb.ndim() != 1 || tb.dim(0) != co)
      shape_fail(Op::conv2d, "bias " + shape_str(tb.shape) + " vs weights " +
                                 shape_str(tw.shape));
    bias_ptr = tb.data.data();
  }
  Node n;
  n.op = Op::conv2d;
  n.in0 = x.id;
  n.in1 = w.id;
  n.in2 = bias.valid() ? bias.id : -1;
  n.i0 = pad;
  n.value = Tensor::zeros({batch, ho, wo, co});
  kernels::conv2d_forward(tx.data.data(), batch, h, wd, ci, tw.data.data(), co, kh, kw,
                          bias_ptr, pad, n.value.data.data());
  return push(std::move(n));
}

Var Graph::maxpool2(Var x) {
  const Tensor& tx = at(x).value;
  if (tx.ndim() != 4)
    shape_fail(Op::maxpool2, "input must be [B,H,W,C], got " + shape_str(tx.shape));
  const int batch = tx.dim(0), h = tx.dim(1), w = tx.dim(2), ch = tx.dim(3);
  if (h < 2 || w < 2)
    shape_fail(Op::maxpool2, "spatial dims too small: " + shape_str(tx.shape));
  Node n;
  n.op = Op::maxpool2;
  n.in0 = x.id;
  n.value = Tensor::zeros({batch, h / 2, w / 2, ch});
  n.aux.resize(n.value.data.size());
  kernels::maxpool2_forward(tx.data.data(), batch, h, w, ch, n.value.data.data(),
                            n.aux.data());
  return push(std::move(n));
}

Var Graph::reshape(Var x, std::vector<int> shape) {
  const Tensor& tx = at(x).value;
  if (numel(shape) != tx.size())
    shape_fail(Op::reshape, shape_str(tx.shape) + " -> " + shape_str(shape));
  Node n;
  n.op = Op::reshape;
  n.in0 = x.id;
  n.value = Tensor(std::move(shape), tx.data);
  return push(std::move(n));
}

Var Graph::l2_normalize_rows(Var x, ZeroNormPolicy policy) {
  const Tensor& tx = at(x).value;
  require_matrix(Op::l2norm_rows, tx, "input");
  const int rows = tx.dim(0), cols = tx.dim(1);
  Node n;
  n.op = Op::l2norm_rows;
  n.in0 = x.id;
  n.policy = policy;
  n.value = tx;
  for (int i = 0; i < rows; ++i) {
    double* row = n.value.data.data() + static_cast<size_t>(i) * cols;
    double sq = 0.0;
    for (int j = 0; j < cols; ++j) sq += row[j] * row[j];
    const double norm = std::sqrt(sq);
    if (policy == ZeroNormPolicy::error && norm < kZeroRowThreshold)
      throw NumericError("l2_normalize_rows: row " + std::to_string(i) +
                         " has near-zero norm " + std::to_string(norm));
    const double denom = std::max(norm, kNormFloor);
    for (int j = 0; j < cols; ++j) row[j] /= denom;
  }
  return push(std::move(n));
}

Var Graph::concat_rows(Var a, Var b) {
  const Tensor& ta = at(a).value;
  const Tensor& tb = at(b).value;
  require_matrix(Op::concat_rows, ta, "lhs");
  require_matrix(Op::concat_rows, tb, "rhs");
  if (ta.dim(1) != tb.dim(1))
    shape_fail(Op::concat_rows,
               "column mismatch " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  Node n;
  n.op = Op::concat_rows;
  n.in0 = a.id;
  n.in1 = b.id;
  n.i0 = ta.dim(0);  // split row for backward
  n.value = Tensor::zeros({ta.dim(0) + tb.dim(0), ta.dim(1)});
  std::copy(ta.data.begin(), ta.data.end(), n.value.data.begin());
  std::copy(tb.data.begin(), tb.data.end(), n.value.data.begin() + ta.data.size());
  return push(std::move(n));
}

Var Graph::slice_rows(Var x, int row0, int row1) {
  const Tensor& tx = at(x).value;
  require_matrix(Op::slice_rows, tx, "input");
  if (row0 < 0 || row1 > tx.dim(0) || row0 >= row1)
    shape_fail(Op::slice_rows, "range [" + std::to_string(row0) + "," +
                                   std::to_string(row1) + ") of " + shape_str(tx.shape));
  const int cols = tx.dim(1);
  Node n;
  n.op = Op::slice_rows;
  n.in0 = x.id;
  n.i0 = row0;
  n.i1 = row1;
  n.value = Tensor::zeros({row1 - row0, cols});
  std::copy(tx.data.begin() + static_cast<size_t>(row0) * cols,
            tx.data.begin() + static_cast<size_t>(row1) * cols, n.value.data.begin());
  return push(std::move(n));
}

Var Graph::select_cols(Var x, std::vector<int> cols) {
  const Tensor& tx = at(x).value;
  require_matrix(Op::select_cols, tx, "input");
  if (static_cast<int>(cols.size()) != tx.dim(0))
    shape_fail(Op::select_cols, std::to_string(cols.size()) + " indices for " +
                                    shape_str(tx.shape));
  const int ncol = tx.dim(1);
  Node n;
  n.op = Op::select_cols;
  n.in0 = x.id;
  n.value = Tensor::zeros({tx.dim(0)});
  for (size_t i = 0; i < cols.size(); ++i) {
    if (cols[i] < 0 || cols[i] >= ncol)
      shape_fail(Op::select_cols, "index " + std::to_string(cols[i]) + " out of " +
                                      std::to_string(ncol) + " columns");
    n.value.data[i] = tx.data[i * ncol + static_cast<size_t>(cols[i])];
  }
  n.cols = std::move(cols);
  return push(std::move(n));
}

Var Graph::logsumexp_rows(Var x) {
  const Tensor& tx = at(x).value;
  require_matrix(Op::logsumexp_rows, tx, "input");
  const int rows = tx.dim(0), cols = tx.dim(1);
  Node n;
  n.op = Op::logsumexp_rows;
  n.in0 = x.id;
  n.value = Tensor::zeros({rows});
  for (int i = 0; i < rows; ++i) {
    const double* row = tx.data.data() + static_cast<size_t>(i) * cols;
    double mx = row[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < cols; ++j) z += std::exp(row[j] - mx);
    n.value.data[static_cast<size_t>(i)] = mx + std::log(z);
  }
  return push(std::move(n));
}

Var Graph::append_col(Var x, Var s) {
  const Tensor& tx = at(x).value;
  const Tensor& ts = at(s).value;
  require_matrix(Op::append_col, tx, "input");
  if (ts.size() != 1)
    shape_fail(Op::append_col, "column value must be a single element, got " +
                                   shape_str(ts.shape));
  const int rows = tx.dim(0), cols = tx.dim(1);
  Node n;
  n.op = Op::append_col;
  n.in0 = x.id;
  n.in1 = s.id;
  n.value = Tensor::zeros({rows, cols + 1});
  const double sv = ts.data[0];
  for (int i = 0; i < rows; ++i) {
    const double* src = tx.data.data() + static_cast<size_t>(i) * cols;
    double* dst = n.value.data.data() + static_cast<size_t>(i) * (cols + 1);
    std::copy(src, src + cols, dst);
    dst[cols] = sv;
  }
  return push(std::move(n));
}

Var Graph::softmax_ext(Var logits, Var extra) {
  const Tensor& tl = at(logits).value;
  const Tensor& te = at(extra).value;
  require_matrix(Op::softmax_ext, tl, "logits");
  if (te.size() != 1)
    shape_fail(Op::softmax_ext, "extra logit must be a single element, got " +
                                    shape_str(te.shape));
  const int rows = tl.dim(0), cols = tl.dim(1);
  Node n;
  n.op = Op::softmax_ext;
  n.in0 = logits.id;
  n.in1 = extra.id;
  n.value = Tensor::zeros({rows, cols + 1});
  const double e = te.data[0];
  for (int i = 0; i < rows; ++i) {
    const double* row = tl.data.data() + static_cast<size_t>(i) * cols;
    double* out = n.value.data.data() + static_cast<size_t>(i) * (cols + 1);
    double mx = e;
    for (int j = 0; j < cols; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < cols; ++j) {
      out[j] = std::exp(row[j] - mx);
      z += out[j];
    }
    out[cols] = std::exp(e - mx);
    z += out[cols];
    for (int j = 0; j <= cols; ++j) out[j] /= z;
  }
  return push(std::move(n));
}

Var Graph::sum(Var x) {
  Node n;
  n.op = Op::sum;
  n.in0 = x.id;
  double acc = 0.0;
  for (double v : at(x).value.data) acc += v;
  n.value = Tensor::scalar(acc);
  return push(std::move(n));
}

Var Graph::mean(Var x) {
  const Tensor& tx = at(x).value;
  if (tx.size() == 0) shape_fail(Op::mean, "empty input");
  Node n;
  n.op = Op::mean;
  n.in0 = x.id;
  double acc = 0.0;
  for (double v : tx.data) acc += v;
  n.value = Tensor::scalar(acc / static_cast<double>(tx.size()));
  return push(std::move(n));
}

void Graph::backward(Var loss) {
  const Node& ln = at(loss);
  if (ln.value.size() != 1)
    throw ShapeError("backward: loss must be scalar, got shape " +
                     shape_str(ln.value.shape));
  for (Node& n : nodes_) n.grad.assign(n.value.data.size(), 0.0);
  nodes_[static_cast<size_t>(loss.id)].grad[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) backprop_node(id);
}

void Graph::backprop_node(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.op == Op::leaf) return;
  bool any = false;
  for (double g : n.grad)
    if (g != 0.0) {
      any = true;
      break;
    }
  if (!any) return;

  const std::vector<double>& g = n.grad;
  auto in_val = [&](int i) -> const Tensor& { return nodes_[static_cast<size_t>(i)].value; };
  auto in_grad = [&](int i) -> std::vector<double>& { return nodes_[static_cast<size_t>(i)].grad; };

  switch (n.op) {
    case Op::leaf:
      break;
    case Op::add: {
      auto& ga = in_grad(n.in0);
      auto& gb = in_grad(n.in1);
      for (size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] += g[i];
      }
      break;
    }
    case Op::sub: {
      auto& ga = in_grad(n.in0);
      auto& gb = in_grad(n.in1);
      for (size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] -= g[i];
      }
      break;
    }
    case Op::mul: {
      const auto& va = in_val(n.in0).data;
      const auto& vb = in_val(n.in1).data;
      auto& ga = in_grad(n.in0);
      auto& gb = in_grad(n.in1);
      for (size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * vb[i];
        gb[i] += g[i] * va[i];
      }
      break;
    }
    case Op::relu: {
      const auto& vx = in_val(n.in0).data;
      auto& gx = in_grad(n.in0);
      for (size_t i = 0; i < g.size(); ++i)
        if (vx[i] > 0.0) gx[i] += g[i];
      break;
    }
    case Op::exp: {
      auto& gx = in_grad(n.in0);
      for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * n.value.data[i];
      break;
    }
    case Op::log: {
      const auto& vx = in_val(n.in0).data;
      auto& gx = in_grad(n.in0);
      for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / vx[i];
      break;
    }
    case Op::scale_const: {
      auto& gx = in_grad(n.in0);
      for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * n.c;
      break;
    }
    case Op::scale_var: {
      const auto& vx = in_val(n.in0).data;
      const double sv = in_val(n.in1).data[0];
      auto& gx = in_grad(n.in0);
      auto& gs = in_grad(n.in1);
      double acc = 0.0;
      for (size_t i = 0; i < g.size(); ++i) {
        gx[i] += g[i] * sv;
        acc += g[i] * vx[i];
      }
      gs[0] += acc;
      break;
    }
    case Op::add_rowvec: {
      auto& gx = in_grad(n.in0);
      auto& gb = in_grad(n.in1);
      const int rows = n.value.dim(0), cols = n.value.dim(1);
      for (int i = 0; i < rows; ++i) {
        const double* gr = g.data() + static_cast<size_t>(i) * cols;
        double* gxr = gx.data() + static_cast<size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) {
          gxr[j] += gr[j];
          gb[static_cast<size_t>(j)] += gr[j];
        }
      }
      break;
    }
    case Op::matmul: {
      const Tensor& a = in_val(n.in0);
      const Tensor& b = in_val(n.in1);
      const int m = a.dim(0), k = a.dim(1), nn = b.dim(1);
      std::vector<double> tmp_a(static_cast<size_t>(m) * k);
      kernels::matmul_nt(g.data(), b.data.data(), tmp_a.data(), m, nn, k);
      auto& ga = in_grad(n.in0);
      for (size_t i = 0; i < tmp_a.size(); ++i) ga[i] += tmp_a[i];
      std::vector<double> tmp_b(static_cast<size_t>(k) * nn);
      kernels::matmul_tn(a.data.data(), g.data(), tmp_b.data(), k, m, nn);
      auto& gb = in_grad(n.in1);
      for (size_t i = 0; i < tmp_b.size(); ++i) gb[i] += tmp_b[i];
      break;
    }
    case Op::matmul_nt: {
      const Tensor& a = in_val(n.in0);
      const Tensor& b = in_val(n.in1);
      const int m = a.dim(0), k = a.dim(1), nn = b.dim(0);
      std::vector<double> tmp_a(static_cast<size_t>(m) * k);
      kernels::matmul(g.data(), b.data.data(), tmp_a.data(), m, nn, k);
      auto& ga = in_grad(n.in0);
      for (size_t i = 0; i < tmp_a.size(); ++i) ga[i] += tmp_a[i];
      std::vector<double> tmp_b(static_cast<size_t>(nn) * k);
      kernels::matmul_tn(g.data(), a.data.data(), tmp_b.data(), nn, m, k);
      auto& gb = in_grad(n.in1);
      for (size_t i = 0; i < tmp_b.size(); ++i) gb[i] += tmp_b[i];
      break;
    }
    case Op::conv2d: {
      const Tensor& x = in_val(n.in0);
      const Tensor& w = in_val(n.in1);
      const int batch = x.dim(0), h = x.dim(1), wd = x.dim(2), ci = x.dim(3);
      const int co = w.dim(0), kh = w.dim(1), kw = w.dim(2);
      std::vector<double> dx(x.data.size());
      kernels::conv2d_backward_input(g.data(), batch, h, wd, ci, w.data.data(), co, kh,
                                     kw, n.i0, dx.data());
      auto& gx = in_grad(n.in0);
      for (size_t i = 0; i < dx.size(); ++i) gx[i] += dx[i];
      std::vector<double> dw(w.data.size());
      std::vector<double> db(n.in2 >= 0 ? static_cast<size_t>(co) : 0);
      kernels::conv2d_backward_filter(g.data(), x.data.data(), batch, h, wd, ci, co, kh,
                                      kw, n.i0, dw.data(),
                                      n.in2 >= 0 ? db.data() : nullptr);
      auto& gw = in_grad(n.in1);
      for (size_t i = 0; i < dw.size(); ++i) gw[i] += dw[i];
      if (n.in2 >= 0) {
        auto& gb = in_grad(n.in2);
        for (size_t i = 0; i < db.size(); ++i) gb[i] += db[i];
      }
      break;
    }
    case Op::maxpool2: {
      const Tensor& x = in_val(n.in0);
      const int batch = x.dim(0), h = x.dim(1), w = x.dim(2), ch = x.dim(3);
      std::vector<double> dx(x.data.size());
      kernels::maxpool2_backward(g.data(), batch, h, w, ch, n.aux.data(), dx.data());
      auto& gx = in_grad(n.in0);
      for (size_t i = 0; i < dx.size(); ++i) gx[i] += dx[i];
      break;
    }
    case Op::reshape: {
      auto& gx = in_grad(n.in0);
      for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      break;
    }
    case Op::l2norm_rows: {
      const Tensor& x = in_val(n.in0);
      auto& gx = in_grad(n.in0);
      const int rows = x.dim(0), cols = x.dim(1);
      for (int i = 0; i < rows; ++i) {
        const double* xr = x.data.data() + static_cast<size_t>(i) * cols;
        const double* yr = n.value.data.data() + static_cast<size_t>(i) * cols;
        const double* gr = g.data() + static_cast<size_t>(i) * cols;
        double* gxr = gx.data() + static_cast<size_t>(i) * cols;
        double sq = 0.0;
        for (int j = 0; j < cols; ++j) sq += xr[j] * xr[j];
        const double norm = std::sqrt(sq);
        const double denom = std::max(norm, kNormFloor);
        if (norm > kNormFloor) {
          // d(x/|x|) = (g - y <g,y>) / |x|
          double dot = 0.0;
          for (int j = 0; j < cols; ++j) dot += gr[j] * yr[j];
          for (int j = 0; j < cols; ++j) gxr[j] += (gr[j] - yr[j] * dot) / denom;
        } else {
          // clamped region: y = x / floor is linear
          for (int j = 0; j < cols; ++j) gxr[j] += gr[j] / denom;
        }
      }
      break;
    }
    case Op::concat_rows: {
      auto& ga = in_grad(n.in0);
      auto& gb = in_grad(n.in1);
      const size_t split = ga.size();
      for (size_t i = 0; i < split; ++i) ga[i] += g[i];
      for (size_t i = 0; i < gb.size(); ++i) gb[i] += g[split + i];
      break;
    }
    case Op::slice_rows: {
      auto& gx = in_grad(n.in0);
      const int cols = n.value.dim(1);
      const size_t off = static_cast<size_t>(n.i0) * cols;
      for (size_t i = 0; i < g.size(); ++i) gx[off + i] += g[i];
      break;
    }
    case Op::select_cols: {
      auto& gx = in_grad(n.in0);
      const int ncol = in_val(n.in0).dim(1);
      for (size_t i = 0; i < n.cols.size(); ++i)
        gx[i * ncol + static_cast<size_t>(n.cols[i])] += g[i];
      break;
    }
    case Op::logsumexp_rows: {
      const Tensor& x = in_val(n.in0);
      auto& gx = in_grad(n.in0);
      const int rows = x.dim(0), cols = x.dim(1);
      for (int i = 0; i < rows; ++i) {
        const double gi = g[static_cast<size_t>(i)];
        if (gi == 0.0) continue;
        const double lse = n.value.data[static_cast<size_t>(i)];
        const double* xr = x.data.data() + static_cast<size_t>(i) * cols;
        double* gxr = gx.data() + static_cast<size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) gxr[j] += gi * std::exp(xr[j] - lse);
      }
      break;
    }
    case Op::append_col: {
      auto& gx = in_grad(n.in0);
      auto& gs = in_grad(n.in1);
      const int rows = n.value.dim(0), cols = n.value.dim(1) - 1;
      double acc = 0.0;
      for (int i = 0; i < rows; ++i) {
        const double* gr = g.data() + static_cast<size_t>(i) * (cols + 1);
        double* gxr = gx.data() + static_cast<size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) gxr[j] += gr[j];
        acc += gr[cols];
      }
      gs[0] += acc;
      break;
    }
    case Op::softmax_ext: {
      auto& gl = in_grad(n.in0);
      auto& ge = in_grad(n.in1);
      const int rows = n.value.dim(0), cols = n.value.dim(1) - 1;
      double e_acc = 0.0;
      for (int i = 0; i < rows; ++i) {
        const double* p = n.value.data.data() + static_cast<size_t>(i) * (cols + 1);
        const double* gr = g.data() + static_cast<size_t>(i) * (cols + 1);
        double dot = 0.0;
        for (int j = 0; j <= cols; ++j) dot += gr[j] * p[j];
        double* glr = gl.data() + static_cast<size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) glr[j] += p[j] * (gr[j] - dot);
        e_acc += p[cols] * (gr[cols] - dot);
      }
      ge[0] += e_acc;
      break;
    }
    case Op::sum: {
      auto& gx = in_grad(n.in0);
      const double gi = g[0];
      for (double& v : gx) v += gi;
      break;
    }
    case Op::mean: {
      auto& gx = in_grad(n.in0);
      const double gi = g[0] / static_cast<double>(gx.size());
      for (double& v : gx) v += gi;
      break;
    }
  }
}

}  // namespace omcl
