#pragma once

#include <string>
#include <vector>

#include "omcl/tensor.hpp"

namespace omcl {

// Reverse-mode autodiff over dense double tensors.
//
// A Graph owns the nodes of one forward computation. Ops evaluate eagerly
// and record their dependencies; backward(loss) then fills the gradient of
// every node reachable from the scalar loss. Node values are immutable once
// created, so a finished graph is safe to read from several threads.
// Evaluation is deterministic: the same inputs produce bit-identical values.

enum class Op : uint8_t {
  leaf,
  add,
  sub,
  mul,
  relu,
  exp,
  log,
  scale_const,
  scale_var,
  add_rowvec,
  matmul,
  matmul_nt,
  conv2d,
  maxpool2,
  reshape,
  l2norm_rows,
  concat_rows,
  slice_rows,
  select_cols,
  logsumexp_rows,
  append_col,
  softmax_ext,
  sum,
  mean,
};

const char* op_name(Op op);

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Behavior of row-wise L2 normalization on a (near-)zero row: `error`
// throws NumericError, `clamp` floors the denominator at 1e-12.
enum class ZeroNormPolicy : uint8_t { error, clamp };

class Graph {
 public:
  Var leaf(Tensor t);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var relu(Var x);
  Var exp(Var x);
  Var log(Var x);
  // x * c for a fixed scalar c.
  Var scale(Var x, double c);
  // x * s where s is a single-element variable (broadcast).
  Var scale_var(Var x, Var s);
  // X[m,n] + row vector b[n], broadcast over rows.
  Var add_rowvec(Var x, Var b);
  Var matmul(Var a, Var b);
  // A[m,k] * B[n,k]^T.
  Var matmul_nt(Var a, Var b);
  // x[B,H,W,Ci] with weights w[Co,kh,kw,Ci]; stride 1, zero padding.
  // bias may be an invalid Var.
  Var conv2d(Var x, Var w, Var bias, int pad);
  Var maxpool2(Var x);
  Var reshape(Var x, std::vector<int> shape);
  Var l2_normalize_rows(Var x, ZeroNormPolicy policy = ZeroNormPolicy::error);
  Var concat_rows(Var a, Var b);
  Var slice_rows(Var x, int row0, int row1);
  // y[i] = x[i, cols[i]], cols are 0-based column indices.
  Var select_cols(Var x, std::vector<int> cols);
  Var logsumexp_rows(Var x);
  // Appends a broadcast scalar-variable column: [m,n] -> [m,n+1].
  Var append_col(Var x, Var s);
  // Softmax over each row of [logits | extra]: [m,C] -> [m,C+1] probabilities.
  Var softmax_ext(Var logits, Var extra);
  Var sum(Var x);
  Var mean(Var x);

  // Populates grad of every node that the scalar loss depends on; the grad
  // of nodes the loss does not reach stays zero.
  void backward(Var loss);

  const Tensor& value(Var v) const;
  const std::vector<double>& grad(Var v) const;
  int num_nodes() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Op op = Op::leaf;
    int in0 = -1, in1 = -1, in2 = -1;
    Tensor value;
    std::vector<double> grad;
    double c = 0.0;             // scale_const factor
    int i0 = 0, i1 = 0;         // op-specific (pad, slice range, split row)
    std::vector<int> cols;      // select_cols indices
    std::vector<int32_t> aux;   // maxpool argmax
    ZeroNormPolicy policy = ZeroNormPolicy::error;
  };

  Var push(Node n);
  const Node& at(Var v) const;
  void backprop_node(int id);

  std::vector<Node> nodes_;
};

}  // namespace omcl
