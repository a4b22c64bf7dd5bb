#pragma once

#include <vector>

#include "cicada/matrix.hpp"

namespace cicada {

// Reverse-mode differentiation over matrix expressions.  Nodes are appended in
// topological order and evaluated eagerly; backward(root) then fills gradients
// for every leaf the root depends on.  A graph is built per optimization step
// and discarded.
class Graph {
 public:
  // Differentiable input.
  int leaf(const Matrix& m);
  // Non-differentiable input; backward never propagates into it.
  int constant(const Matrix& m);

  int matmul(int a, int b);
  int transpose(int a);
  int add(int a, int b);
  int sub(int a, int b);
  int scale(int a, double s);
  // m + bias * ones(1, n); bias is rows x 1.
  int add_bias(int m, int bias);
  int relu(int a);
  int tanh_(int a);
  int softmax_rows(int a);
  int softmax_cols(int a);
  int frob_sq(int a);    // scalar
  int trace_(int a);     // scalar
  int mean_(int a);      // scalar, over all entries
  int l1(int a);         // scalar; subgradient at 0 is 0
  int concat_rows(const std::vector<int>& parts);
  int concat_cols(const std::vector<int>& parts);
  int slice_rows(int a, int r0, int r1);
  int reshape_(int a, int r, int c);
  // (AtA + ridge*I)^-1 At with the ridge inside the differentiated expression.
  int pinv(int a, double ridge);
  int colwise_dot(int a, int b);  // 1 x n per-column dots
  int scale_cols(int a, int s);   // scales column j by s(0, j)

  const Matrix& val(int id) const { return nodes_[id].value; }
  int rows(int id) const { return nodes_[id].value.rows; }
  int cols(int id) const { return nodes_[id].value.cols; }

  // Accumulates gradients from a scalar root.  Throws NonScalarRoot when the
  // root is not 1x1, NonFiniteLoss when its value is not finite, and
  // NonFiniteGradient when any reached gradient turns out non-finite.
  void backward(int root);

  // Gradient of the last backward() root w.r.t. this node; zeros when the node
  // was not reached.
  Matrix grad(int id) const;

  size_t size() const { return nodes_.size(); }

 private:
  enum class Op {
    Leaf, Const, MatMul, Transpose, Add, Sub, Scale, AddBias, Relu, Tanh,
    SoftmaxRows, SoftmaxCols, FrobSq, Trace, Mean, L1, ConcatRows, ConcatCols,
    SliceRows, Reshape, Pinv, ColwiseDot, ScaleCols,
  };

  struct Node {
    Op op;
    std::vector<int> in;
    Matrix value;
    Matrix grad;      // empty until touched by backward
    Matrix aux;       // op-specific cache (e.g. (AtA+ridge I)^-1 for Pinv)
    double sarg = 0;  // scalar argument (Scale factor, slice bounds packed)
    int iarg0 = 0, iarg1 = 0;
    bool needs_grad = false;
  };

  int push(Node n);
  int check(int id) const;
  void accumulate(int id, const Matrix& g);

  std::vector<Node> nodes_;
};

}  // namespace cicada
