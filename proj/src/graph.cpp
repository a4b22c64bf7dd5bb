#include "cicada/graph.hpp"

#include <cmath>

namespace cicada {

int Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Graph::check(int id) const {
  require(id >= 0 && id < static_cast<int>(nodes_.size()), Err::ShapeMismatch,
          "graph: node id out of range");
  return id;
}

int Graph::leaf(const Matrix& m) {
  Node n{Op::Leaf, {}, m, {}, {}, 0, 0, 0, true};
  return push(std::move(n));
}

int Graph::constant(const Matrix& m) {
  Node n{Op::Const, {}, m, {}, {}, 0, 0, 0, false};
  return push(std::move(n));
}

int Graph::matmul(int a, int b) {
  check(a);
  check(b);
  Node n{Op::MatMul, {a, b}, cicada::matmul(nodes_[a].value, nodes_[b].value), {}, {}, 0, 0, 0,
         nodes_[a].needs_grad || nodes_[b].needs_grad};
  return push(std::move(n));
}

int Graph::transpose(int a) {
  check(a);
  Node n{Op::Transpose, {a}, cicada::transpose(nodes_[a].value), {}, {}, 0, 0, 0,
         nodes_[a].needs_grad};
  return push(std::move(n));
}

int Graph::add(int a, int b) {
  check(a);
  check(b);
  Node n{Op::Add, {a, b}, cicada::add(nodes_[a].value, nodes_[b].value), {}, {}, 0, 0, 0,
         nodes_[a].needs_grad || nodes_[b].needs_grad};
  return push(std::move(n));
}

int Graph::sub(int a, int b) {
  check(a);
  check(b);
  Node n{Op::Sub, {a, b}, cicada::sub(nodes_[a].value, nodes_[b].value), {}, {}, 0, 0, 0,
         nodes_[a].needs_grad || nodes_[b].needs_grad};
  return push(std::move(n));
}

int Graph::scale(int a, double s) {
  check(a);
  Node n{Op::Scale, {a}, cicada::scale(nodes_[a].value, s), {}, {}, s, 0, 0,
         nodes_[a].needs_grad};
  return push(std::move(n));
}

int Graph::add_bias(int m, int bias) {
  check(m);
  check(bias);
  Node n{Op::AddBias, {m, bias}, cicada::add_bias(nodes_[m].value, nodes_[bias].value), {}, {},
         0, 0, 0, nodes_[m].needs_grad || nodes_[bias].needs_grad};
  return push(std::move(n));
}

int Graph::relu(int a) {
  check(a);
  Node n{Op::Relu, {a}, cicada::relu(nodes_[a].value), {}, {}, 0, 0, 0, nodes_[a].needs_grad};
  return push(std::move(n));
}

int Graph::tanh_(int a) {
  check(a);
  Node n{Op::Tanh, {a}, cicada::tanh_mat(nodes_[a].value), {}, {}, 0, 0, 0,
         nodes_[a].needs_grad};
  return push(std::move(n));
}

int Graph::softmax_rows(int a) {
  check(a);
  Node n{Op::SoftmaxRows, {a}, cicada::softmax_rows(nodes_[a].value), {}, {}, 0, 0, 0,
         nodes_[a].needs_grad};
  return push(std::move(n));
}

int Graph::softmax_cols(int a) {
  check(a);
  Node n{Op::SoftmaxCols, {a}, cicada::softmax_cols(nodes_[a].value), {}, {}, 0, 0, 0,
         nodes_[a].needs_grad};
  return push(std::move(n));
}

int Graph::frob_sq(int a) {
  check(a);
  Node n{Op::FrobSq, {a}, Matrix::scalar(cicada::frob_sq(nodes_[a].value)), {}, {}, 0, 0, 0,
         nodes_[a].needs_grad};
  return push(std::move(n));
}

int Graph::trace_(int a) {
  check(a);
  Node n{Op::Trace, {a}, Matrix::scalar(cicada::trace_of(nodes_[a].value)), {}, {}, 0, 0, 0,
         nodes_[a].needs_grad};
  return push(std::move(n));
}

int Graph::mean_(int a) {
  check(a);
  const Matrix& v = nodes_[a].value;
  require(v.size() > 0, Err::ShapeMismatch, "mean: empty matrix");
  double s = 0.0;
  for (double x : v.a) s += x;
  Node n{Op::Mean, {a}, Matrix::scalar(s / v.size()), {}, {}, 0, 0, 0, nodes_[a].needs_grad};
  return push(std::move(n));
}

int Graph::l1(int a) {
  check(a);
  Node n{Op::L1, {a}, Matrix::scalar(cicada::l1_norm(nodes_[a].value)), {}, {}, 0, 0, 0,
         nodes_[a].needs_grad};
  return push(std::move(n));
}

int Graph::concat_rows(const std::vector<int>& parts) {
  std::vector<Matrix> vals;
  bool ng = false;
  for (int p : parts) {
    check(p);
    vals.push_back(nodes_[p].value);
    ng = ng || nodes_[p].needs_grad;
  }
  Node n{Op::ConcatRows, parts, cicada::concat_rows(vals), {}, {}, 0, 0, 0, ng};
  return push(std::move(n));
}

int Graph::concat_cols(const std::vector<int>& parts) {
  std::vector<Matrix> vals;
  bool ng = false;
  for (int p : parts) {
    check(p);
    vals.push_back(nodes_[p].value);
    ng = ng || nodes_[p].needs_grad;
  }
  Node n{Op::ConcatCols, parts, cicada::concat_cols(vals), {}, {}, 0, 0, 0, ng};
  return push(std::move(n));
}

int Graph::slice_rows(int a, int r0, int r1) {
  check(a);
  Node n{Op::SliceRows, {a}, cicada::slice_rows(nodes_[a].value, r0, r1), {}, {}, 0, r0, r1,
         nodes_[a].needs_grad};
  return push(std::move(n));
}

int Graph::reshape_(int a, int r, int c) {
  check(a);
  Node n{Op::Reshape, {a}, cicada::reshape(nodes_[a].value, r, c), {}, {}, 0, r, c,
         nodes_[a].needs_grad};
  return push(std::move(n));
}

int Graph::pinv(int a, double ridge) {
  check(a);
  const Matrix& h = nodes_[a].value;
  Matrix ht = cicada::transpose(h);
  Matrix g = cicada::matmul(ht, h);
  for (int i = 0; i < g.rows; ++i) g(i, i) += ridge;
  // Cache (AtA + ridge I)^-1 for the backward rule.
  Matrix ginv = solve_spd(g, Matrix::eye(g.rows));
  Node n{Op::Pinv, {a}, cicada::matmul(ginv, ht), {}, std::move(ginv), ridge, 0, 0,
         nodes_[a].needs_grad};
  return push(std::move(n));
}

int Graph::colwise_dot(int a, int b) {
  check(a);
  check(b);
  Node n{Op::ColwiseDot, {a, b}, cicada::colwise_dot(nodes_[a].value, nodes_[b].value), {}, {},
         0, 0, 0, nodes_[a].needs_grad || nodes_[b].needs_grad};
  return push(std::move(n));
}

int Graph::scale_cols(int a, int s) {
  check(a);
  check(s);
  Node n{Op::ScaleCols, {a, s}, cicada::scale_cols(nodes_[a].value, nodes_[s].value), {}, {}, 0,
         0, 0, nodes_[a].needs_grad || nodes_[s].needs_grad};
  return push(std::move(n));
}

void Graph::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.grad.empty()) {
    n.grad = g;
  } else {
    axpy(n.grad, 1.0, g);
  }
}

Matrix Graph::grad(int id) const {
  check(id);
  const Node& n = nodes_[id];
  if (n.grad.empty()) return Matrix(n.value.rows, n.value.cols);
  return n.grad;
}

void Graph::backward(int root) {
  check(root);
  require(nodes_[root].value.rows == 1 && nodes_[root].value.cols == 1, Err::NonScalarRoot,
          "backward: root node is not a 1x1 scalar");
  require(std::isfinite(nodes_[root].value(0, 0)), Err::NonFiniteLoss,
          "backward: loss value is not finite");
  for (Node& n : nodes_) n.grad = Matrix();
  nodes_[root].grad = Matrix::scalar(1.0);

  for (int id = root; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.empty()) continue;
    const Matrix& g = n.grad;
    switch (n.op) {
      case Op::Leaf:
      case Op::Const:
        break;
      case Op::MatMul: {
        const Matrix& a = nodes_[n.in[0]].value;
        const Matrix& b = nodes_[n.in[1]].value;
        if (nodes_[n.in[0]].needs_grad) accumulate(n.in[0], cicada::matmul(g, cicada::transpose(b)));
        if (nodes_[n.in[1]].needs_grad) accumulate(n.in[1], cicada::matmul(cicada::transpose(a), g));
        break;
      }
      case Op::Transpose:
        accumulate(n.in[0], cicada::transpose(g));
        break;
      case Op::Add:
        accumulate(n.in[0], g);
        accumulate(n.in[1], g);
        break;
      case Op::Sub:
        accumulate(n.in[0], g);
        accumulate(n.in[1], cicada::scale(g, -1.0));
        break;
      case Op::Scale:
        accumulate(n.in[0], cicada::scale(g, n.sarg));
        break;
      case Op::AddBias: {
        accumulate(n.in[0], g);
        if (nodes_[n.in[1]].needs_grad) {
          Matrix gb(g.rows, 1);
          for (int i = 0; i < g.rows; ++i) {
            double s = 0.0;
            for (int j = 0; j < g.cols; ++j) s += g(i, j);
            gb(i, 0) = s;
          }
          accumulate(n.in[1], gb);
        }
        break;
      }
      case Op::Relu: {
        const Matrix& a = nodes_[n.in[0]].value;
        Matrix ga(a.rows, a.cols);
        for (int i = 0; i < a.size(); ++i) ga.a[i] = a.a[i] > 0.0 ? g.a[i] : 0.0;
        accumulate(n.in[0], ga);
        break;
      }
      case Op::Tanh: {
        const Matrix& y = n.value;
        Matrix ga(y.rows, y.cols);
        for (int i = 0; i < y.size(); ++i) ga.a[i] = g.a[i] * (1.0 - y.a[i] * y.a[i]);
        accumulate(n.in[0], ga);
        break;
      }
      case Op::SoftmaxRows: {
        const Matrix& y = n.value;
        Matrix ga(y.rows, y.cols);
        for (int i = 0; i < y.rows; ++i) {
          double s = 0.0;
          for (int j = 0; j < y.cols; ++j) s += g(i, j) * y(i, j);
          for (int j = 0; j < y.cols; ++j) ga(i, j) = y(i, j) * (g(i, j) - s);
        }
        accumulate(n.in[0], ga);
        break;
      }
      case Op::SoftmaxCols: {
        const Matrix& y = n.value;
        Matrix ga(y.rows, y.cols);
        for (int j = 0; j < y.cols; ++j) {
          double s = 0.0;
          for (int i = 0; i < y.rows; ++i) s += g(i, j) * y(i, j);
          for (int i = 0; i < y.rows; ++i) ga(i, j) = y(i, j) * (g(i, j) - s);
        }
        accumulate(n.in[0], ga);
        break;
      }
      case Op::FrobSq:
        accumulate(n.in[0], cicada::scale(nodes_[n.in[0]].value, 2.0 * g(0, 0)));
        break;
      case Op::Trace: {
        const Matrix& a = nodes_[n.in[0]].value;
        Matrix ga(a.rows, a.cols);
        for (int i = 0; i < a.rows; ++i) ga(i, i) = g(0, 0);
        accumulate(n.in[0], ga);
        break;
      }
      case Op::Mean: {
        const Matrix& a = nodes_[n.in[0]].value;
        accumulate(n.in[0], Matrix(a.rows, a.cols, g(0, 0) / a.size()));
        break;
      }
      case Op::L1: {
        const Matrix& a = nodes_[n.in[0]].value;
        Matrix ga(a.rows, a.cols);
        for (int i = 0; i < a.size(); ++i)
          ga.a[i] = a.a[i] > 0.0 ? g(0, 0) : (a.a[i] < 0.0 ? -g(0, 0) : 0.0);
        accumulate(n.in[0], ga);
        break;
      }
      case Op::ConcatRows: {
        int at = 0;
        for (int p : n.in) {
          const int pr = nodes_[p].value.rows;
          if (nodes_[p].needs_grad) accumulate(p, cicada::slice_rows(g, at, at + pr));
          at += pr;
        }
        break;
      }
      case Op::ConcatCols: {
        int at = 0;
        for (int p : n.in) {
          const Matrix& pv = nodes_[p].value;
          if (nodes_[p].needs_grad) {
            Matrix gp(pv.rows, pv.cols);
            for (int i = 0; i < pv.rows; ++i)
              for (int j = 0; j < pv.cols; ++j) gp(i, j) = g(i, at + j);
            accumulate(p, gp);
          }
          at += pv.cols;
        }
        break;
      }
      case Op::SliceRows: {
        const Matrix& a = nodes_[n.in[0]].value;
        Matrix ga(a.rows, a.cols);
        for (int i = 0; i < g.rows; ++i)
          for (int j = 0; j < g.cols; ++j) ga(n.iarg0 + i, j) = g(i, j);
        accumulate(n.in[0], ga);
        break;
      }
      case Op::Reshape: {
        const Matrix& a = nodes_[n.in[0]].value;
        accumulate(n.in[0], cicada::reshape(g, a.rows, a.cols));
        break;
      }
      case Op::Pinv: {
        // P = B Ht with B = (HtH + ridge I)^-1.  With M = B g H B:
        //   dL/dH = g^T B - H (M + M^T).
        const Matrix& h = nodes_[n.in[0]].value;
        const Matrix& binv = n.aux;
        Matrix m = cicada::matmul(cicada::matmul(binv, g), cicada::matmul(h, binv));
        Matrix sym = cicada::add(m, cicada::transpose(m));
        Matrix ga = cicada::sub(cicada::matmul(cicada::transpose(g), binv),
                                cicada::matmul(h, sym));
        accumulate(n.in[0], ga);
        break;
      }
      case Op::ColwiseDot: {
        const Matrix& a = nodes_[n.in[0]].value;
        const Matrix& b = nodes_[n.in[1]].value;
        if (nodes_[n.in[0]].needs_grad) accumulate(n.in[0], cicada::scale_cols(b, g));
        if (nodes_[n.in[1]].needs_grad) accumulate(n.in[1], cicada::scale_cols(a, g));
        break;
      }
      case Op::ScaleCols: {
        const Matrix& a = nodes_[n.in[0]].value;
        const Matrix& s = nodes_[n.in[1]].value;
        if (nodes_[n.in[0]].needs_grad) accumulate(n.in[0], cicada::scale_cols(g, s));
        if (nodes_[n.in[1]].needs_grad) accumulate(n.in[1], cicada::colwise_dot(g, a));
        break;
      }
    }
    if (n.op != Op::Leaf && n.op != Op::Const) n.grad = Matrix();  // free intermediates
  }

  for (const Node& n : nodes_) {
    if (n.op == Op::Leaf && !n.grad.empty()) {
      require(n.grad.all_finite(), Err::NonFiniteGradient,
              "backward: non-finite gradient at a leaf");
    }
  }
}

}  // namespace cicada
