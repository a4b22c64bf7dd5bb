#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "cicada/graph.hpp"
#include "cicada/rng.hpp"

using namespace cicada;

namespace {

Matrix random_matrix(int r, int c, Rng& rng, double sd = 1.0) {
  Matrix m(r, c);
  for (double& v : m.a) v = sd * rng.normal();
  return m;
}

// Central finite-difference check of a scalar expression against reverse-mode
// gradients.  `build` must construct the same expression from fresh leaves.
void check_gradients(const std::vector<Matrix>& inputs,
                     const std::function<int(Graph&, const std::vector<int>&)>& build,
                     double step = 1e-5, double tol = 1e-4) {
  Graph g;
  std::vector<int> ids;
  for (const Matrix& m : inputs) ids.push_back(g.leaf(m));
  int root = build(g, ids);
  g.backward(root);

  auto eval = [&](const std::vector<Matrix>& xs) {
    Graph h;
    std::vector<int> hids;
    for (const Matrix& m : xs) hids.push_back(h.leaf(m));
    return h.val(build(h, hids))(0, 0);
  };

  for (size_t which = 0; which < inputs.size(); ++which) {
    Matrix grad = g.grad(ids[which]);
    for (int e = 0; e < inputs[which].size(); ++e) {
      std::vector<Matrix> plus = inputs, minus = inputs;
      plus[which].a[e] += step;
      minus[which].a[e] -= step;
      const double fd = (eval(plus) - eval(minus)) / (2.0 * step);
      const double an = grad.a[e];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      CHECK_MESSAGE(std::abs(fd - an) / denom < tol,
                    "input ", which, " entry ", e, " fd=", fd, " analytic=", an);
    }
  }
}

}  // namespace

TEST_CASE("hand-checked gradient: d/dA tr(A B) = B^T") {
  Graph g;
  Matrix a(2, 2, {1, 2, 3, 4});
  Matrix b(2, 2, {5, 6, 7, 8});
  int ia = g.leaf(a);
  int ib = g.constant(b);
  int root = g.trace_(g.matmul(ia, ib));
  g.backward(root);
  Matrix grad = g.grad(ia);
  Matrix bt = transpose(b);
  for (int i = 0; i < 4; ++i) CHECK(grad.a[i] == doctest::Approx(bt.a[i]));
}

TEST_CASE("hand-checked gradient: d/dA ||A||_F^2 = 2A") {
  Graph g;
  Matrix a(2, 3, {1, -2, 3, 0, 5, -6});
  int ia = g.leaf(a);
  g.backward(g.frob_sq(ia));
  Matrix grad = g.grad(ia);
  for (int i = 0; i < a.size(); ++i) CHECK(grad.a[i] == doctest::Approx(2 * a.a[i]));
}

TEST_CASE("backward requires scalar root and finite loss") {
  Graph g;
  int a = g.leaf(Matrix(2, 2, {1, 2, 3, 4}));
  CHECK_THROWS_AS(g.backward(a), Error);
  try {
    g.backward(a);
  } catch (const Error& e) {
    CHECK(e.code() == Err::NonScalarRoot);
  }

  Graph h;
  int x = h.leaf(Matrix(1, 1, {1e308}));
  int r = h.frob_sq(h.scale(x, 1e10));  // overflows to inf
  try {
    h.backward(r);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Err::NonFiniteLoss);
  }
}

TEST_CASE("constants receive no gradient") {
  Graph g;
  int c = g.constant(Matrix(2, 1, {1, 2}));
  int l = g.leaf(Matrix(1, 2, {3, 4}));
  int root = g.frob_sq(g.matmul(l, c));
  g.backward(root);
  Matrix gc = g.grad(c);
  for (double v : gc.a) CHECK(v == 0.0);
  Matrix gl = g.grad(l);
  CHECK(frob_sq(gl) > 0.0);
}

TEST_CASE("repeated backward calls reset accumulators") {
  Graph g;
  int a = g.leaf(Matrix(2, 1, {1, 2}));
  int root = g.frob_sq(a);
  g.backward(root);
  Matrix g1 = g.grad(a);
  g.backward(root);
  Matrix g2 = g.grad(a);
  for (int i = 0; i < 2; ++i) CHECK(g1.a[i] == g2.a[i]);
}

TEST_CASE("finite differences: matmul chain") {
  Rng rng(101);
  check_gradients({random_matrix(3, 4, rng), random_matrix(4, 2, rng)},
                  [](Graph& g, const std::vector<int>& in) {
                    return g.frob_sq(g.matmul(in[0], in[1]));
                  });
}

TEST_CASE("finite differences: transpose, add, sub, scale") {
  Rng rng(102);
  check_gradients({random_matrix(3, 3, rng), random_matrix(3, 3, rng)},
                  [](Graph& g, const std::vector<int>& in) {
                    int t = g.transpose(in[0]);
                    int s = g.sub(g.add(t, in[1]), g.scale(in[0], 0.7));
                    return g.frob_sq(s);
                  });
}

TEST_CASE("finite differences: relu and tanh") {
  Rng rng(103);
  check_gradients({random_matrix(4, 4, rng)},
                  [](Graph& g, const std::vector<int>& in) {
                    return g.frob_sq(g.relu(g.tanh_(in[0])));
                  });
}

TEST_CASE("finite differences: softmax rows and cols") {
  Rng rng(104);
  Matrix w = random_matrix(3, 5, rng);
  check_gradients({random_matrix(3, 5, rng)},
                  [w](Graph& g, const std::vector<int>& in) {
                    int c = g.constant(w);
                    int s = g.softmax_rows(in[0]);
                    int t = g.softmax_cols(in[0]);
                    int mix = g.add(g.add(s, t), c);
                    return g.frob_sq(mix);
                  });
}

TEST_CASE("finite differences: trace, mean, l1") {
  Rng rng(105);
  // Keep entries away from 0 so the l1 subgradient is smooth at the FD step.
  Matrix a = random_matrix(4, 4, rng);
  for (double& v : a.a)
    if (std::abs(v) < 0.1) v = v < 0 ? v - 0.2 : v + 0.2;
  check_gradients({a}, [](Graph& g, const std::vector<int>& in) {
    int t = g.trace_(g.matmul(in[0], in[0]));
    int m = g.mean_(in[0]);
    int l = g.l1(in[0]);
    return g.add(g.add(t, m), l);
  });
}

TEST_CASE("l1 subgradient at exact zero is zero") {
  Graph g;
  int a = g.leaf(Matrix(2, 2, {0.0, 1.0, -2.0, 0.0}));
  g.backward(g.l1(a));
  Matrix grad = g.grad(a);
  CHECK(grad.a[0] == 0.0);
  CHECK(grad.a[1] == 1.0);
  CHECK(grad.a[2] == -1.0);
  CHECK(grad.a[3] == 0.0);
}

TEST_CASE("finite differences: add_bias, colwise_dot, scale_cols, slice, concat, reshape") {
  Rng rng(106);
  check_gradients(
      {random_matrix(3, 4, rng), random_matrix(3, 1, rng), random_matrix(3, 4, rng)},
      [](Graph& g, const std::vector<int>& in) {
        int ab = g.add_bias(in[0], in[1]);
        int cd = g.colwise_dot(ab, in[2]);  // 1 x 4
        int sc = g.scale_cols(in[2], cd);   // 3 x 4
        int cat = g.concat_rows({ab, sc});  // 6 x 4
        int sl = g.slice_rows(cat, 1, 5);   // 4 x 4
        int rs = g.reshape_(sl, 2, 8);
        int cc = g.concat_cols({rs, g.reshape_(in[0], 2, 6)});  // 2 x 14
        return g.frob_sq(cc);
      });
}

TEST_CASE("finite differences: pinv with ridge") {
  Rng rng(107);
  Matrix x = random_matrix(6, 3, rng);
  check_gradients({random_matrix(6, 3, rng)},
                  [x](Graph& g, const std::vector<int>& in) {
                    int c = g.constant(x);
                    int p = g.pinv(in[0], 1e-6);    // 3 x 6
                    int proj = g.matmul(in[0], p);  // 6 x 6
                    int err = g.sub(c, g.matmul(proj, c));
                    return g.frob_sq(err);
                  },
                  1e-6, 5e-4);
}

TEST_CASE("finite differences: randomized mixed graphs over the primitive set") {
  for (int seed = 0; seed < 50; ++seed) {
    Rng rng(1000 + seed);
    const int n = 2 + static_cast<int>(rng.below(6));
    const int m = 2 + static_cast<int>(rng.below(6));
    Matrix a = random_matrix(n, m, rng);
    Matrix b = random_matrix(m, n, rng);
    for (double& v : b.a)
      if (std::abs(v) < 0.1) v = v < 0 ? v - 0.2 : v + 0.2;
    check_gradients({a, b}, [](Graph& g, const std::vector<int>& in) {
      int prod = g.matmul(in[0], in[1]);  // n x n
      int t1 = g.tanh_(prod);
      int s = g.softmax_cols(t1);
      int r = g.relu(g.sub(s, g.scale(t1, 0.3)));
      int tr = g.trace_(g.matmul(r, g.transpose(r)));
      int l = g.l1(in[1]);
      int me = g.mean_(g.add(in[0], in[0]));
      return g.add(g.add(tr, l), me);
    });
  }
}

TEST_CASE("graph values match plain kernel evaluation") {
  Rng rng(108);
  Matrix a = random_matrix(4, 5, rng);
  Matrix b = random_matrix(5, 3, rng);
  Graph g;
  int ia = g.constant(a);
  int ib = g.constant(b);
  Matrix expect = matmul(a, b);
  const Matrix& got = g.val(g.matmul(ia, ib));
  for (int i = 0; i < expect.size(); ++i) CHECK(got.a[i] == expect.a[i]);
}
