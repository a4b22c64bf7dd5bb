#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "cicada/matrix.hpp"
#include "cicada/rng.hpp"

// Times the OpenMP kernels against their serial reference twins on the shapes
// this codebase actually hits (Ld x n window batches and K x K attention
// blocks), and reports the largest elementwise deviation between the two.

using namespace cicada;

namespace {

Matrix random_matrix(int r, int c, Rng rng) {
  Matrix m(r, c);
  for (double& v : m.a) v = rng.normal();
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.a.size(); ++i) {
    double d = std::abs(a.a[i] - b.a[i]);
    if (d > worst) worst = d;
  }
  return worst;
}

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm-up
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

struct Case {
  std::string name;
  std::function<Matrix()> run;
  int reps = 10;
};

void bench(const Case& c) {
  set_parallel_kernels(false);
  Matrix serial = c.run();
  double t_serial = time_ms([&] { c.run(); }, c.reps);
  set_parallel_kernels(true);
  Matrix parallel = c.run();
  double t_parallel = time_ms([&] { c.run(); }, c.reps);
  std::printf("%-28s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx   max|diff| %.3e\n",
              c.name.c_str(), t_serial, t_parallel, t_serial / t_parallel,
              max_abs_diff(serial, parallel));
}

}  // namespace

int main() {
  Rng rng(42);
  Matrix a1 = random_matrix(400, 400, rng.split("a1"));
  Matrix b1 = random_matrix(400, 400, rng.split("b1"));
  Matrix a2 = random_matrix(1200, 64, rng.split("a2"));
  Matrix b2 = random_matrix(64, 800, rng.split("b2"));
  Matrix a3 = random_matrix(64, 4000, rng.split("a3"));
  Matrix b3 = random_matrix(4000, 64, rng.split("b3"));
  Matrix e1 = random_matrix(800, 800, rng.split("e1"));

  std::vector<Case> cases = {
      {"matmul 400x400 * 400x400", [&] { return matmul(a1, b1); }},
      {"matmul 1200x64 * 64x800", [&] { return matmul(a2, b2); }},
      {"matmul 64x4000 * 4000x64", [&] { return matmul(a3, b3); }},
      {"tanh 800x800", [&] { return tanh_mat(e1); }, 50},
      {"relu 800x800", [&] { return relu(e1); }, 50},
      {"softmax_cols 800x800", [&] { return softmax_cols(e1); }, 50},
  };
  std::printf("kernel benchmark: serial reference vs OpenMP path\n");
  for (const Case& c : cases) bench(c);
  set_parallel_kernels(true);
  return 0;
}
