#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "cicada/datagen.hpp"

using namespace cicada;

namespace {

bool bit_equal(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) return false;
  for (int i = 0; i < a.size(); ++i)
    if (a.a[i] != b.a[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("latent series frozen values") {
  Matrix z = latent_series(2, 800);
  // j = 0, t = 0: cos(0) + sin(cos(0)) + 0.1 = 1 + sin(1) + 0.1
  CHECK(z(0, 0) == doctest::Approx(1.0 + std::sin(1.0) + 0.1).epsilon(1e-12));
  // j = 1, t = 0: sin(0) + cos(sin(0)) + 0.1 = 1.1
  CHECK(z(0, 1) == doctest::Approx(1.1).epsilon(1e-12));
  // j = 1, t = 1: sin(100/1600) + cos(sin(123/800)) + 0.1
  const double expect = std::sin(100.0 / 1600.0) + std::cos(std::sin(123.0 / 800.0)) + 0.1;
  CHECK(z(1, 1) == doctest::Approx(expect).epsilon(1e-12));
  // All entries live in the sum of two unit-amplitude terms plus offset.
  for (double v : z.a) {
    CHECK(v <= 2.1 + 1e-12);
    CHECK(v >= -1.9 - 1e-12);
  }
}

TEST_CASE("generate: shapes per kind") {
  GenConfig cfg;
  cfg.kind = GenKind::pca;
  cfg.T = 800;
  cfg.d = 40;
  cfg.p = 5;
  Dataset ds = generate(cfg);
  CHECK(ds.x.rows == 800);
  CHECK(ds.x.cols == 40);
  CHECK(ds.domain.empty());
  CHECK(ds.label.empty());

  cfg.kind = GenKind::tcpd;
  cfg.T = 8000;
  cfg.L = 10;
  Dataset tc = generate(cfg);
  CHECK(tc.x.rows == 8000);
  CHECK(tc.x.cols == 40);

  cfg.kind = GenKind::kpca;
  cfg.T = 800;
  Dataset kp = generate(cfg);
  CHECK(kp.x.rows == 800);
  // kpca is noiseless: regenerating with another seed is identical.
  GenConfig cfg2 = cfg;
  cfg2.seed = 999;
  CHECK(bit_equal(kp.x, generate(cfg2).x));
}

TEST_CASE("generate is deterministic in the seed") {
  GenConfig cfg;
  cfg.kind = GenKind::sdl;
  cfg.T = 200;
  cfg.d = 12;
  cfg.p = 10;
  cfg.seed = 5;
  CHECK(bit_equal(generate(cfg).x, generate(cfg).x));
  GenConfig other = cfg;
  other.seed = 6;
  CHECK(!bit_equal(generate(cfg).x, generate(other).x));
}

TEST_CASE("tcpd blocks share one latent value per block") {
  GenConfig cfg;
  cfg.kind = GenKind::tcpd;
  cfg.T = 100;
  cfg.L = 10;
  cfg.p = 3;
  cfg.d = 6;
  cfg.seed = 3;
  Dataset ds = generate(cfg);
  CHECK(ds.x.rows == 100);
  CHECK_THROWS_AS(([&] {
                    GenConfig bad = cfg;
                    bad.T = 101;  // not divisible by L
                    generate(bad);
                  })(),
                  Error);
}

TEST_CASE("sdl mixing keeps at most three active latents per variable") {
  // With noise sd 0.1 and a 3-sparse row of C, each variable is a 3-term
  // combination; verify via regression of x on z (residual should be noise).
  GenConfig cfg;
  cfg.kind = GenKind::sdl;
  cfg.T = 400;
  cfg.d = 8;
  cfg.p = 10;
  cfg.seed = 11;
  Dataset ds = generate(cfg);
  Matrix z = latent_series(cfg.p, cfg.T);
  // Least-squares coefficients per variable: solve z beta = x_col.
  Matrix zty = matmul(transpose(z), ds.x);          // p x d
  Matrix ztz = matmul(transpose(z), z);             // p x p
  Matrix beta = solve_spd(ztz, zty);                // p x d
  for (int j = 0; j < cfg.d; ++j) {
    int big = 0;
    for (int i = 0; i < cfg.p; ++i)
      if (std::abs(beta(i, j)) > 0.05) ++big;
    CHECK(big <= 3);
  }
}

TEST_CASE("multi-domain pca: fractions, labels, distinct mixing") {
  GenConfig cfg;
  cfg.kind = GenKind::pca;
  cfg.T = 800;
  cfg.d = 10;
  cfg.p = 5;
  cfg.seed = 21;
  cfg.domain_fractions = {0.3125, 0.3125, 0.3125, 0.0625};
  Dataset ds = generate(cfg);
  REQUIRE(static_cast<int>(ds.domain.size()) == 800);
  CHECK(ds.domain.front() == 0);
  CHECK(ds.domain[250] == 1);
  CHECK(ds.domain[500] == 2);
  CHECK(ds.domain[750] == 3);
  CHECK(ds.domain.back() == 3);
  int c0 = 0;
  for (int v : ds.domain) c0 += v == 0;
  CHECK(c0 == 250);

  // Different domains draw different mixing matrices: the mean response in
  // domain 0 and 1 to the same latents must differ.
  Matrix z = latent_series(cfg.p, cfg.T);
  double diff = 0.0;
  for (int j = 0; j < cfg.d; ++j) {
    double m0 = 0, m1 = 0;
    for (int t = 0; t < 250; ++t) m0 += ds.x(t, j);
    for (int t = 250; t < 500; ++t) m1 += ds.x(t, j);
    diff += std::abs(m0 - m1) / 250;
  }
  CHECK(diff > 0.1);

  GenConfig bad = cfg;
  bad.kind = GenKind::nmf;
  CHECK_THROWS_AS(generate(bad), Error);
  GenConfig bad2 = cfg;
  bad2.domain_fractions = {0.5, 0.4};
  CHECK_THROWS_AS(generate(bad2), Error);
}

TEST_CASE("multi-domain tcpd aligns domain boundaries with blocks") {
  GenConfig cfg;
  cfg.kind = GenKind::tcpd;
  cfg.T = 8000;
  cfg.L = 10;
  cfg.p = 5;
  cfg.d = 12;
  cfg.seed = 22;
  cfg.domain_fractions = {0.3125, 0.3125, 0.3125, 0.0625};
  Dataset ds = generate(cfg);
  CHECK(ds.domain[0] == 0);
  CHECK(ds.domain[2500] == 1);
  CHECK(ds.domain[5000] == 2);
  CHECK(ds.domain[7500] == 3);
}

TEST_CASE("spike injection: exact count, +5 sigma direction, labels") {
  GenConfig cfg;
  cfg.kind = GenKind::sdl;
  cfg.T = 500;
  cfg.d = 6;
  cfg.p = 10;
  cfg.seed = 31;
  Dataset clean = generate(cfg);
  GenConfig spiked_cfg = cfg;
  spiked_cfg.spike_rate = 0.01;
  Dataset spiked = generate(spiked_cfg);
  REQUIRE(static_cast<int>(spiked.label.size()) == cfg.T);
  const int n_spikes = std::accumulate(spiked.label.begin(), spiked.label.end(), 0);
  CHECK(n_spikes == 5);  // round(0.01 * 500)
  for (int t = 0; t < cfg.T; ++t) {
    for (int j = 0; j < cfg.d; ++j) {
      const double delta = spiked.x(t, j) - clean.x(t, j);
      if (spiked.label[t] == 1) {
        CHECK(delta > 0.0);  // spikes push upward by 5 per-variable sigmas
      } else {
        CHECK(delta == 0.0);
      }
    }
  }
}

TEST_CASE("kind name round trip") {
  for (const char* name : {"pca", "kpca", "nmf", "tcpd", "sdl"}) {
    CHECK(gen_kind_name(gen_kind_from_string(name)) == std::string(name));
  }
  CHECK_THROWS_AS(gen_kind_from_string("svd"), Error);
}
