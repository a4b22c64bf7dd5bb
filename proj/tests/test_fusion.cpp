#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "cicada/errors.hpp"
#include "cicada/fusion.hpp"
#include "cicada/graph.hpp"
#include "cicada/matrix.hpp"
#include "cicada/rng.hpp"
#include "doctest.h"

using namespace cicada;

namespace {

FusionConfig small_cfg() {
  FusionConfig cfg;
  cfg.K = 4;
  cfg.heads = 2;
  cfg.expert_heads = 2;
  cfg.mlp_hidden = 3;
  return cfg;
}

Matrix random_matrix(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.a) v = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("init validates head divisibility and is deterministic") {
  FusionConfig cfg = small_cfg();
  FusionParams a = init_fusion(2, 6, cfg, Rng(3));
  FusionParams b = init_fusion(2, 6, cfg, Rng(3));
  CHECK(bit_equal(a.p, b.p));
  CHECK(a.p.at("e0_Wq0").rows == 2);
  CHECK(a.p.at("e0_Wq0").cols == 6);
  CHECK(a.p.at("e1_Wk1").cols == 4);
  CHECK(a.p.at("x_Wo").rows == 4);
  CHECK(a.p.at("mlp_W2").rows == 6);

  FusionConfig bad = cfg;
  bad.heads = 3;
  CHECK_THROWS_AS(init_fusion(2, 6, bad, Rng(3)), Error);
}

TEST_CASE("single meta-domain attention ignores the query entirely") {
  FusionConfig cfg = small_cfg();
  FusionParams f = init_fusion(1, 6, cfg, Rng(7));
  Rng rng(11);
  Matrix feat = random_matrix(4, 5, rng);
  Matrix x = random_matrix(6, 5, rng);

  FusionEval ev1 = evaluate_fusion(f, {{feat}}, x);
  FusionParams f2 = f;
  for (int l = 0; l < cfg.heads; ++l)
    for (double& v : f2.p.at("e0_Wq" + std::to_string(l)).a) v = rng.normal();
  FusionEval ev2 = evaluate_fusion(f2, {{feat}}, x);
  CHECK(std::sqrt(frob_sq(sub(ev1.z_expert[0], ev2.z_expert[0]))) < 1e-14);

  // And identical duplicate columns collapse to the single-column output.
  FusionEval ev3 = evaluate_fusion(f, {{feat, feat}}, x);
  CHECK(std::sqrt(frob_sq(sub(ev1.z_expert[0], ev3.z_expert[0]))) < 1e-12);
}

TEST_CASE("identical expert columns yield uniform weights that sum to one") {
  FusionConfig cfg = small_cfg();
  FusionParams f = init_fusion(2, 6, cfg, Rng(13));
  // Clone expert 0's attention block into expert 1 so z_expert columns match.
  for (int l = 0; l < cfg.heads; ++l) {
    f.p.at("e1_Wq" + std::to_string(l)) = f.p.at("e0_Wq" + std::to_string(l));
    f.p.at("e1_Wk" + std::to_string(l)) = f.p.at("e0_Wk" + std::to_string(l));
    f.p.at("e1_Wv" + std::to_string(l)) = f.p.at("e0_Wv" + std::to_string(l));
  }
  f.p.at("e1_Wo") = f.p.at("e0_Wo");

  Rng rng(17);
  Matrix feat = random_matrix(4, 3, rng);
  Matrix x = random_matrix(6, 3, rng);
  FusionEval ev = evaluate_fusion(f, {{feat}, {feat}}, x);
  for (int t = 0; t < 3; ++t) {
    CHECK(ev.weights(0, t) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(ev.weights(1, t) == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("weight columns are a probability vector on random input") {
  FusionConfig cfg = small_cfg();
  FusionParams f = init_fusion(3, 6, cfg, Rng(19));
  Rng rng(23);
  std::vector<std::vector<Matrix>> feats(3);
  feats[0] = {random_matrix(4, 7, rng), random_matrix(4, 7, rng)};
  feats[1] = {random_matrix(4, 7, rng)};
  feats[2] = {random_matrix(4, 7, rng), random_matrix(4, 7, rng), random_matrix(4, 7, rng)};
  Matrix x = random_matrix(6, 7, rng);
  FusionEval ev = evaluate_fusion(f, feats, x);
  REQUIRE(ev.weights.rows == 3);
  REQUIRE(ev.weights.cols == 7);
  for (int t = 0; t < 7; ++t) {
    double s = 0;
    for (int j = 0; j < 3; ++j) {
      CHECK(ev.weights(j, t) >= 0.0);
      CHECK(ev.weights(j, t) <= 1.0);
      s += ev.weights(j, t);
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("swapping two experts swaps their weight rows") {
  FusionConfig cfg = small_cfg();
  FusionParams f = init_fusion(2, 6, cfg, Rng(29));
  Rng rng(31);
  Matrix f0 = random_matrix(4, 4, rng);
  Matrix f1 = random_matrix(4, 4, rng);
  Matrix x = random_matrix(6, 4, rng);

  FusionEval ev = evaluate_fusion(f, {{f0}, {f1}}, x);

  FusionParams swapped = f;
  for (int l = 0; l < cfg.heads; ++l) {
    for (const char* role : {"Wq", "Wk", "Wv"}) {
      std::string n0 = "e0_" + std::string(role) + std::to_string(l);
      std::string n1 = "e1_" + std::string(role) + std::to_string(l);
      Matrix tmp = swapped.p.at(n0);
      swapped.p.at(n0) = swapped.p.at(n1);
      swapped.p.at(n1) = tmp;
    }
  }
  Matrix tmp = swapped.p.at("e0_Wo");
  swapped.p.at("e0_Wo") = swapped.p.at("e1_Wo");
  swapped.p.at("e1_Wo") = tmp;

  FusionEval ev2 = evaluate_fusion(swapped, {{f1}, {f0}}, x);
  for (int t = 0; t < 4; ++t) {
    CHECK(ev2.weights(0, t) == doctest::Approx(ev.weights(1, t)).epsilon(1e-12));
    CHECK(ev2.weights(1, t) == doctest::Approx(ev.weights(0, t)).epsilon(1e-12));
  }
}

TEST_CASE("reconstruction loss fixtures: exact reproduction and zero head") {
  FusionConfig cfg = small_cfg();
  FusionParams f = init_fusion(1, 6, cfg, Rng(37));
  Rng rng(41);
  Matrix feat = random_matrix(4, 3, rng);

  // Constant head reproducing constant windows exactly.
  Matrix c = random_matrix(6, 1, rng);
  f.p.at("mlp_W2") = Matrix(6, 3);
  f.p.at("mlp_b2") = c;
  Matrix x(6, 3);
  for (int i = 0; i < 6; ++i)
    for (int t = 0; t < 3; ++t) x(i, t) = c(i, 0);
  FusionEval ev = evaluate_fusion(f, {{feat}}, x);
  CHECK(ev.recon_loss < 1e-28);
  CHECK(std::sqrt(frob_sq(sub(ev.xhat, x))) < 1e-14);

  // Zero head against unit-norm windows: mean residual energy is 1.
  f.p.at("mlp_b2") = Matrix(6, 1);
  Matrix xu(6, 3);
  for (int t = 0; t < 3; ++t) {
    double nrm = 0;
    for (int i = 0; i < 6; ++i) {
      xu(i, t) = rng.normal();
      nrm += xu(i, t) * xu(i, t);
    }
    nrm = std::sqrt(nrm);
    for (int i = 0; i < 6; ++i) xu(i, t) /= nrm;
  }
  FusionEval ev2 = evaluate_fusion(f, {{feat}}, xu);
  CHECK(ev2.recon_loss == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("evaluate_fusion reconstruction matches its own reported loss") {
  FusionConfig cfg = small_cfg();
  FusionParams f = init_fusion(2, 6, cfg, Rng(43));
  Rng rng(47);
  std::vector<std::vector<Matrix>> feats = {{random_matrix(4, 5, rng)},
                                            {random_matrix(4, 5, rng), random_matrix(4, 5, rng)}};
  Matrix x = random_matrix(6, 5, rng);
  FusionEval ev = evaluate_fusion(f, feats, x);
  CHECK(ev.recon_loss == doctest::Approx(frob_sq(sub(x, ev.xhat)) / 5.0).epsilon(1e-12));
}

TEST_CASE("reconstruction gradients match finite differences for every matrix") {
  FusionConfig cfg = small_cfg();
  FusionParams f = init_fusion(2, 6, cfg, Rng(53));
  Rng rng(59);
  std::vector<std::vector<Matrix>> feats = {{random_matrix(4, 4, rng), random_matrix(4, 4, rng)},
                                            {random_matrix(4, 4, rng)}};
  Matrix x = random_matrix(6, 4, rng);

  Graph g;
  FusionIds ids = fusion_leaves(g, f);
  int Xc = g.constant(x);
  std::vector<std::vector<int>> nodes(feats.size());
  for (size_t j = 0; j < feats.size(); ++j)
    for (const Matrix& m : feats[j]) nodes[j].push_back(g.constant(m));
  FusionBuild b = build_fusion(g, f, ids, nodes, Xc);
  g.backward(b.recon_loss);

  const double step = 1e-5, tol = 1e-4;
  for (const auto& it : f.p.items) {
    Matrix grad = g.grad(ids.ids.at(it.first));
    for (size_t i = 0; i < it.second.a.size(); ++i) {
      FusionParams fp = f;
      double keep = fp.p.at(it.first).a[i];
      fp.p.at(it.first).a[i] = keep + step;
      double up = evaluate_fusion(fp, feats, x).recon_loss;
      fp.p.at(it.first).a[i] = keep - step;
      double down = evaluate_fusion(fp, feats, x).recon_loss;
      double fd = (up - down) / (2 * step);
      double denom = std::max({1.0, std::fabs(fd), std::fabs(grad.a[i])});
      CAPTURE(it.first);
      CAPTURE(i);
      CHECK(std::fabs(fd - grad.a[i]) <= tol * denom);
    }
  }
}

TEST_CASE("build_fusion rejects inconsistent inputs") {
  FusionConfig cfg = small_cfg();
  FusionParams f = init_fusion(2, 6, cfg, Rng(61));
  Rng rng(67);
  Matrix x = random_matrix(6, 2, rng);
  Matrix feat = random_matrix(4, 2, rng);

  Graph g;
  FusionIds ids = fusion_constants(g, f);
  int Xc = g.constant(x);
  std::vector<std::vector<int>> one = {{g.constant(feat)}};
  CHECK_THROWS_AS(build_fusion(g, f, ids, one, Xc), Error);  // expert count mismatch

  CHECK_THROWS_AS(evaluate_fusion(f, {{feat}, {}}, x), Error);  // empty meta-domain list
}
