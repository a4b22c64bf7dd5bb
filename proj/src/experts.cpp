#include "cicada/experts.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "cicada/errors.hpp"

namespace cicada {

namespace {

const char* kKindNames[] = {"pca", "kpca", "sfa", "nmf", "tcpd", "sdl", "mlp_ae"};

Matrix gaussian(int rows, int cols, Rng& rng, double scale) {
  Matrix m(rows, cols);
  for (double& v : m.a) v = rng.normal() * scale;
  return m;
}

Matrix unit_column(Matrix v) {
  double n = std::sqrt(frob_sq(v));
  require(n > 1e-12, Err::RankDeficient, "factor vector has near-zero norm");
  for (double& x : v.a) x /= n;
  return v;
}

Matrix sym(const Matrix& m) {
  Matrix s = transpose(m);
  for (size_t i = 0; i < s.a.size(); ++i) s.a[i] = 0.5 * (s.a[i] + m.a[i]);
  return s;
}

bool orthonormal_constrained(ExpertKind kind, const std::string& name) {
  switch (kind) {
    case ExpertKind::pca:
    case ExpertKind::kpca:
    case ExpertKind::sfa:
      return name == "W";
    case ExpertKind::tcpd:
      return !name.empty() && (name[0] == 'a' || name[0] == 'b');
    default:
      return false;
  }
}

std::vector<double> colwise_sq_sum(const Matrix& m) {
  std::vector<double> s(m.cols, 0.0);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) s[j] += m(i, j) * m(i, j);
  return s;
}

// B [pinv(B) X] reconstruction residual, mean squared norm per column.
int residual_loss_node(Graph& g, int B, int Xc, double ridge, int n) {
  int codes = g.matmul(g.pinv(B, ridge), Xc);
  int xhat = g.matmul(B, codes);
  return g.scale(g.frob_sq(g.sub(Xc, xhat)), 1.0 / n);
}

int tcpd_basis_node(Graph& g, const ExpertState& e, const PayloadIds& p) {
  std::vector<int> cols;
  for (int r = 0; r < e.cfg.R; ++r) {
    int a = p.train.at("a" + std::to_string(r));
    int b = p.train.at("b" + std::to_string(r));
    cols.push_back(g.reshape_(g.matmul(a, g.transpose(b)), e.vec_dim(), 1));
  }
  return g.concat_cols(cols);
}

int encoder_node(Graph& g, const PayloadIds& p, int Xc) {
  int h = g.tanh_(g.add_bias(g.matmul(p.train.at("enc1"), Xc), p.train.at("enc1b")));
  return g.add_bias(g.matmul(p.train.at("enc2"), h), p.train.at("enc2b"));
}

int payload_decoder_node(Graph& g, const PayloadIds& p, int codes) {
  int h = g.tanh_(g.add_bias(g.matmul(p.train.at("dec1"), codes), p.train.at("dec1b")));
  return g.add_bias(g.matmul(p.train.at("dec2"), h), p.train.at("dec2b"));
}

int shared_decoder_node(Graph& g, const SharedIds& s, int f) {
  int h = g.tanh_(g.add_bias(g.matmul(s.ids.at("dec1"), f), s.ids.at("dec1b")));
  return g.add_bias(g.matmul(s.ids.at("dec2"), h), s.ids.at("dec2b"));
}

int kpca_kernel_constant(Graph& g, const PayloadIds& p, const Matrix& X) {
  const Matrix& landmarks = g.val(p.fixed.at("landmarks"));
  double h = g.val(p.fixed.at("bandwidth"))(0, 0);
  return g.constant(kernel_columns(landmarks, h, X));
}

void check_batch(const ExpertState& e, const WindowBatch& b) {
  require(b.n() >= 1, Err::EmptySegment, "expert loss over empty window batch");
  require(b.X.rows == e.vec_dim() && b.dX.rows == e.vec_dim() && b.dX.cols == b.X.cols,
          Err::ShapeMismatch, "window batch does not match expert window shape");
}

}  // namespace

ExpertKind expert_kind_from_string(const std::string& s) {
  for (int i = 0; i < 7; ++i)
    if (s == kKindNames[i]) return static_cast<ExpertKind>(i);
  fail(Err::BadConfig, "unknown expert kind: " + s);
}

const char* expert_kind_name(ExpertKind k) { return kKindNames[static_cast<int>(k)]; }

Matrix& ParamSet::at(const std::string& name) {
  for (auto& it : items)
    if (it.first == name) return it.second;
  fail(Err::BadConfig, "unknown parameter: " + name);
}

const Matrix& ParamSet::at(const std::string& name) const {
  for (const auto& it : items)
    if (it.first == name) return it.second;
  fail(Err::BadConfig, "unknown parameter: " + name);
}

bool ParamSet::has(const std::string& name) const {
  for (const auto& it : items)
    if (it.first == name) return true;
  return false;
}

void ParamSet::set(const std::string& name, Matrix m) {
  for (auto& it : items)
    if (it.first == name) {
      it.second = std::move(m);
      return;
    }
  items.emplace_back(name, std::move(m));
}

double frob_dist_sq(const ParamSet& a, const ParamSet& b) {
  require(a.items.size() == b.items.size(), Err::ShapeMismatch, "parameter sets differ in size");
  double s = 0.0;
  for (size_t i = 0; i < a.items.size(); ++i) {
    require(a.items[i].first == b.items[i].first, Err::ShapeMismatch,
            "parameter sets differ in layout");
    s += frob_sq(sub(a.items[i].second, b.items[i].second));
  }
  return s;
}

bool bit_equal(const ParamSet& a, const ParamSet& b) {
  if (a.items.size() != b.items.size()) return false;
  for (size_t i = 0; i < a.items.size(); ++i) {
    const Matrix& x = a.items[i].second;
    const Matrix& y = b.items[i].second;
    if (a.items[i].first != b.items[i].first || x.rows != y.rows || x.cols != y.cols)
      return false;
    if (std::memcmp(x.a.data(), y.a.data(), x.a.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

int ExpertState::raw_dim() const { return kind == ExpertKind::tcpd ? cfg.R : cfg.r; }

WindowBatch batch_from_columns(const WindowBatch& all, const std::vector<int>& idx) {
  WindowBatch b;
  b.L = all.L;
  b.d = all.d;
  b.X = Matrix(all.X.rows, static_cast<int>(idx.size()));
  b.dX = Matrix(all.dX.rows, static_cast<int>(idx.size()));
  for (size_t j = 0; j < idx.size(); ++j) {
    require(idx[j] >= 0 && idx[j] < all.X.cols, Err::ShapeMismatch, "window index out of range");
    for (int i = 0; i < all.X.rows; ++i) {
      b.X(i, static_cast<int>(j)) = all.X(i, idx[j]);
      b.dX(i, static_cast<int>(j)) = all.dX(i, idx[j]);
    }
  }
  return b;
}

ExpertState init_expert(ExpertKind kind, int L, int d, const ExpertConfig& cfg, Rng rng) {
  require(L >= 1 && d >= 1, Err::BadConfig, "window shape must be positive");
  require(cfg.r >= 1 && cfg.feature_dim >= 1 && cfg.ae_hidden >= 1, Err::BadConfig,
          "expert widths must be positive");
  const int vec = L * d;

  ExpertState e;
  e.kind = kind;
  e.cfg = cfg;
  e.L = L;
  e.d = d;

  DomainParams p;
  Rng pr = rng.split("payload");
  switch (kind) {
    case ExpertKind::pca:
    case ExpertKind::sfa:
      require(cfg.r <= vec, Err::BadConfig, "subspace rank exceeds window dimension");
      p.train.set("W", qr_orthonormalize(gaussian(vec, cfg.r, pr, 1.0)));
      break;
    case ExpertKind::kpca: {
      require(cfg.n_landmark >= 1, Err::BadConfig, "kpca needs at least one landmark");
      require(cfg.r <= cfg.n_landmark, Err::BadConfig, "subspace rank exceeds landmark count");
      p.train.set("W", qr_orthonormalize(gaussian(cfg.n_landmark, cfg.r, pr, 1.0)));
      Rng lr = rng.split("landmarks");
      p.fixed.set("landmarks", gaussian(cfg.n_landmark, vec, lr, 1.0));
      p.fixed.set("bandwidth", Matrix(1, 1, {1.0}));
      break;
    }
    case ExpertKind::nmf:
    case ExpertKind::sdl: {
      Matrix h = gaussian(cfg.r, vec, pr, 0.1);
      for (double& v : h.a) v = std::fabs(v);
      p.train.set("H", h);
      break;
    }
    case ExpertKind::tcpd:
      require(cfg.R >= 1, Err::BadConfig, "tcpd rank must be at least 1");
      for (int r = 0; r < cfg.R; ++r) {
        p.train.set("a" + std::to_string(r), unit_column(gaussian(L, 1, pr, 1.0)));
        p.train.set("b" + std::to_string(r), unit_column(gaussian(d, 1, pr, 1.0)));
      }
      break;
    case ExpertKind::mlp_ae:
      p.train.set("enc1", gaussian(cfg.ae_hidden, vec, pr, 1.0 / std::sqrt(double(vec))));
      p.train.set("enc1b", Matrix(cfg.ae_hidden, 1));
      p.train.set("enc2", gaussian(cfg.r, cfg.ae_hidden, pr, 1.0 / std::sqrt(double(cfg.ae_hidden))));
      p.train.set("enc2b", Matrix(cfg.r, 1));
      p.train.set("dec1", gaussian(cfg.ae_hidden, cfg.r, pr, 1.0 / std::sqrt(double(cfg.r))));
      p.train.set("dec1b", Matrix(cfg.ae_hidden, 1));
      p.train.set("dec2", gaussian(vec, cfg.ae_hidden, pr, 1.0 / std::sqrt(double(cfg.ae_hidden))));
      p.train.set("dec2b", Matrix(vec, 1));
      break;
  }
  e.domains.push_back(std::move(p));
  e.alpha.push_back(1e-2);
  e.created_epoch.push_back(0);

  Rng sr = rng.split("shared");
  const int raw = e.raw_dim();
  e.shared.set("Wp", gaussian(cfg.feature_dim, raw, sr, 1.0 / std::sqrt(double(raw))));
  e.shared.set("bp", Matrix(cfg.feature_dim, 1));
  if (kind == ExpertKind::kpca) {
    e.shared.set("dec1",
                 gaussian(cfg.ae_hidden, cfg.feature_dim, sr, 1.0 / std::sqrt(double(cfg.feature_dim))));
    e.shared.set("dec1b", Matrix(cfg.ae_hidden, 1));
    e.shared.set("dec2", gaussian(vec, cfg.ae_hidden, sr, 1.0 / std::sqrt(double(cfg.ae_hidden))));
    e.shared.set("dec2b", Matrix(vec, 1));
  }
  return e;
}

double median_pairwise_distance(const Matrix& rows) {
  std::vector<double> d;
  d.reserve(static_cast<size_t>(rows.rows) * (rows.rows - 1) / 2);
  for (int i = 0; i < rows.rows; ++i)
    for (int j = i + 1; j < rows.rows; ++j) {
      double s = 0.0;
      for (int c = 0; c < rows.cols; ++c) {
        double t = rows(i, c) - rows(j, c);
        s += t * t;
      }
      d.push_back(std::sqrt(s));
    }
  if (d.empty()) return 1.0;
  std::sort(d.begin(), d.end());
  size_t n = d.size();
  return (n % 2 == 1) ? d[n / 2] : 0.5 * (d[n / 2 - 1] + d[n / 2]);
}

Matrix kernel_columns(const Matrix& landmarks, double bandwidth, const Matrix& X) {
  require(landmarks.cols == X.rows, Err::ShapeMismatch, "landmark width must match window dim");
  require(bandwidth > 0.0, Err::BadConfig, "kernel bandwidth must be positive");
  Matrix k(landmarks.rows, X.cols);
  const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
  for (int i = 0; i < landmarks.rows; ++i)
    for (int t = 0; t < X.cols; ++t) {
      double s = 0.0;
      for (int c = 0; c < landmarks.cols; ++c) {
        double dv = landmarks(i, c) - X(c, t);
        s += dv * dv;
      }
      k(i, t) = std::exp(-s * inv);
    }
  return k;
}

void seed_kpca_landmarks(ExpertState& e, const WindowBatch& all_windows, Rng rng) {
  if (e.kind != ExpertKind::kpca) return;
  const int n = all_windows.n();
  require(n >= 1, Err::EmptySegment, "no windows available for landmark sampling");
  require(all_windows.X.rows == e.vec_dim(), Err::ShapeMismatch,
          "landmark source does not match window shape");
  const int q = e.cfg.n_landmark;

  std::vector<int> pick;
  if (n >= q) {
    pick = rng.sample_without_replacement(n, q);
  } else {
    pick.resize(q);
    for (int i = 0; i < q; ++i) pick[i] = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
  }
  Matrix z(q, e.vec_dim());
  for (int i = 0; i < q; ++i)
    for (int c = 0; c < e.vec_dim(); ++c) z(i, c) = all_windows.X(c, pick[i]);

  double h = median_pairwise_distance(z);
  if (!(h > 0.0)) h = 1.0;
  for (auto& dom : e.domains) {
    dom.fixed.set("landmarks", z);
    dom.fixed.set("bandwidth", Matrix(1, 1, {h}));
  }
}

PayloadIds payload_leaves(Graph& g, const DomainParams& p) {
  PayloadIds ids;
  for (const auto& it : p.train.items) ids.train[it.first] = g.leaf(it.second);
  for (const auto& it : p.fixed.items) ids.fixed[it.first] = g.constant(it.second);
  return ids;
}

PayloadIds payload_constants(Graph& g, const DomainParams& p) {
  PayloadIds ids;
  for (const auto& it : p.train.items) ids.train[it.first] = g.constant(it.second);
  for (const auto& it : p.fixed.items) ids.fixed[it.first] = g.constant(it.second);
  return ids;
}

SharedIds shared_leaves(Graph& g, const ExpertState& e) {
  SharedIds s;
  for (const auto& it : e.shared.items) s.ids[it.first] = g.leaf(it.second);
  return s;
}

SharedIds shared_constants(Graph& g, const ExpertState& e) {
  SharedIds s;
  for (const auto& it : e.shared.items) s.ids[it.first] = g.constant(it.second);
  return s;
}

int build_expert_loss(Graph& g, const ExpertState& e, const PayloadIds& p, const SharedIds& s,
                      const WindowBatch& b) {
  check_batch(e, b);
  const int n = b.n();
  switch (e.kind) {
    case ExpertKind::pca: {
      int Xc = g.constant(b.X);
      int proj = g.matmul(g.transpose(p.train.at("W")), Xc);
      return g.scale(g.frob_sq(proj), -1.0 / n);
    }
    case ExpertKind::kpca: {
      int Xc = g.constant(b.X);
      int KX = kpca_kernel_constant(g, p, b.X);
      int proj = g.matmul(g.transpose(p.train.at("W")), KX);
      int var = g.scale(g.frob_sq(proj), -1.0 / n);
      int f = g.add_bias(g.matmul(s.ids.at("Wp"), proj), s.ids.at("bp"));
      int xhat = shared_decoder_node(g, s, f);
      int rec = g.scale(g.frob_sq(g.sub(Xc, xhat)), 1.0 / n);
      return g.add(var, rec);
    }
    case ExpertKind::sfa: {
      int dXc = g.constant(b.dX);
      int proj = g.matmul(g.transpose(p.train.at("W")), dXc);
      return g.scale(g.frob_sq(proj), 1.0 / n);
    }
    case ExpertKind::nmf: {
      int Xc = g.constant(b.X);
      int B = g.transpose(g.relu(p.train.at("H")));
      return residual_loss_node(g, B, Xc, e.cfg.ridge, n);
    }
    case ExpertKind::sdl: {
      int Xc = g.constant(b.X);
      int H = p.train.at("H");
      int res = residual_loss_node(g, g.transpose(H), Xc, e.cfg.ridge, n);
      return g.add(res, g.scale(g.l1(H), e.cfg.lambda_sdl));
    }
    case ExpertKind::tcpd: {
      int Xc = g.constant(b.X);
      int W = tcpd_basis_node(g, e, p);
      return residual_loss_node(g, W, Xc, e.cfg.ridge, n);
    }
    case ExpertKind::mlp_ae: {
      int Xc = g.constant(b.X);
      int codes = encoder_node(g, p, Xc);
      int xhat = payload_decoder_node(g, p, codes);
      return g.scale(g.frob_sq(g.sub(Xc, xhat)), 1.0 / n);
    }
  }
  fail(Err::BadConfig, "unhandled expert kind");
}

int build_expert_feature(Graph& g, const ExpertState& e, const PayloadIds& p,
                         const SharedIds& s, const WindowBatch& b) {
  check_batch(e, b);
  int raw = -1;
  switch (e.kind) {
    case ExpertKind::pca:
      raw = g.matmul(g.transpose(p.train.at("W")), g.constant(b.X));
      break;
    case ExpertKind::kpca:
      raw = g.matmul(g.transpose(p.train.at("W")), kpca_kernel_constant(g, p, b.X));
      break;
    case ExpertKind::sfa:
      raw = g.matmul(g.transpose(p.train.at("W")), g.constant(b.dX));
      break;
    case ExpertKind::nmf: {
      int B = g.transpose(g.relu(p.train.at("H")));
      raw = g.matmul(g.pinv(B, e.cfg.ridge), g.constant(b.X));
      break;
    }
    case ExpertKind::sdl: {
      int B = g.transpose(p.train.at("H"));
      raw = g.matmul(g.pinv(B, e.cfg.ridge), g.constant(b.X));
      break;
    }
    case ExpertKind::tcpd: {
      int W = tcpd_basis_node(g, e, p);
      raw = g.matmul(g.pinv(W, e.cfg.ridge), g.constant(b.X));
      break;
    }
    case ExpertKind::mlp_ae:
      raw = encoder_node(g, p, g.constant(b.X));
      break;
  }
  return g.add_bias(g.matmul(s.ids.at("Wp"), raw), s.ids.at("bp"));
}

double expert_loss_value(const ExpertState& e, const DomainParams& p, const WindowBatch& b) {
  Graph g;
  PayloadIds pid = payload_constants(g, p);
  SharedIds sid = shared_constants(g, e);
  int root = build_expert_loss(g, e, pid, sid, b);
  double v = g.val(root)(0, 0);
  require(std::isfinite(v), Err::NonFiniteLoss,
          std::string("non-finite loss from expert ") + expert_kind_name(e.kind));
  return v;
}

Matrix expert_feature_value(const ExpertState& e, const DomainParams& p, const WindowBatch& b) {
  Graph g;
  PayloadIds pid = payload_constants(g, p);
  SharedIds sid = shared_constants(g, e);
  return g.val(build_expert_feature(g, e, pid, sid, b));
}

std::vector<double> expert_scores(const ExpertState& e, const DomainParams& p,
                                  const WindowBatch& b) {
  check_batch(e, b);
  Graph g;
  PayloadIds pid = payload_constants(g, p);
  SharedIds sid = shared_constants(g, e);
  switch (e.kind) {
    case ExpertKind::pca: {
      const Matrix& W = p.train.at("W");
      Matrix proj = matmul(W, matmul(transpose(W), b.X));
      return colwise_sq_sum(sub(b.X, proj));
    }
    case ExpertKind::kpca: {
      int f = build_expert_feature(g, e, pid, sid, b);
      Matrix xhat = g.val(shared_decoder_node(g, sid, f));
      return colwise_sq_sum(sub(b.X, xhat));
    }
    case ExpertKind::sfa: {
      require(e.sfa.ready, Err::MissingStats, "sfa statistics not fitted");
      Matrix f = g.val(build_expert_feature(g, e, pid, sid, b));
      std::vector<double> out(f.cols, 0.0);
      const int k = f.rows;
      std::vector<double> v(k);
      for (int t = 0; t < f.cols; ++t) {
        for (int i = 0; i < k; ++i) v[i] = f(i, t) - e.sfa.mean(i, 0);
        double s = 0.0;
        for (int i = 0; i < k; ++i)
          for (int j = 0; j < k; ++j) s += v[i] * e.sfa.cov_inv(i, j) * v[j];
        out[t] = s;
      }
      return out;
    }
    case ExpertKind::nmf:
    case ExpertKind::sdl:
    case ExpertKind::tcpd: {
      Matrix B;
      if (e.kind == ExpertKind::nmf) {
        B = transpose(relu(p.train.at("H")));
      } else if (e.kind == ExpertKind::sdl) {
        B = transpose(p.train.at("H"));
      } else {
        B = g.val(tcpd_basis_node(g, e, pid));
      }
      Matrix codes = matmul(pseudo_inverse(B, e.cfg.ridge), b.X);
      return colwise_sq_sum(sub(b.X, matmul(B, codes)));
    }
    case ExpertKind::mlp_ae: {
      int codes = encoder_node(g, pid, g.constant(b.X));
      Matrix xhat = g.val(payload_decoder_node(g, pid, codes));
      return colwise_sq_sum(sub(b.X, xhat));
    }
  }
  fail(Err::BadConfig, "unhandled expert kind");
}

void project_payload(ExpertKind kind, ParamSet& p) {
  switch (kind) {
    case ExpertKind::pca:
    case ExpertKind::kpca:
    case ExpertKind::sfa:
      p.at("W") = qr_orthonormalize(p.at("W"));
      break;
    case ExpertKind::tcpd:
      for (auto& it : p.items)
        if (!it.first.empty() && (it.first[0] == 'a' || it.first[0] == 'b'))
          it.second = unit_column(std::move(it.second));
      break;
    default:
      break;
  }
}

Matrix constraint_tangent(ExpertKind kind, const std::string& name, const ParamSet& at,
                          const Matrix& grad) {
  if (!orthonormal_constrained(kind, name)) return grad;
  const Matrix& w = at.at(name);
  require(w.rows == grad.rows && w.cols == grad.cols, Err::ShapeMismatch,
          "gradient shape does not match parameter");
  Matrix wtg = matmul(transpose(w), grad);
  return sub(grad, matmul(w, sym(wtg)));
}

ParamSet tangent_gradient(const ExpertState& e, const ParamSet& at,
                          const std::map<std::string, Matrix>& raw) {
  ParamSet out;
  for (const auto& it : at.items) {
    auto found = raw.find(it.first);
    require(found != raw.end(), Err::ShapeMismatch, "missing gradient for " + it.first);
    out.set(it.first, constraint_tangent(e.kind, it.first, at, found->second));
  }
  return out;
}

void fit_sfa_stats(ExpertState& e, const Matrix& features) {
  require(features.cols >= 1, Err::EmptySegment, "sfa statistics need at least one feature");
  const int k = features.rows;
  const int n = features.cols;
  Matrix mean(k, 1);
  for (int i = 0; i < k; ++i) {
    double s = 0.0;
    for (int t = 0; t < n; ++t) s += features(i, t);
    mean(i, 0) = s / n;
  }
  Matrix cov(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      double s = 0.0;
      for (int t = 0; t < n; ++t) s += (features(i, t) - mean(i, 0)) * (features(j, t) - mean(j, 0));
      cov(i, j) = s / n + (i == j ? e.cfg.eps_cov : 0.0);
    }
  e.sfa.mean = std::move(mean);
  e.sfa.cov_inv = solve_spd(cov, Matrix::eye(k));
  e.sfa.ready = true;
}

}  // namespace cicada
