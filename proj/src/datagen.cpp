#include "cicada/datagen.hpp"

#include <cmath>

namespace cicada {

GenKind gen_kind_from_string(const std::string& s) {
  if (s == "pca") return GenKind::pca;
  if (s == "kpca") return GenKind::kpca;
  if (s == "nmf") return GenKind::nmf;
  if (s == "tcpd") return GenKind::tcpd;
  if (s == "sdl") return GenKind::sdl;
  fail(Err::BadConfig, "unknown dataset kind '" + s + "'");
}

const char* gen_kind_name(GenKind k) {
  switch (k) {
    case GenKind::pca: return "pca";
    case GenKind::kpca: return "kpca";
    case GenKind::nmf: return "nmf";
    case GenKind::tcpd: return "tcpd";
    case GenKind::sdl: return "sdl";
  }
  return "?";
}

Matrix latent_series(int p, int T) {
  require(p >= 1 && T >= 1, Err::BadConfig, "latent_series: p and T must be positive");
  Matrix z(T, p);
  for (int t = 0; t < T; ++t) {
    for (int j = 0; j < p; ++j) {
      const double tt = static_cast<double>(t);
      if (j % 2 == 0) {
        z(t, j) = std::cos(100.0 * j * tt / (2.0 * T)) + std::sin(std::cos(131.0 * tt / T)) + 0.1;
      } else {
        z(t, j) = std::sin(100.0 * j * tt / (2.0 * T)) + std::cos(std::sin(123.0 * tt / T)) + 0.1;
      }
    }
  }
  return z;
}

namespace {

// Domain id per row from cumulative fractions; boundaries rounded to rows.
std::vector<int> domain_rows(int T, const std::vector<double>& fractions) {
  std::vector<int> dom(T, 0);
  double cum = 0.0;
  int row = 0;
  for (size_t i = 0; i < fractions.size(); ++i) {
    cum += fractions[i];
    int end = i + 1 == fractions.size() ? T : static_cast<int>(std::lround(cum * T));
    end = std::min(end, T);
    for (; row < end; ++row) dom[row] = static_cast<int>(i);
  }
  return dom;
}

Matrix normal_matrix(int r, int c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.a) v = rng.normal();
  return m;
}

Matrix uniform_matrix(int r, int c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.a) v = rng.uniform();
  return m;
}

// Mixes z (T x p) through per-domain matrices C_i (d x p): x_t = C_i z_t +
// noise_sd * eps.
Matrix mix_linear(const Matrix& z, int d, const std::vector<Matrix>& c_per_domain,
                  const std::vector<int>& dom, double noise_sd, Rng& noise_rng) {
  Matrix x(z.rows, d);
  for (int t = 0; t < z.rows; ++t) {
    const Matrix& c = c_per_domain[dom.empty() ? 0 : dom[t]];
    for (int i = 0; i < d; ++i) {
      double s = 0.0;
      for (int j = 0; j < z.cols; ++j) s += c(i, j) * z(t, j);
      x(t, i) = s + noise_sd * noise_rng.normal();
    }
  }
  return x;
}

}  // namespace

void inject_spikes(Matrix& x, std::vector<int>& label, int count, double sigma_mult, Rng rng) {
  require(count >= 0 && count <= x.rows, Err::BadConfig, "inject_spikes: bad count");
  label.assign(x.rows, 0);
  if (count == 0) return;
  // Per-variable standard deviation of the clean series.
  std::vector<double> sigma(x.cols, 0.0);
  for (int j = 0; j < x.cols; ++j) {
    double mean = 0.0;
    for (int t = 0; t < x.rows; ++t) mean += x(t, j);
    mean /= x.rows;
    double var = 0.0;
    for (int t = 0; t < x.rows; ++t) var += (x(t, j) - mean) * (x(t, j) - mean);
    sigma[j] = std::sqrt(var / x.rows);
  }
  for (int t : rng.sample_without_replacement(x.rows, count)) {
    for (int j = 0; j < x.cols; ++j) x(t, j) += sigma_mult * sigma[j];
    label[t] = 1;
  }
}

Dataset generate(const GenConfig& cfg) {
  require(cfg.T >= 2 && cfg.d >= 1 && cfg.p >= 1, Err::BadConfig, "generate: bad dimensions");
  const bool multi = !cfg.domain_fractions.empty();
  if (multi) {
    double sum = 0.0;
    for (double f : cfg.domain_fractions) {
      require(f > 0.0, Err::BadConfig, "generate: domain fractions must be positive");
      sum += f;
    }
    require(std::abs(sum - 1.0) < 1e-9, Err::BadConfig, "generate: domain fractions must sum to 1");
    require(cfg.kind == GenKind::pca || cfg.kind == GenKind::tcpd, Err::BadConfig,
            "generate: multi-domain supports only pca and tcpd");
  }

  Rng root(cfg.seed);
  Rng mix_rng = root.split("mixing");
  Rng noise_rng = root.split("noise");
  Dataset out;
  const int n_domains = multi ? static_cast<int>(cfg.domain_fractions.size()) : 1;

  switch (cfg.kind) {
    case GenKind::kpca: {
      // Deterministic nonlinear series: the latent formula applied per
      // observed dimension.
      out.x = latent_series(cfg.d, cfg.T);
      break;
    }
    case GenKind::pca:
    case GenKind::nmf:
    case GenKind::sdl: {
      Matrix z = latent_series(cfg.p, cfg.T);
      std::vector<int> dom = multi ? domain_rows(cfg.T, cfg.domain_fractions) : std::vector<int>{};
      std::vector<Matrix> cs;
      for (int i = 0; i < n_domains; ++i) {
        Matrix c;
        if (cfg.kind == GenKind::nmf) {
          c = uniform_matrix(cfg.d, cfg.p, mix_rng);
        } else {
          c = normal_matrix(cfg.d, cfg.p, mix_rng);
        }
        if (cfg.kind == GenKind::sdl) {
          // Sparse rows: keep three entries per row, zero the rest.
          for (int r = 0; r < cfg.d; ++r) {
            if (cfg.p <= 3) continue;
            std::vector<int> keep = mix_rng.sample_without_replacement(cfg.p, 3);
            std::vector<bool> kept(cfg.p, false);
            for (int idx : keep) kept[idx] = true;
            for (int j = 0; j < cfg.p; ++j)
              if (!kept[j]) c(r, j) = 0.0;
          }
        }
        cs.push_back(std::move(c));
      }
      // The single-domain generators add 0.1 eps; the multi-domain variant is
      // defined with unit noise.
      const double noise_sd = multi ? 1.0 : 0.1;
      out.x = mix_linear(z, cfg.d, cs, dom, noise_sd, noise_rng);
      if (multi) out.domain = std::move(dom);
      break;
    }
    case GenKind::tcpd: {
      require(cfg.L >= 1 && cfg.T % cfg.L == 0, Err::BadConfig,
              "generate: tcpd needs T divisible by L");
      // The series is a stack of T/L bilinear blocks A diag(z_tau) B; the
      // latent sequence runs over block indices.
      const int n_blocks = cfg.T / cfg.L;
      Matrix z = latent_series(cfg.p, n_blocks);
      std::vector<int> dom = multi ? domain_rows(cfg.T, cfg.domain_fractions) : std::vector<int>{};
      std::vector<Matrix> as, bs;
      for (int i = 0; i < n_domains; ++i) {
        as.push_back(normal_matrix(cfg.L, cfg.p, mix_rng));
        bs.push_back(normal_matrix(cfg.p, cfg.d, mix_rng));
      }
      out.x = Matrix(cfg.T, cfg.d);
      for (int tau = 0; tau < n_blocks; ++tau) {
        const int row0 = tau * cfg.L;
        const int di = multi ? dom[row0] : 0;
        const Matrix& a = as[di];
        const Matrix& b = bs[di];
        for (int r = 0; r < cfg.L; ++r) {
          for (int cidx = 0; cidx < cfg.d; ++cidx) {
            double s = 0.0;
            for (int j = 0; j < cfg.p; ++j) s += a(r, j) * z(tau, j) * b(j, cidx);
            out.x(row0 + r, cidx) = s + 0.1 * noise_rng.normal();
          }
        }
      }
      if (multi) out.domain = std::move(dom);
      break;
    }
  }

  if (cfg.spike_rate > 0.0) {
    require(cfg.spike_rate < 1.0, Err::BadConfig, "generate: spike rate must be < 1");
    const int count = static_cast<int>(std::lround(cfg.spike_rate * cfg.T));
    inject_spikes(out.x, out.label, count, cfg.spike_sigma, root.split("spikes"));
  }
  return out;
}

}  // namespace cicada
