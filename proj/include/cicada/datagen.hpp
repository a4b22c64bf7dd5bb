#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cicada/matrix.hpp"
#include "cicada/rng.hpp"

namespace cicada {

enum class GenKind { pca, kpca, nmf, tcpd, sdl };

GenKind gen_kind_from_string(const std::string& s);
const char* gen_kind_name(GenKind k);

struct GenConfig {
  GenKind kind = GenKind::pca;
  int T = 800;  // series length in time steps
  int L = 10;   // tcpd block height (rows per block); ignored elsewhere
  int p = 5;    // latent dimension
  int d = 40;   // observed variables
  std::uint64_t seed = 0;
  // Contiguous domain blocks as fractions of T (empty: single domain).  Each
  // domain draws fresh mixing matrices; only pca and tcpd support this.
  std::vector<double> domain_fractions;
  double spike_rate = 0.0;   // fraction of rows turned into labeled spikes
  double spike_sigma = 5.0;  // offset in per-variable standard deviations
};

struct Dataset {
  Matrix x;                 // T x d
  std::vector<int> domain;  // per-time domain id; empty for single domain
  std::vector<int> label;   // per-time anomaly labels; empty unless spikes
};

// Shared latent driver: T x p matrix; column j is a slow sinusoid pair with
// a fixed 0.1 offset (cos-flavored for even j, sin-flavored for odd j).
Matrix latent_series(int p, int T);

Dataset generate(const GenConfig& cfg);

// Adds +sigma_mult standard deviations (per variable) to `count` rows chosen
// without replacement, marking them in `label`.
void inject_spikes(Matrix& x, std::vector<int>& label, int count, double sigma_mult, Rng rng);

}  // namespace cicada
