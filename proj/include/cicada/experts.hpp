#pragma once

#include <map>
#include <string>
#include <vector>

#include "cicada/graph.hpp"
#include "cicada/matrix.hpp"
#include "cicada/rng.hpp"

namespace cicada {

enum class ExpertKind { pca, kpca, sfa, nmf, tcpd, sdl, mlp_ae };

ExpertKind expert_kind_from_string(const std::string& s);
const char* expert_kind_name(ExpertKind k);

// Ordered, name-addressed matrix collection.  Iteration order is insertion
// order, which keeps updates, distances and serialization deterministic.
struct ParamSet {
  std::vector<std::pair<std::string, Matrix>> items;

  Matrix& at(const std::string& name);
  const Matrix& at(const std::string& name) const;
  bool has(const std::string& name) const;
  void set(const std::string& name, Matrix m);
};

// Squared Frobenius distance summed over all matrices (shapes must agree).
double frob_dist_sq(const ParamSet& a, const ParamSet& b);
bool bit_equal(const ParamSet& a, const ParamSet& b);

// One meta-domain payload: `train` adapts, `fixed` is carried verbatim
// (kpca landmarks and bandwidth).
struct DomainParams {
  ParamSet train;
  ParamSet fixed;
};

struct ExpertConfig {
  int r = 5;               // subspace rank / raw feature width
  int R = 5;               // tcpd outer-product rank
  double lambda_sdl = 0.01;
  int n_landmark = 64;     // kpca landmark count
  int ae_hidden = 32;      // mlp_ae and kpca-decoder hidden width
  double ridge = 1e-6;     // ridge inside differentiated pseudo-inverses
  double eps_cov = 1e-4;   // T^2 covariance regularizer
  int feature_dim = 16;    // K: width of the shared feature projection
};

struct SfaStats {
  Matrix mean;     // K x 1
  Matrix cov_inv;  // K x K
  bool ready = false;
};

struct ScoreNorm {
  double median = 0.0;
  double mad = 1.0;
  bool ready = false;
};

// One expert: its meta-domain set, per-meta-domain learning rates, the shared
// feature projection, and scoring statistics.
struct ExpertState {
  ExpertKind kind = ExpertKind::pca;
  ExpertConfig cfg;
  int L = 0, d = 0;
  std::vector<DomainParams> domains;
  std::vector<double> alpha;
  std::vector<int> created_epoch;
  ParamSet shared;  // Wp (K x raw), bp (K x 1); kpca adds dec1/dec1b/dec2/dec2b
  SfaStats sfa;
  ScoreNorm norm;

  int m() const { return static_cast<int>(domains.size()); }
  int raw_dim() const;
  int vec_dim() const { return L * d; }
};

// Column-per-window batches: X holds vec'd L x d windows (row-major vec,
// time-major), dX the difference to each window's predecessor in the series.
struct WindowBatch {
  Matrix X;   // Ld x n
  Matrix dX;  // Ld x n
  int L = 0, d = 0;
  int n() const { return X.cols; }
};

WindowBatch batch_from_columns(const WindowBatch& all, const std::vector<int>& idx);

ExpertState init_expert(ExpertKind kind, int L, int d, const ExpertConfig& cfg, Rng rng);

// Replaces the placeholder kpca landmark set with sampled training windows and
// sets the median-heuristic bandwidth.  No-op for other kinds.
void seed_kpca_landmarks(ExpertState& e, const WindowBatch& all_windows, Rng rng);

// RBF kernel of each window against each landmark row: exp(-|z-x|^2 / 2h^2).
Matrix kernel_columns(const Matrix& landmarks, double bandwidth, const Matrix& X);
double median_pairwise_distance(const Matrix& rows);

// Graph wiring: payloads and shared blocks enter a Graph either as leaves
// (trainable) or constants (frozen), and builders reference them by name.
struct PayloadIds {
  std::map<std::string, int> train;
  std::map<std::string, int> fixed;
};
struct SharedIds {
  std::map<std::string, int> ids;
};

PayloadIds payload_leaves(Graph& g, const DomainParams& p);
PayloadIds payload_constants(Graph& g, const DomainParams& p);
SharedIds shared_leaves(Graph& g, const ExpertState& e);
SharedIds shared_constants(Graph& g, const ExpertState& e);

// Mean per-window training loss of one meta-domain over a batch (scalar node).
int build_expert_loss(Graph& g, const ExpertState& e, const PayloadIds& p, const SharedIds& s,
                      const WindowBatch& b);

// K x n feature batch (shared projection applied to the kind's raw feature).
int build_expert_feature(Graph& g, const ExpertState& e, const PayloadIds& p,
                         const SharedIds& s, const WindowBatch& b);

double expert_loss_value(const ExpertState& e, const DomainParams& p, const WindowBatch& b);
Matrix expert_feature_value(const ExpertState& e, const DomainParams& p, const WindowBatch& b);

// Raw (unnormalized) anomaly score per window for one meta-domain payload.
std::vector<double> expert_scores(const ExpertState& e, const DomainParams& p,
                                  const WindowBatch& b);

// Re-establishes the kind's constraints after a gradient step: orthonormal W
// for pca/kpca/sfa, unit-norm factors for tcpd, identity otherwise.
void project_payload(ExpertKind kind, ParamSet& p);

// Stiefel tangent projection g - W sym(W^T g) for orthonormal-constrained
// matrices, identity for everything else.  `at` is the point of evaluation.
Matrix constraint_tangent(ExpertKind kind, const std::string& name, const ParamSet& at,
                          const Matrix& grad);
ParamSet tangent_gradient(const ExpertState& e, const ParamSet& at,
                          const std::map<std::string, Matrix>& raw);

// T^2 statistics from a K x n feature batch.
void fit_sfa_stats(ExpertState& e, const Matrix& features);

}  // namespace cicada
