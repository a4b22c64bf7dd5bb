#pragma once

#include <map>
#include <string>
#include <vector>

#include "cicada/experts.hpp"
#include "cicada/graph.hpp"
#include "cicada/matrix.hpp"
#include "cicada/rng.hpp"

namespace cicada {

struct FusionConfig {
  int K = 16;          // fused feature width (must divide by both head counts)
  int heads = 4;       // meta-domain-level attention heads
  int expert_heads = 4;
  int mlp_hidden = 32;
};

// Two-level attention stack: per-expert fusion over meta-domain features,
// expert-level fusion producing the interpretable weight vector, and the
// reconstruction head.  All matrices live in one flat named set.
struct FusionParams {
  FusionConfig cfg;
  int num_experts = 0;
  int vec = 0;  // Ld, the query width
  ParamSet p;
};

FusionParams init_fusion(int num_experts, int vec_dim, const FusionConfig& cfg, Rng rng);

struct FusionIds {
  std::map<std::string, int> ids;
};

FusionIds fusion_leaves(Graph& g, const FusionParams& f);
FusionIds fusion_constants(Graph& g, const FusionParams& f);

struct FusionBuild {
  std::vector<int> z_expert;  // per expert: K x n fused meta-domain features
  int z_tilde = -1;           // K x n
  int weights = -1;           // num_experts x n, head-averaged attention rows
  int recon_loss = -1;        // scalar, mean squared error over the batch
};

// features[j][k] is the K x n feature node of expert j's meta-domain k.
// Xc is the Ld x n window constant the queries are built from.
FusionBuild build_fusion(Graph& g, const FusionParams& f, const FusionIds& ids,
                         const std::vector<std::vector<int>>& features, int Xc);

struct FusionEval {
  std::vector<Matrix> z_expert;
  Matrix z_tilde;
  Matrix weights;
  Matrix xhat;
  double recon_loss = 0.0;
};

FusionEval evaluate_fusion(const FusionParams& f, const std::vector<std::vector<Matrix>>& features,
                           const Matrix& X);

}  // namespace cicada
