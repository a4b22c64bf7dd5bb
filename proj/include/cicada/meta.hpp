#pragma once

#include <map>
#include <vector>

#include "cicada/experts.hpp"
#include "cicada/fusion.hpp"

namespace cicada {

struct MetaConfig {
  double lambda1 = 1000.0;   // extraction weight in the overall loss
  double lambda_meta = 1.0;  // learning-rate penalty weight
  double lr = 1e-2;          // SGD step for payloads, shared blocks, fusion
  double alpha_lr = 1e-2;    // step for the per-meta-domain learning rates
  double alpha_min = 1e-6;
  double alpha_max = 1e-1;
  double h_alpha = 5e-4;     // expansion threshold
  int m_cap = 16;            // hard cap on meta-domains per expert
};

// Index of the meta-domain with the lowest training loss; ties break low.
int compute_delta(const ExpertState& e, const WindowBatch& tr);

// Result of one selective adaptation: the selected payload stepped against the
// training loss and re-projected, every other payload bit-identical to base.
struct AdaptedDomains {
  int selected = -1;
  std::vector<ParamSet> payloads;
  ParamSet g_tr;  // constraint-tangent training gradient at the base point
};

AdaptedDomains adapt_domains(const ExpertState& e, int selected, const WindowBatch& tr,
                             double rate);

struct StepResult {
  double total = 0.0;
  double recon = 0.0;       // summed over segments
  double extraction = 0.0;  // summed l_test plus the learning-rate penalty
  double alpha_sum = 0.0;
  std::vector<double> l_test;              // per expert, summed over segments
  std::vector<std::vector<int>> selected;  // per segment, per expert
  Matrix weights;  // expert weights, validation windows of all segments concatenated
};

// One training step over the whole segment batch: select and adapt per expert
// and segment, fuse features of every meta-domain on each validation half,
// and apply a single accumulated SGD step to payloads (first-order, gradient
// at the adapted point applied to the base), shared blocks, fusion parameters,
// and learning rates.  Every selection and every gradient is evaluated at the
// same incoming parameter state, so segments never see mid-epoch drift.
StepResult meta_step(std::vector<ExpertState>& experts, FusionParams& fusion,
                     const std::vector<WindowBatch>& tr, const std::vector<WindowBatch>& val,
                     const MetaConfig& mc,
                     std::vector<std::vector<AdaptedDomains>>* adapted_out = nullptr);

// The per-step objective: reconstruction over fused features of every
// meta-domain plus lambda1 times the selected-payload validation losses.
// Feature inputs are frozen copies; the trainable payload leaves appear only
// in the validation-loss terms (first-order rule), while shared and fusion
// leaves feed every path.
struct CombinedObjective {
  Graph g;
  std::vector<SharedIds> shared_ids;    // per expert, leaves
  std::vector<PayloadIds> payload_ids;  // per expert, selected-payload leaves
  FusionIds fusion_ids;
  std::vector<int> l_test;  // per expert, scalar validation-loss nodes
  FusionBuild fusion;
  int extraction_sum = -1;  // sum of l_test
  int total = -1;           // recon + lambda1 * extraction_sum
};

CombinedObjective build_combined_objective(const std::vector<ExpertState>& experts,
                                           const FusionParams& fusion,
                                           const std::vector<std::vector<ParamSet>>& feature_payloads,
                                           const std::vector<ParamSet>& test_payloads,
                                           const std::vector<int>& selected,
                                           const WindowBatch& val, double lambda1);

// Meta-domain index whose learning rate tops the expansion threshold, or -1.
// Ties break toward the lowest index.
int check_expansion(const ExpertState& e, double h_alpha);

// Appends the adapted payload of the farthest-moved segment as a new
// meta-domain.  `adapted_history` maps segment index to the payload that was
// adapted from meta-domain k during the most recent epoch.  Returns the
// segment whose payload was appended, or -1 (no structural change) when the
// history is empty or the cap is reached.
int expand_meta_domain(ExpertState& e, int k, const std::map<int, ParamSet>& adapted_history,
                       int m_cap, int epoch);

}  // namespace cicada
