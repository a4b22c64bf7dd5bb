#include "cicada/meta.hpp"

#include <cmath>
#include <string>

#include "cicada/errors.hpp"

namespace cicada {

namespace {

double clamp(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

// Gradient of `root` w.r.t. the payload leaves, by parameter name.
std::map<std::string, Matrix> harvest(const Graph& g, const PayloadIds& ids) {
  std::map<std::string, Matrix> out;
  for (const auto& it : ids.train) out[it.first] = g.grad(it.second);
  return out;
}

double dot_with(const std::map<std::string, Matrix>& grads, const ParamSet& dir) {
  double s = 0.0;
  for (const auto& it : dir.items) {
    auto found = grads.find(it.first);
    require(found != grads.end(), Err::ShapeMismatch, "gradient missing for " + it.first);
    s += dot(found->second, it.second);
  }
  return s;
}

// Elementwise accumulation of named gradients, zero-initialized on first use.
void accumulate(std::map<std::string, Matrix>& acc, const std::string& name, const Matrix& g) {
  auto it = acc.find(name);
  if (it == acc.end()) {
    acc.emplace(name, g);
    return;
  }
  require(it->second.rows == g.rows && it->second.cols == g.cols, Err::ShapeMismatch,
          "gradient shape changed for " + name);
  for (size_t i = 0; i < g.a.size(); ++i) it->second.a[i] += g.a[i];
}

void apply_step(ParamSet& params, const std::map<std::string, Matrix>& acc, double lr) {
  for (auto& it : params.items) {
    auto found = acc.find(it.first);
    if (found == acc.end()) continue;
    for (size_t i = 0; i < it.second.a.size(); ++i) it.second.a[i] -= lr * found->second.a[i];
  }
}

}  // namespace

int compute_delta(const ExpertState& e, const WindowBatch& tr) {
  require(e.m() >= 1, Err::BadConfig, "expert has no meta-domains");
  int best = 0;
  double best_loss = expert_loss_value(e, e.domains[0], tr);
  for (int k = 1; k < e.m(); ++k) {
    double loss = expert_loss_value(e, e.domains[k], tr);
    if (loss < best_loss) {
      best = k;
      best_loss = loss;
    }
  }
  return best;
}

AdaptedDomains adapt_domains(const ExpertState& e, int selected, const WindowBatch& tr,
                             double rate) {
  require(selected >= 0 && selected < e.m(), Err::BadConfig, "selected meta-domain out of range");
  AdaptedDomains out;
  out.selected = selected;
  out.payloads.reserve(e.domains.size());
  for (const auto& d : e.domains) out.payloads.push_back(d.train);
  if (rate == 0.0) return out;  // bit-identical payloads, no projection pass

  Graph g;
  PayloadIds pid = payload_leaves(g, e.domains[selected]);
  SharedIds sid = shared_constants(g, e);
  int root = build_expert_loss(g, e, pid, sid, tr);
  g.backward(root);

  out.g_tr = tangent_gradient(e, e.domains[selected].train, harvest(g, pid));
  ParamSet adapted = e.domains[selected].train;
  for (auto& it : adapted.items) {
    const Matrix& step = out.g_tr.at(it.first);
    for (size_t i = 0; i < it.second.a.size(); ++i) it.second.a[i] -= rate * step.a[i];
  }
  project_payload(e.kind, adapted);
  out.payloads[selected] = std::move(adapted);
  return out;
}

CombinedObjective build_combined_objective(const std::vector<ExpertState>& experts,
                                           const FusionParams& fusion,
                                           const std::vector<std::vector<ParamSet>>& feature_payloads,
                                           const std::vector<ParamSet>& test_payloads,
                                           const std::vector<int>& selected,
                                           const WindowBatch& val, double lambda1) {
  const int m = static_cast<int>(experts.size());
  require(m >= 1, Err::BadConfig, "no experts");
  require(static_cast<int>(feature_payloads.size()) == m &&
              static_cast<int>(test_payloads.size()) == m &&
              static_cast<int>(selected.size()) == m,
          Err::ShapeMismatch, "per-expert inputs disagree with expert count");

  CombinedObjective co;
  Graph& g = co.g;
  int Xval = g.constant(val.X);
  co.fusion_ids = fusion_leaves(g, fusion);

  std::vector<std::vector<int>> feature_nodes(m);
  for (int j = 0; j < m; ++j) {
    const ExpertState& e = experts[j];
    require(static_cast<int>(feature_payloads[j].size()) == e.m(), Err::ShapeMismatch,
            "feature payload count disagrees with meta-domain count");
    co.shared_ids.push_back(shared_leaves(g, e));
    for (int k = 0; k < e.m(); ++k) {
      DomainParams dp;
      dp.train = feature_payloads[j][k];
      dp.fixed = e.domains[k].fixed;
      PayloadIds pid = payload_constants(g, dp);
      feature_nodes[j].push_back(build_expert_feature(g, e, pid, co.shared_ids[j], val));
    }
    DomainParams sel;
    sel.train = test_payloads[j];
    sel.fixed = e.domains[selected[j]].fixed;
    PayloadIds pid = payload_leaves(g, sel);
    int lt = build_expert_loss(g, e, pid, co.shared_ids[j], val);
    require(std::isfinite(g.val(lt)(0, 0)), Err::NonFiniteLoss,
            std::string("validation loss of expert ") + expert_kind_name(e.kind) +
                " is not finite");
    co.payload_ids.push_back(std::move(pid));
    co.l_test.push_back(lt);
  }

  co.fusion = build_fusion(g, fusion, co.fusion_ids, feature_nodes, Xval);
  int ext = co.l_test[0];
  for (int j = 1; j < m; ++j) ext = g.add(ext, co.l_test[j]);
  co.extraction_sum = ext;
  co.total = g.add(co.fusion.recon_loss, g.scale(ext, lambda1));
  return co;
}

StepResult meta_step(std::vector<ExpertState>& experts, FusionParams& fusion,
                     const std::vector<WindowBatch>& tr, const std::vector<WindowBatch>& val,
                     const MetaConfig& mc,
                     std::vector<std::vector<AdaptedDomains>>* adapted_out) {
  const int m = static_cast<int>(experts.size());
  require(m >= 1, Err::BadConfig, "no experts");
  const int S = static_cast<int>(tr.size());
  require(S >= 1 && static_cast<int>(val.size()) == S, Err::BadConfig,
          "train and validation segment lists must align");
  for (int i = 0; i < S; ++i)
    require(tr[i].n() >= 1 && val[i].n() >= 1, Err::EmptySegment,
            "training step needs both splits in every segment");

  StepResult res;
  res.l_test.assign(m, 0.0);
  res.selected.resize(S);
  if (adapted_out) adapted_out->assign(S, {});

  int val_total = 0;
  for (int i = 0; i < S; ++i) val_total += val[i].n();

  // Gradients from every segment are accumulated at the incoming parameter
  // state and applied as one step after the loop.
  std::map<std::string, Matrix> fusion_acc;
  std::vector<std::map<std::string, Matrix>> shared_acc(m);
  std::vector<std::map<int, ParamSet>> payload_acc(m);   // domain -> tangent sum
  std::vector<std::map<int, double>> alpha_data(m);      // domain -> summed data term
  int wcol = 0;

  for (int i = 0; i < S; ++i) {
    std::vector<AdaptedDomains> adapted;
    std::vector<std::vector<ParamSet>> feature_payloads;
    std::vector<ParamSet> test_payloads;
    std::vector<int> selected;
    adapted.reserve(m);
    for (int j = 0; j < m; ++j) {
      int k = compute_delta(experts[j], tr[i]);
      adapted.push_back(adapt_domains(experts[j], k, tr[i], experts[j].alpha[k]));
      feature_payloads.push_back(adapted[j].payloads);
      test_payloads.push_back(adapted[j].payloads[k]);
      selected.push_back(k);
    }

    CombinedObjective co =
        build_combined_objective(experts, fusion, feature_payloads, test_payloads, selected,
                                 val[i], mc.lambda1);
    Graph& g = co.g;

    res.recon += g.val(co.fusion.recon_loss)(0, 0);
    for (int j = 0; j < m; ++j) res.l_test[j] += g.val(co.l_test[j])(0, 0);
    Matrix w = g.val(co.fusion.weights);
    if (res.weights.a.empty()) res.weights = Matrix(w.rows, val_total);
    for (int r = 0; r < w.rows; ++r)
      for (int c = 0; c < w.cols; ++c) res.weights(r, wcol + c) = w(r, c);
    wcol += w.cols;

    // Learning-rate data terms need the unweighted validation gradients.
    g.backward(co.extraction_sum);
    for (int j = 0; j < m; ++j) {
      if (adapted[j].g_tr.items.empty()) continue;
      alpha_data[j][selected[j]] +=
          dot_with(harvest(g, co.payload_ids[j]), adapted[j].g_tr);
    }

    g.backward(co.total);
    for (const auto& it : co.fusion_ids.ids) accumulate(fusion_acc, it.first, g.grad(it.second));
    for (int j = 0; j < m; ++j) {
      for (const auto& it : co.shared_ids[j].ids)
        accumulate(shared_acc[j], it.first, g.grad(it.second));
      if (mc.lambda1 != 0.0) {
        const ParamSet& base = experts[j].domains[selected[j]].train;
        ParamSet tangent = tangent_gradient(experts[j], base, harvest(g, co.payload_ids[j]));
        auto slot = payload_acc[j].find(selected[j]);
        if (slot == payload_acc[j].end()) {
          payload_acc[j].emplace(selected[j], std::move(tangent));
        } else {
          for (auto& it : slot->second.items) {
            const Matrix& add = tangent.at(it.first);
            for (size_t q = 0; q < it.second.a.size(); ++q) it.second.a[q] += add.a[q];
          }
        }
      }
    }

    res.selected[i] = std::move(selected);
    if (adapted_out) (*adapted_out)[i] = std::move(adapted);
  }

  for (const ExpertState& e : experts)
    for (double a : e.alpha) res.alpha_sum += a;
  double l_test_sum = 0.0;
  for (double v : res.l_test) l_test_sum += v;
  res.extraction = l_test_sum + mc.lambda_meta * res.alpha_sum;
  res.total = res.recon + mc.lambda1 * res.extraction;

  apply_step(fusion.p, fusion_acc, mc.lr);
  for (int j = 0; j < m; ++j) {
    ExpertState& e = experts[j];
    apply_step(e.shared, shared_acc[j], mc.lr);

    for (const auto& it : payload_acc[j]) {
      ParamSet& base = e.domains[it.first].train;
      for (auto& p : base.items) {
        const Matrix& step = it.second.at(p.first);
        for (size_t q = 0; q < p.second.a.size(); ++q) p.second.a[q] -= mc.lr * step.a[q];
      }
      project_payload(e.kind, base);
    }

    for (int k = 0; k < e.m(); ++k) {
      auto found = alpha_data[j].find(k);
      double d = (found != alpha_data[j].end() ? -found->second : 0.0) +
                 mc.lambda1 * mc.lambda_meta;
      e.alpha[k] = clamp(e.alpha[k] - mc.alpha_lr * d, mc.alpha_min, mc.alpha_max);
    }
  }

  return res;
}

int check_expansion(const ExpertState& e, double h_alpha) {
  int best = 0;
  for (int k = 1; k < e.m(); ++k)
    if (e.alpha[k] > e.alpha[best]) best = k;
  return e.alpha[best] > h_alpha ? best : -1;
}

int expand_meta_domain(ExpertState& e, int k, const std::map<int, ParamSet>& adapted_history,
                       int m_cap, int epoch) {
  require(k >= 0 && k < e.m(), Err::BadConfig, "expansion source out of range");
  if (adapted_history.empty()) return -1;
  if (e.m() >= m_cap) return -1;

  int farthest = -1;
  double best = -1.0;
  for (const auto& it : adapted_history) {
    double d = frob_dist_sq(it.second, e.domains[k].train);
    if (d > best) {
      best = d;
      farthest = it.first;
    }
  }
  DomainParams np;
  np.train = adapted_history.at(farthest);
  np.fixed = e.domains[k].fixed;
  e.domains.push_back(std::move(np));
  e.alpha.push_back(e.alpha[k]);
  e.created_epoch.push_back(epoch);
  return farthest;
}

}  // namespace cicada
