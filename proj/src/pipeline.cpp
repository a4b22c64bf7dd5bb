#include "cicada/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <string>

#include "cicada/errors.hpp"
#include "cicada/metrics.hpp"
#include "cicada/rng.hpp"

namespace cicada {

namespace {

WindowBatch slice_batch(const WindowBatch& all, int start, int count) {
  WindowBatch b;
  b.L = all.L;
  b.d = all.d;
  b.X = Matrix(all.X.rows, count);
  b.dX = Matrix(all.dX.rows, count);
  for (int r = 0; r < all.X.rows; ++r)
    for (int c = 0; c < count; ++c) {
      b.X(r, c) = all.X(r, start + c);
      b.dX(r, c) = all.dX(r, start + c);
    }
  return b;
}

WindowBatch select_columns(const WindowBatch& src, const std::vector<int>& cols) {
  WindowBatch b;
  b.L = src.L;
  b.d = src.d;
  b.X = Matrix(src.X.rows, static_cast<int>(cols.size()));
  b.dX = Matrix(src.dX.rows, static_cast<int>(cols.size()));
  for (int r = 0; r < src.X.rows; ++r)
    for (size_t c = 0; c < cols.size(); ++c) {
      b.X(r, static_cast<int>(c)) = src.X(r, cols[c]);
      b.dX(r, static_cast<int>(c)) = src.dX(r, cols[c]);
    }
  return b;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// Selective adaptation and evaluation of one segment without touching the
// model: per expert the lowest-loss meta-domain is adapted at `rate` (negative
// means the expert's own learned rate), fusion runs on the features of every
// meta-domain, and raw scores come from the selected adapted payload.
struct SegmentEval {
  std::vector<int> selected;  // per expert
  Matrix weights;             // experts x windows
  Matrix raw;                 // experts x windows
};

SegmentEval eval_segment(const std::vector<ExpertState>& experts, const FusionParams& fusion,
                         const WindowBatch& seg, double rate, bool with_scores,
                         std::vector<ParamSet>* selected_payloads = nullptr) {
  const int J = static_cast<int>(experts.size());
  SegmentEval ev;
  std::vector<std::vector<Matrix>> features(J);
  if (with_scores) ev.raw = Matrix(J, seg.n());
  for (int j = 0; j < J; ++j) {
    const ExpertState& e = experts[j];
    int k = compute_delta(e, seg);
    AdaptedDomains ad = adapt_domains(e, k, seg, rate < 0.0 ? e.alpha[k] : rate);
    ev.selected.push_back(k);
    for (int q = 0; q < e.m(); ++q) {
      DomainParams dp;
      dp.train = ad.payloads[q];
      dp.fixed = e.domains[q].fixed;
      features[j].push_back(expert_feature_value(e, dp, seg));
    }
    if (with_scores) {
      DomainParams sel;
      sel.train = ad.payloads[k];
      sel.fixed = e.domains[k].fixed;
      std::vector<double> s = expert_scores(e, sel, seg);
      for (int t = 0; t < seg.n(); ++t) ev.raw(j, t) = s[t];
    }
    if (selected_payloads) selected_payloads->push_back(std::move(ad.payloads[k]));
  }
  FusionEval fe = evaluate_fusion(fusion, features, seg.X);
  ev.weights = std::move(fe.weights);
  return ev;
}

std::vector<int> split_sizes(int n, int parts) {
  std::vector<int> sizes(parts, n / parts);
  for (int i = 0; i < n % parts; ++i) ++sizes[i];
  return sizes;
}

}  // namespace

ThresholdStrategy threshold_strategy_from_string(const std::string& s) {
  if (s == "max_f1" || s == "max-f1") return ThresholdStrategy::max_f1;
  if (s == "train_percentile" || s == "percentile") return ThresholdStrategy::train_percentile;
  fail(Err::BadConfig, "unknown threshold strategy: " + s);
}

const char* threshold_strategy_name(ThresholdStrategy s) {
  return s == ThresholdStrategy::max_f1 ? "max_f1" : "train_percentile";
}

void validate(const RunConfig& cfg) {
  require(cfg.L >= 1, Err::BadConfig, "window length must be at least 1");
  require(cfg.N >= 1, Err::BadConfig, "segment count must be at least 1");
  require(!cfg.experts.empty(), Err::BadConfig, "at least one expert is required");
  require(cfg.max_epoch >= 1, Err::BadConfig, "max_epoch must be at least 1");
  require(cfg.epoch_add >= 0, Err::BadConfig, "epoch_add cannot be negative");
  require(cfg.alpha1 >= 0.0, Err::BadConfig, "test adaptation rate cannot be negative");
  require(cfg.percentile_q > 0.0 && cfg.percentile_q < 100.0, Err::BadConfig,
          "percentile must lie in (0, 100)");
  require(cfg.test_segment_len >= 0, Err::BadConfig, "test segment length cannot be negative");
  require(cfg.expert.feature_dim == cfg.fusion.K, Err::BadConfig,
          "expert feature width must equal the fusion width");
  require(cfg.fusion.K >= 1 && cfg.fusion.heads >= 1 && cfg.fusion.expert_heads >= 1,
          Err::BadConfig, "fusion sizes must be positive");
  require(cfg.fusion.K % cfg.fusion.heads == 0 && cfg.fusion.K % cfg.fusion.expert_heads == 0,
          Err::BadConfig, "fusion width must divide evenly across heads");
  require(cfg.fusion.mlp_hidden >= 1, Err::BadConfig, "reconstruction hidden width too small");
  require(cfg.expert.r >= 1 && cfg.expert.R >= 1, Err::BadConfig, "feature ranks must be positive");
  require(cfg.expert.n_landmark >= 1, Err::BadConfig, "landmark count must be positive");
  require(cfg.expert.ae_hidden >= 1, Err::BadConfig, "autoencoder hidden width too small");
  require(cfg.expert.ridge >= 0.0 && cfg.expert.eps_cov > 0.0, Err::BadConfig,
          "regularizers out of range");
  require(cfg.meta.lambda1 >= 0.0 && cfg.meta.lambda_meta >= 0.0, Err::BadConfig,
          "loss weights cannot be negative");
  require(cfg.meta.lr > 0.0 && cfg.meta.alpha_lr >= 0.0, Err::BadConfig,
          "step sizes out of range");
  require(cfg.meta.alpha_min > 0.0 && cfg.meta.alpha_min <= cfg.meta.alpha_max, Err::BadConfig,
          "learning-rate clamp bounds out of order");
  require(cfg.meta.h_alpha > 0.0, Err::BadConfig, "expansion threshold must be positive");
  require(cfg.meta.m_cap >= 1, Err::BadConfig, "meta-domain cap must be positive");
}

WindowBatch make_windows(const Matrix& series, int L) {
  const int T = series.rows, d = series.cols;
  require(L >= 1, Err::BadConfig, "window length must be at least 1");
  require(T > L, Err::SeriesTooShort,
          "need more than " + std::to_string(L) + " time steps, got " + std::to_string(T));
  WindowBatch b;
  b.L = L;
  b.d = d;
  const int n = T - L;
  b.X = Matrix(L * d, n);
  b.dX = Matrix(L * d, n);
  for (int w = 0; w < n; ++w) {
    int t = L + w;
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < d; ++j) b.X(i * d + j, w) = series(t - L + i, j);
  }
  for (int w = 1; w < n; ++w)
    for (int r = 0; r < L * d; ++r) b.dX(r, w) = b.X(r, w) - b.X(r, w - 1);
  return b;
}

std::vector<WindowBatch> partition_segments(const WindowBatch& all, int N) {
  require(N >= 1, Err::BadConfig, "segment count must be at least 1");
  require(all.n() >= N, Err::TooFewWindows,
          "cannot split " + std::to_string(all.n()) + " windows into " + std::to_string(N) +
              " segments");
  std::vector<int> sizes = split_sizes(all.n(), N);
  std::vector<WindowBatch> segs;
  int at = 0;
  for (int s : sizes) {
    segs.push_back(slice_batch(all, at, s));
    at += s;
  }
  return segs;
}

Model train(const Matrix& series, const RunConfig& cfg) {
  validate(cfg);
  for (double v : series.a)
    require(std::isfinite(v), Err::NonFiniteLoss, "input series contains non-finite values");

  Model model;
  model.cfg = cfg;
  model.d = series.cols;

  WindowBatch all = make_windows(series, cfg.L);
  std::vector<WindowBatch> segs = partition_segments(all, cfg.N);
  for (const WindowBatch& s : segs)
    require(s.n() >= 2, Err::TooFewWindows,
            "every segment needs at least 2 windows for the train/validation split");

  const int J = static_cast<int>(cfg.experts.size());
  Rng root(cfg.seed);
  for (int j = 0; j < J; ++j) {
    ExpertState e = init_expert(cfg.experts[j], cfg.L, model.d, cfg.expert,
                                root.split("expert-init", static_cast<std::uint64_t>(j)));
    if (e.kind == ExpertKind::kpca)
      seed_kpca_landmarks(e, all, root.split("landmarks", static_cast<std::uint64_t>(j)));
    model.experts.push_back(std::move(e));
  }
  model.fusion = init_fusion(J, cfg.L * model.d, cfg.fusion, root.split("fusion"));
  Rng train_rng = root.split("train");

  std::vector<WindowBatch> seg_tr(cfg.N), seg_val(cfg.N);

  for (int epoch = 1; epoch <= cfg.max_epoch; ++epoch) {
    // The train/validation split is re-drawn every epoch: fresh sampling
    // noise keeps near-tied per-segment picks from freezing into whatever
    // partition the first epochs happened to see.
    for (int i = 0; i < cfg.N; ++i) {
      const WindowBatch& seg = segs[i];
      std::vector<int> shuffle =
          train_rng
              .split("split", static_cast<std::uint64_t>(epoch - 1) *
                                  static_cast<std::uint64_t>(cfg.N) +
                                  static_cast<std::uint64_t>(i))
              .permutation(seg.n());
      int n_tr = (seg.n() + 1) / 2;
      std::vector<int> tr_cols(shuffle.begin(), shuffle.begin() + n_tr);
      std::vector<int> val_cols(shuffle.begin() + n_tr, shuffle.end());
      seg_tr[i] = select_columns(seg, tr_cols);
      seg_val[i] = select_columns(seg, val_cols);
    }
    std::vector<std::vector<Matrix>> sfa_feats(J);

    std::vector<std::vector<AdaptedDomains>> adapted;
    StepResult res;
    try {
      res = meta_step(model.experts, model.fusion, seg_tr, seg_val, cfg.meta, &adapted);
    } catch (const Error& err) {
      if (err.code() != Err::NonFiniteLoss && err.code() != Err::NonFiniteGradient) throw;
      fail(err.code(), std::string(err.what()) + " (epoch " + std::to_string(epoch) + ")");
    }
    double recon = res.recon, extraction = res.extraction, total = res.total;

    for (int j = 0; j < J; ++j) {
      if (model.experts[j].kind != ExpertKind::sfa) continue;
      for (int i = 0; i < cfg.N; ++i) {
        DomainParams dp;
        dp.train = adapted[i][j].payloads[adapted[i][j].selected];
        dp.fixed = model.experts[j].domains[adapted[i][j].selected].fixed;
        sfa_feats[j].push_back(expert_feature_value(model.experts[j], dp, seg_val[i]));
      }
    }

    for (int j = 0; j < J; ++j) {
      if (sfa_feats[j].empty()) continue;
      int n_tot = 0;
      for (const Matrix& f : sfa_feats[j]) n_tot += f.cols;
      Matrix F(sfa_feats[j][0].rows, n_tot);
      int at = 0;
      for (const Matrix& f : sfa_feats[j]) {
        for (int r = 0; r < f.rows; ++r)
          for (int c = 0; c < f.cols; ++c) F(r, at + c) = f(r, c);
        at += f.cols;
      }
      fit_sfa_stats(model.experts[j], F);
    }

    // Full pass at current parameters: per-segment picks back the assignment
    // history, the expansion candidates, and the epoch-average weights.
    bool expanding = cfg.epoch_add > 0 && epoch % cfg.epoch_add == 0;
    EpochRecord rec;
    rec.epoch = epoch;
    rec.recon = recon / cfg.N;
    rec.extraction = extraction / cfg.N;
    rec.total = total / cfg.N;
    rec.assignment.assign(J, std::vector<int>(cfg.N, 0));
    std::vector<double> wsum(J, 0.0);
    long wcount = 0;
    std::vector<std::vector<ParamSet>> pass_payloads(J);

    for (int i = 0; i < cfg.N; ++i) {
      std::vector<ParamSet> sel_payloads;
      SegmentEval ev = eval_segment(model.experts, model.fusion, segs[i], -1.0, false,
                                    expanding ? &sel_payloads : nullptr);
      for (int j = 0; j < J; ++j) {
        rec.assignment[j][i] = ev.selected[j];
        for (int t = 0; t < ev.weights.cols; ++t) wsum[j] += ev.weights(j, t);
      }
      wcount += ev.weights.cols;
      if (expanding)
        for (int j = 0; j < J; ++j) pass_payloads[j].push_back(std::move(sel_payloads[j]));
    }
    for (int j = 0; j < J; ++j) rec.mean_weights.push_back(wsum[j] / static_cast<double>(wcount));

    if (expanding) {
      for (int j = 0; j < J; ++j) {
        ExpertState& e = model.experts[j];
        int k = check_expansion(e, cfg.meta.h_alpha);
        if (k < 0) continue;
        std::map<int, ParamSet> hist;
        for (int i = 0; i < cfg.N; ++i)
          if (rec.assignment[j][i] == k) hist[i] = pass_payloads[j][i];
        int seg_id = expand_meta_domain(e, k, hist, cfg.meta.m_cap, epoch);
        if (seg_id >= 0) {
          model.history.expansions.push_back({epoch, j, k, seg_id, e.m() - 1});
        } else {
          std::cerr << "note: expansion skipped at epoch " << epoch << " for expert "
                    << expert_kind_name(e.kind) << " (no adapted history or cap reached)\n";
        }
      }
    }

    for (int j = 0; j < J; ++j) rec.alpha.push_back(model.experts[j].alpha);
    model.history.epochs.push_back(std::move(rec));
  }

  // Final calibration pass with the fixed scoring rate: raw per-expert scores
  // over every training window set the robust normalizers, then the combined
  // score stream backs the percentile threshold strategy.
  Matrix raw(J, all.n());
  Matrix wts(J, all.n());
  int at = 0;
  for (const WindowBatch& seg : segs) {
    SegmentEval ev = eval_segment(model.experts, model.fusion, seg, cfg.alpha1, true);
    for (int j = 0; j < J; ++j)
      for (int t = 0; t < seg.n(); ++t) {
        raw(j, at + t) = ev.raw(j, t);
        wts(j, at + t) = ev.weights(j, t);
      }
    at += seg.n();
  }
  for (int j = 0; j < J; ++j) {
    std::vector<double> row(raw.a.begin() + static_cast<size_t>(j) * all.n(),
                            raw.a.begin() + static_cast<size_t>(j + 1) * all.n());
    double med = median_of(row);
    std::vector<double> dev(row.size());
    for (size_t i = 0; i < row.size(); ++i) dev[i] = std::fabs(row[i] - med);
    model.experts[j].norm.median = med;
    model.experts[j].norm.mad = std::max(median_of(dev), 1e-12);
    model.experts[j].norm.ready = true;
  }
  model.train_scores.resize(all.n());
  for (int t = 0; t < all.n(); ++t) {
    double s = 0.0;
    for (int j = 0; j < J; ++j) {
      double a = raw(j, t);
      if (cfg.normalize_scores)
        a = (a - model.experts[j].norm.median) / model.experts[j].norm.mad;
      s += wts(j, t) * a;
    }
    model.train_scores[t] = s;
  }
  return model;
}

DetectionReport adapt_and_score(const Model& m, const Matrix& test_series) {
  require(test_series.cols == m.d, Err::DimensionMismatch,
          "test series has " + std::to_string(test_series.cols) + " variables, model expects " +
              std::to_string(m.d));
  const RunConfig& cfg = m.cfg;
  WindowBatch all = make_windows(test_series, cfg.L);

  std::vector<WindowBatch> segs;
  if (cfg.test_segment_len > 0) {
    for (int at = 0; at < all.n(); at += cfg.test_segment_len)
      segs.push_back(slice_batch(all, at, std::min(cfg.test_segment_len, all.n() - at)));
  } else {
    segs = partition_segments(all, cfg.N);
  }

  const int J = static_cast<int>(m.experts.size());
  DetectionReport rep;
  rep.weights = Matrix(J, all.n());
  rep.components = Matrix(J, all.n());
  rep.anosc.resize(all.n());
  rep.t.resize(all.n());
  for (int t = 0; t < all.n(); ++t) rep.t[t] = cfg.L - 1 + t;

  int at = 0;
  for (const WindowBatch& seg : segs) {
    SegmentEval ev = eval_segment(m.experts, m.fusion, seg, cfg.alpha1, true);
    for (int t = 0; t < seg.n(); ++t) {
      double s = 0.0;
      for (int j = 0; j < J; ++j) {
        double a = ev.raw(j, t);
        if (cfg.normalize_scores && m.experts[j].norm.ready)
          a = (a - m.experts[j].norm.median) / m.experts[j].norm.mad;
        rep.components(j, at + t) = a;
        rep.weights(j, at + t) = ev.weights(j, t);
        s += ev.weights(j, t) * a;
      }
      require(std::isfinite(s), Err::NonFiniteLoss,
              "anomaly score is not finite at window " + std::to_string(at + t));
      rep.anosc[at + t] = s;
    }
    at += seg.n();
  }
  return rep;
}

double select_threshold(const std::vector<double>& scores, ThresholdStrategy strategy,
                        const std::vector<int>* labels, double q) {
  require(!scores.empty(), Err::EmptyScores, "cannot select a threshold from no scores");
  if (strategy == ThresholdStrategy::max_f1) {
    require(labels != nullptr, Err::MissingLabels,
            "the F1-maximizing strategy needs ground-truth labels");
    require(labels->size() == scores.size(), Err::LengthMismatch,
            "labels and scores differ in length");
    return max_f1_threshold(scores, *labels);
  }
  return percentile(scores, q);
}

void apply_report_threshold(DetectionReport& r, double threshold) {
  r.threshold = threshold;
  r.y = apply_threshold(r.anosc, threshold);
}

}  // namespace cicada
