#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cicada/experts.hpp"
#include "cicada/fusion.hpp"
#include "cicada/matrix.hpp"
#include "cicada/meta.hpp"

namespace cicada {

enum class ThresholdStrategy { max_f1, train_percentile };

ThresholdStrategy threshold_strategy_from_string(const std::string& s);
const char* threshold_strategy_name(ThresholdStrategy s);

struct RunConfig {
  int L = 10;  // window length
  int N = 16;  // training segment count
  std::vector<ExpertKind> experts = {ExpertKind::pca, ExpertKind::kpca, ExpertKind::sfa,
                                     ExpertKind::nmf, ExpertKind::tcpd, ExpertKind::sdl,
                                     ExpertKind::mlp_ae};
  ExpertConfig expert;
  FusionConfig fusion;
  MetaConfig meta;
  int max_epoch = 400;
  int epoch_add = 50;    // expansion-check period in epochs; 0 disables expansion
  double alpha1 = 1e-3;  // fixed adaptation rate for scoring and test segments
  bool normalize_scores = true;
  ThresholdStrategy threshold = ThresholdStrategy::train_percentile;
  double percentile_q = 99.5;
  int test_segment_len = 0;  // windows per test segment; 0: N-way partition
  std::uint64_t seed = 0;
};

// Throws BadConfig on out-of-range fields or a feature width that the fusion
// stack cannot consume.
void validate(const RunConfig& cfg);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double recon = 0.0, extraction = 0.0, total = 0.0;  // means over the epoch's steps
  std::vector<double> mean_weights;  // per expert, averaged over every training window
  std::vector<std::vector<double>> alpha;    // per expert, per meta-domain, end of epoch
  std::vector<std::vector<int>> assignment;  // per expert, per segment, full-segment pick
};

struct ExpansionEvent {
  int epoch = 0;
  int expert = 0;   // index into RunConfig::experts
  int source = 0;   // meta-domain adapted from
  int segment = 0;  // segment whose adapted payload was appended
  int index = 0;    // index of the new meta-domain
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<ExpansionEvent> expansions;
};

inline constexpr const char* kModelVersion = "cicada.model.v1";

struct Model {
  std::string version = kModelVersion;
  RunConfig cfg;
  int d = 0;  // observed variables
  std::vector<ExpertState> experts;
  FusionParams fusion;
  TrainHistory history;
  std::vector<double> train_scores;  // final combined scores over training windows
};

struct DetectionReport {
  std::vector<int> t;          // each window's newest row; the first L-1 times are unscored
  std::vector<double> anosc;   // combined anomaly score per scored time
  std::vector<int> y;          // 1 iff anosc > threshold; empty until thresholded
  double threshold = 0.0;
  Matrix weights;     // experts x windows, the interpretable weight vectors
  Matrix components;  // experts x windows, per-expert (normalized) scores
};

// One window per t in [L, T): the L rows strictly before t, vectorized
// time-major; the paired difference column is against the previous window
// (zero for the first).  Throws SeriesTooShort when T <= L.
WindowBatch make_windows(const Matrix& series, int L);

// N contiguous segments covering all columns, sizes as equal as possible with
// the remainder spread over the first segments.  Throws TooFewWindows.
std::vector<WindowBatch> partition_segments(const WindowBatch& all, int N);

Model train(const Matrix& series, const RunConfig& cfg);

// Scores a test series with one selective adaptation per segment at rate
// alpha1; the model itself is untouched.  The report is pre-threshold: y is
// empty and threshold is zero until apply_report_threshold.
DetectionReport adapt_and_score(const Model& m, const Matrix& test_series);

// max_f1: scores are the series being gated and labels are required.
// train_percentile: scores must be the model's stored training scores.
double select_threshold(const std::vector<double>& scores, ThresholdStrategy strategy,
                        const std::vector<int>* labels, double q);

void apply_report_threshold(DetectionReport& r, double threshold);

// Structured JSON container with version tag and payload checksum.
void save_model(const Model& m, const std::string& path);
Model load_model(const std::string& path);

}  // namespace cicada
