#include "cicada/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cicada {

namespace {

void check_binary(const std::vector<int>& v, const char* who) {
  for (int x : v)
    require(x == 0 || x == 1, Err::BadConfig, std::string(who) + ": entries must be 0 or 1");
}

void check_paired(size_t a, size_t b, const char* who) {
  require(a == b, Err::LengthMismatch, std::string(who) + ": lengths differ");
  require(a > 0, Err::EmptyScores, std::string(who) + ": empty input");
}

}  // namespace

Prf prf(const std::vector<int>& pred, const std::vector<int>& label) {
  check_paired(pred.size(), label.size(), "prf");
  check_binary(pred, "prf");
  check_binary(label, "prf");
  Prf r;
  for (size_t i = 0; i < pred.size(); ++i) {
    r.tp += pred[i] == 1 && label[i] == 1;
    r.fp += pred[i] == 1 && label[i] == 0;
    r.fn += pred[i] == 0 && label[i] == 1;
  }
  r.precision = r.tp + r.fp > 0 ? static_cast<double>(r.tp) / (r.tp + r.fp) : 0.0;
  r.recall = r.tp + r.fn > 0 ? static_cast<double>(r.tp) / (r.tp + r.fn) : 0.0;
  r.f1 = r.precision + r.recall > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_paired(scores.size(), labels.size(), "auroc");
  check_binary(labels, "auroc");
  const size_t n = scores.size();
  long pos = std::accumulate(labels.begin(), labels.end(), 0L);
  long neg = static_cast<long>(n) - pos;
  require(pos > 0 && neg > 0, Err::SingleClass, "auroc: labels contain a single class");

  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::sort(idx.begin(), idx.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  // Midranks: tied scores share the average of their rank range.
  double rank_pos_sum = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (size_t k = i; k < j; ++k)
      if (labels[idx[k]] == 1) rank_pos_sum += midrank;
    i = j;
  }
  const double p = static_cast<double>(pos);
  return (rank_pos_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

double auprc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_paired(scores.size(), labels.size(), "auprc");
  check_binary(labels, "auprc");
  const long pos = std::accumulate(labels.begin(), labels.end(), 0L);
  require(pos > 0, Err::NoPositives, "auprc: no positive labels");

  std::vector<size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::sort(idx.begin(), idx.end(),
            [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  double ap = 0.0;
  double prev_recall = 0.0;
  long tp = 0, fp = 0;
  size_t i = 0;
  while (i < idx.size()) {
    size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    for (size_t k = i; k < j; ++k) {
      tp += labels[idx[k]] == 1;
      fp += labels[idx[k]] == 0;
    }
    const double recall = static_cast<double>(tp) / pos;
    const double precision = static_cast<double>(tp) / (tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

std::vector<int> point_adjust(const std::vector<int>& pred, const std::vector<int>& label) {
  check_paired(pred.size(), label.size(), "point_adjust");
  check_binary(pred, "point_adjust");
  check_binary(label, "point_adjust");
  std::vector<int> adj = pred;
  size_t i = 0;
  while (i < label.size()) {
    if (label[i] == 1) {
      size_t j = i;
      while (j < label.size() && label[j] == 1) ++j;
      bool hit = false;
      for (size_t k = i; k < j && !hit; ++k) hit = pred[k] == 1;
      if (hit)
        for (size_t k = i; k < j; ++k) adj[k] = 1;
      i = j;
    } else {
      ++i;
    }
  }
  return adj;
}

double max_f1_threshold(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_paired(scores.size(), labels.size(), "max_f1_threshold");
  check_binary(labels, "max_f1_threshold");
  std::vector<double> distinct = scores;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() == 1) return distinct[0];  // degenerate: no midpoints

  double best_c = 0.5 * (distinct[0] + distinct[1]);
  double best_f1 = -1.0;
  for (size_t i = 0; i + 1 < distinct.size(); ++i) {
    const double c = 0.5 * (distinct[i] + distinct[i + 1]);
    const double f1 = prf(apply_threshold(scores, c), labels).f1;
    if (f1 > best_f1) {
      best_f1 = f1;
      best_c = c;
    }
  }
  return best_c;
}

double percentile(const std::vector<double>& scores, double q) {
  require(!scores.empty(), Err::EmptyScores, "percentile: empty scores");
  require(q >= 0.0 && q <= 100.0, Err::BadConfig, "percentile: q outside [0, 100]");
  std::vector<double> s = scores;
  std::sort(s.begin(), s.end());
  if (s.size() == 1) return s[0];
  const double pos = q / 100.0 * static_cast<double>(s.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, s.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return s[lo] + frac * (s[hi] - s[lo]);
}

std::vector<int> apply_threshold(const std::vector<double>& scores, double c) {
  std::vector<int> y(scores.size());
  for (size_t i = 0; i < scores.size(); ++i) y[i] = scores[i] > c ? 1 : 0;
  return y;
}

}  // namespace cicada
