#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "cicada/csv.hpp"
#include "cicada/datagen.hpp"
#include "cicada/errors.hpp"
#include "cicada/metrics.hpp"
#include "cicada/pipeline.hpp"
#include "cicada/svg.hpp"

namespace {

using namespace cicada;

// ---------------------------------------------------------------------------
// Config files: `key = value` lines grouped by [section] headers.  Sections
// mirror the config structs one-to-one ([run], [expert], [fusion], [meta] for
// training; [generate] for synthesis); keys before any header belong to
// [run].  Unknown sections or keys are rejected so typos cannot silently fall
// back to defaults.

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Err::IoError, "cannot open config file " + path);
  static const std::set<std::string> kSections = {"run", "expert", "fusion", "meta", "generate"};
  std::map<std::string, std::string> kv;
  std::string line, section = "run";
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    std::string at = path + ":" + std::to_string(lineno);
    if (t.front() == '[') {
      require(t.back() == ']', Err::BadConfig, at + ": malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      require(kSections.count(section) == 1, Err::BadConfig,
              at + ": unknown section [" + section + "]");
      continue;
    }
    std::size_t eq = t.find('=');
    require(eq != std::string::npos, Err::BadConfig, at + ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    require(!key.empty(), Err::BadConfig, at + ": empty key");
    kv[section + "." + key] = trim(t.substr(eq + 1));
  }
  return kv;
}

long long to_ll(const std::string& key, const std::string& val) {
  const char* begin = val.c_str();
  char* end = nullptr;
  long long v = std::strtoll(begin, &end, 10);
  require(end != begin && *end == '\0', Err::BadConfig,
          key + ": expected an integer, got '" + val + "'");
  return v;
}

int to_int(const std::string& key, const std::string& val) {
  long long v = to_ll(key, val);
  require(v >= std::numeric_limits<int>::min() && v <= std::numeric_limits<int>::max(),
          Err::BadConfig, key + ": value out of range");
  return static_cast<int>(v);
}

std::uint64_t to_u64(const std::string& key, const std::string& val) {
  const char* begin = val.c_str();
  char* end = nullptr;
  unsigned long long v = std::strtoull(begin, &end, 10);
  require(end != begin && *end == '\0', Err::BadConfig,
          key + ": expected an unsigned integer, got '" + val + "'");
  return v;
}

double to_double(const std::string& key, const std::string& val) {
  const char* begin = val.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  require(end != begin && *end == '\0', Err::BadConfig,
          key + ": expected a number, got '" + val + "'");
  return v;
}

bool to_bool(const std::string& key, const std::string& val) {
  if (val == "true" || val == "1" || val == "yes") return true;
  if (val == "false" || val == "0" || val == "no") return false;
  throw Error(Err::BadConfig, key + ": expected a boolean, got '" + val + "'");
}

std::vector<std::string> split_list(const std::string& val) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : val) {
    if (c == ',') {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(trim(cur));
  return parts;
}

std::vector<double> to_doubles(const std::string& key, const std::string& val) {
  std::vector<double> out;
  for (const auto& p : split_list(val)) out.push_back(to_double(key, p));
  return out;
}

std::vector<ExpertKind> to_experts(const std::string& val) {
  std::vector<ExpertKind> out;
  for (const auto& p : split_list(val)) out.push_back(expert_kind_from_string(p));
  return out;
}

void apply_config(const std::map<std::string, std::string>& kv, RunConfig& rc, GenConfig& gc,
                  bool* gen_kind_set) {
  for (const auto& [key, val] : kv) {
    if (key == "run.L") rc.L = to_int(key, val);
    else if (key == "run.N") rc.N = to_int(key, val);
    else if (key == "run.experts") rc.experts = to_experts(val);
    else if (key == "run.max_epoch") rc.max_epoch = to_int(key, val);
    else if (key == "run.epoch_add") rc.epoch_add = to_int(key, val);
    else if (key == "run.alpha1") rc.alpha1 = to_double(key, val);
    else if (key == "run.normalize_scores") rc.normalize_scores = to_bool(key, val);
    else if (key == "run.threshold") rc.threshold = threshold_strategy_from_string(val);
    else if (key == "run.percentile_q") rc.percentile_q = to_double(key, val);
    else if (key == "run.test_segment_len") rc.test_segment_len = to_int(key, val);
    else if (key == "run.seed") rc.seed = to_u64(key, val);
    else if (key == "expert.r") rc.expert.r = to_int(key, val);
    else if (key == "expert.R") rc.expert.R = to_int(key, val);
    else if (key == "expert.lambda_sdl") rc.expert.lambda_sdl = to_double(key, val);
    else if (key == "expert.n_landmark") rc.expert.n_landmark = to_int(key, val);
    else if (key == "expert.ae_hidden") rc.expert.ae_hidden = to_int(key, val);
    else if (key == "expert.ridge") rc.expert.ridge = to_double(key, val);
    else if (key == "expert.eps_cov") rc.expert.eps_cov = to_double(key, val);
    else if (key == "expert.feature_dim") rc.expert.feature_dim = to_int(key, val);
    else if (key == "fusion.K") rc.fusion.K = to_int(key, val);
    else if (key == "fusion.heads") rc.fusion.heads = to_int(key, val);
    else if (key == "fusion.expert_heads") rc.fusion.expert_heads = to_int(key, val);
    else if (key == "fusion.mlp_hidden") rc.fusion.mlp_hidden = to_int(key, val);
    else if (key == "meta.lambda1") rc.meta.lambda1 = to_double(key, val);
    else if (key == "meta.lambda_meta") rc.meta.lambda_meta = to_double(key, val);
    else if (key == "meta.lr") rc.meta.lr = to_double(key, val);
    else if (key == "meta.alpha_lr") rc.meta.alpha_lr = to_double(key, val);
    else if (key == "meta.alpha_min") rc.meta.alpha_min = to_double(key, val);
    else if (key == "meta.alpha_max") rc.meta.alpha_max = to_double(key, val);
    else if (key == "meta.h_alpha") rc.meta.h_alpha = to_double(key, val);
    else if (key == "meta.m_cap") rc.meta.m_cap = to_int(key, val);
    else if (key == "generate.kind") {
      gc.kind = gen_kind_from_string(val);
      if (gen_kind_set != nullptr) *gen_kind_set = true;
    } else if (key == "generate.T") gc.T = to_int(key, val);
    else if (key == "generate.L") gc.L = to_int(key, val);
    else if (key == "generate.p") gc.p = to_int(key, val);
    else if (key == "generate.d") gc.d = to_int(key, val);
    else if (key == "generate.seed") gc.seed = to_u64(key, val);
    else if (key == "generate.domain_fractions") gc.domain_fractions = to_doubles(key, val);
    else if (key == "generate.spike_rate") gc.spike_rate = to_double(key, val);
    else if (key == "generate.spike_sigma") gc.spike_sigma = to_double(key, val);
    else throw Error(Err::BadConfig, "unknown config key '" + key + "'");
  }
}

// ---------------------------------------------------------------------------
// Output routing: relative output paths land in --out-dir, which defaults to
// $CICADA_OUT_DIR and then to the working directory.

std::string pick_out_dir(const CLI::Option* flag, const std::string& value) {
  if (flag != nullptr && flag->count() > 0) return value;
  const char* env = std::getenv("CICADA_OUT_DIR");
  return (env != nullptr && *env != '\0') ? env : ".";
}

std::string resolve_out(const std::string& dir, const std::string& path) {
  if (path.empty() || path.front() == '/') return path;
  if (dir.empty() || dir == ".") return path;
  std::filesystem::create_directories(dir);
  return dir + "/" + path;
}

std::string sidecar_path(const std::string& out) {
  if (out.size() >= 4 && out.substr(out.size() - 4) == ".csv")
    return out.substr(0, out.size() - 4) + "_domains.csv";
  return out + "_domains.csv";
}

int find_column(const TableCsv& t, const std::string& name) {
  for (std::size_t i = 0; i < t.names.size(); ++i)
    if (t.names[i] == name) return static_cast<int>(i);
  return -1;
}

// ---------------------------------------------------------------------------
// Shared metric summary: consumes any score table (column `anosc` or `score`,
// with `t`, `y_pred` and `label` honored when present) plus labels.
// Predictions default to the best-F1 gate over the scores; the point-adjusted
// variants rerun each metric on the adjusted predictions.

struct Summary {
  double f1 = 0.0, auroc_v = 0.0, auprc_v = 0.0;
  double f1_pa = 0.0, auroc_pa = 0.0, auprc_pa = 0.0;
  double threshold = 0.0;
  bool thresholded_here = false;
};

Summary summarize_scores(const TableCsv& tb, const std::string& scores_path,
                         const std::string& data_path) {
  int c_score = find_column(tb, "anosc");
  if (c_score < 0) c_score = find_column(tb, "score");
  if (c_score < 0 && tb.names.size() == 1) c_score = 0;
  require(c_score >= 0, Err::BadConfig,
          scores_path + ": cannot find a score column (expected 'anosc' or 'score')");
  const int c_t = find_column(tb, "t");
  const int c_pred = find_column(tb, "y_pred");
  const int c_label = find_column(tb, "label");
  const std::size_t n = tb.rows.size();
  require(n > 0, Err::EmptyScores, scores_path + ": no score rows");

  std::vector<double> score(n);
  for (std::size_t i = 0; i < n; ++i) score[i] = tb.rows[i][static_cast<std::size_t>(c_score)];

  std::vector<int> label(n);
  if (!data_path.empty()) {
    SeriesCsv ref = read_series_csv(data_path);
    require(!ref.label.empty(), Err::MissingLabels,
            data_path + " has no label column to evaluate against");
    if (c_t >= 0) {
      for (std::size_t i = 0; i < n; ++i) {
        long tt = std::lround(tb.rows[i][static_cast<std::size_t>(c_t)]);
        require(tt >= 0 && tt < static_cast<long>(ref.label.size()), Err::DimensionMismatch,
                scores_path + ": time index " + std::to_string(tt) +
                    " outside the labeled series");
        label[i] = ref.label[static_cast<std::size_t>(tt)];
      }
    } else {
      require(ref.label.size() == n, Err::DimensionMismatch,
              "score count does not match the labeled series length "
              "(add a 't' column or align lengths)");
      label.assign(ref.label.begin(), ref.label.end());
    }
  } else {
    require(c_label >= 0, Err::MissingLabels,
            "evaluation needs labels: pass --data with a labeled series or include a "
            "'label' column in the score table");
    for (std::size_t i = 0; i < n; ++i) {
      double v = tb.rows[i][static_cast<std::size_t>(c_label)];
      require(v == 0.0 || v == 1.0, Err::CorruptFile,
              scores_path + ": label values must be 0 or 1");
      label[i] = static_cast<int>(v);
    }
  }

  Summary s;
  std::vector<int> pred(n);
  if (c_pred >= 0) {
    for (std::size_t i = 0; i < n; ++i) {
      double v = tb.rows[i][static_cast<std::size_t>(c_pred)];
      require(v == 0.0 || v == 1.0, Err::CorruptFile,
              scores_path + ": y_pred values must be 0 or 1");
      pred[i] = static_cast<int>(v);
    }
  } else {
    s.threshold = max_f1_threshold(score, label);
    s.thresholded_here = true;
    pred = apply_threshold(score, s.threshold);
  }

  std::vector<int> adj = point_adjust(pred, label);
  std::vector<double> adj_scores(adj.begin(), adj.end());
  s.f1 = prf(pred, label).f1;
  s.auroc_v = auroc(score, label);
  s.auprc_v = auprc(score, label);
  s.f1_pa = prf(adj, label).f1;
  s.auroc_pa = auroc(adj_scores, label);
  s.auprc_pa = auprc(adj_scores, label);
  return s;
}

void write_summary_csv(const std::string& path, const Summary& s) {
  TableCsv t;
  t.names = {"f1", "auroc", "auprc", "f1_pa", "auroc_pa", "auprc_pa"};
  t.rows = {{s.f1, s.auroc_v, s.auprc_v, s.f1_pa, s.auroc_pa, s.auprc_pa}};
  write_table_csv(path, t);
}

void print_summary(const Summary& s) {
  if (s.thresholded_here)
    std::cout << "threshold (best F1): " << format_double(s.threshold) << "\n";
  std::cout << "f1:       " << format_double(s.f1) << "\n"
            << "auroc:    " << format_double(s.auroc_v) << "\n"
            << "auprc:    " << format_double(s.auprc_v) << "\n"
            << "f1_pa:    " << format_double(s.f1_pa) << "\n"
            << "auroc_pa: " << format_double(s.auroc_pa) << "\n"
            << "auprc_pa: " << format_double(s.auprc_pa) << "\n";
}

// ---------------------------------------------------------------------------
// generate

struct GenerateCmd {
  CLI::App* sub = nullptr;
  std::string config, out, out_dir, kind, domains;
  std::uint64_t seed = 0;
  int T = 0, L = 0, p = 0, d = 0;
  double spike_rate = 0.0, spike_sigma = 0.0;

  void attach(CLI::App& app) {
    sub = app.add_subcommand("generate", "synthesize a dataset CSV");
    sub->add_option("--config", config, "config file; the [generate] section applies");
    sub->add_option("--kind", kind, "generator family: pca|kpca|nmf|tcpd|sdl");
    sub->add_option("--T", T, "series length in time steps");
    sub->add_option("--L", L, "tcpd block height");
    sub->add_option("--p", p, "latent dimension");
    sub->add_option("--d", d, "observed variables");
    sub->add_option("--seed", seed, "generator seed");
    sub->add_option("--domains", domains, "comma-separated domain fractions, e.g. 0.5,0.5");
    sub->add_option("--spike-rate", spike_rate, "fraction of rows turned into labeled spikes");
    sub->add_option("--spike-sigma", spike_sigma, "spike offset in per-variable std devs");
    sub->add_option("-o,--out", out, "output CSV (default <kind>.csv)");
    sub->add_option("--out-dir", out_dir, "output directory (default $CICADA_OUT_DIR or .)");
  }

  int run() {
    GenConfig gc;
    RunConfig scratch;
    bool kind_set = false;
    if (sub->count("--config") > 0)
      apply_config(parse_config_file(config), scratch, gc, &kind_set);
    if (sub->count("--kind") > 0) {
      gc.kind = gen_kind_from_string(kind);
      kind_set = true;
    }
    if (sub->count("--T") > 0) gc.T = T;
    if (sub->count("--L") > 0) gc.L = L;
    if (sub->count("--p") > 0) gc.p = p;
    if (sub->count("--d") > 0) gc.d = d;
    if (sub->count("--seed") > 0) gc.seed = seed;
    if (sub->count("--domains") > 0) gc.domain_fractions = to_doubles("--domains", domains);
    if (sub->count("--spike-rate") > 0) gc.spike_rate = spike_rate;
    if (sub->count("--spike-sigma") > 0) gc.spike_sigma = spike_sigma;
    if (!kind_set) {
      std::cerr << "generate: --kind is required (pca|kpca|nmf|tcpd|sdl)\n\n" << sub->help();
      return 2;
    }

    Dataset ds = generate(gc);
    SeriesCsv s;
    s.x = ds.x;
    s.label = ds.label;
    for (int j = 0; j < ds.x.cols; ++j) s.names.push_back("x" + std::to_string(j + 1));

    const std::string dir = pick_out_dir(sub->get_option("--out-dir"), out_dir);
    std::string path =
        resolve_out(dir, out.empty() ? std::string(gen_kind_name(gc.kind)) + ".csv" : out);
    write_series_csv(path, s);
    std::cout << "seed: " << gc.seed << "\n";
    std::cout << "wrote " << path << "\n";
    if (!ds.domain.empty()) {
      TableCsv dom;
      dom.names = {"t", "domain"};
      for (std::size_t t = 0; t < ds.domain.size(); ++t)
        dom.rows.push_back({static_cast<double>(t), static_cast<double>(ds.domain[t])});
      std::string side = sidecar_path(path);
      write_table_csv(side, dom);
      std::cout << "wrote " << side << "\n";
    }
    return 0;
  }
};

// ---------------------------------------------------------------------------
// train

struct TrainCmd {
  CLI::App* sub = nullptr;
  std::string data, config, out, out_dir, experts;
  std::uint64_t seed = 0;
  int L = 0, N = 0, max_epoch = 0, epoch_add = 0;

  void attach(CLI::App& app) {
    sub = app.add_subcommand("train", "train a detector on a series CSV");
    sub->add_option("data", data, "training series CSV")->required();
    sub->add_option("--config", config, "config file with [run]/[expert]/[fusion]/[meta] keys");
    sub->add_option("--seed", seed, "run seed");
    sub->add_option("--L", L, "window length");
    sub->add_option("--N", N, "training segment count");
    sub->add_option("--experts", experts, "comma-separated expert kinds");
    sub->add_option("--max-epoch", max_epoch, "training epochs");
    sub->add_option("--epoch-add", epoch_add, "expansion-check period (0 disables)");
    sub->add_option("-o,--out", out, "model file (default model.json)");
    sub->add_option("--out-dir", out_dir, "output directory (default $CICADA_OUT_DIR or .)");
  }

  int run() {
    RunConfig rc;
    GenConfig scratch;
    if (sub->count("--config") > 0) apply_config(parse_config_file(config), rc, scratch, nullptr);
    if (sub->count("--seed") > 0) rc.seed = seed;
    if (sub->count("--L") > 0) rc.L = L;
    if (sub->count("--N") > 0) rc.N = N;
    if (sub->count("--experts") > 0) rc.experts = to_experts(experts);
    if (sub->count("--max-epoch") > 0) rc.max_epoch = max_epoch;
    if (sub->count("--epoch-add") > 0) rc.epoch_add = epoch_add;

    SeriesCsv s = read_series_csv(data);
    if (!s.label.empty()) std::cerr << "note: ignoring the label column for training\n";

    Model m = train(s.x, rc);

    const std::string dir = pick_out_dir(sub->get_option("--out-dir"), out_dir);
    std::string model_path = resolve_out(dir, out.empty() ? "model.json" : out);
    save_model(m, model_path);

    TableCsv wt;
    wt.names.push_back("epoch");
    for (ExpertKind k : rc.experts) wt.names.push_back(expert_kind_name(k));
    TableCsv al;
    al.names = {"epoch", "expert", "domain", "alpha"};
    TableCsv as;
    as.names = {"epoch", "expert", "segment", "domain"};
    for (const EpochRecord& er : m.history.epochs) {
      std::vector<double> row{static_cast<double>(er.epoch)};
      row.insert(row.end(), er.mean_weights.begin(), er.mean_weights.end());
      wt.rows.push_back(std::move(row));
      for (std::size_t j = 0; j < er.alpha.size(); ++j)
        for (std::size_t k = 0; k < er.alpha[j].size(); ++k)
          al.rows.push_back({static_cast<double>(er.epoch), static_cast<double>(j),
                             static_cast<double>(k), er.alpha[j][k]});
      for (std::size_t j = 0; j < er.assignment.size(); ++j)
        for (std::size_t i = 0; i < er.assignment[j].size(); ++i)
          as.rows.push_back({static_cast<double>(er.epoch), static_cast<double>(j),
                             static_cast<double>(i), static_cast<double>(er.assignment[j][i])});
    }
    TableCsv ex;
    ex.names = {"epoch", "expert", "source", "segment", "index"};
    for (const ExpansionEvent& ev : m.history.expansions)
      ex.rows.push_back({static_cast<double>(ev.epoch), static_cast<double>(ev.expert),
                         static_cast<double>(ev.source), static_cast<double>(ev.segment),
                         static_cast<double>(ev.index)});

    const std::string wt_path = resolve_out(dir, "weights_per_epoch.csv");
    const std::string al_path = resolve_out(dir, "alpha_per_epoch.csv");
    const std::string as_path = resolve_out(dir, "assignments_per_epoch.csv");
    const std::string ex_path = resolve_out(dir, "expansions.csv");
    write_table_csv(wt_path, wt);
    write_table_csv(al_path, al);
    write_table_csv(as_path, as);
    write_table_csv(ex_path, ex);

    const EpochRecord& last = m.history.epochs.back();
    std::cout << "trained " << last.epoch << " epochs; final loss " << format_double(last.total)
              << " (reconstruction " << format_double(last.recon) << ", extraction "
              << format_double(last.extraction) << ")\n";
    for (std::size_t j = 0; j < m.experts.size(); ++j)
      std::cout << expert_kind_name(rc.experts[j]) << ": " << m.experts[j].domains.size()
                << " meta-domain(s), final mean weight " << format_double(last.mean_weights[j])
                << "\n";
    std::cout << "wrote " << model_path << "\n"
              << "wrote " << wt_path << "\n"
              << "wrote " << al_path << "\n"
              << "wrote " << as_path << "\n"
              << "wrote " << ex_path << "\n";
    return 0;
  }
};

// ---------------------------------------------------------------------------
// detect

struct DetectCmd {
  CLI::App* sub = nullptr;
  std::string data, model_path, config, out, out_dir, strategy;
  std::uint64_t seed = 0;

  void attach(CLI::App& app) {
    sub = app.add_subcommand("detect", "score a test series with a trained model");
    sub->add_option("data", data, "test series CSV (a label column enables max-f1)")->required();
    sub->add_option("--model", model_path, "trained model file")->required();
    sub->add_option("--config", config,
                    "config file; detection honors run.alpha1, run.test_segment_len, "
                    "run.threshold and run.percentile_q");
    sub->add_option("--threshold-strategy", strategy, "max-f1 | percentile[:q]");
    sub->add_option("--seed", seed, "accepted for interface symmetry; detection is deterministic");
    sub->add_option("-o,--out", out, "report CSV (default report.csv)");
    sub->add_option("--out-dir", out_dir, "output directory (default $CICADA_OUT_DIR or .)");
  }

  int run() {
    Model m = load_model(model_path);
    if (sub->count("--config") > 0) {
      auto kv = parse_config_file(config);
      RunConfig scratch;
      GenConfig gscratch;
      apply_config(kv, scratch, gscratch, nullptr);
      if (kv.count("run.alpha1") > 0) m.cfg.alpha1 = scratch.alpha1;
      if (kv.count("run.test_segment_len") > 0) m.cfg.test_segment_len = scratch.test_segment_len;
      if (kv.count("run.threshold") > 0) m.cfg.threshold = scratch.threshold;
      if (kv.count("run.percentile_q") > 0) m.cfg.percentile_q = scratch.percentile_q;
    }
    ThresholdStrategy strat = m.cfg.threshold;
    double q = m.cfg.percentile_q;
    if (sub->count("--threshold-strategy") > 0) {
      std::size_t colon = strategy.find(':');
      strat = threshold_strategy_from_string(strategy.substr(0, colon));
      if (colon != std::string::npos) {
        require(strat == ThresholdStrategy::train_percentile, Err::BadConfig,
                "only the percentile strategy takes a :q suffix");
        q = to_double("--threshold-strategy", strategy.substr(colon + 1));
      }
    }

    SeriesCsv ts = read_series_csv(data);
    DetectionReport rep = adapt_and_score(m, ts.x);

    double c = 0.0;
    if (strat == ThresholdStrategy::max_f1) {
      require(!ts.label.empty(), Err::MissingLabels,
              "the max-f1 strategy needs a label column in " + data +
                  "; use --threshold-strategy percentile:q on unlabeled data");
      std::vector<int> label_at(rep.t.size());
      for (std::size_t i = 0; i < rep.t.size(); ++i)
        label_at[i] = ts.label[static_cast<std::size_t>(rep.t[i])];
      c = select_threshold(rep.anosc, strat, &label_at, q);
    } else {
      c = select_threshold(m.train_scores, strat, nullptr, q);
    }
    apply_report_threshold(rep, c);

    const int J = rep.weights.rows;
    TableCsv tb;
    tb.names = {"t", "anosc", "y_pred"};
    for (int j = 1; j <= J; ++j) tb.names.push_back("w_" + std::to_string(j));
    for (int j = 1; j <= J; ++j) tb.names.push_back("A_" + std::to_string(j));
    long flagged = 0;
    for (std::size_t i = 0; i < rep.anosc.size(); ++i) {
      std::vector<double> row{static_cast<double>(rep.t[i]), rep.anosc[i],
                              static_cast<double>(rep.y[i])};
      for (int j = 0; j < J; ++j) row.push_back(rep.weights(j, static_cast<int>(i)));
      for (int j = 0; j < J; ++j) row.push_back(rep.components(j, static_cast<int>(i)));
      tb.rows.push_back(std::move(row));
      flagged += rep.y[i];
    }

    const std::string dir = pick_out_dir(sub->get_option("--out-dir"), out_dir);
    std::string path = resolve_out(dir, out.empty() ? "report.csv" : out);
    write_table_csv(path, tb);
    std::cout << "threshold: " << format_double(c) << " (" << threshold_strategy_name(strat)
              << ")\n"
              << "flagged " << flagged << " of " << rep.anosc.size() << " windows\n"
              << "wrote " << path << "\n";
    return 0;
  }
};

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateCmd {
  CLI::App* sub = nullptr;
  std::string scores, data, config, out, out_dir;
  std::uint64_t seed = 0;

  void attach(CLI::App& app) {
    sub = app.add_subcommand("evaluate", "score any detector's output CSV against labels");
    sub->add_option("scores", scores,
                    "score table; needs an 'anosc' or 'score' column, with 't', 'y_pred' and "
                    "'label' columns honored when present")
        ->required();
    sub->add_option("--data", data, "labeled series CSV to evaluate against");
    sub->add_option("--config", config, "accepted for interface symmetry; validated only");
    sub->add_option("--seed", seed, "accepted for interface symmetry");
    sub->add_option("-o,--out", out, "summary CSV (default summary.csv)");
    sub->add_option("--out-dir", out_dir, "output directory (default $CICADA_OUT_DIR or .)");
  }

  int run() {
    if (sub->count("--config") > 0) {
      RunConfig rc;
      GenConfig gc;
      apply_config(parse_config_file(config), rc, gc, nullptr);
    }
    TableCsv tb = read_table_csv(scores);
    Summary s = summarize_scores(tb, scores, data);
    const std::string dir = pick_out_dir(sub->get_option("--out-dir"), out_dir);
    std::string path = resolve_out(dir, out.empty() ? "summary.csv" : out);
    write_summary_csv(path, s);
    print_summary(s);
    std::cout << "wrote " << path << "\n";
    return 0;
  }
};

// ---------------------------------------------------------------------------
// report

struct ReportCmd {
  CLI::App* sub = nullptr;
  std::string weights, alpha, assignments, scores, data, config, out, out_dir;
  std::uint64_t seed = 0;

  void attach(CLI::App& app) {
    sub = app.add_subcommand("report", "render training history charts and a metric summary");
    sub->add_option("--weights", weights, "weights_per_epoch.csv from train");
    sub->add_option("--alpha", alpha, "alpha_per_epoch.csv from train");
    sub->add_option("--assignments", assignments, "assignments_per_epoch.csv from train");
    sub->add_option("--scores", scores, "detection report CSV for the metric summary");
    sub->add_option("--data", data, "labeled series CSV paired with --scores");
    sub->add_option("--config", config, "accepted for interface symmetry; validated only");
    sub->add_option("--seed", seed, "accepted for interface symmetry");
    sub->add_option("-o,--out", out, "summary CSV name (default summary.csv)");
    sub->add_option("--out-dir", out_dir, "output directory (default $CICADA_OUT_DIR or .)");
  }

  int run() {
    if (sub->count("--config") > 0) {
      RunConfig rc;
      GenConfig gc;
      apply_config(parse_config_file(config), rc, gc, nullptr);
    }
    require(sub->count("--weights") + sub->count("--alpha") + sub->count("--assignments") +
                    sub->count("--scores") >
                0,
            Err::BadConfig,
            "report needs at least one of --weights/--alpha/--assignments/--scores");
    const std::string dir = pick_out_dir(sub->get_option("--out-dir"), out_dir);

    if (sub->count("--weights") > 0) {
      TableCsv tb = read_table_csv(weights);
      int c_epoch = find_column(tb, "epoch");
      require(c_epoch >= 0, Err::BadConfig, weights + ": missing 'epoch' column");
      std::vector<double> x;
      for (const auto& r : tb.rows) x.push_back(r[static_cast<std::size_t>(c_epoch)]);
      std::vector<ChartSeries> series;
      for (std::size_t col = 0; col < tb.names.size(); ++col) {
        if (static_cast<int>(col) == c_epoch) continue;
        ChartSeries cs;
        cs.name = tb.names[col];
        for (const auto& r : tb.rows) cs.y.push_back(r[col]);
        series.push_back(std::move(cs));
      }
      std::string path = resolve_out(dir, "weights_per_epoch.svg");
      write_line_chart(path, "mean expert weight per epoch", x, series, "epoch", "mean weight");
      std::cout << "wrote " << path << "\n";
    }

    if (sub->count("--alpha") > 0) {
      TableCsv tb = read_table_csv(alpha);
      int c_epoch = find_column(tb, "epoch");
      int c_expert = find_column(tb, "expert");
      int c_domain = find_column(tb, "domain");
      int c_alpha = find_column(tb, "alpha");
      require(c_epoch >= 0 && c_expert >= 0 && c_domain >= 0 && c_alpha >= 0, Err::BadConfig,
              alpha + ": expected columns epoch, expert, domain, alpha");
      std::vector<double> epochs;
      std::map<double, std::size_t> epoch_at;
      for (const auto& r : tb.rows) {
        double e = r[static_cast<std::size_t>(c_epoch)];
        if (epoch_at.emplace(e, 0).second) epochs.push_back(e);
      }
      std::sort(epochs.begin(), epochs.end());
      for (std::size_t i = 0; i < epochs.size(); ++i) epoch_at[epochs[i]] = i;
      std::map<std::pair<int, int>, std::vector<double>> by_domain;
      const double gap = std::numeric_limits<double>::quiet_NaN();
      for (const auto& r : tb.rows) {
        std::pair<int, int> id{static_cast<int>(r[static_cast<std::size_t>(c_expert)]),
                               static_cast<int>(r[static_cast<std::size_t>(c_domain)])};
        auto it = by_domain.find(id);
        if (it == by_domain.end())
          it = by_domain.emplace(id, std::vector<double>(epochs.size(), gap)).first;
        it->second[epoch_at[r[static_cast<std::size_t>(c_epoch)]]] =
            r[static_cast<std::size_t>(c_alpha)];
      }
      std::vector<ChartSeries> series;
      for (const auto& [id, y] : by_domain) {
        ChartSeries cs;
        cs.name = "expert " + std::to_string(id.first) + ", domain " + std::to_string(id.second);
        cs.y = y;
        series.push_back(std::move(cs));
      }
      std::string path = resolve_out(dir, "alpha_per_epoch.svg");
      write_line_chart(path, "meta-learning rate per meta-domain", epochs, series, "epoch",
                       "alpha");
      std::cout << "wrote " << path << "\n";
    }

    if (sub->count("--assignments") > 0) {
      TableCsv tb = read_table_csv(assignments);
      int c_epoch = find_column(tb, "epoch");
      int c_expert = find_column(tb, "expert");
      int c_segment = find_column(tb, "segment");
      int c_domain = find_column(tb, "domain");
      require(c_epoch >= 0 && c_expert >= 0 && c_segment >= 0 && c_domain >= 0, Err::BadConfig,
              assignments + ": expected columns epoch, expert, segment, domain");
      std::set<int> experts_seen;
      std::vector<double> epochs;
      std::map<double, std::size_t> epoch_at;
      int max_segment = -1;
      for (const auto& r : tb.rows) {
        experts_seen.insert(static_cast<int>(r[static_cast<std::size_t>(c_expert)]));
        double e = r[static_cast<std::size_t>(c_epoch)];
        if (epoch_at.emplace(e, 0).second) epochs.push_back(e);
        max_segment =
            std::max(max_segment, static_cast<int>(r[static_cast<std::size_t>(c_segment)]));
      }
      std::sort(epochs.begin(), epochs.end());
      for (std::size_t i = 0; i < epochs.size(); ++i) epoch_at[epochs[i]] = i;
      for (int j : experts_seen) {
        std::vector<std::vector<int>> cells(static_cast<std::size_t>(max_segment) + 1,
                                            std::vector<int>(epochs.size(), 0));
        for (const auto& r : tb.rows) {
          if (static_cast<int>(r[static_cast<std::size_t>(c_expert)]) != j) continue;
          cells[static_cast<std::size_t>(r[static_cast<std::size_t>(c_segment)])]
               [epoch_at[r[static_cast<std::size_t>(c_epoch)]]] =
                   static_cast<int>(r[static_cast<std::size_t>(c_domain)]);
        }
        std::vector<std::string> row_names;
        for (int i = 0; i <= max_segment; ++i)
          row_names.push_back("segment " + std::to_string(i));
        std::string path = resolve_out(dir, "assignments_expert" + std::to_string(j) + ".svg");
        write_strip_chart(path, "meta-domain per segment (expert " + std::to_string(j) + ")",
                          row_names, cells,
                          "epochs " + format_double(epochs.front()) + " to " +
                              format_double(epochs.back()));
        std::cout << "wrote " << path << "\n";
      }
    }

    if (sub->count("--scores") > 0) {
      TableCsv tb = read_table_csv(scores);
      Summary s = summarize_scores(tb, scores, data);
      std::string path = resolve_out(dir, out.empty() ? "summary.csv" : out);
      write_summary_csv(path, s);
      print_summary(s);
      std::cout << "wrote " << path << "\n";
    }
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cicada: cross-domain anomaly detection for multivariate time series"};
  app.require_subcommand(1);
  GenerateCmd gen;
  TrainCmd tr;
  DetectCmd det;
  EvaluateCmd ev;
  ReportCmd rep;
  gen.attach(app);
  tr.attach(app);
  det.attach(app);
  ev.attach(app);
  rep.attach(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen.sub->parsed()) return gen.run();
    if (tr.sub->parsed()) return tr.run();
    if (det.sub->parsed()) return det.run();
    if (ev.sub->parsed()) return ev.run();
    if (rep.sub->parsed()) return rep.run();
  } catch (const cicada::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cicada::err_exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
