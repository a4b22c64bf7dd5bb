#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cicada/csv.hpp"
#include "cicada/errors.hpp"
#include "cicada/metrics.hpp"
#include "cicada/svg.hpp"
#include "doctest.h"

using namespace cicada;
namespace fs = std::filesystem;

namespace {

std::string bin() {
  const char* b = std::getenv("CICADA_BIN");
  REQUIRE_MESSAGE(b != nullptr, "CICADA_BIN must point at the built binary");
  return b;
}

struct RunResult {
  int code = -1;
  std::string out;  // stdout and stderr merged
};

RunResult run_in(const std::string& dir, const std::string& args) {
  std::string cmd = "cd " + dir + " && CICADA_OUT_DIR= " + bin() + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  RunResult r;
  char buf[4096];
  std::size_t n = 0;
  while ((n = fread(buf, 1, sizeof(buf), p)) > 0) r.out.append(buf, n);
  int st = pclose(p);
  r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string fresh_dir(const std::string& tag) {
  fs::path d = fs::temp_directory_path() / ("cicada_cli_" + tag + "_" + std::to_string(getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), ("missing file " + path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("table CSV round-trips doubles exactly") {
  std::string dir = fresh_dir("csv");
  TableCsv t;
  t.names = {"a", "b", "c"};
  t.rows = {{3.141592653589793, 1.0 / 3.0, 1e-300},
            {-0.0, 6.02214076e23, -123456.78901234567},
            {5e-324, -1.7976931348623157e308, 42.0}};
  write_table_csv(dir + "/t.csv", t);
  TableCsv back = read_table_csv(dir + "/t.csv");
  REQUIRE(back.names == t.names);
  REQUIRE(back.rows.size() == t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    for (std::size_t j = 0; j < t.rows[i].size(); ++j)
      CHECK(std::memcmp(&back.rows[i][j], &t.rows[i][j], sizeof(double)) == 0);
}

TEST_CASE("series CSV splits the label column and rejects malformed input") {
  std::string dir = fresh_dir("series");
  SeriesCsv s;
  s.x = Matrix(4, 2);
  for (int t = 0; t < 4; ++t)
    for (int j = 0; j < 2; ++j) s.x(t, j) = 10.0 * t + j;
  s.label = {0, 1, 1, 0};
  s.names = {"u", "v"};
  write_series_csv(dir + "/s.csv", s);
  SeriesCsv back = read_series_csv(dir + "/s.csv");
  CHECK(back.names == s.names);
  CHECK(back.label == s.label);
  REQUIRE(back.x.rows == 4);
  REQUIRE(back.x.cols == 2);
  for (int t = 0; t < 4; ++t)
    for (int j = 0; j < 2; ++j) CHECK(back.x(t, j) == s.x(t, j));

  {
    std::ofstream f(dir + "/ragged.csv");
    f << "a,b\n1,2\n3\n";
  }
  CHECK_THROWS_WITH_AS(read_series_csv(dir + "/ragged.csv"),
                       doctest::Contains("row 2"), Error);
  {
    std::ofstream f(dir + "/junk.csv");
    f << "a,b\n1,fnord\n";
  }
  CHECK_THROWS_WITH_AS(read_series_csv(dir + "/junk.csv"),
                       doctest::Contains("non-numeric"), Error);
  {
    std::ofstream f(dir + "/badlabel.csv");
    f << "a,label\n1,2\n";
  }
  CHECK_THROWS_WITH_AS(read_series_csv(dir + "/badlabel.csv"),
                       doctest::Contains("label"), Error);
  CHECK_THROWS_AS(read_series_csv(dir + "/absent.csv"), Error);
}

TEST_CASE("line charts split series at gaps and strip charts validate shape") {
  std::string dir = fresh_dir("svg");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> x = {1, 2, 3, 4, 5};
  std::vector<ChartSeries> series = {{"full", {1, 2, 3, 2, 1}},
                                     {"late", {nan, nan, 5, 6, 7}},
                                     {"split", {1, 2, nan, 4, 5}}};
  write_line_chart(dir + "/c.svg", "t", x, series, "epoch", "y");
  std::string svg = slurp(dir + "/c.svg");
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.find("polyline") != std::string::npos);
  CHECK(svg.find("full") != std::string::npos);
  int polylines = 0;
  for (std::size_t at = svg.find("<polyline"); at != std::string::npos;
       at = svg.find("<polyline", at + 1))
    ++polylines;
  CHECK(polylines == 4);  // one whole series, one late start, one split in two

  write_strip_chart(dir + "/s.svg", "strips", {"segment 0", "segment 1"},
                    {{0, 1, 1}, {2, 2, 0}}, "epochs");
  std::string strip = slurp(dir + "/s.svg");
  CHECK(strip.find("<rect") != std::string::npos);
  CHECK(strip.find("segment 1") != std::string::npos);
  CHECK_THROWS_AS(
      write_strip_chart(dir + "/bad.svg", "t", {"a", "b"}, {{0, 1}, {0}}, "x"),
      Error);
  CHECK_THROWS_AS(write_line_chart(dir + "/bad2.svg", "t", x, {{"empty", {nan, nan, nan, nan, nan}}},
                                   "x", "y"),
                  Error);
}

TEST_CASE("generate is deterministic and labels spikes") {
  std::string a = fresh_dir("gen_a");
  std::string b = fresh_dir("gen_b");
  std::string args = "generate --kind pca --T 60 --d 4 --p 2 --seed 7 -o x.csv";
  RunResult ra = run_in(a, args);
  REQUIRE_MESSAGE(ra.code == 0, ra.out);
  CHECK(ra.out.find("seed: 7") != std::string::npos);
  RunResult rb = run_in(b, args);
  REQUIRE(rb.code == 0);
  CHECK(slurp(a + "/x.csv") == slurp(b + "/x.csv"));

  RunResult rc = run_in(b, "generate --kind pca --T 60 --d 4 --p 2 --seed 8 -o y.csv");
  REQUIRE(rc.code == 0);
  CHECK(slurp(b + "/x.csv") != slurp(b + "/y.csv"));

  RunResult rs = run_in(a, "generate --kind sdl --T 200 --d 4 --p 2 --seed 3 "
                           "--spike-rate 0.05 --spike-sigma 5 -o spiky.csv");
  REQUIRE_MESSAGE(rs.code == 0, rs.out);
  SeriesCsv sp = read_series_csv(a + "/spiky.csv");
  REQUIRE(sp.label.size() == 200);
  int ones = 0;
  for (int v : sp.label) ones += v;
  CHECK(ones == 10);

  RunResult rd = run_in(a, "generate --kind tcpd --T 40 --d 4 --p 2 --L 2 --seed 1 "
                           "--domains 0.5,0.5 -o dom.csv");
  REQUIRE_MESSAGE(rd.code == 0, rd.out);
  TableCsv side = read_table_csv(a + "/dom_domains.csv");
  REQUIRE(side.names == std::vector<std::string>{"t", "domain"});
  REQUIRE(side.rows.size() == 40);
  CHECK(side.rows.front()[1] == 0.0);
  CHECK(side.rows.back()[1] == 1.0);
}

TEST_CASE("generate without a kind exits 2 with usage text") {
  std::string dir = fresh_dir("gen_nokind");
  RunResult r = run_in(dir, "generate --T 10");
  CHECK(r.code == 2);
  CHECK(r.out.find("--kind") != std::string::npos);
  CHECK(r.out.find("Usage") != std::string::npos);
}

TEST_CASE("train emits the model plus history files, byte-identical across reruns") {
  std::string dir = fresh_dir("train");
  REQUIRE(run_in(dir, "generate --kind pca --T 80 --d 4 --p 2 --seed 5 -o data.csv").code == 0);
  std::string args = "train data.csv --experts pca,sfa --L 3 --N 4 --max-epoch 2 "
                     "--epoch-add 0";
  RunResult r1 = run_in(dir, args + " --seed 9 --out-dir run1");
  REQUIRE_MESSAGE(r1.code == 0, r1.out);
  RunResult r2 = run_in(dir, args + " --seed 9 --out-dir run2");
  REQUIRE(r2.code == 0);
  for (const char* f : {"model.json", "weights_per_epoch.csv", "alpha_per_epoch.csv",
                        "assignments_per_epoch.csv", "expansions.csv"})
    CHECK(slurp(dir + "/run1/" + f) == slurp(dir + "/run2/" + f));

  TableCsv wt = read_table_csv(dir + "/run1/weights_per_epoch.csv");
  REQUIRE(wt.names == std::vector<std::string>{"epoch", "pca", "sfa"});
  REQUIRE(wt.rows.size() == 2);
  for (const auto& row : wt.rows) CHECK(row[1] + row[2] == doctest::Approx(1.0).epsilon(1e-6));

  TableCsv al = read_table_csv(dir + "/run1/alpha_per_epoch.csv");
  REQUIRE(al.names == std::vector<std::string>{"epoch", "expert", "domain", "alpha"});
  CHECK(al.rows.size() == 4);  // two experts, one meta-domain, two epochs

  RunResult r3 = run_in(dir, args + " --seed 10 --out-dir run3");
  REQUIRE(r3.code == 0);
  CHECK(slurp(dir + "/run1/model.json") != slurp(dir + "/run3/model.json"));
}

TEST_CASE("detect writes a typed report and enforces threshold preconditions") {
  std::string dir = fresh_dir("detect");
  REQUIRE(run_in(dir, "generate --kind pca --T 80 --d 4 --p 2 --seed 5 -o data.csv").code == 0);
  REQUIRE(run_in(dir, "generate --kind pca --T 50 --d 4 --p 2 --seed 6 "
                      "--spike-rate 0.04 -o test.csv").code == 0);
  REQUIRE(run_in(dir, "train data.csv --experts pca,sfa --L 3 --N 4 --max-epoch 2 "
                      "--epoch-add 0 --seed 9 -o m.json").code == 0);

  RunResult rp = run_in(dir, "detect test.csv --model m.json "
                             "--threshold-strategy percentile:90 -o rep.csv");
  REQUIRE_MESSAGE(rp.code == 0, rp.out);
  CHECK(rp.out.find("train_percentile") != std::string::npos);
  TableCsv rep = read_table_csv(dir + "/rep.csv");
  REQUIRE(rep.names == std::vector<std::string>{"t", "anosc", "y_pred", "w_1", "w_2", "A_1",
                                                "A_2"});
  REQUIRE(rep.rows.size() == 47);  // T - L windows
  CHECK(rep.rows.front()[0] == 2.0);
  CHECK(rep.rows.back()[0] == 48.0);
  double lo_flagged = std::numeric_limits<double>::infinity();
  double hi_clear = -std::numeric_limits<double>::infinity();
  for (const auto& row : rep.rows) {
    CHECK((row[2] == 0.0 || row[2] == 1.0));
    CHECK(row[3] + row[4] == doctest::Approx(1.0).epsilon(1e-6));
    if (row[2] == 1.0)
      lo_flagged = std::min(lo_flagged, row[1]);
    else
      hi_clear = std::max(hi_clear, row[1]);
  }
  CHECK(hi_clear <= lo_flagged);  // the gate is a single cut on anosc

  RunResult rf = run_in(dir, "detect test.csv --model m.json --threshold-strategy max-f1 "
                             "-o rep_f1.csv");
  REQUIRE_MESSAGE(rf.code == 0, rf.out);

  RunResult ru = run_in(dir, "detect data.csv --model m.json --threshold-strategy max-f1");
  CHECK(ru.code == 2);
  CHECK(ru.out.find("label") != std::string::npos);

  REQUIRE(run_in(dir, "generate --kind pca --T 30 --d 2 --p 2 --seed 1 -o thin.csv").code == 0);
  CHECK(run_in(dir, "detect thin.csv --model m.json").code == 5);
  CHECK(run_in(dir, "detect test.csv --model absent.json").code == 3);
  RunResult rq = run_in(dir, "detect test.csv --model m.json --threshold-strategy max-f1:0.5");
  CHECK(rq.code == 2);
}

TEST_CASE("config files merge with flag overrides and reject unknown keys") {
  std::string dir = fresh_dir("config");
  REQUIRE(run_in(dir, "generate --kind pca --T 80 --d 4 --p 2 --seed 5 -o data.csv").code == 0);
  {
    std::ofstream f(dir + "/run.cfg");
    f << "# comment\nL = 3\nN = 4\nexperts = pca, sfa\nmax_epoch = 2\nepoch_add = 0\n"
      << "seed = 9\n[meta]\nlambda1 = 2\n";
  }
  RunResult r1 = run_in(dir, "train data.csv --config run.cfg --out-dir a");
  REQUIRE_MESSAGE(r1.code == 0, r1.out);
  RunResult r2 = run_in(dir, "train data.csv --L 3 --N 4 --experts pca,sfa --max-epoch 2 "
                             "--epoch-add 0 --seed 9 --out-dir b");
  REQUIRE(r2.code == 0);
  // The config run sets lambda1 = 2, so it must differ from the default-flag run.
  CHECK(slurp(dir + "/a/weights_per_epoch.csv") != slurp(dir + "/b/weights_per_epoch.csv"));

  RunResult r3 = run_in(dir, "train data.csv --config run.cfg --seed 11 --out-dir c");
  REQUIRE(r3.code == 0);
  CHECK(slurp(dir + "/a/model.json") != slurp(dir + "/c/model.json"));

  {
    std::ofstream f(dir + "/bad.cfg");
    f << "L = 3\nwibble = 1\n";
  }
  RunResult rb = run_in(dir, "train data.csv --config bad.cfg");
  CHECK(rb.code == 2);
  CHECK(rb.out.find("wibble") != std::string::npos);

  {
    std::ofstream f(dir + "/badsec.cfg");
    f << "[nonsense]\nx = 1\n";
  }
  CHECK(run_in(dir, "train data.csv --config badsec.cfg").code == 2);

  {
    std::ofstream f(dir + "/badval.cfg");
    f << "N = soon\n";
  }
  CHECK(run_in(dir, "train data.csv --config badval.cfg").code == 2);
}

TEST_CASE("evaluate matches the metric library on a hand-built score table") {
  std::string dir = fresh_dir("eval");
  std::vector<double> score = {0.1, 0.9, 0.2, 0.8, 0.7, 0.1, 0.6, 0.3};
  std::vector<int> label = {0, 1, 0, 1, 1, 0, 0, 0};
  {
    TableCsv t;
    t.names = {"score", "label"};
    for (std::size_t i = 0; i < score.size(); ++i)
      t.rows.push_back({score[i], static_cast<double>(label[i])});
    write_table_csv(dir + "/scores.csv", t);
  }
  RunResult r = run_in(dir, "evaluate scores.csv -o out.csv");
  REQUIRE_MESSAGE(r.code == 0, r.out);
  TableCsv got = read_table_csv(dir + "/out.csv");
  REQUIRE(got.names == std::vector<std::string>{"f1", "auroc", "auprc", "f1_pa", "auroc_pa",
                                                "auprc_pa"});
  REQUIRE(got.rows.size() == 1);

  double c = max_f1_threshold(score, label);
  std::vector<int> pred = apply_threshold(score, c);
  std::vector<int> adj = point_adjust(pred, label);
  std::vector<double> adj_scores(adj.begin(), adj.end());
  CHECK(got.rows[0][0] == prf(pred, label).f1);
  CHECK(got.rows[0][1] == auroc(score, label));
  CHECK(got.rows[0][2] == auprc(score, label));
  CHECK(got.rows[0][3] == prf(adj, label).f1);
  CHECK(got.rows[0][4] == auroc(adj_scores, label));
  CHECK(got.rows[0][5] == auprc(adj_scores, label));

  // Labels can come from a separate series file aligned by the t column.
  {
    TableCsv t;
    t.names = {"t", "anosc"};
    for (std::size_t i = 0; i < score.size(); ++i)
      t.rows.push_back({static_cast<double>(i + 2), score[i]});
    write_table_csv(dir + "/scores_t.csv", t);
    SeriesCsv s;
    s.x = Matrix(12, 1);
    s.label.assign(12, 0);
    for (std::size_t i = 0; i < label.size(); ++i) s.label[i + 2] = label[i];
    s.names = {"x1"};
    write_series_csv(dir + "/labeled.csv", s);
  }
  RunResult rt = run_in(dir, "evaluate scores_t.csv --data labeled.csv -o out_t.csv");
  REQUIRE_MESSAGE(rt.code == 0, rt.out);
  TableCsv got_t = read_table_csv(dir + "/out_t.csv");
  CHECK(got_t.rows[0][1] == auroc(score, label));

  RunResult rn = run_in(dir, "evaluate scores_t.csv");
  CHECK(rn.code == 2);
  CHECK(rn.out.find("label") != std::string::npos);
}

TEST_CASE("report renders charts from training history") {
  std::string dir = fresh_dir("report");
  REQUIRE(run_in(dir, "generate --kind pca --T 80 --d 4 --p 2 --seed 5 -o data.csv").code == 0);
  REQUIRE(run_in(dir, "generate --kind pca --T 50 --d 4 --p 2 --seed 6 --spike-rate 0.04 "
                      "-o test.csv").code == 0);
  REQUIRE(run_in(dir, "train data.csv --experts pca,sfa --L 3 --N 4 --max-epoch 2 "
                      "--epoch-add 0 --seed 9 -o m.json").code == 0);
  REQUIRE(run_in(dir, "detect test.csv --model m.json --threshold-strategy percentile:90 "
                      "-o rep.csv").code == 0);

  RunResult r = run_in(dir, "report --weights weights_per_epoch.csv --alpha alpha_per_epoch.csv "
                            "--assignments assignments_per_epoch.csv --scores rep.csv "
                            "--data test.csv --out-dir charts");
  REQUIRE_MESSAGE(r.code == 0, r.out);
  for (const char* f : {"charts/weights_per_epoch.svg", "charts/alpha_per_epoch.svg",
                        "charts/assignments_expert0.svg", "charts/assignments_expert1.svg"}) {
    std::string svg = slurp(dir + "/" + f);
    CHECK(svg.find("<svg") == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
  }
  CHECK(slurp(dir + "/charts/weights_per_epoch.svg").find("pca") != std::string::npos);
  CHECK(slurp(dir + "/charts/assignments_expert0.svg").find("segment 3") != std::string::npos);
  TableCsv sum = read_table_csv(dir + "/charts/summary.csv");
  CHECK(sum.names.size() == 6);

  CHECK(run_in(dir, "report").code == 2);
  CHECK(run_in(dir, "report --weights absent.csv").code == 3);
}
