#include <fstream>
#include <sstream>
#include <string>

#include "cicada/errors.hpp"
#include "cicada/pipeline.hpp"
#include "json.hpp"

namespace cicada {

namespace {

using nlohmann::json;

json dump_matrix(const Matrix& m) {
  return json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.a}};
}

Matrix parse_matrix(const json& j) {
  Matrix m(j.at("rows").get<int>(), j.at("cols").get<int>());
  std::vector<double> data = j.at("data").get<std::vector<double>>();
  require(data.size() == m.a.size(), Err::CorruptFile, "matrix payload has the wrong length");
  m.a = std::move(data);
  return m;
}

json dump_params(const ParamSet& p) {
  json arr = json::array();
  for (const auto& it : p.items) arr.push_back(json{{"name", it.first}, {"m", dump_matrix(it.second)}});
  return arr;
}

ParamSet parse_params(const json& j) {
  ParamSet p;
  for (const auto& it : j) p.items.push_back({it.at("name").get<std::string>(), parse_matrix(it.at("m"))});
  return p;
}

json dump_expert(const ExpertState& e) {
  json domains = json::array();
  for (const auto& dp : e.domains)
    domains.push_back(json{{"train", dump_params(dp.train)}, {"fixed", dump_params(dp.fixed)}});
  return json{
      {"kind", expert_kind_name(e.kind)},
      {"L", e.L},
      {"d", e.d},
      {"cfg",
       {{"r", e.cfg.r},
        {"R", e.cfg.R},
        {"lambda_sdl", e.cfg.lambda_sdl},
        {"n_landmark", e.cfg.n_landmark},
        {"ae_hidden", e.cfg.ae_hidden},
        {"ridge", e.cfg.ridge},
        {"eps_cov", e.cfg.eps_cov},
        {"feature_dim", e.cfg.feature_dim}}},
      {"domains", domains},
      {"alpha", e.alpha},
      {"created_epoch", e.created_epoch},
      {"shared", dump_params(e.shared)},
      {"sfa",
       {{"mean", dump_matrix(e.sfa.mean)},
        {"cov_inv", dump_matrix(e.sfa.cov_inv)},
        {"ready", e.sfa.ready}}},
      {"norm", {{"median", e.norm.median}, {"mad", e.norm.mad}, {"ready", e.norm.ready}}}};
}

ExpertState parse_expert(const json& j) {
  ExpertState e;
  e.kind = expert_kind_from_string(j.at("kind").get<std::string>());
  e.L = j.at("L").get<int>();
  e.d = j.at("d").get<int>();
  const json& c = j.at("cfg");
  e.cfg.r = c.at("r").get<int>();
  e.cfg.R = c.at("R").get<int>();
  e.cfg.lambda_sdl = c.at("lambda_sdl").get<double>();
  e.cfg.n_landmark = c.at("n_landmark").get<int>();
  e.cfg.ae_hidden = c.at("ae_hidden").get<int>();
  e.cfg.ridge = c.at("ridge").get<double>();
  e.cfg.eps_cov = c.at("eps_cov").get<double>();
  e.cfg.feature_dim = c.at("feature_dim").get<int>();
  for (const auto& dj : j.at("domains")) {
    DomainParams dp;
    dp.train = parse_params(dj.at("train"));
    dp.fixed = parse_params(dj.at("fixed"));
    e.domains.push_back(std::move(dp));
  }
  e.alpha = j.at("alpha").get<std::vector<double>>();
  e.created_epoch = j.at("created_epoch").get<std::vector<int>>();
  e.shared = parse_params(j.at("shared"));
  e.sfa.mean = parse_matrix(j.at("sfa").at("mean"));
  e.sfa.cov_inv = parse_matrix(j.at("sfa").at("cov_inv"));
  e.sfa.ready = j.at("sfa").at("ready").get<bool>();
  e.norm.median = j.at("norm").at("median").get<double>();
  e.norm.mad = j.at("norm").at("mad").get<double>();
  e.norm.ready = j.at("norm").at("ready").get<bool>();
  return e;
}

json dump_config(const RunConfig& cfg) {
  json experts = json::array();
  for (ExpertKind k : cfg.experts) experts.push_back(expert_kind_name(k));
  return json{{"L", cfg.L},
              {"N", cfg.N},
              {"experts", experts},
              {"expert",
               {{"r", cfg.expert.r},
                {"R", cfg.expert.R},
                {"lambda_sdl", cfg.expert.lambda_sdl},
                {"n_landmark", cfg.expert.n_landmark},
                {"ae_hidden", cfg.expert.ae_hidden},
                {"ridge", cfg.expert.ridge},
                {"eps_cov", cfg.expert.eps_cov},
                {"feature_dim", cfg.expert.feature_dim}}},
              {"fusion",
               {{"K", cfg.fusion.K},
                {"heads", cfg.fusion.heads},
                {"expert_heads", cfg.fusion.expert_heads},
                {"mlp_hidden", cfg.fusion.mlp_hidden}}},
              {"meta",
               {{"lambda1", cfg.meta.lambda1},
                {"lambda_meta", cfg.meta.lambda_meta},
                {"lr", cfg.meta.lr},
                {"alpha_lr", cfg.meta.alpha_lr},
                {"alpha_min", cfg.meta.alpha_min},
                {"alpha_max", cfg.meta.alpha_max},
                {"h_alpha", cfg.meta.h_alpha},
                {"m_cap", cfg.meta.m_cap}}},
              {"max_epoch", cfg.max_epoch},
              {"epoch_add", cfg.epoch_add},
              {"alpha1", cfg.alpha1},
              {"normalize_scores", cfg.normalize_scores},
              {"threshold", threshold_strategy_name(cfg.threshold)},
              {"percentile_q", cfg.percentile_q},
              {"test_segment_len", cfg.test_segment_len},
              {"seed", cfg.seed}};
}

RunConfig parse_config(const json& j) {
  RunConfig cfg;
  cfg.L = j.at("L").get<int>();
  cfg.N = j.at("N").get<int>();
  cfg.experts.clear();
  for (const auto& k : j.at("experts"))
    cfg.experts.push_back(expert_kind_from_string(k.get<std::string>()));
  const json& e = j.at("expert");
  cfg.expert.r = e.at("r").get<int>();
  cfg.expert.R = e.at("R").get<int>();
  cfg.expert.lambda_sdl = e.at("lambda_sdl").get<double>();
  cfg.expert.n_landmark = e.at("n_landmark").get<int>();
  cfg.expert.ae_hidden = e.at("ae_hidden").get<int>();
  cfg.expert.ridge = e.at("ridge").get<double>();
  cfg.expert.eps_cov = e.at("eps_cov").get<double>();
  cfg.expert.feature_dim = e.at("feature_dim").get<int>();
  const json& f = j.at("fusion");
  cfg.fusion.K = f.at("K").get<int>();
  cfg.fusion.heads = f.at("heads").get<int>();
  cfg.fusion.expert_heads = f.at("expert_heads").get<int>();
  cfg.fusion.mlp_hidden = f.at("mlp_hidden").get<int>();
  const json& m = j.at("meta");
  cfg.meta.lambda1 = m.at("lambda1").get<double>();
  cfg.meta.lambda_meta = m.at("lambda_meta").get<double>();
  cfg.meta.lr = m.at("lr").get<double>();
  cfg.meta.alpha_lr = m.at("alpha_lr").get<double>();
  cfg.meta.alpha_min = m.at("alpha_min").get<double>();
  cfg.meta.alpha_max = m.at("alpha_max").get<double>();
  cfg.meta.h_alpha = m.at("h_alpha").get<double>();
  cfg.meta.m_cap = m.at("m_cap").get<int>();
  cfg.max_epoch = j.at("max_epoch").get<int>();
  cfg.epoch_add = j.at("epoch_add").get<int>();
  cfg.alpha1 = j.at("alpha1").get<double>();
  cfg.normalize_scores = j.at("normalize_scores").get<bool>();
  cfg.threshold = threshold_strategy_from_string(j.at("threshold").get<std::string>());
  cfg.percentile_q = j.at("percentile_q").get<double>();
  cfg.test_segment_len = j.at("test_segment_len").get<int>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

json dump_history(const TrainHistory& h) {
  json epochs = json::array();
  for (const EpochRecord& r : h.epochs)
    epochs.push_back(json{{"epoch", r.epoch},
                          {"recon", r.recon},
                          {"extraction", r.extraction},
                          {"total", r.total},
                          {"mean_weights", r.mean_weights},
                          {"alpha", r.alpha},
                          {"assignment", r.assignment}});
  json exps = json::array();
  for (const ExpansionEvent& ev : h.expansions)
    exps.push_back(json{{"epoch", ev.epoch},
                        {"expert", ev.expert},
                        {"source", ev.source},
                        {"segment", ev.segment},
                        {"index", ev.index}});
  return json{{"epochs", epochs}, {"expansions", exps}};
}

TrainHistory parse_history(const json& j) {
  TrainHistory h;
  for (const auto& r : j.at("epochs")) {
    EpochRecord rec;
    rec.epoch = r.at("epoch").get<int>();
    rec.recon = r.at("recon").get<double>();
    rec.extraction = r.at("extraction").get<double>();
    rec.total = r.at("total").get<double>();
    rec.mean_weights = r.at("mean_weights").get<std::vector<double>>();
    rec.alpha = r.at("alpha").get<std::vector<std::vector<double>>>();
    rec.assignment = r.at("assignment").get<std::vector<std::vector<int>>>();
    h.epochs.push_back(std::move(rec));
  }
  for (const auto& e : j.at("expansions"))
    h.expansions.push_back({e.at("epoch").get<int>(), e.at("expert").get<int>(),
                            e.at("source").get<int>(), e.at("segment").get<int>(),
                            e.at("index").get<int>()});
  return h;
}

std::string checksum_hex(const std::string& payload) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : payload) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

}  // namespace

void save_model(const Model& m, const std::string& path) {
  json experts = json::array();
  for (const ExpertState& e : m.experts) experts.push_back(dump_expert(e));
  json payload{{"config", dump_config(m.cfg)},
               {"d", m.d},
               {"experts", experts},
               {"fusion",
                {{"cfg",
                  {{"K", m.fusion.cfg.K},
                   {"heads", m.fusion.cfg.heads},
                   {"expert_heads", m.fusion.cfg.expert_heads},
                   {"mlp_hidden", m.fusion.cfg.mlp_hidden}}},
                 {"num_experts", m.fusion.num_experts},
                 {"vec", m.fusion.vec},
                 {"p", dump_params(m.fusion.p)}}},
               {"history", dump_history(m.history)},
               {"train_scores", m.train_scores}};
  std::string body = payload.dump();
  json doc{{"version", kModelVersion}, {"checksum", checksum_hex(body)}, {"payload", payload}};

  std::ofstream out(path, std::ios::binary);
  require(out.good(), Err::IoError, "cannot open " + path + " for writing");
  out << doc.dump(1);
  out.close();
  require(out.good(), Err::IoError, "failed writing " + path);
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Err::IoError, "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();

  json doc;
  try {
    doc = json::parse(buf.str());
  } catch (const json::exception& e) {
    fail(Err::CorruptFile, std::string("not a parseable model file: ") + e.what());
  }

  try {
    std::string version = doc.at("version").get<std::string>();
    require(version == kModelVersion, Err::VersionMismatch,
            "model file has version " + version + ", this build reads " + kModelVersion);
    const json& payload = doc.at("payload");
    require(checksum_hex(payload.dump()) == doc.at("checksum").get<std::string>(),
            Err::CorruptFile, "payload checksum mismatch");

    Model m;
    m.cfg = parse_config(payload.at("config"));
    m.d = payload.at("d").get<int>();
    for (const auto& e : payload.at("experts")) m.experts.push_back(parse_expert(e));
    const json& f = payload.at("fusion");
    m.fusion.cfg.K = f.at("cfg").at("K").get<int>();
    m.fusion.cfg.heads = f.at("cfg").at("heads").get<int>();
    m.fusion.cfg.expert_heads = f.at("cfg").at("expert_heads").get<int>();
    m.fusion.cfg.mlp_hidden = f.at("cfg").at("mlp_hidden").get<int>();
    m.fusion.num_experts = f.at("num_experts").get<int>();
    m.fusion.vec = f.at("vec").get<int>();
    m.fusion.p = parse_params(f.at("p"));
    m.history = parse_history(payload.at("history"));
    m.train_scores = payload.at("train_scores").get<std::vector<double>>();
    return m;
  } catch (const Error&) {
    throw;
  } catch (const json::exception& e) {
    fail(Err::CorruptFile, std::string("model file is missing fields: ") + e.what());
  }
}

}  // namespace cicada
