#include "groklab/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace groklab {

namespace {

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void set_opt_long(Json& j, const char* key, const std::optional<long>& v) {
  if (v)
    j[key] = *v;
  else
    j[key] = nullptr;
}

void set_opt_double(Json& j, const char* key, const std::optional<double>& v) {
  if (v)
    j[key] = *v;
  else
    j[key] = nullptr;
}

std::optional<long> get_opt_long(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<long>();
}

std::optional<double> get_opt_double(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

void atomic_write(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
    out << contents;
    if (!out) throw std::runtime_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

void write_trajectory(const std::string& path, const TrajectoryLog& log) {
  std::ostringstream out;
  out << "# " << kTrajSchema << " eta=" << fmt17(log.eta) << " lambda=" << fmt17(log.lambda)
      << " log_every=" << log.log_every << "\n";
  out << "step v train_acc val_acc train_loss val_loss wd_coeff cos_to_ref\n";
  for (const TrajRow& r : log.rows) {
    out << r.step << ' ' << fmt17(r.v) << ' ' << fmt17(r.train_acc) << ' ' << fmt17(r.val_acc)
        << ' ' << fmt17(r.train_loss) << ' ' << fmt17(r.val_loss) << ' ' << fmt17(r.wd_coeff)
        << ' ';
    if (r.has_cos)
      out << fmt17(r.cos_to_ref);
    else
      out << '-';
    out << '\n';
  }
  atomic_write(path, out.str());
}

TrajectoryLog read_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trajectory " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty trajectory " + path);

  TrajectoryLog log;
  {
    std::istringstream head(line);
    std::string hash, schema, kv;
    head >> hash >> schema;
    if (hash != "#" || schema != kTrajSchema)
      throw std::runtime_error("bad trajectory schema in " + path);
    while (head >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = kv.substr(0, eq);
      const std::string val = kv.substr(eq + 1);
      if (key == "eta") log.eta = std::stod(val);
      if (key == "lambda") log.lambda = std::stod(val);
      if (key == "log_every") log.log_every = std::stoi(val);
    }
  }
  if (!std::getline(in, line)) throw std::runtime_error("missing header row in " + path);

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    TrajRow r;
    std::string cos_tok;
    if (!(row >> r.step >> r.v >> r.train_acc >> r.val_acc >> r.train_loss >> r.val_loss >>
          r.wd_coeff >> cos_tok))
      throw std::runtime_error("malformed trajectory row in " + path + ": " + line);
    if (cos_tok != "-") {
      r.cos_to_ref = std::stod(cos_tok);
      r.has_cos = true;
    }
    log.rows.push_back(r);
  }
  return log;
}

Json run_config_to_json(const RunConfig& c) {
  Json j;
  j["cell_id"] = c.cell_id;
  Json task;
  if (c.task.kind == TaskConfig::Kind::modular) {
    task["kind"] = "modular";
    task["op"] = c.task.op == ModOp::add ? "add" : "mult";
    task["p"] = c.task.p;
  } else {
    task["kind"] = "parity";
    task["n"] = c.task.n;
    task["k"] = c.task.k;
    task["num_samples"] = c.task.num_samples;
  }
  j["task"] = task;
  Json arch;
  arch["name"] = arch_name(c.arch.arch);
  arch["embed_dim"] = c.arch.embed_dim;
  arch["heads"] = c.arch.heads;
  arch["ff_dim"] = c.arch.ff_dim;
  arch["pooling"] = c.arch.pooling == Pooling::mean ? "mean" : "final_position";
  j["arch"] = arch;
  Json optim;
  optim["kind"] = opt_kind_name(c.optim.kind);
  optim["eta"] = c.optim.eta;
  optim["lambda"] = c.optim.lambda;
  optim["beta1"] = c.optim.beta1;
  optim["beta2"] = c.optim.beta2;
  optim["eps"] = c.optim.eps;
  j["optim"] = optim;
  j["seed"] = c.seed;
  j["max_steps"] = c.max_steps;
  j["log_every"] = c.log_every;
  j["intervention"] = intervention_name(c.intervention);
  j["rescale_factor"] = c.rescale_factor;
  j["acc_mem"] = c.acc_mem;
  j["acc_grok"] = c.acc_grok;
  j["acc_grok_soft"] = c.acc_grok_soft;
  j["plateau_extra_steps"] = c.plateau_extra_steps;
  return j;
}

RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  c.cell_id = j.at("cell_id").get<std::string>();
  const Json& task = j.at("task");
  const std::string kind = task.at("kind").get<std::string>();
  if (kind == "modular") {
    c.task.kind = TaskConfig::Kind::modular;
    const std::string op = task.at("op").get<std::string>();
    if (op != "add" && op != "mult") throw std::runtime_error("config: unknown modular op " + op);
    c.task.op = op == "add" ? ModOp::add : ModOp::mult;
    c.task.p = task.at("p").get<int>();
  } else if (kind == "parity") {
    c.task.kind = TaskConfig::Kind::parity;
    c.task.n = task.at("n").get<int>();
    c.task.k = task.at("k").get<int>();
    c.task.num_samples = task.at("num_samples").get<int>();
  } else {
    throw std::runtime_error("config: unknown task kind " + kind);
  }
  const Json& arch = j.at("arch");
  const std::string arch_str = arch.at("name").get<std::string>();
  const auto a = arch_from_name(arch_str);
  if (!a) throw std::runtime_error("config: unknown arch " + arch_str);
  c.arch.arch = *a;
  c.arch.embed_dim = arch.value("embed_dim", 128);
  c.arch.heads = arch.value("heads", 4);
  c.arch.ff_dim = arch.value("ff_dim", 512);
  const std::string pooling = arch.value("pooling", "mean");
  if (pooling != "mean" && pooling != "final_position")
    throw std::runtime_error("config: unknown pooling " + pooling);
  c.arch.pooling = pooling == "mean" ? Pooling::mean : Pooling::final_position;
  const Json& optim = j.at("optim");
  const std::string okind = optim.value("kind", "adamw");
  if (okind != "adamw" && okind != "sgd_wd") throw std::runtime_error("config: unknown optimizer " + okind);
  c.optim.kind = okind == "adamw" ? OptKind::adamw : OptKind::sgd_wd;
  c.optim.eta = optim.at("eta").get<double>();
  c.optim.lambda = optim.at("lambda").get<double>();
  c.optim.beta1 = optim.value("beta1", 0.9);
  c.optim.beta2 = optim.value("beta2", 0.999);
  c.optim.eps = optim.value("eps", 1e-8);
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  c.max_steps = j.at("max_steps").get<long>();
  c.log_every = j.value("log_every", 20);
  const std::string iv = j.value("intervention", "none");
  const auto ik = intervention_from_name(iv);
  if (!ik) throw std::runtime_error("config: unknown intervention " + iv);
  c.intervention = *ik;
  c.rescale_factor = j.value("rescale_factor", 0.9);
  c.acc_mem = j.value("acc_mem", 0.99);
  c.acc_grok = j.value("acc_grok", 0.99);
  c.acc_grok_soft = j.value("acc_grok_soft", 0.95);
  c.plateau_extra_steps = j.value("plateau_extra_steps", 2000L);
  return c;
}

Json summary_to_json(const RunSummary& s) {
  Json j;
  j["schema"] = kSummarySchema;
  j["run_id"] = s.run_id;
  Json config = run_config_to_json(s.config);
  for (auto& [key, value] : config.items()) j[key] = value;
  j["steps_run"] = s.steps_run;
  j["completed"] = s.completed;
  set_opt_long(j, "t_mem", s.t_mem);
  set_opt_long(j, "t_mem_loss", s.t_mem_loss);
  set_opt_long(j, "t_grok_95", s.t_grok_95);
  set_opt_long(j, "t_grok_99", s.t_grok_99);
  set_opt_double(j, "v_mem", s.v_mem);
  set_opt_double(j, "v_post", s.v_post);
  j["v_post_method"] = s.v_post_method;
  j["grokked"] = s.grokked;
  j["diverged"] = s.diverged;
  set_opt_long(j, "diverged_step", s.diverged_step);
  set_opt_double(j, "alpha_final_deg", s.alpha_final_deg);
  set_opt_long(j, "intervention_fired_at", s.intervention_fired_at);
  set_opt_double(j, "f3_norm_rel_std", s.f3_norm_rel_std);
  return j;
}

RunSummary summary_from_json(const Json& j) {
  if (j.value("schema", "") != kSummarySchema)
    throw std::runtime_error("summary: unexpected schema");
  RunSummary s;
  s.config = run_config_from_json(j);
  s.run_id = j.at("run_id").get<std::string>();
  s.steps_run = j.at("steps_run").get<long>();
  s.completed = j.at("completed").get<bool>();
  s.t_mem = get_opt_long(j, "t_mem");
  s.t_mem_loss = get_opt_long(j, "t_mem_loss");
  s.t_grok_95 = get_opt_long(j, "t_grok_95");
  s.t_grok_99 = get_opt_long(j, "t_grok_99");
  s.v_mem = get_opt_double(j, "v_mem");
  s.v_post = get_opt_double(j, "v_post");
  s.v_post_method = j.value("v_post_method", "");
  s.grokked = j.at("grokked").get<bool>();
  s.diverged = j.at("diverged").get<bool>();
  s.diverged_step = get_opt_long(j, "diverged_step");
  s.alpha_final_deg = get_opt_double(j, "alpha_final_deg");
  s.intervention_fired_at = get_opt_long(j, "intervention_fired_at");
  s.f3_norm_rel_std = get_opt_double(j, "f3_norm_rel_std");
  return s;
}

void write_json_file(const std::string& path, const Json& j) {
  atomic_write(path, j.dump() + "\n");
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("parse error in " + path + ": " + e.what());
  }
  return j;
}

void write_summary(const std::string& path, const RunSummary& summary) {
  write_json_file(path, summary_to_json(summary));
}

RunSummary read_summary(const std::string& path) { return summary_from_json(read_json_file(path)); }

CampaignConfig campaign_from_json(const Json& j) {
  if (j.value("schema", "") != kCampaignSchema)
    throw std::runtime_error("campaign config: expected schema " + std::string(kCampaignSchema));
  CampaignConfig cfg;
  cfg.campaign_id = j.at("campaign_id").get<std::string>();
  cfg.jobs = j.value("jobs", 1);
  if (!j.contains("cells") || !j.at("cells").is_array() || j.at("cells").empty())
    throw std::runtime_error("campaign config: no cells");
  std::vector<std::string> seen;
  for (const Json& cell : j.at("cells")) {
    CampaignCell cc;
    cc.base = run_config_from_json(cell);
    cc.base.validate();
    if (!cell.contains("seeds") || !cell.at("seeds").is_array() || cell.at("seeds").empty())
      throw std::runtime_error("campaign config: cell " + cc.base.cell_id + " lists no seeds");
    for (const Json& s : cell.at("seeds")) cc.seeds.push_back(s.get<std::uint64_t>());
    for (const std::string& id : seen)
      if (id == cc.base.cell_id)
        throw std::runtime_error("campaign config: duplicate cell id " + cc.base.cell_id);
    seen.push_back(cc.base.cell_id);
    cfg.cells.push_back(std::move(cc));
  }
  return cfg;
}

CampaignConfig load_campaign(const std::string& path) {
  return campaign_from_json(read_json_file(path));
}

std::vector<Claim> load_claims(const std::string& path) {
  const Json j = read_json_file(path);
  if (j.value("schema", "") != kClaimsSchema)
    throw std::runtime_error("claims: expected schema " + std::string(kClaimsSchema));
  std::vector<Claim> claims;
  for (const Json& c : j.value("claims", Json::array())) {
    Claim claim;
    claim.id = c.at("id").get<std::string>();
    claim.file = c.at("file").get<std::string>();
    claim.pointer = c.at("pointer").get<std::string>();
    claim.target = c.at("target").get<double>();
    claim.tol_abs = c.value("tol_abs", 0.0);
    claim.tol_rel = c.value("tol_rel", 0.0);
    claim.scope = c.value("scope", "desk");
    claim.source = c.value("source", "");
    claims.push_back(std::move(claim));
  }
  return claims;
}

}  // namespace groklab
