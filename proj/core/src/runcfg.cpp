#include "lexpol/runcfg.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "lexpol/errors.hpp"

namespace lexpol {

namespace {

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ConfigError("field " + key + ": expected a boolean, got '" + v + "'");
}

long long parse_ll(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("field " + key + ": expected an integer, got '" + v + "'");
  }
}

double parse_d(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("field " + key + ": expected a number, got '" + v + "'");
  }
}

std::vector<std::uint64_t> parse_seed_list(const std::string& key,
                                           const std::string& v) {
  std::vector<std::uint64_t> out;
  std::string cur;
  for (char c : v + ",") {
    if (c == ',') {
      if (!cur.empty()) {
        out.push_back(static_cast<std::uint64_t>(parse_ll(key, cur)));
        cur.clear();
      }
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur.push_back(c);
    }
  }
  if (out.empty()) throw ConfigError("field " + key + ": empty list");
  return out;
}

std::vector<std::string> parse_path_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : v + ",") {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  return out;
}

std::string join_seeds(const std::vector<std::uint64_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s.push_back(',');
    s += std::to_string(v[i]);
  }
  return s;
}

std::string join_paths(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s.push_back(',');
    s += v[i];
  }
  return s;
}

std::string fmt_d(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

RunConfig RunConfig::parse_string(const std::string& text,
                                  const std::string& source_name) {
  RunConfig c;
  bool saw_suite = false, saw_mode = false, saw_out = false;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // strip comments and surrounding whitespace
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    auto e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);

    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source_name + ":" + std::to_string(lineno) +
                        ": expected key=value, got '" + line + "'");
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      const auto b2 = s.find_first_not_of(" \t");
      const auto e2 = s.find_last_not_of(" \t");
      s = b2 == std::string::npos ? "" : s.substr(b2, e2 - b2 + 1);
    };
    trim(key);
    trim(val);

    try {
      if (key == "suite") { c.suite_name = val; saw_suite = true; }
      else if (key == "mode") { c.agent.mode = mode_from_string(val); saw_mode = true; }
      else if (key == "out") { c.out_dir = val; saw_out = true; }
      else if (key == "k") c.agent.k = static_cast<int>(parse_ll(key, val));
      else if (key == "n") c.agent.n = static_cast<int>(parse_ll(key, val));
      else if (key == "stopgrad_context") c.agent.stopgrad_context = parse_bool(key, val);
      else if (key == "actor_hidden") c.agent.actor_hidden = parse_int_list(val);
      else if (key == "critic_hidden") c.agent.critic_hidden = parse_int_list(val);
      else if (key == "gate_hidden") c.agent.gate_hidden = parse_int_list(val);
      else if (key == "context_seed") c.agent.context_seed = static_cast<std::uint64_t>(parse_ll(key, val));
      else if (key == "context_table") c.agent.context_table = parse_bool(key, val);
      else if (key == "context_table_path") c.agent.context_table_path = val;
      else if (key == "care_k_enc") c.agent.care_k_enc = static_cast<int>(parse_ll(key, val));
      else if (key == "care_repr_dim") c.agent.care_repr_dim = static_cast<int>(parse_ll(key, val));
      else if (key == "care_enc_hidden") c.agent.care_enc_hidden = parse_int_list(val);
      else if (key == "care_gate_hidden") c.agent.care_gate_hidden = parse_int_list(val);
      else if (key == "expert_paths") c.agent.expert_paths = parse_path_list(val);
      else if (key == "task_index") c.task_index = static_cast<int>(parse_ll(key, val));
      else if (key == "gamma") c.sac.gamma = parse_d(key, val);
      else if (key == "tau") c.sac.tau = parse_d(key, val);
      else if (key == "lr") c.sac.lr = parse_d(key, val);
      else if (key == "batch_per_task") c.sac.batch_per_task = static_cast<int>(parse_ll(key, val));
      else if (key == "replay_capacity") c.sac.replay_capacity = static_cast<std::size_t>(parse_ll(key, val));
      else if (key == "warmup_steps") c.sac.warmup_steps = static_cast<long>(parse_ll(key, val));
      else if (key == "reward_scale") c.sac.reward_scale = parse_d(key, val);
      else if (key == "auto_alpha") c.sac.auto_alpha = parse_bool(key, val);
      else if (key == "fixed_alpha") c.sac.fixed_alpha = parse_d(key, val);
      else if (key == "target_entropy") c.sac.target_entropy = parse_d(key, val);
      else if (key == "logstd_min") c.sac.logstd_min = parse_d(key, val);
      else if (key == "logstd_max") c.sac.logstd_max = parse_d(key, val);
      else if (key == "horizon") c.suite_params.horizon = static_cast<int>(parse_ll(key, val));
      else if (key == "shaping") c.suite_params.shaping = parse_d(key, val);
      else if (key == "sparse") c.suite_params.sparse = parse_bool(key, val);
      else if (key == "step_delta") c.suite_params.step_delta = parse_d(key, val);
      else if (key == "goal_radius") c.suite_params.goal_radius = parse_d(key, val);
      else if (key == "phase_bit") c.suite_params.phase_bit = parse_bool(key, val);
      else if (key == "phase_metadata") c.suite_params.phase_metadata = parse_bool(key, val);
      else if (key == "goal_bonus") c.suite_params.goal_bonus = parse_d(key, val);
      else if (key == "wrong_order_penalty") c.suite_params.wrong_order_penalty = parse_d(key, val);
      else if (key == "timeout_penalty") c.suite_params.timeout_penalty = parse_d(key, val);
      else if (key == "nav_tasks") c.suite_params.nav_tasks = static_cast<int>(parse_ll(key, val));
      else if (key == "identical_semantics") c.suite_params.identical_semantics = parse_bool(key, val);
      else if (key == "seeds") c.seeds = parse_seed_list(key, val);
      else if (key == "budget_steps") c.budget_steps = parse_ll(key, val);
      else if (key == "eval_interval") c.eval_interval = parse_ll(key, val);
      else if (key == "eval_trials") c.eval_trials = static_cast<int>(parse_ll(key, val));
      else if (key == "log_interval") c.log_interval = parse_ll(key, val);
      else if (key == "ckpt_interval") c.ckpt_interval = parse_ll(key, val);
      else
        throw ConfigError("unknown key '" + key + "'");
    } catch (const ConfigError& e) {
      throw ConfigError(source_name + ":" + std::to_string(lineno) + ": " +
                        e.what());
    }
  }
  if (!saw_suite) throw ConfigError(source_name + ": missing required field: suite");
  if (!saw_mode) throw ConfigError(source_name + ": missing required field: mode");
  if (!saw_out) throw ConfigError(source_name + ": missing required field: out");
  return c;
}

RunConfig RunConfig::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str(), path.string());
}

void RunConfig::validate() const {
  agent.validate();
  if (suite_name.empty()) throw ConfigError("missing required field: suite");
  if (out_dir.empty()) throw ConfigError("missing required field: out");
  if (seeds.empty()) throw ConfigError("field seeds: at least one seed required");
  if (budget_steps < 0) throw ConfigError("field budget_steps: must be >= 0");
  if (eval_interval < 1) throw ConfigError("field eval_interval: must be >= 1");
  if (eval_trials < 1) throw ConfigError("field eval_trials: must be >= 1");
  if (sac.batch_per_task < 1) throw ConfigError("field batch_per_task: must be >= 1");
  if (sac.gamma < 0.0 || sac.gamma > 1.0) throw ConfigError("field gamma: must be in [0,1]");
  if (sac.tau <= 0.0 || sac.tau > 1.0) throw ConfigError("field tau: must be in (0,1]");
  if (suite_params.horizon < 1) throw ConfigError("field horizon: must be >= 1");
}

std::string RunConfig::serialized() const {
  std::ostringstream o;
  o << "suite=" << suite_name << '\n'
    << "mode=" << to_string(agent.mode) << '\n'
    << "out=" << out_dir << '\n'
    << "seeds=" << join_seeds(seeds) << '\n'
    << "budget_steps=" << budget_steps << '\n'
    << "eval_interval=" << eval_interval << '\n'
    << "eval_trials=" << eval_trials << '\n'
    << "log_interval=" << log_interval << '\n'
    << "ckpt_interval=" << ckpt_interval << '\n'
    << "k=" << agent.k << '\n'
    << "n=" << agent.n << '\n'
    << "stopgrad_context=" << (agent.stopgrad_context ? 1 : 0) << '\n'
    << "actor_hidden=" << format_int_list(agent.actor_hidden) << '\n'
    << "critic_hidden=" << format_int_list(agent.critic_hidden) << '\n'
    << "gate_hidden=" << format_int_list(agent.gate_hidden) << '\n'
    << "context_seed=" << agent.context_seed << '\n'
    << "context_table=" << (agent.context_table ? 1 : 0) << '\n'
    << "context_table_path=" << agent.context_table_path << '\n'
    << "care_k_enc=" << agent.care_k_enc << '\n'
    << "care_repr_dim=" << agent.care_repr_dim << '\n'
    << "care_enc_hidden=" << format_int_list(agent.care_enc_hidden) << '\n'
    << "care_gate_hidden=" << format_int_list(agent.care_gate_hidden) << '\n'
    << "expert_paths=" << join_paths(agent.expert_paths) << '\n'
    << "task_index=" << task_index << '\n'
    << "gamma=" << fmt_d(sac.gamma) << '\n'
    << "tau=" << fmt_d(sac.tau) << '\n'
    << "lr=" << fmt_d(sac.lr) << '\n'
    << "batch_per_task=" << sac.batch_per_task << '\n'
    << "replay_capacity=" << sac.replay_capacity << '\n'
    << "warmup_steps=" << sac.warmup_steps << '\n'
    << "reward_scale=" << fmt_d(sac.reward_scale) << '\n'
    << "auto_alpha=" << (sac.auto_alpha ? 1 : 0) << '\n'
    << "fixed_alpha=" << fmt_d(sac.fixed_alpha) << '\n'
    << "target_entropy=" << fmt_d(sac.target_entropy) << '\n'
    << "logstd_min=" << fmt_d(sac.logstd_min) << '\n'
    << "logstd_max=" << fmt_d(sac.logstd_max) << '\n'
    << "horizon=" << suite_params.horizon << '\n'
    << "shaping=" << fmt_d(suite_params.shaping) << '\n'
    << "sparse=" << (suite_params.sparse ? 1 : 0) << '\n'
    << "step_delta=" << fmt_d(suite_params.step_delta) << '\n'
    << "goal_radius=" << fmt_d(suite_params.goal_radius) << '\n'
    << "phase_bit=" << (suite_params.phase_bit ? 1 : 0) << '\n'
    << "phase_metadata=" << (suite_params.phase_metadata ? 1 : 0) << '\n'
    << "goal_bonus=" << fmt_d(suite_params.goal_bonus) << '\n'
    << "wrong_order_penalty=" << fmt_d(suite_params.wrong_order_penalty) << '\n'
    << "timeout_penalty=" << fmt_d(suite_params.timeout_penalty) << '\n'
    << "nav_tasks=" << suite_params.nav_tasks << '\n'
    << "identical_semantics=" << (suite_params.identical_semantics ? 1 : 0) << '\n';
  return o.str();
}

TaskSuite RunConfig::build_suite() const {
  TaskSuite suite;
  const bool builtin =
      suite_name == "tmaze_pair" || suite_name == "tmaze_composite" ||
      suite_name == "nav_k_tasks" || suite_name == "nav_k_tasks_identical";
  if (builtin) {
    suite = make_suite(suite_name, suite_params);
  } else {
    suite = TaskSuite::load(suite_name);  // file params win over config ones
  }

  if (agent.mode == Mode::kSingleTask) {
    int idx = task_index;
    if (idx < 0) {
      if (suite.num_tasks() != 1)
        throw ConfigError(
            "field task_index: required for single_task on a multi-task suite");
      idx = 0;
    }
    if (idx >= suite.num_tasks())
      throw ConfigError("field task_index: out of range for suite " +
                        suite.name);
    TaskSpec keep = suite.tasks[static_cast<std::size_t>(idx)];
    suite.tasks = {keep};  // metadata variants keep their indices
  }
  return suite;
}

std::filesystem::path RunConfig::resolved_out_dir() const {
  std::filesystem::path p(out_dir);
  if (p.is_relative()) {
    if (const char* root = std::getenv("LEXPOL_OUT_ROOT"))
      return std::filesystem::path(root) / p;
  }
  return p;
}

}  // namespace lexpol
