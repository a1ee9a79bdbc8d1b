//
// molbbo - surrogate-based black-box optimization of molecular graphs
// SPDX-License-Identifier: Apache-2.0
//

#include "molbbo/cli.h"

#include <glob.h>
#include <unistd.h>

#include <algorithm>
#include <climits>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

namespace molbbo {

using nlohmann::json;

namespace {

constexpr const char *kStateSchema = "molbbo-state";
constexpr int kStateVersion = 1;
constexpr int kReportSchemaVersion = 1;

// Typed access to one JSON object; finish() rejects fields nobody asked for.
class Fields {
public:
  Fields(const json &j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object())
      throw ConfigError(label() + " must be an object");
  }

  void integer(const char *key, int &dst) {
    long v = dst;
    integer(key, v);
    if (v < INT_MIN || v > INT_MAX)
      throw ConfigError(path(key) + " is out of range");
    dst = static_cast<int>(v);
  }

  void integer(const char *key, long &dst) {
    if (const json *v = take(key)) {
      if (!v->is_number_integer())
        throw ConfigError(path(key) + " must be an integer");
      dst = v->get<long>();
    }
  }

  void unsigned_integer(const char *key, std::uint64_t &dst) {
    if (const json *v = take(key)) {
      if (!v->is_number_unsigned() &&
          !(v->is_number_integer() && v->get<long long>() >= 0))
        throw ConfigError(path(key) + " must be a nonnegative integer");
      dst = v->get<std::uint64_t>();
    }
  }

  void number(const char *key, double &dst) {
    if (const json *v = take(key)) {
      if (!v->is_number())
        throw ConfigError(path(key) + " must be a number");
      dst = v->get<double>();
    }
  }

  void optional_number(const char *key, std::optional<double> &dst) {
    if (const json *v = take(key)) {
      if (v->is_null())
        dst.reset();
      else if (v->is_number())
        dst = v->get<double>();
      else
        throw ConfigError(path(key) + " must be a number or null");
    }
  }

  void boolean(const char *key, bool &dst) {
    if (const json *v = take(key)) {
      if (!v->is_boolean())
        throw ConfigError(path(key) + " must be true or false");
      dst = v->get<bool>();
    }
  }

  void string(const char *key, std::string &dst) {
    if (const json *v = take(key)) {
      if (!v->is_string())
        throw ConfigError(path(key) + " must be a string");
      dst = v->get<std::string>();
    }
  }

  void strings(const char *key, std::vector<std::string> &dst) {
    if (const json *v = take(key)) {
      if (!v->is_array())
        throw ConfigError(path(key) + " must be an array of strings");
      dst.clear();
      for (const json &e : *v) {
        if (!e.is_string())
          throw ConfigError(path(key) + " must be an array of strings");
        dst.push_back(e.get<std::string>());
      }
    }
  }

  const json *object(const char *key) { return take(key); }

  std::string path(const std::string &key) const {
    return where_.empty() ? key : where_ + "." + key;
  }

  void finish() const {
    for (const auto &[key, value] : j_.items())
      if (!used_.contains(key))
        throw ConfigError("unknown field '" + path(key) + "'");
  }

private:
  std::string label() const { return where_.empty() ? "config" : where_; }

  const json *take(const char *key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const json &j_;
  std::string where_;
  std::set<std::string> used_;
};

void read_hyperparameter(Fields &parent, const char *key, Hyperparameter &h) {
  const json *j = parent.object(key);
  if (!j)
    return;
  Fields f(*j, parent.path(key));
  f.number("value", h.value);
  f.number("lower", h.lower);
  f.number("upper", h.upper);
  f.finish();
}

json hyperparameter_json(const Hyperparameter &h) {
  return {{"value", h.value}, {"lower", h.lower}, {"upper", h.upper}};
}

std::string clock_name(Clock c) {
  return c == Clock::Logical ? "logical" : "process";
}

template <class F> auto rethrow_as_config(const std::string &what, F &&fn) {
  try {
    return fn();
  } catch (const ConfigError &) {
    throw;
  } catch (const std::invalid_argument &e) {
    throw ConfigError(what + ": " + e.what());
  } catch (const SmilesSyntaxError &e) {
    throw ConfigError(what + ": " + e.what());
  } catch (const ChemistryError &e) {
    throw ConfigError(what + ": " + e.what());
  }
}

std::string read_text(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json_file(const std::filesystem::path &path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error &e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

} // namespace

ExperimentConfig parse_experiment_config(const json &j) {
  ExperimentConfig c;
  BboConfig &b = c.bbo;
  Fields top(j, "");
  top.unsigned_integer("seed", b.master_seed);
  top.integer("budget", b.budget);
  top.integer("restarts", b.restarts);
  top.integer("init_pop_size", b.init_pop_size);
  top.number("xi", b.xi);
  top.integer("heavy_atom_limit", b.chemistry.heavy_atom_limit);
  std::vector<std::string> types;
  top.strings("atom_types", types);
  if (j.contains("atom_types")) {
    b.chemistry.atom_types.clear();
    for (const std::string &t : types) {
      const auto a = t.size() == 1 ? atom_from_symbol(t[0]) : std::nullopt;
      if (!a)
        throw ConfigError("atom_types: unknown atom type '" + t + "'");
      if (std::find(b.chemistry.atom_types.begin(), b.chemistry.atom_types.end(),
                    *a) != b.chemistry.atom_types.end())
        throw ConfigError("atom_types: '" + t + "' listed twice");
      b.chemistry.atom_types.push_back(*a);
    }
  }
  top.strings("seed_molecules", b.seed_molecules);
  top.integer("shingle_capacity", b.shingle_capacity);
  top.integer("parallelism", b.parallelism);
  top.optional_number("stop_at_value", b.stop_at_value);
  top.integer("max_idle_steps", b.max_idle_steps);
  std::string clock = clock_name(b.clock);
  top.string("clock", clock);
  if (clock == "logical")
    b.clock = Clock::Logical;
  else if (clock == "process")
    b.clock = Clock::Process;
  else
    throw ConfigError("clock must be \"logical\" or \"process\", got \"" +
                      clock + "\"");
  top.string("output_dir", c.output_dir);

  if (const json *ea = top.object("ea")) {
    Fields f(*ea, "ea");
    f.integer("steps", b.ea.steps);
    f.integer("insert_per_step", b.ea.insert_per_step);
    f.integer("max_population", b.ea.max_population);
    f.integer("max_perturbations", b.ea.max_perturbations);
    f.integer("max_mutation_attempts", b.ea.max_mutation_attempts);
    f.finish();
  }

  if (const json *k = top.object("kernel")) {
    Fields f(*k, "kernel");
    std::string family = to_string(b.kernel.family);
    f.string("family", family);
    b.kernel.family = rethrow_as_config(
        "kernel.family", [&] { return kernel_family_from_string(family); });
    read_hyperparameter(f, "signal_variance", b.kernel.signal_variance);
    read_hyperparameter(f, "length_scale", b.kernel.length_scale);
    read_hyperparameter(f, "offset", b.kernel.offset);
    read_hyperparameter(f, "noise_variance", b.kernel.noise_variance);
    f.boolean("noise_relative_to_target_variance",
              b.kernel.noise_relative_to_target_variance);
    f.finish();
  }

  if (const json *gp = top.object("gp")) {
    Fields f(*gp, "gp");
    f.integer("random_starts", b.gp_random_starts);
    f.integer("max_iterations", b.gp_max_iterations);
    f.finish();
  }

  if (const json *o = top.object("objective")) {
    Fields f(*o, "objective");
    std::string kind = to_string(c.objective.kind);
    f.string("kind", kind);
    c.objective.kind = rethrow_as_config(
        "objective.kind", [&] { return objective_kind_from_string(kind); });
    f.unsigned_integer("seed", c.objective.seed);
    f.number("noise_std", c.objective.noise_std);
    f.number("range_lo", c.objective.range_lo);
    f.number("range_hi", c.objective.range_hi);
    f.string("command", c.objective.command);
    f.number("timeout_s", c.objective.timeout_s);
    f.integer("pool_size", c.objective.pool_size);
    f.finish();
  }
  top.finish();

  c.bbo.ea.chemistry = c.bbo.chemistry;
  c.objective.heavy_atom_limit = c.bbo.chemistry.heavy_atom_limit;
  rethrow_as_config("invalid config", [&] {
    c.bbo.validate();
    c.objective.validate();
    return 0;
  });
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path &path) {
  const json j = parse_json_file(path);
  try {
    return parse_experiment_config(j);
  } catch (const ConfigError &e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

json result_config(const ExperimentConfig &c) {
  const BboConfig &b = c.bbo;
  json types = json::array();
  for (AtomType t : b.chemistry.atom_types)
    types.push_back(std::string(1, atom_symbol(t)));
  const KernelSpec &k = b.kernel;
  return {
      {"seed", b.master_seed},
      {"budget", b.budget},
      {"restarts", b.restarts},
      {"init_pop_size", b.init_pop_size},
      {"xi", b.xi},
      {"heavy_atom_limit", b.chemistry.heavy_atom_limit},
      {"atom_types", types},
      {"seed_molecules", b.seed_molecules},
      {"shingle_capacity", b.shingle_capacity},
      {"stop_at_value",
       b.stop_at_value ? json(*b.stop_at_value) : json(nullptr)},
      {"max_idle_steps", b.max_idle_steps},
      {"clock", clock_name(b.clock)},
      {"ea",
       {{"steps", b.ea.steps},
        {"insert_per_step", b.ea.insert_per_step},
        {"max_population", b.ea.max_population},
        {"max_perturbations", b.ea.max_perturbations},
        {"max_mutation_attempts", b.ea.max_mutation_attempts}}},
      {"kernel",
       {{"family", to_string(k.family)},
        {"signal_variance", hyperparameter_json(k.signal_variance)},
        {"length_scale", hyperparameter_json(k.length_scale)},
        {"offset", hyperparameter_json(k.offset)},
        {"noise_variance", hyperparameter_json(k.noise_variance)},
        {"noise_relative_to_target_variance",
         k.noise_relative_to_target_variance}}},
      {"gp",
       {{"random_starts", b.gp_random_starts},
        {"max_iterations", b.gp_max_iterations}}},
      {"objective",
       {{"kind", to_string(c.objective.kind)},
        {"seed", c.objective.seed},
        {"noise_std", c.objective.noise_std},
        {"range_lo", c.objective.range_lo},
        {"range_hi", c.objective.range_hi},
        {"command", c.objective.command},
        {"timeout_s", c.objective.timeout_s},
        {"pool_size", c.objective.pool_size}}},
  };
}

json to_json(const ExperimentConfig &c) {
  json j = result_config(c);
  j["parallelism"] = c.bbo.parallelism;
  j["output_dir"] = c.output_dir;
  return j;
}

std::vector<LabeledMolecule> read_dataset(std::istream &in, std::ostream &err) {
  std::vector<LabeledMolecule> data;
  std::string line;
  long lineno = 0, considered = 0, bad = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty() || line.front() == '#')
      continue;
    ++considered;
    const auto comma = line.rfind(',');
    std::string problem;
    if (comma == std::string::npos) {
      problem = "expected <smiles>,<value>";
    } else {
      const std::string smiles = line.substr(0, comma);
      const std::string value = line.substr(comma + 1);
      char *end = nullptr;
      const double v = std::strtod(value.c_str(), &end);
      if (value.empty() || end != value.c_str() + value.size() ||
          !std::isfinite(v)) {
        problem = "bad value '" + value + "'";
      } else {
        try {
          parse_smiles(smiles);
          data.push_back({smiles, v});
        } catch (const std::exception &e) {
          problem = std::string("bad SMILES: ") + e.what();
        }
      }
    }
    if (!problem.empty()) {
      ++bad;
      err << "line " << lineno << ": " << problem << '\n';
    }
  }
  if (considered == 0)
    throw ConfigError("dataset is empty");
  if (bad * 100 > considered)
    throw ConfigError(std::to_string(bad) + " of " +
                      std::to_string(considered) +
                      " dataset lines are unusable (more than 1%)");
  return data;
}

void write_file_atomic(const std::filesystem::path &path,
                       const std::string &content) {
  namespace fs = std::filesystem;
  const std::string name =
      path.filename().string() + ".tmp." + std::to_string(::getpid());
  const char *dir = std::getenv("MOLBBO_TMPDIR");
  const fs::path tmp =
      (dir && *dir ? fs::path(dir) : path.parent_path()) / name;
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out)
      throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out)
      throw std::runtime_error("cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    // Different file systems: stage next to the target first.
    const fs::path near = path.parent_path() / name;
    fs::copy_file(tmp, near, fs::copy_options::overwrite_existing);
    fs::remove(tmp);
    fs::rename(near, path);
  }
}

namespace {

struct RunOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<long> budget;
  bool sequential = false;
  std::optional<int> parallel;
  bool resume = false;
};

ExperimentConfig effective_config(const RunOptions &o) {
  json j = parse_json_file(o.config);
  if (!j.is_object())
    throw ConfigError(o.config + ": config must be a JSON object");
  if (o.seed)
    j["seed"] = *o.seed;
  if (o.budget)
    j["budget"] = *o.budget;
  if (o.parallel)
    j["parallelism"] = *o.parallel;
  if (o.sequential)
    j["parallelism"] = 1;
  ExperimentConfig cfg;
  try {
    cfg = parse_experiment_config(j);
  } catch (const ConfigError &e) {
    throw ConfigError(o.config + ": " + e.what());
  }
  if (!o.out.empty())
    cfg.output_dir = o.out;
  if (cfg.output_dir.empty())
    throw ConfigError("no output directory: pass --out or set output_dir");
  return cfg;
}

void prepare_out_dir(const std::filesystem::path &dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw ConfigError("cannot create output directory " + dir.string());
}

json summary_json(const std::string &method, const ExperimentConfig &cfg,
                  std::optional<double> best, const std::string &best_smiles,
                  long calls, StopReason reason, bool complete) {
  return {{"schema_version", kReportSchemaVersion},
          {"method", method},
          {"objective", cfg.objective.describe()},
          {"seed", cfg.bbo.master_seed},
          {"budget", cfg.bbo.budget},
          {"calls", calls},
          {"best_value", best ? json(*best) : json(nullptr)},
          {"best_smiles", best ? json(best_smiles) : json(nullptr)},
          {"stop_reason", to_string(reason)},
          {"complete", complete}};
}

RunLogHeader header_for(const std::string &method, const ExperimentConfig &cfg) {
  RunLogHeader h;
  h.method = method;
  h.objective = cfg.objective.describe();
  h.budget = cfg.bbo.budget;
  h.seed = cfg.bbo.master_seed;
  h.config = result_config(cfg);
  return h;
}

std::shared_ptr<Objective> build_objective(const ExperimentConfig &cfg) {
  return std::shared_ptr<Objective>(make_objective(cfg.objective));
}

json step_json(const StepReport &r, long calls) {
  const KernelSpec &k = r.fitted_kernel;
  json kernel = {{"family", to_string(k.family)},
                 {"signal_variance", k.signal_variance.value},
                 {"noise_variance", k.noise_variance.value}};
  if (k.family == KernelFamily::Rbf)
    kernel["length_scale"] = k.length_scale.value;
  else
    kernel["offset"] = k.offset.value;
  return {{"step", r.step},
          {"added", r.added.size()},
          {"failed", r.failed_evaluations},
          {"calls", calls},
          {"surrogateCalls", r.surrogate_calls},
          {"unseenShingles", r.unseen_shingles},
          {"restartsWithoutCandidate", r.restarts_without_candidate},
          {"kernel", kernel},
          {"lml", r.lml}};
}

// Keeps the lines of an existing step log that precede `next_step`.
std::string surviving_steps(const std::filesystem::path &path, int next_step) {
  std::ifstream in(path);
  std::string kept;
  for (std::string line; std::getline(in, line);) {
    const json j = json::parse(line, nullptr, false);
    if (j.is_object() && j.value("step", next_step) < next_step)
      kept += line + "\n";
  }
  return kept;
}

int cmd_run_bbo(const RunOptions &o, std::ostream &out, std::ostream &err) {
  namespace fs = std::filesystem;
  const ExperimentConfig cfg = effective_config(o);
  const fs::path dir = cfg.output_dir;
  const fs::path log_path = dir / "runlog.jsonl";
  const fs::path state_path = dir / "state.json";
  prepare_out_dir(dir);

  BboRun run(cfg.bbo, build_objective(cfg));
  std::optional<RunLogWriter> writer;
  if (o.resume) {
    if (!fs::exists(state_path) || !fs::exists(log_path))
      throw ConfigError("--resume needs state.json and runlog.jsonl in " +
                        dir.string());
    const json state = parse_json_file(state_path);
    if (!state.is_object() || state.value("schema", "") != kStateSchema ||
        state.value("version", 0) != kStateVersion)
      throw ConfigError(state_path.string() + ": unknown state format");
    if (state.at("config") != result_config(cfg))
      throw ConfigError("--resume: config differs from the checkpointed run");
    rethrow_as_config("state.json",
                      [&] { run.restore_state(state.at("run")); return 0; });
    writer.emplace(RunLogWriter::append_to(log_path, run.calls()));
  } else {
    writer.emplace(log_path, header_for("bbo", cfg));
  }
  run.set_record_sink([&](const CallRecord &r) { writer->write(r); });

  const fs::path steps_path = dir / "steps.jsonl";
  write_file_atomic(steps_path, o.resume ? surviving_steps(steps_path,
                                                           run.next_step())
                                         : std::string());
  std::ofstream steps(steps_path, std::ios::app);

  auto checkpoint = [&] {
    json state = {{"schema", kStateSchema},
                  {"version", kStateVersion},
                  {"config", result_config(cfg)},
                  {"run", run.save_state()}};
    write_file_atomic(state_path, state.dump(1) + "\n");
  };

  int status = kExitOk;
  try {
    if (!run.initialized()) {
      run.initialize();
      checkpoint();
    }
    while (!run.finished()) {
      const StepReport report = run.step();
      steps << step_json(report, run.calls()).dump() << '\n' << std::flush;
      checkpoint();
    }
  } catch (const ObjectiveError &e) {
    err << "objective failure: " << e.what() << '\n';
    status = kExitObjectiveFailure;
  }
  const bool complete = status == kExitOk &&
                        run.stop_reason() != StopReason::ObjectiveUnavailable;
  if (status == kExitOk && !complete) {
    err << "objective unavailable; run stopped after " << run.calls()
        << " calls\n";
    status = kExitObjectiveFailure;
  }
  writer->finish(complete, run.calls());
  const EvaluatedMolecule *best = run.best();
  const json summary =
      summary_json("bbo", cfg, run.best_value(), best ? best->smiles : "",
                   run.calls(), run.stop_reason(), complete);
  write_file_atomic(dir / "summary.json", summary.dump(1) + "\n");
  out << "bbo: " << run.calls() << " calls, best "
      << (best ? format_number(best->value) + " " + best->smiles : "none")
      << " (" << to_string(run.stop_reason()) << ")\n";
  return status;
}

int cmd_run_ea(const RunOptions &o, std::ostream &out, std::ostream &err) {
  const ExperimentConfig cfg = effective_config(o);
  const std::filesystem::path dir = cfg.output_dir;
  prepare_out_dir(dir);
  RunLogWriter writer(dir / "runlog.jsonl", header_for("ea", cfg));
  EaBaselineRun run(cfg.bbo, build_objective(cfg));
  run.set_record_sink([&](const CallRecord &r) { writer.write(r); });
  const StopReason reason = run.run();
  const bool complete = reason != StopReason::ObjectiveUnavailable;
  writer.finish(complete, run.calls());
  write_file_atomic(dir / "summary.json",
                    summary_json("ea", cfg, run.best_value(), run.best_smiles(),
                                 run.calls(), reason, complete)
                            .dump(1) +
                        "\n");
  out << "ea: " << run.calls() << " calls, best "
      << (run.best_value()
              ? format_number(*run.best_value()) + " " + run.best_smiles()
              : "none")
      << " (" << to_string(reason) << ")\n";
  if (!complete) {
    err << "objective unavailable; run stopped after " << run.calls()
        << " calls\n";
    return kExitObjectiveFailure;
  }
  return kExitOk;
}

std::vector<std::string> expand_globs(const std::vector<std::string> &patterns) {
  std::set<std::string> found;
  for (const std::string &p : patterns) {
    glob_t g{};
    if (::glob(p.c_str(), 0, nullptr, &g) == 0)
      for (std::size_t i = 0; i < g.gl_pathc; ++i)
        found.insert(g.gl_pathv[i]);
    ::globfree(&g);
  }
  return {found.begin(), found.end()};
}

std::vector<double> parse_number_list(const std::string &text,
                                      const std::string &what) {
  std::vector<double> values;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    char *end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (item.empty() || end != item.c_str() + item.size() || !std::isfinite(v))
      throw ConfigError(what + ": bad number '" + item + "'");
    values.push_back(v);
  }
  return values;
}

void write_curve(const std::filesystem::path &path,
                 const std::vector<CurvePoint> &curve) {
  std::ostringstream os;
  os << "x,proportion\n" << std::setprecision(12);
  for (const CurvePoint &p : curve)
    os << p.x << ',' << p.proportion << '\n';
  write_file_atomic(path, os.str());
}

struct ReportOptions {
  std::vector<std::string> logs;
  std::string grid = "-10:-1:0.01";
  std::string targets;
  std::string out;
  bool allow_mixed = false;
};

int cmd_report(const ReportOptions &o, std::ostream &out, std::ostream &err) {
  const std::vector<std::string> paths = expand_globs(o.logs);
  if (paths.empty())
    throw ConfigError("no run logs match the given pattern(s)");
  const TargetGrid grid =
      rethrow_as_config("--grid", [&] { return TargetGrid::parse(o.grid); });
  const std::vector<double> targets =
      o.targets.empty() ? std::vector<double>{}
                        : parse_number_list(o.targets, "--targets");

  std::map<std::string, std::vector<RunLog>> by_method;
  std::vector<RunLog> all;
  for (const std::string &p : paths) {
    RunLog log;
    try {
      log = read_runlog(p);
      check_runlog(log);
    } catch (const RunLogFormatError &e) {
      throw ConfigError(p + ": " + e.what());
    }
    if (!log.complete)
      err << "warning: " << p << " is incomplete\n";
    by_method[log.header.method].push_back(log);
    all.push_back(std::move(log));
  }
  if (!o.allow_mixed)
    for (const RunLog &l : all)
      if (l.header.objective != all.front().header.objective)
        throw ConfigError("run logs mix objectives '" +
                          all.front().header.objective + "' and '" +
                          l.header.objective +
                          "'; pass --allow-mixed-objectives to aggregate anyway");

  const std::filesystem::path dir = o.out;
  prepare_out_dir(dir);
  const bool single = by_method.size() == 1;
  for (const auto &[method, logs] : by_method) {
    const std::string suffix = single ? "" : "__" + method;
    write_curve(dir / ("ecdf_calls" + suffix + ".csv"),
                ecdf(logs, grid, EffortAxis::Calls, o.allow_mixed));
    write_curve(dir / ("ecdf_cpu" + suffix + ".csv"),
                ecdf(logs, grid, EffortAxis::CpuTime, o.allow_mixed));
  }

  std::ostringstream ert_csv;
  ert_csv << "method,target,ert,successes,runs,min,median,max\n"
          << std::setprecision(12);
  for (const auto &[method, logs] : by_method) {
    for (double t : targets) {
      const ErtResult r = ert(logs, t, EffortAxis::Calls, o.allow_mixed);
      ert_csv << method << ',' << t << ',';
      if (r.ert)
        ert_csv << *r.ert;
      else
        ert_csv << "no_success";
      ert_csv << ',' << r.successes << ',' << r.runs << ',';
      const auto &e = r.success_efforts;
      if (e.empty()) {
        ert_csv << ",,\n";
      } else {
        const std::size_t n = e.size();
        const double median =
            n % 2 ? e[n / 2] : 0.5 * (e[n / 2 - 1] + e[n / 2]);
        ert_csv << e.front() << ',' << median << ',' << e.back() << '\n';
      }
    }
  }
  write_file_atomic(dir / "ert.csv", ert_csv.str());
  out << "report: " << all.size() << " run log(s), " << by_method.size()
      << " method(s), " << targets.size() << " ERT target(s)\n";
  return kExitOk;
}

struct SurrogateEvalOptions {
  std::string dataset;
  std::string sizes = "50,100,500,1000";
  int folds = 10;
  std::string kernel = "dot_product";
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_surrogate_eval(const SurrogateEvalOptions &o, std::ostream &out,
                       std::ostream &err) {
  std::ifstream in(o.dataset);
  if (!in)
    throw ConfigError("cannot read dataset " + o.dataset);
  const std::vector<LabeledMolecule> data = read_dataset(in, err);
  std::vector<int> sizes;
  for (double s : parse_number_list(o.sizes, "--sizes")) {
    if (s != std::floor(s) || s < 1 || s > INT_MAX)
      throw ConfigError("--sizes: sizes must be positive integers");
    sizes.push_back(static_cast<int>(s));
  }
  KernelSpec spec;
  spec.family = rethrow_as_config(
      "--kernel", [&] { return kernel_family_from_string(o.kernel); });
  const std::vector<LearningCurveRow> rows = rethrow_as_config(
      "learning curve",
      [&] { return learning_curve(data, sizes, o.folds, spec, o.seed); });

  std::ostringstream csv;
  csv << "# folds=" << o.folds << " kernel=" << to_string(spec.family)
      << " seed=" << o.seed << " molecules=" << data.size()
      << " schema_version=" << kReportSchemaVersion << '\n'
      << "size,mae_mean,mae_std\n"
      << std::setprecision(12);
  for (const LearningCurveRow &r : rows)
    csv << r.size << ',' << r.mae_mean << ',' << r.mae_std << '\n';
  prepare_out_dir(o.out);
  write_file_atomic(std::filesystem::path(o.out) / "learning_curve.csv",
                    csv.str());
  for (const LearningCurveRow &r : rows)
    out << "size " << r.size << ": MAE " << format_number(r.mae_mean)
        << " +- " << format_number(r.mae_std) << '\n';
  return kExitOk;
}

struct GenerateOptions {
  int count = 2000;
  std::uint64_t seed = 0;
  int max_walk = 20;
  int heavy_atom_limit = kDefaultHeavyAtomLimit;
  std::string objective = "synthetic_linear_shingles";
  std::uint64_t objective_seed = 0;
  bool smiles_only = false;
  bool allow_repeats = false;
  std::string out;
};

int cmd_generate(const GenerateOptions &o, std::ostream &out) {
  SamplerConfig sc;
  sc.max_walk_length = o.max_walk;
  sc.chemistry.heavy_atom_limit = o.heavy_atom_limit;
  sc.distinct = !o.allow_repeats;
  ObjectiveSpec os;
  os.kind = rethrow_as_config(
      "--objective", [&] { return objective_kind_from_string(o.objective); });
  os.seed = o.objective_seed;
  os.heavy_atom_limit = o.heavy_atom_limit;
  if (!o.smiles_only && os.kind == ObjectiveKind::ExternalProcess)
    throw ConfigError("--objective: only synthetic objectives can label data");
  const auto mols = rethrow_as_config(
      "generate", [&] { return sample_random_molecules(o.count, sc, o.seed); });
  std::unique_ptr<Objective> f;
  if (!o.smiles_only)
    f = rethrow_as_config("--objective", [&] { return make_objective(os); });

  std::ostringstream text;
  text << std::setprecision(17);
  for (const MolecularGraph &g : mols) {
    const CanonicalKey key = canonical_key(g);
    text << key.text;
    if (f)
      text << ',' << f->evaluate(g, key);
    text << '\n';
  }
  if (o.out.empty() || o.out == "-") {
    out << text.str();
  } else {
    write_file_atomic(o.out, text.str());
  }
  return kExitOk;
}

void add_run_options(CLI::App *cmd, RunOptions &o, bool with_resume) {
  cmd->add_option("--config", o.config, "Experiment config (JSON)")
      ->required();
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--seed", o.seed, "Master seed (overrides the config)");
  cmd->add_option("--budget", o.budget,
                  "Objective call budget (overrides the config)");
  cmd->add_flag("--sequential", o.sequential,
                "Evaluate restarts and candidates one at a time");
  cmd->add_option("--parallel", o.parallel, "Worker threads")
      ->check(CLI::PositiveNumber);
  if (with_resume)
    cmd->add_flag("--resume", o.resume,
                  "Continue from state.json in the output directory");
}

} // namespace

int run_cli(int argc, const char *const *argv, std::ostream &out,
            std::ostream &err) {
  CLI::App app{"Surrogate-based black-box optimization of small molecules"};
  app.require_subcommand(1);

  RunOptions bbo_opts, ea_opts;
  auto *bbo = app.add_subcommand("run-bbo", "Run the surrogate-based optimizer");
  add_run_options(bbo, bbo_opts, true);
  auto *ea = app.add_subcommand(
      "run-ea", "Run the evolutionary baseline on the exact objective");
  add_run_options(ea, ea_opts, false);

  ReportOptions rep;
  auto *report = app.add_subcommand("report", "ECDF and ERT tables from run logs");
  report->add_option("--logs", rep.logs, "Run log files or glob patterns")
      ->required();
  report->add_option("--grid", rep.grid, "Targets as lo:hi:step")
      ->capture_default_str();
  report->add_option("--targets", rep.targets,
                     "Comma-separated ERT targets");
  report->add_option("--out", rep.out, "Output directory")->required();
  report->add_flag("--allow-mixed-objectives", rep.allow_mixed,
                   "Aggregate logs of different objectives");

  SurrogateEvalOptions se;
  auto *surrogate = app.add_subcommand(
      "surrogate-eval", "Cross-validated learning curve of the surrogate");
  surrogate->add_option("--dataset", se.dataset, "Lines of <smiles>,<value>")
      ->required();
  surrogate->add_option("--sizes", se.sizes, "Comma-separated training sizes")
      ->capture_default_str();
  surrogate->add_option("--folds", se.folds)->capture_default_str();
  surrogate->add_option("--kernel", se.kernel, "dot_product or rbf")
      ->capture_default_str();
  surrogate->add_option("--seed", se.seed)->capture_default_str();
  surrogate->add_option("--out", se.out, "Output directory")->required();

  GenerateOptions gen;
  auto *generate = app.add_subcommand(
      "generate-molecules", "Sample random valid molecules by mutation walks");
  generate->add_option("--count", gen.count)->capture_default_str();
  generate->add_option("--seed", gen.seed)->capture_default_str();
  generate->add_option("--max-walk", gen.max_walk, "Longest mutation walk")
      ->capture_default_str();
  generate->add_option("--heavy-atom-limit", gen.heavy_atom_limit)
      ->capture_default_str();
  generate->add_option("--objective", gen.objective,
                       "Synthetic objective used to label molecules")
      ->capture_default_str();
  generate->add_option("--objective-seed", gen.objective_seed)
      ->capture_default_str();
  generate->add_flag("--smiles-only", gen.smiles_only, "Omit the value column");
  generate->add_flag("--allow-repeats", gen.allow_repeats,
                     "Keep isomorphic repeats");
  generate->add_option("--out", gen.out, "Output file ('-' for stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInvalidInput;
  }

  try {
    if (bbo->parsed())
      return cmd_run_bbo(bbo_opts, out, err);
    if (ea->parsed())
      return cmd_run_ea(ea_opts, out, err);
    if (report->parsed())
      return cmd_report(rep, out, err);
    if (surrogate->parsed())
      return cmd_surrogate_eval(se, out, err);
    if (generate->parsed())
      return cmd_generate(gen, out);
  } catch (const ConfigError &e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalidInput;
  } catch (const ObjectiveError &e) {
    err << "objective failure: " << e.what() << '\n';
    return kExitObjectiveFailure;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

} // namespace molbbo
