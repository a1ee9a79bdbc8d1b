//
// molbbo - surrogate-based black-box optimization of molecular graphs
// SPDX-License-Identifier: Apache-2.0
//

#include "molbbo/bbo.h"

#include <sys/resource.h>

#include <algorithm>
#include <climits>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "molbbo/random.h"

namespace molbbo {

namespace {

// Stream purposes for derive_seed(master, {step, restart, purpose}).
enum Purpose : std::uint64_t {
  kGpFit = 1,
  kInitialPopulation = 2,
  kEa = 3,
  kBaseline = 4,
};

bool reached(double best, double target) {
  return best + 1e-9 * std::max(1.0, std::abs(target)) >= target;
}

} // namespace

double process_cpu_seconds() {
  double total = 0.0;
  for (int who : {RUSAGE_SELF, RUSAGE_CHILDREN}) {
    rusage ru{};
    if (getrusage(who, &ru) == 0)
      total += static_cast<double>(ru.ru_utime.tv_sec + ru.ru_stime.tv_sec) +
               1e-6 * static_cast<double>(ru.ru_utime.tv_usec +
                                          ru.ru_stime.tv_usec);
  }
  return total;
}

std::string to_string(StopReason r) {
  switch (r) {
  case StopReason::None:
    return "none";
  case StopReason::Budget:
    return "budget";
  case StopReason::Target:
    return "target";
  case StopReason::Stalled:
    return "stalled";
  case StopReason::ObjectiveUnavailable:
    return "objective_unavailable";
  }
  return "?";
}

void BboConfig::validate() const {
  if (restarts < 1)
    throw std::invalid_argument("restarts must be >= 1");
  if (init_pop_size < 1)
    throw std::invalid_argument("init_pop_size must be >= 1");
  if (budget < 1)
    throw std::invalid_argument("budget must be >= 1");
  if (!(xi >= 0.0))
    throw std::invalid_argument("xi must be >= 0");
  if (gp_random_starts < 0)
    throw std::invalid_argument("gp_random_starts must be >= 0");
  if (gp_max_iterations < 1)
    throw std::invalid_argument("gp_max_iterations must be >= 1");
  if (shingle_capacity < 1)
    throw std::invalid_argument("shingle_capacity must be >= 1");
  if (seed_molecules.empty())
    throw std::invalid_argument("at least one seed molecule is required");
  if (parallelism < 1)
    throw std::invalid_argument("parallelism must be >= 1");
  if (max_idle_steps < 1)
    throw std::invalid_argument("max_idle_steps must be >= 1");
  if (chemistry.heavy_atom_limit < 1)
    throw std::invalid_argument("heavy_atom_limit must be >= 1");
  ea.validate();
  kernel.validate();
  for (const std::string &s : seed_molecules) {
    try {
      parse_smiles(s, chemistry);
    } catch (const std::exception &e) {
      throw std::invalid_argument("seed molecule '" + s + "': " + e.what());
    }
  }
}

std::vector<MolecularGraph>
select_initial_population(const std::vector<EvaluatedMolecule> &dataset,
                          int size, std::mt19937_64 &rng) {
  if (dataset.empty())
    throw std::invalid_argument("select_initial_population: empty dataset");
  const std::size_t m = dataset.size();
  const std::size_t k = std::min<std::size_t>(std::max(size, 0), m);

  // Rank 1 is the worst value; ties keep dataset order.
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dataset[a].value < dataset[b].value;
  });
  std::vector<double> weight(m);
  for (std::size_t r = 0; r < m; ++r)
    weight[order[r]] = static_cast<double>(r + 1);

  std::vector<MolecularGraph> picked;
  picked.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::discrete_distribution<std::size_t> draw(weight.begin(), weight.end());
    const std::size_t j = draw(rng);
    picked.push_back(dataset[j].graph);
    weight[j] = 0.0;
  }
  return picked;
}

Surrogate shingle_surrogate(const GpModel &model, const ShingleDictionary &dict,
                            double scale, std::atomic<long> *unseen) {
  return [&model, &dict, scale, unseen](const MolecularGraph &g) {
    const Encoding enc = encode_frozen(g, dict);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(model.input_dim());
    long dropped = enc.unseen;
    for (const auto &[col, cnt] : enc.vector.entries) {
      if (col < model.input_dim())
        x[col] = cnt * scale;
      else
        dropped += cnt;
    }
    if (unseen && dropped)
      unseen->fetch_add(dropped, std::memory_order_relaxed);
    return model.predict(x);
  };
}

FitnessFn make_ei_fitness(Surrogate surrogate, const TabuSet &known,
                          double f_max, double xi,
                          std::atomic<long> *surrogate_calls) {
  if (xi < 0)
    throw std::invalid_argument("xi must be >= 0");
  return [surrogate = std::move(surrogate), &known, f_max, xi,
          surrogate_calls](const MolecularGraph &g, const CanonicalKey &key) {
    if (known.contains(key))
      return 0.0;
    if (surrogate_calls)
      surrogate_calls->fetch_add(1, std::memory_order_relaxed);
    return expected_improvement(surrogate(g), f_max, xi);
  };
}

BboRun::BboRun(BboConfig cfg, std::shared_ptr<Objective> objective)
    : cfg_(std::move(cfg)), objective_(std::move(objective)),
      dict_(cfg_.shingle_capacity) {
  cfg_.validate();
  if (!objective_)
    throw std::invalid_argument("BboRun: no objective");
  cpu_start_ = process_cpu_seconds();
  wall_start_ = std::chrono::steady_clock::now();
}

template <class F> void BboRun::for_each_index(int count, F &&fn) const {
  const int workers = std::min(cfg_.parallelism, count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i)
      fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i; (i = next.fetch_add(1)) < count;) {
        try {
          fn(i);
        } catch (...) {
          errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
      }
    });
  for (auto &t : pool)
    t.join();
  for (auto &e : errors)
    if (e)
      std::rethrow_exception(e);
}

void BboRun::stamp(CallRecord &r) const {
  if (cfg_.clock == Clock::Logical) {
    r.cpu_time_s = static_cast<double>(r.call_index);
    r.wall_time_s = static_cast<double>(r.call_index);
    return;
  }
  r.cpu_time_s = cpu_offset_ + process_cpu_seconds() - cpu_start_;
  r.wall_time_s =
      wall_offset_ + std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - wall_start_)
                         .count();
}

BboRun::Outcome BboRun::evaluate_exact(const MolecularGraph &g,
                                       const CanonicalKey &key) {
  Outcome out;
  try {
    const double v = objective_->evaluate(g, key);
    if (std::isfinite(v))
      out.value = v;
    else
      out.error = "objective returned a non-finite value";
  } catch (const ObjectiveUnavailable &e) {
    out.unavailable = true;
    out.error = e.what();
  } catch (const ObjectiveError &e) {
    out.error = e.what();
  }
  return out;
}

const EvaluatedMolecule *BboRun::append(CanonicalKey key, const Outcome &out,
                                        int step, int restart) {
  attempted_.insert(key);
  ++calls_;
  CallRecord rec;
  rec.call_index = calls_;
  rec.step = step;
  rec.restart = restart;
  rec.smiles = key.text;
  rec.value = out.value;
  rec.error = out.error;
  const EvaluatedMolecule *added = nullptr;
  if (out.value) {
    best_ = best_ ? std::max(*best_, *out.value) : *out.value;
    // Stored in canonical atom order so a restored state is identical.
    MolecularGraph canon = parse_smiles(key.text, cfg_.chemistry);
    ShingleVector desc = encode(canon, dict_, false).vector;
    desc.dimension = dict_.capacity();
    dataset_.push_back({std::move(canon), key, key.text, std::move(desc),
                        *out.value, step, restart, calls_, 0.0, 0.0});
    added = &dataset_.back();
  } else {
    failed_smiles_.push_back(key.text);
  }
  rec.best_so_far = best_;
  stamp(rec);
  if (added) {
    dataset_.back().cpu_time_s = rec.cpu_time_s;
    dataset_.back().wall_time_s = rec.wall_time_s;
  }
  if (sink_)
    sink_(rec);
  return added;
}

void BboRun::update_stop_reason() {
  if (stop_reason_ != StopReason::None)
    return;
  if (cfg_.stop_at_value && best_ && reached(*best_, *cfg_.stop_at_value))
    stop_reason_ = StopReason::Target;
  else if (calls_ >= cfg_.budget)
    stop_reason_ = StopReason::Budget;
  else if (idle_steps_ >= cfg_.max_idle_steps)
    stop_reason_ = StopReason::Stalled;
}

bool BboRun::finished() const { return stop_reason_ != StopReason::None; }

std::optional<double> BboRun::best_value() const { return best_; }

const EvaluatedMolecule *BboRun::best() const {
  const EvaluatedMolecule *b = nullptr;
  for (const auto &m : dataset_)
    if (!b || m.value > b->value)
      b = &m;
  return b;
}

void BboRun::initialize() {
  if (initialized_)
    return;
  initialized_ = true;
  std::vector<std::pair<MolecularGraph, CanonicalKey>> seeds;
  for (const std::string &s : cfg_.seed_molecules) {
    MolecularGraph g = parse_smiles(s, cfg_.chemistry);
    CanonicalKey key = canonical_key(g);
    if (attempted_.contains(key))
      continue;
    attempted_.insert(key);
    seeds.emplace_back(std::move(g), std::move(key));
  }
  attempted_.clear();
  if (static_cast<long>(seeds.size()) > cfg_.budget)
    seeds.erase(seeds.begin() + cfg_.budget, seeds.end());

  std::vector<Outcome> outcomes(seeds.size());
  for_each_index(static_cast<int>(seeds.size()), [&](int i) {
    outcomes[i] = evaluate_exact(seeds[i].first, seeds[i].second);
  });
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (outcomes[i].unavailable) {
      stop_reason_ = StopReason::ObjectiveUnavailable;
      return;
    }
    append(seeds[i].second, outcomes[i], 0, 0);
  }
  update_stop_reason();
  if (!finished() && dataset_.empty())
    throw ObjectiveError("every seed molecule failed to evaluate");
}

StepReport BboRun::step() {
  if (!initialized_)
    initialize();
  StepReport report;
  report.step = next_step_;
  if (finished())
    return report;
  if (dataset_.empty())
    throw std::logic_error("BBO step on an empty dataset");

  const int step = next_step_++;
  const auto step_u = static_cast<std::uint64_t>(step);

  // Surrogate on all of D.
  const int dim = dict_.size();
  const double scale = feature_scale(cfg_.kernel.family, dict_.capacity());
  Eigen::MatrixXd X =
      Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dataset_.size()), dim);
  std::vector<double> y;
  y.reserve(dataset_.size());
  for (std::size_t r = 0; r < dataset_.size(); ++r) {
    for (const auto &[col, cnt] : dataset_[r].descriptor.entries)
      X(static_cast<Eigen::Index>(r), col) = cnt * scale;
    y.push_back(dataset_[r].value);
  }
  FitOptions fo;
  fo.random_starts = cfg_.gp_random_starts;
  fo.max_iterations = cfg_.gp_max_iterations;
  fo.seed = derive_seed(cfg_.master_seed, {step_u, 0, kGpFit});
  const GpModel model = GpModel::fit(X, y, cfg_.kernel, fo);
  report.fitted_kernel = model.spec();
  report.lml = model.report().final_lml;

  std::atomic<long> surrogate_calls{0};
  std::atomic<long> unseen{0};
  const FitnessFn fitness =
      make_ei_fitness(shingle_surrogate(model, dict_, scale, &unseen),
                      attempted_, *best_, cfg_.xi, &surrogate_calls);

  // Restarts only read shared state; the picks are made afterwards in
  // restart order, so the outcome does not depend on scheduling.
  const int n = cfg_.restarts;
  std::vector<std::vector<Scored>> traces(static_cast<std::size_t>(n));
  for_each_index(n, [&](int r) {
    const auto r_u = static_cast<std::uint64_t>(r);
    std::mt19937_64 rng(
        derive_seed(cfg_.master_seed, {step_u, r_u, kInitialPopulation}));
    const std::vector<MolecularGraph> initial =
        select_initial_population(dataset_, cfg_.init_pop_size, rng);
    EaConfig ea = cfg_.ea;
    ea.chemistry = cfg_.chemistry;
    ea.tabu = attempted_;
    ea.seed = derive_seed(cfg_.master_seed, {step_u, r_u, kEa});
    traces[static_cast<std::size_t>(r)] =
        ea_maximize(fitness, initial, ea).trace;
  });

  struct Pick {
    int restart;
    const Scored *candidate;
  };
  std::vector<Pick> picks;
  TabuSet chosen;
  for (int r = 0; r < n; ++r) {
    const Scored *best = nullptr;
    for (const Scored &s : traces[static_cast<std::size_t>(r)]) {
      if (attempted_.contains(s.key) || chosen.contains(s.key))
        continue;
      // Strictly greater keeps the earliest discovery among ties.
      if (!best || s.fitness > best->fitness)
        best = &s;
    }
    if (!best) {
      ++report.restarts_without_candidate;
      continue;
    }
    chosen.insert(best->key);
    picks.push_back({r, best});
  }
  const long remaining = cfg_.budget - calls_;
  if (static_cast<long>(picks.size()) > remaining)
    picks.resize(static_cast<std::size_t>(remaining));

  std::vector<Outcome> outcomes(picks.size());
  for_each_index(static_cast<int>(picks.size()), [&](int i) {
    outcomes[i] = evaluate_exact(picks[i].candidate->graph,
                                 picks[i].candidate->key);
  });

  // Step barrier: D grows in restart order.
  for (std::size_t i = 0; i < picks.size(); ++i) {
    if (outcomes[i].unavailable) {
      stop_reason_ = StopReason::ObjectiveUnavailable;
      break;
    }
    const Scored &c = *picks[i].candidate;
    if (const EvaluatedMolecule *m =
            append(c.key, outcomes[i], step, picks[i].restart))
      report.added.push_back(*m);
    else
      ++report.failed_evaluations;
  }
  report.surrogate_calls = surrogate_calls.load();
  report.unseen_shingles = unseen.load();
  idle_steps_ = picks.empty() ? idle_steps_ + 1 : 0;
  update_stop_reason();
  return report;
}

StopReason BboRun::run() {
  if (!initialized_)
    initialize();
  while (!finished())
    step();
  return stop_reason_;
}

nlohmann::json BboRun::save_state() const {
  nlohmann::json j;
  j["initialized"] = initialized_;
  j["calls"] = calls_;
  j["nextStep"] = next_step_;
  j["idleSteps"] = idle_steps_;
  j["stopReason"] = to_string(stop_reason_);
  j["best"] = best_ ? nlohmann::json(*best_) : nlohmann::json(nullptr);
  j["dictionary"] = dict_.serialize();
  j["dictionaryCapacity"] = dict_.capacity();
  nlohmann::json data = nlohmann::json::array();
  for (const auto &m : dataset_)
    data.push_back({{"smiles", m.smiles},
                    {"value", m.value},
                    {"step", m.step},
                    {"restart", m.restart},
                    {"callIndex", m.call_index},
                    {"cpuTimeS", m.cpu_time_s},
                    {"wallTimeS", m.wall_time_s}});
  j["dataset"] = std::move(data);
  j["failed"] = failed_smiles_;
  double cpu = cpu_offset_, wall = wall_offset_;
  if (cfg_.clock == Clock::Process) {
    cpu += process_cpu_seconds() - cpu_start_;
    wall += std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          wall_start_)
                .count();
  }
  j["cpuTimeS"] = cpu;
  j["wallTimeS"] = wall;
  return j;
}

void BboRun::restore_state(const nlohmann::json &j) {
  try {
    initialized_ = j.at("initialized").get<bool>();
    calls_ = j.at("calls").get<long>();
    next_step_ = j.at("nextStep").get<int>();
    idle_steps_ = j.at("idleSteps").get<int>();
    const std::string reason = j.at("stopReason").get<std::string>();
    stop_reason_ = StopReason::None;
    for (StopReason r : {StopReason::Budget, StopReason::Target,
                         StopReason::Stalled, StopReason::ObjectiveUnavailable})
      if (reason == to_string(r))
        stop_reason_ = r;
    best_.reset();
    if (!j.at("best").is_null())
      best_ = j.at("best").get<double>();
    dict_ = ShingleDictionary::deserialize(
        j.at("dictionary").get<std::vector<std::string>>(),
        j.at("dictionaryCapacity").get<int>());
    dataset_.clear();
    attempted_.clear();
    for (const auto &d : j.at("dataset")) {
      MolecularGraph g = parse_smiles(d.at("smiles").get<std::string>(),
                                      cfg_.chemistry);
      CanonicalKey key = canonical_key(g);
      ShingleVector desc = encode_frozen(g, dict_).vector;
      desc.dimension = dict_.capacity();
      attempted_.insert(key);
      dataset_.push_back({std::move(g), key, key.text, std::move(desc),
                          d.at("value").get<double>(), d.at("step").get<int>(),
                          d.at("restart").get<int>(),
                          d.at("callIndex").get<long>(),
                          d.at("cpuTimeS").get<double>(),
                          d.at("wallTimeS").get<double>()});
    }
    failed_smiles_ = j.at("failed").get<std::vector<std::string>>();
    for (const std::string &s : failed_smiles_)
      attempted_.insert(canonical_key(parse_smiles(s, cfg_.chemistry)));
    cpu_offset_ = j.at("cpuTimeS").get<double>();
    wall_offset_ = j.at("wallTimeS").get<double>();
    cpu_start_ = process_cpu_seconds();
    wall_start_ = std::chrono::steady_clock::now();
  } catch (const nlohmann::json::exception &e) {
    throw std::invalid_argument(std::string("malformed run state: ") + e.what());
  }
}

namespace {

RunLogHeader make_header(const std::string &method, const BboConfig &cfg,
                         const std::string &objective) {
  RunLogHeader h;
  h.method = method;
  h.objective = objective;
  h.budget = cfg.budget;
  h.seed = cfg.master_seed;
  h.config = nlohmann::json::object();
  return h;
}

} // namespace

RunLog run_bbo(const BboConfig &cfg, std::shared_ptr<Objective> objective,
               const std::string &objective_description) {
  RunLog log;
  log.header = make_header("bbo", cfg, objective_description);
  BboRun run(cfg, std::move(objective));
  run.set_record_sink([&](const CallRecord &r) { log.records.push_back(r); });
  log.complete = run.run() != StopReason::ObjectiveUnavailable;
  return log;
}

namespace {

// Unwinds the EA once the baseline must stop.
struct BaselineStop {
  StopReason reason;
};

} // namespace

EaBaselineRun::EaBaselineRun(BboConfig cfg, std::shared_ptr<Objective> objective)
    : cfg_(std::move(cfg)), objective_(std::move(objective)) {
  cfg_.validate();
  if (!objective_)
    throw std::invalid_argument("EaBaselineRun: no objective");
}

StopReason EaBaselineRun::run() {
  CachedObjective cached(objective_, cfg_.budget);
  const double cpu_start = process_cpu_seconds();
  const auto wall_start = std::chrono::steady_clock::now();
  int step = 0;

  const FitnessFn fitness = [&](const MolecularGraph &g,
                                const CanonicalKey &key) -> double {
    if (calls_ >= cfg_.budget)
      throw BaselineStop{StopReason::Budget};
    CallRecord rec;
    rec.step = step;
    rec.smiles = key.text;
    double f = -std::numeric_limits<double>::infinity();
    try {
      f = cached.evaluate(g, key);
      if (std::isfinite(f))
        rec.value = f;
      else
        rec.error = "objective returned a non-finite value";
    } catch (const ObjectiveUnavailable &) {
      throw BaselineStop{StopReason::ObjectiveUnavailable};
    } catch (const ObjectiveError &e) {
      rec.error = e.what();
    }
    calls_ = cached.calls();
    rec.call_index = calls_;
    if (rec.value && (!best_ || *rec.value > *best_)) {
      best_ = *rec.value;
      best_smiles_ = key.text;
    }
    rec.best_so_far = best_;
    if (cfg_.clock == Clock::Logical) {
      rec.cpu_time_s = rec.wall_time_s = static_cast<double>(rec.call_index);
    } else {
      rec.cpu_time_s = process_cpu_seconds() - cpu_start;
      rec.wall_time_s = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - wall_start)
                            .count();
    }
    if (sink_)
      sink_(rec);
    if (cfg_.stop_at_value && best_ && reached(*best_, *cfg_.stop_at_value))
      throw BaselineStop{StopReason::Target};
    if (calls_ >= cfg_.budget)
      throw BaselineStop{StopReason::Budget};
    return rec.value ? f : -std::numeric_limits<double>::infinity();
  };

  std::vector<MolecularGraph> initial;
  for (const std::string &s : cfg_.seed_molecules)
    initial.push_back(parse_smiles(s, cfg_.chemistry));
  EaConfig ea = cfg_.ea;
  ea.chemistry = cfg_.chemistry;
  ea.tabu.clear();
  ea.steps = INT_MAX;
  ea.seed = derive_seed(cfg_.master_seed, {0, 0, kBaseline});
  try {
    ea_maximize(fitness, initial, ea, [&](int s) { step = s; });
  } catch (const BaselineStop &stop) {
    return stop.reason;
  }
  return StopReason::Stalled;
}

RunLog run_ea_baseline(const BboConfig &cfg, std::shared_ptr<Objective> objective,
                       const std::string &objective_description) {
  RunLog log;
  log.header = make_header("ea", cfg, objective_description);
  EaBaselineRun run(cfg, std::move(objective));
  run.set_record_sink([&](const CallRecord &r) { log.records.push_back(r); });
  log.complete = run.run() != StopReason::ObjectiveUnavailable;
  return log;
}

} // namespace molbbo
