//
// molbbo - surrogate-based black-box optimization of molecular graphs
// SPDX-License-Identifier: Apache-2.0
//

#include "molbbo/runlog.h"

#include <sstream>

namespace molbbo {

using nlohmann::json;

json to_json(const CallRecord &r) {
  json j = {{"callIndex", r.call_index},
            {"step", r.step},
            {"restart", r.restart},
            {"smiles", r.smiles},
            {"value", r.value ? json(*r.value) : json(nullptr)},
            {"bestSoFar", r.best_so_far ? json(*r.best_so_far) : json(nullptr)},
            {"cpuTimeS", r.cpu_time_s},
            {"wallTimeS", r.wall_time_s}};
  if (!r.error.empty())
    j["error"] = r.error;
  return j;
}

CallRecord call_record_from_json(const json &j) {
  CallRecord r;
  r.call_index = j.at("callIndex").get<long>();
  r.step = j.at("step").get<int>();
  r.restart = j.at("restart").get<int>();
  r.smiles = j.at("smiles").get<std::string>();
  if (!j.at("value").is_null())
    r.value = j.at("value").get<double>();
  if (!j.at("bestSoFar").is_null())
    r.best_so_far = j.at("bestSoFar").get<double>();
  r.cpu_time_s = j.at("cpuTimeS").get<double>();
  r.wall_time_s = j.at("wallTimeS").get<double>();
  if (j.contains("error"))
    r.error = j.at("error").get<std::string>();
  return r;
}

RunLogWriter::RunLogWriter(const std::filesystem::path &path,
                           const RunLogHeader &header)
    : out_(path, std::ios::trunc) {
  if (!out_)
    throw std::runtime_error("cannot write run log " + path.string());
  json h = {{"schema", kRunLogSchema},
            {"version", header.version},
            {"method", header.method},
            {"objective", header.objective},
            {"budget", header.budget},
            {"seed", header.seed},
            {"config", header.config}};
  out_ << h.dump() << '\n' << std::flush;
}

RunLogWriter RunLogWriter::append_to(const std::filesystem::path &path,
                                     std::optional<long> keep_calls) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot read run log " + path.string());
  std::ostringstream kept;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    // A line cut short by a crash is dropped.
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || j.contains("complete"))
      continue;
    if (keep_calls && j.contains("callIndex") &&
        j.at("callIndex").get<long>() > *keep_calls)
      continue;
    kept << line << '\n';
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw std::runtime_error("cannot write run log " + path.string());
  out << kept.str() << std::flush;
  return RunLogWriter(std::move(out));
}

void RunLogWriter::write(const CallRecord &r) {
  out_ << to_json(r).dump() << '\n' << std::flush;
}

void RunLogWriter::finish(bool complete, long calls) {
  out_ << json{{"complete", complete}, {"calls", calls}}.dump() << '\n'
       << std::flush;
}

RunLog read_runlog(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw RunLogFormatError("cannot open run log " + path.string());
  RunLog log;
  bool have_header = false;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty())
      continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception &e) {
      throw RunLogFormatError(path.string() + ":" + std::to_string(lineno) +
                              ": " + e.what());
    }
    try {
      if (j.contains("schema")) {
        if (j.at("schema") != kRunLogSchema)
          throw RunLogFormatError(path.string() + ": not a molbbo run log");
        const int version = j.at("version").get<int>();
        if (version != kRunLogVersion)
          throw RunLogFormatError(path.string() + ": unsupported run log version " +
                                  std::to_string(version));
        log.header.version = version;
        log.header.method = j.at("method").get<std::string>();
        log.header.objective = j.at("objective").get<std::string>();
        log.header.budget = j.at("budget").get<long>();
        log.header.seed = j.at("seed").get<std::uint64_t>();
        log.header.config = j.value("config", json::object());
        have_header = true;
      } else if (j.contains("callIndex")) {
        log.records.push_back(call_record_from_json(j));
      } else if (j.contains("complete")) {
        log.complete = j.at("complete").get<bool>();
      } else {
        throw RunLogFormatError(path.string() + ":" + std::to_string(lineno) +
                                ": unrecognized line");
      }
    } catch (const json::exception &e) {
      throw RunLogFormatError(path.string() + ":" + std::to_string(lineno) +
                              ": " + e.what());
    }
  }
  if (!have_header)
    throw RunLogFormatError(path.string() + ": missing header line");
  return log;
}

void check_runlog(const RunLog &log) {
  std::optional<double> best;
  for (std::size_t i = 0; i < log.records.size(); ++i) {
    const CallRecord &r = log.records[i];
    if (r.call_index != static_cast<long>(i) + 1)
      throw RunLogFormatError("call indices are not contiguous from 1");
    if (best && (!r.best_so_far || *r.best_so_far < *best))
      throw RunLogFormatError("bestSoFar decreases at call " +
                              std::to_string(r.call_index));
    best = r.best_so_far;
  }
}

} // namespace molbbo
