//
// molbbo - surrogate-based black-box optimization of molecular graphs
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLBBO_RUNLOG_H_
#define MOLBBO_RUNLOG_H_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace molbbo {

inline constexpr int kRunLogVersion = 1;
inline constexpr const char *kRunLogSchema = "molbbo-runlog";

// One exact-objective invocation. `value` is empty when the call failed.
struct CallRecord {
  long call_index = 0;
  int step = 0;
  int restart = 0;
  std::string smiles;
  std::optional<double> value;
  std::optional<double> best_so_far;
  double cpu_time_s = 0.0;
  double wall_time_s = 0.0;
  std::string error;
};

struct RunLogHeader {
  int version = kRunLogVersion;
  std::string method;
  std::string objective; // ObjectiveSpec::describe()
  long budget = 0;
  std::uint64_t seed = 0;
  nlohmann::json config; // snapshot of the experiment config
};

struct RunLog {
  RunLogHeader header;
  std::vector<CallRecord> records;
  bool complete = false;
};

class RunLogFormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

nlohmann::json to_json(const CallRecord &r);
CallRecord call_record_from_json(const nlohmann::json &j);

/// Appends a run log as JSON Lines: a header line, one line per call and a
/// trailer line written by finish(). Lines are flushed as they are written.
class RunLogWriter {
public:
  RunLogWriter(const std::filesystem::path &path, const RunLogHeader &header);
  // Continues an existing log after a resume. Drops the trailer, unreadable
  // lines and records past keep_calls.
  static RunLogWriter append_to(const std::filesystem::path &path,
                                std::optional<long> keep_calls = std::nullopt);

  void write(const CallRecord &r);
  void finish(bool complete, long calls);

private:
  explicit RunLogWriter(std::ofstream out) : out_(std::move(out)) {}
  std::ofstream out_;
};

/// Reads a JSON Lines run log. Refuses unknown schema versions.
RunLog read_runlog(const std::filesystem::path &path);

// Checks contiguous call indices from 1 and nondecreasing best_so_far.
void check_runlog(const RunLog &log);

} // namespace molbbo

#endif // MOLBBO_RUNLOG_H_
