//
// molbbo - surrogate-based black-box optimization of molecular graphs
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLBBO_CLI_H_
#define MOLBBO_CLI_H_

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "molbbo/bbo.h"
#include "molbbo/bench.h"
#include "molbbo/objective.h"

namespace molbbo {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInvalidInput = 2;
inline constexpr int kExitObjectiveFailure = 3;

// Bad configuration or input files; maps to exit status 2.
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

struct ExperimentConfig {
  BboConfig bbo;
  ObjectiveSpec objective;
  std::string output_dir; // empty: --out is required
};

/// Parses and fully validates an experiment config. Unknown fields, wrong
/// types and invalid values throw ConfigError naming the offending field.
ExperimentConfig parse_experiment_config(const nlohmann::json &j);
ExperimentConfig load_experiment_config(const std::filesystem::path &path);

/// Normalized form with every field spelled out. Parses back to an equal
/// config.
nlohmann::json to_json(const ExperimentConfig &cfg);

// The part of the config that determines run results (no parallelism, no
// output location). Stored in run log headers and checkpoints.
nlohmann::json result_config(const ExperimentConfig &cfg);

/// "<smiles>,<value>" per line; blank lines and lines starting with '#' are
/// skipped. Bad lines are reported to `err` with their line number; more
/// than 1% bad lines throws ConfigError.
std::vector<LabeledMolecule> read_dataset(std::istream &in, std::ostream &err);

// Writes through a temporary file and a rename. The temporary lives in
// $MOLBBO_TMPDIR when set, next to `path` otherwise.
void write_file_atomic(const std::filesystem::path &path,
                       const std::string &content);

/// Command-line entry point; returns the process exit status.
int run_cli(int argc, const char *const *argv, std::ostream &out,
            std::ostream &err);

} // namespace molbbo

#endif // MOLBBO_CLI_H_
