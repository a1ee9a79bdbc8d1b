//
// molbbo - surrogate-based black-box optimization of molecular graphs
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MOLBBO_EXTERNAL_OBJECTIVE_H_
#define MOLBBO_EXTERNAL_OBJECTIVE_H_

#include <chrono>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "molbbo/objective.h"

namespace molbbo {

/// Evaluates molecules through a pool of child processes speaking a line
/// protocol on stdin/stdout:
///
///   request:  "EVAL <canonical-smiles>\n"
///   reply:    "OK <decimal float>\n" or "ERR <message>\n"
///
/// Each child serves one request at a time. Children are started lazily
/// with `/bin/sh -c command`. A child that times out or sends a malformed
/// reply is killed and replaced on the next request.
class ExternalProcessObjective : public Objective {
public:
  ExternalProcessObjective(std::string command, std::chrono::milliseconds timeout,
                           int pool_size);
  ~ExternalProcessObjective() override;

  ExternalProcessObjective(const ExternalProcessObjective &) = delete;
  ExternalProcessObjective &operator=(const ExternalProcessObjective &) = delete;

  double evaluate(const MolecularGraph &g, const CanonicalKey &key) override;
  using Objective::evaluate;

  // Sends one request for the given SMILES text.
  double evaluate_smiles(std::string_view smiles);

  int children_started() const { return started_; }

private:
  struct Child;

  std::unique_ptr<Child> acquire();
  void release(std::unique_ptr<Child> child);
  std::unique_ptr<Child> spawn();

  std::string command_;
  std::chrono::milliseconds timeout_;
  int pool_size_;
  int live_ = 0;
  int started_ = 0;
  std::mutex mutex_;
  std::condition_variable idle_cv_;
  std::vector<std::unique_ptr<Child>> idle_;
};

enum class ReplyKind { Ok, Err, Malformed };

struct Reply {
  ReplyKind kind;
  double value = 0.0;
  std::string message;
};

// Parses one reply line (without the trailing newline).
Reply parse_reply(std::string_view line);

} // namespace molbbo

#endif // MOLBBO_EXTERNAL_OBJECTIVE_H_
