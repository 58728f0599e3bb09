#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ecp/circuit.hpp"
#include "ecp/strategy.hpp"

namespace ecp {

/// One sampled answer for a task, labelled correct or not.
struct RunRecord {
  std::string model;
  double temperature = 0.0;
  StrategyKind strategy = ZeroShot{};
  std::string representation;  // encoder / metric label selecting lambda
  std::vector<std::string> demo_ids;
  bool correct = false;
};

struct TaskRecord {
  std::string task_id;
  std::string family;
  std::string query;
  ResistanceBreakdown resistance;
  std::optional<std::string> embedding_id;
  std::vector<RunRecord> runs;
};

}  // namespace ecp
