#pragma once

#include <string>
#include <vector>

#include "storm/model.hpp"

namespace storm {

// Textual key -> array checkpoint with a versioned header. Values are
// printed with %.17g so doubles round-trip exactly; see README for the
// exact layout.
void save_checkpoint(const std::string& path, const ParamVec& params);

struct CheckpointEntry {
  std::string name;
  graph::Shape shape;
  std::vector<double> values;
};

std::vector<CheckpointEntry> load_checkpoint(const std::string& path);

// Restores leaf values in place; names and shapes must match exactly.
void restore_from_checkpoint(const std::string& path, ParamVec& params);

}  // namespace storm
