#pragma once

// Central finite-difference check of every parameter gradient, grouped by
// parameter name prefix (emb, fuse, slice, mlp, tpp).

#include <optional>
#include <string>
#include <vector>

#include "dualsr/model.hpp"
#include "dualsr/tpp.hpp"

namespace dualsr {

struct GradcheckOptions {
  double beta = 0.01;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  // Adds a deliberate error to the analytic gradient of this group.
  std::optional<std::string> corrupt_group;
};

struct GroupCheck {
  std::string group;
  std::size_t entries = 0;
  double max_rel_error = 0.0;
  bool zero_gradient = false;  // loss does not depend on the group; skipped
  bool passed = true;
};

struct GradcheckReport {
  std::vector<GroupCheck> groups;
  bool passed = true;
};

// Group name of a parameter: the text before the first '.'.
std::string parameter_group(const std::string& name);

// Loss on log's last slice: mean BCE over every (user, item) pair labelled by
// whether it occurs in the last slice, from history slices 0..T-2, plus
// beta times the auxiliary loss over all users and items. Dropout is off.
Var gradcheck_loss(BoundParams& bound, Model& model, const GraphInputs& graphs, const EventTimes& events,
                   const InteractionLog& log, double beta);

// |a - n| / max(|a|, |n|, 1e-6) per entry, maximised per group.
GradcheckReport gradcheck(Model& model, const InteractionLog& log, const GradcheckOptions& options);

}  // namespace dualsr
