#pragma once

#include <string>
#include <vector>

#include "selab/updates.hpp"

namespace selab {

enum class StepKind { Init, FirstOrder, Saddle };

struct OracleSpec {
  std::string id;
  Params params;
};

/// One step of the iteration. Step 1 must be Init; later steps are
/// first-order (u, v hold Lipschitz maps) or saddle (u, v hold penalties).
struct PlanStep {
  StepKind kind = StepKind::FirstOrder;
  OracleSpec u;
  OracleSpec v;
};

struct UpdatePlan {
  std::vector<PlanStep> steps;  // steps[0] is step 1 (initialization)

  std::size_t length() const { return steps.size(); }
  bool all_first_order() const;
  std::string signature() const;

  MapPtr map_u(std::size_t step_1based) const;
  MapPtr map_v(std::size_t step_1based) const;
  PenaltyPtr penalty_u(std::size_t step_1based) const;
  PenaltyPtr penalty_v(std::size_t step_1based) const;

  /// Structural validation: step 1 is Init, ids resolve, penalties carry
  /// mu > 0 and L < inf, referenced history/aux columns precede the step.
  void validate() const;
};

std::string params_signature(const Params& p);

}  // namespace selab
