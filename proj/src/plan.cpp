#include "selab/plan.hpp"

#include <cmath>
#include <sstream>

#include "selab/errors.hpp"

namespace selab {

namespace {

void check_refs(const Params& p, std::size_t step_1based, const char* what) {
  // any *_col / *_cols parameter must reference a column strictly before the step
  auto check_value = [&](double v, const std::string& name) {
    if (v < 0.0 || v != std::floor(v))
      throw Error(std::string(what) + ": parameter " + name + " must be a nonnegative integer");
    if (static_cast<std::size_t>(v) >= step_1based && v != 0.0)
      throw Error(std::string(what) + ": parameter " + name + " references step " +
                  std::to_string(static_cast<std::size_t>(v)) + " which is not before step " +
                  std::to_string(step_1based));
  };
  for (const auto& [name, v] : p.scalars)
    if (name.size() >= 4 && name.substr(name.size() - 4) == "_col") check_value(v, name);
  for (const auto& [name, vs] : p.vectors)
    if (name.size() >= 5 && name.substr(name.size() - 5) == "_cols")
      for (double v : vs) check_value(v, name);
}

}  // namespace

std::string params_signature(const Params& p) {
  std::ostringstream os;
  os.precision(17);
  for (const auto& [k, v] : p.scalars) os << k << "=" << v << ";";
  for (const auto& [k, vs] : p.vectors) {
    os << k << "=[";
    for (double v : vs) os << v << ",";
    os << "];";
  }
  for (const auto& [k, v] : p.strings) os << k << "=" << v << ";";
  return os.str();
}

bool UpdatePlan::all_first_order() const {
  for (const auto& s : steps)
    if (s.kind == StepKind::Saddle) return false;
  return true;
}

std::string UpdatePlan::signature() const {
  std::ostringstream os;
  for (const auto& s : steps) {
    switch (s.kind) {
      case StepKind::Init: os << "I"; break;
      case StepKind::FirstOrder: os << "F"; break;
      case StepKind::Saddle: os << "S"; break;
    }
    os << "{u:" << s.u.id << "(" << params_signature(s.u.params) << ")"
       << ",v:" << s.v.id << "(" << params_signature(s.v.params) << ")}";
  }
  return os.str();
}

MapPtr UpdatePlan::map_u(std::size_t step) const { return builtin_map(steps.at(step - 1).u.id, steps.at(step - 1).u.params); }
MapPtr UpdatePlan::map_v(std::size_t step) const { return builtin_map(steps.at(step - 1).v.id, steps.at(step - 1).v.params); }
PenaltyPtr UpdatePlan::penalty_u(std::size_t step) const { return builtin_penalty(steps.at(step - 1).u.id, steps.at(step - 1).u.params); }
PenaltyPtr UpdatePlan::penalty_v(std::size_t step) const { return builtin_penalty(steps.at(step - 1).v.id, steps.at(step - 1).v.params); }

void UpdatePlan::validate() const {
  if (steps.empty()) throw Error("plan: must have at least one step");
  if (steps[0].kind != StepKind::Init) throw Error("plan: step 1 must be an initialization");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& s = steps[i];
    const std::size_t step = i + 1;
    if (i > 0 && s.kind == StepKind::Init)
      throw Error("plan: initialization only allowed at step 1 (step " + std::to_string(step) + ")");
    const char* where = s.kind == StepKind::Saddle ? "saddle step" : "first-order step";
    if (s.kind == StepKind::Saddle) {
      auto pu = builtin_penalty(s.u.id, s.u.params);  // throws on unknown / bad params
      auto pv = builtin_penalty(s.v.id, s.v.params);
      if (!(pu->mu() > 0.0) || !(pv->mu() > 0.0))
        throw Error("plan: saddle step " + std::to_string(step) + " requires mu > 0");
      if (!std::isfinite(pu->smoothness()) || !std::isfinite(pv->smoothness()))
        throw Error("plan: saddle step " + std::to_string(step) + " requires finite smoothness");
    } else {
      (void)builtin_map(s.u.id, s.u.params);
      (void)builtin_map(s.v.id, s.v.params);
    }
    check_refs(s.u.params, step, where);
    check_refs(s.v.params, step, where);
  }
}

}  // namespace selab
