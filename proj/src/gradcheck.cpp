#include "dualsr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "dualsr/training.hpp"

namespace dualsr {

std::string parameter_group(const std::string& name) { return name.substr(0, name.find('.')); }

Var gradcheck_loss(BoundParams& bound, Model& model, const GraphInputs& graphs, const EventTimes& events,
                   const InteractionLog& log, double beta) {
  if (log.slice_count < 2) throw ContractError("gradcheck: need at least two slices");
  const std::uint32_t target = log.slice_count - 1;
  const std::uint32_t history = target - 1;
  std::set<std::pair<std::uint32_t, std::uint32_t>> positive;
  for (const auto& it : log.interactions)
    if (it.slice == target) positive.emplace(it.user, it.item);
  std::vector<TrainExample> batch;
  for (std::uint32_t u = 0; u < log.num_users; ++u)
    for (std::uint32_t i = 0; i < log.num_items; ++i)
      batch.push_back(TrainExample{u, i, positive.count({u, i}) ? 1.0 : 0.0, history});
  // Every user and item is in the batch, so the auxiliary terms span all nodes.
  return batch_loss(bound, model, graphs, events, batch, beta, {}).total;
}

GradcheckReport gradcheck(Model& model, const InteractionLog& log, const GradcheckOptions& opt) {
  const GraphInputs graphs = prepare_graph_inputs(log, model.config());
  const EventTimes events = extract_event_times(log);
  ParameterSet& params = model.params();

  params.clear_grad();
  {
    Tape tape;
    BoundParams bound(tape, params);
    tape.backward(gradcheck_loss(bound, model, graphs, events, log, opt.beta));
  }
  auto loss_at = [&]() {
    Tape tape(false);
    BoundParams bound(tape, params);
    return gradcheck_loss(bound, model, graphs, events, log, opt.beta).scalar();
  };

  std::map<std::string, GroupCheck> groups;
  std::vector<std::string> order;
  for (auto& p : params) {
    const std::string g = parameter_group(p.name);
    if (!groups.count(g)) {
      groups[g].group = g;
      groups[g].zero_gradient = true;
      order.push_back(g);
    }
    GroupCheck& gc = groups[g];
    const bool reached = p.grad.same_shape(p.value);
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      double analytic = reached ? p.grad.data[k] : 0.0;
      if (opt.corrupt_group && *opt.corrupt_group == g) analytic += 0.01 * std::max(1.0, std::abs(analytic));
      const double orig = p.value.data[k];
      p.value.data[k] = orig + opt.step;
      const double up = loss_at();
      p.value.data[k] = orig - opt.step;
      const double down = loss_at();
      p.value.data[k] = orig;
      const double numeric = (up - down) / (2.0 * opt.step);
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      gc.max_rel_error = std::max(gc.max_rel_error, rel);
      if (analytic != 0.0 || numeric != 0.0) gc.zero_gradient = false;
      ++gc.entries;
    }
  }
  GradcheckReport report;
  for (const auto& g : order) {
    GroupCheck gc = groups[g];
    gc.passed = gc.zero_gradient || gc.max_rel_error < opt.tolerance;
    report.passed = report.passed && gc.passed;
    report.groups.push_back(gc);
  }
  params.clear_grad();
  return report;
}

}  // namespace dualsr
