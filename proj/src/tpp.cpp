#include "dualsr/tpp.hpp"

#include <algorithm>
#include <cmath>

namespace dualsr {

TppParamIds register_tpp_params(ParameterSet& params, std::size_t dim, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  auto side = [&](const std::string& prefix) {
    Matrix w(dim, 1);
    for (double& v : w.data) v = rng.uniform(-bound, bound);
    TppSideIds ids;
    ids.w = params.add(prefix + ".w", std::move(w));
    ids.omega = params.add(prefix + ".omega", Matrix::scalar(kTppInitialOmega));
    ids.bias = params.add(prefix + ".b", Matrix::scalar(0.0));
    return ids;
  };
  TppParamIds ids;
  ids.user = side("tpp.user");
  ids.item = side("tpp.item");
  return ids;
}

TppSide TppSide::from(const ParameterSet& params, const TppSideIds& ids) {
  TppSide s;
  s.w = params[ids.w].value.data;
  s.omega = params[ids.omega].value.data[0];
  s.bias = params[ids.bias].value.data[0];
  return s;
}

EventTimes extract_event_times(const InteractionLog& log) {
  if (!log.sliced()) throw ContractError("extract_event_times: slices not assigned");
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  EventTimes ev;
  ev.user.assign(log.slice_count, std::vector<double>(log.num_users, nan));
  ev.item.assign(log.slice_count, std::vector<double>(log.num_items, nan));
  const auto dt = static_cast<double>(log.slice_length);
  for (const auto& it : log.interactions) {
    const double t = static_cast<double>(it.timestamp - log.t_min) / dt;
    double& tu = ev.user[it.slice][it.user];
    double& ti = ev.item[it.slice][it.item];
    if (!EventTimes::present(tu) || t > tu) tu = t;
    if (!EventTimes::present(ti) || t > ti) ti = t;
  }
  return ev;
}

double log_density_from_activation(double activation, double omega, double gap) {
  if (omega == 0.0) throw ContractError("log_density: omega must be nonzero");
  if (gap < 0.0) throw ContractError("log_density: t_next precedes t_prev");
  const double shifted = activation + omega * gap;
  const double e0 = std::exp(std::min(activation, kTppExponentClamp));
  const double e1 = std::exp(std::min(shifted, kTppExponentClamp));
  return shifted + (e0 - e1) / omega;
}

double log_density(std::span<const double> h, double t_prev, double t_next, const TppSide& side) {
  if (h.size() != side.w.size()) throw DimensionError("log_density: state width mismatch");
  double a = side.bias;
  for (std::size_t k = 0; k < h.size(); ++k) a += side.w[k] * h[k];
  return log_density_from_activation(a, side.omega, t_next - t_prev);
}

double intensity(std::span<const double> h, double t_prev, double t, const TppSide& side) {
  if (h.size() != side.w.size()) throw DimensionError("intensity: state width mismatch");
  double a = side.bias;
  for (std::size_t k = 0; k < h.size(); ++k) a += side.w[k] * h[k];
  return std::exp(a + side.omega * (t - t_prev));
}

Var log_density(Var activation, Var omega, const Matrix& gaps, std::size_t* clamp_count) {
  if (omega.value().size() != 1) throw DimensionError("log_density: omega must be 1x1");
  if (omega.scalar() == 0.0) throw ContractError("log_density: omega must be nonzero");
  if (!gaps.same_shape(activation.value())) throw DimensionError("log_density: gaps shape mismatch");
  for (double g : gaps.data)
    if (g < 0.0) throw ContractError("log_density: negative gap");
  Tape& tape = *activation.tape();
  constexpr double lowest = -std::numeric_limits<double>::infinity();
  Var shifted = ad::add(activation, ad::mul(omega, tape.constant(gaps)));
  if (clamp_count) {
    for (double v : activation.value().data) *clamp_count += v > kTppExponentClamp;
    for (double v : shifted.value().data) *clamp_count += v > kTppExponentClamp;
  }
  Var e0 = ad::exp(ad::clamp(activation, lowest, kTppExponentClamp));
  Var e1 = ad::exp(ad::clamp(shifted, lowest, kTppExponentClamp));
  return ad::add(shifted, ad::div(ad::sub(e0, e1), omega));
}

std::vector<AuxTerm> collect_aux_terms(const EventTimes& events, std::span<const std::uint32_t> users,
                                       std::span<const std::uint32_t> items, std::uint32_t last_slice) {
  std::vector<AuxTerm> terms;
  auto side = [&](const std::vector<std::vector<double>>& times, std::span<const std::uint32_t> nodes, bool user) {
    for (std::uint32_t s = 0; s + 1 <= last_slice && s + 1 < times.size(); ++s) {
      for (std::uint32_t n : nodes) {
        const double t0 = times[s][n];
        const double t1 = times[s + 1][n];
        if (!EventTimes::present(t0) || !EventTimes::present(t1)) continue;
        terms.push_back(AuxTerm{user, n, s, t1 - t0});
      }
    }
  };
  side(events.user, users, true);
  side(events.item, items, false);
  return terms;
}

AuxLoss aux_loss(Tape& tape, Var user_states_stacked, Var item_states_stacked, std::size_t num_users,
                 std::size_t num_items, std::span<const AuxTerm> terms, ParameterSet& params,
                 const TppParamIds& ids) {
  AuxLoss out;
  out.value = tape.constant(Matrix::scalar(0.0));
  Var total = out.value;
  for (const bool user : {true, false}) {
    std::vector<std::uint32_t> rows;
    Matrix gaps;
    std::vector<double> gap_values;
    for (const auto& t : terms) {
      if (t.is_user != user) continue;
      rows.push_back(static_cast<std::uint32_t>(t.slice * (user ? num_users : num_items) + t.node));
      gap_values.push_back(t.gap);
    }
    if (rows.empty()) continue;
    gaps = Matrix(rows.size(), 1);
    gaps.data = std::move(gap_values);
    const TppSideIds& side = user ? ids.user : ids.item;
    Var h = ad::gather_rows(user ? user_states_stacked : item_states_stacked, rows);
    Var activation = ad::add(ad::matmul(h, tape.param(params[side.w])), tape.param(params[side.bias]));
    Var logf = log_density(activation, tape.param(params[side.omega]), gaps, &out.clamped);
    total = ad::sub(total, ad::sum(logf));
    out.terms += rows.size();
  }
  out.value = total;
  return out;
}

}  // namespace dualsr
