#pragma once

// Auxiliary temporal prediction: for a node with state h at its last event
// t_prev in slice s, the next event (its last interaction in slice s+1) has
// intensity
//   lambda(t) = exp(w.h + omega * (t - t_prev) + b)
// and closed-form log-density
//   log f(t) = w.h + omega*g + b + (exp(w.h + b) - exp(w.h + omega*g + b)) / omega,
// with g = t - t_prev measured in slice lengths.

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "dualsr/autodiff.hpp"
#include "dualsr/dataset.hpp"

namespace dualsr {

// Exponents above this are clamped before exp().
inline constexpr double kTppExponentClamp = 50.0;
inline constexpr double kTppInitialOmega = 0.1;

struct TppSideIds {
  ParameterSet::Id w = 0;      // d x 1
  ParameterSet::Id omega = 0;  // 1 x 1
  ParameterSet::Id bias = 0;   // 1 x 1
};

struct TppParamIds {
  TppSideIds user;
  TppSideIds item;
};

// Registers tpp.{user,item}.{w,omega,b}: w ~ U(-1/sqrt(d), 1/sqrt(d)),
// omega = 0.1, b = 0.
TppParamIds register_tpp_params(ParameterSet& params, std::size_t dim, Rng& rng);

// Plain-value view of one side's parameters.
struct TppSide {
  std::vector<double> w;
  double omega = kTppInitialOmega;
  double bias = 0.0;

  static TppSide from(const ParameterSet& params, const TppSideIds& ids);
};

// Per-slice event times in slice-length units, (t - t_min) / dT; NaN where
// the node has no interaction in the slice.
struct EventTimes {
  std::vector<std::vector<double>> user;  // [slice][user]
  std::vector<std::vector<double>> item;  // [slice][item]

  static bool present(double t) { return t == t; }
};

EventTimes extract_event_times(const InteractionLog& log);

// Log-density of the next event at t_next given state h and previous event
// t_prev. Throws ContractError for omega == 0 or t_next < t_prev.
double log_density(std::span<const double> h, double t_prev, double t_next, const TppSide& side);

// Same, from the precomputed activation a = w.h + b.
double log_density_from_activation(double activation, double omega, double gap);

double intensity(std::span<const double> h, double t_prev, double t, const TppSide& side);

// Vectorized differentiable form: activation is K x 1 (w.h + b per term),
// omega 1 x 1, gaps K x 1 constant. Returns K x 1 log-densities.
// clamp_count, when given, is incremented per clamped exponent.
Var log_density(Var activation, Var omega, const Matrix& gaps, std::size_t* clamp_count = nullptr);

struct AuxTerm {
  bool is_user = true;
  std::uint32_t node = 0;
  std::uint32_t slice = 0;  // state slice s; the target event is in s + 1
  double gap = 0.0;
};

// Consecutive-slice event pairs (s, s+1) with s + 1 <= last_slice for the
// given nodes; pairs with a missing event are skipped.
std::vector<AuxTerm> collect_aux_terms(const EventTimes& events, std::span<const std::uint32_t> users,
                                       std::span<const std::uint32_t> items, std::uint32_t last_slice);

struct AuxLoss {
  Var value;  // 1 x 1, sum of -log f over terms (zero constant when no terms)
  std::size_t terms = 0;
  std::size_t clamped = 0;
};

// -sum log f over terms; user_states / item_states are the per-slice states
// stacked row-wise (slice s of node n at row s * count + n).
AuxLoss aux_loss(Tape& tape, Var user_states_stacked, Var item_states_stacked, std::size_t num_users,
                 std::size_t num_items, std::span<const AuxTerm> terms, ParameterSet& params,
                 const TppParamIds& ids);

}  // namespace dualsr
