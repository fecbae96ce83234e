#pragma once

// Sampled-negative ranking evaluation: every positive (user, item) pair of a
// target slice is ranked against 100 sampled negatives, scored from the states
// of the history slices strictly before the target slice.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dualsr/model.hpp"
#include "dualsr/tpp.hpp"

namespace dualsr {

inline constexpr std::size_t kEvalNegatives = 100;

struct EvalReport {
  double hr_at_k = 0.0;
  double ndcg_at_k = 0.0;
  double mrr = 0.0;
  std::size_t k = 10;
  std::size_t num_cases = 0;
  std::size_t negatives_per_case = kEvalNegatives;
  std::uint64_t seed = 0;
  std::vector<std::uint32_t> ranks;  // per case, not serialized
};

// 1 + number of negatives scoring at least as high as the positive.
std::uint32_t rank_from_scores(double positive, std::span<const double> negatives);

// ContractError on an empty list or a rank of 0.
EvalReport metrics(std::span<const std::uint32_t> ranks, std::size_t k);

// Parameter snapshot evaluated without gradient tracking, with slice states
// computed once for history slices 0..last_slice.
class FrozenForward {
 public:
  FrozenForward(const Model& model, const GraphInputs& graphs, std::uint32_t last_slice);
  FrozenForward(const FrozenForward&) = delete;
  FrozenForward& operator=(const FrozenForward&) = delete;

  const SliceStates& states() const { return states_; }
  std::uint32_t last_slice() const { return last_slice_; }
  // Logits of (user, items[k]) at the last computed history slice.
  std::vector<double> logits(std::span<const std::uint32_t> users, std::span<const std::uint32_t> items);

 private:
  const Model& model_;
  Tape tape_{false};
  BoundParams bound_;
  SliceStates states_;
  std::uint32_t last_slice_;
};

// Rank of positive_item for user among positive + negatives. Candidates must
// be distinct unless allow_repeats is set, and never include the positive.
std::uint32_t rank_case(FrozenForward& forward, std::uint32_t user, std::uint32_t positive_item,
                        std::span<const std::uint32_t> negatives, bool allow_repeats = false);

// Negatives for one case drawn from [0, num_items) minus excluded (sorted).
// Sampled without replacement when the pool holds at least `count` items and
// with replacement otherwise. ContractError when the pool is empty.
std::vector<std::uint32_t> sample_negatives(std::uint32_t num_items, std::span<const std::uint32_t> excluded,
                                            std::size_t count, Rng& rng);

struct EvalOptions {
  std::size_t k = 10;
  std::size_t negatives = kEvalNegatives;
  std::uint64_t seed = 0;
};

// One case per distinct (user, item) pair of target_slice, using history
// slices 0..target_slice-1. Negatives depend only on (seed, slice, user, item).
EvalReport evaluate(const Model& model, const GraphInputs& graphs, const InteractionLog& log,
                    std::uint32_t target_slice, const EvalOptions& options);

struct TppNll {
  double mean = 0.0;
  std::size_t terms = 0;
};

// Mean -log f of the target-slice event for every node active in both
// target_slice-1 and target_slice, from states at history slice target_slice-1.
TppNll tpp_nll(const Model& model, const GraphInputs& graphs, const EventTimes& events, std::uint32_t target_slice);

std::string report_to_json(const EvalReport& report, const std::string& config_hash, const std::string& checkpoint_id);

}  // namespace dualsr
