#include "dualsr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>

namespace dualsr {

std::uint32_t rank_from_scores(double positive, std::span<const double> negatives) {
  std::uint32_t rank = 1;
  for (double s : negatives) rank += s >= positive;
  return rank;
}

EvalReport metrics(std::span<const std::uint32_t> ranks, std::size_t k) {
  if (ranks.empty()) throw ContractError("metrics: empty rank list");
  EvalReport r;
  r.k = k;
  r.num_cases = ranks.size();
  double hits = 0.0, gain = 0.0, recip = 0.0;
  for (std::uint32_t rank : ranks) {
    if (rank == 0) throw ContractError("metrics: ranks are 1-indexed");
    if (rank <= k) {
      hits += 1.0;
      gain += 1.0 / std::log2(static_cast<double>(rank) + 1.0);
    }
    recip += 1.0 / static_cast<double>(rank);
  }
  const auto n = static_cast<double>(ranks.size());
  r.hr_at_k = hits / n;
  r.ndcg_at_k = gain / n;
  r.mrr = recip / n;
  r.ranks.assign(ranks.begin(), ranks.end());
  return r;
}

FrozenForward::FrozenForward(const Model& model, const GraphInputs& graphs, std::uint32_t last_slice)
    : model_(model), bound_(tape_, model.params()), last_slice_(last_slice) {
  states_ = forward_all(bound_, model_, graphs, last_slice_, {});
}

std::vector<double> FrozenForward::logits(std::span<const std::uint32_t> users, std::span<const std::uint32_t> items) {
  std::vector<std::uint32_t> slices(users.size(), last_slice_);
  Var out = predict_logits(bound_, model_, states_, users, items, slices, {});
  return out.value().data;
}

std::uint32_t rank_case(FrozenForward& forward, std::uint32_t user, std::uint32_t positive_item,
                        std::span<const std::uint32_t> negatives, bool allow_repeats) {
  std::vector<std::uint32_t> items{positive_item};
  items.insert(items.end(), negatives.begin(), negatives.end());
  if (std::find(negatives.begin(), negatives.end(), positive_item) != negatives.end())
    throw ContractError("rank_case: positive item among negatives");
  if (!allow_repeats) {
    std::vector<std::uint32_t> sorted = items;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw ContractError("rank_case: duplicate candidates");
  }
  std::vector<std::uint32_t> users(items.size(), user);
  const std::vector<double> s = forward.logits(users, items);
  return rank_from_scores(s[0], std::span<const double>(s).subspan(1));
}

std::vector<std::uint32_t> sample_negatives(std::uint32_t num_items, std::span<const std::uint32_t> excluded,
                                            std::size_t count, Rng& rng) {
  auto is_excluded = [&](std::uint32_t i) { return std::binary_search(excluded.begin(), excluded.end(), i); };
  std::size_t blocked = 0;
  for (std::uint32_t i : excluded) blocked += i < num_items;
  const std::size_t pool = num_items - blocked;
  if (pool == 0) throw ContractError("sample_negatives: no candidate negatives");
  const bool distinct = pool >= count;
  std::vector<std::uint32_t> out;
  std::vector<std::uint8_t> taken(distinct ? num_items : 0, 0);
  out.reserve(count);
  while (out.size() < count) {
    const auto i = static_cast<std::uint32_t>(rng.below(num_items));
    if (is_excluded(i)) continue;
    if (distinct) {
      if (taken[i]) continue;
      taken[i] = 1;
    }
    out.push_back(i);
  }
  return out;
}

EvalReport evaluate(const Model& model, const GraphInputs& graphs, const InteractionLog& log,
                    std::uint32_t target_slice, const EvalOptions& options) {
  if (target_slice == 0 || target_slice >= log.slice_count)
    throw ContractError("evaluate: target slice needs at least one history slice");
  std::map<std::uint32_t, std::vector<std::uint32_t>> positives;
  for (const auto& it : log.interactions)
    if (it.slice == target_slice) positives[it.user].push_back(it.item);
  for (auto& [u, items] : positives) {
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
  }
  if (positives.empty()) throw EmptyDataError("evaluate: target slice has no interactions");

  FrozenForward forward(model, graphs, target_slice - 1);
  const Rng base = Rng(options.seed).split("eval").split(std::uint64_t{target_slice});
  const std::size_t per_case = options.negatives + 1;
  constexpr std::size_t kCasesPerChunk = 64;

  std::vector<std::uint32_t> ranks;
  std::vector<std::uint32_t> users, items;
  auto flush = [&]() {
    if (users.empty()) return;
    const std::vector<double> s = forward.logits(users, items);
    for (std::size_t c = 0; c * per_case < s.size(); ++c) {
      std::span<const double> scores(s.data() + c * per_case, per_case);
      ranks.push_back(rank_from_scores(scores[0], scores.subspan(1)));
    }
    users.clear();
    items.clear();
  };
  for (const auto& [u, pos] : positives) {
    for (std::uint32_t i : pos) {
      Rng rng = base.split(std::uint64_t{u}).split(std::uint64_t{i});
      const auto negs = sample_negatives(log.num_items, pos, options.negatives, rng);
      users.insert(users.end(), per_case, u);
      items.push_back(i);
      items.insert(items.end(), negs.begin(), negs.end());
      if (users.size() >= kCasesPerChunk * per_case) flush();
    }
  }
  flush();
  EvalReport report = metrics(ranks, options.k);
  report.negatives_per_case = options.negatives;
  report.seed = options.seed;
  return report;
}

TppNll tpp_nll(const Model& model, const GraphInputs& graphs, const EventTimes& events, std::uint32_t target_slice) {
  if (target_slice == 0 || target_slice >= events.user.size())
    throw ContractError("tpp_nll: target slice needs a preceding slice");
  FrozenForward forward(model, graphs, target_slice - 1);
  const std::uint32_t s = target_slice - 1;
  TppNll out;
  double total = 0.0;
  auto side = [&](const std::vector<std::vector<double>>& times, const Var& states, const TppSideIds& ids) {
    const TppSide tpp = TppSide::from(model.params(), ids);
    const Matrix& h = states.value();
    for (std::size_t n = 0; n < times[s].size(); ++n) {
      const double t0 = times[s][n], t1 = times[target_slice][n];
      if (!EventTimes::present(t0) || !EventTimes::present(t1)) continue;
      std::span<const double> row(h.data.data() + n * h.cols, h.cols);
      total -= log_density(row, t0, t1, tpp);
      ++out.terms;
    }
  };
  side(events.user, forward.states().user[s], model.tpp().user);
  side(events.item, forward.states().item[s], model.tpp().item);
  if (out.terms == 0) throw EmptyDataError("tpp_nll: no consecutive events");
  out.mean = total / static_cast<double>(out.terms);
  return out;
}

std::string report_to_json(const EvalReport& r, const std::string& config_hash, const std::string& checkpoint_id) {
  nlohmann::ordered_json j;
  j["hr_at_k"] = r.hr_at_k;
  j["ndcg_at_k"] = r.ndcg_at_k;
  j["mrr"] = r.mrr;
  j["k"] = r.k;
  j["num_cases"] = r.num_cases;
  j["negatives_per_case"] = r.negatives_per_case;
  j["seed"] = r.seed;
  j["config_hash"] = config_hash;
  j["checkpoint_id"] = checkpoint_id;
  return j.dump(2) + "\n";
}

}  // namespace dualsr
