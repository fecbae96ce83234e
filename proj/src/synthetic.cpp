#include "dualsr/synthetic.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "dualsr/errors.hpp"

namespace dualsr {

namespace {

std::string user_id(std::uint32_t u) { return "u" + std::to_string(u); }
std::string item_id(std::uint32_t i) { return "i" + std::to_string(i); }

// k distinct members of pool in random order.
std::vector<std::uint32_t> pick(std::vector<std::uint32_t> pool, std::uint32_t k, Rng& rng) {
  if (k > pool.size()) throw ContractError("synthetic: not enough items to pick from");
  rng.shuffle(std::span<std::uint32_t>(pool));
  pool.resize(k);
  return pool;
}

// Pins the earliest event to 0 and the latest to the end of the last slice.
void pin_endpoints(std::vector<RawInteraction>& raw, std::int64_t end) {
  if (raw.empty()) return;
  auto [lo, hi] = std::minmax_element(raw.begin(), raw.end(),
                                      [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
  lo->timestamp = 0;
  hi->timestamp = end;
}

}  // namespace

std::vector<RawInteraction> generate_planted(const PlantedOptions& o, std::uint64_t seed) {
  if (o.clusters == 0 || o.items < o.clusters) throw ContractError("planted: need at least one item per cluster");
  if (o.slice_length < 4) throw ContractError("planted: slice_length too short");
  Rng rng = Rng(seed).split("planted");
  std::vector<RawInteraction> raw;
  const std::int64_t half = o.slice_length / 2;
  for (std::uint32_t u = 0; u < o.users; ++u) {
    std::vector<std::uint32_t> cluster;
    for (std::uint32_t i = u % o.clusters; i < o.items; i += o.clusters) cluster.push_back(i);
    // Regular offsets spread users over the first half of each slice.
    const std::int64_t phase = o.users > 1 ? static_cast<std::int64_t>(u) * (half - 1) / (o.users - 1) : 0;
    for (std::uint32_t s = 0; s < o.slices; ++s) {
      const std::int64_t base = static_cast<std::int64_t>(s) * o.slice_length;
      const auto items = pick(cluster, o.per_slice, rng);
      for (std::uint32_t k = 0; k < items.size(); ++k) {
        std::int64_t t;
        if (o.regular_gaps)
          t = base + phase + (items.size() > 1 ? static_cast<std::int64_t>(k) * half / (items.size() - 1) : 0);
        else
          t = base + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(o.slice_length)));
        raw.push_back({user_id(u), item_id(items[k]), t});
      }
    }
  }
  if (!o.regular_gaps) pin_endpoints(raw, static_cast<std::int64_t>(o.slices) * o.slice_length - 1);
  return raw;
}

std::uint32_t flip_group(std::uint32_t slice) {
  if (slice % 2 == 0) return 0;
  return (slice / 2) % 2 == 0 ? 1 : 2;
}

std::vector<RawInteraction> generate_flip(const FlipOptions& o, std::uint64_t seed) {
  if (o.cluster_size > o.items_per_group || o.per_slice > o.cluster_size)
    throw ContractError("flip: cluster sizes out of range");
  Rng rng = Rng(seed).split("flip");
  const std::uint32_t n = o.items_per_group;
  std::vector<RawInteraction> raw;
  for (std::uint32_t u = 0; u < o.users; ++u) {
    std::vector<std::vector<std::uint32_t>> clusters(3);
    for (std::uint32_t g = 0; g < 3; ++g)
      for (std::uint32_t k = 0; k < o.cluster_size; ++k)
        clusters[g].push_back(g * n + (u * o.cluster_size + k + 7 * g) % n);
    for (std::uint32_t s = 0; s < o.slices; ++s) {
      const std::int64_t base = static_cast<std::int64_t>(s) * o.slice_length;
      for (std::uint32_t i : pick(clusters[flip_group(s)], o.per_slice, rng)) {
        const auto t = base + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(o.slice_length)));
        raw.push_back({user_id(u), item_id(i), t});
      }
    }
  }
  pin_endpoints(raw, static_cast<std::int64_t>(o.slices) * o.slice_length - 1);
  return raw;
}

std::vector<RawInteraction> micro_triplets() {
  return {{"u0", "i0", 0},  {"u0", "i1", 2},  {"u1", "i1", 5},  {"u0", "i2", 12},
          {"u1", "i0", 15}, {"u1", "i2", 17}, {"u0", "i1", 24}, {"u1", "i2", 29}};
}

InteractionLog micro_log() { return to_log(micro_triplets(), 3); }

InteractionLog to_log(std::vector<RawInteraction> raw, std::uint32_t slices, std::uint32_t min_interactions) {
  return assign_slices(filter_and_index(std::move(raw), min_interactions), slices);
}

void write_triplets(const std::string& path, const std::vector<RawInteraction>& raw) {
  std::ofstream out(path);
  if (!out) throw ContractError("cannot write '" + path + "'");
  for (const auto& r : raw) out << r.user_id << '\t' << r.item_id << '\t' << r.timestamp << '\n';
}

}  // namespace dualsr
