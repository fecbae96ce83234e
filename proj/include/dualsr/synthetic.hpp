#pragma once

// Synthetic interaction logs with known structure.

#include <cstdint>
#include <string>
#include <vector>

#include "dualsr/dataset.hpp"
#include "dualsr/rng.hpp"

namespace dualsr {

// Users draw their items from a fixed user-specific cluster in every slice.
// User u belongs to cluster u % clusters; cluster c holds items i with
// i % clusters == c. The first event is at time 0 and the last at
// slices * slice_length - 1, so slicing recovers slice_length exactly.
struct PlantedOptions {
  std::uint32_t users = 50;
  std::uint32_t items = 50;
  std::uint32_t slices = 6;
  std::uint32_t clusters = 10;
  std::uint32_t per_slice = 2;
  std::int64_t slice_length = 1000;
  // Each user's events sit at a fixed offset inside every slice, so the gap
  // between last events of consecutive slices is exactly one slice length.
  bool regular_gaps = false;
};

std::vector<RawInteraction> generate_planted(const PlantedOptions& options, std::uint64_t seed);

// Three item groups of equal size. Even slices use group 0; odd slices
// alternate between groups 1 and 2 (1, 2, 1, ...), so the slice after an even
// slice is determined by the slice before it and not by the even slice itself.
// Every user owns a cluster of cluster_size items in each group and interacts
// with per_slice of them per slice.
struct FlipOptions {
  std::uint32_t users = 40;
  std::uint32_t items_per_group = 40;
  std::uint32_t slices = 10;
  std::uint32_t cluster_size = 2;
  std::uint32_t per_slice = 2;
  std::int64_t slice_length = 1000;
};

std::vector<RawInteraction> generate_flip(const FlipOptions& options, std::uint64_t seed);

// Item group active in slice s of the flip dataset.
std::uint32_t flip_group(std::uint32_t slice);

// Two users, three items, three slices:
//   slice 0: (u0,i0) (u0,i1) (u1,i1)
//   slice 1: (u0,i2) (u1,i0) (u1,i2)
//   slice 2: (u0,i1) (u1,i2)
std::vector<RawInteraction> micro_triplets();
InteractionLog micro_log();

// Ingests raw triplets without frequency filtering and slices them.
InteractionLog to_log(std::vector<RawInteraction> raw, std::uint32_t slices, std::uint32_t min_interactions = 1);

void write_triplets(const std::string& path, const std::vector<RawInteraction>& raw);

}  // namespace dualsr
