#pragma once

#include <cstdint>
#include <istream>
#include <string>
#include <utility>
#include <vector>

namespace dualsr {

struct RawInteraction {
  std::string user_id;
  std::string item_id;
  std::int64_t timestamp = 0;
};

struct Interaction {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  std::int64_t timestamp = 0;
  std::uint32_t slice = 0;

  bool operator==(const Interaction&) const = default;
};

// Filtered, densely indexed interactions sorted by timestamp (ties keep input
// order). Slice fields are meaningful once slice_count > 0.
struct InteractionLog {
  std::vector<Interaction> interactions;
  std::uint32_t num_users = 0;
  std::uint32_t num_items = 0;
  std::uint32_t slice_count = 0;
  std::int64_t slice_length = 0;
  std::int64_t t_min = 0;
  std::uint32_t min_interactions = 1;
  // Original identifiers by dense index; empty for logs loaded from disk.
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;

  bool sliced() const { return slice_count > 0; }
  // [begin, end) positions of each slice in `interactions`.
  std::vector<std::pair<std::size_t, std::size_t>> slice_ranges() const;
};

// Slices [0, T-3] train, T-2 validation, T-1 test.
struct SliceSplit {
  std::uint32_t train_first = 0;
  std::uint32_t train_last = 0;
  std::uint32_t valid_slice = 0;
  std::uint32_t test_slice = 0;

  bool is_train(std::uint32_t s) const { return s >= train_first && s <= train_last; }
};

// Tab-separated `user<TAB>item<TAB>timestamp`; '#' lines and blank lines skipped.
std::vector<RawInteraction> parse_triplets(std::istream& in);
std::vector<RawInteraction> read_triplets(const std::string& path);

// Drops users/items with fewer than min_interactions interactions, repeated
// until no count falls below the threshold, then re-indexes densely in order
// of first appearance.
InteractionLog filter_and_index(std::vector<RawInteraction> raw, std::uint32_t min_interactions);

InteractionLog ingest(const std::string& path, std::uint32_t min_interactions);

// slice(t) = floor((t - t_min) / dT), dT = ceil((t_max - t_min + 1) / T).
InteractionLog assign_slices(InteractionLog log, std::uint32_t slice_count);

SliceSplit split(const InteractionLog& log);
SliceSplit split(std::uint32_t slice_count);

inline constexpr int kPreparedFormatVersion = 1;

// interactions.bin (u32 user, u32 item, i64 timestamp, little-endian) and
// manifest.json.
void write_prepared(const InteractionLog& log, const std::string& dir);
InteractionLog read_prepared(const std::string& dir);

}  // namespace dualsr
