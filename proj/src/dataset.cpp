#include "dualsr/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "dualsr/binary_io.hpp"
#include "dualsr/errors.hpp"

namespace dualsr {

std::vector<std::pair<std::size_t, std::size_t>> InteractionLog::slice_ranges() const {
  std::vector<std::pair<std::size_t, std::size_t>> ranges(slice_count, {0, 0});
  std::size_t pos = 0;
  for (std::uint32_t s = 0; s < slice_count; ++s) {
    const std::size_t begin = pos;
    while (pos < interactions.size() && interactions[pos].slice == s) ++pos;
    ranges[s] = {begin, pos};
  }
  return ranges;
}

std::vector<RawInteraction> parse_triplets(std::istream& in) {
  std::vector<RawInteraction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos)
      throw ParseError("expected 3 tab-separated fields", line_no);
    RawInteraction r;
    r.user_id = line.substr(0, t1);
    r.item_id = line.substr(t1 + 1, t2 - t1 - 1);
    if (r.user_id.empty() || r.item_id.empty()) throw ParseError("empty user or item id", line_no);
    const char* first = line.data() + t2 + 1;
    const char* last = line.data() + line.size();
    auto [ptr, ec] = std::from_chars(first, last, r.timestamp);
    if (ec != std::errc() || ptr != last || first == last) throw ParseError("invalid timestamp", line_no);
    if (r.timestamp < 0) throw ParseError("negative timestamp", line_no);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RawInteraction> read_triplets(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return parse_triplets(in);
}

InteractionLog filter_and_index(std::vector<RawInteraction> raw, std::uint32_t min_interactions) {
  if (min_interactions < 1) throw ContractError("min_interactions must be >= 1");
  std::stable_sort(raw.begin(), raw.end(),
                   [](const RawInteraction& a, const RawInteraction& b) { return a.timestamp < b.timestamp; });

  // Intern ids first so the fixpoint loop works on integers.
  std::unordered_map<std::string, std::uint32_t> user_tmp, item_tmp;
  std::vector<std::uint32_t> ru(raw.size()), ri(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) {
    ru[k] = user_tmp.try_emplace(raw[k].user_id, static_cast<std::uint32_t>(user_tmp.size())).first->second;
    ri[k] = item_tmp.try_emplace(raw[k].item_id, static_cast<std::uint32_t>(item_tmp.size())).first->second;
  }
  std::vector<std::uint8_t> alive(raw.size(), 1);
  for (;;) {
    std::vector<std::uint32_t> uc(user_tmp.size(), 0), ic(item_tmp.size(), 0);
    for (std::size_t k = 0; k < raw.size(); ++k)
      if (alive[k]) ++uc[ru[k]], ++ic[ri[k]];
    bool changed = false;
    for (std::size_t k = 0; k < raw.size(); ++k) {
      if (alive[k] && (uc[ru[k]] < min_interactions || ic[ri[k]] < min_interactions)) {
        alive[k] = 0;
        changed = true;
      }
    }
    if (!changed) break;
  }

  InteractionLog log;
  log.min_interactions = min_interactions;
  std::unordered_map<std::string, std::uint32_t> users, items;
  for (std::size_t k = 0; k < raw.size(); ++k) {
    if (!alive[k]) continue;
    auto [uit, unew] = users.try_emplace(raw[k].user_id, static_cast<std::uint32_t>(users.size()));
    if (unew) log.user_ids.push_back(raw[k].user_id);
    auto [iit, inew] = items.try_emplace(raw[k].item_id, static_cast<std::uint32_t>(items.size()));
    if (inew) log.item_ids.push_back(raw[k].item_id);
    log.interactions.push_back(Interaction{uit->second, iit->second, raw[k].timestamp, 0});
  }
  if (log.interactions.empty()) throw EmptyDataError("no interactions left after filtering");
  log.num_users = static_cast<std::uint32_t>(users.size());
  log.num_items = static_cast<std::uint32_t>(items.size());
  return log;
}

InteractionLog ingest(const std::string& path, std::uint32_t min_interactions) {
  return filter_and_index(read_triplets(path), min_interactions);
}

InteractionLog assign_slices(InteractionLog log, std::uint32_t slice_count) {
  if (slice_count < 3) throw ContractError("slice count must be >= 3");
  if (log.interactions.empty()) throw EmptyDataError("cannot slice an empty log");
  auto [lo, hi] = std::minmax_element(log.interactions.begin(), log.interactions.end(),
                                      [](const Interaction& a, const Interaction& b) { return a.timestamp < b.timestamp; });
  const std::int64_t t_min = lo->timestamp;
  const std::int64_t t_max = hi->timestamp;
  if (t_min == t_max) throw DegenerateSpanError("all timestamps are equal; cannot segment the timeline");
  const std::int64_t span = t_max - t_min + 1;
  const std::int64_t dt = (span + slice_count - 1) / slice_count;
  log.slice_count = slice_count;
  log.slice_length = dt;
  log.t_min = t_min;
  for (auto& it : log.interactions) it.slice = static_cast<std::uint32_t>((it.timestamp - t_min) / dt);
  return log;
}

SliceSplit split(std::uint32_t slice_count) {
  if (slice_count < 3) throw ContractError("split needs at least 3 slices");
  return SliceSplit{0, slice_count - 3, slice_count - 2, slice_count - 1};
}

SliceSplit split(const InteractionLog& log) { return split(log.slice_count); }

void write_prepared(const InteractionLog& log, const std::string& dir) {
  if (!log.sliced()) throw ContractError("write_prepared: log has no slice assignment");
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir + "/interactions.bin", std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + dir + "/interactions.bin");
    for (const auto& it : log.interactions) {
      io::write_le<std::uint32_t>(out, it.user);
      io::write_le<std::uint32_t>(out, it.item);
      io::write_le<std::int64_t>(out, it.timestamp);
    }
  }
  nlohmann::json manifest = {
      {"format_version", kPreparedFormatVersion},
      {"num_users", log.num_users},
      {"num_items", log.num_items},
      {"num_interactions", log.interactions.size()},
      {"slice_count", log.slice_count},
      {"slice_length", log.slice_length},
      {"t_min", log.t_min},
      {"min_interactions", log.min_interactions},
  };
  std::ofstream out(dir + "/manifest.json", std::ios::trunc);
  out << manifest.dump(2) << "\n";
}

InteractionLog read_prepared(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.json");
  if (!mf) throw std::runtime_error("cannot open " + dir + "/manifest.json");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("manifest.json: ") + e.what());
  }
  if (manifest.value("format_version", 0) != kPreparedFormatVersion)
    throw ParseError("manifest.json: unsupported format_version");

  InteractionLog log;
  log.num_users = manifest.at("num_users").get<std::uint32_t>();
  log.num_items = manifest.at("num_items").get<std::uint32_t>();
  log.slice_count = manifest.at("slice_count").get<std::uint32_t>();
  log.slice_length = manifest.at("slice_length").get<std::int64_t>();
  log.t_min = manifest.at("t_min").get<std::int64_t>();
  log.min_interactions = manifest.at("min_interactions").get<std::uint32_t>();
  const auto count = manifest.at("num_interactions").get<std::size_t>();
  if (log.slice_length <= 0 || log.slice_count < 3) throw ParseError("manifest.json: invalid slicing");

  std::ifstream in(dir + "/interactions.bin", std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + dir + "/interactions.bin");
  log.interactions.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Interaction it;
    it.user = io::read_le<std::uint32_t>(in);
    it.item = io::read_le<std::uint32_t>(in);
    it.timestamp = io::read_le<std::int64_t>(in);
    if (it.user >= log.num_users || it.item >= log.num_items || it.timestamp < log.t_min)
      throw ParseError("interactions.bin: record out of range", k + 1);
    it.slice = static_cast<std::uint32_t>((it.timestamp - log.t_min) / log.slice_length);
    if (it.slice >= log.slice_count) throw ParseError("interactions.bin: timestamp beyond last slice", k + 1);
    log.interactions.push_back(it);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError("interactions.bin: trailing bytes");
  return log;
}

}  // namespace dualsr
