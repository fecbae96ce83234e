#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

#include "dualsr/autodiff.hpp"
#include "dualsr/dataset.hpp"
#include "dualsr/matrix.hpp"

namespace dualsr {

// Bipartite user-item graph of one time slice. Local node order: active users
// (sorted by global index) occupy rows [0, Ms), active items rows [Ms, Ms+Ns).
struct SliceGraph {
  std::uint32_t slice_index = 0;
  std::vector<std::uint32_t> active_users;
  std::vector<std::uint32_t> active_items;
  // Unique (local user, local item) pairs; the item index is local to the item
  // block, i.e. node id = num_users() + item.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  // D^-1/2 A D^-1/2 over all Ms+Ns nodes, zero diagonal.
  CsrMatrix norm_adjacency;

  std::size_t num_users() const { return active_users.size(); }
  std::size_t num_items() const { return active_items.size(); }
  std::size_t num_nodes() const { return active_users.size() + active_items.size(); }
  bool empty() const { return num_nodes() == 0; }

  // Global -> local index maps (binary search over the sorted active lists).
  std::optional<std::uint32_t> local_user(std::uint32_t global) const;
  std::optional<std::uint32_t> local_item(std::uint32_t global) const;
};

// Graph from (global user, global item) pairs; duplicates collapse to one edge.
SliceGraph build_graph(std::uint32_t slice_index, std::span<const std::pair<std::uint32_t, std::uint32_t>> pairs);

// One graph per slice (length T), empty slices included.
std::vector<SliceGraph> build_slice_graphs(const InteractionLog& log);

// Union of the interactions in slices [first, last] as a single graph indexed
// as slice `last`.
SliceGraph build_union_graph(const InteractionLog& log, std::uint32_t first, std::uint32_t last);

// Row-normalized D^-1 A built from the edge list only; used by the graph-free
// variant that averages neighbor features without the normalized adjacency.
CsrMatrix neighbor_mean_operator(const SliceGraph& g);

Matrix spmm(const SliceGraph& g, const Matrix& x);
Var spmm(const SliceGraph& g, Var x);

// Debug dump: `s<TAB>u<TAB>i<TAB>weight` per edge with global ids.
void dump_graphs(std::ostream& out, std::span<const SliceGraph> graphs);

}  // namespace dualsr
