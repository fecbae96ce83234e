#include "dualsr/graphs.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <tuple>

namespace dualsr {

namespace {

std::optional<std::uint32_t> find_local(const std::vector<std::uint32_t>& sorted, std::uint32_t global) {
  auto it = std::lower_bound(sorted.begin(), sorted.end(), global);
  if (it == sorted.end() || *it != global) return std::nullopt;
  return static_cast<std::uint32_t>(it - sorted.begin());
}

}  // namespace

std::optional<std::uint32_t> SliceGraph::local_user(std::uint32_t global) const {
  return find_local(active_users, global);
}

std::optional<std::uint32_t> SliceGraph::local_item(std::uint32_t global) const {
  return find_local(active_items, global);
}

SliceGraph build_graph(std::uint32_t slice_index, std::span<const std::pair<std::uint32_t, std::uint32_t>> pairs) {
  SliceGraph g;
  g.slice_index = slice_index;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> uniq(pairs.begin(), pairs.end());
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  for (const auto& [u, i] : uniq) {
    g.active_users.push_back(u);
    g.active_items.push_back(i);
  }
  for (auto* v : {&g.active_users, &g.active_items}) {
    std::sort(v->begin(), v->end());
    v->erase(std::unique(v->begin(), v->end()), v->end());
  }
  const auto mu = static_cast<std::uint32_t>(g.num_users());
  const std::size_t n = g.num_nodes();
  std::vector<double> degree(n, 0.0);
  g.edges.reserve(uniq.size());
  for (const auto& [u, i] : uniq) {
    const std::uint32_t lu = *g.local_user(u);
    const std::uint32_t li = *g.local_item(i);
    g.edges.emplace_back(lu, li);
    degree[lu] += 1.0;
    degree[mu + li] += 1.0;
  }
  std::vector<std::tuple<std::uint32_t, std::uint32_t, double>> triplets;
  triplets.reserve(2 * g.edges.size());
  for (const auto& [lu, li] : g.edges) {
    const std::uint32_t a = lu, b = mu + li;
    const double w = 1.0 / std::sqrt(degree[a] * degree[b]);
    triplets.emplace_back(a, b, w);
    triplets.emplace_back(b, a, w);
  }
  g.norm_adjacency = CsrMatrix::from_triplets(n, n, std::move(triplets));
  return g;
}

std::vector<SliceGraph> build_slice_graphs(const InteractionLog& log) {
  if (!log.sliced()) throw ContractError("build_slice_graphs: slices not assigned");
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> per_slice(log.slice_count);
  for (const auto& it : log.interactions) per_slice[it.slice].emplace_back(it.user, it.item);
  std::vector<SliceGraph> graphs;
  graphs.reserve(log.slice_count);
  for (std::uint32_t s = 0; s < log.slice_count; ++s) graphs.push_back(build_graph(s, per_slice[s]));
  return graphs;
}

SliceGraph build_union_graph(const InteractionLog& log, std::uint32_t first, std::uint32_t last) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  for (const auto& it : log.interactions)
    if (it.slice >= first && it.slice <= last) pairs.emplace_back(it.user, it.item);
  return build_graph(last, pairs);
}

CsrMatrix neighbor_mean_operator(const SliceGraph& g) {
  const auto mu = static_cast<std::uint32_t>(g.num_users());
  std::vector<double> degree(g.num_nodes(), 0.0);
  for (const auto& [lu, li] : g.edges) {
    degree[lu] += 1.0;
    degree[mu + li] += 1.0;
  }
  std::vector<std::tuple<std::uint32_t, std::uint32_t, double>> triplets;
  for (const auto& [lu, li] : g.edges) {
    const std::uint32_t a = lu, b = mu + li;
    triplets.emplace_back(a, b, 1.0 / degree[a]);
    triplets.emplace_back(b, a, 1.0 / degree[b]);
  }
  return CsrMatrix::from_triplets(g.num_nodes(), g.num_nodes(), std::move(triplets));
}

Matrix spmm(const SliceGraph& g, const Matrix& x) {
  if (x.rows != g.num_nodes())
    throw DimensionError("spmm: graph has " + std::to_string(g.num_nodes()) + " nodes, features " + x.shape_str());
  return g.norm_adjacency.multiply(x);
}

Var spmm(const SliceGraph& g, Var x) {
  if (x.rows() != g.num_nodes())
    throw DimensionError("spmm: graph has " + std::to_string(g.num_nodes()) + " nodes, features " +
                         x.value().shape_str());
  return ad::spmm(g.norm_adjacency, x);
}

void dump_graphs(std::ostream& out, std::span<const SliceGraph> graphs) {
  out << std::setprecision(17);
  for (const auto& g : graphs) {
    const auto mu = static_cast<std::uint32_t>(g.num_users());
    for (const auto& [lu, li] : g.edges) {
      double w = 0.0;
      const auto& a = g.norm_adjacency;
      for (std::uint32_t k = a.row_ptr[lu]; k < a.row_ptr[lu + 1]; ++k)
        if (a.col_idx[k] == mu + li) w = a.values[k];
      out << g.slice_index << '\t' << g.active_users[lu] << '\t' << g.active_items[li] << '\t' << w << '\n';
    }
  }
}

}  // namespace dualsr
