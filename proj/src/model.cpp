#include "dualsr/model.hpp"

#include <array>
#include <cmath>
#include <numeric>

namespace dualsr {

namespace {

template <typename E>
struct NamedEnum {
  E value;
  const char* name;
};

constexpr NamedEnum<FusionMode> kFusionNames[] = {{FusionMode::gru_per_side, "gru_per_side"},
                                                  {FusionMode::gru_shared, "gru_shared"},
                                                  {FusionMode::concat, "concat"},
                                                  {FusionMode::last_layer, "last_layer"},
                                                  {FusionMode::mean_pool, "mean_pool"}};
constexpr NamedEnum<GraphMode> kGraphNames[] = {{GraphMode::time_sliced, "time_sliced"},
                                                {GraphMode::global, "global"},
                                                {GraphMode::last_only, "last_only"},
                                                {GraphMode::none, "none"}};
constexpr NamedEnum<SideMode> kSideNames[] = {
    {SideMode::both, "both"}, {SideMode::user_only, "user_only"}, {SideMode::item_only, "item_only"}};
constexpr NamedEnum<SliceInput> kSliceInputNames[] = {{SliceInput::chained, "chained"},
                                                      {SliceInput::embedding, "embedding"}};

template <typename E, std::size_t N>
std::string name_of(const NamedEnum<E> (&table)[N], E v) {
  for (const auto& e : table)
    if (e.value == v) return e.name;
  return "?";
}

template <typename E, std::size_t N>
E parse_named(const NamedEnum<E> (&table)[N], const std::string& s, const char* what) {
  std::string options;
  for (const auto& e : table) {
    if (s == e.name) return e.value;
    options += options.empty() ? "" : ", ";
    options += e.name;
  }
  throw ConfigError(std::string("unknown ") + what + " '" + s + "' (expected one of: " + options + ")");
}

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data) v = rng.uniform(-bound, bound);
  return m;
}

std::vector<std::uint32_t> iota_rows(std::size_t begin, std::size_t end) {
  std::vector<std::uint32_t> r(end - begin);
  std::iota(r.begin(), r.end(), static_cast<std::uint32_t>(begin));
  return r;
}

Var maybe_dropout(Var x, bool site, const ModelConfig& cfg, const ForwardOptions& opt) {
  if (!site || !opt.training || cfg.dropout == 0.0) return x;
  if (!opt.dropout_rng) throw ContractError("training forward with dropout needs an rng");
  return ad::dropout(x, cfg.dropout, true, *opt.dropout_rng);
}

}  // namespace

std::string to_string(FusionMode m) { return name_of(kFusionNames, m); }
std::string to_string(GraphMode m) { return name_of(kGraphNames, m); }
std::string to_string(SideMode m) { return name_of(kSideNames, m); }
std::string to_string(SliceInput m) { return name_of(kSliceInputNames, m); }
FusionMode parse_fusion_mode(const std::string& s) { return parse_named(kFusionNames, s, "fusion mode"); }
GraphMode parse_graph_mode(const std::string& s) { return parse_named(kGraphNames, s, "graph mode"); }
SideMode parse_side_mode(const std::string& s) { return parse_named(kSideNames, s, "side mode"); }
SliceInput parse_slice_input(const std::string& s) { return parse_named(kSliceInputNames, s, "slice input"); }

void ModelConfig::validate() const {
  if (dim < 1) throw ConfigError("dim must be >= 1");
  if (layers < 1) throw ConfigError("layers must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
}

// ---------------------------------------------------------------------------

Model::Model(ModelConfig config, std::uint32_t num_users, std::uint32_t num_items, Rng init_rng)
    : config_(config), num_users_(num_users), num_items_(num_items) {
  config_.validate();
  if (num_users == 0 || num_items == 0) throw ContractError("model needs at least one user and one item");
  const std::size_t d = config_.dim;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  Rng rng = init_rng.split("model");

  user_emb_ = params_.add("emb.user", uniform_matrix(num_users, d, bound, rng));
  item_emb_ = params_.add("emb.item", uniform_matrix(num_items, d, bound, rng));

  const bool uses_fusion = config_.graph != GraphMode::none;
  if (uses_fusion) {
    switch (config_.fusion) {
      case FusionMode::gru_per_side:
        fuse_user_ = add_gru("fuse.user", d, rng);
        fuse_item_ = add_gru("fuse.item", d, rng);
        break;
      case FusionMode::gru_shared:
        fuse_user_ = fuse_item_ = add_gru("fuse.shared", d, rng);
        break;
      case FusionMode::concat:
        proj_user_ = add_linear("fuse.user.proj", (config_.layers + 1) * d, d, rng);
        proj_item_ = add_linear("fuse.item.proj", (config_.layers + 1) * d, d, rng);
        break;
      case FusionMode::last_layer:
      case FusionMode::mean_pool:
        break;
    }
  }

  const bool sequential = config_.graph == GraphMode::time_sliced || config_.graph == GraphMode::none;
  if (sequential && config_.slice_rnn) {
    if (config_.fusion == FusionMode::gru_shared) {
      slice_user_ = slice_item_ = add_gru("slice.shared", d, rng);
    } else {
      slice_user_ = add_gru("slice.user", d, rng);
      slice_item_ = add_gru("slice.item", d, rng);
    }
  }

  const std::size_t in = mlp_input_width();
  mlp_.push_back(add_linear("mlp.0", in, 2 * d, rng));
  mlp_.push_back(add_linear("mlp.1", 2 * d, d, rng));
  mlp_.push_back(add_linear("mlp.2", d, 1, rng));

  Rng tpp_rng = init_rng.split("tpp");
  tpp_ = register_tpp_params(params_, d, tpp_rng);
}

std::size_t Model::mlp_input_width() const {
  std::size_t parts = config_.side == SideMode::both ? 2 : 1;
  if (config_.concat_id) parts += 2;
  return parts * config_.dim;
}

GruIds Model::add_gru(const std::string& prefix, std::size_t in, Rng& rng) {
  const std::size_t d = config_.dim;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  GruIds g{};
  g.w_z = params_.add(prefix + ".W_z", uniform_matrix(in, d, bound, rng));
  g.u_z = params_.add(prefix + ".U_z", uniform_matrix(d, d, bound, rng));
  g.b_z = params_.add(prefix + ".b_z", Matrix(1, d));
  g.w_r = params_.add(prefix + ".W_r", uniform_matrix(in, d, bound, rng));
  g.u_r = params_.add(prefix + ".U_r", uniform_matrix(d, d, bound, rng));
  g.b_r = params_.add(prefix + ".b_r", Matrix(1, d));
  g.w_h = params_.add(prefix + ".W_h", uniform_matrix(in, d, bound, rng));
  g.u_h = params_.add(prefix + ".U_h", uniform_matrix(d, d, bound, rng));
  g.b_h = params_.add(prefix + ".b_h", Matrix(1, d));
  return g;
}

LinearIds Model::add_linear(const std::string& prefix, std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(config_.dim));
  LinearIds l{};
  l.w = params_.add(prefix + ".w", uniform_matrix(in, out, bound, rng));
  l.b = params_.add(prefix + ".b", Matrix(1, out));
  return l;
}

// ---------------------------------------------------------------------------

Var BoundParams::operator()(ParameterSet::Id id) {
  if (cache_.size() <= id) cache_.resize(params_->size());
  if (!cache_[id].valid()) {
    if (mutable_ && tape_.grad_enabled())
      cache_[id] = tape_.param((*mutable_)[id]);
    else
      cache_[id] = tape_.constant((*params_)[id].value);
  }
  return cache_[id];
}

GraphInputs prepare_graph_inputs(const InteractionLog& log, const ModelConfig& config) {
  GraphInputs in;
  in.slices = build_slice_graphs(log);
  if (config.graph == GraphMode::global) {
    for (std::uint32_t s = 0; s < log.slice_count; ++s) in.cumulative.push_back(build_union_graph(log, 0, s));
  }
  if (config.graph == GraphMode::none) {
    for (const auto& g : in.slices) in.neighbor_mean.push_back(neighbor_mean_operator(g));
  }
  return in;
}

std::vector<Var> propagate_slice(const SliceGraph& graph, Var x0, std::size_t layers) {
  std::vector<Var> out{x0};
  for (std::size_t l = 0; l < layers; ++l) out.push_back(spmm(graph, out.back()));
  return out;
}

Var gru_cell(BoundParams& p, const GruIds& g, Var x, Var h) {
  using namespace ad;
  Var z = sigmoid(add(add(matmul(x, p(g.w_z)), matmul(h, p(g.u_z))), p(g.b_z)));
  Var r = sigmoid(add(add(matmul(x, p(g.w_r)), matmul(h, p(g.u_r))), p(g.b_r)));
  Var c = tanh(add(add(matmul(x, p(g.w_h)), matmul(mul(r, h), p(g.u_h))), p(g.b_h)));
  return add(h, mul(z, sub(c, h)));
}

Var fuse_layers(BoundParams& p, const Model& model, std::span<const Var> layers, bool user_side) {
  if (layers.empty()) throw ContractError("fuse_layers: no layers");
  const ModelConfig& cfg = model.config();
  switch (cfg.fusion) {
    case FusionMode::gru_per_side:
    case FusionMode::gru_shared: {
      const GruIds& g = *model.fuse_gru(user_side);
      Var h = p.tape().constant(Matrix(layers[0].rows(), cfg.dim));
      for (const Var& x : layers) h = gru_cell(p, g, x, h);
      return h;
    }
    case FusionMode::concat: {
      const LinearIds& l = *model.fuse_projection(user_side);
      return ad::linear(ad::concat_cols(layers), p(l.w), p(l.b));
    }
    case FusionMode::last_layer:
      return layers.back();
    case FusionMode::mean_pool:
      return ad::mean_of(layers);
  }
  throw ConfigError("fuse_layers: unknown fusion mode");
}

SliceStates forward_all(BoundParams& p, const Model& model, const GraphInputs& graphs, std::uint32_t last_slice,
                        const ForwardOptions& opt) {
  const ModelConfig& cfg = model.config();
  if (graphs.slices.empty()) throw ContractError("forward_all: zero history slices");
  if (last_slice >= graphs.slices.size()) throw ContractError("forward_all: last_slice beyond available graphs");
  Tape& tape = p.tape();
  const std::size_t M = model.num_users(), N = model.num_items(), d = cfg.dim;
  const bool fresh = cfg.graph == GraphMode::global || cfg.graph == GraphMode::last_only;

  SliceStates st;
  st.user_embedding = p(model.user_embedding());
  st.item_embedding = p(model.item_embedding());
  const Var zero_u = tape.constant(Matrix(M, d));
  const Var zero_i = tape.constant(Matrix(N, d));
  Var prev_u = zero_u, prev_i = zero_i;
  std::vector<std::uint8_t> seen_u(M, 0), seen_i(N, 0);
  // Running sums and counts when slice states are averaged instead of recurred.
  Var sum_u = zero_u, sum_i = zero_i;
  std::vector<double> count_u(M, 0.0), count_i(N, 0.0);

  for (std::uint32_t s = 0; s <= last_slice; ++s) {
    const SliceGraph& g = cfg.graph == GraphMode::global ? graphs.cumulative.at(s) : graphs.slices[s];
    std::vector<std::uint8_t> act_u(M, 0), act_i(N, 0);
    for (auto u : g.active_users) act_u[u] = 1;
    for (auto i : g.active_items) act_i[i] = 1;
    st.user_active.push_back(act_u);
    st.item_active.push_back(act_i);

    if (g.empty()) {
      st.user.push_back(fresh ? zero_u : prev_u);
      st.item.push_back(fresh ? zero_i : prev_i);
      prev_u = st.user.back();
      prev_i = st.item.back();
      continue;
    }

    const auto& au = g.active_users;
    const auto& ai = g.active_items;
    Var x0_u = ad::gather_rows(st.user_embedding, au);
    Var x0_i = ad::gather_rows(st.item_embedding, ai);
    if (!fresh && cfg.slice_input == SliceInput::chained && s > 0) {
      std::vector<std::uint8_t> take_u(au.size()), take_i(ai.size());
      for (std::size_t k = 0; k < au.size(); ++k) take_u[k] = seen_u[au[k]];
      for (std::size_t k = 0; k < ai.size(); ++k) take_i[k] = seen_i[ai[k]];
      x0_u = ad::select_rows(ad::gather_rows(prev_u, au), x0_u, take_u);
      x0_i = ad::select_rows(ad::gather_rows(prev_i, ai), x0_i, take_i);
    }
    const std::array<Var, 2> x0_parts{x0_u, x0_i};
    Var x0 = ad::vstack(x0_parts);
    const auto user_rows = iota_rows(0, au.size());
    const auto item_rows = iota_rows(au.size(), g.num_nodes());

    Var fused_u, fused_i;
    if (cfg.graph == GraphMode::none) {
      Var mixed = ad::spmm(graphs.neighbor_mean.at(s), x0);
      fused_u = ad::gather_rows(mixed, user_rows);
      fused_i = ad::gather_rows(mixed, item_rows);
    } else {
      std::vector<Var> layers = propagate_slice(g, x0, cfg.layers);
      for (std::size_t l = 1; l < layers.size(); ++l)
        layers[l] = maybe_dropout(layers[l], cfg.dropout_sites.propagation, cfg, opt);
      std::vector<Var> lu, li;
      for (const Var& x : layers) {
        lu.push_back(ad::gather_rows(x, user_rows));
        li.push_back(ad::gather_rows(x, item_rows));
      }
      fused_u = fuse_layers(p, model, lu, true);
      fused_i = fuse_layers(p, model, li, false);
    }
    fused_u = maybe_dropout(fused_u, cfg.dropout_sites.gru, cfg, opt);
    fused_i = maybe_dropout(fused_i, cfg.dropout_sites.gru, cfg, opt);

    Var state_u, state_i;
    if (fresh) {
      state_u = ad::scatter_rows(zero_u, au, fused_u);
      state_i = ad::scatter_rows(zero_i, ai, fused_i);
    } else if (cfg.slice_rnn) {
      Var hu = gru_cell(p, *model.slice_gru(true), fused_u, ad::gather_rows(prev_u, au));
      Var hi = gru_cell(p, *model.slice_gru(false), fused_i, ad::gather_rows(prev_i, ai));
      hu = maybe_dropout(hu, cfg.dropout_sites.gru, cfg, opt);
      hi = maybe_dropout(hi, cfg.dropout_sites.gru, cfg, opt);
      state_u = ad::scatter_rows(prev_u, au, hu);
      state_i = ad::scatter_rows(prev_i, ai, hi);
    } else {
      sum_u = ad::scatter_rows(sum_u, au, ad::add(ad::gather_rows(sum_u, au), fused_u));
      sum_i = ad::scatter_rows(sum_i, ai, ad::add(ad::gather_rows(sum_i, ai), fused_i));
      for (auto u : au) count_u[u] += 1.0;
      for (auto i : ai) count_i[i] += 1.0;
      std::vector<double> fu(M), fi(N);
      for (std::size_t k = 0; k < M; ++k) fu[k] = count_u[k] > 0 ? 1.0 / count_u[k] : 0.0;
      for (std::size_t k = 0; k < N; ++k) fi[k] = count_i[k] > 0 ? 1.0 / count_i[k] : 0.0;
      // Inactive rows are recomputed from unchanged sums and counts, so they
      // equal the previous state exactly.
      state_u = ad::select_rows(ad::scale_rows(sum_u, fu), prev_u, act_u);
      state_i = ad::select_rows(ad::scale_rows(sum_i, fi), prev_i, act_i);
    }
    for (auto u : au) seen_u[u] = 1;
    for (auto i : ai) seen_i[i] = 1;
    st.user.push_back(state_u);
    st.item.push_back(state_i);
    prev_u = state_u;
    prev_i = state_i;
  }
  return st;
}

Var predict_logits(BoundParams& p, const Model& model, const SliceStates& states, std::span<const std::uint32_t> users,
                   std::span<const std::uint32_t> items, std::span<const std::uint32_t> slices,
                   const ForwardOptions& opt) {
  const ModelConfig& cfg = model.config();
  if (users.size() != items.size() || users.size() != slices.size())
    throw DimensionError("predict: users/items/slices length mismatch");
  if (users.empty()) throw ContractError("predict: empty batch");
  const std::size_t M = model.num_users(), N = model.num_items();
  std::vector<std::uint32_t> urows(users.size()), irows(items.size());
  for (std::size_t k = 0; k < users.size(); ++k) {
    if (users[k] >= M) throw ContractError("predict: user index out of range");
    if (items[k] >= N) throw ContractError("predict: item index out of range");
    if (slices[k] >= states.num_slices()) throw ContractError("predict: history slice not computed");
    urows[k] = static_cast<std::uint32_t>(slices[k] * M + users[k]);
    irows[k] = static_cast<std::uint32_t>(slices[k] * N + items[k]);
  }
  std::vector<Var> parts;
  if (cfg.side != SideMode::item_only) parts.push_back(ad::gather_rows(ad::vstack(states.user), urows));
  if (cfg.side != SideMode::user_only) parts.push_back(ad::gather_rows(ad::vstack(states.item), irows));
  if (cfg.concat_id) {
    parts.push_back(ad::gather_rows(states.user_embedding, users));
    parts.push_back(ad::gather_rows(states.item_embedding, items));
  }
  Var x = parts.size() == 1 ? parts[0] : ad::concat_cols(parts);
  const auto& mlp = model.mlp();
  for (std::size_t l = 0; l < mlp.size(); ++l) {
    x = ad::linear(x, p(mlp[l].w), p(mlp[l].b));
    if (l + 1 < mlp.size()) x = maybe_dropout(ad::relu(x), cfg.dropout_sites.mlp, cfg, opt);
  }
  return x;
}

Var predict(BoundParams& p, const Model& model, const SliceStates& states, std::span<const std::uint32_t> users,
            std::span<const std::uint32_t> items, std::span<const std::uint32_t> slices, const ForwardOptions& opt) {
  return ad::sigmoid(predict_logits(p, model, states, users, items, slices, opt));
}

}  // namespace dualsr
