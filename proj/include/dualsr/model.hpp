#pragma once

// Dual dynamic representation model over time-sliced interaction graphs.
//
// Per history slice s, active users and items enter the slice graph with input
// features (ID embeddings in slice 0, previous cross-slice states afterwards),
// are propagated L times by the normalized adjacency, the L+1 layer outputs are
// fused per node, and a cross-slice GRU folds the fused vector into the node's
// running state. Nodes absent from a slice keep their previous state. The
// predictor is a 3-layer MLP over [h_u, h_i, e_u, e_i] at the last history slice.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dualsr/autodiff.hpp"
#include "dualsr/dataset.hpp"
#include "dualsr/graphs.hpp"
#include "dualsr/rng.hpp"
#include "dualsr/tpp.hpp"

namespace dualsr {

enum class FusionMode { gru_per_side, gru_shared, concat, last_layer, mean_pool };
enum class GraphMode { time_sliced, global, last_only, none };
enum class SideMode { both, user_only, item_only };
enum class SliceInput { chained, embedding };

std::string to_string(FusionMode m);
std::string to_string(GraphMode m);
std::string to_string(SideMode m);
std::string to_string(SliceInput m);
FusionMode parse_fusion_mode(const std::string& s);
GraphMode parse_graph_mode(const std::string& s);
SideMode parse_side_mode(const std::string& s);
SliceInput parse_slice_input(const std::string& s);

struct DropoutSites {
  bool propagation = false;
  bool gru = false;
  bool mlp = true;
};

struct ModelConfig {
  std::size_t dim = 16;
  std::size_t layers = 2;
  FusionMode fusion = FusionMode::gru_per_side;
  GraphMode graph = GraphMode::time_sliced;
  bool slice_rnn = true;
  bool concat_id = true;
  SideMode side = SideMode::both;
  SliceInput slice_input = SliceInput::chained;
  double dropout = 0.1;
  DropoutSites dropout_sites;

  void validate() const;
};

struct GruIds {
  ParameterSet::Id w_z, u_z, b_z;
  ParameterSet::Id w_r, u_r, b_r;
  ParameterSet::Id w_h, u_h, b_h;
};

struct LinearIds {
  ParameterSet::Id w, b;
};

class Model {
 public:
  Model(ModelConfig config, std::uint32_t num_users, std::uint32_t num_items, Rng init_rng);

  const ModelConfig& config() const { return config_; }
  std::uint32_t num_users() const { return num_users_; }
  std::uint32_t num_items() const { return num_items_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  ParameterSet::Id user_embedding() const { return user_emb_; }
  ParameterSet::Id item_embedding() const { return item_emb_; }
  // Layer-fusion GRU (or concat projection) per side; identical ids when shared.
  const std::optional<GruIds>& fuse_gru(bool user) const { return user ? fuse_user_ : fuse_item_; }
  const std::optional<LinearIds>& fuse_projection(bool user) const { return user ? proj_user_ : proj_item_; }
  const std::optional<GruIds>& slice_gru(bool user) const { return user ? slice_user_ : slice_item_; }
  const std::vector<LinearIds>& mlp() const { return mlp_; }
  const TppParamIds& tpp() const { return tpp_; }
  std::size_t mlp_input_width() const;

 private:
  GruIds add_gru(const std::string& prefix, std::size_t in, Rng& rng);
  LinearIds add_linear(const std::string& prefix, std::size_t in, std::size_t out, Rng& rng);

  ModelConfig config_;
  std::uint32_t num_users_;
  std::uint32_t num_items_;
  ParameterSet params_;
  ParameterSet::Id user_emb_ = 0, item_emb_ = 0;
  std::optional<GruIds> fuse_user_, fuse_item_;
  std::optional<LinearIds> proj_user_, proj_item_;
  std::optional<GruIds> slice_user_, slice_item_;
  std::vector<LinearIds> mlp_;
  TppParamIds tpp_;
};

// Per-tape parameter leaves, created on first use.
class BoundParams {
 public:
  BoundParams(Tape& tape, ParameterSet& params) : tape_(tape), mutable_(&params), params_(&params) {}
  BoundParams(Tape& tape, const ParameterSet& params) : tape_(tape), params_(&params) {}

  Var operator()(ParameterSet::Id id);
  Tape& tape() { return tape_; }
  // Mutable parameters when gradients flow; nullptr for a frozen snapshot.
  ParameterSet* mutable_params() { return mutable_; }
  const ParameterSet& params() const { return *params_; }

 private:
  Tape& tape_;
  ParameterSet* mutable_ = nullptr;
  const ParameterSet* params_;
  std::vector<Var> cache_;
};

// Graph inputs for a model configuration: per-slice graphs plus, depending on
// the graph mode, cumulative union graphs or neighbor-mean operators.
struct GraphInputs {
  std::vector<SliceGraph> slices;
  std::vector<SliceGraph> cumulative;
  std::vector<CsrMatrix> neighbor_mean;
};

GraphInputs prepare_graph_inputs(const InteractionLog& log, const ModelConfig& config);

struct ForwardOptions {
  bool training = false;
  Rng* dropout_rng = nullptr;
};

struct SliceStates {
  std::vector<Var> user;  // per slice, num_users x d
  std::vector<Var> item;  // per slice, num_items x d
  std::vector<std::vector<std::uint8_t>> user_active;
  std::vector<std::vector<std::uint8_t>> item_active;
  Var user_embedding;
  Var item_embedding;

  std::size_t num_slices() const { return user.size(); }
};

// [X0, X1, ..., XL] with X_{l+1} = A_hat * X_l.
std::vector<Var> propagate_slice(const SliceGraph& graph, Var x0, std::size_t layers);

// One GRU step: z = sig(xWz + hUz + bz), r = sig(xWr + hUr + br),
// c = tanh(xWh + (r*h)Uh + bh), h' = (1 - z)*h + z*c.
Var gru_cell(BoundParams& bound, const GruIds& ids, Var x, Var h);

// Fuses the layer outputs of one side into a single matrix.
Var fuse_layers(BoundParams& bound, const Model& model, std::span<const Var> layers, bool user_side);

// States for slices 0..last_slice.
SliceStates forward_all(BoundParams& bound, const Model& model, const GraphInputs& graphs, std::uint32_t last_slice,
                        const ForwardOptions& options = {});

// Logits for (users[k], items[k]) using states at history slice slices[k].
Var predict_logits(BoundParams& bound, const Model& model, const SliceStates& states,
                   std::span<const std::uint32_t> users, std::span<const std::uint32_t> items,
                   std::span<const std::uint32_t> slices, const ForwardOptions& options = {});

Var predict(BoundParams& bound, const Model& model, const SliceStates& states, std::span<const std::uint32_t> users,
            std::span<const std::uint32_t> items, std::span<const std::uint32_t> slices,
            const ForwardOptions& options = {});

}  // namespace dualsr
