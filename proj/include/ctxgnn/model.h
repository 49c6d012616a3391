#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ctxgnn/graph.h"
#include "ctxgnn/sampler.h"
#include "ctxgnn/tensor.h"

namespace ctxgnn {

enum class ItemEncoderMode { kTransductiveShallow, kInductiveFeature };
enum class Precision { kFloat32, kFloat64 };

struct ModelConfig {
  std::size_t hidden_dim = 32;
  std::size_t num_layers = 2;
  ItemEncoderMode item_encoder_mode = ItemEncoderMode::kTransductiveShallow;
  std::size_t fusion_hidden = 32;
  Precision precision = Precision::kFloat32;
  // Ablations. Both injections stay active; only the scoring heads change.
  bool pair_only = false;   // local items only (no tower fallback)
  bool tower_only = false;  // every item through the tower, no fusion offset

  void Validate() const;
};

// Process-wide call counters used by tests to check the single-pass and
// no-shallow-read properties.
struct Instrumentation {
  std::atomic<std::uint64_t> gnn_forward_calls{0};
  std::atomic<std::uint64_t> shallow_item_reads{0};

  void Reset() {
    gnn_forward_calls = 0;
    shallow_item_reads = 0;
  }
};
Instrumentation& instrumentation();

// All learnable state as an ordered list of named tensors. Names encode the
// role, e.g. "encoder.user.w1", "layer1.msg.rev_buys", "shallow_items".
template <typename Real>
struct ModelParams {
  std::vector<std::string> names;
  std::vector<Tensor<Real>> tensors;

  std::size_t Find(const std::string& name) const;
  const Tensor<Real>& at(const std::string& name) const { return tensors[Find(name)]; }
  Tensor<Real>& at(const std::string& name) { return tensors[Find(name)]; }
  ModelParams ZerosLike() const;
  bool AllFinite() const;
};

enum class ScoreSource { kPair, kTower };

struct ScoredItem {
  NodeId item;
  double score;
  ScoreSource source;

  friend bool operator==(const ScoredItem&, const ScoredItem&) = default;
};

// GNN readout for one subgraph.
template <typename Real>
struct GnnOutput {
  Tensor<Real> user;   // [d]
  Tensor<Real> items;  // [local item count x d], rows follow sub.nodes[item_type]
};

// Item-side tower embeddings for an id list, with what backward needs.
template <typename Real>
struct TowerEmbeddings {
  std::vector<NodeId> ids;
  Tensor<Real> out;     // [n x d]
  Tensor<Real> input;   // raw item features (inductive mode)
  Tensor<Real> hidden;  // inductive encoder hidden layer
};

// Intermediates of one full forward pass over a subgraph.
template <typename Real>
struct ForwardCache {
  std::vector<Tensor<Real>> features;            // per node type
  std::vector<Tensor<Real>> encoder_hidden;      // per node type
  TowerEmbeddings<Real> local_items;             // injected item embeddings
  std::vector<std::vector<Tensor<Real>>> h;      // [layer 0..k][node type]
  std::vector<std::vector<Tensor<Real>>> agg;    // [layer 1..k][directed edge type]
  GnnOutput<Real> readout;
  Tensor<Real> fusion_input;                     // [1 x d]
  Tensor<Real> fusion_hidden;                    // [1 x fusion_hidden]
  Real offset = 0;
};

template <typename Real>
class ContextGnn {
 public:
  ContextGnn(const TemporalHeteroGraph& graph, ModelConfig config);

  const ModelConfig& config() const { return config_; }
  const TemporalHeteroGraph& graph() const { return *graph_; }

  // Names and shapes in canonical order, initialized from a seeded RNG.
  ModelParams<Real> Init(std::uint64_t seed) const;

  // Throws ShapeMismatch / MissingEncoder if params do not fit this graph.
  void CheckParams(const ModelParams<Real>& params) const;

  // Per node type [n x d] input representations.
  std::vector<Tensor<Real>> EncodeInputs(const Subgraph& sub, const ModelParams<Real>& params) const;

  // Adds the indicator to the seed row and the item-side embedding to every
  // local item row.
  std::vector<Tensor<Real>> InjectContext(std::vector<Tensor<Real>> h0, const Subgraph& sub,
                                          const ModelParams<Real>& params) const;

  GnnOutput<Real> GnnForward(const Subgraph& sub, const std::vector<Tensor<Real>>& h0,
                             const ModelParams<Real>& params) const;

  Real FusionOffset(std::span<const Real> user, const ModelParams<Real>& params) const;

  // Eq.-2 style scores: pair head plus offset for local items, tower head
  // otherwise. Ablation flags in the config switch heads off.
  std::vector<ScoredItem> ScoreCandidates(const GnnOutput<Real>& out, const Subgraph& sub,
                                          const ModelParams<Real>& params,
                                          std::span<const NodeId> candidates) const;

  // Tower-side embedding of items: shallow rows, or the inductive encoder.
  TowerEmbeddings<Real> TowerEmbed(const ModelParams<Real>& params,
                                   std::span<const NodeId> items) const;
  void TowerBackward(const TowerEmbeddings<Real>& emb, const ModelParams<Real>& params,
                     const Tensor<Real>& grad_out, ModelParams<Real>& grads) const;

  // Full forward with cached intermediates (one GnnForward call).
  ForwardCache<Real> Forward(const Subgraph& sub, const ModelParams<Real>& params) const;

  // Accumulates parameter gradients given gradients of the readout and of
  // the fusion offset.
  void Backward(const ForwardCache<Real>& cache, const Subgraph& sub,
                const ModelParams<Real>& params, const Tensor<Real>& grad_user,
                const Tensor<Real>& grad_items, Real grad_offset, ModelParams<Real>& grads) const;

 private:
  struct Layout {
    struct Mlp {
      std::size_t w1, b1, w2, b2;
    };
    std::vector<Mlp> encoder;                       // per node type
    std::size_t indicator;
    std::vector<std::vector<std::size_t>> self_w;   // [layer][node type]
    std::vector<std::vector<std::size_t>> self_b;   // [layer][node type]
    std::vector<std::vector<std::size_t>> msg_w;    // [layer][directed edge type]
    std::size_t shallow;
    Mlp item_encoder;
    Mlp fusion;
  };

  std::vector<std::pair<std::string, std::vector<std::size_t>>> ParamSpecs() const;
  Tensor<Real> Features(TypeId type, std::span<const NodeId> ids) const;
  void GnnLayers(const Subgraph& sub, ForwardCache<Real>& cache,
                 const ModelParams<Real>& params) const;

  const TemporalHeteroGraph* graph_;
  ModelConfig config_;
  Layout layout_;
};

}  // namespace ctxgnn
