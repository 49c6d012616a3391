#include "ctxgnn/model.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <unordered_map>

namespace ctxgnn {
namespace {

// out += x W
template <typename Real>
void MatMulInto(const Tensor<Real>& x, const Tensor<Real>& w, Tensor<Real>& out) {
  const std::size_t n = x.rows(), p = x.cols(), q = w.cols();
  for (std::size_t i = 0; i < n; ++i) {
    Real* o = out.data() + i * q;
    const Real* xi = x.data() + i * p;
    for (std::size_t k = 0; k < p; ++k) {
      const Real a = xi[k];
      if (a == Real(0)) continue;
      const Real* wk = w.data() + k * q;
      for (std::size_t j = 0; j < q; ++j) o[j] += a * wk[j];
    }
  }
}

template <typename Real>
void AddRow(std::span<Real> dst, std::span<const Real> src) {
  for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
}

template <typename Real>
Tensor<Real> RowAsMatrix(std::span<const Real> row) {
  return Tensor<Real>({1, row.size()}, std::vector<Real>(row.begin(), row.end()));
}

}  // namespace

Instrumentation& instrumentation() {
  static Instrumentation counters;
  return counters;
}

void ModelConfig::Validate() const {
  if (hidden_dim < 1) throw Error(ErrorKind::kInvalidConfig, "hidden_dim must be >= 1");
  if (num_layers < 1) throw Error(ErrorKind::kInvalidConfig, "num_layers must be >= 1");
  if (fusion_hidden < 1) throw Error(ErrorKind::kInvalidConfig, "fusion_hidden must be >= 1");
  if (pair_only && tower_only) {
    throw Error(ErrorKind::kInvalidConfig, "pair_only and tower_only are mutually exclusive");
  }
}

template <typename Real>
std::size_t ModelParams<Real>::Find(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw Error(ErrorKind::kMissingEncoder, "no parameter named " + name);
  return static_cast<std::size_t>(it - names.begin());
}

template <typename Real>
ModelParams<Real> ModelParams<Real>::ZerosLike() const {
  ModelParams z;
  z.names = names;
  z.tensors.reserve(tensors.size());
  for (const auto& t : tensors) z.tensors.emplace_back(t.shape());
  return z;
}

template <typename Real>
bool ModelParams<Real>::AllFinite() const {
  return std::all_of(tensors.begin(), tensors.end(), [](const auto& t) { return t.AllFinite(); });
}

template <typename Real>
ContextGnn<Real>::ContextGnn(const TemporalHeteroGraph& graph, ModelConfig config)
    : graph_(&graph), config_(config) {
  config_.Validate();
  // Positions follow ParamSpecs() order.
  const std::size_t types = graph.node_types().size();
  const std::size_t directed = NumDirectedEdgeTypes(graph);
  std::size_t next = 0;
  for (std::size_t t = 0; t < types; ++t) {
    layout_.encoder.push_back({next, next + 1, next + 2, next + 3});
    next += 4;
  }
  layout_.indicator = next++;
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    layout_.self_w.emplace_back();
    layout_.self_b.emplace_back();
    layout_.msg_w.emplace_back();
    for (std::size_t t = 0; t < types; ++t) {
      layout_.self_w[l].push_back(next++);
      layout_.self_b[l].push_back(next++);
    }
    for (std::size_t r = 0; r < directed; ++r) layout_.msg_w[l].push_back(next++);
  }
  layout_.shallow = next++;
  layout_.item_encoder = {next, next + 1, next + 2, next + 3};
  next += 4;
  layout_.fusion = {next, next + 1, next + 2, next + 3};
}

template <typename Real>
std::vector<std::pair<std::string, std::vector<std::size_t>>> ContextGnn<Real>::ParamSpecs() const {
  const auto& g = *graph_;
  const std::size_t d = config_.hidden_dim;
  std::vector<std::pair<std::string, std::vector<std::size_t>>> specs;
  auto mlp = [&](const std::string& prefix, std::size_t in, std::size_t hidden, std::size_t out) {
    specs.push_back({prefix + ".w1", {in, hidden}});
    specs.push_back({prefix + ".b1", {hidden}});
    specs.push_back({prefix + ".w2", {hidden, out}});
    specs.push_back({prefix + ".b2", {out}});
  };
  for (const auto& nt : g.node_types()) mlp("encoder." + nt.name, nt.feature_width, d, d);
  specs.push_back({"indicator", {d}});
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const std::string prefix = "layer" + std::to_string(l + 1);
    for (const auto& nt : g.node_types()) {
      specs.push_back({prefix + ".self." + nt.name + ".w", {d, d}});
      specs.push_back({prefix + ".self." + nt.name + ".b", {d}});
    }
    for (std::size_t r = 0; r < NumDirectedEdgeTypes(g); ++r) {
      specs.push_back({prefix + ".msg." + DirectedEdgeName(g, r) + ".w", {d, d}});
    }
  }
  specs.push_back({"shallow_items", {g.num_items(), d}});
  mlp("item_encoder", g.node_type(g.item_type()).feature_width, d, d);
  mlp("fusion", d, config_.fusion_hidden, 1);
  return specs;
}

template <typename Real>
ModelParams<Real> ContextGnn<Real>::Init(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  ModelParams<Real> params;
  const double d = static_cast<double>(config_.hidden_dim);
  for (auto& [name, shape] : ParamSpecs()) {
    Tensor<Real> t(shape);
    if (name == "shallow_items") {
      std::normal_distribution<double> normal(0.0, std::sqrt(1.0 / d));
      for (auto& v : t.values()) v = static_cast<Real>(normal(rng));
    } else if (name == "indicator") {
      std::uniform_real_distribution<double> uniform(-1.0 / std::sqrt(d), 1.0 / std::sqrt(d));
      for (auto& v : t.values()) v = static_cast<Real>(uniform(rng));
    } else {
      // Biases share the fan-in of the weight they follow.
      const std::size_t fan_in = shape.size() == 2 ? shape[0] : params.tensors.back().rows();
      const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(1, fan_in)));
      std::uniform_real_distribution<double> uniform(-bound, bound);
      for (auto& v : t.values()) v = static_cast<Real>(uniform(rng));
    }
    params.names.push_back(name);
    params.tensors.push_back(std::move(t));
  }
  return params;
}

template <typename Real>
void ContextGnn<Real>::CheckParams(const ModelParams<Real>& params) const {
  const auto specs = ParamSpecs();
  if (params.names.size() != params.tensors.size()) {
    throw Error(ErrorKind::kShapeMismatch, "parameter names and tensors differ in count");
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (i >= params.names.size() || params.names[i] != specs[i].first) {
      throw Error(ErrorKind::kMissingEncoder, "expected parameter " + specs[i].first);
    }
    if (params.tensors[i].shape() != specs[i].second) {
      throw Error(ErrorKind::kShapeMismatch, "parameter " + specs[i].first + " has wrong shape");
    }
  }
  if (params.names.size() != specs.size()) {
    throw Error(ErrorKind::kShapeMismatch, "unexpected extra parameters");
  }
}

template <typename Real>
Tensor<Real> ContextGnn<Real>::Features(TypeId type, std::span<const NodeId> ids) const {
  const NodeTypeStore& nt = graph_->node_type(type);
  Tensor<Real> x({ids.size(), nt.feature_width});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const double* src = nt.feature_row(ids[i]);
    for (std::size_t j = 0; j < nt.feature_width; ++j) x(i, j) = static_cast<Real>(src[j]);
  }
  return x;
}

template <typename Real>
std::vector<Tensor<Real>> ContextGnn<Real>::EncodeInputs(const Subgraph& sub,
                                                         const ModelParams<Real>& params) const {
  if (params.tensors.size() <= layout_.fusion.b2 || sub.nodes.size() != layout_.encoder.size()) {
    throw Error(ErrorKind::kMissingEncoder, "parameters do not cover every node type");
  }
  std::vector<Tensor<Real>> h0;
  for (TypeId t = 0; t < sub.nodes.size(); ++t) {
    const auto& enc = layout_.encoder[t];
    const Tensor<Real> x = Features(t, sub.nodes[t]);
    const Tensor<Real> hidden =
        Affine(x, params.tensors[enc.w1], params.tensors[enc.b1], Activation::kRelu);
    h0.push_back(Affine(hidden, params.tensors[enc.w2], params.tensors[enc.b2]));
  }
  return h0;
}

template <typename Real>
TowerEmbeddings<Real> ContextGnn<Real>::TowerEmbed(const ModelParams<Real>& params,
                                                   std::span<const NodeId> items) const {
  TowerEmbeddings<Real> emb;
  emb.ids.assign(items.begin(), items.end());
  const std::size_t d = config_.hidden_dim;
  for (NodeId id : items) {
    if (id >= graph_->num_items()) {
      throw Error(ErrorKind::kUnknownItem, "item " + std::to_string(id));
    }
  }
  if (config_.item_encoder_mode == ItemEncoderMode::kTransductiveShallow) {
    const Tensor<Real>& shallow = params.tensors[layout_.shallow];
    emb.out = Tensor<Real>({items.size(), d});
    for (std::size_t i = 0; i < items.size(); ++i) {
      std::copy_n(shallow.data() + items[i] * d, d, emb.out.data() + i * d);
    }
    instrumentation().shallow_item_reads += items.size();
  } else {
    const auto& enc = layout_.item_encoder;
    emb.input = Features(graph_->item_type(), items);
    emb.hidden = Affine(emb.input, params.tensors[enc.w1], params.tensors[enc.b1], Activation::kRelu);
    emb.out = Affine(emb.hidden, params.tensors[enc.w2], params.tensors[enc.b2]);
  }
  return emb;
}

template <typename Real>
void ContextGnn<Real>::TowerBackward(const TowerEmbeddings<Real>& emb, const ModelParams<Real>& params,
                                     const Tensor<Real>& grad_out, ModelParams<Real>& grads) const {
  if (emb.ids.empty()) return;
  if (config_.item_encoder_mode == ItemEncoderMode::kTransductiveShallow) {
    Tensor<Real>& g = grads.tensors[layout_.shallow];
    for (std::size_t i = 0; i < emb.ids.size(); ++i) {
      AddRow(g.row(emb.ids[i]), std::span<const Real>(grad_out.row(i)));
    }
    return;
  }
  const auto& enc = layout_.item_encoder;
  auto& gt = grads.tensors;
  Tensor<Real> go = grad_out;
  Tensor<Real> grad_hidden(emb.hidden.shape());
  AffineBackwardInto(emb.hidden, params.tensors[enc.w2], go, go, Activation::kNone, &grad_hidden,
                     gt[enc.w2], &gt[enc.b2]);
  AffineBackwardInto(emb.input, params.tensors[enc.w1], emb.hidden, grad_hidden, Activation::kRelu,
                     static_cast<Tensor<Real>*>(nullptr), gt[enc.w1], &gt[enc.b1]);
}

template <typename Real>
std::vector<Tensor<Real>> ContextGnn<Real>::InjectContext(std::vector<Tensor<Real>> h0,
                                                          const Subgraph& sub,
                                                          const ModelParams<Real>& params) const {
  AddRow(h0[sub.user_type].row(sub.seed_local), params.tensors[layout_.indicator].values());
  const auto& items = sub.nodes[sub.item_type];
  if (!items.empty()) {
    const TowerEmbeddings<Real> emb = TowerEmbed(params, items);
    h0[sub.item_type] += emb.out;
  }
  return h0;
}

template <typename Real>
void ContextGnn<Real>::GnnLayers(const Subgraph& sub, ForwardCache<Real>& cache,
                                 const ModelParams<Real>& params) const {
  if (sub.depth != config_.num_layers) {
    throw Error(ErrorKind::kDepthMismatch, "subgraph depth " + std::to_string(sub.depth) +
                                               " vs " + std::to_string(config_.num_layers) +
                                               " layers");
  }
  if (!sub.bidirectional) {
    throw Error(ErrorKind::kInvalidConfig, "message passing requires a bidirectional subgraph");
  }
  instrumentation().gnn_forward_calls += 1;
  const auto& g = *graph_;
  const std::size_t d = config_.hidden_dim;
  const std::size_t types = sub.nodes.size();
  const std::size_t directed = sub.edges.size();
  cache.h.resize(config_.num_layers + 1);
  cache.agg.assign(config_.num_layers + 1, {});
  for (std::size_t l = 1; l <= config_.num_layers; ++l) {
    const auto& prev = cache.h[l - 1];
    auto& agg = cache.agg[l];
    agg.resize(directed);
    for (std::size_t r = 0; r < directed; ++r) {
      const LocalEdges& e = sub.edges[r];
      const TypeId src = DirectedSrcType(g, r), dst = DirectedDstType(g, r);
      agg[r] = Tensor<Real>({sub.nodes[dst].size(), d});
      for (std::size_t i = 0; i < e.size(); ++i) AddRow(agg[r].row(e.dst[i]), prev[src].row(e.src[i]));
    }
    auto& cur = cache.h[l];
    cur.clear();
    const bool last = l == config_.num_layers;
    for (TypeId t = 0; t < types; ++t) {
      Tensor<Real> z = Affine(prev[t], params.tensors[layout_.self_w[l - 1][t]],
                              params.tensors[layout_.self_b[l - 1][t]]);
      for (std::size_t r = 0; r < directed; ++r) {
        if (DirectedDstType(g, r) != t || sub.edges[r].size() == 0) continue;
        MatMulInto(agg[r], params.tensors[layout_.msg_w[l - 1][r]], z);
      }
      if (!last) {
        for (auto& v : z.values()) v = v > Real(0) ? v : Real(0);
      }
      cur.push_back(std::move(z));
    }
  }
  const auto& top = cache.h[config_.num_layers];
  cache.readout.user = Tensor<Real>({d});
  std::copy_n(top[sub.user_type].row(sub.seed_local).data(), d, cache.readout.user.data());
  cache.readout.items = top[sub.item_type];
}

template <typename Real>
GnnOutput<Real> ContextGnn<Real>::GnnForward(const Subgraph& sub, const std::vector<Tensor<Real>>& h0,
                                             const ModelParams<Real>& params) const {
  ForwardCache<Real> cache;
  cache.h.resize(1);
  cache.h[0] = h0;
  GnnLayers(sub, cache, params);
  return std::move(cache.readout);
}

template <typename Real>
Real ContextGnn<Real>::FusionOffset(std::span<const Real> user, const ModelParams<Real>& params) const {
  const auto& f = layout_.fusion;
  const Tensor<Real> hidden =
      Affine(RowAsMatrix(user), params.tensors[f.w1], params.tensors[f.b1], Activation::kRelu);
  return Affine(hidden, params.tensors[f.w2], params.tensors[f.b2])[0];
}

template <typename Real>
ForwardCache<Real> ContextGnn<Real>::Forward(const Subgraph& sub, const ModelParams<Real>& params) const {
  if (params.tensors.size() <= layout_.fusion.b2 || sub.nodes.size() != layout_.encoder.size()) {
    throw Error(ErrorKind::kMissingEncoder, "parameters do not cover every node type");
  }
  ForwardCache<Real> cache;
  cache.h.resize(1);
  for (TypeId t = 0; t < sub.nodes.size(); ++t) {
    const auto& enc = layout_.encoder[t];
    cache.features.push_back(Features(t, sub.nodes[t]));
    cache.encoder_hidden.push_back(Affine(cache.features.back(), params.tensors[enc.w1],
                                          params.tensors[enc.b1], Activation::kRelu));
    cache.h[0].push_back(
        Affine(cache.encoder_hidden.back(), params.tensors[enc.w2], params.tensors[enc.b2]));
  }
  AddRow(cache.h[0][sub.user_type].row(sub.seed_local), params.tensors[layout_.indicator].values());
  cache.local_items = TowerEmbed(params, sub.nodes[sub.item_type]);
  if (!cache.local_items.ids.empty()) cache.h[0][sub.item_type] += cache.local_items.out;

  GnnLayers(sub, cache, params);

  const auto& f = layout_.fusion;
  cache.fusion_input = RowAsMatrix<Real>(cache.readout.user.values());
  cache.fusion_hidden =
      Affine(cache.fusion_input, params.tensors[f.w1], params.tensors[f.b1], Activation::kRelu);
  cache.offset = Affine(cache.fusion_hidden, params.tensors[f.w2], params.tensors[f.b2])[0];
  return cache;
}

template <typename Real>
void ContextGnn<Real>::Backward(const ForwardCache<Real>& cache, const Subgraph& sub,
                                const ModelParams<Real>& params, const Tensor<Real>& grad_user,
                                const Tensor<Real>& grad_items, Real grad_offset,
                                ModelParams<Real>& grads) const {
  const auto& g = *graph_;
  const std::size_t d = config_.hidden_dim;
  const std::size_t k = config_.num_layers;
  const std::size_t types = sub.nodes.size();
  auto& gt = grads.tensors;
  const auto& pt = params.tensors;

  // Fusion head.
  Tensor<Real> grad_readout_user = grad_user;
  if (grad_offset != Real(0)) {
    const auto& f = layout_.fusion;
    Tensor<Real> go({1, 1}, grad_offset);
    Tensor<Real> grad_hidden(cache.fusion_hidden.shape());
    AffineBackwardInto(cache.fusion_hidden, pt[f.w2], go, go, Activation::kNone, &grad_hidden,
                       gt[f.w2], &gt[f.b2]);
    Tensor<Real> grad_in(cache.fusion_input.shape());
    AffineBackwardInto(cache.fusion_input, pt[f.w1], cache.fusion_hidden, grad_hidden,
                       Activation::kRelu, &grad_in, gt[f.w1], &gt[f.b1]);
    AddRow(grad_readout_user.values(), std::span<const Real>(grad_in.values()));
  }

  std::vector<Tensor<Real>> grad_h(types);
  for (TypeId t = 0; t < types; ++t) grad_h[t] = Tensor<Real>({sub.nodes[t].size(), d});
  AddRow(grad_h[sub.user_type].row(sub.seed_local), std::span<const Real>(grad_readout_user.values()));
  if (!grad_items.empty()) grad_h[sub.item_type] += grad_items;

  for (std::size_t l = k; l >= 1; --l) {
    const auto& prev = cache.h[l - 1];
    const auto& cur = cache.h[l];
    std::vector<Tensor<Real>> grad_prev(types);
    for (TypeId t = 0; t < types; ++t) grad_prev[t] = Tensor<Real>(prev[t].shape());
    const Activation act = l < k ? Activation::kRelu : Activation::kNone;
    for (TypeId t = 0; t < types; ++t) {
      if (sub.nodes[t].empty()) continue;
      Tensor<Real>& go = grad_h[t];
      AffineBackwardInto(prev[t], pt[layout_.self_w[l - 1][t]], cur[t], go, act, &grad_prev[t],
                         gt[layout_.self_w[l - 1][t]], &gt[layout_.self_b[l - 1][t]]);
      for (std::size_t r = 0; r < sub.edges.size(); ++r) {
        if (DirectedDstType(g, r) != t || sub.edges[r].size() == 0) continue;
        Tensor<Real> grad_agg(go.shape());
        AffineBackwardInto(cache.agg[l][r], pt[layout_.msg_w[l - 1][r]], go, go, Activation::kNone,
                           &grad_agg, gt[layout_.msg_w[l - 1][r]], static_cast<Tensor<Real>*>(nullptr));
        const LocalEdges& e = sub.edges[r];
        Tensor<Real>& dst = grad_prev[DirectedSrcType(g, r)];
        for (std::size_t i = 0; i < e.size(); ++i) {
          AddRow(dst.row(e.src[i]), std::span<const Real>(grad_agg.row(e.dst[i])));
        }
      }
    }
    grad_h = std::move(grad_prev);
  }

  // Context injection.
  AddRow(gt[layout_.indicator].values(),
         std::span<const Real>(grad_h[sub.user_type].row(sub.seed_local)));
  TowerBackward(cache.local_items, params, grad_h[sub.item_type], grads);

  // Input encoders.
  for (TypeId t = 0; t < types; ++t) {
    if (sub.nodes[t].empty()) continue;
    const auto& enc = layout_.encoder[t];
    Tensor<Real>& go = grad_h[t];
    Tensor<Real> grad_hidden(cache.encoder_hidden[t].shape());
    AffineBackwardInto(cache.encoder_hidden[t], pt[enc.w2], go, go, Activation::kNone, &grad_hidden,
                       gt[enc.w2], &gt[enc.b2]);
    AffineBackwardInto(cache.features[t], pt[enc.w1], cache.encoder_hidden[t], grad_hidden,
                       Activation::kRelu, static_cast<Tensor<Real>*>(nullptr), gt[enc.w1],
                       &gt[enc.b1]);
  }
}

template <typename Real>
std::vector<ScoredItem> ContextGnn<Real>::ScoreCandidates(const GnnOutput<Real>& out,
                                                          const Subgraph& sub,
                                                          const ModelParams<Real>& params,
                                                          std::span<const NodeId> candidates) const {
  std::unordered_map<NodeId, std::size_t> local_row;
  const auto& items = sub.nodes[sub.item_type];
  for (std::size_t i = 0; i < items.size(); ++i) local_row.emplace(items[i], i);

  const std::span<const Real> user = out.user.values();
  const Real offset = config_.tower_only ? Real(0) : FusionOffset(user, params);
  std::vector<ScoredItem> scored(candidates.size());
  std::vector<NodeId> tower_ids;
  std::vector<std::size_t> tower_pos;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const NodeId c = candidates[i];
    if (c >= graph_->num_items()) throw Error(ErrorKind::kUnknownItem, "item " + std::to_string(c));
    auto it = local_row.find(c);
    if (it != local_row.end() && !config_.tower_only) {
      const Real s = Dot<Real>(user, out.items.row(it->second)) + offset;
      scored[i] = {c, static_cast<double>(s), ScoreSource::kPair};
    } else if (config_.pair_only) {
      scored[i] = {c, -std::numeric_limits<double>::infinity(), ScoreSource::kTower};
    } else {
      tower_ids.push_back(c);
      tower_pos.push_back(i);
    }
  }
  if (!tower_ids.empty()) {
    const TowerEmbeddings<Real> emb = TowerEmbed(params, tower_ids);
    for (std::size_t j = 0; j < tower_ids.size(); ++j) {
      const Real s = Dot<Real>(user, emb.out.row(j));
      scored[tower_pos[j]] = {tower_ids[j], static_cast<double>(s), ScoreSource::kTower};
    }
  }
  return scored;
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template class ContextGnn<float>;
template class ContextGnn<double>;

}  // namespace ctxgnn
