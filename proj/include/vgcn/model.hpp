#pragma once

// Volumetric graph convolutional network: input projection, stacked
// Graph-ResNet blocks over a ContourGraph, a linear shift head, and the
// iterated coordinate refinement loop.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vgcn/autodiff.hpp"
#include "vgcn/errors.hpp"
#include "vgcn/features.hpp"
#include "vgcn/graph.hpp"
#include "vgcn/tensor.hpp"

namespace vgcn {

struct ModelConfig {
  Topology topology = Topology::FullConnection;
  bool use_motion_features = true;
  std::size_t iterations = 3;
  std::size_t hidden = 64;
  std::size_t blocks = 8;
  std::size_t points = 40;
  std::size_t interval = 10;
  EncoderConfig encoder{};

  std::size_t feature_width() const { return encoder.appearance + 6; }

  void validate() const {
    if (points < 5) throw InvalidConfig("points must be >= 5");
    if (interval < 1) throw InvalidConfig("interval must be >= 1");
    if (hidden == 0 || encoder.appearance == 0 || encoder.stage1 == 0 || encoder.stage2 == 0) {
      throw InvalidConfig("layer widths must be positive");
    }
  }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Named model variants compared in the benchmark.
inline ModelConfig model_preset(const std::string& name, ModelConfig base = {}) {
  if (name == "sgcn" || name == "sgcn-smoothed") {
    base.topology = Topology::SpatialOnly, base.use_motion_features = false;
  } else if (name == "vgcn-basic") {
    base.topology = Topology::Decomposable, base.use_motion_features = false;
  } else if (name == "vgcn-basic-full") {
    base.topology = Topology::FullConnection, base.use_motion_features = false;
  } else if (name == "vgcn-basic-motion") {
    base.topology = Topology::Decomposable, base.use_motion_features = true;
  } else if (name == "vgcn") {
    base.topology = Topology::FullConnection, base.use_motion_features = true;
  } else {
    throw InvalidConfig("unknown model '" + name +
                        "' (expected sgcn|sgcn-smoothed|vgcn-basic|vgcn-basic-full|vgcn-basic-motion|vgcn)");
  }
  return base;
}

enum class ParamGroup { Encoder, InputProjection, GcnBlocks, FcHead };

inline const char* to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::Encoder: return "encoder";
    case ParamGroup::InputProjection: return "input_projection";
    case ParamGroup::GcnBlocks: return "gcn_blocks";
    case ParamGroup::FcHead: return "fc_head";
  }
  return "?";
}

inline ParamGroup param_group_from_string(const std::string& s) {
  for (ParamGroup g : {ParamGroup::Encoder, ParamGroup::InputProjection, ParamGroup::GcnBlocks,
                       ParamGroup::FcHead}) {
    if (s == to_string(g)) return g;
  }
  throw InvalidConfig("unknown parameter group '" + s +
                      "' (expected encoder|input_projection|gcn_blocks|fc_head)");
}

template <class T>
struct Parameter {
  std::string name;
  ParamGroup group;
  Tensor<T> value;
};

/// Ordered collection of named parameter tensors.
template <class T>
class Params {
 public:
  void add(std::string name, ParamGroup group, Tensor<T> value) {
    index_[name] = items_.size();
    items_.push_back({std::move(name), group, std::move(value)});
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Parameter<T>& at(const std::string& name) { return items_.at(lookup(name)); }
  const Parameter<T>& at(const std::string& name) const { return items_.at(lookup(name)); }
  std::size_t size() const noexcept { return items_.size(); }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  Parameter<T>& operator[](std::size_t i) { return items_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return items_[i]; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += p.value.size();
    return n;
  }

  template <class U>
  Params<U> cast() const {
    Params<U> out;
    for (const auto& p : items_) out.add(p.name, p.group, p.value.template cast<U>());
    return out;
  }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw InvalidConfig("no parameter named '" + name + "'");
    return it->second;
  }
  std::vector<Parameter<T>> items_;
  std::map<std::string, std::size_t> index_;
};

/// Which edge-type weight matrices a graph convolution carries.
inline std::vector<EdgeType> weighted_edge_types(Topology t) {
  switch (t) {
    case Topology::SpatialOnly: return {EdgeType::SelfLoop, EdgeType::Spatial};
    case Topology::Decomposable:
      return {EdgeType::SelfLoop, EdgeType::Spatial, EdgeType::TemporalCorresponding};
    case Topology::FullConnection:
      return {EdgeType::SelfLoop, EdgeType::Spatial, EdgeType::TemporalCorresponding,
              EdgeType::TemporalNeighbor};
  }
  return {};
}

inline const char* weight_suffix(EdgeType e) {
  switch (e) {
    case EdgeType::SelfLoop: return "w_self";
    case EdgeType::Spatial: return "w_spatial";
    case EdgeType::TemporalCorresponding: return "w_corr";
    case EdgeType::TemporalNeighbor: return "w_neigh";
  }
  return "?";
}

// Incoming edges per type at an interior-frame node.
inline std::size_t interior_degree(EdgeType e) {
  switch (e) {
    case EdgeType::SelfLoop: return 1;
    case EdgeType::Spatial: return 4;
    case EdgeType::TemporalCorresponding: return 2;
    case EdgeType::TemporalNeighbor: return 8;
  }
  return 0;
}

/// Prefixes of every graph convolution in evaluation order.
inline std::vector<std::string> graph_conv_prefixes(const ModelConfig& cfg) {
  std::vector<std::string> out{"input_projection"};
  for (std::size_t l = 0; l < cfg.blocks; ++l) {
    out.push_back("blocks." + std::to_string(l) + ".conv1");
    out.push_back("blocks." + std::to_string(l) + ".conv2");
  }
  return out;
}

/// Expected name → shape map for a configuration; checkpoints are validated
/// against it.
inline std::vector<std::pair<std::string, Shape>> param_layout(const ModelConfig& cfg) {
  std::vector<std::pair<std::string, Shape>> out;
  const EncoderConfig& e = cfg.encoder;
  const std::size_t c = kEncoderInputChannels;
  out.push_back({"encoder.conv1.weight", {e.stage1, c, 3, 3}});
  out.push_back({"encoder.conv1.bias", {e.stage1}});
  out.push_back({"encoder.conv2.weight", {e.stage2, e.stage1, 3, 3}});
  out.push_back({"encoder.conv2.bias", {e.stage2}});
  out.push_back({"encoder.conv3.weight", {e.appearance, e.stage2, 3, 3}});
  out.push_back({"encoder.conv3.bias", {e.appearance}});
  out.push_back({"encoder.head.weight", {2, e.stage2, 3, 3}});
  out.push_back({"encoder.head.bias", {2}});
  for (const std::string& prefix : graph_conv_prefixes(cfg)) {
    const std::size_t in = prefix == "input_projection" ? cfg.feature_width() : cfg.hidden;
    for (EdgeType t : weighted_edge_types(cfg.topology)) {
      out.push_back({prefix + "." + weight_suffix(t), {in, cfg.hidden}});
    }
    out.push_back({prefix + ".bias", {cfg.hidden}});
  }
  out.push_back({"fc_head.weight", {cfg.hidden, 2}});
  out.push_back({"fc_head.bias", {2}});
  return out;
}

inline ParamGroup group_of(const std::string& name) {
  if (name.rfind("encoder.", 0) == 0) return ParamGroup::Encoder;
  if (name.rfind("input_projection.", 0) == 0) return ParamGroup::InputProjection;
  if (name.rfind("blocks.", 0) == 0) return ParamGroup::GcnBlocks;
  return ParamGroup::FcHead;
}

/// Glorot-uniform weights, zero biases, zero shift head. For graph
/// convolutions the fan-in counts every incoming edge of an interior node
/// across all weighted edge types. The second convolution of every residual
/// block starts at zero so each block is the identity at initialization;
/// summed neighbour features are strongly correlated along a contour, and
/// without this the activations grow several-fold per block.
template <class T>
Params<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::size_t conv_edges = 0;
  for (EdgeType t : weighted_edge_types(cfg.topology)) conv_edges += interior_degree(t);
  Params<T> params;
  for (auto& [name, shape] : param_layout(cfg)) {
    Tensor<T> value(shape);
    const bool is_bias = name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0;
    const bool residual_out = group_of(name) == ParamGroup::GcnBlocks && name.find(".conv2.") != std::string::npos;
    if (!is_bias && !residual_out && group_of(name) != ParamGroup::FcHead) {
      double fan_in, fan_out;
      if (shape.size() == 4) {
        fan_in = static_cast<double>(shape[1] * shape[2] * shape[3]);
        fan_out = static_cast<double>(shape[0] * shape[2] * shape[3]);
      } else {
        fan_in = static_cast<double>(shape[0] * conv_edges);
        fan_out = static_cast<double>(shape[1]);
      }
      const double a = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-a, a);
      for (T& v : value.data()) v = static_cast<T>(dist(rng));
    }
    params.add(name, group_of(name), std::move(value));
  }
  return params;
}

/// Parameters placed on a tape, by name.
template <class T>
using ParamVars = std::unordered_map<std::string, ad::Var<T>>;

template <class T>
ParamVars<T> bind_params(ad::Tape<T>& tape, const Params<T>& params, bool trainable) {
  ParamVars<T> vars;
  for (const auto& p : params) {
    vars.emplace(p.name, trainable ? tape.parameter(p.value) : tape.constant(p.value));
  }
  return vars;
}

template <class T>
EncoderVars<T> encoder_vars(const ParamVars<T>& v) {
  return {v.at("encoder.conv1.weight"), v.at("encoder.conv1.bias"), v.at("encoder.conv2.weight"),
          v.at("encoder.conv2.bias"),   v.at("encoder.conv3.weight"), v.at("encoder.conv3.bias"),
          v.at("encoder.head.weight"),  v.at("encoder.head.bias")};
}

/// Edge lists of a graph flattened into gather/scatter index vectors.
struct GraphIndex {
  std::size_t nodes = 0;
  std::array<std::vector<std::size_t>, 4> src;
  std::array<std::vector<std::size_t>, 4> dst;
  std::vector<std::size_t> frame_of_node;

  explicit GraphIndex(const ContourGraph& g) : nodes(g.node_count()) {
    for (EdgeType t : kEdgeTypes) {
      const auto k = static_cast<std::size_t>(t);
      for (const Edge& e : g.edges(t)) {
        src[k].push_back(e.src);
        dst[k].push_back(e.dst);
      }
    }
    for (std::size_t v = 0; v < nodes; ++v) frame_of_node.push_back(g.node(v).frame);
  }
};

/// Weights of one graph convolution; entries for absent edge types stay invalid.
template <class T>
struct GraphConvWeights {
  std::array<ad::Var<T>, 4> w;
  ad::Var<T> bias;
};

template <class T>
GraphConvWeights<T> conv_weights(const ParamVars<T>& v, const std::string& prefix) {
  GraphConvWeights<T> cw;
  for (EdgeType t : kEdgeTypes) {
    auto it = v.find(prefix + "." + weight_suffix(t));
    if (it != v.end()) cw.w[static_cast<std::size_t>(t)] = it->second;
  }
  cw.bias = v.at(prefix + ".bias");
  return cw;
}

/// One graph convolution: for every node, W_o·f_self + Σ_spatial W_s·f_j +
/// Σ_corresponding W_t·f_j + Σ_temporal-neighbour W_t'·f_j + b. Edge types
/// without edges in `graph` or without a weight contribute nothing.
template <class T>
ad::Var<T> graph_conv(const ad::Var<T>& features, const GraphIndex& graph,
                      const GraphConvWeights<T>& weights) {
  const Tensor<T>& fv = features.value();
  if (fv.rank() != 2 || fv.dim(0) != graph.nodes) {
    throw ContractViolation("graph_conv: features " + shape_string(fv.shape()) + " for " +
                            std::to_string(graph.nodes) + " nodes");
  }
  std::vector<ad::Var<T>> terms;
  for (EdgeType t : kEdgeTypes) {
    const auto k = static_cast<std::size_t>(t);
    if (!weights.w[k].valid()) continue;
    if (t == EdgeType::SelfLoop) {
      terms.push_back(ad::matmul(features, weights.w[k]));
      continue;
    }
    if (graph.src[k].empty()) continue;
    ad::Var<T> agg =
        ad::scatter_add_rows(ad::gather_rows(features, graph.src[k]), graph.dst[k], graph.nodes);
    terms.push_back(ad::matmul(agg, weights.w[k]));
  }
  return ad::add_bias(ad::add_n<T>(terms), weights.bias);
}

/// Graph-ResNet block: ReLU(conv2(ReLU(conv1(f))) + f).
template <class T>
ad::Var<T> graph_res_block(const ad::Var<T>& features, const GraphIndex& graph,
                           const GraphConvWeights<T>& first, const GraphConvWeights<T>& second) {
  ad::Var<T> g = ad::relu(graph_conv(features, graph, first));
  return ad::relu(ad::add(graph_conv(g, graph, second), features));
}

/// Linear map of each node's features to its (Δx, Δy).
template <class T>
ad::Var<T> predict_shifts(const ad::Var<T>& features, const ad::Var<T>& weight,
                          const ad::Var<T>& bias) {
  return ad::add_bias(ad::matmul(features, weight), bias);
}

/// Graph convolution stack from node features to per-node shifts.
template <class T>
ad::Var<T> gcn_shifts(const ad::Var<T>& node_features, const GraphIndex& graph,
                      const ParamVars<T>& vars, const ModelConfig& cfg) {
  ad::Var<T> f = ad::relu(graph_conv(node_features, graph, conv_weights(vars, "input_projection")));
  for (std::size_t l = 0; l < cfg.blocks; ++l) {
    const std::string p = "blocks." + std::to_string(l);
    f = graph_res_block(f, graph, conv_weights(vars, p + ".conv1"), conv_weights(vars, p + ".conv2"));
  }
  return predict_shifts(f, vars.at("fc_head.weight"), vars.at("fc_head.bias"));
}

/// Data for one sub-sequence window, ready for the network.
template <class T>
struct WindowTensors {
  Tensor<T> encoder_input;  // [F×5×S×S]
  Tensor<T> pooled_flow;    // [F×2×28×28]
  Tensor<T> init_coords;    // [(F·N)×2], crop units, frame-major
};

template <class T>
struct RefineResult {
  std::vector<ad::Var<T>> trace;  // coordinates after 0..iterations updates
  FeatureVolume<T> volume;
};

/// Encodes the window once, then repeats: sample node features, run the
/// graph convolutions, shift, clamp to [0,1]².
template <class T>
RefineResult<T> refine(ad::Tape<T>& tape, const ParamVars<T>& vars, const ModelConfig& cfg,
                       const GraphIndex& graph, WindowTensors<T> window, std::size_t iterations) {
  if (window.init_coords.shape() != Shape{graph.nodes, 2}) {
    throw ContractViolation("refine: initial coordinates " + shape_string(window.init_coords.shape()) +
                            " for " + std::to_string(graph.nodes) + " nodes");
  }
  RefineResult<T> out;
  out.trace.push_back(tape.constant(std::move(window.init_coords)));
  if (iterations == 0) return out;
  out.volume = encode(tape, encoder_vars(vars), std::move(window.encoder_input),
                      std::move(window.pooled_flow));
  for (std::size_t it = 0; it < iterations; ++it) {
    const ad::Var<T>& coords = out.trace.back();
    ad::Var<T> feats =
        assemble_node_features(out.volume, coords, graph.frame_of_node, it, cfg.use_motion_features);
    ad::Var<T> shifts = gcn_shifts(feats, graph, vars, cfg);
    out.trace.push_back(ad::clamp(ad::add(coords, shifts), T(0), T(1)));
  }
  return out;
}

template <class T>
Tensor<T> coords_tensor(const std::vector<Point>& pts) {
  Tensor<T> t({pts.size(), 2});
  for (std::size_t i = 0; i < pts.size(); ++i) {
    t[2 * i] = static_cast<T>(pts[i].x);
    t[2 * i + 1] = static_cast<T>(pts[i].y);
  }
  return t;
}

/// Rows [frame·N, (frame+1)·N) of an [(F·N)×2] coordinate tensor as points.
template <class T>
Polygon frame_points(const Tensor<T>& coords, std::size_t frame, std::size_t points) {
  Polygon out(points);
  for (std::size_t i = 0; i < points; ++i) {
    const std::size_t r = frame * points + i;
    out[i] = {static_cast<double>(coords[2 * r]), static_cast<double>(coords[2 * r + 1])};
  }
  return out;
}

}  // namespace vgcn
