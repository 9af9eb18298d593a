#pragma once

// Feed-forward computation graph of standard layers, serialised as a JSON
// description plus a float32 weight sidecar.
//
// Layers are listed in topological order. Every layer names its inputs; a
// layer of type "input" is a graph input fed by the caller. Parameters are
// owned by the Network as constant leaves; forward() can bind a replacement
// parameter list (e.g. a trainable copy) without touching the originals.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "semadv/core/ops.hpp"

namespace semadv::models {

using json = nlohmann::json;

enum class LayerType {
  Input, Conv2d, Affine, Relu, Tanh, Sigmoid, MaxPool, AvgPool, GlobalAvgPool, Flatten, Linear,
  Add, Sub, MulBroadcast, Concat, Slice, Upsample, SoftmaxChannels, ScalarAffine
};

inline LayerType parse_layer_type(const std::string& s) {
  static const std::map<std::string, LayerType> table{
      {"input", LayerType::Input},           {"conv2d", LayerType::Conv2d},
      {"affine", LayerType::Affine},         {"relu", LayerType::Relu},
      {"tanh", LayerType::Tanh},             {"sigmoid", LayerType::Sigmoid},
      {"maxpool", LayerType::MaxPool},       {"avgpool", LayerType::AvgPool},
      {"gap", LayerType::GlobalAvgPool},     {"flatten", LayerType::Flatten},
      {"linear", LayerType::Linear},         {"add", LayerType::Add},
      {"sub", LayerType::Sub},               {"mul_bcast", LayerType::MulBroadcast},
      {"concat", LayerType::Concat},         {"slice", LayerType::Slice},
      {"upsample", LayerType::Upsample},     {"softmax_channels", LayerType::SoftmaxChannels},
      {"scalar_affine", LayerType::ScalarAffine}};
  auto it = table.find(s);
  if (it == table.end()) throw Error("unknown layer type '" + s + "'");
  return it->second;
}

struct Layer {
  std::string name;
  LayerType type;
  json spec;                        // original description (attributes)
  std::vector<std::size_t> inputs;  // indices of producing layers
  std::vector<std::size_t> params;  // indices into Network::params_
};

struct NamedParam {
  std::string name;
  ad::Var var;
};

/// A parameter list standing in for a network's own parameters.
using ParamBinding = std::vector<ad::Var>;

class Network {
 public:
  Network() = default;

  /// Builds the graph from its JSON description. Parameters are zero until
  /// loaded or initialised.
  explicit Network(const json& desc) : desc_(desc) {
    const auto& layers = desc.at("layers");
    for (const auto& ls : layers) add_layer(ls);
  }

  // Copies own their parameters; nothing is shared with the source.
  Network(const Network& o) : desc_(o.desc_), layers_(o.layers_), index_(o.index_) {
    for (const auto& p : o.params_) params_.push_back({p.name, ad::constant(p.var->value)});
  }
  Network& operator=(const Network& o) {
    if (this != &o) *this = Network(o);
    return *this;
  }
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const json& description() const noexcept { return desc_; }
  const std::vector<NamedParam>& params() const noexcept { return params_; }
  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.var->value.size();
    return n;
  }

  bool has_layer(const std::string& name) const { return index_.count(name) > 0; }
  const Layer& layer(const std::string& name) const { return layers_.at(lookup(name)); }

  /// Deep copy of the parameters as fresh leaves.
  ParamBinding clone_params(bool requires_grad) const {
    ParamBinding out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(ad::leaf(p.var->value, requires_grad));
    return out;
  }

  /// Replaces parameter values (shapes must match).
  void set_params(const std::vector<Tensor>& values) {
    if (values.size() != params_.size()) throw Error("set_params: parameter count mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
      params_[i].var->value.require_same_shape(values[i], "set_params");
      params_[i].var->value = values[i];
    }
  }

  /// He-style random initialisation, deterministic in seed.
  void init_random(std::uint64_t seed, double gain = 1.0) {
    std::mt19937_64 rng(seed);
    for (auto& p : params_) {
      auto& t = p.var->value;
      const bool is_bias = p.name.ends_with(".bias") || p.name.ends_with(".shift");
      const bool is_scale = p.name.ends_with(".scale");
      if (is_bias) {
        t.fill(0.0);
      } else if (is_scale) {
        t.fill(1.0);
      } else {
        std::size_t fan_in = t.rank() >= 2 ? t.size() / t.dim(0) : t.size();
        std::normal_distribution<double> nd(0.0, gain * std::sqrt(2.0 / double(fan_in)));
        for (double& v : t.data()) v = nd(rng);
      }
    }
  }

  /// Evaluates the layers needed for `outputs`, feeding named graph inputs.
  std::map<std::string, ad::Var> forward(const std::map<std::string, ad::Var>& inputs,
                                         const std::vector<std::string>& outputs,
                                         const ParamBinding* binding = nullptr) const {
    if (binding && binding->size() != params_.size())
      throw Error("forward: parameter binding has " + std::to_string(binding->size()) +
                  " entries, network has " + std::to_string(params_.size()));
    std::vector<bool> needed(layers_.size(), false);
    std::vector<std::size_t> stack;
    for (const auto& o : outputs) stack.push_back(lookup(o));
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      if (needed[i]) continue;
      needed[i] = true;
      for (auto j : layers_[i].inputs) stack.push_back(j);
    }
    std::vector<ad::Var> vals(layers_.size());
    auto param = [&](std::size_t k) -> const ad::Var& {
      return binding ? (*binding)[k] : params_[k].var;
    };
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (!needed[i]) continue;
      const Layer& L = layers_[i];
      if (L.type == LayerType::Input) {
        auto it = inputs.find(L.name);
        if (it == inputs.end()) throw Error("forward: missing graph input '" + L.name + "'");
        vals[i] = it->second;
        continue;
      }
      std::vector<ad::Var> in;
      for (auto j : L.inputs) in.push_back(vals[j]);
      vals[i] = apply(L, in, param);
    }
    std::map<std::string, ad::Var> out;
    for (const auto& o : outputs) out[o] = vals[lookup(o)];
    return out;
  }

  // ------------------------------------------------------------------ I/O

  void save(const std::filesystem::path& json_path) const {
    auto bin_path = json_path;
    bin_path.replace_extension(".bin");
    json d = desc_;
    d["weights"] = bin_path.filename().string();
    d["param_shapes"] = json::array();
    for (const auto& p : params_) d["param_shapes"].push_back({{"name", p.name}, {"shape", p.var->shape()}});
    if (json_path.has_parent_path()) std::filesystem::create_directories(json_path.parent_path());
    std::ofstream(json_path) << d.dump(1);
    std::ofstream bin(bin_path, std::ios::binary);
    for (const auto& p : params_)
      for (double v : p.var->value.data()) {
        const float f = static_cast<float>(v);
        bin.write(reinterpret_cast<const char*>(&f), sizeof f);
      }
    if (!bin) throw Error("cannot write weights " + bin_path.string());
  }

  static Network load(const std::filesystem::path& json_path) {
    std::ifstream in(json_path);
    if (!in) throw Error("cannot open model description " + json_path.string());
    json d;
    try {
      d = json::parse(in);
    } catch (const std::exception& e) {
      throw Error("malformed model description " + json_path.string() + ": " + e.what());
    }
    Network net(d);
    auto bin_path = json_path.parent_path() / d.value("weights", json_path.stem().string() + ".bin");
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw Error("cannot open weights " + bin_path.string());
    for (auto& p : net.params_) {
      for (double& v : p.var->value.data()) {
        float f;
        if (!bin.read(reinterpret_cast<char*>(&f), sizeof f))
          throw Error("weights file " + bin_path.string() + " is too short");
        v = f;
      }
    }
    return net;
  }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("network has no layer named '" + name + "'");
    return it->second;
  }

  std::size_t new_param(const std::string& name, Shape shape) {
    params_.push_back({name, ad::constant(Tensor(std::move(shape)))});
    return params_.size() - 1;
  }

  void add_layer(const json& ls) {
    Layer L;
    L.name = ls.at("name").get<std::string>();
    L.type = parse_layer_type(ls.at("type").get<std::string>());
    L.spec = ls;
    if (index_.count(L.name)) throw Error("duplicate layer name '" + L.name + "'");
    if (ls.contains("inputs"))
      for (const auto& in : ls.at("inputs")) L.inputs.push_back(lookup(in.get<std::string>()));
    else if (L.type != LayerType::Input && !layers_.empty())
      L.inputs.push_back(layers_.size() - 1);
    if (L.type != LayerType::Input && L.inputs.empty())
      throw Error("layer '" + L.name + "' has no input");
    switch (L.type) {
      case LayerType::Conv2d: {
        const std::size_t ci = ls.at("in"), co = ls.at("out"), k = ls.value("kernel", 3);
        L.params.push_back(new_param(L.name + ".weight", {co, ci, k, k}));
        if (ls.value("bias", true)) L.params.push_back(new_param(L.name + ".bias", {co}));
        break;
      }
      case LayerType::Linear: {
        const std::size_t ci = ls.at("in"), co = ls.at("out");
        L.params.push_back(new_param(L.name + ".weight", {co, ci}));
        if (ls.value("bias", true)) L.params.push_back(new_param(L.name + ".bias", {co}));
        break;
      }
      case LayerType::Affine: {
        const std::size_t c = ls.at("channels");
        L.params.push_back(new_param(L.name + ".scale", {c}));
        L.params.push_back(new_param(L.name + ".shift", {c}));
        break;
      }
      default:
        break;
    }
    index_[L.name] = layers_.size();
    layers_.push_back(std::move(L));
  }

  template <class ParamFn>
  static ad::Var apply(const Layer& L, const std::vector<ad::Var>& in, ParamFn&& param) {
    const auto& s = L.spec;
    auto bias = [&]() -> ad::Var { return L.params.size() > 1 ? param(L.params[1]) : nullptr; };
    switch (L.type) {
      case LayerType::Conv2d:
        return ad::conv2d(in[0], param(L.params[0]), bias(),
                          {s.value("stride", std::size_t{1}), s.value("padding", std::size_t{0}),
                           s.value("dilation", std::size_t{1})});
      case LayerType::Linear: return ad::linear(in[0], param(L.params[0]), bias());
      case LayerType::Affine: return ad::channel_affine(in[0], param(L.params[0]), param(L.params[1]));
      case LayerType::Relu: return ad::relu(in[0]);
      case LayerType::Tanh: return ad::tanh(in[0]);
      case LayerType::Sigmoid: return ad::sigmoid(in[0]);
      case LayerType::MaxPool:
        return ad::max_pool2d(in[0], s.value("kernel", std::size_t{2}), s.value("stride", std::size_t{2}),
                              s.value("padding", std::size_t{0}));
      case LayerType::AvgPool:
        return ad::avg_pool2d(in[0], s.value("kernel", std::size_t{2}), s.value("stride", std::size_t{2}));
      case LayerType::GlobalAvgPool: return ad::global_avg_pool(in[0]);
      case LayerType::Flatten: return ad::flatten(in[0]);
      case LayerType::Add: return ad::add(in[0], in[1]);
      case LayerType::Sub: return ad::sub(in[0], in[1]);
      case LayerType::MulBroadcast: return ad::mul_broadcast_channels(in[0], in[1]);
      case LayerType::Concat: return ad::concat_channels(in);
      case LayerType::Slice:
        return ad::slice_channels(in[0], s.at("begin").get<std::size_t>(), s.at("end").get<std::size_t>());
      case LayerType::Upsample: {
        const std::size_t f = s.value("scale", std::size_t{2});
        return ad::upsample_nearest(in[0], in[0]->shape()[1] * f, in[0]->shape()[2] * f);
      }
      case LayerType::SoftmaxChannels: return ad::softmax_channels(in[0]);
      case LayerType::ScalarAffine:
        return ad::add_scalar(ad::scale(in[0], s.value("scale", 1.0)), s.value("shift", 0.0));
      case LayerType::Input: break;
    }
    throw Error("layer '" + L.name + "' cannot be applied");
  }

  json desc_;
  std::vector<Layer> layers_;
  std::vector<NamedParam> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace semadv::models
