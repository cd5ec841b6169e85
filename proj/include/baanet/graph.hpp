#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <deque>
#include <vector>

#include "baanet/tensor.hpp"

namespace baanet {

/// Named learnable tensors, kept in insertion order so iteration (and
/// therefore checkpoints and optimizer updates) is deterministic.
class ParamStore {
 public:
  std::size_t add(std::string name, Tensor value) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), std::move(value)});
    return entries_.size() - 1;
  }

  [[nodiscard]] bool contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }

  [[nodiscard]] std::size_t index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
    return it->second;
  }

  [[nodiscard]] std::size_t size() const { return entries_.size(); }
  [[nodiscard]] const std::string& name(std::size_t i) const { return entries_.at(i).name; }
  [[nodiscard]] Tensor& value(std::size_t i) { return entries_.at(i).value; }
  [[nodiscard]] const Tensor& value(std::size_t i) const { return entries_.at(i).value; }
  [[nodiscard]] Tensor& value(std::string_view name) { return value(index_of(name)); }
  [[nodiscard]] const Tensor& value(std::string_view name) const { return value(index_of(name)); }

  [[nodiscard]] std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
  }

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      if (a.entries_[i].name != b.entries_[i].name || !(a.entries_[i].value == b.entries_[i].value)) return false;
    }
    return true;
  }

 private:
  struct Entry {
    std::string name;
    Tensor value;
  };
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Per-parameter gradients aligned with a ParamStore; unset slots mean
/// "parameter not reached".
using ParamGrads = std::vector<std::optional<Tensor>>;

class Graph;

/// Handle to a node in a Graph.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  [[nodiscard]] const Tensor& value() const;
  [[nodiscard]] const Shape& shape() const { return value().shape(); }
  [[nodiscard]] std::size_t id() const { return id_; }
  [[nodiscard]] Graph* graph() const { return graph_; }
  [[nodiscard]] bool valid() const { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradient slots handed to a backward function: one per input, nullptr
/// where that input does not need a gradient.
using GradSlots = std::span<Tensor* const>;
using BackwardFn = std::function<void(const Tensor& grad_out, GradSlots grad_in)>;

/// Tape of operations recorded during a forward pass. Reverse-mode
/// differentiation walks the tape backwards; nodes are already in
/// topological order because inputs must exist before an op is recorded.
class Graph {
 public:
  explicit Graph(const ParamStore* params = nullptr) : params_(params) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = delete;
  Graph& operator=(Graph&&) = delete;

  /// Constant leaf (no gradient).
  Var input(Tensor value) { return push(std::move(value), {}, nullptr, false); }

  /// Leaf that collects a gradient but is not a stored parameter.
  Var variable(Tensor value) { return push(std::move(value), {}, nullptr, true); }

  /// Leaf bound to a named parameter. Repeated calls return the same node.
  Var param(std::string_view name) {
    if (!params_) throw std::logic_error("graph has no parameter store");
    const std::size_t idx = params_->index_of(name);
    if (auto it = param_nodes_.find(idx); it != param_nodes_.end()) return {this, it->second};
    Var v = push(params_->value(idx), {}, nullptr, true);
    nodes_[v.id()].param = idx;
    param_nodes_.emplace(idx, v.id());
    return v;
  }

  /// Records an op. The backward function receives the output gradient and
  /// one slot per input.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
    bool needs = false;
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    for (const Var& in : inputs) {
      if (in.graph() != this) throw std::logic_error("op input belongs to a different graph");
      ids.push_back(in.id());
      needs = needs || nodes_[in.id()].requires_grad;
    }
    return push(std::move(value), std::move(ids), needs ? std::move(backward) : nullptr, needs);
  }

  [[nodiscard]] const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  [[nodiscard]] bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }

  /// Gradient of the last backward() w.r.t. a node; nullopt if unreached.
  [[nodiscard]] const Tensor* grad(Var v) const {
    const Node& n = nodes_.at(v.id());
    return n.grad.empty() ? nullptr : &n.grad;
  }

  /// Reverse sweep from a scalar loss.
  void backward(Var loss) {
    if (loss.graph() != this) throw std::logic_error("loss belongs to a different graph");
    Node& root = nodes_.at(loss.id());
    if (root.value.numel() != 1) {
      throw ShapeError("backward requires a scalar loss, got shape " + root.value.shape().str());
    }
    for (Node& n : nodes_) n.grad = Tensor();
    root.grad = Tensor(root.value.shape(), 1.0);

    std::vector<Tensor*> slots;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty() || !n.backward) continue;
      slots.assign(n.inputs.size(), nullptr);
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        Node& in = nodes_[n.inputs[k]];
        if (!in.requires_grad) continue;
        if (in.grad.empty()) in.grad = Tensor(in.value.shape(), 0.0);
        slots[k] = &in.grad;
      }
      n.backward(n.grad, slots);
    }
  }

  /// Gradients for every parameter of the store that this graph touched.
  [[nodiscard]] ParamGrads param_grads() const {
    if (!params_) return {};
    ParamGrads out(params_->size());
    for (const auto& [idx, node] : param_nodes_) {
      const Tensor& g = nodes_[node].grad;
      out[idx] = g.empty() ? Tensor(nodes_[node].value.shape(), 0.0) : g;
    }
    return out;
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    std::optional<std::size_t> param;
  };

  Var push(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), Tensor(), std::move(inputs), std::move(backward), requires_grad, {}});
    return {this, nodes_.size() - 1};
  }

  const ParamStore* params_;
  std::deque<Node> nodes_;  // deque: references to node values stay valid as the graph grows
  std::unordered_map<std::size_t, std::size_t> param_nodes_;
};

inline const Tensor& Var::value() const {
  if (!graph_) throw std::logic_error("dereferencing an empty Var");
  return graph_->value(id_);
}

}  // namespace baanet
