#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adi/matrix.hpp"

namespace adi::num {

/// A named learnable matrix. `decay` marks weights subject to weight decay.
struct Parameter {
  std::string name;
  Matrix value;
  bool decay = true;
};

/// Ordered collection of parameters. Addresses of elements are stable once
/// construction is finished; graphs hold raw pointers to them.
class ParamSet {
 public:
  Parameter& add(std::string name, Matrix value, bool decay = true);

  std::size_t size() const { return items_.size(); }
  Parameter& operator[](std::size_t i) { return items_[i]; }
  const Parameter& operator[](std::size_t i) const { return items_[i]; }

  const Parameter* find(std::string_view name) const;
  Parameter* find(std::string_view name);
  const Parameter& at(std::string_view name) const;
  Parameter& at(std::string_view name);

  /// Total number of scalar entries.
  std::size_t scalar_count() const;

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  bool operator==(const ParamSet& other) const;

 private:
  std::vector<Parameter> items_;
};

/// Handle to a node inside a Graph.
struct Var {
  std::size_t id = 0;
};

using GradientMap = std::map<const Parameter*, Matrix>;

/// Tape of primitive ops recorded in execution order, so node inputs always
/// precede the node. Values are computed eagerly; backward() walks the tape
/// in reverse.
class Graph {
 public:
  /// With track_gradients false, parameters are recorded as constants and no
  /// backward closures are kept (inference mode).
  explicit Graph(bool track_gradients = true) : track_gradients_(track_gradients) {}

  Var constant(Matrix value);
  /// Refers to p.value without copying; p must stay alive and unchanged while the graph is used.
  Var parameter(const Parameter& p);

  const Matrix& value(Var v) const { return nodes_[v.id].val(); }
  std::size_t node_count() const { return nodes_.size(); }

  Var matmul(Var a, Var b);
  /// a * b^T
  Var matmul_nt(Var a, Var b);
  Var add(Var a, Var b);
  /// Adds a 1 x cols bias to every row.
  Var add_row(Var a, Var bias);
  /// Elementwise product.
  Var mul(Var a, Var b);
  Var scale(Var a, double factor);
  /// Multiplies row r by weights[r] (weights are constants).
  Var scale_rows(Var a, std::span<const double> weights);
  Var transpose(Var a);
  Var softmax_rows(Var a);
  /// Independent softmax over each consecutive column block of the given widths.
  Var softmax_blocks(Var a, std::span<const std::size_t> widths);
  Var layernorm_rows(Var a, Var gamma, Var beta, double eps = 1e-5);
  Var conv1d_rows(Var a, Var kernel);
  /// tanh-approximated GELU.
  Var gelu(Var a);
  Var slice_rows(Var a, std::size_t begin, std::size_t count);
  Var slice_cols(Var a, std::size_t begin, std::size_t count);
  Var concat_cols(std::span<const Var> parts);

  /// Multi-head scaled dot-product attention. q is n x A, k and v are m x A,
  /// heads must divide A. key_bias (length m, optional) is added to every
  /// score row before the softmax; use a large negative value to mask keys.
  Var attention(Var q, Var k, Var v, std::size_t heads, std::span<const double> key_bias = {});

  /// Mean of all entries, as a 1 x 1 node.
  Var mean(Var a);
  /// Mean squared error over rows weighted by row_weights (all ones if empty),
  /// normalised by sum(row_weights) * cols.
  Var mse(Var prediction, Var target, std::span<const double> row_weights = {});

  /// Reverse pass from a 1 x 1 node. Every parameter leaf registered in this
  /// graph receives an entry (zeros when the output does not depend on it).
  GradientMap backward(Var output);

  /// Same as backward(output), returned aligned with `params`; parameters not
  /// registered in this graph get zero gradients.
  std::vector<Matrix> backward(Var output, const ParamSet& params);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void(Graph&)> backprop;
    const Parameter* param = nullptr;
    const char* op = "";
    bool needs_grad = false;

    const Matrix& val() const { return param != nullptr ? param->value : value; }
  };

  Var push(Matrix value, const char* op, std::initializer_list<Var> inputs, std::function<void(Graph&)> backprop);
  Matrix& grad(std::size_t id);
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  void run_backward(Var output);

  std::vector<Node> nodes_;
  std::vector<std::vector<std::size_t>> inputs_;
  bool track_gradients_ = true;
};

}  // namespace adi::num
