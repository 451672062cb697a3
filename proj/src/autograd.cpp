#include "adi/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "adi/errors.hpp"
#include "eigen_bridge.hpp"

namespace adi::num {

using detail::view;

// ---------------------------------------------------------------------------
// ParamSet

Parameter& ParamSet::add(std::string name, Matrix value, bool decay) {
  if (find(name) != nullptr) throw ContractError("ParamSet: duplicate parameter " + name);
  items_.push_back(Parameter{std::move(name), std::move(value), decay});
  return items_.back();
}

const Parameter* ParamSet::find(std::string_view name) const {
  for (const auto& p : items_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

Parameter* ParamSet::find(std::string_view name) {
  for (auto& p : items_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const Parameter& ParamSet::at(std::string_view name) const {
  const Parameter* p = find(name);
  if (p == nullptr) throw ContractError("ParamSet: no parameter named " + std::string(name));
  return *p;
}

Parameter& ParamSet::at(std::string_view name) {
  Parameter* p = find(name);
  if (p == nullptr) throw ContractError("ParamSet: no parameter named " + std::string(name));
  return *p;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.value.size();
  return n;
}

bool ParamSet::operator==(const ParamSet& other) const {
  if (items_.size() != other.items_.size()) return false;
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (items_[i].name != other.items_[i].name || items_[i].decay != other.items_[i].decay ||
        !(items_[i].value == other.items_[i].value)) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Graph plumbing

Var Graph::push(Matrix value, const char* op, std::initializer_list<Var> inputs,
                std::function<void(Graph&)> backprop) {
  require_finite(value, op);
  Node node;
  node.value = std::move(value);
  node.op = op;
  std::vector<std::size_t> ids;
  ids.reserve(inputs.size());
  for (Var v : inputs) {
    ids.push_back(v.id);
    node.needs_grad = node.needs_grad || nodes_[v.id].needs_grad;
  }
  if (node.needs_grad) node.backprop = std::move(backprop);
  nodes_.push_back(std::move(node));
  inputs_.push_back(std::move(ids));
  return Var{nodes_.size() - 1};
}

Matrix& Graph::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.val().empty()) n.grad = Matrix(n.val().rows(), n.val().cols());
  return n.grad;
}

Var Graph::constant(Matrix value) {
  require_finite(value, "constant");
  Node node;
  node.value = std::move(value);
  node.op = "constant";
  nodes_.push_back(std::move(node));
  inputs_.emplace_back();
  return Var{nodes_.size() - 1};
}

Var Graph::parameter(const Parameter& p) {
  require_finite(p.value, p.name);
  Node node;
  node.op = "parameter";
  node.param = &p;
  node.needs_grad = track_gradients_;
  nodes_.push_back(std::move(node));
  inputs_.emplace_back();
  return Var{nodes_.size() - 1};
}

void Graph::run_backward(Var output) {
  const Matrix& out = nodes_[output.id].val();
  if (out.rows() != 1 || out.cols() != 1) {
    throw ContractError("backward: output must be 1x1, got " + std::to_string(out.rows()) + "x" +
                        std::to_string(out.cols()));
  }
  for (auto& n : nodes_) n.grad = Matrix();
  grad(output.id)(0, 0) = 1.0;
  for (std::size_t i = output.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (!n.grad.all_finite()) throw NumericError(std::string("non-finite gradient reaching ") + n.op);
    if (n.backprop) n.backprop(*this);
  }
}

GradientMap Graph::backward(Var output) {
  run_backward(output);
  GradientMap grads;
  for (auto& n : nodes_) {
    if (n.param == nullptr) continue;
    auto [it, inserted] = grads.try_emplace(n.param, Matrix(n.val().rows(), n.val().cols()));
    if (!n.grad.empty()) view(it->second) += view(n.grad);
  }
  return grads;
}

std::vector<Matrix> Graph::backward(Var output, const ParamSet& params) {
  GradientMap map = backward(output);
  std::vector<Matrix> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    auto it = map.find(&p);
    out.push_back(it != map.end() ? std::move(it->second) : Matrix(p.value.rows(), p.value.cols()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra

Var Graph::matmul(Var a, Var b) {
  const Matrix& x = value(a);
  const Matrix& y = value(b);
  Matrix out = num::matmul(x, y);
  const std::size_t id = nodes_.size();
  return push(std::move(out), "matmul", {a, b}, [a, b, id](Graph& g) {
    auto dc = view(g.nodes_[id].grad);
    if (g.needs_grad(a)) view(g.grad(a.id)).noalias() += dc * view(g.value(b)).transpose();
    if (g.needs_grad(b)) view(g.grad(b.id)).noalias() += view(g.value(a)).transpose() * dc;
  });
}

Var Graph::matmul_nt(Var a, Var b) {
  const Matrix& x = value(a);
  const Matrix& y = value(b);
  if (x.cols() != y.cols()) throw ShapeError("matmul_nt: column counts differ");
  Matrix out = Matrix::uninitialized(x.rows(), y.rows());
  view(out).noalias() = view(x) * view(y).transpose();
  const std::size_t id = nodes_.size();
  return push(std::move(out), "matmul_nt", {a, b}, [a, b, id](Graph& g) {
    auto dc = view(g.nodes_[id].grad);
    if (g.needs_grad(a)) view(g.grad(a.id)).noalias() += dc * view(g.value(b));
    if (g.needs_grad(b)) view(g.grad(b.id)).noalias() += dc.transpose() * view(g.value(a));
  });
}

Var Graph::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  Matrix out = value(a);
  view(out) += view(value(b));
  const std::size_t id = nodes_.size();
  return push(std::move(out), "add", {a, b}, [a, b, id](Graph& g) {
    const Matrix& dc = g.nodes_[id].grad;
    if (g.needs_grad(a)) view(g.grad(a.id)) += view(dc);
    if (g.needs_grad(b)) view(g.grad(b.id)) += view(dc);
  });
}

Var Graph::add_row(Var a, Var bias) {
  const Matrix& x = value(a);
  const Matrix& b = value(bias);
  if (b.rows() != 1 || b.cols() != x.cols()) throw ShapeError("add_row: bias must be 1 x cols");
  Matrix out = x;
  view(out).rowwise() += view(b).row(0);
  const std::size_t id = nodes_.size();
  return push(std::move(out), "add_row", {a, bias}, [a, bias, id](Graph& g) {
    const Matrix& dc = g.nodes_[id].grad;
    if (g.needs_grad(a)) view(g.grad(a.id)) += view(dc);
    if (g.needs_grad(bias)) view(g.grad(bias.id)) += view(dc).colwise().sum();
  });
}

Var Graph::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  Matrix out = value(a);
  view(out).array() *= view(value(b)).array();
  const std::size_t id = nodes_.size();
  return push(std::move(out), "mul", {a, b}, [a, b, id](Graph& g) {
    auto dc = view(g.nodes_[id].grad).array();
    if (g.needs_grad(a)) view(g.grad(a.id)).array() += dc * view(g.value(b)).array();
    if (g.needs_grad(b)) view(g.grad(b.id)).array() += dc * view(g.value(a)).array();
  });
}

Var Graph::scale(Var a, double factor) {
  Matrix out = value(a);
  view(out) *= factor;
  const std::size_t id = nodes_.size();
  return push(std::move(out), "scale", {a}, [a, factor, id](Graph& g) {
    view(g.grad(a.id)) += factor * view(g.nodes_[id].grad);
  });
}

Var Graph::scale_rows(Var a, std::span<const double> weights) {
  const Matrix& x = value(a);
  if (weights.size() != x.rows()) throw ShapeError("scale_rows: weight count differs from row count");
  std::vector<double> w(weights.begin(), weights.end());
  Matrix out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (double& v : out.row(r)) v *= w[r];
  }
  const std::size_t id = nodes_.size();
  return push(std::move(out), "scale_rows", {a}, [a, w = std::move(w), id](Graph& g) {
    const Matrix& dc = g.nodes_[id].grad;
    Matrix& da = g.grad(a.id);
    for (std::size_t r = 0; r < dc.rows(); ++r) {
      if (w[r] == 0.0) continue;
      auto src = dc.row(r);
      auto dst = da.row(r);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += w[r] * src[c];
    }
  });
}

Var Graph::transpose(Var a) {
  Matrix out = num::transpose(value(a));
  const std::size_t id = nodes_.size();
  return push(std::move(out), "transpose", {a}, [a, id](Graph& g) {
    view(g.grad(a.id)) += view(g.nodes_[id].grad).transpose();
  });
}

// ---------------------------------------------------------------------------
// Nonlinearities

namespace {

void softmax_block_inplace(Matrix& m, std::size_t offset, std::size_t width) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    Eigen::Map<Eigen::ArrayXd> p(m.row(r).data() + offset, static_cast<Eigen::Index>(width));
    p = (p - p.maxCoeff()).exp();
    p *= 1.0 / p.sum();
  }
}

// d_in = P * (d_out - <d_out, P>) within each block of each row.
void softmax_block_backward(const Matrix& p, const Matrix& dout, Matrix& din, std::size_t offset, std::size_t width) {
  for (std::size_t r = 0; r < p.rows(); ++r) {
    const double* pr = p.row(r).data() + offset;
    const double* gr = dout.row(r).data() + offset;
    double* dr = din.row(r).data() + offset;
    double dot = 0.0;
    for (std::size_t c = 0; c < width; ++c) dot += pr[c] * gr[c];
    for (std::size_t c = 0; c < width; ++c) dr[c] += pr[c] * (gr[c] - dot);
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Var Graph::softmax_rows(Var a) {
  const std::size_t w = value(a).cols();
  return softmax_blocks(a, std::span<const std::size_t>(&w, 1));
}

Var Graph::softmax_blocks(Var a, std::span<const std::size_t> widths) {
  const std::size_t total = std::accumulate(widths.begin(), widths.end(), std::size_t{0});
  if (total != value(a).cols()) throw ShapeError("softmax_blocks: block widths do not cover the columns");
  std::vector<std::size_t> w(widths.begin(), widths.end());
  Matrix out = value(a);
  std::size_t offset = 0;
  for (std::size_t width : w) {
    if (width == 0) throw ShapeError("softmax_blocks: zero-width block");
    softmax_block_inplace(out, offset, width);
    offset += width;
  }
  const std::size_t id = nodes_.size();
  return push(std::move(out), "softmax", {a}, [a, w = std::move(w), id](Graph& g) {
    const Matrix& p = g.nodes_[id].value;
    const Matrix& dout = g.nodes_[id].grad;
    Matrix& din = g.grad(a.id);
    std::size_t off = 0;
    for (std::size_t width : w) {
      softmax_block_backward(p, dout, din, off, width);
      off += width;
    }
  });
}

Var Graph::layernorm_rows(Var a, Var gamma, Var beta, double eps) {
  const Matrix& x = value(a);
  const std::size_t cols = x.cols();
  if (value(gamma).rows() != 1 || value(gamma).cols() != cols || value(beta).rows() != 1 ||
      value(beta).cols() != cols) {
    throw ShapeError("layernorm_rows: gamma/beta must be 1 x cols");
  }
  Matrix xhat(x.rows(), cols);
  std::vector<double> inv_std(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    double mu = 0.0;
    for (double v : in) mu += v;
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (double v : in) var += (v - mu) * (v - mu);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    auto o = xhat.row(r);
    for (std::size_t c = 0; c < cols; ++c) o[c] = (in[c] - mu) * inv_std[r];
  }
  Matrix out = xhat;
  view(out).array().rowwise() *= view(value(gamma)).row(0).array();
  view(out).rowwise() += view(value(beta)).row(0);
  const std::size_t id = nodes_.size();
  return push(std::move(out), "layernorm", {a, gamma, beta},
              [a, gamma, beta, id, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& g) {
                const Matrix& dy = g.nodes_[id].grad;
                const Matrix& gm = g.value(gamma);
                const std::size_t n = dy.cols();
                if (g.needs_grad(gamma)) {
                  view(g.grad(gamma.id)) += (view(dy).array() * view(xhat).array()).matrix().colwise().sum();
                }
                if (g.needs_grad(beta)) view(g.grad(beta.id)) += view(dy).colwise().sum();
                if (!g.needs_grad(a)) return;
                Matrix& dx = g.grad(a.id);
                std::vector<double> dxhat(n);
                for (std::size_t r = 0; r < dy.rows(); ++r) {
                  auto d = dy.row(r);
                  auto xh = xhat.row(r);
                  double mean_d = 0.0;
                  double mean_dx = 0.0;
                  for (std::size_t c = 0; c < n; ++c) {
                    dxhat[c] = d[c] * gm(0, c);
                    mean_d += dxhat[c];
                    mean_dx += dxhat[c] * xh[c];
                  }
                  mean_d /= static_cast<double>(n);
                  mean_dx /= static_cast<double>(n);
                  auto o = dx.row(r);
                  for (std::size_t c = 0; c < n; ++c) o[c] += inv_std[r] * (dxhat[c] - mean_d - xh[c] * mean_dx);
                }
              });
}

Var Graph::conv1d_rows(Var a, Var kernel) {
  Matrix out = num::conv1d_rows(value(a), value(kernel));
  const std::size_t id = nodes_.size();
  return push(std::move(out), "conv1d_rows", {a, kernel}, [a, kernel, id](Graph& g) {
    auto dy = view(g.nodes_[id].grad);
    auto x = view(g.value(a));
    const auto n = dy.rows();
    const auto c = dy.cols();
    // Output row r receives tap 0 from input r-1, tap 1 from r, tap 2 from r+1.
    if (g.needs_grad(kernel)) {
      auto dk = view(g.grad(kernel.id));
      dk.middleRows(c, c).noalias() += x.transpose() * dy;
      if (n > 1) {
        dk.topRows(c).noalias() += x.topRows(n - 1).transpose() * dy.bottomRows(n - 1);
        dk.bottomRows(c).noalias() += x.bottomRows(n - 1).transpose() * dy.topRows(n - 1);
      }
    }
    if (g.needs_grad(a)) {
      auto k = view(g.value(kernel));
      auto dx = view(g.grad(a.id));
      dx.noalias() += dy * k.middleRows(c, c).transpose();
      if (n > 1) {
        dx.topRows(n - 1).noalias() += dy.bottomRows(n - 1) * k.topRows(c).transpose();
        dx.bottomRows(n - 1).noalias() += dy.topRows(n - 1) * k.bottomRows(c).transpose();
      }
    }
  });
}

Var Graph::gelu(Var a) {
  const Matrix& x = value(a);
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::Map<const Eigen::ArrayXd> v(x.data().data(), n);
  // 0.5 (1 + tanh u) = sigmoid(2u)
  Eigen::ArrayXd s = 1.0 / (1.0 + (-2.0 * kGeluC * (v + kGeluA * v.cube())).exp());
  Matrix out = Matrix::uninitialized(x.rows(), x.cols());
  Eigen::Map<Eigen::ArrayXd>(out.data().data(), n) = v * s;
  const std::size_t id = nodes_.size();
  return push(std::move(out), "gelu", {a}, [a, id, s = std::move(s)](Graph& g) {
    const auto n = s.size();
    Eigen::Map<const Eigen::ArrayXd> v(g.value(a).data().data(), n);
    Eigen::Map<const Eigen::ArrayXd> dy(g.nodes_[id].grad.data().data(), n);
    Eigen::Map<Eigen::ArrayXd> dx(g.grad(a.id).data().data(), n);
    dx += dy * (s + 2.0 * kGeluC * v * s * (1.0 - s) * (1.0 + 3.0 * kGeluA * v.square()));
  });
}

// ---------------------------------------------------------------------------
// Reshaping

Var Graph::slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Matrix& x = value(a);
  if (begin + count > x.rows()) throw ShapeError("slice_rows: range exceeds row count");
  Matrix out(count, x.cols());
  view(out) = view(x).middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
  const std::size_t id = nodes_.size();
  return push(std::move(out), "slice_rows", {a}, [a, begin, count, id](Graph& g) {
    view(g.grad(a.id)).middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count)) +=
        view(g.nodes_[id].grad);
  });
}

Var Graph::slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Matrix& x = value(a);
  if (begin + count > x.cols()) throw ShapeError("slice_cols: range exceeds column count");
  Matrix out(x.rows(), count);
  view(out) = view(x).middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
  const std::size_t id = nodes_.size();
  return push(std::move(out), "slice_cols", {a}, [a, begin, count, id](Graph& g) {
    view(g.grad(a.id)).middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count)) +=
        view(g.nodes_[id].grad);
  });
}

Var Graph::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
  const std::size_t rows = value(parts[0]).rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    if (value(p).rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += value(p).cols();
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (Var p : parts) {
    offsets.push_back(off);
    const auto w = static_cast<Eigen::Index>(value(p).cols());
    view(out).middleCols(static_cast<Eigen::Index>(off), w) = view(value(p));
    off += value(p).cols();
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  const std::size_t id = nodes_.size();
  // push() takes an initializer_list; wire the variable-length inputs here.
  require_finite(out, "concat_cols");
  Node node;
  node.value = std::move(out);
  node.op = "concat_cols";
  std::vector<std::size_t> ids;
  for (Var p : ins) {
    ids.push_back(p.id);
    node.needs_grad = node.needs_grad || nodes_[p.id].needs_grad;
  }
  if (node.needs_grad) {
    node.backprop = [ins, offsets, id](Graph& g) {
      for (std::size_t i = 0; i < ins.size(); ++i) {
        if (!g.needs_grad(ins[i])) continue;
        const auto w = static_cast<Eigen::Index>(g.value(ins[i]).cols());
        view(g.grad(ins[i].id)) += view(g.nodes_[id].grad).middleCols(static_cast<Eigen::Index>(offsets[i]), w);
      }
    };
  }
  nodes_.push_back(std::move(node));
  inputs_.push_back(std::move(ids));
  return Var{id};
}

// ---------------------------------------------------------------------------
// Attention

Var Graph::attention(Var q, Var k, Var v, std::size_t heads, std::span<const double> key_bias) {
  const Matrix& qm = value(q);
  const Matrix& km = value(k);
  const Matrix& vm = value(v);
  const std::size_t width = qm.cols();
  if (heads == 0 || width % heads != 0) throw ShapeError("attention: heads must divide the attention width");
  if (km.cols() != width || vm.cols() != width || km.rows() != vm.rows()) {
    throw ShapeError("attention: q/k/v shapes are inconsistent");
  }
  const std::size_t m = km.rows();
  if (!key_bias.empty() && key_bias.size() != m) throw ShapeError("attention: key_bias length differs from key count");

  const auto dh = static_cast<Eigen::Index>(width / heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Matrix> probs;
  probs.reserve(heads);
  Matrix out = Matrix::uninitialized(qm.rows(), width);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto off = static_cast<Eigen::Index>(h) * dh;
    Matrix s = Matrix::uninitialized(qm.rows(), m);
    view(s).noalias() = scale * view(qm).middleCols(off, dh) * view(km).middleCols(off, dh).transpose();
    if (!key_bias.empty()) {
      for (std::size_t r = 0; r < s.rows(); ++r) {
        auto row = s.row(r);
        for (std::size_t c = 0; c < m; ++c) row[c] += key_bias[c];
      }
    }
    softmax_block_inplace(s, 0, m);
    view(out).middleCols(off, dh).noalias() = view(s) * view(vm).middleCols(off, dh);
    probs.push_back(std::move(s));
  }
  const std::size_t id = nodes_.size();
  return push(std::move(out), "attention", {q, k, v}, [q, k, v, dh, scale, id, probs = std::move(probs)](Graph& g) {
    auto dout = view(g.nodes_[id].grad);
    auto qv = view(g.value(q));
    auto kv = view(g.value(k));
    auto vv = view(g.value(v));
    for (std::size_t h = 0; h < probs.size(); ++h) {
      const auto off = static_cast<Eigen::Index>(h) * dh;
      const Matrix& p = probs[h];
      auto do_h = dout.middleCols(off, dh);
      if (g.needs_grad(v)) view(g.grad(v.id)).middleCols(off, dh).noalias() += view(p).transpose() * do_h;
      if (!g.needs_grad(q) && !g.needs_grad(k)) continue;
      Matrix dp = Matrix::uninitialized(p.rows(), p.cols());
      view(dp).noalias() = do_h * vv.middleCols(off, dh).transpose();
      Matrix ds(p.rows(), p.cols());
      softmax_block_backward(p, dp, ds, 0, p.cols());
      if (g.needs_grad(q)) view(g.grad(q.id)).middleCols(off, dh).noalias() += scale * view(ds) * kv.middleCols(off, dh);
      if (g.needs_grad(k)) {
        view(g.grad(k.id)).middleCols(off, dh).noalias() += scale * view(ds).transpose() * qv.middleCols(off, dh);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

Var Graph::mean(Var a) {
  const Matrix& x = value(a);
  if (x.empty()) throw ShapeError("mean: empty matrix");
  const double n = static_cast<double>(x.size());
  Matrix out(1, 1, view(x).sum() / n);
  const std::size_t id = nodes_.size();
  return push(std::move(out), "mean", {a}, [a, n, id](Graph& g) {
    view(g.grad(a.id)).array() += g.nodes_[id].grad(0, 0) / n;
  });
}

Var Graph::mse(Var prediction, Var target, std::span<const double> row_weights) {
  const Matrix& p = value(prediction);
  const Matrix& t = value(target);
  require_same_shape(p, t, "mse");
  std::vector<double> w = row_weights.empty() ? std::vector<double>(p.rows(), 1.0)
                                              : std::vector<double>(row_weights.begin(), row_weights.end());
  if (w.size() != p.rows()) throw ShapeError("mse: row weight count differs from row count");
  const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(wsum > 0.0)) throw ContractError("mse: row weights sum to zero");
  const double denom = wsum * static_cast<double>(p.cols());
  double acc = 0.0;
  for (std::size_t r = 0; r < p.rows(); ++r) {
    if (w[r] == 0.0) continue;
    auto pr = p.row(r);
    auto tr = t.row(r);
    double row_sum = 0.0;
    for (std::size_t c = 0; c < pr.size(); ++c) row_sum += (pr[c] - tr[c]) * (pr[c] - tr[c]);
    acc += w[r] * row_sum;
  }
  const std::size_t id = nodes_.size();
  return push(Matrix(1, 1, acc / denom), "mse", {prediction, target},
              [prediction, target, w = std::move(w), denom, id](Graph& g) {
                const double up = g.nodes_[id].grad(0, 0);
                const Matrix& p = g.value(prediction);
                const Matrix& t = g.value(target);
                Matrix* dp = g.needs_grad(prediction) ? &g.grad(prediction.id) : nullptr;
                Matrix* dt = g.needs_grad(target) ? &g.grad(target.id) : nullptr;
                for (std::size_t r = 0; r < p.rows(); ++r) {
                  if (w[r] == 0.0) continue;
                  const double f = 2.0 * up * w[r] / denom;
                  for (std::size_t c = 0; c < p.cols(); ++c) {
                    const double d = f * (p(r, c) - t(r, c));
                    if (dp != nullptr) (*dp)(r, c) += d;
                    if (dt != nullptr) (*dt)(r, c) -= d;
                  }
                }
              });
}

}  // namespace adi::num
