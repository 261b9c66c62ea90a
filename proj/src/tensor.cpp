// SPDX-License-Identifier: Apache-2.0

#include "scalenav/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace scalenav::tensor {

namespace detail {

// Maximally aligned storage keeps Eigen's vectorized paths identical across buffers.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

struct Node {
  Shape shape;
  Buffer value;
  Buffer grad;
  bool requires_grad{false};
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

using detail::Buffer;
using detail::Node;
using NodePtr = std::shared_ptr<Node>;

namespace {

thread_local bool g_grad_enabled = true;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RowMat>;
using CMapM = Eigen::Map<const RowMat>;

const NodePtr& need(const Tensor& t, const char* op) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor");
  return t.node();
}

// Allocates the output node and wires parents when any input needs gradients.
NodePtr make_node(Shape shape, std::initializer_list<const Tensor*> inputs) {
  auto n = std::make_shared<Node>();
  n->value.assign(shape_size(shape), 0.0);
  n->shape = std::move(shape);
  if (!g_grad_enabled) return n;
  for (const Tensor* t : inputs) {
    if (t->node()->requires_grad) n->requires_grad = true;
  }
  if (n->requires_grad) {
    for (const Tensor* t : inputs) n->parents.push_back(t->node());
  }
  return n;
}

// Parent i when it accepts gradient, else nullptr.
Node* grad_target(Node& self, std::size_t i) {
  Node* p = self.parents[i].get();
  if (!p->requires_grad) return nullptr;
  p->ensure_grad();
  return p;
}

bool is_suffix(const Shape& big, const Shape& small) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

void check_broadcast(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return;
  if (b.size() == 1 || is_suffix(a.shape(), b.shape())) return;
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()));
}

void check_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void check_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
  }
}

template <typename F, typename DF>
Tensor unary(const Tensor& x, F f, DF df) {
  need(x, "unary");
  auto out = make_node(x.shape(), {&x});
  const auto& xv = x.node()->value;
  for (std::size_t i = 0; i < xv.size(); ++i) out->value[i] = f(xv[i]);
  if (out->requires_grad) {
    out->backward = [df](Node& self) {
      Node* px = grad_target(self, 0);
      if (!px) return;
      for (std::size_t i = 0; i < self.value.size(); ++i) {
        px->grad[i] += self.grad[i] * df(px->value[i], self.value[i]);
      }
    };
  }
  return Tensor(out);
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d < 0) throw ShapeError("negative dimension in " + shape_str(s));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

// ---------------------------------------------------------------------------
// Tensor handle

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value.assign(shape_size(shape), value);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw ShapeError("Tensor::from: " + std::to_string(values.size()) +
                     " values for shape " + shape_str(shape));
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value.assign(values.begin(), values.end());
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return full({}, value, requires_grad); }

const Shape& Tensor::shape() const { return need(*this, "shape")->shape; }
std::size_t Tensor::size() const { return need(*this, "size")->value.size(); }
std::span<double> Tensor::values() { return need(*this, "values")->value; }
std::span<const double> Tensor::values() const { return need(*this, "values")->value; }

std::span<double> Tensor::grad() {
  need(*this, "grad")->ensure_grad();
  return node_->grad;
}

std::span<const double> Tensor::grad() const {
  need(*this, "grad")->ensure_grad();
  return node_->grad;
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return need(*this, "requires_grad")->requires_grad; }
void Tensor::set_requires_grad(bool on) { need(*this, "set_requires_grad")->requires_grad = on; }

void Tensor::zero_grad() {
  auto& g = need(*this, "zero_grad")->grad;
  std::fill(g.begin(), g.end(), 0.0);
}

void Tensor::backward() const {
  if (size() != 1) throw ShapeError("backward() needs a single-element root, got " + shape_str(shape()));
  if (!node_->requires_grad) return;
  // Iterative post-order DFS: parents precede children in `order`.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node* p = n->parents[i++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward) {
      n->ensure_grad();
      n->backward(*n);
    }
  }
}

Tensor Tensor::detach() const {
  return Tensor::from(shape(), {node_->value.begin(), node_->value.end()}, false);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  need(a, "matmul");
  need(b, "matmul");
  check_rank(a, 2, "matmul");
  check_rank(b, 2, "matmul");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  auto out = make_node({m, n}, {&a, &b});
  MapM(out->value.data(), m, n).noalias() =
      CMapM(a.node()->value.data(), m, k) * CMapM(b.node()->value.data(), k, n);
  if (out->requires_grad) {
    out->backward = [m, k, n](Node& self) {
      CMapM g(self.grad.data(), m, n);
      if (Node* pa = grad_target(self, 0)) {
        MapM(pa->grad.data(), m, k).noalias() +=
            g * CMapM(self.parents[1]->value.data(), k, n).transpose();
      }
      if (Node* pb = grad_target(self, 1)) {
        MapM(pb->grad.data(), k, n).noalias() +=
            CMapM(self.parents[0]->value.data(), m, k).transpose() * g;
      }
    };
  }
  return Tensor(out);
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& bias) {
  need(x, "affine");
  need(w, "affine");
  need(bias, "affine");
  check_rank(x, 2, "affine");
  check_rank(w, 2, "affine");
  const int m = x.dim(0), k = x.dim(1), n = w.dim(1);
  if (w.dim(0) != k || bias.size() != static_cast<std::size_t>(n)) {
    throw ShapeError("affine: incompatible shapes " + shape_str(x.shape()) + ", " +
                     shape_str(w.shape()) + ", " + shape_str(bias.shape()));
  }
  auto out = make_node({m, n}, {&x, &w, &bias});
  MapM o(out->value.data(), m, n);
  o.noalias() = CMapM(x.node()->value.data(), m, k) * CMapM(w.node()->value.data(), k, n);
  o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.node()->value.data(), n);
  if (out->requires_grad) {
    out->backward = [m, k, n](Node& self) {
      CMapM g(self.grad.data(), m, n);
      if (Node* px = grad_target(self, 0)) {
        MapM(px->grad.data(), m, k).noalias() +=
            g * CMapM(self.parents[1]->value.data(), k, n).transpose();
      }
      if (Node* pw = grad_target(self, 1)) {
        MapM(pw->grad.data(), k, n).noalias() +=
            CMapM(self.parents[0]->value.data(), m, k).transpose() * g;
      }
      if (Node* pb = grad_target(self, 2)) {
        Eigen::Map<Eigen::RowVectorXd>(pb->grad.data(), n) += g.colwise().sum();
      }
    };
  }
  return Tensor(out);
}

// ---------------------------------------------------------------------------
// Elementwise binary

Tensor add(const Tensor& a, const Tensor& b) {
  need(a, "add");
  need(b, "add");
  check_broadcast(a, b, "add");
  auto out = make_node(a.shape(), {&a, &b});
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  const std::size_t nb = bv.size();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] + bv[i % nb];
  if (out->requires_grad) {
    out->backward = [nb](Node& self) {
      if (Node* pa = grad_target(self, 0)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
      }
      if (Node* pb = grad_target(self, 1)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i % nb] += self.grad[i];
      }
    };
  }
  return Tensor(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  need(a, "sub");
  need(b, "sub");
  check_broadcast(a, b, "sub");
  auto out = make_node(a.shape(), {&a, &b});
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  const std::size_t nb = bv.size();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] - bv[i % nb];
  if (out->requires_grad) {
    out->backward = [nb](Node& self) {
      if (Node* pa = grad_target(self, 0)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
      }
      if (Node* pb = grad_target(self, 1)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i % nb] -= self.grad[i];
      }
    };
  }
  return Tensor(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  need(a, "mul");
  need(b, "mul");
  check_broadcast(a, b, "mul");
  auto out = make_node(a.shape(), {&a, &b});
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  const std::size_t nb = bv.size();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] * bv[i % nb];
  if (out->requires_grad) {
    out->backward = [nb](Node& self) {
      const auto& av = self.parents[0]->value;
      const auto& bv = self.parents[1]->value;
      if (Node* pa = grad_target(self, 0)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * bv[i % nb];
      }
      if (Node* pb = grad_target(self, 1)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i % nb] += self.grad[i] * av[i];
      }
    };
  }
  return Tensor(out);
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  need(a, "minimum");
  need(b, "minimum");
  check_same(a, b, "minimum");
  auto out = make_node(a.shape(), {&a, &b});
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = std::min(av[i], bv[i]);
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      const auto& av = self.parents[0]->value;
      const auto& bv = self.parents[1]->value;
      Node* pa = grad_target(self, 0);
      Node* pb = grad_target(self, 1);
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (av[i] <= bv[i]) {
          if (pa) pa->grad[i] += self.grad[i];
        } else if (pb) {
          pb->grad[i] += self.grad[i];
        }
      }
    };
  }
  return Tensor(out);
}

Tensor scale(const Tensor& x, double c) {
  return unary(x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& x, double c) {
  return unary(x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor square(const Tensor& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

// ---------------------------------------------------------------------------
// Convolutions

namespace {

struct ConvGeom {
  int n, c, h, w;  // tensor the window slides over
  int k, s, p;
  int ho, wo;      // window grid
  int rows() const { return c * k * k; }
  int cols() const { return n * ho * wo; }
};

// cols[(c*k + ki)*k + kj][n*ho*wo + oh*wo + ow] = x[n][c][oh*s - p + ki][ow*s - p + kj]
void im2col(const double* x, const ConvGeom& g, double* cols) {
  const int plane = g.ho * g.wo;
  const std::size_t ncols = static_cast<std::size_t>(g.cols());
  for (int c = 0; c < g.c; ++c) {
    for (int ki = 0; ki < g.k; ++ki) {
      for (int kj = 0; kj < g.k; ++kj) {
        double* dst = cols + static_cast<std::size_t>((c * g.k + ki) * g.k + kj) * ncols;
        for (int n = 0; n < g.n; ++n) {
          const double* src = x + (static_cast<std::size_t>(n) * g.c + c) * g.h * g.w;
          double* d = dst + static_cast<std::size_t>(n) * plane;
          for (int oh = 0; oh < g.ho; ++oh) {
            const int ih = oh * g.s - g.p + ki;
            double* row = d + oh * g.wo;
            if (ih < 0 || ih >= g.h) {
              std::fill(row, row + g.wo, 0.0);
              continue;
            }
            for (int ow = 0; ow < g.wo; ++ow) {
              const int iw = ow * g.s - g.p + kj;
              row[ow] = (iw >= 0 && iw < g.w) ? src[ih * g.w + iw] : 0.0;
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates into x.
void col2im(const double* cols, const ConvGeom& g, double* x) {
  const int plane = g.ho * g.wo;
  const std::size_t ncols = static_cast<std::size_t>(g.cols());
  for (int c = 0; c < g.c; ++c) {
    for (int ki = 0; ki < g.k; ++ki) {
      for (int kj = 0; kj < g.k; ++kj) {
        const double* srcrow = cols + static_cast<std::size_t>((c * g.k + ki) * g.k + kj) * ncols;
        for (int n = 0; n < g.n; ++n) {
          double* dst = x + (static_cast<std::size_t>(n) * g.c + c) * g.h * g.w;
          const double* s = srcrow + static_cast<std::size_t>(n) * plane;
          for (int oh = 0; oh < g.ho; ++oh) {
            const int ih = oh * g.s - g.p + ki;
            if (ih < 0 || ih >= g.h) continue;
            for (int ow = 0; ow < g.wo; ++ow) {
              const int iw = ow * g.s - g.p + kj;
              if (iw >= 0 && iw < g.w) dst[ih * g.w + iw] += s[oh * g.wo + ow];
            }
          }
        }
      }
    }
  }
}

// [N, C, P] <-> [C, N*P]
void nchw_to_cm(const double* src, int n, int c, int plane, double* dst) {
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j)
      std::copy_n(src + (static_cast<std::size_t>(i) * c + j) * plane, plane,
                  dst + (static_cast<std::size_t>(j) * n + i) * plane);
}

void cm_to_nchw_add(const double* src, int n, int c, int plane, double* dst) {
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      const double* s = src + (static_cast<std::size_t>(j) * n + i) * plane;
      double* d = dst + (static_cast<std::size_t>(i) * c + j) * plane;
      for (int q = 0; q < plane; ++q) d[q] += s[q];
    }
}

void check_conv_args(const Tensor& x, const Tensor& w, const Tensor& bias, int bias_len,
                     int in_ch, int stride, int pad, const char* op) {
  if (x.rank() != 4 || w.rank() != 4 || w.dim(2) != w.dim(3) || x.dim(1) != in_ch ||
      bias.size() != static_cast<std::size_t>(bias_len) || stride < 1 || pad < 0) {
    throw ShapeError(std::string(op) + ": incompatible shapes x" + shape_str(x.shape()) + " w" +
                     shape_str(w.shape()) + " b" + shape_str(bias.shape()));
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
  need(x, "conv2d");
  need(w, "conv2d");
  need(bias, "conv2d");
  if (x.rank() != 4 || w.rank() != 4) {
    throw ShapeError("conv2d: expected rank-4 x and w, got " + shape_str(x.shape()) + " and " +
                     shape_str(w.shape()));
  }
  const int co = w.dim(0), k = w.dim(2);
  check_conv_args(x, w, bias, co, w.dim(1), stride, pad, "conv2d");
  ConvGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), k, stride, pad, 0, 0};
  g.ho = (g.h + 2 * pad - k) / stride + 1;
  g.wo = (g.w + 2 * pad - k) / stride + 1;
  if (g.ho < 1 || g.wo < 1) throw ShapeError("conv2d: empty output for x" + shape_str(x.shape()));
  const int kk = g.rows(), np = g.cols(), plane = g.ho * g.wo;

  auto cols = std::make_shared<Buffer>(static_cast<std::size_t>(kk) * np);
  im2col(x.node()->value.data(), g, cols->data());
  RowMat om = CMapM(w.node()->value.data(), co, kk) * CMapM(cols->data(), kk, np);

  auto out = make_node({g.n, co, g.ho, g.wo}, {&x, &w, &bias});
  const auto& bv = bias.node()->value;
  for (int n = 0; n < g.n; ++n)
    for (int c = 0; c < co; ++c) {
      double* d = out->value.data() + (static_cast<std::size_t>(n) * co + c) * plane;
      const double* s = om.data() + static_cast<std::size_t>(c) * np + static_cast<std::size_t>(n) * plane;
      for (int q = 0; q < plane; ++q) d[q] = s[q] + bv[c];
    }

  if (out->requires_grad) {
    out->backward = [g, co, kk, np, plane, cols](Node& self) {
      Buffer dm(static_cast<std::size_t>(co) * np, 0.0);
      for (int n = 0; n < g.n; ++n)
        for (int c = 0; c < co; ++c)
          std::copy_n(self.grad.data() + (static_cast<std::size_t>(n) * co + c) * plane, plane,
                      dm.data() + static_cast<std::size_t>(c) * np + static_cast<std::size_t>(n) * plane);
      CMapM dmat(dm.data(), co, np);
      if (Node* pw = grad_target(self, 1)) {
        MapM(pw->grad.data(), co, kk).noalias() += dmat * CMapM(cols->data(), kk, np).transpose();
      }
      if (Node* pb = grad_target(self, 2)) {
        Eigen::Map<Eigen::VectorXd>(pb->grad.data(), co) += dmat.rowwise().sum();
      }
      if (Node* px = grad_target(self, 0)) {
        RowMat dcols = CMapM(self.parents[1]->value.data(), co, kk).transpose() * dmat;
        col2im(dcols.data(), g, px->grad.data());
      }
    };
  }
  return Tensor(out);
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad,
                        int out_pad_h, int out_pad_w) {
  need(x, "conv_transpose2d");
  need(w, "conv_transpose2d");
  need(bias, "conv_transpose2d");
  if (x.rank() != 4 || w.rank() != 4) {
    throw ShapeError("conv_transpose2d: expected rank-4 x and w, got " + shape_str(x.shape()) +
                     " and " + shape_str(w.shape()));
  }
  const int ci = w.dim(0), co = w.dim(1), k = w.dim(2);
  check_conv_args(x, w, bias, co, ci, stride, pad, "conv_transpose2d");
  if (out_pad_h < 0 || out_pad_h >= stride || out_pad_w < 0 || out_pad_w >= stride) {
    throw ShapeError("conv_transpose2d: output padding must lie in [0, stride)");
  }
  const int n = x.dim(0), h = x.dim(2), wd = x.dim(3);
  const int ho = (h - 1) * stride - 2 * pad + k + out_pad_h;
  const int wo = (wd - 1) * stride - 2 * pad + k + out_pad_w;
  if (ho < 1 || wo < 1) throw ShapeError("conv_transpose2d: empty output for x" + shape_str(x.shape()));
  // Geometry of the adjoint convolution: it slides over the output.
  const ConvGeom g{n, co, ho, wo, k, stride, pad, h, wd};
  const int kk = g.rows(), np = g.cols(), in_plane = h * wd, out_plane = ho * wo;

  auto xm = std::make_shared<Buffer>(static_cast<std::size_t>(ci) * np);
  nchw_to_cm(x.node()->value.data(), n, ci, in_plane, xm->data());
  RowMat cols = CMapM(w.node()->value.data(), ci, kk).transpose() * CMapM(xm->data(), ci, np);

  auto out = make_node({n, co, ho, wo}, {&x, &w, &bias});
  col2im(cols.data(), g, out->value.data());
  const auto& bv = bias.node()->value;
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < co; ++c) {
      double* d = out->value.data() + (static_cast<std::size_t>(i) * co + c) * out_plane;
      for (int q = 0; q < out_plane; ++q) d[q] += bv[c];
    }

  if (out->requires_grad) {
    out->backward = [g, ci, co, kk, np, in_plane, out_plane, xm](Node& self) {
      Node* px = grad_target(self, 0);
      Node* pw = grad_target(self, 1);
      if (px || pw) {
        Buffer dcols(static_cast<std::size_t>(kk) * np);
        im2col(self.grad.data(), g, dcols.data());
        CMapM dc(dcols.data(), kk, np);
        if (pw) {
          MapM(pw->grad.data(), ci, kk).noalias() += CMapM(xm->data(), ci, np) * dc.transpose();
        }
        if (px) {
          RowMat dxm = CMapM(self.parents[1]->value.data(), ci, kk) * dc;
          cm_to_nchw_add(dxm.data(), g.n, ci, in_plane, px->grad.data());
        }
      }
      if (Node* pb = grad_target(self, 2)) {
        for (int i = 0; i < g.n; ++i)
          for (int c = 0; c < co; ++c) {
            const double* s = self.grad.data() + (static_cast<std::size_t>(i) * co + c) * out_plane;
            pb->grad[c] += std::accumulate(s, s + out_plane, 0.0);
          }
      }
    };
  }
  return Tensor(out);
}

// ---------------------------------------------------------------------------
// Shape manipulation and reductions

Tensor reshape(const Tensor& x, Shape shape) {
  need(x, "reshape");
  if (shape_size(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  auto out = make_node(std::move(shape), {&x});
  out->value = x.node()->value;
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      if (Node* px = grad_target(self, 0)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.grad[i];
      }
    };
  }
  return Tensor(out);
}

Tensor slice_cols(const Tensor& x, int begin, int len) {
  need(x, "slice_cols");
  check_rank(x, 2, "slice_cols");
  const int m = x.dim(0), n = x.dim(1);
  if (begin < 0 || len < 0 || begin + len > n) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(begin + len) +
                     ") out of range for " + shape_str(x.shape()));
  }
  auto out = make_node({m, len}, {&x});
  const auto& xv = x.node()->value;
  for (int i = 0; i < m; ++i)
    std::copy_n(xv.data() + static_cast<std::size_t>(i) * n + begin, len,
                out->value.data() + static_cast<std::size_t>(i) * len);
  if (out->requires_grad) {
    out->backward = [m, n, begin, len](Node& self) {
      if (Node* px = grad_target(self, 0)) {
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < len; ++j)
            px->grad[static_cast<std::size_t>(i) * n + begin + j] +=
                self.grad[static_cast<std::size_t>(i) * len + j];
      }
    };
  }
  return Tensor(out);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const int m = parts.front().dim(0);
  int total = 0;
  std::vector<int> widths;
  for (const auto& t : parts) {
    need(t, "concat_cols");
    check_rank(t, 2, "concat_cols");
    if (t.dim(0) != m) {
      throw ShapeError("concat_cols: row mismatch " + shape_str(parts.front().shape()) + " vs " +
                       shape_str(t.shape()));
    }
    widths.push_back(t.dim(1));
    total += t.dim(1);
  }
  auto out = std::make_shared<Node>();
  out->shape = {m, total};
  out->value.assign(static_cast<std::size_t>(m) * total, 0.0);
  if (g_grad_enabled) {
    for (const auto& t : parts) out->requires_grad = out->requires_grad || t.requires_grad();
    if (out->requires_grad)
      for (const auto& t : parts) out->parents.push_back(t.node());
  }
  int off = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto& v = parts[pi].node()->value;
    for (int i = 0; i < m; ++i)
      std::copy_n(v.data() + static_cast<std::size_t>(i) * widths[pi], widths[pi],
                  out->value.data() + static_cast<std::size_t>(i) * total + off);
    off += widths[pi];
  }
  if (out->requires_grad) {
    out->backward = [m, total, widths](Node& self) {
      int off = 0;
      for (std::size_t pi = 0; pi < widths.size(); ++pi) {
        if (Node* p = grad_target(self, pi)) {
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < widths[pi]; ++j)
              p->grad[static_cast<std::size_t>(i) * widths[pi] + j] +=
                  self.grad[static_cast<std::size_t>(i) * total + off + j];
        }
        off += widths[pi];
      }
    };
  }
  return Tensor(out);
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Shape shape = parts.front().shape();
  if (shape.empty()) throw ShapeError("concat_rows: scalar input");
  int rows = 0;
  std::vector<std::size_t> sizes;
  for (const auto& t : parts) {
    need(t, "concat_rows");
    if (t.rank() != shape.size() || !std::equal(shape.begin() + 1, shape.end(), t.shape().begin() + 1)) {
      throw ShapeError("concat_rows: trailing shape mismatch " + shape_str(shape) + " vs " +
                       shape_str(t.shape()));
    }
    rows += t.dim(0);
    sizes.push_back(t.size());
  }
  shape[0] = rows;
  auto out = std::make_shared<Node>();
  out->shape = shape;
  out->value.reserve(shape_size(shape));
  for (const auto& t : parts) {
    const auto& v = t.node()->value;
    out->value.insert(out->value.end(), v.begin(), v.end());
  }
  if (g_grad_enabled) {
    for (const auto& t : parts) out->requires_grad = out->requires_grad || t.requires_grad();
    if (out->requires_grad)
      for (const auto& t : parts) out->parents.push_back(t.node());
  }
  if (out->requires_grad) {
    out->backward = [sizes](Node& self) {
      std::size_t off = 0;
      for (std::size_t pi = 0; pi < sizes.size(); ++pi) {
        if (Node* p = grad_target(self, pi)) {
          for (std::size_t j = 0; j < sizes[pi]; ++j) p->grad[j] += self.grad[off + j];
        }
        off += sizes[pi];
      }
    };
  }
  return Tensor(out);
}

Tensor reduce_sum(const Tensor& x) {
  need(x, "reduce_sum");
  auto out = make_node({}, {&x});
  const auto& xv = x.node()->value;
  out->value[0] = std::accumulate(xv.begin(), xv.end(), 0.0);
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      if (Node* px = grad_target(self, 0)) {
        for (double& g : px->grad) g += self.grad[0];
      }
    };
  }
  return Tensor(out);
}

Tensor reduce_mean(const Tensor& x) {
  if (x.size() == 0) throw ShapeError("reduce_mean of an empty tensor");
  return scale(reduce_sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor sum_cols(const Tensor& x) {
  need(x, "sum_cols");
  check_rank(x, 2, "sum_cols");
  const int m = x.dim(0), n = x.dim(1);
  auto out = make_node({m}, {&x});
  const auto& xv = x.node()->value;
  for (int i = 0; i < m; ++i) {
    const double* r = xv.data() + static_cast<std::size_t>(i) * n;
    out->value[i] = std::accumulate(r, r + n, 0.0);
  }
  if (out->requires_grad) {
    out->backward = [m, n](Node& self) {
      if (Node* px = grad_target(self, 0)) {
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) px->grad[static_cast<std::size_t>(i) * n + j] += self.grad[i];
      }
    };
  }
  return Tensor(out);
}

Tensor mse(const Tensor& a, const Tensor& b) {
  check_same(a, b, "mse");
  return reduce_mean(square(sub(a, b)));
}

Tensor gaussian_kl(const Tensor& mu, const Tensor& log_var) {
  check_same(mu, log_var, "gaussian_kl");
  const double batch = mu.rank() >= 2 ? static_cast<double>(mu.dim(0)) : 1.0;
  // -1/2 sum(1 + log_var - mu^2 - exp(log_var))
  Tensor inner = sub(sub(add_scalar(log_var, 1.0), square(mu)), exp(log_var));
  return scale(reduce_sum(inner), -0.5 / batch);
}

Tensor reparameterize(const Tensor& mu, const Tensor& log_var, std::mt19937_64& rng) {
  check_same(mu, log_var, "reparameterize");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> eps(mu.size());
  for (double& e : eps) e = normal(rng);
  Tensor noise = Tensor::from(mu.shape(), std::move(eps));
  Tensor sigma = exp(scale(clamp(log_var, kLogVarMin, kLogVarMax), 0.5));
  return add(mu, mul(sigma, noise));
}

// ---------------------------------------------------------------------------
// LSTM

LstmCellParams declare_lstm(ParamSet& params, const std::string& prefix, int input, int hidden) {
  LstmCellParams p;
  p.input = input;
  p.hidden = hidden;
  p.w_x = params.add(prefix + ".w_x", {input, 4 * hidden});
  p.w_h = params.add(prefix + ".w_h", {hidden, 4 * hidden});
  p.bias = params.add(prefix + ".bias", {4 * hidden});
  return p;
}

std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                                    const LstmCellParams& p) {
  if (x.rank() != 2 || x.dim(1) != p.input || h_prev.shape() != Shape{x.dim(0), p.hidden} ||
      c_prev.shape() != h_prev.shape()) {
    throw ShapeError("lstm_cell: x" + shape_str(x.shape()) + " h" + shape_str(h_prev.shape()) +
                     " c" + shape_str(c_prev.shape()) + " for input " + std::to_string(p.input) +
                     ", hidden " + std::to_string(p.hidden));
  }
  const int hd = p.hidden;
  Tensor gates = add(affine(x, p.w_x, p.bias), matmul(h_prev, p.w_h));
  Tensor i = sigmoid(slice_cols(gates, 0, hd));
  Tensor f = sigmoid(slice_cols(gates, hd, hd));
  Tensor g = tanh(slice_cols(gates, 2 * hd, hd));
  Tensor o = sigmoid(slice_cols(gates, 3 * hd, hd));
  Tensor c = add(mul(f, c_prev), mul(i, g));
  Tensor h = mul(o, tanh(c));
  return {h, c};
}

}  // namespace scalenav::tensor
