#include "mot3d/autodiff.hpp"

#include "mot3d/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace mot3d::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMat>;
using RowMap = Eigen::Map<RowMat>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw ShapeMismatch(op + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

bool wants_grad(const std::shared_ptr<Node>& n) { return n->requires_grad; }

}  // namespace

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (const int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

std::vector<double>& Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor Tensor::constant(Shape shape, std::vector<double> values) { return leaf(std::move(shape), std::move(values), false); }

Tensor Tensor::zeros(Shape shape) {
  const std::size_t n = shape_size(shape);
  return leaf(std::move(shape), std::vector<double>(n, 0.0), false);
}

Tensor Tensor::leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  for (const int d : shape) {
    if (d <= 0) throw ShapeMismatch("Tensor: non-positive dimension in " + shape_string(shape));
  }
  if (shape_size(shape) != values.size()) {
    throw ShapeMismatch("Tensor: shape " + shape_string(shape) + " needs " + std::to_string(shape_size(shape)) +
                        " values, got " + std::to_string(values.size()));
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

const Shape& Tensor::shape() const { return node_->shape; }
int Tensor::dim(int i) const { return node_->shape.at(static_cast<std::size_t>(i)); }
int Tensor::rank() const { return static_cast<int>(node_->shape.size()); }
std::size_t Tensor::size() const { return node_->value.size(); }
std::span<const double> Tensor::values() const { return node_->value; }
std::span<double> Tensor::mutable_values() { return node_->value; }
bool Tensor::requires_grad() const { return node_->requires_grad; }
std::span<const double> Tensor::grad() const { return node_->grad; }
void Tensor::zero_grad() { node_->grad.clear(); }

double Tensor::item() const {
  if (size() != 1) throw ShapeMismatch("item: tensor of shape " + shape_string(shape()) + " is not a scalar");
  return node_->value[0];
}

void Tensor::backward() const {
  if (size() != 1) throw ShapeMismatch("backward: root of shape " + shape_string(shape()) + " is not a scalar");
  // Iterative post-order DFS for a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  for (auto& t : inputs) {
    n->requires_grad = n->requires_grad || t.requires_grad();
    n->parents.push_back(t.node_ptr());
  }
  if (n->requires_grad) n->backward_fn = std::move(backward_fn);
  return Tensor(std::move(n));
}

// ---------------------------------------------------------------------------

Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || bias.rank() != 1 || bias.dim(0) != weight.dim(0)) {
    shape_error("affine(weight, bias)", weight.shape(), bias.shape());
  }
  const int out = weight.dim(0);
  const int in = weight.dim(1);
  int rows = 0;
  Shape result_shape;
  if (x.rank() == 1 && x.dim(0) == in) {
    rows = 1;
    result_shape = {out};
  } else if (x.rank() == 2 && x.dim(1) == in) {
    rows = x.dim(0);
    result_shape = {rows, out};
  } else {
    shape_error("affine(x, weight)", x.shape(), weight.shape());
  }

  std::vector<double> y(static_cast<std::size_t>(rows) * out);
  const ConstRowMap w(weight.values().data(), out, in);
  const ConstVecMap b(bias.values().data(), out);
  for (int r = 0; r < rows; ++r) {
    const ConstVecMap xr(x.values().data() + static_cast<std::size_t>(r) * in, in);
    VecMap yr(y.data() + static_cast<std::size_t>(r) * out, out);
    yr.noalias() = w * xr;
    yr += b;
  }

  return make_result(std::move(result_shape), std::move(y), {x, weight, bias}, [rows, out, in](Node& n) {
    const ConstRowMap gy(n.grad.data(), rows, out);
    const auto& xn = n.parents[0];
    const auto& wn = n.parents[1];
    const auto& bn = n.parents[2];
    if (wants_grad(xn)) {
      RowMap gx(xn->grad_buffer().data(), rows, in);
      gx.noalias() += gy * ConstRowMap(wn->value.data(), out, in);
    }
    if (wants_grad(wn)) {
      RowMap gw(wn->grad_buffer().data(), out, in);
      gw.noalias() += gy.transpose() * ConstRowMap(xn->value.data(), rows, in);
    }
    if (wants_grad(bn)) {
      VecMap gb(bn->grad_buffer().data(), out);
      gb += gy.colwise().sum().transpose();
    }
  });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double v = x.at(i);
    y[i] = v > 0.0 ? v : slope * v;
  }
  return make_result(x.shape(), std::move(y), {x}, [slope](Node& n) {
    auto& xn = n.parents[0];
    auto& gx = xn->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += n.grad[i] * (xn->value[i] > 0.0 ? 1.0 : slope);
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double v = x.at(i);
    // Branching keeps exp() from overflowing for large |v|.
    if (v >= 0.0) {
      y[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      y[i] = e / (1.0 + e);
    }
  }
  return make_result(x.shape(), std::move(y), {x}, [](Node& n) {
    auto& gx = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += n.grad[i] * n.value[i] * (1.0 - n.value[i]);
  });
}

Tensor conv3d(const Tensor& x, const Tensor& kernels, const Tensor& bias, int stride, int padding) {
  if (x.rank() != 4 || kernels.rank() != 5 || kernels.dim(1) != x.dim(0) || kernels.dim(2) != kernels.dim(3) ||
      kernels.dim(2) != kernels.dim(4)) {
    shape_error("conv3d(x, kernels)", x.shape(), kernels.shape());
  }
  if (bias.rank() != 1 || bias.dim(0) != kernels.dim(0)) shape_error("conv3d(kernels, bias)", kernels.shape(), bias.shape());
  if (stride < 1 || padding < 0) throw ShapeMismatch("conv3d: stride must be >= 1 and padding >= 0");

  const int c_in = x.dim(0), d = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int c_out = kernels.dim(0), k = kernels.dim(2);
  const int od = (d + 2 * padding - k) / stride + 1;
  const int oh = (h + 2 * padding - k) / stride + 1;
  const int ow = (w + 2 * padding - k) / stride + 1;
  if (od <= 0 || oh <= 0 || ow <= 0) shape_error("conv3d(x, kernels)", x.shape(), kernels.shape());

  struct Geo {
    int c_in, d, h, w, c_out, k, od, oh, ow, stride, padding;
  };
  const Geo g{c_in, d, h, w, c_out, k, od, oh, ow, stride, padding};

  auto xi = [g](int c, int z, int y, int xx) {
    return ((static_cast<std::size_t>(c) * g.d + z) * g.h + y) * g.w + xx;
  };
  auto ki = [g](int o, int c, int z, int y, int xx) {
    return (((static_cast<std::size_t>(o) * g.c_in + c) * g.k + z) * g.k + y) * g.k + xx;
  };
  auto oi = [g](int o, int z, int y, int xx) {
    return ((static_cast<std::size_t>(o) * g.od + z) * g.oh + y) * g.ow + xx;
  };

  // Invokes f(out_index, in_index, kernel_index) for every in-bounds tap.
  auto for_each_tap = [g, xi, ki, oi](auto&& f) {
    for (int o = 0; o < g.c_out; ++o)
      for (int z = 0; z < g.od; ++z)
        for (int y = 0; y < g.oh; ++y)
          for (int xx = 0; xx < g.ow; ++xx) {
            const std::size_t out_idx = oi(o, z, y, xx);
            for (int c = 0; c < g.c_in; ++c)
              for (int kz = 0; kz < g.k; ++kz) {
                const int iz = z * g.stride - g.padding + kz;
                if (iz < 0 || iz >= g.d) continue;
                for (int ky = 0; ky < g.k; ++ky) {
                  const int iy = y * g.stride - g.padding + ky;
                  if (iy < 0 || iy >= g.h) continue;
                  for (int kx = 0; kx < g.k; ++kx) {
                    const int ix = xx * g.stride - g.padding + kx;
                    if (ix < 0 || ix >= g.w) continue;
                    f(out_idx, xi(c, iz, iy, ix), ki(o, c, kz, ky, kx));
                  }
                }
              }
          }
  };

  std::vector<double> out(static_cast<std::size_t>(c_out) * od * oh * ow);
  for (int o = 0; o < c_out; ++o) {
    std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(oi(o, 0, 0, 0)), od * oh * ow, bias.at(o));
  }
  const double* xv = x.values().data();
  const double* kv = kernels.values().data();
  for_each_tap([&](std::size_t oidx, std::size_t iidx, std::size_t kidx) { out[oidx] += xv[iidx] * kv[kidx]; });

  return make_result({c_out, od, oh, ow}, std::move(out), {x, kernels, bias}, [g, for_each_tap](Node& n) {
    const auto& xn = n.parents[0];
    const auto& kn = n.parents[1];
    const auto& bn = n.parents[2];
    const double* gy = n.grad.data();
    if (wants_grad(xn)) {
      double* gx = xn->grad_buffer().data();
      const double* kv = kn->value.data();
      for_each_tap([&](std::size_t o, std::size_t i, std::size_t k) { gx[i] += gy[o] * kv[k]; });
    }
    if (wants_grad(kn)) {
      double* gk = kn->grad_buffer().data();
      const double* xv = xn->value.data();
      for_each_tap([&](std::size_t o, std::size_t i, std::size_t k) { gk[k] += gy[o] * xv[i]; });
    }
    if (wants_grad(bn)) {
      auto& gb = bn->grad_buffer();
      const std::size_t per = static_cast<std::size_t>(g.od) * g.oh * g.ow;
      for (int o = 0; o < g.c_out; ++o) {
        for (std::size_t i = 0; i < per; ++i) gb[o] += gy[o * per + i];
      }
    }
  });
}

Tensor mean_aggregate(const Tensor& x, const std::vector<std::vector<int>>& groups) {
  if (x.rank() != 2) shape_error("mean_aggregate(x)", x.shape(), {});
  const int rows = x.dim(0);
  const int f = x.dim(1);
  if (groups.empty()) throw ShapeMismatch("mean_aggregate: no output groups");
  for (const auto& grp : groups) {
    for (const int r : grp) {
      if (r < 0 || r >= rows) throw ShapeMismatch("mean_aggregate: row index " + std::to_string(r) + " outside " + shape_string(x.shape()));
    }
  }

  const double* xv = x.values().data();
  std::vector<double> out(groups.size() * static_cast<std::size_t>(f), 0.0);
  std::vector<int> order;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& grp = groups[gi];
    if (grp.empty()) continue;
    order.assign(grp.begin(), grp.end());
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return std::lexicographical_compare(xv + static_cast<std::size_t>(a) * f, xv + static_cast<std::size_t>(a + 1) * f,
                                          xv + static_cast<std::size_t>(b) * f, xv + static_cast<std::size_t>(b + 1) * f);
    });
    double* o = out.data() + gi * f;
    for (const int r : order) {
      for (int j = 0; j < f; ++j) o[j] += xv[static_cast<std::size_t>(r) * f + j];
    }
    const double inv = 1.0 / static_cast<double>(grp.size());
    for (int j = 0; j < f; ++j) o[j] *= inv;
  }

  return make_result({static_cast<int>(groups.size()), f}, std::move(out), {x}, [groups, f](Node& n) {
    auto& gx = n.parents[0]->grad_buffer();
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      const auto& grp = groups[gi];
      if (grp.empty()) continue;
      const double inv = 1.0 / static_cast<double>(grp.size());
      for (const int r : grp) {
        for (int j = 0; j < f; ++j) gx[static_cast<std::size_t>(r) * f + j] += n.grad[gi * f + j] * inv;
      }
    }
  });
}

Tensor concat(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ShapeMismatch("concat: no inputs");
  Shape lead(xs[0].shape().begin(), xs[0].shape().end() - 1);
  std::vector<int> widths;
  int total = 0;
  for (const auto& t : xs) {
    const Shape tl(t.shape().begin(), t.shape().end() - 1);
    if (tl != lead) shape_error("concat", xs[0].shape(), t.shape());
    widths.push_back(t.shape().back());
    total += t.shape().back();
  }
  const std::size_t rows = shape_size(lead);
  std::vector<double> out(rows * static_cast<std::size_t>(total));
  int offset = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double* src = xs[k].values().data();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(src + r * widths[k], widths[k], out.data() + r * total + offset);
    }
    offset += widths[k];
  }
  Shape shape = lead;
  shape.push_back(total);
  return make_result(std::move(shape), std::move(out), xs, [widths, rows, total](Node& n) {
    int off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      auto& p = n.parents[k];
      if (wants_grad(p)) {
        auto& g = p->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          for (int j = 0; j < widths[k]; ++j) g[r * widths[k] + j] += n.grad[r * total + off + j];
        }
      }
      off += widths[k];
    }
  });
}

Tensor gather_rows(const Tensor& x, std::span<const int> indices) {
  if (x.rank() != 2) shape_error("gather_rows(x)", x.shape(), {});
  if (indices.empty()) throw ShapeMismatch("gather_rows: no indices");
  const int f = x.dim(1);
  std::vector<double> out(indices.size() * static_cast<std::size_t>(f));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int r = indices[i];
    if (r < 0 || r >= x.dim(0)) throw ShapeMismatch("gather_rows: row " + std::to_string(r) + " outside " + shape_string(x.shape()));
    std::copy_n(x.values().data() + static_cast<std::size_t>(r) * f, f, out.data() + i * f);
  }
  std::vector<int> idx(indices.begin(), indices.end());
  return make_result({static_cast<int>(indices.size()), f}, std::move(out), {x}, [idx, f](Node& n) {
    auto& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (int j = 0; j < f; ++j) g[static_cast<std::size_t>(idx[i]) * f + j] += n.grad[i * f + j];
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) shape_error("reshape", x.shape(), shape);
  std::vector<double> v(x.values().begin(), x.values().end());
  return make_result(std::move(shape), std::move(v), {x}, [](Node& n) {
    auto& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("add", a.shape(), b.shape());
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.at(i) + b.at(i);
  return make_result(a.shape(), std::move(v), {a, b}, [](Node& n) {
    for (auto& p : n.parents) {
      if (!wants_grad(p)) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = factor * x.at(i);
  return make_result(x.shape(), std::move(v), {x}, [factor](Node& n) {
    auto& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * n.grad[i];
  });
}

Tensor sum(const Tensor& x) {
  const double s = std::accumulate(x.values().begin(), x.values().end(), 0.0);
  return make_result({1}, {s}, {x}, [](Node& n) {
    auto& g = n.parents[0]->grad_buffer();
    for (auto& v : g) v += n.grad[0];
  });
}

}  // namespace mot3d::nn
