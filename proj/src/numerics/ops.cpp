#include "pltts/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>

namespace pltts {

namespace {

using detail::Node;

Node* grad_target(Node& self, std::size_t k) {
  Node* in = self.inputs[k].get();
  if (!in->requires_grad) return nullptr;
  in->ensure_grad();
  return in;
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

enum class Broadcast { Same, RightRepeats, LeftRepeats };

Broadcast broadcast_kind(const std::string& op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::Same;
  if (b.numel() == 1 || is_suffix(b.shape(), a.shape())) return Broadcast::RightRepeats;
  if (a.numel() == 1 || is_suffix(a.shape(), b.shape())) return Broadcast::LeftRepeats;
  throw ShapeError(op + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                   " are not broadcast-compatible");
}

// Shared driver for add/sub/mul. `fwd(x, y)` gives the value; `dx(x, y)` and
// `dy(x, y)` give the local partial derivatives.
template <class Fwd, class Dx, class Dy>
Tensor binary_op(const std::string& op, const Tensor& a, const Tensor& b, Fwd fwd, Dx dx, Dy dy) {
  const auto kind = broadcast_kind(op, a, b);
  const Shape out_shape = kind == Broadcast::LeftRepeats ? b.shape() : a.shape();
  const std::size_t n = shape_numel(out_shape);
  const std::size_t na = a.numel(), nb = b.numel();
  auto ad = a.data();
  auto bd = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(ad[i % na], bd[i % nb]);
  return make_op_result(op, out_shape, std::move(out), {a, b}, [dx, dy](Node& self) {
    const Node& an = *self.inputs[0];
    const Node& bn = *self.inputs[1];
    const std::size_t na = an.data.size(), nb = bn.data.size();
    Node* ga = grad_target(self, 0);
    Node* gb = grad_target(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double g = self.grad[i];
      const double x = an.data[i % na], y = bn.data[i % nb];
      if (ga) ga->grad[i % na] += g * dx(x, y);
      if (gb) gb->grad[i % nb] += g * dy(x, y);
    }
  });
}

template <class Fwd, class Deriv>
Tensor unary_op(const std::string& op, const Tensor& a, Fwd fwd, Deriv deriv) {
  auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = fwd(ad[i]);
  // deriv(x, y) receives the input and output values.
  return make_op_result(op, a.shape(), std::move(out), {a}, [deriv](Node& self) {
    Node* ga = grad_target(self, 0);
    if (!ga) return;
    const auto& x = self.inputs[0]->data;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      ga->grad[i] += self.grad[i] * deriv(x[i], self.data[i]);
  });
}

void require_rank(const std::string& op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank)
    throw ShapeError(op + ": expected rank " + std::to_string(rank) + ", got shape " +
                     shape_str(t.shape()));
}

// Uniform double in [0,1) from the top 53 bits of the generator.
double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary_op(
      "scale", a, [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary_op(
      "add_scalar", a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("matmul: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     " have mismatched inner dimensions");
  auto ad = a.data();
  auto bd = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      if (av == 0.0) continue;
      const double* brow = bd.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return make_op_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const auto& ad = self.inputs[0]->data;
    const auto& bd = self.inputs[1]->data;
    const auto& g = self.grad;
    if (Node* ga = grad_target(self, 0)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = bd.data() + p * n;
          const double* grow = g.data() + i * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga->grad[i * k + p] += acc;
        }
    }
    if (Node* gb = grad_target(self, 1)) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = ad[i * k + p];
          if (av == 0.0) continue;
          double* out = gb->grad.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) out[j] += av * grow[j];
        }
      }
    }
  });
}

Tensor tanh(const Tensor& a) {
  return unary_op(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      "sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary_op(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary_op(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sum(const Tensor& a) {
  auto ad = a.data();
  double s = 0.0;
  for (double v : ad) s += v;
  return make_op_result("sum", {1}, {s}, {a}, [](Node& self) {
    if (Node* ga = grad_target(self, 0))
      for (auto& g : ga->grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  auto ad = a.data();
  double s = 0.0;
  for (double v : ad) s += v;
  const double n = static_cast<double>(ad.size());
  return make_op_result("mean", {1}, {s / n}, {a}, [n](Node& self) {
    if (Node* ga = grad_target(self, 0))
      for (auto& g : ga->grad) g += self.grad[0] / n;
  });
}

Tensor mean_rows(const Tensor& a) {
  require_rank("mean_rows", a, 2);
  const std::size_t r = a.dim(0), c = a.dim(1);
  auto ad = a.data();
  std::vector<double> out(c, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += ad[i * c + j];
  for (auto& v : out) v /= static_cast<double>(r);
  return make_op_result("mean_rows", {1, c}, std::move(out), {a}, [r, c](Node& self) {
    Node* ga = grad_target(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga->grad[i * c + j] += self.grad[j] / static_cast<double>(r);
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size())
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " + shape_str(first));
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d)
      if (d != axis && s[d] != first[d]) ok = false;
    if (!ok)
      throw ShapeError("concat: shapes " + shape_str(first) + " and " + shape_str(s) +
                       " differ outside axis " + std::to_string(axis));
    total += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];

  Shape out_shape = first;
  out_shape[axis] = total;
  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> widths;
  widths.reserve(parts.size());
  for (const auto& p : parts) widths.push_back(p.dim(axis) * inner);
  const std::size_t row = total * inner;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto pd = parts[k].data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(pd.data() + o * widths[k], widths[k], out.data() + o * row + offset);
    offset += widths[k];
  }
  return make_op_result("concat", out_shape, std::move(out), parts,
                        [outer, row, widths](Node& self) {
                          std::size_t offset = 0;
                          for (std::size_t k = 0; k < widths.size(); ++k) {
                            if (Node* gk = grad_target(self, k))
                              for (std::size_t o = 0; o < outer; ++o)
                                for (std::size_t i = 0; i < widths[k]; ++i)
                                  gk->grad[o * widths[k] + i] += self.grad[o * row + offset + i];
                            offset += widths[k];
                          }
                        });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& s = a.shape();
  if (axis >= s.size())
    throw ShapeError("slice: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  if (length == 0 || start + length > s[axis])
    throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") out of bounds for axis " + std::to_string(axis) + " of " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t src_row = s[axis] * inner, dst_row = length * inner, off = start * inner;
  Shape out_shape = s;
  out_shape[axis] = length;
  auto ad = a.data();
  std::vector<double> out(outer * dst_row);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(ad.data() + o * src_row + off, dst_row, out.data() + o * dst_row);
  return make_op_result("slice", out_shape, std::move(out), {a},
                        [outer, src_row, dst_row, off](Node& self) {
                          Node* ga = grad_target(self, 0);
                          if (!ga) return;
                          for (std::size_t o = 0; o < outer; ++o)
                            for (std::size_t i = 0; i < dst_row; ++i)
                              ga->grad[o * src_row + off + i] += self.grad[o * dst_row + i];
                        });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  auto ad = a.data();
  return make_op_result("reshape", std::move(shape), std::vector<double>(ad.begin(), ad.end()), {a},
                        [](Node& self) {
                          Node* ga = grad_target(self, 0);
                          if (!ga) return;
                          for (std::size_t i = 0; i < self.grad.size(); ++i) ga->grad[i] += self.grad[i];
                        });
}

Tensor transpose(const Tensor& a) {
  require_rank("transpose", a, 2);
  const std::size_t r = a.dim(0), c = a.dim(1);
  auto ad = a.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = ad[i * c + j];
  return make_op_result("transpose", {c, r}, std::move(out), {a}, [r, c](Node& self) {
    Node* ga = grad_target(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga->grad[i * c + j] += self.grad[j * r + i];
  });
}

Tensor permute_rows(const Tensor& a, const std::vector<std::size_t>& order) {
  if (order.empty()) throw ShapeError("permute_rows: empty index list");
  const std::size_t rows = a.dim(0), width = a.numel() / rows;
  for (auto idx : order)
    if (idx >= rows)
      throw ShapeError("permute_rows: index " + std::to_string(idx) + " out of range for " +
                       shape_str(a.shape()));
  Shape out_shape = a.shape();
  out_shape[0] = order.size();
  auto ad = a.data();
  std::vector<double> out(order.size() * width);
  for (std::size_t r = 0; r < order.size(); ++r)
    std::copy_n(ad.data() + order[r] * width, width, out.data() + r * width);
  return make_op_result("permute_rows", out_shape, std::move(out), {a}, [order, width](Node& self) {
    Node* ga = grad_target(self, 0);
    if (!ga) return;
    for (std::size_t r = 0; r < order.size(); ++r)
      for (std::size_t i = 0; i < width; ++i) ga->grad[order[r] * width + i] += self.grad[r * width + i];
  });
}

Tensor mul_rows(const Tensor& a, const Tensor& w) {
  require_rank("mul_rows", a, 2);
  const std::size_t r = a.dim(0), c = a.dim(1);
  if (w.numel() != r)
    throw ShapeError("mul_rows: weights " + shape_str(w.shape()) + " do not match rows of " +
                     shape_str(a.shape()));
  auto ad = a.data();
  auto wd = w.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = ad[i * c + j] * wd[i];
  return make_op_result("mul_rows", a.shape(), std::move(out), {a, w}, [r, c](Node& self) {
    const auto& ad = self.inputs[0]->data;
    const auto& wd = self.inputs[1]->data;
    Node* ga = grad_target(self, 0);
    Node* gw = grad_target(self, 1);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        const double g = self.grad[i * c + j];
        if (ga) ga->grad[i * c + j] += g * wd[i];
        if (gw) gw->grad[i] += g * ad[i * c + j];
      }
  });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  const Shape& s = a.shape();
  if (axis >= s.size())
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  const std::size_t n = s[axis];
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      double mx = ad[base];
      for (std::size_t k = 1; k < n; ++k) mx = std::max(mx, ad[base + k * inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double e = std::exp(ad[base + k * inner] - mx);
        out[base + k * inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < n; ++k) out[base + k * inner] /= z;
    }
  return make_op_result("softmax", s, std::move(out), {a}, [outer, inner, n](Node& self) {
    Node* ga = grad_target(self, 0);
    if (!ga) return;
    const auto& y = self.data;
    const auto& g = self.grad;
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = o * n * inner + i;
        double dot = 0.0;
        for (std::size_t k = 0; k < n; ++k) dot += g[base + k * inner] * y[base + k * inner];
        for (std::size_t k = 0; k < n; ++k) {
          const std::size_t idx = base + k * inner;
          ga->grad[idx] += y[idx] * (g[idx] - dot);
        }
      }
  });
}

Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng, bool training) {
  if (!training || rate <= 0.0) return a;
  if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be below 1");
  const double keep_scale = 1.0 / (1.0 - rate);
  auto ad = a.data();
  std::vector<double> mask(ad.size());
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) {
    mask[i] = unit_uniform(rng) >= rate ? keep_scale : 0.0;
    out[i] = ad[i] * mask[i];
  }
  return make_op_result("dropout", a.shape(), std::move(out), {a}, [mask](Node& self) {
    Node* ga = grad_target(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < mask.size(); ++i) ga->grad[i] += self.grad[i] * mask[i];
  });
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  require_rank("softmax_cross_entropy", logits, 2);
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  if (labels.size() != b)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                     shape_str(logits.shape()));
  auto ld = logits.data();
  std::vector<double> probs(b * c);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c)
      throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(labels[i]) +
                              " outside [0, " + std::to_string(c) + ")");
    const double* row = ld.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - lse);
    loss += lse - row[labels[i]];
  }
  loss /= static_cast<double>(b);
  return make_op_result("softmax_cross_entropy", {1}, {loss}, {logits},
                        [probs, labels, b, c](Node& self) {
                          Node* gl = grad_target(self, 0);
                          if (!gl) return;
                          const double g = self.grad[0] / static_cast<double>(b);
                          for (std::size_t i = 0; i < b; ++i)
                            for (std::size_t j = 0; j < c; ++j) {
                              const double onehot = static_cast<int>(j) == labels[i] ? 1.0 : 0.0;
                              gl->grad[i * c + j] += g * (probs[i * c + j] - onehot);
                            }
                        });
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  if (logits.numel() != targets.numel())
    throw ShapeError("bce_with_logits: shapes " + shape_str(logits.shape()) + " and " +
                     shape_str(targets.shape()) + " differ");
  auto zd = logits.data();
  auto td = targets.data();
  const double n = static_cast<double>(zd.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < zd.size(); ++i) {
    const double z = zd[i];
    loss += std::max(z, 0.0) - z * td[i] + std::log1p(std::exp(-std::abs(z)));
  }
  return make_op_result("bce_with_logits", {1}, {loss / n}, {logits, targets}, [n](Node& self) {
    Node* gz = grad_target(self, 0);
    if (!gz) return;
    const auto& zd = self.inputs[0]->data;
    const auto& td = self.inputs[1]->data;
    for (std::size_t i = 0; i < zd.size(); ++i) {
      const double p = 1.0 / (1.0 + std::exp(-zd[i]));
      gz->grad[i] += self.grad[0] * (p - td[i]) / n;
    }
  });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mse: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
  auto ad = a.data();
  auto bd = b.data();
  const double n = static_cast<double>(ad.size());
  double s = 0.0;
  for (std::size_t i = 0; i < ad.size(); ++i) {
    const double d = ad[i] - bd[i];
    s += d * d;
  }
  return make_op_result("mse", {1}, {s / n}, {a, b}, [n](Node& self) {
    const auto& ad = self.inputs[0]->data;
    const auto& bd = self.inputs[1]->data;
    Node* ga = grad_target(self, 0);
    Node* gb = grad_target(self, 1);
    const double g = self.grad[0] * 2.0 / n;
    for (std::size_t i = 0; i < ad.size(); ++i) {
      const double d = ad[i] - bd[i];
      if (ga) ga->grad[i] += g * d;
      if (gb) gb->grad[i] -= g * d;
    }
  });
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride,
              std::size_t pad_h, std::size_t pad_w) {
  const bool batched = input.rank() == 4;
  if (!batched && input.rank() != 3)
    throw ShapeError("conv2d: input must be C×H×W or N×C×H×W, got " + shape_str(input.shape()));
  require_rank("conv2d", kernels, 4);
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t n = batched ? input.dim(0) : 1;
  const std::size_t off = batched ? 1 : 0;
  const std::size_t c = input.dim(off), h = input.dim(off + 1), w = input.dim(off + 2);
  const std::size_t k = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  if (kernels.dim(1) != c)
    throw ShapeError("conv2d: kernels " + shape_str(kernels.shape()) + " do not match input channels of " +
                     shape_str(input.shape()));
  if (bias.defined() && bias.numel() != k)
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " does not match " + std::to_string(k) +
                     " kernels");
  if (kh > h + 2 * pad_h || kw > w + 2 * pad_w)
    throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                     " gives a non-positive output extent for input " + shape_str(input.shape()));
  const std::size_t ho = (h + 2 * pad_h - kh) / stride + 1;
  const std::size_t wo = (w + 2 * pad_w - kw) / stride + 1;
  const std::size_t patch = c * kh * kw, positions = ho * wo;

  auto in = input.data();
  auto kd = kernels.data();
  std::vector<double> out(n * k * positions, 0.0);
  const bool keep_cols = grad_enabled() && (input.requires_grad() || kernels.requires_grad() ||
                                            (bias.defined() && bias.requires_grad()));
  auto cols = std::make_shared<std::vector<double>>();
  std::vector<double> col(patch * positions);
  for (std::size_t img = 0; img < n; ++img) {
    const double* src = in.data() + img * c * h * w;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < kh; ++i)
        for (std::size_t j = 0; j < kw; ++j) {
          double* dst = col.data() + ((ch * kh + i) * kw + j) * positions;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const long y = static_cast<long>(oy * stride + i) - static_cast<long>(pad_h);
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const long x = static_cast<long>(ox * stride + j) - static_cast<long>(pad_w);
              dst[oy * wo + ox] = (y >= 0 && y < static_cast<long>(h) && x >= 0 && x < static_cast<long>(w))
                                      ? src[(ch * h + y) * w + x]
                                      : 0.0;
            }
          }
        }
    double* dst = out.data() + img * k * positions;
    for (std::size_t kk = 0; kk < k; ++kk) {
      double* orow = dst + kk * positions;
      if (bias.defined()) std::fill_n(orow, positions, bias.data()[kk]);
      for (std::size_t r = 0; r < patch; ++r) {
        const double wv = kd[kk * patch + r];
        if (wv == 0.0) continue;
        const double* crow = col.data() + r * positions;
        for (std::size_t p = 0; p < positions; ++p) orow[p] += wv * crow[p];
      }
    }
    if (keep_cols) cols->insert(cols->end(), col.begin(), col.end());
  }

  Shape out_shape = batched ? Shape{n, k, ho, wo} : Shape{k, ho, wo};
  std::vector<Tensor> inputs{input, kernels};
  if (bias.defined()) inputs.push_back(bias);
  const bool has_bias = bias.defined();
  return make_op_result(
      "conv2d", out_shape, std::move(out), inputs,
      [=](Node& self) {
        const auto& kd = self.inputs[1]->data;
        Node* gi = grad_target(self, 0);
        Node* gk = grad_target(self, 1);
        Node* gb = has_bias ? grad_target(self, 2) : nullptr;
        std::vector<double> dcol(patch * positions);
        for (std::size_t img = 0; img < n; ++img) {
          const double* g = self.grad.data() + img * k * positions;
          const double* colp = cols->data() + img * patch * positions;
          if (gb)
            for (std::size_t kk = 0; kk < k; ++kk)
              for (std::size_t p = 0; p < positions; ++p) gb->grad[kk] += g[kk * positions + p];
          if (gk)
            for (std::size_t kk = 0; kk < k; ++kk)
              for (std::size_t r = 0; r < patch; ++r) {
                double acc = 0.0;
                const double* grow = g + kk * positions;
                const double* crow = colp + r * positions;
                for (std::size_t p = 0; p < positions; ++p) acc += grow[p] * crow[p];
                gk->grad[kk * patch + r] += acc;
              }
          if (gi) {
            std::fill(dcol.begin(), dcol.end(), 0.0);
            for (std::size_t kk = 0; kk < k; ++kk) {
              const double* grow = g + kk * positions;
              for (std::size_t r = 0; r < patch; ++r) {
                const double wv = kd[kk * patch + r];
                if (wv == 0.0) continue;
                double* drow = dcol.data() + r * positions;
                for (std::size_t p = 0; p < positions; ++p) drow[p] += wv * grow[p];
              }
            }
            double* dst = gi->grad.data() + img * c * h * w;
            for (std::size_t ch = 0; ch < c; ++ch)
              for (std::size_t i = 0; i < kh; ++i)
                for (std::size_t j = 0; j < kw; ++j) {
                  const double* drow = dcol.data() + ((ch * kh + i) * kw + j) * positions;
                  for (std::size_t oy = 0; oy < ho; ++oy) {
                    const long y = static_cast<long>(oy * stride + i) - static_cast<long>(pad_h);
                    if (y < 0 || y >= static_cast<long>(h)) continue;
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                      const long x = static_cast<long>(ox * stride + j) - static_cast<long>(pad_w);
                      if (x < 0 || x >= static_cast<long>(w)) continue;
                      dst[(ch * h + y) * w + x] += drow[oy * wo + ox];
                    }
                  }
                }
          }
        }
      });
}

Tensor maxpool2d(const Tensor& input) {
  if (input.rank() < 2) throw ShapeError("maxpool2d: input must have at least 2 axes, got " + shape_str(input.shape()));
  if (input.numel() == 0) throw ShapeError("maxpool2d: empty input");
  const Shape& s = input.shape();
  const std::size_t h = s[s.size() - 2], w = s[s.size() - 1];
  const std::size_t planes = input.numel() / (h * w);
  const std::size_t ho = (h + 1) / 2, wo = (w + 1) / 2;
  auto in = input.data();
  std::vector<double> out(planes * ho * wo);
  // Flat source index of each output, or -1 when the padding wins.
  std::vector<long> argmax(out.size());
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = in.data() + p * h * w;
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double best = 0.0;
        long best_idx = -2;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t y = 2 * oy + dy, x = 2 * ox + dx;
            const bool inside = y < h && x < w;
            const double v = inside ? src[y * w + x] : 0.0;
            const long idx = inside ? static_cast<long>(p * h * w + y * w + x) : -1;
            if (best_idx == -2 || v > best) {
              best = v;
              best_idx = idx;
            }
          }
        const std::size_t o = (p * ho + oy) * wo + ox;
        out[o] = best;
        argmax[o] = best_idx;
      }
  }
  Shape out_shape = s;
  out_shape[s.size() - 2] = ho;
  out_shape[s.size() - 1] = wo;
  return make_op_result("maxpool2d", out_shape, std::move(out), {input}, [argmax](Node& self) {
    Node* gi = grad_target(self, 0);
    if (!gi) return;
    for (std::size_t o = 0; o < argmax.size(); ++o)
      if (argmax[o] >= 0) gi->grad[static_cast<std::size_t>(argmax[o])] += self.grad[o];
  });
}

Tensor flatten_time_slices(const Tensor& input) {
  require_rank("flatten_time_slices", input, 4);
  const std::size_t n = input.dim(0), k = input.dim(1), h = input.dim(2), w = input.dim(3);
  auto in = input.data();
  std::vector<double> out(in.size());
  const std::size_t width = k * w;
  for (std::size_t img = 0; img < n; ++img)
    for (std::size_t kk = 0; kk < k; ++kk)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          out[(img * h + y) * width + kk * w + x] = in[((img * k + kk) * h + y) * w + x];
  return make_op_result("flatten_time_slices", {n * h, width}, std::move(out), {input},
                        [n, k, h, w, width](Node& self) {
                          Node* gi = grad_target(self, 0);
                          if (!gi) return;
                          for (std::size_t img = 0; img < n; ++img)
                            for (std::size_t kk = 0; kk < k; ++kk)
                              for (std::size_t y = 0; y < h; ++y)
                                for (std::size_t x = 0; x < w; ++x)
                                  gi->grad[((img * k + kk) * h + y) * w + x] +=
                                      self.grad[(img * h + y) * width + kk * w + x];
                        });
}

Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                        std::vector<double>* batch_mean, std::vector<double>* batch_var) {
  require_rank("batch_norm", x, 2);
  const std::size_t r = x.dim(0), f = x.dim(1);
  if (gamma.numel() != f || beta.numel() != f)
    throw ShapeError("batch_norm: scale/shift do not match features of " + shape_str(x.shape()));
  auto xd = x.data();
  std::vector<double> mu(f, 0.0), var(f, 0.0), invstd(f);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < f; ++j) mu[j] += xd[i * f + j];
  for (auto& m : mu) m /= static_cast<double>(r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < f; ++j) {
      const double d = xd[i * f + j] - mu[j];
      var[j] += d * d;
    }
  for (std::size_t j = 0; j < f; ++j) {
    var[j] /= static_cast<double>(r);
    invstd[j] = 1.0 / std::sqrt(var[j] + eps);
  }
  std::vector<double> xhat(r * f), out(r * f);
  auto gd = gamma.data();
  auto bd = beta.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < f; ++j) {
      xhat[i * f + j] = (xd[i * f + j] - mu[j]) * invstd[j];
      out[i * f + j] = xhat[i * f + j] * gd[j] + bd[j];
    }
  if (batch_mean) *batch_mean = mu;
  if (batch_var) *batch_var = var;
  return make_op_result("batch_norm", x.shape(), std::move(out), {x, gamma, beta},
                        [xhat, invstd, r, f](Node& self) {
                          const auto& gd = self.inputs[1]->data;
                          const auto& g = self.grad;
                          Node* gx = grad_target(self, 0);
                          Node* gg = grad_target(self, 1);
                          Node* gb = grad_target(self, 2);
                          std::vector<double> sum_d(f, 0.0), sum_dx(f, 0.0);
                          for (std::size_t i = 0; i < r; ++i)
                            for (std::size_t j = 0; j < f; ++j) {
                              const double dy = g[i * f + j];
                              if (gg) gg->grad[j] += dy * xhat[i * f + j];
                              if (gb) gb->grad[j] += dy;
                              const double dxh = dy * gd[j];
                              sum_d[j] += dxh;
                              sum_dx[j] += dxh * xhat[i * f + j];
                            }
                          if (!gx) return;
                          const double rn = static_cast<double>(r);
                          for (std::size_t i = 0; i < r; ++i)
                            for (std::size_t j = 0; j < f; ++j) {
                              const double dxh = g[i * f + j] * gd[j];
                              gx->grad[i * f + j] +=
                                  invstd[j] / rn * (rn * dxh - sum_d[j] - xhat[i * f + j] * sum_dx[j]);
                            }
                        });
}

Tensor batch_norm_inference(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                            const std::vector<double>& mean, const std::vector<double>& var, double eps) {
  require_rank("batch_norm", x, 2);
  const std::size_t r = x.dim(0), f = x.dim(1);
  if (gamma.numel() != f || beta.numel() != f || mean.size() != f || var.size() != f)
    throw ShapeError("batch_norm: statistics do not match features of " + shape_str(x.shape()));
  std::vector<double> invstd(f);
  for (std::size_t j = 0; j < f; ++j) invstd[j] = 1.0 / std::sqrt(var[j] + eps);
  auto xd = x.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  std::vector<double> out(r * f);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < f; ++j)
      out[i * f + j] = (xd[i * f + j] - mean[j]) * invstd[j] * gd[j] + bd[j];
  return make_op_result("batch_norm", x.shape(), std::move(out), {x, gamma, beta},
                        [invstd, mean, r, f](Node& self) {
                          const auto& xd = self.inputs[0]->data;
                          const auto& gd = self.inputs[1]->data;
                          Node* gx = grad_target(self, 0);
                          Node* gg = grad_target(self, 1);
                          Node* gb = grad_target(self, 2);
                          for (std::size_t i = 0; i < r; ++i)
                            for (std::size_t j = 0; j < f; ++j) {
                              const double dy = self.grad[i * f + j];
                              if (gx) gx->grad[i * f + j] += dy * gd[j] * invstd[j];
                              if (gg) gg->grad[j] += dy * (xd[i * f + j] - mean[j]) * invstd[j];
                              if (gb) gb->grad[j] += dy;
                            }
                        });
}

namespace {
double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

Tensor lstm_cell_state(const Tensor& gates, const Tensor& c_prev) {
  require_rank("lstm_cell_state", gates, 2);
  const std::size_t b = gates.dim(0), h4 = gates.dim(1), h = h4 / 4;
  if (h4 % 4 != 0 || c_prev.shape() != Shape{b, h})
    throw ShapeError("lstm_cell_state: gates " + shape_str(gates.shape()) + " and state " +
                     shape_str(c_prev.shape()) + " are inconsistent");
  auto gd = gates.data();
  auto cp = c_prev.data();
  std::vector<double> out(b * h);
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t j = 0; j < h; ++j) {
      const double* g = gd.data() + r * h4;
      out[r * h + j] = sigm(g[h + j]) * cp[r * h + j] + sigm(g[j]) * std::tanh(g[2 * h + j]);
    }
  return make_op_result("lstm_cell_state", {b, h}, std::move(out), {gates, c_prev}, [b, h](Node& self) {
    const auto& gd = self.inputs[0]->data;
    const auto& cp = self.inputs[1]->data;
    Node* gg = grad_target(self, 0);
    Node* gc = grad_target(self, 1);
    const std::size_t h4 = 4 * h;
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t j = 0; j < h; ++j) {
        const double dc = self.grad[r * h + j];
        const double* g = gd.data() + r * h4;
        const double ig = sigm(g[j]), fg = sigm(g[h + j]), cg = std::tanh(g[2 * h + j]);
        if (gg) {
          double* d = gg->grad.data() + r * h4;
          d[j] += dc * cg * ig * (1.0 - ig);
          d[h + j] += dc * cp[r * h + j] * fg * (1.0 - fg);
          d[2 * h + j] += dc * ig * (1.0 - cg * cg);
        }
        if (gc) gc->grad[r * h + j] += dc * fg;
      }
  });
}

Tensor lstm_cell_output(const Tensor& gates, const Tensor& c) {
  require_rank("lstm_cell_output", gates, 2);
  const std::size_t b = gates.dim(0), h4 = gates.dim(1), h = h4 / 4;
  if (h4 % 4 != 0 || c.shape() != Shape{b, h})
    throw ShapeError("lstm_cell_output: gates " + shape_str(gates.shape()) + " and state " +
                     shape_str(c.shape()) + " are inconsistent");
  auto gd = gates.data();
  auto cd = c.data();
  std::vector<double> out(b * h);
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t j = 0; j < h; ++j)
      out[r * h + j] = sigm(gd[r * h4 + 3 * h + j]) * std::tanh(cd[r * h + j]);
  return make_op_result("lstm_cell_output", {b, h}, std::move(out), {gates, c}, [b, h](Node& self) {
    const auto& gd = self.inputs[0]->data;
    const auto& cd = self.inputs[1]->data;
    Node* gg = grad_target(self, 0);
    Node* gc = grad_target(self, 1);
    const std::size_t h4 = 4 * h;
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t j = 0; j < h; ++j) {
        const double dh = self.grad[r * h + j];
        const double og = sigm(gd[r * h4 + 3 * h + j]);
        const double tc = std::tanh(cd[r * h + j]);
        if (gg) gg->grad[r * h4 + 3 * h + j] += dh * tc * og * (1.0 - og);
        if (gc) gc->grad[r * h + j] += dh * og * (1.0 - tc * tc);
      }
  });
}

}  // namespace pltts
