#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "fskd/tensor.hpp"

namespace fskd::ops {

inline constexpr double kProbFloor = 1e-12;   // floor before any log
inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kMaskValue = -1e30;   // finite stand-in for -inf logits

namespace detail {

// Row-wise ops treat a 1-D tensor [n] as a single row.
inline std::pair<int, int> as_matrix(const Tensor& t) {
  if (t->shape.size() == 1) return {1, t->shape[0]};
  if (t->shape.size() == 2) return {t->shape[0], t->shape[1]};
  throw ShapeError("expected 1-D or 2-D tensor, got " + shape_str(t->shape));
}

inline bool want_grad(const Graph& g, std::initializer_list<Tensor> ins) {
  if (!g.recording()) return false;
  for (const auto& t : ins)
    if (t->requires_grad) return true;
  return false;
}

inline Tensor make_out(std::vector<int> shape, bool requires_grad) {
  return zeros_tensor(std::move(shape), requires_grad);
}

inline void ensure_finite(const Tensor& t, const char* op) {
  if (!all_finite(t)) throw std::runtime_error(std::string(op) + ": non-finite value produced");
}

}  // namespace detail

inline Tensor matmul(Graph& g, const Tensor& a, const Tensor& b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0])
    throw ShapeError("matmul: incompatible shapes " + shape_str(a->shape) + " and " +
                     shape_str(b->shape));
  const int p = a->shape[0], q = a->shape[1], r = b->shape[1];
  bool rg = detail::want_grad(g, {a, b});
  Tensor c = detail::make_out({p, r}, rg);
  const double* av = a->v.data();
  const double* bv = b->v.data();
  double* cv = c->v.data();
  for (int i = 0; i < p; ++i)
    for (int k = 0; k < q; ++k) {
      const double aik = av[i * q + k];
      const double* brow = bv + k * r;
      double* crow = cv + i * r;
      for (int j = 0; j < r; ++j) crow[j] += aik * brow[j];
    }
  detail::ensure_finite(c, "matmul");
  if (rg) {
    g.record("matmul", {a.get(), b.get()}, c.get(), [a, b, c, p, q, r] {
      const double* gv = c->g.data();
      if (a->requires_grad) {
        double* da = a->g.data();
        const double* bv2 = b->v.data();
        for (int i = 0; i < p; ++i)
          for (int j = 0; j < q; ++j) {
            const double* grow = gv + i * r;
            const double* brow = bv2 + j * r;
            double acc = 0.0;
            for (int k = 0; k < r; ++k) acc += grow[k] * brow[k];
            da[i * q + j] += acc;
          }
      }
      if (b->requires_grad) {
        double* db = b->g.data();
        const double* av2 = a->v.data();
        for (int i = 0; i < p; ++i)
          for (int k = 0; k < q; ++k) {
            const double aik = av2[i * q + k];
            const double* grow = gv + i * r;
            double* dbrow = db + k * r;
            for (int j = 0; j < r; ++j) dbrow[j] += aik * grow[j];
          }
      }
    });
  }
  return c;
}

inline Tensor transpose(Graph& g, const Tensor& a) {
  if (a->shape.size() != 2)
    throw ShapeError("transpose: expected 2-D tensor, got " + shape_str(a->shape));
  const int p = a->shape[0], q = a->shape[1];
  bool rg = detail::want_grad(g, {a});
  Tensor c = detail::make_out({q, p}, rg);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < q; ++j) c->v[static_cast<size_t>(j) * p + i] = a->v[static_cast<size_t>(i) * q + j];
  if (rg) {
    g.record("transpose", {a.get()}, c.get(), [a, c, p, q] {
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < q; ++j)
          a->g[static_cast<size_t>(i) * q + j] += c->g[static_cast<size_t>(j) * p + i];
    });
  }
  return c;
}

inline Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  if (a->shape != b->shape)
    throw ShapeError("add: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
  bool rg = detail::want_grad(g, {a, b});
  Tensor c = detail::make_out(a->shape, rg);
  for (size_t i = 0; i < c->numel(); ++i) c->v[i] = a->v[i] + b->v[i];
  detail::ensure_finite(c, "add");
  if (rg) {
    g.record("add", {a.get(), b.get()}, c.get(), [a, b, c] {
      if (a->requires_grad)
        for (size_t i = 0; i < c->numel(); ++i) a->g[i] += c->g[i];
      if (b->requires_grad)
        for (size_t i = 0; i < c->numel(); ++i) b->g[i] += c->g[i];
    });
  }
  return c;
}

inline Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
  if (a->shape != b->shape)
    throw ShapeError("mul: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
  bool rg = detail::want_grad(g, {a, b});
  Tensor c = detail::make_out(a->shape, rg);
  for (size_t i = 0; i < c->numel(); ++i) c->v[i] = a->v[i] * b->v[i];
  detail::ensure_finite(c, "mul");
  if (rg) {
    g.record("mul", {a.get(), b.get()}, c.get(), [a, b, c] {
      if (a->requires_grad)
        for (size_t i = 0; i < c->numel(); ++i) a->g[i] += c->g[i] * b->v[i];
      if (b->requires_grad)
        for (size_t i = 0; i < c->numel(); ++i) b->g[i] += c->g[i] * a->v[i];
    });
  }
  return c;
}

inline Tensor scale(Graph& g, const Tensor& a, double s) {
  bool rg = detail::want_grad(g, {a});
  Tensor c = detail::make_out(a->shape, rg);
  for (size_t i = 0; i < c->numel(); ++i) c->v[i] = a->v[i] * s;
  detail::ensure_finite(c, "scale");
  if (rg) {
    g.record("scale", {a.get()}, c.get(), [a, c, s] {
      for (size_t i = 0; i < c->numel(); ++i) a->g[i] += c->g[i] * s;
    });
  }
  return c;
}

// a[p×q] + v[q] broadcast over rows (bias add).
inline Tensor add_rowvec(Graph& g, const Tensor& a, const Tensor& v) {
  auto [p, q] = detail::as_matrix(a);
  if (v->shape.size() != 1 || v->shape[0] != q)
    throw ShapeError("add_rowvec: vector " + shape_str(v->shape) + " does not match row width of " +
                     shape_str(a->shape));
  bool rg = detail::want_grad(g, {a, v});
  Tensor c = detail::make_out(a->shape, rg);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < q; ++j) c->v[static_cast<size_t>(i) * q + j] = a->v[static_cast<size_t>(i) * q + j] + v->v[static_cast<size_t>(j)];
  detail::ensure_finite(c, "add_rowvec");
  if (rg) {
    g.record("add_rowvec", {a.get(), v.get()}, c.get(), [a, v, c, p, q] {
      if (a->requires_grad)
        for (size_t i = 0; i < c->numel(); ++i) a->g[i] += c->g[i];
      if (v->requires_grad)
        for (int i = 0; i < p; ++i)
          for (int j = 0; j < q; ++j) v->g[static_cast<size_t>(j)] += c->g[static_cast<size_t>(i) * q + j];
    });
  }
  return c;
}

inline Tensor relu(Graph& g, const Tensor& a) {
  bool rg = detail::want_grad(g, {a});
  Tensor c = detail::make_out(a->shape, rg);
  for (size_t i = 0; i < c->numel(); ++i) c->v[i] = a->v[i] > 0.0 ? a->v[i] : 0.0;
  if (rg) {
    g.record("relu", {a.get()}, c.get(), [a, c] {
      for (size_t i = 0; i < c->numel(); ++i)
        if (a->v[i] > 0.0) a->g[i] += c->g[i];
    });
  }
  return c;
}

// Row-wise softmax with max subtraction.
inline Tensor softmax_rows(Graph& g, const Tensor& a) {
  auto [p, q] = detail::as_matrix(a);
  if (q < 1) throw ShapeError("softmax: empty last dimension");
  bool rg = detail::want_grad(g, {a});
  Tensor c = detail::make_out(a->shape, rg);
  for (int i = 0; i < p; ++i) {
    const double* row = a->v.data() + static_cast<size_t>(i) * q;
    double* out = c->v.data() + static_cast<size_t>(i) * q;
    double mx = row[0];
    for (int j = 1; j < q; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < q; ++j) {
      out[j] = std::exp(row[j] - mx);
      sum += out[j];
    }
    for (int j = 0; j < q; ++j) out[j] /= sum;
  }
  detail::ensure_finite(c, "softmax");
  if (rg) {
    g.record("softmax", {a.get()}, c.get(), [a, c, p, q] {
      for (int i = 0; i < p; ++i) {
        const double* y = c->v.data() + static_cast<size_t>(i) * q;
        const double* gy = c->g.data() + static_cast<size_t>(i) * q;
        double* da = a->g.data() + static_cast<size_t>(i) * q;
        double dot = 0.0;
        for (int j = 0; j < q; ++j) dot += gy[j] * y[j];
        for (int j = 0; j < q; ++j) da[j] += y[j] * (gy[j] - dot);
      }
    });
  }
  return c;
}

// Upper-triangular mask for decoder self-attention scores [T×T].
inline Tensor causal_mask(Graph& g, const Tensor& a) {
  if (a->shape.size() != 2 || a->shape[0] != a->shape[1])
    throw ShapeError("causal_mask: expected square matrix, got " + shape_str(a->shape));
  const int n = a->shape[0];
  bool rg = detail::want_grad(g, {a});
  Tensor c = detail::make_out(a->shape, rg);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      c->v[static_cast<size_t>(i) * n + j] = j <= i ? a->v[static_cast<size_t>(i) * n + j] : kMaskValue;
  if (rg) {
    g.record("causal_mask", {a.get()}, c.get(), [a, c, n] {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) a->g[static_cast<size_t>(i) * n + j] += c->g[static_cast<size_t>(i) * n + j];
    });
  }
  return c;
}

// Per-row normalize, then affine transform by gain/bias.
inline Tensor layer_norm(Graph& g, const Tensor& x, const Tensor& gain, const Tensor& bias) {
  auto [p, q] = detail::as_matrix(x);
  if (gain->shape.size() != 1 || gain->shape[0] != q || bias->shape != gain->shape)
    throw ShapeError("layer_norm: gain/bias " + shape_str(gain->shape) + " do not match last dim of " +
                     shape_str(x->shape));
  bool rg = detail::want_grad(g, {x, gain, bias});
  Tensor c = detail::make_out(x->shape, rg);
  // stash per-row mean and inverse stddev for the backward pass
  auto stats = std::make_shared<std::vector<double>>(static_cast<size_t>(p) * 2);
  for (int i = 0; i < p; ++i) {
    const double* row = x->v.data() + static_cast<size_t>(i) * q;
    double mu = 0.0;
    for (int j = 0; j < q; ++j) mu += row[j];
    mu /= q;
    double var = 0.0;
    for (int j = 0; j < q; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= q;
    double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    (*stats)[static_cast<size_t>(i) * 2] = mu;
    (*stats)[static_cast<size_t>(i) * 2 + 1] = inv;
    double* out = c->v.data() + static_cast<size_t>(i) * q;
    for (int j = 0; j < q; ++j) out[j] = gain->v[static_cast<size_t>(j)] * (row[j] - mu) * inv + bias->v[static_cast<size_t>(j)];
  }
  detail::ensure_finite(c, "layer_norm");
  if (rg) {
    g.record("layer_norm", {x.get(), gain.get(), bias.get()}, c.get(), [x, gain, bias, c, stats, p, q] {
      for (int i = 0; i < p; ++i) {
        const double mu = (*stats)[static_cast<size_t>(i) * 2];
        const double inv = (*stats)[static_cast<size_t>(i) * 2 + 1];
        const double* row = x->v.data() + static_cast<size_t>(i) * q;
        const double* gy = c->g.data() + static_cast<size_t>(i) * q;
        if (gain->requires_grad || bias->requires_grad) {
          for (int j = 0; j < q; ++j) {
            const double xhat = (row[j] - mu) * inv;
            if (gain->requires_grad) gain->g[static_cast<size_t>(j)] += gy[j] * xhat;
            if (bias->requires_grad) bias->g[static_cast<size_t>(j)] += gy[j];
          }
        }
        if (x->requires_grad) {
          double* dx = x->g.data() + static_cast<size_t>(i) * q;
          double sum_dxhat = 0.0, sum_dxhat_xc = 0.0;
          for (int j = 0; j < q; ++j) {
            const double dxhat = gy[j] * gain->v[static_cast<size_t>(j)];
            sum_dxhat += dxhat;
            sum_dxhat_xc += dxhat * (row[j] - mu);
          }
          const double dvar = sum_dxhat_xc * (-0.5) * inv * inv * inv;
          const double dmu = -inv * sum_dxhat;  // d(var)/d(mu) term vanishes: sum of centered values is 0
          for (int j = 0; j < q; ++j) {
            const double dxhat = gy[j] * gain->v[static_cast<size_t>(j)];
            dx[j] += dxhat * inv + dvar * 2.0 * (row[j] - mu) / q + dmu / q;
          }
        }
      }
    });
  }
  return c;
}

inline Tensor embedding(Graph& g, const Tensor& table, const std::vector<int>& ids) {
  if (table->shape.size() != 2)
    throw ShapeError("embedding: table must be 2-D, got " + shape_str(table->shape));
  const int vocab = table->shape[0], dim = table->shape[1];
  for (int id : ids)
    if (id < 0 || id >= vocab)
      throw std::out_of_range("embedding: token id " + std::to_string(id) +
                              " outside vocabulary of size " + std::to_string(vocab));
  bool rg = detail::want_grad(g, {table});
  Tensor c = detail::make_out({static_cast<int>(ids.size()), dim}, rg);
  for (size_t i = 0; i < ids.size(); ++i)
    std::copy_n(table->v.data() + static_cast<size_t>(ids[i]) * dim, dim, c->v.data() + i * dim);
  if (rg) {
    g.record("embedding", {table.get()}, c.get(), [table, c, ids, dim] {
      for (size_t i = 0; i < ids.size(); ++i) {
        const double* gr = c->g.data() + i * static_cast<size_t>(dim);
        double* dst = table->g.data() + static_cast<size_t>(ids[i]) * dim;
        for (int j = 0; j < dim; ++j) dst[j] += gr[j];
      }
    });
  }
  return c;
}

inline Tensor select_row(Graph& g, const Tensor& a, int row) {
  auto [p, q] = detail::as_matrix(a);
  if (row < 0 || row >= p)
    throw std::out_of_range("select_row: row " + std::to_string(row) + " out of " + std::to_string(p));
  bool rg = detail::want_grad(g, {a});
  Tensor c = detail::make_out({q}, rg);
  std::copy_n(a->v.data() + static_cast<size_t>(row) * q, q, c->v.data());
  if (rg) {
    g.record("select_row", {a.get()}, c.get(), [a, c, row, q = q] {
      for (int j = 0; j < q; ++j) a->g[static_cast<size_t>(row) * q + j] += c->g[static_cast<size_t>(j)];
    });
  }
  return c;
}

inline Tensor slice_cols(Graph& g, const Tensor& a, int c0, int c1) {
  auto [p, q] = detail::as_matrix(a);
  if (c0 < 0 || c1 > q || c0 >= c1)
    throw ShapeError("slice_cols: invalid range [" + std::to_string(c0) + "," + std::to_string(c1) +
                     ") for " + shape_str(a->shape));
  const int w = c1 - c0;
  bool rg = detail::want_grad(g, {a});
  Tensor c = detail::make_out({p, w}, rg);
  for (int i = 0; i < p; ++i)
    std::copy_n(a->v.data() + static_cast<size_t>(i) * q + c0, w, c->v.data() + static_cast<size_t>(i) * w);
  if (rg) {
    g.record("slice_cols", {a.get()}, c.get(), [a, c, c0, w, p = p, q = q] {
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < w; ++j)
          a->g[static_cast<size_t>(i) * q + c0 + j] += c->g[static_cast<size_t>(i) * w + j];
    });
  }
  return c;
}

inline Tensor concat_cols(Graph& g, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: empty input list");
  const int p = detail::as_matrix(parts[0]).first;
  int total = 0;
  for (const auto& t : parts) {
    auto [r, c] = detail::as_matrix(t);
    if (r != p) throw ShapeError("concat_cols: row mismatch " + shape_str(t->shape));
    total += c;
  }
  bool rg = false;
  if (g.recording())
    for (const auto& t : parts) rg = rg || t->requires_grad;
  Tensor c = detail::make_out({p, total}, rg);
  int off = 0;
  for (const auto& t : parts) {
    const int w = detail::as_matrix(t).second;
    for (int i = 0; i < p; ++i)
      std::copy_n(t->v.data() + static_cast<size_t>(i) * w, w, c->v.data() + static_cast<size_t>(i) * total + off);
    off += w;
  }
  if (rg) {
    std::vector<const TensorData*> ins;
    for (const auto& t : parts) ins.push_back(t.get());
    g.record("concat_cols", std::move(ins), c.get(), [parts, c, p, total] {
      int off2 = 0;
      for (const auto& t : parts) {
        const int w = t->shape.size() == 1 ? t->shape[0] : t->shape[1];
        if (t->requires_grad)
          for (int i = 0; i < p; ++i)
            for (int j = 0; j < w; ++j)
              t->g[static_cast<size_t>(i) * w + j] += c->g[static_cast<size_t>(i) * total + off2 + j];
        off2 += w;
      }
    });
  }
  return c;
}

inline Tensor concat_rows(Graph& g, const Tensor& a, const Tensor& b) {
  auto [pa, qa] = detail::as_matrix(a);
  auto [pb, qb] = detail::as_matrix(b);
  if (qa != qb)
    throw ShapeError("concat_rows: width mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
  bool rg = detail::want_grad(g, {a, b});
  Tensor c = detail::make_out({pa + pb, qa}, rg);
  std::copy_n(a->v.data(), a->numel(), c->v.data());
  std::copy_n(b->v.data(), b->numel(), c->v.data() + a->numel());
  if (rg) {
    g.record("concat_rows", {a.get(), b.get()}, c.get(), [a, b, c] {
      if (a->requires_grad)
        for (size_t i = 0; i < a->numel(); ++i) a->g[i] += c->g[i];
      if (b->requires_grad)
        for (size_t i = 0; i < b->numel(); ++i) b->g[i] += c->g[a->numel() + i];
    });
  }
  return c;
}

// -ln q[target], probabilities floored at kProbFloor. Gradient reaches the
// logits through the softmax that produced q.
inline Tensor cross_entropy(Graph& g, const Tensor& q, int target) {
  if (q->shape.size() != 1)
    throw ShapeError("cross_entropy: expected 1-D distribution, got " + shape_str(q->shape));
  if (target < 0 || target >= q->shape[0])
    throw std::out_of_range("cross_entropy: target " + std::to_string(target) + " outside |V|=" +
                            std::to_string(q->shape[0]));
  const bool clamped = q->v[static_cast<size_t>(target)] < kProbFloor;
  if (clamped) g.diagnostics.prob_floor_hits++;
  bool rg = detail::want_grad(g, {q});
  Tensor c = detail::make_out({1}, rg);
  c->v[0] = -std::log(clamped ? kProbFloor : q->v[static_cast<size_t>(target)]);
  if (rg) {
    g.record("cross_entropy", {q.get()}, c.get(), [q, c, target, clamped] {
      if (!clamped) q->g[static_cast<size_t>(target)] += -c->g[0] / q->v[static_cast<size_t>(target)];
    });
  }
  return c;
}

// KL(target ‖ student): sum of target_i * ln(target_i / student_i), terms with
// target_i = 0 contribute 0, probabilities floored at kProbFloor inside logs.
// Gradient reaches whichever argument carries one (the teacher side is
// normally detached and receives none).
inline Tensor kl_divergence(Graph& g, const Tensor& target, const Tensor& student) {
  if (target->shape.size() != 1 || student->shape.size() != 1 ||
      target->shape[0] != student->shape[0])
    throw ShapeError("kl_divergence: length mismatch " + shape_str(target->shape) + " vs " +
                     shape_str(student->shape));
  const int n = target->shape[0];
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double p = target->v[static_cast<size_t>(i)];
    if (p <= 0.0) continue;
    const double qv = student->v[static_cast<size_t>(i)];
    if (qv < kProbFloor) g.diagnostics.prob_floor_hits++;
    sum += p * (std::log(std::max(p, kProbFloor)) - std::log(std::max(qv, kProbFloor)));
  }
  bool rg = detail::want_grad(g, {target, student});
  Tensor c = detail::make_out({1}, rg);
  c->v[0] = std::max(0.0, sum);  // guards the last-ulp negatives near KL(q,q)
  if (rg) {
    g.record("kl_divergence", {target.get(), student.get()}, c.get(), [target, student, c, n] {
      const double go = c->g[0];
      for (int i = 0; i < n; ++i) {
        const double p = target->v[static_cast<size_t>(i)];
        if (p <= 0.0) continue;
        const double qv = student->v[static_cast<size_t>(i)];
        if (student->requires_grad && qv >= kProbFloor) student->g[static_cast<size_t>(i)] += -go * p / qv;
        if (target->requires_grad) {
          double term = std::log(std::max(p, kProbFloor)) - std::log(std::max(qv, kProbFloor));
          if (p > kProbFloor) term += 1.0;
          target->g[static_cast<size_t>(i)] += go * term;
        }
      }
    });
  }
  return c;
}

// Sum of scalar tensors; used to reduce per-token losses to a batch loss.
inline Tensor add_n(Graph& g, const std::vector<Tensor>& terms) {
  if (terms.empty()) throw ShapeError("add_n: empty input list");
  bool rg = false;
  double sum = 0.0;
  for (const auto& t : terms) {
    if (t->numel() != 1) throw ShapeError("add_n: expected scalars, got " + shape_str(t->shape));
    sum += t->v[0];
    if (g.recording() && t->requires_grad) rg = true;
  }
  Tensor c = detail::make_out({1}, rg);
  c->v[0] = sum;
  detail::ensure_finite(c, "add_n");
  if (rg) {
    std::vector<const TensorData*> ins;
    for (const auto& t : terms) ins.push_back(t.get());
    g.record("add_n", std::move(ins), c.get(), [terms, c] {
      for (const auto& t : terms)
        if (t->requires_grad) t->g[0] += c->g[0];
    });
  }
  return c;
}

}  // namespace fskd::ops
