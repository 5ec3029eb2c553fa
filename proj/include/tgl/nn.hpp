#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tgl/graph.hpp"
#include "tgl/rng.hpp"
#include "tgl/tensor.hpp"

namespace tgl::nn {

template <typename S>
struct ParameterT {
  std::string name;
  TensorT<S> value;
  TensorT<S> grad;

  ParameterT() = default;
  ParameterT(std::string n, TensorT<S> v)
      : name(std::move(n)), value(std::move(v)), grad(TensorT<S>(value.shape)) {}

  void zero_grad() { grad.zero(); }
};

using Parameter = ParameterT<float>;

// Glorot-uniform bound sqrt(6 / (fan_in + fan_out)), seeded.
template <typename S>
TensorT<S> glorot_init(int64_t fan_in, int64_t fan_out, Rng& rng) {
  TensorT<S> t({fan_in, fan_out});
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.data) v = static_cast<S>(rng.uniform(-a, a));
  return t;
}

// --- dense layer -------------------------------------------------------------

template <typename S>
struct LinearT {
  ParameterT<S> W, b;

  static LinearT init(const std::string& prefix, int64_t in, int64_t out, Rng& rng) {
    LinearT l;
    l.W = ParameterT<S>(prefix + ".W", glorot_init<S>(in, out, rng));
    l.b = ParameterT<S>(prefix + ".b", TensorT<S>({out}));
    return l;
  }
};

using Linear = LinearT<float>;

// y = x W + b
template <typename S>
TensorT<S> linear_forward(const TensorT<S>& x, const TensorT<S>& W, const TensorT<S>& b) {
  TensorT<S> y = matmul(x, W);
  add_row_inplace(y, b);
  TGL_DEBUG_CHECK_FINITE(y, "linear");
  return y;
}

// Accumulates into gW/gb and (when gx != nullptr) into gx.
template <typename S>
void linear_backward(const TensorT<S>& x, const TensorT<S>& W, const TensorT<S>& gy,
                     TensorT<S>* gx, TensorT<S>& gW, TensorT<S>& gb) {
  matmul_tn_into(x, gy, gW, /*accumulate=*/true);
  accumulate_col_sums(gy, gb);
  if (gx) matmul_nt_into(gy, W, *gx, /*accumulate=*/true);
}

// --- activations -------------------------------------------------------------

enum class Act { Relu, Sigmoid, Tanh };

template <typename S>
TensorT<S> act_forward(const TensorT<S>& x, Act kind) {
  TensorT<S> y(x.shape);
  switch (kind) {
    case Act::Relu:
      for (size_t i = 0; i < x.data.size(); ++i) y.data[i] = x.data[i] > S(0) ? x.data[i] : S(0);
      break;
    case Act::Sigmoid:
      for (size_t i = 0; i < x.data.size(); ++i)
        y.data[i] = static_cast<S>(1.0 / (1.0 + std::exp(-static_cast<double>(x.data[i]))));
      break;
    case Act::Tanh:
      for (size_t i = 0; i < x.data.size(); ++i)
        y.data[i] = static_cast<S>(std::tanh(static_cast<double>(x.data[i])));
      break;
  }
  return y;
}

// gx from upstream gy; x is the forward input, y the forward output.
template <typename S>
TensorT<S> act_backward(const TensorT<S>& x, const TensorT<S>& y, const TensorT<S>& gy,
                        Act kind) {
  TensorT<S> gx(x.shape);
  switch (kind) {
    case Act::Relu:
      for (size_t i = 0; i < x.data.size(); ++i) gx.data[i] = x.data[i] > S(0) ? gy.data[i] : S(0);
      break;
    case Act::Sigmoid:
      for (size_t i = 0; i < x.data.size(); ++i)
        gx.data[i] = gy.data[i] * y.data[i] * (S(1) - y.data[i]);
      break;
    case Act::Tanh:
      for (size_t i = 0; i < x.data.size(); ++i)
        gx.data[i] = gy.data[i] * (S(1) - y.data[i] * y.data[i]);
      break;
  }
  return gx;
}

// --- neighborhood mean aggregation -------------------------------------------

enum class Direction { In, Out, Und };

// M[v] = mean of H rows over v's distinct neighbor set (zero row if none).
template <typename S>
TensorT<S> mean_aggregate(const graph::Adjacency& adj, const TensorT<S>& H, Direction dir) {
  const int32_t n = adj.node_count();
  if (H.rows() != n) throw DataError("mean_aggregate: H row count != node count");
  const int64_t d = H.cols();
  TensorT<S> M({n, d});
  ThreadPool::instance().parallel_for(n, [&](int64_t v0, int64_t v1) {
    for (int64_t v = v0; v < v1; ++v) {
      S* out = M.row_ptr(v);
      auto add_row = [&](int32_t u) {
        const S* src = H.row_ptr(u);
        for (int64_t j = 0; j < d; ++j) out[j] += src[j];
      };
      int64_t count = 0;
      switch (dir) {
        case Direction::In:
          for (auto& [u, _] : adj.in[v]) add_row(u);
          count = static_cast<int64_t>(adj.in[v].size());
          break;
        case Direction::Out:
          for (auto& [u, _] : adj.out[v]) add_row(u);
          count = static_cast<int64_t>(adj.out[v].size());
          break;
        case Direction::Und:
          for (int32_t u : adj.und[v]) add_row(u);
          count = static_cast<int64_t>(adj.und[v].size());
          break;
      }
      if (count > 0) {
        const S inv = S(1) / static_cast<S>(count);
        for (int64_t j = 0; j < d; ++j) out[j] *= inv;
      }
    }
  });
  return M;
}

// gH[u] = sum over v with u in N(v) of gM[v] / |N(v)|, computed row-wise in
// the transposed direction so each output row has a single writer.
template <typename S>
TensorT<S> mean_aggregate_backward(const graph::Adjacency& adj, const TensorT<S>& gM,
                                   Direction dir) {
  const int32_t n = adj.node_count();
  if (gM.rows() != n) throw DataError("mean_aggregate_backward: row count mismatch");
  const int64_t d = gM.cols();
  TensorT<S> gH({n, d});
  ThreadPool::instance().parallel_for(n, [&](int64_t u0, int64_t u1) {
    for (int64_t u = u0; u < u1; ++u) {
      S* out = gH.row_ptr(u);
      auto add_scaled = [&](int32_t v, int64_t deg) {
        if (deg == 0) return;
        const S w = S(1) / static_cast<S>(deg);
        const S* src = gM.row_ptr(v);
        for (int64_t j = 0; j < d; ++j) out[j] += w * src[j];
      };
      switch (dir) {
        case Direction::In:  // u feeds every v it points to
          for (auto& [v, _] : adj.out[u]) add_scaled(v, static_cast<int64_t>(adj.in[v].size()));
          break;
        case Direction::Out:
          for (auto& [v, _] : adj.in[u]) add_scaled(v, static_cast<int64_t>(adj.out[v].size()));
          break;
        case Direction::Und:
          for (int32_t v : adj.und[u]) add_scaled(v, static_cast<int64_t>(adj.und[v].size()));
          break;
      }
    }
  });
  return gH;
}

// --- gated recurrent cell ------------------------------------------------------

template <typename S>
struct GruParamsT {
  ParameterT<S> Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh;

  static GruParamsT init(const std::string& prefix, int64_t in, int64_t hidden, Rng& rng) {
    GruParamsT p;
    p.Wz = ParameterT<S>(prefix + ".Wz", glorot_init<S>(in, hidden, rng));
    p.Uz = ParameterT<S>(prefix + ".Uz", glorot_init<S>(hidden, hidden, rng));
    p.bz = ParameterT<S>(prefix + ".bz", TensorT<S>({hidden}));
    p.Wr = ParameterT<S>(prefix + ".Wr", glorot_init<S>(in, hidden, rng));
    p.Ur = ParameterT<S>(prefix + ".Ur", glorot_init<S>(hidden, hidden, rng));
    p.br = ParameterT<S>(prefix + ".br", TensorT<S>({hidden}));
    p.Wh = ParameterT<S>(prefix + ".Wh", glorot_init<S>(in, hidden, rng));
    p.Uh = ParameterT<S>(prefix + ".Uh", glorot_init<S>(hidden, hidden, rng));
    p.bh = ParameterT<S>(prefix + ".bh", TensorT<S>({hidden}));
    return p;
  }

  std::vector<ParameterT<S>*> all() {
    return {&Wz, &Uz, &bz, &Wr, &Ur, &br, &Wh, &Uh, &bh};
  }
};

using GruParams = GruParamsT<float>;

template <typename S>
struct GruCacheT {
  TensorT<S> x, h_prev, z, r, c, rh;
};

// z = sigma(x Wz + h Uz + bz), r = sigma(x Wr + h Ur + br),
// c = tanh(x Wh + (r*h) Uh + bh), h' = (1-z)*c + z*h.
template <typename S>
TensorT<S> gru_forward(const TensorT<S>& x, const TensorT<S>& h_prev,
                       GruParamsT<S>& p, GruCacheT<S>* cache) {
  TensorT<S> az = linear_forward(x, p.Wz.value, p.bz.value);
  matmul_into(h_prev, p.Uz.value, az, /*accumulate=*/true);
  TensorT<S> z = act_forward(az, Act::Sigmoid);

  TensorT<S> ar = linear_forward(x, p.Wr.value, p.br.value);
  matmul_into(h_prev, p.Ur.value, ar, /*accumulate=*/true);
  TensorT<S> r = act_forward(ar, Act::Sigmoid);

  TensorT<S> rh(h_prev.shape);
  for (size_t i = 0; i < rh.data.size(); ++i) rh.data[i] = r.data[i] * h_prev.data[i];

  TensorT<S> ac = linear_forward(x, p.Wh.value, p.bh.value);
  matmul_into(rh, p.Uh.value, ac, /*accumulate=*/true);
  TensorT<S> c = act_forward(ac, Act::Tanh);

  TensorT<S> h(h_prev.shape);
  for (size_t i = 0; i < h.data.size(); ++i)
    h.data[i] = (S(1) - z.data[i]) * c.data[i] + z.data[i] * h_prev.data[i];
  TGL_DEBUG_CHECK_FINITE(h, "gru");

  if (cache) {
    cache->x = x;
    cache->h_prev = h_prev;
    cache->z = std::move(z);
    cache->r = std::move(r);
    cache->c = std::move(c);
    cache->rh = std::move(rh);
  }
  return h;
}

// Accumulates parameter grads into p.*.grad; optionally emits gx and gh_prev.
template <typename S>
void gru_backward(const GruCacheT<S>& cc, GruParamsT<S>& p, const TensorT<S>& gh,
                  TensorT<S>* gx, TensorT<S>* gh_prev) {
  const auto& z = cc.z;
  const auto& r = cc.r;
  const auto& c = cc.c;

  TensorT<S> gaz(z.shape), gac(c.shape), ghp(cc.h_prev.shape);
  for (size_t i = 0; i < gh.data.size(); ++i) {
    const S g = gh.data[i];
    const S gz = g * (cc.h_prev.data[i] - c.data[i]);
    gaz.data[i] = gz * z.data[i] * (S(1) - z.data[i]);
    const S gc = g * (S(1) - z.data[i]);
    gac.data[i] = gc * (S(1) - c.data[i] * c.data[i]);
    ghp.data[i] = g * z.data[i];
  }

  // candidate branch
  linear_backward(cc.x, p.Wh.value, gac, gx, p.Wh.grad, p.bh.grad);
  TensorT<S> grh({cc.h_prev.rows(), cc.h_prev.cols()});
  matmul_nt_into(gac, p.Uh.value, grh, /*accumulate=*/false);
  matmul_tn_into(cc.rh, gac, p.Uh.grad, /*accumulate=*/true);

  TensorT<S> gar(r.shape);
  for (size_t i = 0; i < grh.data.size(); ++i) {
    const S gr = grh.data[i] * cc.h_prev.data[i];
    ghp.data[i] += grh.data[i] * r.data[i];
    gar.data[i] = gr * r.data[i] * (S(1) - r.data[i]);
  }

  // reset gate
  linear_backward(cc.x, p.Wr.value, gar, gx, p.Wr.grad, p.br.grad);
  matmul_nt_into(gar, p.Ur.value, ghp, /*accumulate=*/true);
  matmul_tn_into(cc.h_prev, gar, p.Ur.grad, /*accumulate=*/true);

  // update gate
  linear_backward(cc.x, p.Wz.value, gaz, gx, p.Wz.grad, p.bz.grad);
  matmul_nt_into(gaz, p.Uz.value, ghp, /*accumulate=*/true);
  matmul_tn_into(cc.h_prev, gaz, p.Uz.grad, /*accumulate=*/true);

  if (gh_prev) axpy(*gh_prev, S(1), ghp);
}

// --- losses -------------------------------------------------------------------

// Mean over selected rows of 2-class cross-entropy on logits. glogits, when
// given, must be zero-initialized at the full logits shape.
template <typename S>
double cross_entropy_2class(const TensorT<S>& logits, const std::vector<int>& labels,
                            const std::vector<int32_t>& rows, TensorT<S>* glogits) {
  if (rows.empty()) throw DataError("cross_entropy_2class: empty batch");
  if (logits.cols() != 2) throw DataError("cross_entropy_2class: logits must be n x 2");
  double total = 0.0;
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  for (int32_t r : rows) {
    const double l0 = logits.at(r, 0), l1 = logits.at(r, 1);
    const int y = labels[static_cast<size_t>(r)];
    const double m = std::max(l0, l1);
    const double lse = m + std::log(std::exp(l0 - m) + std::exp(l1 - m));
    total += lse - (y == 0 ? l0 : l1);
    if (glogits) {
      const double p0 = std::exp(l0 - lse);
      const double p1 = std::exp(l1 - lse);
      glogits->at(r, 0) += static_cast<S>((p0 - (y == 0 ? 1.0 : 0.0)) * inv_n);
      glogits->at(r, 1) += static_cast<S>((p1 - (y == 1 ? 1.0 : 0.0)) * inv_n);
    }
  }
  return total * inv_n;
}

constexpr double kProbClamp = 1e-7;

// Mean BCE over probabilities clamped to [1e-7, 1-1e-7].
template <typename S>
double binary_cross_entropy(const std::vector<S>& p, const std::vector<S>& y,
                            std::vector<S>* gp) {
  if (p.empty() || p.size() != y.size()) throw DataError("binary_cross_entropy: empty or mismatched batch");
  double total = 0.0;
  const double inv_n = 1.0 / static_cast<double>(p.size());
  for (size_t i = 0; i < p.size(); ++i) {
    const double pc = std::min(1.0 - kProbClamp, std::max(kProbClamp, static_cast<double>(p[i])));
    const double yi = static_cast<double>(y[i]);
    total += -(yi * std::log(pc) + (1.0 - yi) * std::log(1.0 - pc));
    if (gp) (*gp)[i] = static_cast<S>((-yi / pc + (1.0 - yi) / (1.0 - pc)) * inv_n);
  }
  return total * inv_n;
}

// --- Adam -----------------------------------------------------------------------

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Tensor m, v;
};

// Standard Adam with bias correction; parameter order fixes the update order.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(const std::vector<Parameter*>& params);
  int64_t t() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::vector<AdamState> states_;
};

// --- checkpoint container ("ALTH") -----------------------------------------------

struct Checkpoint {
  std::map<std::string, Tensor> tensors;
  std::vector<std::pair<std::string, std::string>> sections;  // (4-char tag, bytes)
};

std::string serialize_checkpoint(
    const std::vector<const Parameter*>& params,
    const std::vector<std::pair<std::string, std::string>>& sections = {});
Checkpoint parse_checkpoint(const std::string& bytes);
void save_checkpoint(const std::string& path, const std::vector<const Parameter*>& params,
                     const std::vector<std::pair<std::string, std::string>>& sections = {});
Checkpoint load_checkpoint(const std::string& path);

// Strict by-name restore; missing/mismatched tensors throw.
void restore_parameters(const Checkpoint& ckpt, const std::vector<Parameter*>& params);

// --- gradient checking ------------------------------------------------------------

struct GradCheckEntry {
  std::string param;
  int64_t index = 0;
  double analytic = 0.0, numeric = 0.0, rel_err = 0.0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  int64_t coords_checked = 0;
  GradCheckEntry worst;

  bool passed(double tol) const { return coords_checked > 0 && max_rel_err < tol; }
};

// loss_fn(want_grad) returns the scalar loss; when want_grad it must also
// fill param grads (harness zeroes them first). Central differences with
// step h; relative error uses a unit floor so near-zero gradients are
// compared absolutely. max_coords == 0 checks every coordinate.
template <typename S, typename LossFn>
GradCheckReport grad_check(LossFn&& loss_fn, const std::vector<ParameterT<S>*>& params,
                           double h = 1e-3, int64_t max_coords = 0) {
  for (auto* p : params) p->zero_grad();
  (void)loss_fn(true);

  GradCheckReport report;
  for (auto* p : params) {
    const int64_t n = p->value.numel();
    const int64_t stride = (max_coords > 0 && n > max_coords) ? (n + max_coords - 1) / max_coords : 1;
    for (int64_t i = 0; i < n; i += stride) {
      const S saved = p->value.data[static_cast<size_t>(i)];
      p->value.data[static_cast<size_t>(i)] = saved + static_cast<S>(h);
      const double lp = loss_fn(false);
      p->value.data[static_cast<size_t>(i)] = saved - static_cast<S>(h);
      const double lm = loss_fn(false);
      p->value.data[static_cast<size_t>(i)] = saved;

      const double numeric = (lp - lm) / (2.0 * h);
      const double analytic = static_cast<double>(p->grad.data[static_cast<size_t>(i)]);
      const double rel = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), 1.0});
      ++report.coords_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst = {p->name, i, analytic, numeric, rel};
      }
    }
  }
  return report;
}

}  // namespace tgl::nn
