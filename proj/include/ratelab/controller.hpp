#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ratelab/features.hpp"
#include "ratelab/pi_controller.hpp"
#include "ratelab/tensor.hpp"

namespace ratelab {

inline constexpr std::size_t kBudgetFeatDim = 5;
inline constexpr std::size_t kCodingFeatDim = 4;
inline constexpr std::size_t kHiddenDim = 64;

// Standard gated recurrent unit cell:
//   z = sigmoid(Wz x + Uz h + bz)
//   r = sigmoid(Wr x + Ur h + br)
//   hcand = tanh(Wh x + Uh (r . h) + bh)
//   h' = (1 - z) . h + z . hcand
struct GruWeights {
  Mat wz, uz;
  Vec bz;
  Mat wr, ur;
  Vec br;
  Mat wh, uh;
  Vec bh;

  GruWeights() = default;
  GruWeights(std::size_t input, std::size_t hidden)
      : wz(hidden, input), uz(hidden, hidden), bz(hidden, 0.0),
        wr(hidden, input), ur(hidden, hidden), br(hidden, 0.0),
        wh(hidden, input), uh(hidden, hidden), bh(hidden, 0.0) {}
};

// Intermediates of one cell step, kept for backpropagation through time.
struct GruCache {
  Vec x, h_prev, z, r, hcand;
};

inline Vec gru_cell(const GruWeights& w, const Vec& x, const Vec& h,
                    GruCache* cache = nullptr) {
  Vec az = matvec(w.wz, x);
  add_scaled(az, matvec(w.uz, h));
  add_scaled(az, w.bz);
  const Vec z = sigmoid(az);

  Vec ar = matvec(w.wr, x);
  add_scaled(ar, matvec(w.ur, h));
  add_scaled(ar, w.br);
  const Vec r = sigmoid(ar);

  Vec ah = matvec(w.wh, x);
  add_scaled(ah, matvec(w.uh, hadamard(r, h)));
  add_scaled(ah, w.bh);
  const Vec hcand = tanh_vec(ah);

  Vec h_new(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    h_new[i] = (1.0 - z[i]) * h[i] + z[i] * hcand[i];
  }
  if (cache) {
    cache->x = x;
    cache->h_prev = h;
    cache->z = z;
    cache->r = r;
    cache->hcand = hcand;
  }
  return h_new;
}

struct GruGrads {
  Vec dx;       // gradient into the cell input
  Vec dh_prev;  // gradient into the previous hidden state
};

// Reverse pass of one cell step given d(loss)/d(h_new).
inline GruGrads gru_backward(const GruWeights& w, const GruCache& c,
                             const Vec& dh_new, GruWeights& grads) {
  const std::size_t n = dh_new.size();
  Vec dz(n), dhcand(n), dh_prev(n);
  for (std::size_t i = 0; i < n; ++i) {
    dz[i] = dh_new[i] * (c.hcand[i] - c.h_prev[i]);
    dhcand[i] = dh_new[i] * c.z[i];
    dh_prev[i] = dh_new[i] * (1.0 - c.z[i]);
  }

  Vec dah(n);
  for (std::size_t i = 0; i < n; ++i) dah[i] = dhcand[i] * (1.0 - c.hcand[i] * c.hcand[i]);
  add_outer(grads.wh, dah, c.x);
  add_scaled(grads.bh, dah);
  const Vec rh = hadamard(c.r, c.h_prev);
  add_outer(grads.uh, dah, rh);
  const Vec drh = matvec_t(w.uh, dah);
  Vec dr(n);
  for (std::size_t i = 0; i < n; ++i) {
    dr[i] = drh[i] * c.h_prev[i];
    dh_prev[i] += drh[i] * c.r[i];
  }

  Vec daz(n), dar(n);
  for (std::size_t i = 0; i < n; ++i) {
    daz[i] = dz[i] * c.z[i] * (1.0 - c.z[i]);
    dar[i] = dr[i] * c.r[i] * (1.0 - c.r[i]);
  }
  add_outer(grads.wz, daz, c.x);
  add_outer(grads.uz, daz, c.h_prev);
  add_scaled(grads.bz, daz);
  add_outer(grads.wr, dar, c.x);
  add_outer(grads.ur, dar, c.h_prev);
  add_scaled(grads.br, dar);
  add_scaled(dh_prev, matvec_t(w.uz, daz));
  add_scaled(dh_prev, matvec_t(w.ur, dar));

  Vec dx = matvec_t(w.wz, daz);
  add_scaled(dx, matvec_t(w.wr, dar));
  add_scaled(dx, matvec_t(w.wh, dah));
  return {std::move(dx), std::move(dh_prev)};
}

// Two affine layers with a tanh between them; the output stays linear.
struct MlpWeights {
  Mat w1;
  Vec b1;
  Mat w2;
  Vec b2;

  MlpWeights() = default;
  MlpWeights(std::size_t input, std::size_t hidden, std::size_t output)
      : w1(hidden, input), b1(hidden, 0.0), w2(output, hidden), b2(output, 0.0) {}
};

struct MlpCache {
  Vec input, hidden;  // hidden = tanh(w1 x + b1)
};

inline Vec mlp_forward(const MlpWeights& w, const Vec& x, MlpCache* cache = nullptr) {
  Vec a1 = matvec(w.w1, x);
  add_scaled(a1, w.b1);
  const Vec t = tanh_vec(a1);
  Vec out = matvec(w.w2, t);
  add_scaled(out, w.b2);
  if (cache) {
    cache->input = x;
    cache->hidden = t;
  }
  return out;
}

// Reverse pass of the two-layer MLP; returns the gradient into the input.
inline Vec mlp_backward(const MlpWeights& w, const MlpCache& c, const Vec& dout,
                        MlpWeights& grads) {
  add_outer(grads.w2, dout, c.hidden);
  add_scaled(grads.b2, dout);
  const Vec dt = matvec_t(w.w2, dout);
  Vec da1(dt.size());
  for (std::size_t i = 0; i < dt.size(); ++i) {
    da1[i] = dt[i] * (1.0 - c.hidden[i] * c.hidden[i]);
  }
  add_outer(grads.w1, da1, c.input);
  add_scaled(grads.b1, da1);
  return matvec_t(w.w1, da1);
}

// All learnable tensors of the adjustment controller plus its output bound.
struct ControllerWeights {
  MlpWeights embed_b{kBudgetFeatDim, kHiddenDim, kHiddenDim};
  MlpWeights embed_c{kCodingFeatDim, kHiddenDim, kHiddenDim};
  GruWeights gru_b{kHiddenDim, kHiddenDim};
  GruWeights gru_c{kHiddenDim, kHiddenDim};
  MlpWeights gate{2 * kHiddenDim, kHiddenDim, kHiddenDim};
  Vec head_w = zeros(kHiddenDim);
  double head_b = 0.0;
  double delta_max = 0.20;

  std::size_t parameter_count() const {
    auto mlp = [](const MlpWeights& m) {
      return m.w1.data.size() + m.b1.size() + m.w2.data.size() + m.b2.size();
    };
    auto gru = [](const GruWeights& g) {
      return g.wz.data.size() + g.uz.data.size() + g.bz.size() +
             g.wr.data.size() + g.ur.data.size() + g.br.size() +
             g.wh.data.size() + g.uh.data.size() + g.bh.size();
    };
    return mlp(embed_b) + mlp(embed_c) + gru(gru_b) + gru(gru_c) + mlp(gate) +
           head_w.size() + 1;
  }
};

// Visits every learnable tensor as a flat (name, data, count) triple, in a
// fixed order shared by the optimizer, the gradient checker and tests.
template <typename F>
void for_each_param(ControllerWeights& w, F&& f) {
  auto mlp = [&](const std::string& name, MlpWeights& m) {
    f(name + ".w1", m.w1.data.data(), m.w1.data.size());
    f(name + ".b1", m.b1.data(), m.b1.size());
    f(name + ".w2", m.w2.data.data(), m.w2.data.size());
    f(name + ".b2", m.b2.data(), m.b2.size());
  };
  auto gru = [&](const std::string& name, GruWeights& g) {
    f(name + ".wz", g.wz.data.data(), g.wz.data.size());
    f(name + ".uz", g.uz.data.data(), g.uz.data.size());
    f(name + ".bz", g.bz.data(), g.bz.size());
    f(name + ".wr", g.wr.data.data(), g.wr.data.size());
    f(name + ".ur", g.ur.data.data(), g.ur.data.size());
    f(name + ".br", g.br.data(), g.br.size());
    f(name + ".wh", g.wh.data.data(), g.wh.data.size());
    f(name + ".uh", g.uh.data.data(), g.uh.data.size());
    f(name + ".bh", g.bh.data(), g.bh.size());
  };
  mlp("embed_b", w.embed_b);
  mlp("embed_c", w.embed_c);
  gru("gru_b", w.gru_b);
  gru("gru_c", w.gru_c);
  mlp("gate", w.gate);
  f("head.w", w.head_w.data(), w.head_w.size());
  f("head.b", &w.head_b, std::size_t{1});
}

struct ParamView {
  std::string name;
  double* data = nullptr;
  std::size_t count = 0;
};

struct ConstParamView {
  std::string name;
  const double* data = nullptr;
  std::size_t count = 0;
};

inline std::vector<ParamView> param_views(ControllerWeights& w) {
  std::vector<ParamView> views;
  for_each_param(w, [&](const std::string& name, double* data, std::size_t count) {
    views.push_back({name, data, count});
  });
  return views;
}

inline std::vector<ConstParamView> param_views(const ControllerWeights& w) {
  std::vector<ConstParamView> views;
  for_each_param(const_cast<ControllerWeights&>(w),
                 [&](const std::string& name, double* data, std::size_t count) {
                   views.push_back({name, data, count});
                 });
  return views;
}

struct ControllerState {
  Vec h_b = zeros(kHiddenDim);
  Vec h_c = zeros(kHiddenDim);
};

// Everything the reverse pass needs to revisit one forward step.
struct ControllerCache {
  MlpCache embed_b, embed_c;
  GruCache gru_b, gru_c;
  Vec h_b_new, h_c_new;
  MlpCache gate_mlp;
  Vec gate;        // sigmoid output g
  Vec h_fused;
  double tanh_head = 0.0;  // tanh of the head pre-activation
};

struct ControllerOutput {
  double delta = 0.0;
  ControllerState state;
  Vec gate;  // diagnostics: per-channel fusion weights in (0,1)
};

// Embeds both feature groups, advances the two GRU branches, fuses the
// post-update hidden states through the sigmoid gate, and emits the
// tanh-bounded residual in log-lambda.
inline ControllerOutput controller_forward(const ControllerWeights& w,
                                           const ControllerState& state,
                                           const BudgetFeatures& b,
                                           const CodingStats& c,
                                           ControllerCache* cache = nullptr) {
  const Vec fb(b.v.begin(), b.v.end());
  const Vec fc(c.v.begin(), c.v.end());

  MlpCache emb_b_cache, emb_c_cache;
  const Vec x_b = mlp_forward(w.embed_b, fb, cache ? &emb_b_cache : nullptr);
  const Vec x_c = mlp_forward(w.embed_c, fc, cache ? &emb_c_cache : nullptr);

  GruCache gru_b_cache, gru_c_cache;
  Vec h_b = gru_cell(w.gru_b, x_b, state.h_b, cache ? &gru_b_cache : nullptr);
  Vec h_c = gru_cell(w.gru_c, x_c, state.h_c, cache ? &gru_c_cache : nullptr);

  MlpCache gate_cache;
  const Vec gate_pre =
      mlp_forward(w.gate, concat(h_b, h_c), cache ? &gate_cache : nullptr);
  const Vec g = sigmoid(gate_pre);

  Vec h(kHiddenDim);
  for (std::size_t i = 0; i < kHiddenDim; ++i) {
    h[i] = g[i] * h_c[i] + (1.0 - g[i]) * h_b[i];
  }

  const double head = dot(w.head_w, h) + w.head_b;
  const double tanh_head = std::tanh(head);

  ControllerOutput out;
  out.delta = w.delta_max * tanh_head;
  out.state.h_b = h_b;
  out.state.h_c = h_c;
  out.gate = g;

  if (cache) {
    cache->embed_b = std::move(emb_b_cache);
    cache->embed_c = std::move(emb_c_cache);
    cache->gru_b = std::move(gru_b_cache);
    cache->gru_c = std::move(gru_c_cache);
    cache->h_b_new = h_b;
    cache->h_c_new = h_c;
    cache->gate_mlp = std::move(gate_cache);
    cache->gate = g;
    cache->h_fused = h;
    cache->tanh_head = tanh_head;
  }
  return out;
}

// Reverse pass of one controller step. d_delta is d(loss)/d(delta) at this
// step; carry_b/carry_c hold the recurrent gradients flowing back from the
// following step and are replaced with the gradients for the preceding one.
inline void controller_backward_step(const ControllerWeights& w,
                                     const ControllerCache& c, double d_delta,
                                     Vec& carry_b, Vec& carry_c,
                                     ControllerWeights& grads) {
  const double du = d_delta * w.delta_max * (1.0 - c.tanh_head * c.tanh_head);
  add_scaled(grads.head_w, c.h_fused, du);
  grads.head_b += du;

  Vec dh(kHiddenDim);
  for (std::size_t i = 0; i < kHiddenDim; ++i) dh[i] = du * w.head_w[i];

  // Fusion h = g . h_c + (1 - g) . h_b, plus the gate's own dependence on
  // both post-update hidden states.
  Vec dg(kHiddenDim), dh_b(kHiddenDim), dh_c(kHiddenDim);
  for (std::size_t i = 0; i < kHiddenDim; ++i) {
    dg[i] = dh[i] * (c.h_c_new[i] - c.h_b_new[i]);
    dh_c[i] = dh[i] * c.gate[i] + carry_c[i];
    dh_b[i] = dh[i] * (1.0 - c.gate[i]) + carry_b[i];
  }
  Vec da2(kHiddenDim);
  for (std::size_t i = 0; i < kHiddenDim; ++i) {
    da2[i] = dg[i] * c.gate[i] * (1.0 - c.gate[i]);
  }
  const Vec dcat = mlp_backward(w.gate, c.gate_mlp, da2, grads.gate);
  for (std::size_t i = 0; i < kHiddenDim; ++i) {
    dh_b[i] += dcat[i];
    dh_c[i] += dcat[kHiddenDim + i];
  }

  const GruGrads gb = gru_backward(w.gru_b, c.gru_b, dh_b, grads.gru_b);
  const GruGrads gc = gru_backward(w.gru_c, c.gru_c, dh_c, grads.gru_c);
  mlp_backward(w.embed_b, c.embed_b, gb.dx, grads.embed_b);
  mlp_backward(w.embed_c, c.embed_c, gc.dx, grads.embed_c);
  carry_b = gb.dh_prev;
  carry_c = gc.dh_prev;
}

// Residual composition of the final coding parameter.
inline double compose_lambda(double lambda_base, double delta, const PiBounds& bounds) {
  return clip(lambda_base * std::exp(delta), bounds.lambda_min, bounds.lambda_max);
}

namespace detail {

inline void init_mat(Mat& m, std::uint64_t seed, std::uint64_t& stream) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(m.cols));
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    m.data[i] = rng::uniform(seed, stream, i, -bound, bound);
  }
  ++stream;
}

inline void init_vec(Vec& v, std::size_t fan_in, std::uint64_t seed,
                     std::uint64_t& stream) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = rng::uniform(seed, stream, i, -bound, bound);
  }
  ++stream;
}

inline void init_mlp(MlpWeights& m, std::uint64_t seed, std::uint64_t& stream) {
  init_mat(m.w1, seed, stream);
  init_vec(m.b1, m.w1.cols, seed, stream);
  init_mat(m.w2, seed, stream);
  init_vec(m.b2, m.w2.cols, seed, stream);
}

inline void init_gru(GruWeights& g, std::uint64_t seed, std::uint64_t& stream) {
  init_mat(g.wz, seed, stream);
  init_mat(g.uz, seed, stream);
  init_vec(g.bz, g.uz.cols, seed, stream);
  init_mat(g.wr, seed, stream);
  init_mat(g.ur, seed, stream);
  init_vec(g.br, g.ur.cols, seed, stream);
  init_mat(g.wh, seed, stream);
  init_mat(g.uh, seed, stream);
  init_vec(g.bh, g.uh.cols, seed, stream);
}

}  // namespace detail

// Uniform +-1/sqrt(fan_in) everywhere except the head, which starts at
// zero so an untrained controller reproduces the PI-only trajectory.
inline ControllerWeights init_controller_weights(std::uint64_t seed,
                                                 double delta_max = 0.20) {
  if (!(delta_max > 0.0)) throw std::invalid_argument("delta_max must be > 0");
  ControllerWeights w;
  w.delta_max = delta_max;
  std::uint64_t stream = 100;
  detail::init_mlp(w.embed_b, seed, stream);
  detail::init_mlp(w.embed_c, seed, stream);
  detail::init_gru(w.gru_b, seed, stream);
  detail::init_gru(w.gru_c, seed, stream);
  detail::init_mlp(w.gate, seed, stream);
  // head_w, head_b stay zero
  return w;
}

}  // namespace ratelab
