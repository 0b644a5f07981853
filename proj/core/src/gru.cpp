#include "bflm/gru.hpp"

#include <cmath>

#include "bflm/errors.hpp"
#include "bflm/nn.hpp"

namespace bflm {

GruCell GruCell::create(ParamStore& store, const std::string& prefix, std::size_t input,
                        std::size_t hidden) {
  GruCell c;
  c.input_ = input;
  c.hidden_ = hidden;
  c.wr_ = store.add(prefix + ".W_r", {hidden, input});
  c.ur_ = store.add(prefix + ".U_r", {hidden, hidden});
  c.wz_ = store.add(prefix + ".W_z", {hidden, input});
  c.uz_ = store.add(prefix + ".U_z", {hidden, hidden});
  c.wx_ = store.add(prefix + ".W_x", {hidden, input});
  c.ux_ = store.add(prefix + ".U_x", {hidden, hidden});
  c.br_ = store.add(prefix + ".b_r", {hidden});
  c.bz_ = store.add(prefix + ".b_z", {hidden});
  c.bx_ = store.add(prefix + ".b_x", {hidden});
  return c;
}

Tensor GruCell::step(const ParamStore& store, std::span<const double> x, const Tensor& h_prev,
                     GruStepCache* cache) const {
  if (x.size() != input_ || h_prev.size() != hidden_)
    throw ContractViolation("gru_step: shape mismatch");

  Tensor r({hidden_}), z({hidden_}), hbar({hidden_}), h({hidden_});

  // r and z gates
  for (std::size_t i = 0; i < hidden_; ++i) {
    r[i] = store.value(br_)[i];
    z[i] = store.value(bz_)[i];
  }
  matvec_add(store.value(wr_), x, r.flat());
  matvec_add(store.value(ur_), h_prev.flat(), r.flat());
  matvec_add(store.value(wz_), x, z.flat());
  matvec_add(store.value(uz_), h_prev.flat(), z.flat());
  for (std::size_t i = 0; i < hidden_; ++i) {
    r[i] = sigmoid(r[i]);
    z[i] = sigmoid(z[i]);
  }

  // candidate state
  Tensor rh({hidden_});
  for (std::size_t i = 0; i < hidden_; ++i) rh[i] = r[i] * h_prev[i];
  for (std::size_t i = 0; i < hidden_; ++i) hbar[i] = store.value(bx_)[i];
  matvec_add(store.value(wx_), x, hbar.flat());
  matvec_add(store.value(ux_), rh.flat(), hbar.flat());
  for (std::size_t i = 0; i < hidden_; ++i) hbar[i] = std::tanh(hbar[i]);

  for (std::size_t i = 0; i < hidden_; ++i) h[i] = (1.0 - z[i]) * h_prev[i] + z[i] * hbar[i];

  if (!h.all_finite()) {
    const char* gate = !r.all_finite()   ? "r"
                       : !z.all_finite() ? "z"
                       : !hbar.all_finite() ? "hbar"
                                            : "h";
    throw NumericFault(std::string("gru_step: non-finite activation in gate ") + gate);
  }

  if (cache) {
    cache->x = Tensor({x.size()}, std::vector<double>(x.begin(), x.end()));
    cache->h_prev = h_prev;
    cache->r = r;
    cache->z = z;
    cache->hbar = hbar;
    cache->h = h;
  }
  return h;
}

void GruCell::backward(ParamStore& store, const GruStepCache& cache, const Tensor& dh,
                       std::span<double> dx, Tensor& dh_prev) const {
  const std::size_t H = hidden_;
  const Tensor& r = cache.r;
  const Tensor& z = cache.z;
  const Tensor& hbar = cache.hbar;
  const Tensor& hp = cache.h_prev;

  if (dh.size() != H || dx.size() != input_)
    throw ContractViolation("gru backward: shape mismatch");

  Tensor da_x({H}), da_z({H}), da_r({H}), dc({H});
  if (dh_prev.size() != H) dh_prev = Tensor({H});

  // h = (1-z) . h_prev + z . hbar
  for (std::size_t i = 0; i < H; ++i) {
    const double dhbar = dh[i] * z[i];
    da_x[i] = dhbar * (1.0 - hbar[i] * hbar[i]);
    const double dz = dh[i] * (hbar[i] - hp[i]);
    da_z[i] = dz * z[i] * (1.0 - z[i]);
    dh_prev[i] = dh[i] * (1.0 - z[i]);
  }

  // candidate path: hbar = tanh(W_x x + U_x (r . h_prev) + b_x)
  outer_add(store.grad(wx_), da_x.flat(), cache.x.flat());
  {
    Tensor rh({H});
    for (std::size_t i = 0; i < H; ++i) rh[i] = r[i] * hp[i];
    outer_add(store.grad(ux_), da_x.flat(), rh.flat());
  }
  axpy(1.0, da_x.flat(), store.grad(bx_).flat());
  dc.zero();
  matvec_t_add(store.value(ux_), da_x.flat(), dc.flat());
  for (std::size_t i = 0; i < H; ++i) {
    da_r[i] = dc[i] * hp[i] * r[i] * (1.0 - r[i]);
    dh_prev[i] += dc[i] * r[i];
  }

  // z gate
  outer_add(store.grad(wz_), da_z.flat(), cache.x.flat());
  outer_add(store.grad(uz_), da_z.flat(), hp.flat());
  axpy(1.0, da_z.flat(), store.grad(bz_).flat());
  matvec_t_add(store.value(uz_), da_z.flat(), dh_prev.flat());

  // r gate
  outer_add(store.grad(wr_), da_r.flat(), cache.x.flat());
  outer_add(store.grad(ur_), da_r.flat(), hp.flat());
  axpy(1.0, da_r.flat(), store.grad(br_).flat());
  matvec_t_add(store.value(ur_), da_r.flat(), dh_prev.flat());

  // input
  for (double& v : dx) v = 0.0;
  matvec_t_add(store.value(wx_), da_x.flat(), dx);
  matvec_t_add(store.value(wz_), da_z.flat(), dx);
  matvec_t_add(store.value(wr_), da_r.flat(), dx);
}

SoftmaxHead SoftmaxHead::create(ParamStore& store, const std::string& prefix, std::size_t vocab,
                                std::size_t hidden) {
  SoftmaxHead hd;
  hd.vocab_ = vocab;
  hd.hidden_ = hidden;
  hd.w_ = store.add(prefix + ".W", {vocab, hidden});
  hd.b_ = store.add(prefix + ".b", {vocab});
  return hd;
}

Tensor SoftmaxHead::logits(const ParamStore& store, const Tensor& h) const {
  Tensor out = store.value(b_);
  matvec_add(store.value(w_), h.flat(), out.flat());
  return out;
}

Tensor SoftmaxHead::distribution(const ParamStore& store, const Tensor& h) const {
  Tensor out = logits(store, h);
  softmax_inplace(out.flat());
  return out;
}

void SoftmaxHead::backward(ParamStore& store, const Tensor& h, const Tensor& probs, int target,
                           double weight, Tensor& dh_acc) const {
  // d(-log p[t])/dlogits = p - onehot(t)
  Tensor dlogits = probs;
  for (double& v : dlogits.flat()) v *= weight;
  dlogits[static_cast<std::size_t>(target)] -= weight;
  outer_add(store.grad(w_), dlogits.flat(), h.flat());
  axpy(1.0, dlogits.flat(), store.grad(b_).flat());
  matvec_t_add(store.value(w_), dlogits.flat(), dh_acc.flat());
}

EmbeddingTable EmbeddingTable::create(ParamStore& store, const std::string& name,
                                      std::size_t vocab, std::size_t dim) {
  EmbeddingTable t;
  t.vocab_ = vocab;
  t.dim_ = dim;
  t.idx_ = store.add(name, {vocab, dim}, ParamStore::Tag::EmbeddingRows);
  return t;
}

std::span<const double> EmbeddingTable::row(const ParamStore& store, int token) const {
  if (token < 0 || static_cast<std::size_t>(token) >= vocab_)
    throw ContractViolation("embedding lookup out of range");
  return store.value(idx_).row(static_cast<std::size_t>(token));
}

void EmbeddingTable::add_grad_row(ParamStore& store, int token, std::span<const double> g) const {
  axpy(1.0, g, store.grad(idx_).row(static_cast<std::size_t>(token)));
}

}  // namespace bflm
