// SPDX-License-Identifier: Apache-2.0
#include "slu/gru.hpp"

#include <cmath>
#include <string>

namespace slu {
namespace {

std::string join(std::string_view prefix, std::string_view leaf) {
  std::string s(prefix);
  s += '.';
  s += leaf;
  return s;
}

}  // namespace

void GruCell::declare(ParamStore& store, std::string_view prefix, std::size_t input,
                      std::size_t hidden, Rng& rng) {
  store.add(join(prefix, "wx"), xavier_uniform(3 * hidden, input, rng));
  store.add(join(prefix, "wh"), xavier_uniform(3 * hidden, hidden, rng));
  store.add(join(prefix, "bx"), Mat(3 * hidden, 1));
  store.add(join(prefix, "bh"), Mat(3 * hidden, 1));
}

GruCell GruCell::bind(ParamStore& store, std::string_view prefix) {
  GruCell c;
  c.wx_ = &store.at(join(prefix, "wx"));
  c.wh_ = &store.at(join(prefix, "wh"));
  c.bx_ = &store.at(join(prefix, "bx"));
  c.bh_ = &store.at(join(prefix, "bh"));
  return c;
}

void GruCell::forward(CSpan x, CSpan h_prev, Step& s) const {
  const std::size_t h = hidden_dim();
  s.x.assign(x.begin(), x.end());
  s.h_prev.assign(h_prev.begin(), h_prev.end());
  Vec gx = affine(wx_->value, bx_->value.flat(), x);
  Vec gh = affine(wh_->value, bh_->value.flat(), h_prev);
  s.r.resize(h);
  s.z.resize(h);
  s.n.resize(h);
  s.hn.assign(gh.begin() + 2 * static_cast<std::ptrdiff_t>(h), gh.end());
  s.h.resize(h);
  for (std::size_t i = 0; i < h; ++i) {
    s.r[i] = sigmoid(gx[i] + gh[i]);
    s.z[i] = sigmoid(gx[h + i] + gh[h + i]);
    s.n[i] = std::tanh(gx[2 * h + i] + s.r[i] * s.hn[i]);
    s.h[i] = (1.0 - s.z[i]) * s.n[i] + s.z[i] * h_prev[i];
  }
}

void GruCell::backward(const Step& s, CSpan dh, MSpan dx, MSpan dh_prev) const {
  const std::size_t h = hidden_dim();
  Vec dgx(3 * h), dgh(3 * h);
  for (std::size_t i = 0; i < h; ++i) {
    const double dn = dh[i] * (1.0 - s.z[i]);
    const double dz = dh[i] * (s.h_prev[i] - s.n[i]);
    dh_prev[i] += dh[i] * s.z[i];
    const double dn_pre = dn * (1.0 - s.n[i] * s.n[i]);
    const double dr = dn_pre * s.hn[i];
    const double dr_pre = dr * s.r[i] * (1.0 - s.r[i]);
    const double dz_pre = dz * s.z[i] * (1.0 - s.z[i]);
    dgx[i] = dr_pre;
    dgx[h + i] = dz_pre;
    dgx[2 * h + i] = dn_pre;
    dgh[i] = dr_pre;
    dgh[h + i] = dz_pre;
    dgh[2 * h + i] = dn_pre * s.r[i];
  }
  outer_acc(wx_->grad, dgx, s.x);
  outer_acc(wh_->grad, dgh, s.h_prev);
  add_bias(bx_->grad.flat(), dgx);
  add_bias(bh_->grad.flat(), dgh);
  if (!dx.empty()) gemv_t(wx_->value, dgx, dx);
  gemv_t(wh_->value, dgh, dh_prev);
}

void BiGru::declare(ParamStore& store, std::string_view prefix, std::size_t input,
                    std::size_t hidden, Rng& rng) {
  GruCell::declare(store, join(prefix, "fwd"), input, hidden, rng);
  GruCell::declare(store, join(prefix, "bwd"), input, hidden, rng);
}

BiGru BiGru::bind(ParamStore& store, std::string_view prefix) {
  BiGru b;
  b.fwd_ = GruCell::bind(store, join(prefix, "fwd"));
  b.bwd_ = GruCell::bind(store, join(prefix, "bwd"));
  return b;
}

Mat BiGru::forward(const Mat& x, Cache* cache) const {
  const std::size_t steps = x.rows();
  const std::size_t h = fwd_.hidden_dim();
  if (x.cols() != fwd_.input_dim()) {
    throw DimensionError("BiGru: features " + shape_string(x) + " vs input width " +
                         std::to_string(fwd_.input_dim()));
  }
  Mat out(steps, 2 * h);
  std::vector<GruCell::Step> local_f, local_b;
  auto& fs = cache != nullptr ? cache->fwd : local_f;
  auto& bs = cache != nullptr ? cache->bwd : local_b;
  fs.resize(steps);
  bs.resize(steps);

  Vec state(h, 0.0);
  for (std::size_t t = 0; t < steps; ++t) {
    fwd_.forward(x.row(t), state, fs[t]);
    state = fs[t].h;
    std::copy(state.begin(), state.end(), out.row(t).begin());
  }
  state.assign(h, 0.0);
  for (std::size_t k = steps; k-- > 0;) {
    bwd_.forward(x.row(k), state, bs[k]);
    state = bs[k].h;
    std::copy(state.begin(), state.end(), out.row(k).begin() + static_cast<std::ptrdiff_t>(h));
  }
  return out;
}

void BiGru::backward(const Cache& cache, const Mat& d_out) const {
  const std::size_t steps = d_out.rows();
  const std::size_t h = fwd_.hidden_dim();
  Vec carry(h, 0.0), dh(h), next(h);
  for (std::size_t k = steps; k-- > 0;) {
    auto row = d_out.row(k);
    for (std::size_t i = 0; i < h; ++i) dh[i] = row[i] + carry[i];
    std::fill(next.begin(), next.end(), 0.0);
    fwd_.backward(cache.fwd[k], dh, {}, next);
    carry.swap(next);
  }
  carry.assign(h, 0.0);
  for (std::size_t t = 0; t < steps; ++t) {
    auto row = d_out.row(t);
    for (std::size_t i = 0; i < h; ++i) dh[i] = row[h + i] + carry[i];
    std::fill(next.begin(), next.end(), 0.0);
    bwd_.backward(cache.bwd[t], dh, {}, next);
    carry.swap(next);
  }
}

}  // namespace slu
