// SPDX-License-Identifier: Apache-2.0
#include "slu/ctc.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>

#include "slu/kernels.hpp"

namespace slu {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double lse2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

struct Lattice {
  std::vector<std::size_t> ext;  // blank-interleaved target, length 2L+1
  Mat alpha;                     // T x S log forward variables
  Mat beta;                      // T x S log backward variables (excluding frame t)
  double log_total = kNegInf;
};

void check_inputs(const Mat& logp, std::span<const std::size_t> target, std::size_t blank) {
  if (blank >= logp.cols()) {
    throw DimensionError("ctc_loss: blank " + std::to_string(blank) + " outside posteriors " +
                         shape_string(logp));
  }
  for (std::size_t id : target) {
    if (id >= logp.cols() || id == blank) {
      throw DimensionError("ctc_loss: target id " + std::to_string(id) +
                           " invalid for posteriors " + shape_string(logp));
    }
  }
  const std::size_t need = ctc_min_frames(target);
  if (logp.rows() < need) {
    throw InfeasibleTarget("ctc_loss: target needs " + std::to_string(need) + " frames, got " +
                           std::to_string(logp.rows()));
  }
}

// Standard CTC recursions in log space over the extended label sequence.
Lattice run_lattice(const Mat& logp, std::span<const std::size_t> target, std::size_t blank,
                    bool with_beta) {
  Lattice lat;
  const std::size_t steps = logp.rows();
  lat.ext.assign(2 * target.size() + 1, blank);
  for (std::size_t i = 0; i < target.size(); ++i) lat.ext[2 * i + 1] = target[i];
  const std::size_t states = lat.ext.size();
  const auto& ext = lat.ext;
  auto can_skip = [&](std::size_t s) { return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]; };

  lat.alpha = Mat(steps, states, kNegInf);
  lat.alpha(0, 0) = logp(0, ext[0]);
  if (states > 1) lat.alpha(0, 1) = logp(0, ext[1]);
  for (std::size_t t = 1; t < steps; ++t) {
    for (std::size_t s = 0; s < states; ++s) {
      double a = lat.alpha(t - 1, s);
      if (s >= 1) a = lse2(a, lat.alpha(t - 1, s - 1));
      if (can_skip(s)) a = lse2(a, lat.alpha(t - 1, s - 2));
      lat.alpha(t, s) = a == kNegInf ? kNegInf : a + logp(t, ext[s]);
    }
  }
  lat.log_total = lat.alpha(steps - 1, states - 1);
  if (states > 1) lat.log_total = lse2(lat.log_total, lat.alpha(steps - 1, states - 2));

  if (with_beta) {
    lat.beta = Mat(steps, states, kNegInf);
    lat.beta(steps - 1, states - 1) = 0.0;
    if (states > 1) lat.beta(steps - 1, states - 2) = 0.0;
    for (std::size_t t = steps - 1; t-- > 0;) {
      for (std::size_t s = 0; s < states; ++s) {
        double b = lat.beta(t + 1, s) + logp(t + 1, ext[s]);
        if (s + 1 < states) b = lse2(b, lat.beta(t + 1, s + 1) + logp(t + 1, ext[s + 1]));
        if (s + 2 < states && can_skip(s + 2))
          b = lse2(b, lat.beta(t + 1, s + 2) + logp(t + 1, ext[s + 2]));
        lat.beta(t, s) = b;
      }
    }
  }
  return lat;
}

}  // namespace

std::size_t ctc_min_frames(std::span<const std::size_t> target) {
  std::size_t n = target.size();
  for (std::size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++n;
  return n;
}

double ctc_loss(const Mat& logp, std::span<const std::size_t> target, std::size_t blank) {
  check_inputs(logp, target, blank);
  if (logp.rows() == 0) return 0.0;
  return -run_lattice(logp, target, blank, false).log_total;
}

CtcLossResult ctc_loss_with_grad(const Mat& logits, std::span<const std::size_t> target,
                                 std::size_t blank) {
  const Mat logp = row_log_softmax(logits);
  check_inputs(logp, target, blank);
  CtcLossResult r;
  r.grad_logits = Mat(logits.rows(), logits.cols());
  if (logits.rows() == 0) return r;
  const Lattice lat = run_lattice(logp, target, blank, true);
  if (lat.log_total == kNegInf) throw InfeasibleTarget("ctc_loss: target has zero probability");
  r.loss = -lat.log_total;

  // d loss / d logit(t, k) = p(t, k) - (1 / P) * sum_{s: ext[s] = k} alpha(t, s) beta'(t, s),
  // where alpha(t, s) already includes the emission at frame t.
  Mat occupancy(logits.rows(), logits.cols(), kNegInf);
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    for (std::size_t s = 0; s < lat.ext.size(); ++s) {
      const double v = lat.alpha(t, s) + lat.beta(t, s);
      occupancy(t, lat.ext[s]) = lse2(occupancy(t, lat.ext[s]), v);
    }
    for (std::size_t k = 0; k < logits.cols(); ++k) {
      r.grad_logits(t, k) = std::exp(logp(t, k)) - std::exp(occupancy(t, k) - lat.log_total);
    }
  }
  return r;
}

std::vector<std::size_t> greedy_decode(const Mat& logp, std::size_t blank) {
  std::vector<std::size_t> out;
  std::size_t prev = blank;
  for (std::size_t t = 0; t < logp.rows(); ++t) {
    const std::size_t best = argmax(logp.row(t));
    if (best != blank && best != prev) out.push_back(best);
    prev = best;
  }
  return out;
}

CtcModel::CtcModel(CtcConfig cfg, Vocabulary vocab, std::uint64_t seed)
    : cfg_(cfg), vocab_(std::move(vocab)) {
  if (vocab_.size() == 0 || vocab_.token(0) != kBlank)
    throw std::invalid_argument("CtcModel: vocabulary must start with " + std::string(kBlank));
  Rng rng(seed);
  BiGru::declare(params_, "enc", cfg_.input_dim, cfg_.hidden, rng);
  params_.add("out.w", xavier_uniform(vocab_.size(), 2 * cfg_.hidden, rng));
  params_.add("out.b", Mat(vocab_.size(), 1));
  bind();
}

CtcModel::CtcModel(CtcConfig cfg, Vocabulary vocab, ParamStore params)
    : cfg_(cfg), vocab_(std::move(vocab)), params_(std::move(params)) {
  if (vocab_.size() == 0 || vocab_.token(0) != kBlank)
    throw std::invalid_argument("CtcModel: vocabulary must start with " + std::string(kBlank));
  bind();
  if (out_w_->value.rows() != vocab_.size() || out_w_->value.cols() != 2 * cfg_.hidden ||
      out_b_->value.rows() != vocab_.size()) {
    throw DimensionError("CtcModel: output layer " + shape_string(out_w_->value) +
                         " does not match vocabulary of " + std::to_string(vocab_.size()));
  }
}

CtcModel::CtcModel(const CtcModel& o) : cfg_(o.cfg_), vocab_(o.vocab_), params_(o.params_) { bind(); }

CtcModel& CtcModel::operator=(const CtcModel& o) {
  if (this != &o) {
    cfg_ = o.cfg_;
    vocab_ = o.vocab_;
    params_ = o.params_;
    bind();
  }
  return *this;
}

CtcModel::CtcModel(CtcModel&& o) noexcept
    : cfg_(o.cfg_), vocab_(std::move(o.vocab_)), params_(std::move(o.params_)) {
  bind();
}

CtcModel& CtcModel::operator=(CtcModel&& o) noexcept {
  cfg_ = o.cfg_;
  vocab_ = std::move(o.vocab_);
  params_ = std::move(o.params_);
  bind();
  return *this;
}

void CtcModel::bind() {
  encoder_ = BiGru::bind(params_, "enc");
  out_w_ = &params_.at("out.w");
  out_b_ = &params_.at("out.b");
}

Mat CtcModel::encode(const Mat& features) const { return encoder_.forward(features, nullptr); }

Mat CtcModel::logits(const Mat& features) const {
  return linear_rows(encode(features), out_w_->value, out_b_->value.flat());
}

Mat CtcModel::log_posteriors(const Mat& features) const { return row_log_softmax(logits(features)); }

double CtcModel::loss_and_grad(const Mat& features, std::span<const std::size_t> target) {
  BiGru::Cache cache;
  const Mat enc = encoder_.forward(features, &cache);
  const Mat z = linear_rows(enc, out_w_->value, out_b_->value.flat());
  auto r = ctc_loss_with_grad(z, target, 0);
  Mat d_enc(enc.rows(), enc.cols());
  linear_rows_backward(enc, out_w_->value, r.grad_logits, &d_enc, out_w_->grad,
                       out_b_->grad.flat());
  encoder_.backward(cache, d_enc);
  return r.loss;
}

std::vector<std::string> CtcModel::decode(const Mat& features) const {
  const auto ids = greedy_decode(log_posteriors(features), 0);
  return vocab_.decode(ids);
}

void CtcModel::save(std::ostream& out) const {
  out << "slu-checkpoint 1\nkind ctc\n";
  out << "input_dim " << cfg_.input_dim << "\nhidden " << cfg_.hidden << '\n';
  out << "vocab " << vocab_.size() << '\n';
  for (const auto& t : vocab_.tokens()) out << t << '\n';
  write_params(out, params_);
}

namespace {

void expect(std::istream& in, std::string_view key) {
  std::string k;
  if (!(in >> k) || k != key) {
    throw std::runtime_error("checkpoint: expected '" + std::string(key) + "', got '" + k + "'");
  }
}

}  // namespace

CtcModel CtcModel::load(std::istream& in) {
  std::string magic, kind;
  int version = 0;
  if (!(in >> magic >> version) || magic != "slu-checkpoint" || version != 1)
    throw std::runtime_error("checkpoint: bad header");
  expect(in, "kind");
  in >> kind;
  if (kind != "ctc") throw std::runtime_error("checkpoint: expected a ctc model, got " + kind);
  CtcConfig cfg;
  expect(in, "input_dim");
  in >> cfg.input_dim;
  expect(in, "hidden");
  in >> cfg.hidden;
  expect(in, "vocab");
  std::size_t n = 0;
  in >> n;
  std::vector<std::string> toks(n);
  for (auto& t : toks) in >> t;
  if (!in) throw std::runtime_error("checkpoint: truncated vocabulary");
  return CtcModel(cfg, Vocabulary(std::move(toks)), read_params(in));
}

std::string_view output_mode_name(OutputLayerMode m) {
  return m == OutputLayerMode::Replace ? "replace" : "extend";
}

OutputLayerMode parse_output_mode(std::string_view s) {
  if (s == "replace") return OutputLayerMode::Replace;
  if (s == "extend") return OutputLayerMode::Extend;
  throw std::invalid_argument("unknown output layer mode '" + std::string(s) +
                              "' (expected replace|extend)");
}

CtcModel replace_output_layer(const CtcModel& model, const Vocabulary& new_vocab,
                              OutputLayerMode mode, std::uint64_t seed) {
  if (new_vocab.size() == 0 || new_vocab.token(0) != kBlank)
    throw std::invalid_argument("replace_output_layer: vocabulary must start with blank");
  Rng rng(seed);
  const std::size_t width = 2 * model.config().hidden;
  Mat w = xavier_uniform(new_vocab.size(), width, rng);
  Mat b(new_vocab.size(), 1);
  if (mode == OutputLayerMode::Extend) {
    const Mat& old_w = model.params().at("out.w").value;
    const Mat& old_b = model.params().at("out.b").value;
    for (std::size_t i = 0; i < new_vocab.size(); ++i) {
      if (auto j = model.vocab().find(new_vocab.token(i))) {
        std::copy(old_w.row(*j).begin(), old_w.row(*j).end(), w.row(i).begin());
        b(i, 0) = old_b(*j, 0);
      }
    }
  }
  ParamStore params = model.params();
  params.reset("out.w", std::move(w));
  params.reset("out.b", std::move(b));
  params.zero_grad();
  return CtcModel(model.config(), new_vocab, std::move(params));
}

}  // namespace slu
