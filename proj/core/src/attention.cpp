// SPDX-License-Identifier: Apache-2.0
#include "slu/attention.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <stdexcept>

#include "slu/kernels.hpp"

namespace slu {

struct AttnModel::StepCache {
  std::size_t prev_token = 0;
  GruCell::Step gru;
  Mat loc;  // T x channels
  Mat u;    // T x attn_dim, tanh of the energy pre-activation
  Vec alpha_prev;
  Vec alpha;
  Vec out_in;  // [s; c]
};

namespace {

struct Encoded {
  Mat h;     // T x ctx
  Mat keys;  // T x attn_dim
  BiGru::Cache cache;
};

}  // namespace

AttnModel::AttnModel(AttnConfig cfg, Vocabulary vocab, std::uint64_t seed)
    : cfg_(cfg), vocab_(std::move(vocab)) {
  if (vocab_.size() == 0 || vocab_.token(0) != "</s>")
    throw std::invalid_argument("AttnModel: vocabulary must start with </s>");
  if (cfg_.conv_width % 2 == 0) throw std::invalid_argument("AttnModel: conv_width must be odd");
  Rng rng(seed);
  const std::size_t ctx = cfg_.context_dim();
  BiGru::declare(params_, "enc", cfg_.input_dim, cfg_.enc_hidden, rng);
  params_.add("att.wk", xavier_uniform(cfg_.attn_dim, ctx, rng));
  params_.add("att.wq", xavier_uniform(cfg_.attn_dim, cfg_.dec_hidden, rng));
  params_.add("att.wl", xavier_uniform(cfg_.attn_dim, cfg_.conv_channels, rng));
  params_.add("att.conv.w", xavier_uniform(cfg_.conv_channels, cfg_.conv_width, rng));
  params_.add("att.conv.b", Mat(cfg_.conv_channels, 1));
  params_.add("att.b", Mat(cfg_.attn_dim, 1));
  params_.add("att.v", xavier_uniform(cfg_.attn_dim, 1, rng));
  GruCell::declare(params_, "dec", cfg_.embed_dim + ctx, cfg_.dec_hidden, rng);
  params_.add("dec.embed", xavier_uniform(vocab_.size(), cfg_.embed_dim, rng));
  params_.add("out.w", xavier_uniform(vocab_.size(), cfg_.decoder_out_dim(), rng));
  params_.add("out.b", Mat(vocab_.size(), 1));
  bind();
}

AttnModel::AttnModel(AttnConfig cfg, Vocabulary vocab, ParamStore params)
    : cfg_(cfg), vocab_(std::move(vocab)), params_(std::move(params)) {
  if (vocab_.size() == 0 || vocab_.token(0) != "</s>")
    throw std::invalid_argument("AttnModel: vocabulary must start with </s>");
  bind();
  if (embed_->value.rows() != vocab_.size() || out_w_->value.rows() != vocab_.size() ||
      out_b_->value.rows() != vocab_.size()) {
    throw DimensionError("AttnModel: embedding " + shape_string(embed_->value) + " / output " +
                         shape_string(out_w_->value) + " do not match vocabulary of " +
                         std::to_string(vocab_.size()));
  }
}

AttnModel::AttnModel(const AttnModel& o) : cfg_(o.cfg_), vocab_(o.vocab_), params_(o.params_) {
  bind();
}

AttnModel& AttnModel::operator=(const AttnModel& o) {
  if (this != &o) {
    cfg_ = o.cfg_;
    vocab_ = o.vocab_;
    params_ = o.params_;
    bind();
  }
  return *this;
}

AttnModel::AttnModel(AttnModel&& o) noexcept
    : cfg_(o.cfg_), vocab_(std::move(o.vocab_)), params_(std::move(o.params_)) {
  bind();
}

AttnModel& AttnModel::operator=(AttnModel&& o) noexcept {
  cfg_ = o.cfg_;
  vocab_ = std::move(o.vocab_);
  params_ = std::move(o.params_);
  bind();
  return *this;
}

void AttnModel::bind() {
  encoder_ = BiGru::bind(params_, "enc");
  decoder_ = GruCell::bind(params_, "dec");
  wk_ = &params_.at("att.wk");
  wq_ = &params_.at("att.wq");
  wl_ = &params_.at("att.wl");
  conv_w_ = &params_.at("att.conv.w");
  conv_b_ = &params_.at("att.conv.b");
  att_b_ = &params_.at("att.b");
  att_v_ = &params_.at("att.v");
  embed_ = &params_.at("dec.embed");
  out_w_ = &params_.at("out.w");
  out_b_ = &params_.at("out.b");
}

void AttnModel::check_target(std::span<const std::size_t> target) const {
  if (target.empty()) throw std::invalid_argument("attention target is empty (needs at least </s>)");
  if (target.back() != eos_id()) throw std::invalid_argument("attention target must end with </s>");
  for (std::size_t id : target)
    if (id >= vocab_.size()) throw DimensionError("attention target id outside vocabulary");
}

namespace {

// One decoder step. Shared by training, forced scoring and greedy decoding.
struct Stepper {
  const AttnConfig& cfg;
  const GruCell& decoder;
  const Mat& embed;
  const Mat& wq;
  const Mat& wl;
  const Mat& conv_w;
  const Mat& conv_b;
  const Mat& att_b;
  const Mat& att_v;
  const Mat& out_w;
  const Mat& out_b;

  template <class Cache>
  Vec run(const Mat& h, const Mat& keys, std::size_t prev, const Vec& s_prev, const Vec& c_prev,
          const Vec& a_prev, Cache& sc) const {
    const std::size_t steps = h.rows();
    sc.prev_token = prev;
    decoder.forward(concat(embedding_lookup(embed, prev), c_prev), s_prev, sc.gru);
    const Vec& s = sc.gru.h;
    const Vec q = affine(wq, att_b.flat(), s);
    sc.loc = conv1d(a_prev, conv_w, conv_b.flat());
    sc.u = Mat(steps, cfg.attn_dim);
    Vec energy(steps);
    for (std::size_t t = 0; t < steps; ++t) {
      auto ut = sc.u.row(t);
      const auto kt = keys.row(t);
      for (std::size_t a = 0; a < cfg.attn_dim; ++a) ut[a] = kt[a] + q[a];
      gemv(wl, sc.loc.row(t), ut);
      tanh_inplace(ut);
      energy[t] = dot(att_v.flat(), ut);
    }
    sc.alpha_prev = a_prev;
    sc.alpha.assign(steps, 0.0);
    softmax(energy, sc.alpha);
    Vec context(h.cols(), 0.0);
    for (std::size_t t = 0; t < steps; ++t) {
      const double w = sc.alpha[t];
      const auto ht = h.row(t);
      for (std::size_t j = 0; j < h.cols(); ++j) context[j] += w * ht[j];
    }
    sc.out_in = concat(s, context);
    return affine(out_w, out_b.flat(), sc.out_in);
  }
};

Vec initial_alignment(std::size_t steps) {
  Vec a(steps, 0.0);
  if (steps > 0) a[0] = 1.0;
  return a;
}

}  // namespace

double AttnModel::train_step(const Mat& features, std::span<const std::size_t> target) {
  check_target(target);
  if (features.rows() == 0) throw std::invalid_argument("attention: empty feature sequence");
  const AttnConfig& c = cfg_;
  const std::size_t ctx = c.context_dim();
  const std::size_t steps = features.rows();

  Encoded enc;
  enc.h = encoder_.forward(features, &enc.cache);
  const Vec zero_bias(c.attn_dim, 0.0);
  enc.keys = linear_rows(enc.h, wk_->value, zero_bias);

  const Stepper stepper{c,        decoder_,        embed_->value,  wq_->value,
                        wl_->value, conv_w_->value, conv_b_->value, att_b_->value,
                        att_v_->value, out_w_->value, out_b_->value};

  std::vector<StepCache> caches(target.size());
  std::vector<Vec> dlogits(target.size());
  double loss = 0.0;
  Vec s(c.dec_hidden, 0.0), ctxv(ctx, 0.0), align = initial_alignment(steps);
  std::size_t prev = eos_id();
  for (std::size_t i = 0; i < target.size(); ++i) {
    const Vec logits = stepper.run(enc.h, enc.keys, prev, s, ctxv, align, caches[i]);
    dlogits[i].assign(logits.size(), 0.0);
    loss += cross_entropy(logits, target[i], dlogits[i]);
    s = caches[i].gru.h;
    ctxv.assign(caches[i].out_in.begin() + static_cast<std::ptrdiff_t>(c.dec_hidden),
                caches[i].out_in.end());
    align = caches[i].alpha;
    prev = target[i];
  }

  // Backward through the decoder, newest step first.
  Mat dh(steps, ctx), dkeys(steps, c.attn_dim);
  Vec ds(c.dec_hidden, 0.0), dc(ctx, 0.0), dalign(steps, 0.0);
  for (std::size_t i = target.size(); i-- > 0;) {
    const StepCache& sc = caches[i];
    Vec dout(c.decoder_out_dim(), 0.0);
    outer_acc(out_w_->grad, dlogits[i], sc.out_in);
    add_bias(out_b_->grad.flat(), dlogits[i]);
    gemv_t(out_w_->value, dlogits[i], dout);
    for (std::size_t j = 0; j < c.dec_hidden; ++j) ds[j] += dout[j];
    for (std::size_t j = 0; j < ctx; ++j) dc[j] += dout[c.dec_hidden + j];

    Vec dalpha = dalign;
    for (std::size_t t = 0; t < steps; ++t) {
      const auto ht = enc.h.row(t);
      dalpha[t] += dot(dc, ht);
      auto dht = dh.row(t);
      for (std::size_t j = 0; j < ctx; ++j) dht[j] += sc.alpha[t] * dc[j];
    }
    Vec de(steps, 0.0);
    softmax_backward(sc.alpha, dalpha, de);

    Vec dq(c.attn_dim, 0.0), dpre(c.attn_dim);
    Mat dloc(steps, c.conv_channels);
    const auto v = att_v_->value.flat();
    auto dv = att_v_->grad.flat();
    for (std::size_t t = 0; t < steps; ++t) {
      const auto ut = sc.u.row(t);
      auto dkt = dkeys.row(t);
      for (std::size_t a = 0; a < c.attn_dim; ++a) {
        dv[a] += de[t] * ut[a];
        dpre[a] = de[t] * v[a] * (1.0 - ut[a] * ut[a]);
        dkt[a] += dpre[a];
        dq[a] += dpre[a];
      }
      outer_acc(wl_->grad, dpre, sc.loc.row(t));
      gemv_t(wl_->value, dpre, dloc.row(t));
    }
    add_bias(att_b_->grad.flat(), dq);
    outer_acc(wq_->grad, dq, sc.gru.h);
    gemv_t(wq_->value, dq, ds);

    Vec dalign_prev(steps, 0.0);
    conv1d_backward(sc.alpha_prev, conv_w_->value, dloc, dalign_prev, &conv_w_->grad,
                    conv_b_->grad.flat());

    Vec dx(c.embed_dim + ctx, 0.0), ds_prev(c.dec_hidden, 0.0);
    decoder_.backward(sc.gru, ds, dx, ds_prev);
    embedding_backward(embed_->grad, sc.prev_token,
                       std::span<const double>(dx).first(c.embed_dim));

    ds = std::move(ds_prev);
    dc.assign(dx.begin() + static_cast<std::ptrdiff_t>(c.embed_dim), dx.end());
    dalign = std::move(dalign_prev);
  }

  Vec dbias_unused(c.attn_dim, 0.0);
  linear_rows_backward(enc.h, wk_->value, dkeys, &dh, wk_->grad, dbias_unused);
  encoder_.backward(enc.cache, dh);
  return loss;
}

Mat AttnModel::forced_logits(const Mat& features, std::span<const std::size_t> target,
                             AttentionMap* attention) const {
  const AttnConfig& c = cfg_;
  const Mat h = encoder_.forward(features, nullptr);
  const Vec zero_bias(c.attn_dim, 0.0);
  const Mat keys = linear_rows(h, wk_->value, zero_bias);
  const Stepper stepper{c,        decoder_,        embed_->value,  wq_->value,
                        wl_->value, conv_w_->value, conv_b_->value, att_b_->value,
                        att_v_->value, out_w_->value, out_b_->value};
  Mat out(target.size(), vocab_.size());
  if (attention != nullptr) *attention = Mat(target.size(), features.rows());
  Vec s(c.dec_hidden, 0.0), ctxv(c.context_dim(), 0.0), align = initial_alignment(features.rows());
  std::size_t prev = eos_id();
  StepCache sc;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const Vec logits = stepper.run(h, keys, prev, s, ctxv, align, sc);
    std::copy(logits.begin(), logits.end(), out.row(i).begin());
    if (attention != nullptr) std::copy(sc.alpha.begin(), sc.alpha.end(), attention->row(i).begin());
    s = sc.gru.h;
    ctxv.assign(sc.out_in.begin() + static_cast<std::ptrdiff_t>(c.dec_hidden), sc.out_in.end());
    align = sc.alpha;
    prev = target[i];
  }
  return out;
}

AttnDecodeResult AttnModel::decode_greedy(const Mat& features, std::size_t max_len) const {
  if (max_len == 0) throw std::invalid_argument("decode_greedy: max_len must be >= 1");
  const AttnConfig& c = cfg_;
  AttnDecodeResult result;
  result.attention = Mat(0, features.rows());
  if (features.rows() == 0) return result;
  const Mat h = encoder_.forward(features, nullptr);
  const Vec zero_bias(c.attn_dim, 0.0);
  const Mat keys = linear_rows(h, wk_->value, zero_bias);
  const Stepper stepper{c,        decoder_,        embed_->value,  wq_->value,
                        wl_->value, conv_w_->value, conv_b_->value, att_b_->value,
                        att_v_->value, out_w_->value, out_b_->value};
  Vec s(c.dec_hidden, 0.0), ctxv(c.context_dim(), 0.0), align = initial_alignment(features.rows());
  std::size_t prev = eos_id();
  StepCache sc;
  Mat rows(0, features.rows());
  for (std::size_t i = 0; i < max_len; ++i) {
    const Vec logits = stepper.run(h, keys, prev, s, ctxv, align, sc);
    const std::size_t best = argmax(logits);
    if (best == eos_id()) {
      result.reached_eos = true;
      break;
    }
    result.ids.push_back(best);
    rows.append_rows(Mat(1, features.rows(), sc.alpha));
    s = sc.gru.h;
    ctxv.assign(sc.out_in.begin() + static_cast<std::ptrdiff_t>(c.dec_hidden), sc.out_in.end());
    align = sc.alpha;
    prev = best;
  }
  result.attention = std::move(rows);
  return result;
}

void AttnModel::save(std::ostream& out) const {
  out << "slu-checkpoint 1\nkind attention\n";
  out << "input_dim " << cfg_.input_dim << "\nenc_hidden " << cfg_.enc_hidden << "\ndec_hidden "
      << cfg_.dec_hidden << "\nembed_dim " << cfg_.embed_dim << "\nattn_dim " << cfg_.attn_dim
      << "\nconv_channels " << cfg_.conv_channels << "\nconv_width " << cfg_.conv_width << '\n';
  out << "vocab " << vocab_.size() << '\n';
  for (const auto& t : vocab_.tokens()) out << t << '\n';
  write_params(out, params_);
}

AttnModel AttnModel::load(std::istream& in) {
  std::string magic, kind;
  int version = 0;
  if (!(in >> magic >> version) || magic != "slu-checkpoint" || version != 1)
    throw std::runtime_error("checkpoint: bad header");
  std::string key;
  in >> key >> kind;
  if (key != "kind" || kind != "attention")
    throw std::runtime_error("checkpoint: expected an attention model, got " + kind);
  AttnConfig cfg;
  const std::pair<const char*, std::size_t*> fields[] = {
      {"input_dim", &cfg.input_dim},   {"enc_hidden", &cfg.enc_hidden},
      {"dec_hidden", &cfg.dec_hidden}, {"embed_dim", &cfg.embed_dim},
      {"attn_dim", &cfg.attn_dim},     {"conv_channels", &cfg.conv_channels},
      {"conv_width", &cfg.conv_width}};
  for (const auto& [name, slot] : fields) {
    if (!(in >> key >> *slot) || key != name)
      throw std::runtime_error(std::string("checkpoint: expected ") + name);
  }
  std::size_t n = 0;
  if (!(in >> key >> n) || key != "vocab") throw std::runtime_error("checkpoint: expected vocab");
  std::vector<std::string> toks(n);
  for (auto& t : toks) in >> t;
  if (!in) throw std::runtime_error("checkpoint: truncated vocabulary");
  return AttnModel(cfg, Vocabulary(std::move(toks)), read_params(in));
}

AttnModel extend_decoder_vocab(const AttnModel& model, std::span<const std::string> new_tokens,
                               std::uint64_t seed) {
  std::set<std::string> seen;
  for (const auto& t : new_tokens) {
    if (model.vocab().contains(t) || !seen.insert(t).second)
      throw std::invalid_argument("extend_decoder_vocab: duplicate token '" + t + "'");
  }
  if (new_tokens.empty()) return model;

  const AttnConfig& c = model.config();
  const std::size_t total = model.vocab().size() + new_tokens.size();
  Rng rng(seed);
  const auto tail = [&](std::size_t cols) {
    Mat full = xavier_uniform(total, cols, rng);
    Mat rows(new_tokens.size(), cols);
    for (std::size_t i = 0; i < new_tokens.size(); ++i) {
      auto src = full.row(model.vocab().size() + i);
      std::copy(src.begin(), src.end(), rows.row(i).begin());
    }
    return rows;
  };

  ParamStore params = model.params();
  Mat embed = params.at("dec.embed").value;
  embed.append_rows(tail(c.embed_dim));
  Mat out_w = params.at("out.w").value;
  out_w.append_rows(tail(c.decoder_out_dim()));
  Mat out_b = params.at("out.b").value;
  out_b.append_rows(Mat(new_tokens.size(), 1));
  params.reset("dec.embed", std::move(embed));
  params.reset("out.w", std::move(out_w));
  params.reset("out.b", std::move(out_b));
  params.zero_grad();

  std::vector<std::string> extra(new_tokens.begin(), new_tokens.end());
  return AttnModel(c, model.vocab().extended(extra), std::move(params));
}

double attention_monotonicity(const AttentionMap& map) {
  if (map.rows() == 0 || map.cols() == 0)
    throw std::invalid_argument("attention_monotonicity: empty attention map");
  if (map.rows() == 1) return 1.0;
  std::vector<double> centroid(map.rows(), 0.0);
  for (std::size_t i = 0; i < map.rows(); ++i)
    for (std::size_t t = 0; t < map.cols(); ++t) centroid[i] += static_cast<double>(t) * map(i, t);
  std::size_t ok = 0;
  for (std::size_t i = 1; i < map.rows(); ++i)
    if (centroid[i] >= centroid[i - 1]) ++ok;
  return static_cast<double>(ok) / static_cast<double>(map.rows() - 1);
}

}  // namespace slu
