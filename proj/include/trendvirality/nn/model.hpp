// Copyright 2026 The trendvirality Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trendvirality/common.hpp"
#include "trendvirality/features.hpp"
#include "trendvirality/nn/tensor.hpp"
#include "trendvirality/trends.hpp"

namespace tv::nn {

inline constexpr int kHidden = 256;
inline constexpr int kStructHidden = 64;
inline constexpr int kSubredditDim = 32;
inline constexpr int kYears = 3;
inline constexpr int kHeads = 4;
inline constexpr int kHeadDim = kHidden / kHeads;
inline constexpr int kFusionIn = 2 * kEmbedDim + kStructHidden + kSubredditDim;  // 1632
inline constexpr int kClassifierIn = 2 * kHidden;                                 // 512
inline constexpr int kClassifierHidden1 = 256;
inline constexpr int kClassifierHidden2 = 128;

static_assert(kFusionIn == 1632);
static_assert(kHeadDim == 64);

struct VariantFlags {
  bool use_year = true;
  bool use_trends = true;

  static VariantFlags parse(std::string_view name) {
    if (name == "full") return {true, true};
    if (name == "text") return {false, false};
    if (name == "text-year") return {true, false};
    if (name == "text-trends") return {false, true};
    throw Error("unknown variant '" + std::string(name) + "' (expected full|text|text-year|text-trends)");
  }
  std::string name() const {
    if (use_year && use_trends) return "full";
    if (use_year) return "text-year";
    if (use_trends) return "text-trends";
    return "text";
  }
  bool operator==(const VariantFlags&) const = default;
};

// Valid trend rows only, in matrix order. Padded rows never reach the model.
struct TrendKeys {
  RowMat rows;  // n_valid x 768

  static TrendKeys from_matrix(const TrendMatrix& m) {
    TrendKeys k;
    size_t n = 0;
    for (uint8_t v : m.mask) n += v;
    k.rows.resize(static_cast<Eigen::Index>(n), kEmbedDim);
    Eigen::Index r = 0;
    for (size_t i = 0; i < m.mask.size(); ++i) {
      if (!m.mask[i]) continue;
      const auto row = m.row(i);
      for (int j = 0; j < kEmbedDim; ++j) k.rows(r, j) = row[j];
      ++r;
    }
    return k;
  }
  bool empty() const { return rows.rows() == 0; }
};

struct PostInput {
  std::span<const float> title;
  std::span<const float> body;  // ignored when body_empty
  bool body_empty = true;
  StructVector features{};
  int subreddit = 0;
  int year = 0;
  const TrendKeys* trends = nullptr;  // null or empty: attention branch skipped
};

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct ModelParams {
  int n_subreddits = 0;

  Tensor fusion_w{"fusion.weight", {kHidden, kFusionIn}, Init::xavier_uniform, true};
  Tensor fusion_b{"fusion.bias", {kHidden}, Init::zeros};
  Tensor fusion_ln_g{"fusion_norm.weight", {kHidden}, Init::ones};
  Tensor fusion_ln_b{"fusion_norm.bias", {kHidden}, Init::zeros};
  Tensor year_table{"year_embedding", {kYears, kHidden}, Init::normal_002};
  Tensor subreddit_table;  // (n_subreddits + 1) x 32, last row is UNK
  Tensor body_pad{"body_pad", {kEmbedDim}, Init::normal_002};
  Tensor struct_w{"struct_proj.weight", {kStructHidden, kNumStructFeatures}, Init::xavier_uniform, true};
  Tensor struct_b{"struct_proj.bias", {kStructHidden}, Init::zeros};
  Tensor trend_proj{"trend_proj.weight", {kHidden, kEmbedDim}, Init::xavier_uniform, true};
  Tensor q_w{"attn.q.weight", {kHidden, kHidden}, Init::xavier_uniform, true};
  Tensor q_b{"attn.q.bias", {kHidden}, Init::zeros};
  Tensor k_w{"attn.k.weight", {kHidden, kHidden}, Init::xavier_uniform, true};
  Tensor k_b{"attn.k.bias", {kHidden}, Init::zeros};
  Tensor v_w{"attn.v.weight", {kHidden, kHidden}, Init::xavier_uniform, true};
  Tensor v_b{"attn.v.bias", {kHidden}, Init::zeros};
  Tensor o_w{"attn.out.weight", {kHidden, kHidden}, Init::xavier_uniform, true};
  Tensor o_b{"attn.out.bias", {kHidden}, Init::zeros};
  Tensor attn_ln_g{"attn_norm.weight", {kHidden}, Init::ones};
  Tensor attn_ln_b{"attn_norm.bias", {kHidden}, Init::zeros};
  Tensor c1_w{"classifier.0.weight", {kClassifierHidden1, kClassifierIn}, Init::xavier_uniform, true};
  Tensor c1_b{"classifier.0.bias", {kClassifierHidden1}, Init::zeros};
  Tensor c2_w{"classifier.1.weight", {kClassifierHidden2, kClassifierHidden1}, Init::xavier_uniform, true};
  Tensor c2_b{"classifier.1.bias", {kClassifierHidden2}, Init::zeros};
  Tensor c3_w{"classifier.2.weight", {1, kClassifierHidden2}, Init::xavier_uniform, true};
  Tensor c3_b{"classifier.2.bias", {1}, Init::zeros};

  explicit ModelParams(int n_sub)
      : n_subreddits(n_sub), subreddit_table("subreddit_embedding", {n_sub + 1, kSubredditDim}, Init::normal_002) {
    if (n_sub < 1) throw Error("model needs at least one subreddit");
    if (count() != expected_count(n_sub)) throw Error("parameter shape audit failed");
  }

  int unk_subreddit() const { return n_subreddits; }

  std::vector<Tensor*> all() {
    return {&fusion_w, &fusion_b, &fusion_ln_g, &fusion_ln_b, &year_table, &subreddit_table, &body_pad,
            &struct_w, &struct_b, &trend_proj,  &q_w,         &q_b,        &k_w,           &k_b,
            &v_w,      &v_b,      &o_w,         &o_b,         &attn_ln_g,  &attn_ln_b,      &c1_w,
            &c1_b,     &c2_w,     &c2_b,        &c3_w,        &c3_b};
  }
  std::vector<const Tensor*> all() const {
    auto* self = const_cast<ModelParams*>(this);
    auto v = self->all();
    return {v.begin(), v.end()};
  }

  // Closed form of the parameter count; depends only on the subreddit count.
  static constexpr int64_t expected_count(int n_sub) {
    return int64_t{kHidden} * kFusionIn + kHidden          // fusion
           + 2 * kHidden                                   // fusion LayerNorm
           + int64_t{kYears} * kHidden                     // year table
           + int64_t{n_sub + 1} * kSubredditDim            // subreddit table + UNK
           + kEmbedDim                                     // body pad
           + kStructHidden * kNumStructFeatures + kStructHidden  // struct projection
           + int64_t{kHidden} * kEmbedDim                  // trend projection
           + 4 * (int64_t{kHidden} * kHidden + kHidden)    // q, k, v, out
           + 2 * kHidden                                   // attention LayerNorm
           + int64_t{kClassifierHidden1} * kClassifierIn + kClassifierHidden1 +
           int64_t{kClassifierHidden2} * kClassifierHidden1 + kClassifierHidden2 + kClassifierHidden2 + 1;
  }

  int64_t count() const {
    int64_t n = 0;
    for (const Tensor* t : all()) n += t->numel();
    return n;
  }

  void initialize(uint64_t seed) {
    Rng rng(seed);
    for (Tensor* t : all()) t->initialize(rng);
  }

  void zero_grad() {
    for (Tensor* t : all()) t->grad.setZero();
  }
};

// ---------------------------------------------------------------------------
// PostEncoder: p = e_y + Drop(ReLU(LN(W_f [t; b; relu(W_s f + b_s); u] + b_f)))
// ---------------------------------------------------------------------------

class PostEncoder {
 public:
  Mat forward(const ModelParams& P, VariantFlags flags, std::span<const PostInput> batch, bool train, Rng& rng) {
    const auto B = static_cast<Eigen::Index>(batch.size());
    flags_ = flags;
    feats_.resize(kNumStructFeatures, B);
    x_.resize(kFusionIn, B);
    body_empty_.assign(batch.size(), false);
    sub_.assign(batch.size(), 0);
    year_.assign(batch.size(), 0);
    for (Eigen::Index b = 0; b < B; ++b) {
      const PostInput& in = batch[b];
      if (in.title.size() != static_cast<size_t>(kEmbedDim)) throw Error("title embedding must have 768 entries");
      if (in.subreddit < 0 || in.subreddit > P.unk_subreddit()) throw Error("subreddit index out of range");
      if (in.year < 0 || in.year >= kYears) throw Error("year index " + std::to_string(in.year) + " outside year table");
      for (int i = 0; i < kEmbedDim; ++i) x_(i, b) = in.title[i];
      body_empty_[b] = in.body_empty;
      if (in.body_empty) {
        x_.block(kEmbedDim, b, kEmbedDim, 1) = P.body_pad.value;
      } else {
        if (in.body.size() != static_cast<size_t>(kEmbedDim)) throw Error("body embedding must have 768 entries");
        for (int i = 0; i < kEmbedDim; ++i) x_(kEmbedDim + i, b) = in.body[i];
      }
      for (int i = 0; i < kNumStructFeatures; ++i) feats_(i, b) = in.features[i];
      sub_[b] = in.subreddit;
      year_[b] = in.year;
    }
    struct_pre_ = P.struct_w.value * feats_;
    struct_pre_.colwise() += P.struct_b.vec();
    x_.middleRows(2 * kEmbedDim, kStructHidden) = relu(struct_pre_);
    for (Eigen::Index b = 0; b < B; ++b)
      x_.block(2 * kEmbedDim + kStructHidden, b, kSubredditDim, 1) = P.subreddit_table.value.row(sub_[b]).transpose();

    Mat h = P.fusion_w.value * x_;
    h.colwise() += P.fusion_b.vec();
    layer_norm_forward(h, ln_);
    ln_out_ = (ln_.xhat.array().colwise() * P.fusion_ln_g.vec().array()).colwise() + P.fusion_ln_b.vec().array();
    Mat p = relu(ln_out_);
    drop_.resize(0, 0);
    if (train) {
      drop_.resize(kHidden, B);
      dropout_mask(rng, drop_.data(), drop_.size());
      p.array() *= drop_.array();
    }
    if (flags.use_year)
      for (Eigen::Index b = 0; b < B; ++b) p.col(b) += P.year_table.value.row(year_[b]).transpose();
    return p;
  }

  void backward(ModelParams& P, const Mat& dp) {
    const auto B = dp.cols();
    if (flags_.use_year)
      for (Eigen::Index b = 0; b < B; ++b) P.year_table.grad.row(year_[b]) += dp.col(b).transpose();
    Mat d = dp;
    if (drop_.size()) d.array() *= drop_.array();
    d = relu_backward(d, ln_out_);
    P.fusion_ln_g.gvec() += (d.array() * ln_.xhat.array()).rowwise().sum().matrix();
    P.fusion_ln_b.gvec() += d.rowwise().sum();
    const Mat dxhat = d.array().colwise() * P.fusion_ln_g.vec().array();
    const Mat dh = layer_norm_backward(dxhat, ln_);
    P.fusion_w.grad.noalias() += dh * x_.transpose();
    P.fusion_b.gvec() += dh.rowwise().sum();

    // Only the body, struct and subreddit slots of the fused input lead to parameters.
    const int lower = kFusionIn - kEmbedDim;
    const Mat dx = P.fusion_w.value.rightCols(lower).transpose() * dh;
    for (Eigen::Index b = 0; b < B; ++b)
      if (body_empty_[b]) P.body_pad.gvec() += dx.block(0, b, kEmbedDim, 1);
    const Mat dstruct = relu_backward(dx.middleRows(kEmbedDim, kStructHidden), struct_pre_);
    P.struct_w.grad.noalias() += dstruct * feats_.transpose();
    P.struct_b.gvec() += dstruct.rowwise().sum();
    for (Eigen::Index b = 0; b < B; ++b)
      P.subreddit_table.grad.row(sub_[b]) += dx.block(kEmbedDim + kStructHidden, b, kSubredditDim, 1).transpose();
  }

 private:
  VariantFlags flags_;
  Mat feats_, x_, struct_pre_, ln_out_, drop_;
  LayerNormCache ln_;
  std::vector<bool> body_empty_;
  std::vector<int> sub_, year_;
};

// ---------------------------------------------------------------------------
// CrossAttention: c = LN(p + MHA(p, W_T T, W_T T)), single-token query.
//
// Keys and values are never materialised per trend row. With K_j = W_k W_T t_j,
// a head's score is t_j . (W_T^T W_k,h^T q_h), and its value output is
// W_v,h W_T (sum_j a_j t_j) + (sum_j a_j) b_v,h. The key bias adds the same
// constant to every score of a head, which softmax cancels, so it is omitted.
// Columns of the per-head work matrices are laid out sample-major (a*4 + h).
// ---------------------------------------------------------------------------

class CrossAttention {
 public:
  Mat forward(const ModelParams& P, const Mat& p, std::span<const TrendKeys* const> keys, bool train, Rng& rng) {
    const auto B = p.cols();
    active_.clear();
    for (Eigen::Index b = 0; b < B; ++b)
      if (keys[b] && !keys[b]->empty()) active_.push_back(b);
    const auto A = static_cast<Eigen::Index>(active_.size());
    keys_.assign(keys.begin(), keys.end());
    train_ = train;

    Mat pre = p;
    if (A > 0) {
      p_act_.resize(kHidden, A);
      for (Eigen::Index a = 0; a < A; ++a) p_act_.col(a) = p.col(active_[a]);
      q_ = P.q_w.value * p_act_;
      q_.colwise() += P.q_b.vec();
      g_.resize(kHidden, kHeads * A);
      for (int h = 0; h < kHeads; ++h)
        head_cols(g_, h, A) = P.k_w.value.middleRows(h * kHeadDim, kHeadDim).transpose() * q_.middleRows(h * kHeadDim, kHeadDim);
      r_ = P.trend_proj.value.transpose() * g_;  // 768 x 4A

      const double scale = 1.0 / std::sqrt(static_cast<double>(kHeadDim));
      attn_.assign(A, Mat());
      drop_.assign(A, Mat());
      wsum_.resize(kHeads, A);
      m_.resize(kEmbedDim, kHeads * A);
      for (Eigen::Index a = 0; a < A; ++a) {
        const RowMat& e = keys[active_[a]]->rows;
        Mat s = (e * r_.middleCols(a * kHeads, kHeads)) * scale;  // n x 4
        for (int h = 0; h < kHeads; ++h) {
          const double mx = s.col(h).maxCoeff();
          s.col(h) = (s.col(h).array() - mx).exp();
          s.col(h) /= s.col(h).sum();
        }
        attn_[a] = s;
        Mat w = s;
        if (train) {
          drop_[a].resize(s.rows(), s.cols());
          dropout_mask(rng, drop_[a].data(), drop_[a].size());
          w.array() *= drop_[a].array();
        }
        wsum_.col(a) = w.colwise().sum().transpose();
        m_.middleCols(a * kHeads, kHeads).noalias() = e.transpose() * w;
      }
      y_ = P.trend_proj.value * m_;  // 256 x 4A
      o_.resize(kHidden, A);
      for (int h = 0; h < kHeads; ++h) {
        o_.middleRows(h * kHeadDim, kHeadDim) = P.v_w.value.middleRows(h * kHeadDim, kHeadDim) * head_cols(y_, h, A);
        o_.middleRows(h * kHeadDim, kHeadDim) +=
            P.v_b.vec().segment(h * kHeadDim, kHeadDim) * wsum_.row(h);
      }
      Mat mha = P.o_w.value * o_;
      mha.colwise() += P.o_b.vec();
      for (Eigen::Index a = 0; a < A; ++a) pre.col(active_[a]) += mha.col(a);
    }
    layer_norm_forward(pre, ln_);
    return (ln_.xhat.array().colwise() * P.attn_ln_g.vec().array()).colwise() + P.attn_ln_b.vec().array();
  }

  // Returns the gradient w.r.t. p.
  Mat backward(ModelParams& P, const Mat& dc) {
    P.attn_ln_g.gvec() += (dc.array() * ln_.xhat.array()).rowwise().sum().matrix();
    P.attn_ln_b.gvec() += dc.rowwise().sum();
    const Mat dxhat = dc.array().colwise() * P.attn_ln_g.vec().array();
    const Mat dpre = layer_norm_backward(dxhat, ln_);
    Mat dp = dpre;
    const auto A = static_cast<Eigen::Index>(active_.size());
    if (A == 0) return dp;

    Mat dmha(kHidden, A);
    for (Eigen::Index a = 0; a < A; ++a) dmha.col(a) = dpre.col(active_[a]);
    P.o_w.grad.noalias() += dmha * o_.transpose();
    P.o_b.gvec() += dmha.rowwise().sum();
    const Mat d_o = P.o_w.value.transpose() * dmha;

    Mat dy(kHidden, kHeads * A);
    for (int h = 0; h < kHeads; ++h) {
      const auto dho = d_o.middleRows(h * kHeadDim, kHeadDim);
      P.v_w.grad.middleRows(h * kHeadDim, kHeadDim).noalias() += dho * head_cols(y_, h, A).transpose();
      P.v_b.gvec().segment(h * kHeadDim, kHeadDim) += dho * wsum_.row(h).transpose();
      head_cols(dy, h, A) = P.v_w.value.middleRows(h * kHeadDim, kHeadDim).transpose() * dho;
    }
    P.trend_proj.grad.noalias() += dy * m_.transpose();
    const Mat dm = P.trend_proj.value.transpose() * dy;  // 768 x 4A

    const double scale = 1.0 / std::sqrt(static_cast<double>(kHeadDim));
    Mat dr(kEmbedDim, kHeads * A);
    for (Eigen::Index a = 0; a < A; ++a) {
      const RowMat& e = keys_[active_[a]]->rows;
      Mat dw = e * dm.middleCols(a * kHeads, kHeads);  // n x 4
      for (int h = 0; h < kHeads; ++h)
        dw.col(h).array() += P.v_b.vec().segment(h * kHeadDim, kHeadDim).dot(d_o.col(a).segment(h * kHeadDim, kHeadDim));
      if (train_) dw.array() *= drop_[a].array();
      const Mat& s = attn_[a];
      Mat ds(s.rows(), kHeads);
      for (int h = 0; h < kHeads; ++h) ds.col(h) = s.col(h).array() * (dw.col(h).array() - s.col(h).dot(dw.col(h)));
      dr.middleCols(a * kHeads, kHeads).noalias() = (e.transpose() * ds) * scale;
    }
    P.trend_proj.grad.noalias() += g_ * dr.transpose();
    const Mat dg = P.trend_proj.value * dr;  // 256 x 4A

    Mat dq(kHidden, A);
    for (int h = 0; h < kHeads; ++h) {
      const auto qh = q_.middleRows(h * kHeadDim, kHeadDim);
      P.k_w.grad.middleRows(h * kHeadDim, kHeadDim).noalias() += qh * head_cols(dg, h, A).transpose();
      dq.middleRows(h * kHeadDim, kHeadDim) = P.k_w.value.middleRows(h * kHeadDim, kHeadDim) * head_cols(dg, h, A);
    }
    P.q_w.grad.noalias() += dq * p_act_.transpose();
    P.q_b.gvec() += dq.rowwise().sum();
    const Mat dpa = P.q_w.value.transpose() * dq;
    for (Eigen::Index a = 0; a < A; ++a) dp.col(active_[a]) += dpa.col(a);
    return dp;
  }

  // Softmax weights (n_valid x 4) of the last forward pass for sample b; empty if skipped.
  Mat attention_weights(Eigen::Index b) const {
    for (size_t a = 0; a < active_.size(); ++a)
      if (active_[a] == b) return attn_[a];
    return {};
  }

 private:
  using Strided = Eigen::Map<Mat, 0, Eigen::OuterStride<>>;
  static Strided head_cols(Mat& m, int h, Eigen::Index A) {
    return Strided(m.data() + h * m.rows(), m.rows(), A, Eigen::OuterStride<>(kHeads * m.rows()));
  }
  static Eigen::Map<const Mat, 0, Eigen::OuterStride<>> head_cols(const Mat& m, int h, Eigen::Index A) {
    return {m.data() + h * m.rows(), m.rows(), A, Eigen::OuterStride<>(kHeads * m.rows())};
  }

  std::vector<Eigen::Index> active_;
  std::vector<const TrendKeys*> keys_;
  bool train_ = false;
  Mat p_act_, q_, g_, r_, m_, y_, o_, wsum_;
  std::vector<Mat> attn_, drop_;
  LayerNormCache ln_;
};

// ---------------------------------------------------------------------------
// Classifier: Linear(512,256) ReLU Drop Linear(256,128) ReLU Drop Linear(128,1)
// ---------------------------------------------------------------------------

class Classifier {
 public:
  Vec forward(const ModelParams& P, const Mat& p, const Mat& c, bool train, Rng& rng) {
    const auto B = p.cols();
    x_.resize(kClassifierIn, B);
    x_.topRows(kHidden) = p;
    x_.bottomRows(kHidden) = c;
    z1_ = P.c1_w.value * x_;
    z1_.colwise() += P.c1_b.vec();
    a1_ = relu(z1_);
    d1_.resize(0, 0);
    d2_.resize(0, 0);
    if (train) {
      d1_.resize(z1_.rows(), B);
      dropout_mask(rng, d1_.data(), d1_.size());
      a1_.array() *= d1_.array();
    }
    z2_ = P.c2_w.value * a1_;
    z2_.colwise() += P.c2_b.vec();
    a2_ = relu(z2_);
    if (train) {
      d2_.resize(z2_.rows(), B);
      dropout_mask(rng, d2_.data(), d2_.size());
      a2_.array() *= d2_.array();
    }
    Mat z = P.c3_w.value * a2_;
    z.array() += P.c3_b.value(0, 0);
    return z.row(0).transpose();
  }

  // Returns the gradient w.r.t. [p; c].
  Mat backward(ModelParams& P, const Vec& dz) {
    const Mat dzr = dz.transpose();
    P.c3_w.grad.noalias() += dzr * a2_.transpose();
    P.c3_b.grad(0, 0) += dz.sum();
    Mat d = P.c3_w.value.transpose() * dzr;
    if (d2_.size()) d.array() *= d2_.array();
    d = relu_backward(d, z2_);
    P.c2_w.grad.noalias() += d * a1_.transpose();
    P.c2_b.gvec() += d.rowwise().sum();
    d = P.c2_w.value.transpose() * d;
    if (d1_.size()) d.array() *= d1_.array();
    d = relu_backward(d, z1_);
    P.c1_w.grad.noalias() += d * x_.transpose();
    P.c1_b.gvec() += d.rowwise().sum();
    return P.c1_w.value.transpose() * d;
  }

 private:
  Mat x_, z1_, a1_, d1_, z2_, a2_, d2_;
};

// ---------------------------------------------------------------------------
// Full model
// ---------------------------------------------------------------------------

struct ModelConfig {
  int n_subreddits = 1;
  VariantFlags flags;
  uint64_t seed = 42;
  int base_year = 2021;
};

class ViralityNet {
 public:
  explicit ViralityNet(ModelConfig cfg) : cfg_(cfg), params_(cfg.n_subreddits) { params_.initialize(cfg.seed); }

  const ModelConfig& config() const { return cfg_; }
  VariantFlags flags() const { return cfg_.flags; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  // Logits for a batch. Dropout draws come from `dropout_seed` in a fixed order,
  // so equal seeds give equal masks.
  Vec forward(std::span<const PostInput> batch, bool train, uint64_t dropout_seed = 0) {
    if (batch.empty()) throw Error("forward on an empty batch");
    Rng rng(dropout_seed);
    p_ = encoder_.forward(params_, cfg_.flags, batch, train, rng);
    Mat c;
    if (cfg_.flags.use_trends) {
      std::vector<const TrendKeys*> keys;
      keys.reserve(batch.size());
      for (const auto& in : batch) keys.push_back(in.trends);
      c = attention_.forward(params_, p_, keys, train, rng);
    } else {
      c = Mat::Zero(kHidden, p_.cols());
    }
    c_ = c;
    has_tape_ = true;
    return classifier_.forward(params_, p_, c, train, rng);
  }

  // Accumulates d(loss)/d(param) into every parameter's grad given d(loss)/d(logit).
  void backward(const Vec& dlogits) {
    if (!has_tape_) throw Error("backward called without a preceding forward pass");
    if (dlogits.size() != p_.cols()) throw Error("backward: gradient size does not match the forward batch");
    has_tape_ = false;
    const Mat dx = classifier_.backward(params_, dlogits);
    Mat dp = dx.topRows(kHidden);
    if (cfg_.flags.use_trends) dp += attention_.backward(params_, dx.bottomRows(kHidden));
    encoder_.backward(params_, dp);
  }

  void zero_grad() { params_.zero_grad(); }

  // Intermediates of the last forward pass.
  const Mat& post_encodings() const { return p_; }
  const Mat& contexts() const { return c_; }
  Mat attention_weights(Eigen::Index b) const { return attention_.attention_weights(b); }

 private:
  ModelConfig cfg_;
  ModelParams params_;
  PostEncoder encoder_;
  CrossAttention attention_;
  Classifier classifier_;
  Mat p_, c_;
  bool has_tape_ = false;
};

// ---------------------------------------------------------------------------
// Single-sample entry points for the three blocks (dropout off unless train).
// ---------------------------------------------------------------------------

inline Vec encode_post(const PostInput& in, const ModelParams& params, VariantFlags flags, bool train = false,
                       uint64_t seed = 0) {
  Rng rng(seed);
  PostEncoder enc;
  return enc.forward(params, flags, std::span<const PostInput>(&in, 1), train, rng).col(0);
}

inline Vec cross_attend(const Vec& p, const TrendKeys* keys, const ModelParams& params, bool train = false,
                        uint64_t seed = 0) {
  Rng rng(seed);
  CrossAttention attn;
  const TrendKeys* k[1] = {keys};
  return attn.forward(params, Mat(p), k, train, rng).col(0);
}

inline Vec cross_attend(const Vec& p, const TrendMatrix& matrix, const ModelParams& params, bool train = false,
                        uint64_t seed = 0) {
  const TrendKeys keys = TrendKeys::from_matrix(matrix);
  return cross_attend(p, &keys, params, train, seed);
}

inline double classify(const Vec& p, const Vec& c, const ModelParams& params, bool train = false, uint64_t seed = 0) {
  Rng rng(seed);
  Classifier clf;
  return clf.forward(params, Mat(p), Mat(c), train, rng)(0);
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace tv::nn
