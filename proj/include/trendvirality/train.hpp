// Copyright 2026 The trendvirality Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>
#include "trendvirality/common.hpp"
#include "trendvirality/eval.hpp"
#include "trendvirality/nn/checkpoint.hpp"
#include "trendvirality/nn/model.hpp"

namespace tv {

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 1e-5;
  int batch_size = 64;
  int max_epochs = 25;
  int warmup_epochs = 2;
  double warmup_start_frac = 0.10;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double clip_norm = 1.0;
  int patience = 5;
  uint64_t seed = 42;
  std::array<double, 3> split = {0.70, 0.15, 0.15};
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    if (!(lr > 0) || !(weight_decay >= 0) || batch_size < 1 || max_epochs < 1 || warmup_epochs < 0 ||
        !(warmup_start_frac > 0 && warmup_start_frac <= 1) || !(focal_alpha > 0 && focal_alpha < 1) ||
        !(focal_gamma >= 0) || !(clip_norm > 0) || patience < 1)
      throw Error("train config: rates must be positive and counts at least 1");
    if (warmup_epochs >= max_epochs) throw Error("train config: warmup_epochs must be below max_epochs");
    for (double f : split)
      if (!(f >= 0)) throw Error("train config: split fractions must be non-negative");
    if (std::abs(split[0] + split[1] + split[2] - 1.0) > 1e-9) throw Error("train config: split fractions must sum to 1");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"lr", c.lr},
       {"weight_decay", c.weight_decay},
       {"batch_size", c.batch_size},
       {"max_epochs", c.max_epochs},
       {"warmup_epochs", c.warmup_epochs},
       {"warmup_start_frac", c.warmup_start_frac},
       {"focal_alpha", c.focal_alpha},
       {"focal_gamma", c.focal_gamma},
       {"clip_norm", c.clip_norm},
       {"patience", c.patience},
       {"seed", c.seed},
       {"split", c.split}};
}
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
  c.warmup_start_frac = j.value("warmup_start_frac", c.warmup_start_frac);
  c.focal_alpha = j.value("focal_alpha", c.focal_alpha);
  c.focal_gamma = j.value("focal_gamma", c.focal_gamma);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  c.split = j.value("split", c.split);
  c.validate();
}

// ---------------------------------------------------------------------------
// Stratified split
// ---------------------------------------------------------------------------

enum class Split : uint8_t { train = 0, val = 1, test = 2 };

inline std::string_view split_name(Split s) {
  static constexpr std::string_view names[] = {"train", "val", "test"};
  return names[static_cast<int>(s)];
}

struct SplitItem {
  std::string post_id;
  int year = 0;
  int label = 0;
};

struct SplitManifest {
  std::vector<Split> assignment;  // aligned with the input items
  std::vector<std::string> warnings;

  std::vector<size_t> indices(Split s) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < assignment.size(); ++i)
      if (assignment[i] == s) out.push_back(i);
    return out;
  }
};

// Largest-remainder apportionment of n over the fractions; remainder ties go to the lower index.
inline std::array<size_t, 3> apportion(size_t n, const std::array<double, 3>& fractions) {
  std::array<size_t, 3> counts{};
  std::array<double, 3> rem{};
  size_t assigned = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact = static_cast<double>(n) * fractions[k];
    // Guard against 0.7 * 100 landing just below 70.
    counts[k] = static_cast<size_t>(std::floor(exact + 1e-9));
    rem[k] = exact - static_cast<double>(counts[k]);
    assigned += counts[k];
  }
  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b] + 1e-12; });
  for (size_t i = 0; assigned < n; ++i, ++assigned) counts[order[i % 3]]++;
  return counts;
}

inline SplitManifest split_stratified(const std::vector<SplitItem>& items, const std::array<double, 3>& fractions,
                                      uint64_t seed) {
  std::map<std::pair<int, int>, std::vector<size_t>> strata;
  for (size_t i = 0; i < items.size(); ++i) strata[{items[i].year, items[i].label}].push_back(i);
  SplitManifest m;
  m.assignment.assign(items.size(), Split::train);
  Rng rng(seed);
  for (auto& [key, members] : strata) {
    std::sort(members.begin(), members.end(),
              [&](size_t a, size_t b) { return std::tie(items[a].post_id, a) < std::tie(items[b].post_id, b); });
    if (members.size() < 3) {
      m.warnings.push_back("stratum (year=" + std::to_string(key.first) + ", label=" + std::to_string(key.second) +
                           ") has " + std::to_string(members.size()) + " posts; all assigned to train");
      continue;
    }
    rng.shuffle(members);
    const auto counts = apportion(members.size(), fractions);
    size_t pos = 0;
    for (int k = 0; k < 3; ++k)
      for (size_t c = 0; c < counts[k]; ++c) m.assignment[members[pos++]] = static_cast<Split>(k);
  }
  return m;
}

inline void write_split_csv(std::ostream& out, const std::vector<SplitItem>& items, const SplitManifest& m) {
  out << "post_id,split\n";
  for (size_t i = 0; i < items.size(); ++i) out << items[i].post_id << ',' << split_name(m.assignment[i]) << '\n';
}

inline std::map<std::string, Split> read_split_csv(std::istream& in) {
  std::map<std::string, Split> out;
  std::string line;
  if (!std::getline(in, line) || line != "post_id,split") throw Error("split.csv: missing or unexpected header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 2) throw Error("split.csv: malformed line '" + line + "'");
    Split s;
    if (f[1] == "train") s = Split::train;
    else if (f[1] == "val") s = Split::val;
    else if (f[1] == "test") s = Split::test;
    else throw Error("split.csv: unknown split '" + std::string(f[1]) + "'");
    out[std::string(f[0])] = s;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Focal loss
// ---------------------------------------------------------------------------

inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

struct LossResult {
  double loss = 0.0;     // mean over the batch
  nn::Vec grad;          // d(mean loss) / d(logit)
};

// Written in terms of softplus and sigmoid of +-z so no probability is ever rounded to 0 or 1 before a log.
inline LossResult focal_loss(const nn::Vec& logits, const std::vector<int>& labels, double alpha, double gamma) {
  const auto n = logits.size();
  if (static_cast<size_t>(n) != labels.size()) throw Error("focal_loss: logits and labels differ in length");
  if (n == 0) throw Error("focal_loss: empty batch");
  LossResult r;
  r.grad.resize(n);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = logits[i];
    const double sp = nn::sigmoid(z), sn = nn::sigmoid(-z);
    if (labels[i] == 1) {
      const double lg = softplus(-z);  // -ln p
      const double w = alpha * std::pow(sn, gamma);
      total += w * lg;
      r.grad[i] = -w * (gamma * sp * lg + sn);
    } else {
      const double lg = softplus(z);  // -ln(1 - p)
      const double w = (1.0 - alpha) * std::pow(sp, gamma);
      total += w * lg;
      r.grad[i] = w * (gamma * sn * lg + sp);
    }
  }
  r.loss = total / static_cast<double>(n);
  r.grad /= static_cast<double>(n);
  return r;
}

// ---------------------------------------------------------------------------
// Schedule, clipping, optimizer, early stopping
// ---------------------------------------------------------------------------

inline double lr_at(int64_t step, int64_t steps_per_epoch, const TrainConfig& cfg) {
  if (steps_per_epoch < 1) throw Error("lr_at: steps_per_epoch must be >= 1");
  const int64_t warmup = int64_t{cfg.warmup_epochs} * steps_per_epoch;
  const int64_t horizon = int64_t{cfg.max_epochs} * steps_per_epoch;
  if (step < warmup)
    return cfg.lr * (cfg.warmup_start_frac +
                     (1.0 - cfg.warmup_start_frac) * static_cast<double>(step) / static_cast<double>(warmup));
  const double tau =
      std::clamp(static_cast<double>(step - warmup) / static_cast<double>(horizon - warmup), 0.0, 1.0);
  return cfg.lr * 0.5 * (1.0 + std::cos(M_PI * tau));
}

inline double global_grad_norm(const std::vector<nn::Tensor*>& params) {
  double s = 0.0;
  for (const nn::Tensor* t : params) s += t->grad.squaredNorm();
  return std::sqrt(s);
}

struct ClipResult {
  double norm_before = 0.0;
  double norm_after = 0.0;
  bool clipped = false;
};

// Rescales the whole gradient vector when its L2 norm exceeds max_norm.
inline ClipResult clip_grad_norm(const std::vector<nn::Tensor*>& params, double max_norm) {
  ClipResult r;
  r.norm_before = global_grad_norm(params);
  r.norm_after = r.norm_before;
  if (r.norm_before > max_norm) {
    const double coef = max_norm / r.norm_before;
    for (nn::Tensor* t : params) t->grad *= coef;
    r.clipped = true;
    r.norm_after = global_grad_norm(params);
  }
  return r;
}

class AdamW {
 public:
  AdamW(double beta1, double beta2, double eps, double weight_decay)
      : b1_(beta1), b2_(beta2), eps_(eps), wd_(weight_decay) {}
  explicit AdamW(const TrainConfig& c) : AdamW(c.adam_beta1, c.adam_beta2, c.adam_eps, c.weight_decay) {}

  // Decay is decoupled from the adaptive step and applies only to decay-flagged tensors.
  void step(const std::vector<nn::Tensor*>& params, double lr) {
    if (m_.empty()) {
      for (const nn::Tensor* t : params) {
        m_.push_back(nn::RowMat::Zero(t->rows(), t->cols()));
        v_.push_back(nn::RowMat::Zero(t->rows(), t->cols()));
      }
    }
    if (m_.size() != params.size()) throw Error("AdamW: parameter list changed between steps");
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (size_t k = 0; k < params.size(); ++k) {
      nn::Tensor& p = *params[k];
      if (!p.requires_grad) continue;
      if (p.decay && wd_ > 0) p.value *= (1.0 - lr * wd_);
      m_[k] = b1_ * m_[k] + (1.0 - b1_) * p.grad;
      v_[k] = b2_ * v_[k] + (1.0 - b2_) * p.grad.array().square().matrix();
      p.value.array() -= lr * (m_[k].array() / bc1) / ((v_[k].array() / bc2).sqrt() + eps_);
    }
  }

  int64_t steps() const { return t_; }

 private:
  double b1_, b2_, eps_, wd_;
  int64_t t_ = 0;
  std::vector<nn::RowMat> m_, v_;
};

// Strict improvement resets the counter; `patience` epochs without one stop training.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}

  // Returns true when training should stop after this epoch (1-based).
  bool update(int epoch, double metric) {
    if (best_epoch_ == 0 || metric > best_) {
      best_ = metric;
      best_epoch_ = epoch;
      stale_ = 0;
      return false;
    }
    return ++stale_ >= patience_;
  }
  bool improved_at(int epoch) const { return best_epoch_ == epoch; }
  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }

 private:
  int patience_;
  double best_ = 0.0;
  int best_epoch_ = 0;
  int stale_ = 0;
};

// ---------------------------------------------------------------------------
// Fit
// ---------------------------------------------------------------------------

struct Dataset {
  std::vector<nn::PostInput> inputs;
  std::vector<int> labels;
  std::vector<std::string> ids;

  size_t size() const { return inputs.size(); }
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_auc_pr = 0.0;
  double lr_end = 0.0;
};

struct FitResult {
  std::string best_checkpoint;  // encoded checkpoint bytes
  int best_epoch = 0;
  double best_val_auc_pr = 0.0;
  std::vector<EpochLog> log;
  int64_t steps = 0;
  int64_t clip_events = 0;
  double max_post_clip_norm = 0.0;
};

inline std::vector<double> predict(nn::ViralityNet& net, const Dataset& data, size_t batch = 256) {
  std::vector<double> out;
  out.reserve(data.size());
  for (size_t s = 0; s < data.size(); s += batch) {
    const size_t e = std::min(data.size(), s + batch);
    const auto z = net.forward(std::span(data.inputs).subspan(s, e - s), false);
    for (Eigen::Index i = 0; i < z.size(); ++i) out.push_back(nn::sigmoid(z[i]));
  }
  return out;
}

inline double mean_loss(nn::ViralityNet& net, const Dataset& data, const TrainConfig& cfg, size_t batch = 256) {
  double total = 0.0;
  for (size_t s = 0; s < data.size(); s += batch) {
    const size_t e = std::min(data.size(), s + batch);
    const auto z = net.forward(std::span(data.inputs).subspan(s, e - s), false);
    std::vector<int> y(data.labels.begin() + static_cast<std::ptrdiff_t>(s), data.labels.begin() + static_cast<std::ptrdiff_t>(e));
    total += focal_loss(z, y, cfg.focal_alpha, cfg.focal_gamma).loss * static_cast<double>(e - s);
  }
  return total / static_cast<double>(data.size());
}

inline void write_training_log(std::ostream& out, const std::vector<EpochLog>& log) {
  char buf[160];
  out << "epoch,train_loss,val_loss,val_auc_pr,lr_end_of_epoch\n";
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g\n", e.epoch, e.train_loss, e.val_loss, e.val_auc_pr,
                  e.lr_end);
    out << buf;
  }
}

using EpochCallback = std::function<void(const EpochLog&)>;

inline FitResult fit(nn::ViralityNet& net, const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                     const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (train.size() == 0) throw Error("fit: empty training split");
  if (val.size() == 0 || std::count(val.labels.begin(), val.labels.end(), 1) == 0)
    throw Error("fit: validation split needs at least one positive");
  const auto bs = static_cast<size_t>(cfg.batch_size);
  const auto steps_per_epoch = static_cast<int64_t>((train.size() + bs - 1) / bs);
  auto params = net.params().all();
  AdamW opt(cfg);
  EarlyStopper stopper(cfg.patience);
  Rng shuffle_rng(cfg.seed);
  FitResult res;
  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::vector<nn::PostInput> batch;
  std::vector<int> labels;
  double lr = 0.0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (size_t s = 0; s < order.size(); s += bs) {
      const size_t e = std::min(order.size(), s + bs);
      batch.clear();
      labels.clear();
      for (size_t i = s; i < e; ++i) {
        batch.push_back(train.inputs[order[i]]);
        labels.push_back(train.labels[order[i]]);
      }
      const uint64_t dropout_seed = cfg.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(res.steps + 1));
      const auto z = net.forward(batch, true, dropout_seed);
      const auto loss = focal_loss(z, labels, cfg.focal_alpha, cfg.focal_gamma);
      if (!std::isfinite(loss.loss)) {
        std::string ids;
        for (size_t i = s; i < e; ++i) ids += (i > s ? "," : "") + train.ids[order[i]];
        throw Error("non-finite training loss at step " + std::to_string(res.steps) + " (epoch " +
                    std::to_string(epoch) + ", batch " + std::to_string(s / bs) + "; posts " + ids + ")");
      }
      net.zero_grad();
      net.backward(loss.grad);
      const auto clip = clip_grad_norm(params, cfg.clip_norm);
      if (clip.clipped) {
        ++res.clip_events;
        res.max_post_clip_norm = std::max(res.max_post_clip_norm, clip.norm_after);
      }
      lr = lr_at(res.steps, steps_per_epoch, cfg);
      opt.step(params, lr);
      ++res.steps;
      loss_sum += loss.loss * static_cast<double>(e - s);
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(train.size());
    log.val_loss = mean_loss(net, val, cfg);
    log.val_auc_pr = eval::auc_pr(val.labels, predict(net, val));
    log.lr_end = lr;
    res.log.push_back(log);
    if (on_epoch) on_epoch(log);

    const bool stop = stopper.update(epoch, log.val_auc_pr);
    if (stopper.improved_at(epoch)) {
      res.best_checkpoint = nn::encode_checkpoint(net);
      res.best_epoch = epoch;
      res.best_val_auc_pr = log.val_auc_pr;
    }
    if (stop) break;
  }
  return res;
}

}  // namespace tv
