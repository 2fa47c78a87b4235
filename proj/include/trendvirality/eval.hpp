// Copyright 2026 The trendvirality Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include "trendvirality/common.hpp"

namespace tv::eval {

struct ScoredSet {
  std::vector<int> labels;       // 0 or 1
  std::vector<double> scores;    // probabilities in [0, 1]
  std::vector<std::string> groups;  // empty, or one key per pair

  size_t size() const { return labels.size(); }
  size_t positives() const { return static_cast<size_t>(std::count(labels.begin(), labels.end(), 1)); }
  size_t negatives() const { return size() - positives(); }

  void validate() const {
    if (scores.size() != labels.size()) throw Error("scored set: label and score counts differ");
    if (!groups.empty() && groups.size() != labels.size()) throw Error("scored set: group count differs");
    for (int y : labels)
      if (y != 0 && y != 1) throw Error("scored set: labels must be 0 or 1");
  }
};

namespace detail {

// Indices sorted by score descending; ties keep index order so grouping is deterministic.
inline std::vector<size_t> order_desc(const std::vector<double>& s) {
  std::vector<size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return s[a] > s[b]; });
  return idx;
}

}  // namespace detail

// Mann-Whitney: P(s+ > s-) + 0.5 P(s+ = s-).
inline double auc_roc(const std::vector<int>& labels, const std::vector<double>& scores) {
  const size_t n = labels.size();
  size_t pos = 0;
  for (int y : labels) pos += (y == 1);
  const size_t neg = n - pos;
  if (pos == 0) throw Error("auc_roc: no positive examples");
  if (neg == 0) throw Error("auc_roc: no negative examples");
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  // Twice the U statistic stays an integer, so the sum is exact.
  uint64_t twice_u = 0, neg_below = 0;
  for (size_t i = 0; i < n;) {
    size_t j = i;
    uint64_t gp = 0, gn = 0;
    while (j < n && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] == 1 ? gp : gn)++;
      ++j;
    }
    twice_u += gp * (2 * neg_below + gn);
    neg_below += gn;
    i = j;
  }
  return static_cast<double>(twice_u) * 0.5 / (static_cast<double>(pos) * static_cast<double>(neg));
}

// Average precision: sum over descending distinct thresholds of (R_i - R_{i-1}) * P_i.
inline double auc_pr(const std::vector<int>& labels, const std::vector<double>& scores) {
  size_t pos = 0;
  for (int y : labels) pos += (y == 1);
  if (pos == 0) throw Error("auc_pr: no positive examples");
  const auto idx = detail::order_desc(scores);
  const double P = static_cast<double>(pos);
  double ap = 0.0;
  uint64_t tp = 0, fp = 0;
  double prev_recall = 0.0;
  for (size_t i = 0; i < idx.size();) {
    size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] == 1 ? tp : fp)++;
      ++j;
    }
    const double recall = static_cast<double>(tp) / P;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

inline double auc_roc(const ScoredSet& s) { return auc_roc(s.labels, s.scores); }
inline double auc_pr(const ScoredSet& s) { return auc_pr(s.labels, s.scores); }

struct Confusion {
  uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

  uint64_t n() const { return tp + fp + tn + fn; }
  double precision() const { return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp); }
  double recall() const { return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn); }
  double f1() const {
    if (tp == 0) return 0.0;
    return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
  }
  bool operator==(const Confusion&) const = default;
};

// A score at or above t predicts positive.
inline Confusion confusion(const std::vector<int>& labels, const std::vector<double>& scores, double t) {
  Confusion c;
  for (size_t i = 0; i < labels.size(); ++i) {
    const bool pred = scores[i] >= t;
    if (labels[i] == 1) (pred ? c.tp : c.fn)++;
    else (pred ? c.fp : c.tn)++;
  }
  return c;
}

inline double f1_at(const std::vector<int>& labels, const std::vector<double>& scores, double t) {
  return confusion(labels, scores, t).f1();
}

inline std::vector<double> default_grid() {
  std::vector<double> g;
  for (int i = 1; i <= 99; ++i) g.push_back(i / 100.0);
  return g;
}

struct SweepPoint {
  double threshold, precision, recall, f1;
};

struct SweepResult {
  double best_threshold = 0.0;
  double best_f1 = 0.0;
  std::vector<SweepPoint> curve;  // in grid order
};

// Argmax F1 over the grid; ties resolve to the smallest threshold.
inline SweepResult threshold_sweep(const std::vector<int>& labels, const std::vector<double>& scores,
                                   std::vector<double> grid = default_grid()) {
  if (grid.empty()) throw Error("threshold_sweep: empty grid");
  std::sort(grid.begin(), grid.end());
  SweepResult r;
  bool first = true;
  for (double t : grid) {
    const auto c = confusion(labels, scores, t);
    r.curve.push_back({t, c.precision(), c.recall(), c.f1()});
    if (first || c.f1() > r.best_f1) {
      r.best_threshold = t;
      r.best_f1 = c.f1();
      first = false;
    }
  }
  return r;
}

inline void write_sweep_csv(std::ostream& out, const SweepResult& r) {
  char buf[128];
  out << "threshold,precision,recall,f1\n";
  for (const auto& p : r.curve) {
    std::snprintf(buf, sizeof buf, "%.2f,%.6f,%.6f,%.6f\n", p.threshold, p.precision, p.recall, p.f1);
    out << buf;
  }
}

// ---------------------------------------------------------------------------
// Bootstrap
// ---------------------------------------------------------------------------

enum class Metric { auc_pr, auc_roc, f1 };

inline Metric parse_metric(std::string_view s) {
  if (s == "auc_pr") return Metric::auc_pr;
  if (s == "auc_roc") return Metric::auc_roc;
  if (s == "f1") return Metric::f1;
  throw Error("unknown metric '" + std::string(s) + "' (expected auc_pr|auc_roc|f1)");
}

inline std::string metric_name(Metric m) {
  switch (m) {
    case Metric::auc_pr: return "auc_pr";
    case Metric::auc_roc: return "auc_roc";
    case Metric::f1: return "f1";
  }
  return {};
}

// nullopt when the metric is undefined for this sample (missing class).
inline std::optional<double> metric_value(Metric m, const std::vector<int>& labels, const std::vector<double>& scores,
                                          double threshold) {
  size_t pos = 0;
  for (int y : labels) pos += (y == 1);
  switch (m) {
    case Metric::auc_pr:
      if (pos == 0 || pos == labels.size()) return std::nullopt;
      return auc_pr(labels, scores);
    case Metric::auc_roc:
      if (pos == 0 || pos == labels.size()) return std::nullopt;
      return auc_roc(labels, scores);
    case Metric::f1:
      if (pos == 0) return std::nullopt;
      return f1_at(labels, scores, threshold);
  }
  return std::nullopt;
}

struct Interval {
  double lo = 0.0, hi = 0.0;
  size_t redraws = 0;
  size_t resamples = 0;
};

inline constexpr size_t kMaxRedrawsPerReplicate = 1000;

// Percentile bootstrap. Replicate r draws from Rng(seed + r), so any partition
// of replicates across workers reproduces the serial result.
inline Interval bootstrap_ci(const std::vector<int>& labels, const std::vector<double>& scores, Metric metric,
                             size_t n_resamples, uint64_t seed, double threshold = 0.5) {
  if (n_resamples < 1) throw Error("bootstrap_ci: n_resamples must be >= 1");
  const size_t n = labels.size();
  if (n == 0) throw Error("bootstrap_ci: empty set");
  std::vector<double> values;
  values.reserve(n_resamples);
  std::vector<int> yl(n);
  std::vector<double> sl(n);
  Interval out;
  out.resamples = n_resamples;
  size_t undefined_first = 0;
  for (size_t r = 0; r < n_resamples; ++r) {
    Rng rng(seed + r);
    for (size_t attempt = 0;; ++attempt) {
      for (size_t i = 0; i < n; ++i) {
        const auto k = rng.below(n);
        yl[i] = labels[k];
        sl[i] = scores[k];
      }
      if (auto v = metric_value(metric, yl, sl, threshold)) {
        values.push_back(*v);
        break;
      }
      if (attempt == 0) ++undefined_first;
      if (2 * undefined_first > n_resamples)
        throw Error("bootstrap_ci: " + metric_name(metric) + " undefined in more than half of the replicates");
      if (attempt + 1 >= kMaxRedrawsPerReplicate)
        throw Error("bootstrap_ci: replicate " + std::to_string(r) + " never contained both classes");
      ++out.redraws;
    }
  }
  std::sort(values.begin(), values.end());
  const auto rank = [&](double p) {
    auto k = static_cast<size_t>(std::ceil(p * static_cast<double>(values.size()) - 1e-9));
    return values[std::clamp<size_t>(k, 1, values.size()) - 1];
  };
  out.lo = rank(0.025);
  out.hi = rank(0.975);
  return out;
}

// ---------------------------------------------------------------------------
// Calibration and report
// ---------------------------------------------------------------------------

struct CalibrationBin {
  double lo = 0.0, hi = 0.0;
  double mean_predicted = 0.0;
  double empirical_rate = 0.0;
  size_t count = 0;
};

// Equal-width bins over [0, 1]; the last bin is closed on the right.
inline std::vector<CalibrationBin> calibration_bins(const std::vector<int>& labels, const std::vector<double>& scores,
                                                    int n_bins = 10) {
  std::vector<CalibrationBin> bins(static_cast<size_t>(n_bins));
  std::vector<double> sum_p(bins.size(), 0.0), sum_y(bins.size(), 0.0);
  for (size_t i = 0; i < labels.size(); ++i) {
    auto b = static_cast<int>(std::floor(scores[i] * n_bins));
    b = std::clamp(b, 0, n_bins - 1);
    sum_p[b] += scores[i];
    sum_y[b] += labels[i];
    bins[b].count++;
  }
  for (int b = 0; b < n_bins; ++b) {
    bins[b].lo = static_cast<double>(b) / n_bins;
    bins[b].hi = static_cast<double>(b + 1) / n_bins;
    if (bins[b].count) {
      bins[b].mean_predicted = sum_p[b] / static_cast<double>(bins[b].count);
      bins[b].empirical_rate = sum_y[b] / static_cast<double>(bins[b].count);
    }
  }
  return bins;
}

struct GroupMetrics {
  std::string group;
  size_t n = 0, positives = 0;
  std::optional<double> auc_pr, auc_roc;
  double f1 = 0.0;
};

struct ReportOptions {
  double threshold = 0.5;
  size_t bootstrap_resamples = 0;  // 0 disables confidence intervals
  uint64_t seed = 42;
  std::vector<Metric> bootstrap_metrics = {Metric::auc_pr, Metric::auc_roc, Metric::f1};
};

struct EvalReport {
  size_t n = 0, positives = 0;
  double auc_pr = 0.0, auc_roc = 0.0;
  double threshold = 0.5;
  double f1_at_threshold = 0.0;
  Confusion at_threshold, at_default;
  std::vector<GroupMetrics> groups;
  std::vector<std::string> warnings;
  std::map<std::string, Interval> ci;
  std::vector<CalibrationBin> calibration;
};

inline EvalReport report(const ScoredSet& set, const ReportOptions& opt, const std::vector<std::string>& expected_groups = {}) {
  set.validate();
  if (!(opt.threshold > 0.0 && opt.threshold < 1.0)) throw Error("report: threshold must be in (0, 1)");
  EvalReport r;
  r.n = set.size();
  r.positives = set.positives();
  r.auc_pr = auc_pr(set);
  r.auc_roc = auc_roc(set);
  r.threshold = opt.threshold;
  r.at_threshold = confusion(set.labels, set.scores, opt.threshold);
  r.at_default = confusion(set.labels, set.scores, 0.5);
  r.f1_at_threshold = r.at_threshold.f1();
  r.calibration = calibration_bins(set.labels, set.scores);

  if (!set.groups.empty()) {
    std::map<std::string, std::vector<size_t>> members;
    for (size_t i = 0; i < set.size(); ++i) members[set.groups[i]].push_back(i);
    for (const auto& g : expected_groups)
      if (!members.count(g)) r.warnings.push_back("group '" + g + "' has no members; omitted");
    for (const auto& [g, idx] : members) {
      std::vector<int> y;
      std::vector<double> s;
      for (size_t i : idx) {
        y.push_back(set.labels[i]);
        s.push_back(set.scores[i]);
      }
      GroupMetrics gm;
      gm.group = g;
      gm.n = y.size();
      gm.positives = static_cast<size_t>(std::count(y.begin(), y.end(), 1));
      if (gm.positives > 0) gm.auc_pr = auc_pr(y, s);
      if (gm.positives > 0 && gm.positives < gm.n) gm.auc_roc = auc_roc(y, s);
      gm.f1 = f1_at(y, s, opt.threshold);
      r.groups.push_back(std::move(gm));
    }
  }
  if (opt.bootstrap_resamples > 0)
    for (Metric m : opt.bootstrap_metrics)
      r.ci[metric_name(m)] = bootstrap_ci(set.labels, set.scores, m, opt.bootstrap_resamples, opt.seed, opt.threshold);
  return r;
}

inline nlohmann::ordered_json confusion_json(const Confusion& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn},
          {"precision", c.precision()}, {"recall", c.recall()}, {"f1", c.f1()}};
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  using J = nlohmann::ordered_json;
  J j;
  j["n"] = r.n;
  j["positives"] = r.positives;
  j["auc_pr"] = r.auc_pr;
  j["auc_roc"] = r.auc_roc;
  j["threshold"] = r.threshold;
  j["f1_at_threshold"] = r.f1_at_threshold;
  j["confusion_at_threshold"] = confusion_json(r.at_threshold);
  j["confusion_at_0.5"] = confusion_json(r.at_default);
  J ci = J::object();
  for (const auto& [name, iv] : r.ci)
    ci[name] = {{"lo", iv.lo}, {"hi", iv.hi}, {"resamples", iv.resamples}, {"redraws", iv.redraws}};
  j["bootstrap_ci"] = ci;
  J groups = J::array();
  for (const auto& g : r.groups) {
    J gj;
    gj["group"] = g.group;
    gj["n"] = g.n;
    gj["positives"] = g.positives;
    gj["auc_pr"] = g.auc_pr ? J(*g.auc_pr) : J(nullptr);
    gj["auc_roc"] = g.auc_roc ? J(*g.auc_roc) : J(nullptr);
    gj["f1"] = g.f1;
    groups.push_back(gj);
  }
  j["groups"] = groups;
  J cal = J::array();
  for (const auto& b : r.calibration)
    cal.push_back({{"lo", b.lo}, {"hi", b.hi}, {"mean_predicted", b.mean_predicted},
                   {"empirical_rate", b.empirical_rate}, {"count", b.count}});
  j["calibration"] = cal;
  j["warnings"] = r.warnings;
  return j;
}

// ---------------------------------------------------------------------------
// preds.csv: post_id,prob
// ---------------------------------------------------------------------------

struct Prediction {
  std::string post_id;
  double prob = 0.0;
};

inline void write_predictions(std::ostream& out, const std::vector<Prediction>& preds) {
  char buf[64];
  out << "post_id,prob\n";
  for (const auto& p : preds) {
    std::snprintf(buf, sizeof buf, "%.17g", p.prob);
    out << p.post_id << ',' << buf << '\n';
  }
}

inline std::vector<Prediction> read_predictions(std::istream& in) {
  std::vector<Prediction> out;
  std::string line;
  if (!std::getline(in, line) || line != "post_id,prob") throw Error("predictions: missing or unexpected header");
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    auto p = f.size() == 2 ? parse_double(f[1]) : std::nullopt;
    if (!p || *p < 0.0 || *p > 1.0) throw Error("predictions: malformed line " + std::to_string(lineno));
    out.push_back({std::string(f[0]), *p});
  }
  return out;
}

}  // namespace tv::eval
