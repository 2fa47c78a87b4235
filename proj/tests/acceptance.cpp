// Copyright 2026 The trendvirality Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "model_fixture.hpp"
#include "trendvirality/pipeline.hpp"
#include "trendvirality/synth.hpp"

namespace {

using namespace tv;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

nn::ViralityNet make_net(const std::string& variant, int n_sub = 3) {
  nn::ModelConfig c;
  c.n_subreddits = n_sub;
  c.flags = nn::VariantFlags::parse(variant);
  c.seed = 42;
  return nn::ViralityNet(c);
}

const std::vector<std::string> kVariants = {"full", "text", "text-year", "text-trends"};

// 1. Analytic vs central-difference gradients, every tensor of every variant.
Outcome gradients() {
  double worst = 0;
  std::string where;
  size_t checked = 0;
  for (const auto& v : kVariants) {
    auto net = make_net(v);
    auto b = testing::make_batch(101, 8, 3, 5);
    const auto r = testing::gradient_check(net, *b, 8);
    checked += r.checked;
    if (r.worst > worst) {
      worst = r.worst;
      where = v + "/" + r.worst_param;
    }
  }
  return {worst < 1e-4, fmt("max rel err %.3g (%s) over %zu entries", worst, where.c_str(), checked)};
}

// 2. Padded rows never reach the logits; an empty day reduces to the layer norm.
Outcome mask_and_skip() {
  auto net = make_net("full");
  auto b = testing::make_batch(202, 8, 3, 5);
  const nn::Vec before = net.forward(b->inputs, false);
  Rng rng(7);
  bool padded_ok = true;
  for (int trial = 0; trial < 5; ++trial) {
    for (int i = 5; i < kTrendRows; ++i)
      for (auto& x : b->matrix.row(i)) x = static_cast<float>(1e3 * rng.normal());
    *b->keys = nn::TrendKeys::from_matrix(b->matrix);
    padded_ok = padded_ok && net.forward(b->inputs, false) == before;
  }

  auto e = testing::make_batch(203, 1, 3, 0, -1, true);
  const nn::Vec p = nn::encode_post(e->inputs[0], net.params(), {true, true});
  const nn::Vec c = nn::cross_attend(p, e->matrix, net.params());
  nn::LayerNormCache cache;
  const nn::Vec xhat = nn::layer_norm_forward(nn::Mat(p), cache).col(0);
  const nn::Vec want =
      (xhat.array() * net.params().attn_ln_g.vec().array() + net.params().attn_ln_b.vec().array()).matrix();
  const bool skip_ok = c == want;
  return {padded_ok && skip_ok, fmt("padded rows %s, empty-day skip path %s", padded_ok ? "inert" : "LEAK",
                                    skip_ok ? "exact" : "MISMATCH")};
}

// 3. Metric oracles.
double auc_roc_pairs(const std::vector<int>& y, const std::vector<double>& s) {
  double num = 0, pairs = 0;
  for (size_t i = 0; i < y.size(); ++i)
    for (size_t j = 0; j < y.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1;
        num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return num / pairs;
}

// Average precision from an explicit table over distinct thresholds.
double auc_pr_table(const std::vector<int>& y, const std::vector<double>& s) {
  std::vector<double> th(s.begin(), s.end());
  std::sort(th.rbegin(), th.rend());
  th.erase(std::unique(th.begin(), th.end()), th.end());
  const double P = static_cast<double>(std::count(y.begin(), y.end(), 1));
  double ap = 0, prev_r = 0;
  for (double t : th) {
    double tp = 0, fp = 0;
    for (size_t i = 0; i < y.size(); ++i)
      if (s[i] >= t) (y[i] ? tp : fp) += 1;
    ap += (tp / P - prev_r) * (tp / (tp + fp));
    prev_r = tp / P;
  }
  return ap;
}

void random_set(Rng& rng, size_t n, int levels, double base, std::vector<int>& y, std::vector<double>& s) {
  do {
    y.clear();
    s.clear();
    for (size_t i = 0; i < n; ++i) {
      y.push_back(rng.bernoulli(base) ? 1 : 0);
      s.push_back(static_cast<double>(rng.below(static_cast<uint64_t>(levels))) / levels);
    }
  } while (std::count(y.begin(), y.end(), 1) == 0 || std::count(y.begin(), y.end(), 0) == 0);
}

Outcome metric_oracles() {
  Rng rng(303);
  double roc_err = 0, pr_err = 0;
  std::vector<int> y;
  std::vector<double> s;
  for (int t = 0; t < 200; ++t) {
    random_set(rng, 50, t % 2 ? 6 : 1000, 0.3, y, s);
    roc_err = std::max(roc_err, std::abs(eval::auc_roc(y, s) - auc_roc_pairs(y, s)));
    pr_err = std::max(pr_err, std::abs(eval::auc_pr(y, s) - auc_pr_table(y, s)));
  }
  const double ties = eval::auc_roc({1, 0, 1, 0, 0, 1, 0}, std::vector<double>(7, 0.42));
  return {roc_err == 0 && pr_err <= 1e-15 && ties == 0.5,
          fmt("max |roc - pairs| %.3g, max |pr - table| %.3g, all-ties roc %.4f", roc_err, pr_err, ties)};
}

// 4. Labeling bound on random corpora.
std::vector<Post> random_corpus(Rng& rng, int n_sub, int lo, int hi, bool zero_comments = false) {
  std::vector<Post> posts;
  for (int s = 0; s < n_sub; ++s) {
    const int n = lo + static_cast<int>(rng.below(static_cast<uint64_t>(hi - lo + 1)));
    const double scale = std::pow(10.0, 1.0 + 2.5 * rng.uniform());
    for (int i = 0; i < n; ++i) {
      Post p;
      p.id = "r" + std::to_string(s) + "_" + std::to_string(i);
      p.subreddit = "sub" + std::to_string(s);
      p.created_utc = 1614556800 + static_cast<int64_t>(rng.below(86400 * 300));
      // Heavy ties from coarse values exercise the percentile and the strict comparison.
      p.score = rng.bernoulli(0.2) ? static_cast<int64_t>(rng.below(5)) * 50
                                   : static_cast<int64_t>(scale * std::exp(1.2 * rng.normal()));
      p.num_comments = zero_comments ? 0 : static_cast<int64_t>(rng.below(static_cast<uint64_t>(p.score / 2 + 2)));
      p.title = "t";
      posts.push_back(std::move(p));
    }
  }
  return posts;
}

Outcome labeling_bound() {
  Rng rng(404);
  const LabelConfig cfg;
  size_t violations = 0, positives = 0, posts_seen = 0;
  for (int t = 0; t < 100; ++t) {
    const auto posts = random_corpus(rng, 10, 200, 2000);
    const auto labels = label_corpus(posts, cfg);
    std::map<std::string, std::pair<size_t, size_t>> per;  // subreddit -> (n, positives)
    for (size_t i = 0; i < posts.size(); ++i) {
      auto& [n, pos] = per[posts[i].subreddit];
      ++n;
      if (labels[i].label) {
        ++pos;
        ++positives;
        if (posts[i].score < cfg.min_score || !(labels[i].engagement > labels[i].subreddit_threshold)) ++violations;
        if (labels[i].engagement != engagement(posts[i].score, posts[i].num_comments, cfg.beta)) ++violations;
      }
    }
    for (const auto& [sub, np] : per)
      if (np.second > np.first / 10) ++violations;
    posts_seen += posts.size();
  }
  return {violations == 0, fmt("%zu violations; %zu positives over %zu posts", violations, positives, posts_seen)};
}

// 5. Beta-sweep self-consistency.
Outcome sweep_consistency() {
  Rng rng(505);
  const LabelConfig cfg;
  const std::vector<double> betas = {0.0, 0.1, 0.3, 0.5, 1.0};
  bool base_ok = true, zero_ok = true;
  for (int t = 0; t < 10; ++t) {
    for (const auto& r : beta_sweep(random_corpus(rng, 5, 100, 600), betas, cfg))
      if (r.beta == cfg.beta) base_ok = base_ok && r.jaccard_vs_base == 1.0 && r.flip_pct == 0.0;
    for (const auto& r : beta_sweep(random_corpus(rng, 5, 100, 600, true), betas, cfg))
      zero_ok = zero_ok && r.jaccard_vs_base == 1.0 && r.flip_pct == 0.0;
  }
  return {base_ok && zero_ok, fmt("baseline row %s; zero-comment corpora %s", base_ok ? "Jaccard 1, 0% flips" : "BROKEN",
                                  zero_ok ? "all rows Jaccard 1" : "BROKEN")};
}

// 6. Spike detector against a naive reference.
Outcome spike_rule() {
  SpikeConfig cfg;
  cfg.blocklist.clear();
  cfg.noise_patterns.clear();
  cfg.top_k = std::numeric_limits<size_t>::max();
  Rng rng(606);
  size_t mismatches = 0, rule_violations = 0, emitted = 0;
  const Date day = Date::from_ymd(2022, 5, 1);
  for (int trial = 0; trial < 1000; ++trial) {
    DayCounts today, prior;
    const int n = 1 + static_cast<int>(rng.below(80));
    for (int i = 0; i < n; ++i) {
      const std::string term = "a" + std::to_string(rng.below(120));
      today[term] = rng.below(4) == 0 ? 2995 + rng.below(10) : rng.below(25000);
      if (rng.bernoulli(0.7)) prior[term] = rng.bernoulli(0.1) ? 0 : rng.below(13000);
    }
    std::vector<std::pair<std::string, double>> want;
    for (const auto& [term, v] : today) {
      auto it = prior.find(term);
      const double p = it != prior.end() && it->second > 0 ? static_cast<double>(it->second) : 1.0;
      if (v > 3000 && v / p >= 2.0) want.emplace_back(term, v / p * std::log(v - p + 1.0));
    }
    std::sort(want.begin(), want.end(),
              [](const auto& a, const auto& b) { return a.second != b.second ? a.second > b.second : a.first < b.first; });
    const auto got = detect_day(day, today, prior, cfg);
    bool same = got.terms.size() == want.size();
    for (size_t i = 0; same && i < want.size(); ++i)
      same = got.terms[i].term == want[i].first && got.terms[i].composite == want[i].second;
    mismatches += !same;
    for (const auto& t : got.terms) {
      ++emitted;
      auto it = prior.find(t.term);
      const double p = it != prior.end() && it->second > 0 ? static_cast<double>(it->second) : 1.0;
      const double v = static_cast<double>(today.at(t.term));
      if (!(v > 3000 && v / p >= 2.0)) ++rule_violations;
    }
  }
  return {mismatches == 0 && rule_violations == 0,
          fmt("%zu mismatching days of 1000, %zu rule violations among %zu terms", mismatches, rule_violations, emitted)};
}

// 7. Schedule shape and the clipping bound.
Outcome schedule() {
  TrainConfig c;
  const int64_t spe = 100;
  const int64_t warmup = c.warmup_epochs * spe, horizon = c.max_epochs * spe;
  const double ramp = (c.lr - c.lr * c.warmup_start_frac) / static_cast<double>(warmup);
  const double l0 = lr_at(0, spe, c), lw = lr_at(warmup - 1, spe, c);
  const double lmid = lr_at(warmup + (horizon - warmup) / 2, spe, c);  // the cosine span is even here
  const bool shape = std::abs(l0 - 1e-5) < 1e-18 && std::abs(lw - 1e-4) <= ramp + 1e-18 &&
                     std::abs(lr_at(warmup, spe, c) - 1e-4) < 1e-18 && std::abs(lmid - 5e-5) < 1e-12;

  // Clipping inside a real training run, with a bound low enough to fire.
  auto tr = testing::make_batch(707, 64, 3, 5, 3);
  auto va = testing::make_batch(708, 24, 3, 5);
  auto ds = [](const testing::RandomBatch& b) {
    Dataset d;
    d.inputs = b.inputs;
    d.labels = b.labels;
    for (size_t i = 0; i < b.inputs.size(); ++i) d.ids.push_back("p" + std::to_string(i));
    return d;
  };
  TrainConfig tc;
  tc.max_epochs = 2;
  tc.warmup_epochs = 1;
  tc.batch_size = 16;
  tc.lr = 1e-3;
  auto net = make_net("full");
  const auto r = fit(net, ds(*tr), ds(*va), tc);

  // And directly on oversized random gradients.
  Rng rng(709);
  double worst_after = 0;
  for (int t = 0; t < 100; ++t) {
    nn::Tensor a("a", {7, 5}, nn::Init::zeros), b("b", {11}, nn::Init::zeros);
    for (auto* x : {&a, &b})
      for (int64_t i = 0; i < x->numel(); ++i) x->grad.data()[i] = 50.0 * rng.normal();
    const auto cr = clip_grad_norm({&a, &b}, 1.0);
    if (cr.clipped) worst_after = std::max(worst_after, global_grad_norm({&a, &b}));
  }
  const bool clip_ok = worst_after <= 1.0 + 1e-6 && (r.clip_events == 0 || r.max_post_clip_norm <= 1.0 + 1e-6);
  return {shape && clip_ok,
          fmt("lr(0)=%.3g warmup-end=%.6g mid=%.15g; post-clip norm max %.9f (fit: %lld clips, max %.9f)", l0, lw, lmid,
              worst_after, static_cast<long long>(r.clip_events), r.max_post_clip_norm)};
}

// 8. Synthetic end-to-end ordering of the four variants.
Outcome synthetic_ordering(const synth::SynthConfig& sc, std::ostream& log) {
  const auto corpus = synth::generate(sc);
  const SpikeConfig spk;
  const LabelConfig lc;
  TrainConfig tc;
  tc.seed = sc.seed;
  const auto trends = detect_trends(corpus.pageviews, spk);
  const EmbeddingProvider provider;
  const auto mats = build_matrices(post_days(corpus.posts), trends.days, provider);
  const auto labels = label_corpus(corpus.posts, lc);
  const auto items = split_items(corpus.posts, labels);
  const auto split = split_stratified(items, tc.split, sc.seed);
  std::vector<const Post*> training;
  for (size_t i = 0; i < corpus.posts.size(); ++i)
    if (split.assignment[i] == Split::train) training.push_back(&corpus.posts[i]);
  const auto norms = fit_norms(training);
  std::vector<StructVector> feats;
  for (const auto& p : corpus.posts) feats.push_back(extract(p, norms));
  std::vector<int> y;
  size_t pos = 0;
  for (const auto& l : labels) {
    y.push_back(l.label);
    pos += l.label;
  }
  log << fmt("  synth: %zu posts, %.1f%% viral\n", corpus.posts.size(), 100.0 * pos / corpus.posts.size());
  const auto data = build_model_data(corpus.posts, y, split.assignment, feats, mats, provider,
                                     training_subreddits(corpus.posts, split.assignment), sc.first_year);
  std::map<std::string, double> ap;
  for (const auto& v : kVariants) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = train_and_score(*data, nn::VariantFlags::parse(v), tc, sc.first_year, {});
    ap[v] = r.test_auc_pr;
    log << fmt("  %-11s test AUC-PR %.4f  AUC-ROC %.4f  best epoch %d/%zu  %.0fs\n", v.c_str(), r.test_auc_pr,
               r.test_auc_roc, r.fit.best_epoch, r.fit.log.size(),
               std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    log.flush();
  }
  const double gap = ap["full"] - ap["text"];
  return {corpus.posts.size() >= 30000 && gap >= 0.02 && ap["full"] >= ap["text-trends"],
          fmt("full %.4f, text-year %.4f, text-trends %.4f, text %.4f; full - text = %+.4f", ap["full"], ap["text-year"],
              ap["text-trends"], ap["text"], gap)};
}

// 9. Two identical runs are byte-identical.
Outcome determinism(const fs::path& work) {
  const fs::path root = work / "determinism";
  fs::remove_all(root);
  synth::SynthConfig sc;
  sc.days = 24;
  sc.posts_per_day = 50;
  sc.n_subreddits = 4;
  synth::write_corpus(root / "data", synth::generate(sc));
  auto run = [&](const std::string& name) {
    RunConfig c;
    c.base_dir = root;
    c.posts = "data/posts.ndjson";
    c.pageviews = "data/pageviews.tsv";
    c.work = name;
    c.train.max_epochs = 3;
    c.train.warmup_epochs = 1;
    c.train.batch_size = 32;
    c.bootstrap = 100;
    std::ostringstream quiet;
    run_pipeline(c, {}, false, &quiet);
    return c;
  };
  const auto a = run("a"), b = run("b");
  std::vector<std::pair<fs::path, fs::path>> files = {
      {a.checkpoint_dir() / "model.ckpt", b.checkpoint_dir() / "model.ckpt"},
      {a.report_dir() / "report.json", b.report_dir() / "report.json"}};
  for (const auto& e : fs::directory_iterator(a.manifest_dir())) {
    const auto name = e.path().filename().string();
    if (name.find(".timing.") == std::string::npos) files.emplace_back(e.path(), b.manifest_dir() / name);
  }
  size_t differ = 0;
  for (const auto& [x, y] : files) differ += !fs::exists(y) || read_file(x) != read_file(y);
  return {differ == 0, fmt("%zu of %zu artifacts differ (checkpoint, report.json, manifests)", differ, files.size())};
}

// 10. Bootstrap brackets the point estimate; zero variance gives zero width.
Outcome bootstrap_sanity() {
  Rng rng(1010);
  int bracketed = 0;
  std::vector<int> y;
  std::vector<double> s;
  for (int t = 0; t < 100; ++t) {
    random_set(rng, 40 + rng.below(60), 1000, 0.35, y, s);
    const auto ci = eval::bootstrap_ci(y, s, eval::Metric::auc_pr, 1000, 42);
    const double point = eval::auc_pr(y, s);
    bracketed += ci.lo <= point && point <= ci.hi;
  }
  bool zero_ok = true;
  for (int t = 0; t < 10; ++t) {
    std::vector<int> zy;
    for (int i = 0; i < 30; ++i) zy.push_back(i % (2 + t % 3) == 0 ? 1 : 0);
    const std::vector<double> perfect(zy.begin(), zy.end());
    for (auto m : {eval::Metric::auc_pr, eval::Metric::auc_roc, eval::Metric::f1}) {
      const auto ci = eval::bootstrap_ci(zy, perfect, m, 1000, 42);
      zero_ok = zero_ok && ci.lo == ci.hi && ci.lo == 1.0;
    }
  }
  return {bracketed >= 99 && zero_ok,
          fmt("%d/100 sets bracketed; zero-variance intervals %s", bracketed, zero_ok ? "zero width" : "NONZERO")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work = "acceptance_work", synth_config;
  std::vector<int> only;
  app.add_option("--work", work, "Scratch directory");
  app.add_option("--only", only, "Criteria to run (default: all)");
  app.add_option("--synth-config", synth_config, "Synth settings for the end-to-end criterion");
  CLI11_PARSE(app, argc, argv);

  synth::SynthConfig sc;
  if (!synth_config.empty()) sc = nlohmann::json::parse(read_file(synth_config)).get<synth::SynthConfig>();
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient check, four variants", gradients},
      {"mask and skip path", mask_and_skip},
      {"metric oracles", metric_oracles},
      {"labeling bound", labeling_bound},
      {"beta-sweep self-consistency", sweep_consistency},
      {"spike rule conformance", spike_rule},
      {"schedule and clipping", schedule},
      {"synthetic variant ordering", [&] { return synthetic_ordering(sc, std::cout); }},
      {"run determinism", [&] { return determinism(work); }},
      {"bootstrap sanity", bootstrap_sanity},
  };
  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << criteria[i].first << ": " << o.detail
              << fmt("  [%.1fs]", secs) << std::endl;
  }
  return failed ? 1 : 0;
}
