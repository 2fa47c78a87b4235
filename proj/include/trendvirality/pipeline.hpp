// Copyright 2026 The trendvirality Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include "trendvirality/common.hpp"
#include "trendvirality/corpus.hpp"
#include "trendvirality/embed.hpp"
#include "trendvirality/eval.hpp"
#include "trendvirality/features.hpp"
#include "trendvirality/labeling.hpp"
#include "trendvirality/nn/checkpoint.hpp"
#include "trendvirality/nn/model.hpp"
#include "trendvirality/spikes.hpp"
#include "trendvirality/train.hpp"
#include "trendvirality/trends.hpp"

namespace tv {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct RunConfig {
  // paths (relative ones resolve against base_dir)
  std::string posts = "data/posts.ndjson";
  std::string pageviews = "data/pageviews.tsv";
  std::string work = "work";
  std::string trends_dir, matrices_dir, embed_store, splits_dir, checkpoints_dir, reports_dir;  // default under work

  SpikeConfig spikes;
  LabelConfig label;
  std::vector<double> sweep_betas = {0.0, 0.1, 0.3, 0.5, 1.0};
  TrainConfig train;
  std::string variant = "full";
  int base_year = 2021;
  std::string embed_mode = "fallback";
  std::string embed_source;  // external store for precomputed mode
  std::optional<double> threshold;  // nullopt: taken from the validation sweep
  size_t bootstrap = 1000;
  std::vector<std::string> bootstrap_metrics = {"auc_pr", "auc_roc", "f1"};
  uint64_t seed = 42;
  int jobs = 1;

  fs::path base_dir = ".";

  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  }
  fs::path work_dir() const { return resolve(work); }
  fs::path under_work(const std::string& override_path, const char* name) const {
    return override_path.empty() ? work_dir() / name : resolve(override_path);
  }
  fs::path corpus_dir() const { return work_dir() / "corpus"; }
  fs::path trend_dir() const { return under_work(trends_dir, "trends"); }
  fs::path matrix_dir() const { return under_work(matrices_dir, "matrices"); }
  fs::path store_path() const { return embed_store.empty() ? work_dir() / "embed" / "store.bin" : resolve(embed_store); }
  fs::path label_dir() const { return work_dir() / "labels"; }
  fs::path split_dir() const { return under_work(splits_dir, "split"); }
  fs::path feature_dir() const { return work_dir() / "features"; }
  fs::path checkpoint_dir() const { return under_work(checkpoints_dir, "checkpoints") / variant; }
  fs::path report_dir() const { return under_work(reports_dir, "reports") / variant; }
  fs::path manifest_dir() const { return work_dir() / "manifests"; }

  void set_seed(uint64_t s) {
    seed = s;
    train.seed = s;
  }

  Json to_json() const {
    Json j;
    j["paths"] = {{"posts", posts},           {"pageviews", pageviews},     {"work", work},
                  {"trends", trends_dir},     {"matrices", matrices_dir},   {"embed_store", embed_store},
                  {"splits", splits_dir},     {"checkpoints", checkpoints_dir}, {"reports", reports_dir}};
    j["spikes"] = spikes;
    j["label"] = label;
    j["label"]["sweep_betas"] = sweep_betas;
    j["train"] = train;
    j["model"] = {{"variant", variant}, {"base_year", base_year}};
    j["embed"] = {{"mode", embed_mode}, {"source", embed_source}};
    j["eval"] = {{"threshold", threshold ? Json(*threshold) : Json(nullptr)},
                 {"bootstrap", bootstrap},
                 {"metrics", bootstrap_metrics}};
    j["seed"] = seed;
    j["jobs"] = jobs;
    return j;
  }

  static RunConfig from_json(const Json& j, fs::path base = ".") {
    RunConfig c;
    c.base_dir = std::move(base);
    try {
      if (j.contains("paths")) {
        const auto& p = j.at("paths");
        c.posts = p.value("posts", c.posts);
        c.pageviews = p.value("pageviews", c.pageviews);
        c.work = p.value("work", c.work);
        c.trends_dir = p.value("trends", c.trends_dir);
        c.matrices_dir = p.value("matrices", c.matrices_dir);
        c.embed_store = p.value("embed_store", c.embed_store);
        c.splits_dir = p.value("splits", c.splits_dir);
        c.checkpoints_dir = p.value("checkpoints", c.checkpoints_dir);
        c.reports_dir = p.value("reports", c.reports_dir);
      }
      if (j.contains("spikes")) c.spikes = j.at("spikes").get<SpikeConfig>();
      if (j.contains("label")) {
        c.label = j.at("label").get<LabelConfig>();
        c.sweep_betas = j.at("label").value("sweep_betas", c.sweep_betas);
      }
      c.seed = j.value("seed", c.seed);
      c.train.seed = c.seed;
      if (j.contains("train")) {
        Json t = j.at("train");
        if (!t.contains("seed")) t["seed"] = c.seed;
        c.train = t.get<TrainConfig>();
      }
      if (j.contains("model")) {
        c.variant = j.at("model").value("variant", c.variant);
        c.base_year = j.at("model").value("base_year", c.base_year);
      }
      if (j.contains("embed")) {
        c.embed_mode = j.at("embed").value("mode", c.embed_mode);
        c.embed_source = j.at("embed").value("source", c.embed_source);
      }
      if (j.contains("eval")) {
        const auto& e = j.at("eval");
        if (e.contains("threshold") && !e.at("threshold").is_null()) c.threshold = e.at("threshold").get<double>();
        c.bootstrap = e.value("bootstrap", c.bootstrap);
        c.bootstrap_metrics = e.value("metrics", c.bootstrap_metrics);
      }
      c.jobs = j.value("jobs", c.jobs);
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
  }

  void validate() const {
    spikes.validate();
    label.validate();
    train.validate();
    (void)nn::VariantFlags::parse(variant);
    (void)parse_embed_mode(embed_mode);
    if (embed_mode == "precomputed" && embed_source.empty())
      throw Error("config: embed.source is required in precomputed mode");
    if (threshold && !(*threshold > 0.0 && *threshold < 1.0)) throw Error("config: eval.threshold must be in (0, 1)");
    for (const auto& m : bootstrap_metrics) (void)eval::parse_metric(m);
    if (jobs < 1) throw Error("config: jobs must be >= 1");
  }
};

// TV_<SECTION>_<KEY> replaces config[section][key]; TV_<KEY> replaces a top-level scalar.
// Values are parsed as JSON when they parse, otherwise taken as strings.
inline void apply_env_overrides(Json& j, const std::function<const char*(const std::string&)>& getenv_fn =
                                             [](const std::string& k) { return std::getenv(k.c_str()); }) {
  auto upper = [](std::string s) {
    for (auto& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    return s;
  };
  auto parse_value = [](const char* raw) {
    try {
      return Json::parse(raw);
    } catch (const nlohmann::json::exception&) {
      return Json(std::string(raw));
    }
  };
  for (auto& [section, value] : j.items()) {
    if (value.is_object()) {
      for (auto& [key, v] : value.items())
        if (const char* env = getenv_fn("TV_" + upper(section) + "_" + upper(key))) v = parse_value(env);
    } else if (const char* env = getenv_fn("TV_" + upper(section))) {
      value = parse_value(env);
    }
  }
}

// Defaults, then the file (if any), then environment overrides.
inline RunConfig load_run_config(const std::optional<fs::path>& path) {
  Json j = RunConfig{}.to_json();
  j["train"].erase("seed");  // follows the top-level seed unless the file sets it
  fs::path base = ".";
  if (path) {
    if (!fs::exists(*path)) throw Error("config file '" + path->string() + "' does not exist");
    Json file;
    try {
      file = Json::parse(read_file(*path));
    } catch (const nlohmann::json::exception& e) {
      throw Error("config file '" + path->string() + "': " + e.what());
    }
    j.merge_patch(file);
    base = path->parent_path().empty() ? fs::path(".") : path->parent_path();
  }
  apply_env_overrides(j);
  return RunConfig::from_json(j, base);
}

// ---------------------------------------------------------------------------
// In-memory building blocks shared by the stages and the end-to-end harness
// ---------------------------------------------------------------------------

struct TrendArtifacts {
  std::vector<TrendDay> days;  // filtered
  std::set<std::string> evergreen;
};

inline TrendArtifacts detect_trends(const std::vector<PageviewRecord>& records, const SpikeConfig& cfg) {
  TrendArtifacts out;
  const auto raw = detect_all(group_by_day(records), cfg);
  if (raw.empty()) return out;
  out.evergreen = detect_evergreen(raw, cfg);
  out.days = apply_filters(raw, out.evergreen, cfg.top_k);
  return out;
}

inline std::set<Date> post_days(const std::vector<Post>& posts) {
  std::set<Date> days;
  for (const auto& p : posts) days.insert(p.day());
  return days;
}

inline std::map<Date, TrendMatrix> build_matrices(const std::set<Date>& days, const std::vector<TrendDay>& trend_days,
                                                  const EmbeddingProvider& embedder) {
  std::map<Date, TrendDay> by_day;
  for (const auto& d : trend_days) by_day[d.day] = d;
  std::map<Date, TrendMatrix> out;
  for (Date d : days) out.emplace(d, build_matrix(d, build_window(d, by_day), embedder));
  return out;
}

inline std::vector<SplitItem> split_items(const std::vector<Post>& posts, const std::vector<LabeledPost>& labels) {
  if (posts.size() != labels.size()) throw Error("posts and labels differ in length");
  std::vector<SplitItem> items;
  items.reserve(posts.size());
  for (size_t i = 0; i < posts.size(); ++i) {
    if (posts[i].id != labels[i].post_id) throw Error("labels are not aligned with posts at row " + std::to_string(i));
    items.push_back({posts[i].id, posts[i].year(), labels[i].label});
  }
  return items;
}

// Model inputs for every post, with the storage the PostInput spans point into.
struct ModelData {
  std::vector<std::string> subreddits;  // training-split vocabulary; index = table row
  std::vector<std::vector<float>> titles, bodies;
  std::map<Date, nn::TrendKeys> keys;
  std::vector<nn::PostInput> inputs;  // aligned with posts
  std::vector<int> labels;
  std::vector<std::string> ids;
  std::vector<std::string> groups;
  std::vector<Split> assignment;

  ModelData() = default;
  ModelData(const ModelData&) = delete;
  ModelData& operator=(const ModelData&) = delete;

  Dataset subset(Split s) const {
    Dataset d;
    for (size_t i = 0; i < inputs.size(); ++i)
      if (assignment[i] == s) {
        d.inputs.push_back(inputs[i]);
        d.labels.push_back(labels[i]);
        d.ids.push_back(ids[i]);
      }
    return d;
  }
  std::vector<std::string> subset_groups(Split s) const {
    std::vector<std::string> g;
    for (size_t i = 0; i < inputs.size(); ++i)
      if (assignment[i] == s) g.push_back(groups[i]);
    return g;
  }
  int subreddit_index(const std::string& name) const {
    auto it = std::lower_bound(subreddits.begin(), subreddits.end(), name);
    return (it != subreddits.end() && *it == name) ? static_cast<int>(it - subreddits.begin())
                                                   : static_cast<int>(subreddits.size());
  }
};

inline std::vector<std::string> training_subreddits(const std::vector<Post>& posts, const std::vector<Split>& assignment) {
  std::set<std::string> s;
  for (size_t i = 0; i < posts.size(); ++i)
    if (assignment[i] == Split::train) s.insert(posts[i].subreddit);
  return {s.begin(), s.end()};
}

inline std::unique_ptr<ModelData> build_model_data(const std::vector<Post>& posts, const std::vector<int>& labels,
                                                   const std::vector<Split>& assignment,
                                                   const std::vector<StructVector>& features,
                                                   const std::map<Date, TrendMatrix>& matrices,
                                                   const EmbeddingProvider& embedder,
                                                   std::vector<std::string> subreddits, int base_year) {
  const size_t n = posts.size();
  if (labels.size() != n || assignment.size() != n || features.size() != n)
    throw Error("model data: posts, labels, split and features differ in length");
  auto d = std::make_unique<ModelData>();
  d->subreddits = std::move(subreddits);
  for (const auto& [day, m] : matrices) d->keys.emplace(day, nn::TrendKeys::from_matrix(m));
  d->titles.resize(n);
  d->bodies.resize(n);
  d->inputs.resize(n);
  for (size_t i = 0; i < n; ++i) {
    const Post& p = posts[i];
    d->titles[i] = embedder.embed_text(p.title);
    auto body = embedder.embed_body(p.body);
    nn::PostInput& in = d->inputs[i];
    in.body_empty = body.is_empty;
    if (!body.is_empty) d->bodies[i] = std::move(body.vector);
    in.title = d->titles[i];
    in.body = d->bodies[i];
    in.features = features[i];
    in.subreddit = d->subreddit_index(p.subreddit);
    in.year = p.year() - base_year;
    if (in.year < 0 || in.year >= nn::kYears)
      throw Error("post " + p.id + ": year " + std::to_string(p.year()) + " outside the year table (base year " +
                  std::to_string(base_year) + ", " + std::to_string(nn::kYears) + " rows)");
    auto k = d->keys.find(p.day());
    if (k == d->keys.end()) throw DependencyError("no trend matrix for " + p.day().str() + " (post " + p.id + ")");
    in.trends = &k->second;
  }
  d->labels = labels;
  d->assignment = assignment;
  for (const auto& p : posts) {
    d->ids.push_back(p.id);
    d->groups.push_back(p.subreddit);
  }
  return d;
}

struct VariantResult {
  std::string variant;
  FitResult fit;
  std::vector<double> val_probs, test_probs;
  double test_auc_pr = 0.0, test_auc_roc = 0.0;
};

// Trains one variant, reloads its best checkpoint and scores validation and test.
inline VariantResult train_and_score(const ModelData& data, nn::VariantFlags flags, const TrainConfig& tcfg,
                                     int base_year, const EpochCallback& on_epoch = {}) {
  nn::ModelConfig mc;
  mc.n_subreddits = static_cast<int>(data.subreddits.size());
  mc.flags = flags;
  mc.seed = tcfg.seed;
  mc.base_year = base_year;
  nn::ViralityNet net(mc);
  const Dataset train = data.subset(Split::train), val = data.subset(Split::val), test = data.subset(Split::test);
  VariantResult r;
  r.variant = flags.name();
  r.fit = fit(net, train, val, tcfg, on_epoch);
  nn::ViralityNet best = nn::decode_checkpoint(r.fit.best_checkpoint);
  r.val_probs = predict(best, val);
  r.test_probs = predict(best, test);
  r.test_auc_pr = eval::auc_pr(test.labels, r.test_probs);
  r.test_auc_roc = eval::auc_roc(test.labels, r.test_probs);
  return r;
}

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

inline std::string config_hash(const Json& section) { return hex64(fnv1a64(section.dump())); }

// Regular files under p (or p itself), sorted.
inline std::vector<fs::path> expand_files(const fs::path& p) {
  std::vector<fs::path> out;
  if (fs::is_directory(p)) {
    for (const auto& e : fs::recursive_directory_iterator(p))
      if (e.is_regular_file()) out.push_back(e.path());
    std::sort(out.begin(), out.end());
  } else if (fs::exists(p)) {
    out.push_back(p);
  }
  return out;
}

struct StageInput {
  fs::path path;
  std::string producer;  // stage that creates it, or "user"
};

struct StageReport {
  std::string stage;
  bool skipped = false;
  double seconds = 0.0;
  std::vector<std::string> notes;
};

class Workspace {
 public:
  Workspace(RunConfig cfg, bool force, std::ostream* log = &std::cerr) : cfg_(std::move(cfg)), force_(force), log_(log) {}

  const RunConfig& config() const { return cfg_; }

  // Runs `body` unless the stage's manifest shows the same config, the same
  // input bytes and intact outputs. `body` returns the output paths.
  StageReport run(const std::string& stage, const Json& config_section, const std::vector<StageInput>& inputs,
                  const std::function<std::vector<fs::path>(StageReport&)>& body) {
    StageReport rep;
    rep.stage = stage;
    for (const auto& in : inputs)
      if (!fs::exists(in.path))
        throw DependencyError("stage '" + stage + "' needs '" + in.path.string() + "'" +
                              (in.producer == "user" ? " (an input file)" : " (run stage '" + in.producer + "' first)"));
    const std::string chash = config_hash(config_section);
    const Json input_hashes = hash_paths(inputs_to_paths(inputs));
    const fs::path manifest = cfg_.manifest_dir() / (stage + ".json");
    if (!force_ && fs::exists(manifest)) {
      const Json m = Json::parse(read_file(manifest));
      if (m.at("config_hash") != chash)
        throw Error("stage '" + stage + "': configuration changed since its outputs were produced; rerun with --force");
      if (m.at("inputs") == input_hashes && outputs_intact(m.at("outputs"))) {
        rep.skipped = true;
        say(stage + ": up to date, skipped");
        return rep;
      }
    }
    const auto t0 = std::chrono::steady_clock::now();
    const auto outputs = body(rep);
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    nlohmann::ordered_json m;
    m["stage"] = stage;
    m["config_hash"] = chash;
    m["inputs"] = input_hashes;
    m["outputs"] = hash_paths(outputs);
    write_file(manifest, m.dump(1) + "\n");
    write_file(cfg_.manifest_dir() / (stage + ".timing.json"), Json{{"seconds", rep.seconds}}.dump() + "\n");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2fs", rep.seconds);
    say(stage + ": done in " + buf);
    for (const auto& n : rep.notes) say("  " + n);
    return rep;
  }

  void say(const std::string& s) const {
    if (log_) *log_ << s << '\n';
  }

 private:
  static std::vector<fs::path> inputs_to_paths(const std::vector<StageInput>& in) {
    std::vector<fs::path> out;
    for (const auto& i : in) out.push_back(i.path);
    return out;
  }

  std::string rel(const fs::path& p) const {
    return fs::path(p).lexically_normal().lexically_relative(cfg_.work_dir().lexically_normal()).generic_string();
  }

  nlohmann::ordered_json hash_paths(const std::vector<fs::path>& paths) const {
    std::map<std::string, std::string> sorted;
    for (const auto& p : paths)
      for (const auto& f : expand_files(p)) sorted[rel(f)] = hex64(hash_file(f));
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, v] : sorted) j[k] = v;
    return j;
  }

  bool outputs_intact(const Json& outputs) const {
    for (const auto& [relpath, h] : outputs.items()) {
      const fs::path p = cfg_.work_dir() / relpath;
      if (!fs::exists(p) || hex64(hash_file(p)) != h.get<std::string>()) return false;
    }
    return true;
  }

  RunConfig cfg_;
  bool force_;
  std::ostream* log_;
};

// ---------------------------------------------------------------------------
// Stage helpers (file formats)
// ---------------------------------------------------------------------------

inline std::vector<Post> read_posts_file(const fs::path& p) {
  if (!fs::exists(p)) throw DependencyError("posts file '" + p.string() + "' does not exist");
  std::ifstream in(p, std::ios::binary);
  auto r = parse_posts(in);
  if (r.rejected) throw Error(p.string() + ": " + std::to_string(r.rejected) + " invalid records in a canonical file");
  return std::move(r.items);
}

inline std::vector<PageviewRecord> read_pageviews_file(const fs::path& p) {
  if (!fs::exists(p)) throw DependencyError("pageview file '" + p.string() + "' does not exist");
  std::ifstream in(p, std::ios::binary);
  auto r = parse_pageviews(in);
  if (r.rejected) throw Error(p.string() + ": " + std::to_string(r.rejected) + " invalid records in a canonical file");
  return std::move(r.items);
}

inline std::vector<LabeledPost> read_labels_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return read_labels_csv(in);
}

inline std::vector<Split> read_assignment(const fs::path& p, const std::vector<Post>& posts) {
  std::ifstream in(p, std::ios::binary);
  const auto m = read_split_csv(in);
  std::vector<Split> out;
  out.reserve(posts.size());
  for (const auto& post : posts) {
    auto it = m.find(post.id);
    if (it == m.end()) throw Error("split file has no assignment for post " + post.id);
    out.push_back(it->second);
  }
  return out;
}

inline std::vector<StructVector> decode_features(std::string_view bytes, size_t n, const std::string& what) {
  if (bytes.size() != n * kNumStructFeatures * sizeof(float))
    throw Error(what + ": expected " + std::to_string(n) + " rows of " + std::to_string(kNumStructFeatures) + " floats");
  ByteReader r(bytes, what);
  std::vector<StructVector> out(n);
  for (auto& row : out)
    for (auto& v : row) v = r.get<float>();
  return out;
}

inline std::map<Date, TrendMatrix> read_matrices(const fs::path& dir, const std::set<Date>& days) {
  std::map<Date, TrendMatrix> out;
  for (Date d : days) out.emplace(d, read_matrix(dir, d));
  return out;
}

inline EmbeddingProvider configured_provider(const RunConfig& cfg) {
  if (parse_embed_mode(cfg.embed_mode) == EmbedMode::fallback) return EmbeddingProvider(EmbedMode::fallback);
  auto store = std::make_shared<EmbeddingStore>(EmbeddingStore::load_existing(cfg.resolve(cfg.embed_source)));
  return EmbeddingProvider(EmbedMode::precomputed, store);
}

inline EmbeddingProvider cached_provider(const RunConfig& cfg) {
  auto store = std::make_shared<EmbeddingStore>(EmbeddingStore::load_existing(cfg.store_path()));
  return EmbeddingProvider(EmbedMode::precomputed, store);
}

inline std::vector<std::string> texts_to_embed(const std::vector<Post>& posts) {
  std::vector<std::string> texts;
  for (const auto& p : posts) {
    texts.push_back(p.title);
    for (auto& c : EmbeddingProvider::body_chunk_texts(p.body)) texts.push_back(std::move(c));
  }
  return texts;
}

// Everything train and eval need, loaded from the workspace.
struct LoadedData {
  std::vector<Post> posts;
  std::unique_ptr<ModelData> data;
};

inline LoadedData load_model_data(const RunConfig& cfg, const std::vector<std::string>* vocab = nullptr) {
  LoadedData out;
  out.posts = read_posts_file(cfg.corpus_dir() / "posts.ndjson");
  const auto labeled = read_labels_file(cfg.label_dir() / "labels.csv");
  std::vector<int> labels;
  for (size_t i = 0; i < labeled.size(); ++i) {
    if (i >= out.posts.size() || labeled[i].post_id != out.posts[i].id)
      throw Error("labels.csv is not aligned with the ingested corpus");
    labels.push_back(labeled[i].label);
  }
  if (labels.size() != out.posts.size()) throw Error("labels.csv is not aligned with the ingested corpus");
  const auto assignment = read_assignment(cfg.split_dir() / "split.csv", out.posts);
  const auto features = decode_features(read_file(cfg.feature_dir() / "features.bin"), out.posts.size(),
                                        (cfg.feature_dir() / "features.bin").string());
  const auto matrices = read_matrices(cfg.matrix_dir(), post_days(out.posts));
  const auto provider = cached_provider(cfg);
  out.data = build_model_data(out.posts, labels, assignment, features, matrices, provider,
                              vocab ? *vocab : training_subreddits(out.posts, assignment), cfg.base_year);
  return out;
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& stage_order() {
  static const std::vector<std::string> s = {"ingest", "spikes", "trends",   "label", "embed",
                                             "split",  "features", "train", "eval"};
  return s;
}

inline StageReport stage_ingest(Workspace& ws) {
  const auto& c = ws.config();
  const fs::path posts_in = c.resolve(c.posts), views_in = c.resolve(c.pageviews);
  return ws.run("ingest", Json::object(), {{posts_in, "user"}, {views_in, "user"}}, [&](StageReport& rep) {
    std::ifstream pin(posts_in, std::ios::binary);
    if (!pin) throw Error("cannot read '" + posts_in.string() + "'");
    auto posts = parse_posts(pin);
    std::ifstream vin(views_in, std::ios::binary);
    if (!vin) throw Error("cannot read '" + views_in.string() + "'");
    auto views = parse_pageviews(vin);
    std::ostringstream po, vo;
    write_posts(po, posts.items);
    write_pageviews(vo, views.items);
    const fs::path dir = c.corpus_dir();
    write_file(dir / "posts.ndjson", po.str());
    write_file(dir / "pageviews.tsv", vo.str());
    nlohmann::ordered_json r;
    r["posts"] = posts.items.size();
    r["posts_rejected"] = posts.rejected;
    r["pageview_records"] = views.items.size();
    r["pageview_lines_rejected"] = views.rejected;
    Json errs = Json::array();
    for (size_t i = 0; i < std::min<size_t>(posts.errors.size(), 20); ++i)
      errs.push_back("posts line " + std::to_string(posts.errors[i].line) + ": " + posts.errors[i].message);
    for (size_t i = 0; i < std::min<size_t>(views.errors.size(), 20); ++i)
      errs.push_back("pageviews line " + std::to_string(views.errors[i].line) + ": " + views.errors[i].message);
    r["first_errors"] = errs;
    write_file(dir / "ingest_report.json", r.dump(1) + "\n");
    rep.notes.push_back(std::to_string(posts.items.size()) + " posts (" + std::to_string(posts.rejected) +
                        " rejected), " + std::to_string(views.items.size()) + " pageview records (" +
                        std::to_string(views.rejected) + " rejected)");
    return std::vector<fs::path>{dir / "posts.ndjson", dir / "pageviews.tsv", dir / "ingest_report.json"};
  });
}

inline StageReport stage_spikes(Workspace& ws) {
  const auto& c = ws.config();
  const fs::path in = c.corpus_dir() / "pageviews.tsv";
  return ws.run("spikes", Json(c.spikes), {{in, "ingest"}}, [&](StageReport& rep) {
    const auto t = detect_trends(read_pageviews_file(in), c.spikes);
    const fs::path dir = c.trend_dir();
    fs::remove_all(dir);
    write_trend_days(dir / "days", t.days);
    write_file(dir / "evergreen.json", Json(t.evergreen).dump(1) + "\n");
    rep.notes.push_back(std::to_string(t.days.size()) + " trend days, " + std::to_string(t.evergreen.size()) +
                        " evergreen terms removed");
    return std::vector<fs::path>{dir};
  });
}

inline StageReport stage_trends(Workspace& ws) {
  const auto& c = ws.config();
  const fs::path posts = c.corpus_dir() / "posts.ndjson";
  const Json section = {{"mode", c.embed_mode}, {"source", c.embed_source}, {"window_days", kWindowDays}};
  std::vector<StageInput> inputs = {{posts, "ingest"}, {c.trend_dir() / "days", "spikes"}};
  if (c.embed_mode == "precomputed") inputs.push_back({c.resolve(c.embed_source), "user"});
  return ws.run("trends", section, inputs, [&](StageReport& rep) {
    const auto days_map = read_trend_days(c.trend_dir() / "days");
    std::vector<TrendDay> days;
    for (auto& [d, td] : days_map) days.push_back(td);
    const auto mats = build_matrices(post_days(read_posts_file(posts)), days, configured_provider(c));
    const fs::path dir = c.matrix_dir();
    fs::remove_all(dir);
    fs::create_directories(dir);
    size_t empty = 0;
    for (const auto& [d, m] : mats) {
      write_matrix(dir, m);
      empty += m.all_empty();
    }
    rep.notes.push_back(std::to_string(mats.size()) + " matrices (" + std::to_string(empty) + " with no valid rows)");
    return std::vector<fs::path>{dir};
  });
}

inline StageReport stage_label(Workspace& ws) {
  const auto& c = ws.config();
  const fs::path posts = c.corpus_dir() / "posts.ndjson";
  Json section = c.label;
  section["sweep_betas"] = c.sweep_betas;
  return ws.run("label", section, {{posts, "ingest"}}, [&](StageReport& rep) {
    const auto corpus = read_posts_file(posts);
    const auto labels = label_corpus(corpus, c.label);
    std::ostringstream lo, so;
    write_labels_csv(lo, labels);
    write_sweep_csv(so, beta_sweep(corpus, c.sweep_betas, c.label));
    const fs::path dir = c.label_dir();
    write_file(dir / "labels.csv", lo.str());
    write_file(dir / "beta_sweep.csv", so.str());
    size_t pos = 0;
    for (const auto& l : labels) pos += l.label;
    rep.notes.push_back(std::to_string(pos) + " viral of " + std::to_string(labels.size()));
    return std::vector<fs::path>{dir / "labels.csv", dir / "beta_sweep.csv"};
  });
}

inline StageReport stage_embed(Workspace& ws) {
  const auto& c = ws.config();
  const fs::path posts = c.corpus_dir() / "posts.ndjson";
  const Json section = {{"mode", c.embed_mode}, {"source", c.embed_source}};
  std::vector<StageInput> inputs = {{posts, "ingest"}};
  if (c.embed_mode == "precomputed") inputs.push_back({c.resolve(c.embed_source), "user"});
  return ws.run("embed", section, inputs, [&](StageReport& rep) {
    const auto provider = configured_provider(c);
    EmbeddingStore store = parse_embed_mode(c.embed_mode) == EmbedMode::precomputed
                               ? EmbeddingStore::load_existing(c.resolve(c.embed_source))
                               : EmbeddingStore::load(c.store_path());
    const auto st = cache(texts_to_embed(read_posts_file(posts)), provider, store);
    store.save(c.store_path());
    rep.notes.push_back(std::to_string(st.requested) + " texts, " + std::to_string(st.added) + " embedded, " +
                        std::to_string(st.present) + " already cached");
    return std::vector<fs::path>{c.store_path()};
  });
}

inline StageReport stage_split(Workspace& ws) {
  const auto& c = ws.config();
  const fs::path posts = c.corpus_dir() / "posts.ndjson", labels = c.label_dir() / "labels.csv";
  const Json section = {{"fractions", c.train.split}, {"seed", c.seed}};
  return ws.run("split", section, {{posts, "ingest"}, {labels, "label"}}, [&](StageReport& rep) {
    const auto items = split_items(read_posts_file(posts), read_labels_file(labels));
    const auto m = split_stratified(items, c.train.split, c.seed);
    std::ostringstream so;
    write_split_csv(so, items, m);
    const fs::path dir = c.split_dir();
    write_file(dir / "split.csv", so.str());
    for (const auto& w : m.warnings) rep.notes.push_back("warning: " + w);
    rep.notes.push_back(std::to_string(m.indices(Split::train).size()) + " train / " +
                        std::to_string(m.indices(Split::val).size()) + " val / " +
                        std::to_string(m.indices(Split::test).size()) + " test");
    return std::vector<fs::path>{dir / "split.csv"};
  });
}

inline StageReport stage_features(Workspace& ws) {
  const auto& c = ws.config();
  const fs::path posts = c.corpus_dir() / "posts.ndjson", split = c.split_dir() / "split.csv";
  return ws.run("features", Json::object(), {{posts, "ingest"}, {split, "split"}}, [&](StageReport& rep) {
    const auto corpus = read_posts_file(posts);
    const auto assignment = read_assignment(split, corpus);
    std::vector<const Post*> training;
    for (size_t i = 0; i < corpus.size(); ++i)
      if (assignment[i] == Split::train) training.push_back(&corpus[i]);
    const NormStats norms = fit_norms(training);
    std::vector<StructVector> rows;
    rows.reserve(corpus.size());
    for (const auto& p : corpus) rows.push_back(extract(p, norms));
    const fs::path dir = c.feature_dir();
    write_file(dir / "features.bin", encode_features(rows));
    write_file(dir / "norms.json", Json(norms).dump(1) + "\n");
    rep.notes.push_back(std::to_string(rows.size()) + " feature rows; norms fitted on " +
                        std::to_string(training.size()) + " training posts");
    return std::vector<fs::path>{dir / "features.bin", dir / "norms.json"};
  });
}

inline std::vector<StageInput> model_inputs(const RunConfig& c) {
  return {{c.corpus_dir() / "posts.ndjson", "ingest"}, {c.label_dir() / "labels.csv", "label"},
          {c.split_dir() / "split.csv", "split"},      {c.feature_dir() / "features.bin", "features"},
          {c.store_path(), "embed"},                   {c.matrix_dir(), "trends"}};
}

inline StageReport stage_train(Workspace& ws) {
  const auto& c = ws.config();
  const Json section = {{"train", c.train}, {"variant", c.variant}, {"base_year", c.base_year}, {"seed", c.seed}};
  return ws.run("train-" + c.variant, section, model_inputs(c), [&](StageReport& rep) {
    auto loaded = load_model_data(c);
    const auto flags = nn::VariantFlags::parse(c.variant);
    TrainConfig tc = c.train;
    tc.seed = c.seed;
    nn::ModelConfig mc;
    mc.n_subreddits = static_cast<int>(loaded.data->subreddits.size());
    mc.flags = flags;
    mc.seed = c.seed;
    mc.base_year = c.base_year;
    nn::ViralityNet net(mc);
    auto res = fit(net, loaded.data->subset(Split::train), loaded.data->subset(Split::val), tc, [&](const EpochLog& e) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "  epoch %2d  train_loss %.5f  val_loss %.5f  val_auc_pr %.4f", e.epoch,
                    e.train_loss, e.val_loss, e.val_auc_pr);
      ws.say(buf);
    });
    const fs::path dir = c.checkpoint_dir();
    write_file(dir / "model.ckpt", res.best_checkpoint);
    std::ostringstream lo;
    write_training_log(lo, res.log);
    write_file(dir / "training_log.csv", lo.str());
    write_file(dir / "subreddits.json", Json(loaded.data->subreddits).dump(1) + "\n");
    rep.notes.push_back("best epoch " + std::to_string(res.best_epoch) + " of " + std::to_string(res.log.size()) +
                        ", val AUC-PR " + format_double(res.best_val_auc_pr));
    return std::vector<fs::path>{dir / "model.ckpt", dir / "training_log.csv", dir / "subreddits.json"};
  });
}

inline StageReport stage_eval(Workspace& ws) {
  const auto& c = ws.config();
  const Json section = {{"threshold", c.threshold ? Json(*c.threshold) : Json(nullptr)},
                        {"bootstrap", c.bootstrap},
                        {"metrics", c.bootstrap_metrics},
                        {"seed", c.seed},
                        {"variant", c.variant}};
  auto inputs = model_inputs(c);
  inputs.push_back({c.checkpoint_dir() / "model.ckpt", "train"});
  inputs.push_back({c.checkpoint_dir() / "subreddits.json", "train"});
  return ws.run("eval-" + c.variant, section, inputs, [&](StageReport& rep) {
    const auto vocab = Json::parse(read_file(c.checkpoint_dir() / "subreddits.json")).get<std::vector<std::string>>();
    auto loaded = load_model_data(c, &vocab);
    nn::ViralityNet net = nn::load_checkpoint(c.checkpoint_dir() / "model.ckpt");
    if (net.config().n_subreddits != static_cast<int>(vocab.size()))
      throw Error("checkpoint subreddit table does not match subreddits.json");
    const Dataset val = loaded.data->subset(Split::val), test = loaded.data->subset(Split::test);
    const auto val_probs = predict(net, val), test_probs = predict(net, test);
    const auto sweep = eval::threshold_sweep(val.labels, val_probs);
    eval::ReportOptions opt;
    opt.threshold = c.threshold.value_or(sweep.best_threshold);
    opt.bootstrap_resamples = c.bootstrap;
    opt.seed = c.seed;
    opt.bootstrap_metrics.clear();
    for (const auto& m : c.bootstrap_metrics) opt.bootstrap_metrics.push_back(eval::parse_metric(m));
    eval::ScoredSet set{test.labels, test_probs, loaded.data->subset_groups(Split::test)};
    const auto report = eval::report(set, opt, loaded.data->subreddits);
    auto j = eval::to_json(report);
    j["variant"] = c.variant;
    j["threshold_source"] = c.threshold ? "config" : "validation_sweep";
    j["val_best_f1"] = sweep.best_f1;

    const fs::path dir = c.report_dir();
    auto preds = [](const Dataset& d, const std::vector<double>& p) {
      std::vector<eval::Prediction> out;
      for (size_t i = 0; i < p.size(); ++i) out.push_back({d.ids[i], p[i]});
      std::ostringstream os;
      eval::write_predictions(os, out);
      return os.str();
    };
    std::ostringstream so;
    eval::write_sweep_csv(so, sweep);
    write_file(dir / "val_preds.csv", preds(val, val_probs));
    write_file(dir / "test_preds.csv", preds(test, test_probs));
    write_file(dir / "sweep.csv", so.str());
    write_file(dir / "report.json", j.dump(1) + "\n");
    char buf[160];
    std::snprintf(buf, sizeof buf, "test AUC-PR %.4f  AUC-ROC %.4f  F1@%.2f %.4f", report.auc_pr, report.auc_roc,
                  report.threshold, report.f1_at_threshold);
    rep.notes.push_back(buf);
    for (const auto& w : report.warnings) rep.notes.push_back("warning: " + w);
    return std::vector<fs::path>{dir / "val_preds.csv", dir / "test_preds.csv", dir / "sweep.csv", dir / "report.json"};
  });
}

inline StageReport run_stage(Workspace& ws, const std::string& name) {
  if (name == "ingest") return stage_ingest(ws);
  if (name == "spikes") return stage_spikes(ws);
  if (name == "trends") return stage_trends(ws);
  if (name == "label") return stage_label(ws);
  if (name == "embed") return stage_embed(ws);
  if (name == "split") return stage_split(ws);
  if (name == "features") return stage_features(ws);
  if (name == "train") return stage_train(ws);
  if (name == "eval") return stage_eval(ws);
  throw Error("unknown stage '" + name + "'");
}

// Runs the requested stages (all when empty) in pipeline order.
inline std::vector<StageReport> run_pipeline(const RunConfig& cfg, std::vector<std::string> stages, bool force,
                                             std::ostream* log = &std::cerr) {
  const auto& order = stage_order();
  if (stages.empty()) stages = order;
  for (const auto& s : stages)
    if (std::find(order.begin(), order.end(), s) == order.end()) throw Error("unknown stage '" + s + "'");
  std::sort(stages.begin(), stages.end(), [&](const std::string& a, const std::string& b) {
    return std::find(order.begin(), order.end(), a) < std::find(order.begin(), order.end(), b);
  });
  stages.erase(std::unique(stages.begin(), stages.end()), stages.end());
  Workspace ws(cfg, force, log);
  std::vector<StageReport> out;
  for (const auto& s : stages) out.push_back(run_stage(ws, s));
  return out;
}

}  // namespace tv
