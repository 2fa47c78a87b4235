// Copyright 2026 The trendvirality Authors
// SPDX-License-Identifier: Apache-2.0

// tv: command-line front end for every pipeline stage.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "trendvirality/pipeline.hpp"
#include "trendvirality/synth.hpp"

namespace {

using namespace tv;

struct Globals {
  std::string config;
  std::optional<uint64_t> seed;
  int jobs = 0;
  bool force = false;
};

RunConfig make_config(const Globals& g) {
  RunConfig c = load_run_config(g.config.empty() ? std::nullopt : std::optional<fs::path>(g.config));
  if (g.seed) c.set_seed(*g.seed);
  if (g.jobs > 0) c.jobs = g.jobs;
  return c;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  return in;
}

void write_out(const std::string& path, const std::string& bytes) {
  if (path == "-") std::cout << bytes;
  else write_file(path, bytes);
}

std::vector<double> parse_doubles(const std::string& csv) {
  std::vector<double> out;
  for (auto f : split(csv, ',')) {
    auto v = parse_double(trim_view(f));
    if (!v) throw Error("not a number: '" + std::string(f) + "'");
    out.push_back(*v);
  }
  return out;
}

eval::ScoredSet scored_set(const std::string& preds_path, const std::string& labels_path, bool with_groups) {
  auto pin = open_in(preds_path);
  const auto preds = eval::read_predictions(pin);
  auto lin = open_in(labels_path);
  const auto labels = read_labels_csv(lin);
  std::map<std::string, const LabeledPost*> by_id;
  for (const auto& l : labels) by_id[l.post_id] = &l;
  eval::ScoredSet s;
  for (const auto& p : preds) {
    auto it = by_id.find(p.post_id);
    if (it == by_id.end()) throw Error("no label for predicted post " + p.post_id);
    s.labels.push_back(it->second->label);
    s.scores.push_back(p.prob);
    if (with_groups) s.groups.push_back(it->second->subreddit);
  }
  return s;
}

void print_reports(const std::vector<StageReport>& reports) {
  size_t skipped = 0;
  for (const auto& r : reports) skipped += r.skipped;
  std::cerr << reports.size() << " stage(s), " << skipped << " skipped as up to date\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trend-aware virality prediction pipeline"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand
  Globals g;
  app.add_option("--config", g.config, "Run configuration (JSON)");
  app.add_option("--seed", g.seed, "Seed for every seeded stage (overrides config)");
  app.add_option("--jobs", g.jobs, "Worker cap for parallel stages");
  app.add_flag("--force", g.force, "Rerun stages even when manifests say they are current");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Parse and canonicalise raw posts or pageviews");
  ingest->require_subcommand(1);
  std::string in_path, out_path;
  auto* ingest_posts = ingest->add_subcommand("posts", "Post NDJSON -> canonical NDJSON");
  ingest_posts->add_option("--in", in_path)->required();
  ingest_posts->add_option("--out", out_path)->required();
  auto* ingest_views = ingest->add_subcommand("pageviews", "Pageview TSV -> aggregated TSV");
  ingest_views->add_option("--in", in_path)->required();
  ingest_views->add_option("--out", out_path)->required();

  // spikes
  auto* spikes = app.add_subcommand("spikes", "Detect daily trending articles");
  spikes->require_subcommand(1);
  auto* spikes_detect = spikes->add_subcommand("detect", "Pageview TSV -> per-day trend JSON files");
  bool no_filter = false;
  spikes_detect->add_option("--in", in_path)->required();
  spikes_detect->add_option("--out", out_path, "Output directory")->required();
  spikes_detect->add_flag("--no-evergreen-filter", no_filter, "Keep evergreen terms");

  // trends
  auto* trends = app.add_subcommand("trends", "Build per-day trend matrices");
  trends->require_subcommand(1);
  auto* trends_build = trends->add_subcommand("build", "Trend days + posts -> matrices");
  std::string trends_in, posts_in;
  trends_build->add_option("--trends", trends_in, "Directory of per-day trend JSON")->required();
  trends_build->add_option("--posts", posts_in, "Posts whose dates need matrices")->required();
  trends_build->add_option("--out", out_path, "Matrix directory")->required();

  // embed
  auto* embed = app.add_subcommand("embed", "Embedding cache");
  embed->require_subcommand(1);
  auto* embed_cache = embed->add_subcommand("cache", "Embed every post title and body chunk into a store");
  std::string store_path;
  embed_cache->add_option("--posts", posts_in)->required();
  embed_cache->add_option("--store", store_path)->required();

  // label
  auto* label = app.add_subcommand("label", "Per-subreddit virality labels");
  label->add_option("--posts", posts_in);
  label->add_option("--out", out_path);
  auto* label_sweep = label->add_subcommand("sweep", "Comment-weight sensitivity table");
  std::string betas = "0,0.1,0.3,0.5,1.0";
  label_sweep->add_option("--posts", posts_in)->required();
  label_sweep->add_option("--betas", betas);
  label_sweep->add_option("--out", out_path)->required();

  // split
  auto* split_cmd = app.add_subcommand("split", "Stratified train/val/test split");
  std::string labels_in;
  split_cmd->add_option("--posts", posts_in)->required();
  split_cmd->add_option("--labels", labels_in)->required();
  split_cmd->add_option("--out", out_path)->required();

  // features
  auto* features = app.add_subcommand("features", "Structured feature vectors");
  std::string split_in;
  features->add_option("--posts", posts_in)->required();
  features->add_option("--split", split_in, "split.csv; norms are fitted on its train rows")->required();
  features->add_option("--out", out_path, "Output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Train one model variant");
  std::string variant, data_dir, matrices_dir;
  train->add_option("--variant", variant)->check(CLI::IsMember({"full", "text", "text-year", "text-trends"}));
  train->add_option("--data", data_dir, "Workspace directory holding the upstream stage outputs");
  train->add_option("--matrices", matrices_dir);
  train->add_option("--out", out_path, "Checkpoint root (a subdirectory per variant)");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluation");
  ev->require_subcommand(1);
  std::string preds_in, groups;
  double threshold = 0.5;
  size_t n_boot = 1000;
  std::string metrics = "auc_pr,auc_roc,f1";
  auto* ev_report = ev->add_subcommand("report", "Metrics, confusion, groups, calibration");
  ev_report->add_option("--preds", preds_in)->required();
  ev_report->add_option("--labels", labels_in)->required();
  ev_report->add_option("--threshold", threshold)->check(CLI::Range(0.0, 1.0));
  ev_report->add_option("--groups", groups, "Only 'subreddit' is supported");
  ev_report->add_option("--bootstrap", n_boot, "Resamples for confidence intervals (0 disables)");
  ev_report->add_option("--out", out_path)->required();
  auto* ev_sweep = ev->add_subcommand("sweep", "Threshold sweep on validation predictions");
  ev_sweep->add_option("--preds", preds_in)->required();
  ev_sweep->add_option("--labels", labels_in)->required();
  ev_sweep->add_option("--out", out_path)->required();
  auto* ev_boot = ev->add_subcommand("bootstrap", "Bootstrap confidence intervals");
  ev_boot->add_option("--preds", preds_in)->required();
  ev_boot->add_option("--labels", labels_in)->required();
  ev_boot->add_option("--n", n_boot);
  ev_boot->add_option("--metrics", metrics);
  ev_boot->add_option("--threshold", threshold);
  ev_boot->add_option("--out", out_path);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Synthetic corpora");
  synth_cmd->require_subcommand(1);
  auto* synth_gen = synth_cmd->add_subcommand("generate", "Write posts.ndjson, pageviews.tsv, alignment.csv");
  std::string synth_config;
  synth_gen->add_option("--synth-config", synth_config, "Synth settings (defaults to the 'synth' section of --config)");
  synth_gen->add_option("--out", out_path)->required();

  // run
  auto* run = app.add_subcommand("run", "Run pipeline stages in dependency order");
  std::string stages;
  run->add_option("--stages", stages, "Comma-separated subset (default: all)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest_posts->parsed()) {
      auto in = open_in(in_path);
      const auto r = parse_posts(in);
      std::ostringstream os;
      write_posts(os, r.items);
      write_out(out_path, os.str());
      for (const auto& e : r.errors) std::cerr << in_path << ":" << e.line << ": " << e.message << '\n';
      std::cerr << r.items.size() << " posts, " << r.rejected << " rejected\n";
    } else if (ingest_views->parsed()) {
      auto in = open_in(in_path);
      const auto r = parse_pageviews(in);
      std::ostringstream os;
      write_pageviews(os, r.items);
      write_out(out_path, os.str());
      for (const auto& e : r.errors) std::cerr << in_path << ":" << e.line << ": " << e.message << '\n';
      std::cerr << r.items.size() << " records, " << r.rejected << " rejected lines\n";
    } else if (spikes_detect->parsed()) {
      const RunConfig c = make_config(g);
      const auto records = read_pageviews_file(in_path);
      std::vector<TrendDay> days;
      if (no_filter) {
        days = detect_all(group_by_day(records), c.spikes);
      } else {
        auto t = detect_trends(records, c.spikes);
        days = std::move(t.days);
        write_file(fs::path(out_path) / "evergreen.json", nlohmann::json(t.evergreen).dump(1) + "\n");
      }
      write_trend_days(fs::path(out_path) / "days", days);
      std::cerr << days.size() << " trend days\n";
    } else if (trends_build->parsed()) {
      const RunConfig c = make_config(g);
      const auto by_day = read_trend_days(fs::path(trends_in) / "days");
      std::vector<TrendDay> days;
      for (const auto& [d, td] : by_day) days.push_back(td);
      const auto mats = build_matrices(post_days(read_posts_file(posts_in)), days, configured_provider(c));
      fs::create_directories(out_path);
      for (const auto& [d, m] : mats) write_matrix(out_path, m);
      std::cerr << mats.size() << " matrices\n";
    } else if (embed_cache->parsed()) {
      const RunConfig c = make_config(g);
      const auto provider = configured_provider(c);
      EmbeddingStore store = EmbeddingStore::load(store_path);
      const auto st = cache(texts_to_embed(read_posts_file(posts_in)), provider, store);
      store.save(store_path);
      std::cerr << st.requested << " texts, " << st.added << " embedded, " << st.present << " already cached\n";
    } else if (label_sweep->parsed()) {
      const RunConfig c = make_config(g);
      std::ostringstream os;
      write_sweep_csv(os, beta_sweep(read_posts_file(posts_in), parse_doubles(betas), c.label));
      write_out(out_path, os.str());
    } else if (label->parsed()) {
      if (posts_in.empty() || out_path.empty()) throw Error("label: --posts and --out are required");
      const RunConfig c = make_config(g);
      std::ostringstream os;
      write_labels_csv(os, label_corpus(read_posts_file(posts_in), c.label));
      write_out(out_path, os.str());
    } else if (split_cmd->parsed()) {
      const RunConfig c = make_config(g);
      const auto items = split_items(read_posts_file(posts_in), read_labels_file(labels_in));
      const auto m = split_stratified(items, c.train.split, c.seed);
      for (const auto& w : m.warnings) std::cerr << "warning: " << w << '\n';
      std::ostringstream os;
      write_split_csv(os, items, m);
      write_out(out_path, os.str());
    } else if (features->parsed()) {
      const auto posts = read_posts_file(posts_in);
      const auto assignment = read_assignment(split_in, posts);
      std::vector<const Post*> training;
      for (size_t i = 0; i < posts.size(); ++i)
        if (assignment[i] == Split::train) training.push_back(&posts[i]);
      const auto norms = fit_norms(training);
      std::vector<StructVector> rows;
      for (const auto& p : posts) rows.push_back(extract(p, norms));
      write_file(fs::path(out_path) / "features.bin", encode_features(rows));
      write_file(fs::path(out_path) / "norms.json", nlohmann::json(norms).dump(1) + "\n");
    } else if (train->parsed()) {
      RunConfig c = make_config(g);
      if (!variant.empty()) c.variant = variant;
      if (!data_dir.empty()) c.work = fs::absolute(data_dir).string();
      if (!matrices_dir.empty()) c.matrices_dir = fs::absolute(matrices_dir).string();
      if (!out_path.empty()) c.checkpoints_dir = fs::absolute(out_path).string();
      Workspace ws(c, g.force);
      stage_train(ws);
    } else if (ev_report->parsed()) {
      if (!groups.empty() && groups != "subreddit") throw Error("--groups: only 'subreddit' is supported");
      const RunConfig c = make_config(g);
      const auto set = scored_set(preds_in, labels_in, !groups.empty());
      eval::ReportOptions opt;
      opt.threshold = threshold;
      opt.bootstrap_resamples = n_boot;
      opt.seed = c.seed;
      auto j = eval::to_json(eval::report(set, opt));
      write_out(out_path, j.dump(1) + "\n");
    } else if (ev_sweep->parsed()) {
      const auto set = scored_set(preds_in, labels_in, false);
      const auto r = eval::threshold_sweep(set.labels, set.scores);
      std::ostringstream os;
      eval::write_sweep_csv(os, r);
      write_out(out_path, os.str());
      std::cerr << "best threshold " << format_double(r.best_threshold) << " (F1 " << format_double(r.best_f1) << ")\n";
    } else if (ev_boot->parsed()) {
      const RunConfig c = make_config(g);
      const auto set = scored_set(preds_in, labels_in, false);
      nlohmann::ordered_json j;
      for (auto m : split(metrics, ',')) {
        const auto metric = eval::parse_metric(trim_view(m));
        const auto iv = eval::bootstrap_ci(set.labels, set.scores, metric, n_boot, c.seed, threshold);
        j[eval::metric_name(metric)] = {{"lo", iv.lo}, {"hi", iv.hi}, {"resamples", iv.resamples}, {"redraws", iv.redraws}};
      }
      write_out(out_path.empty() ? "-" : out_path, j.dump(1) + "\n");
    } else if (synth_gen->parsed()) {
      synth::SynthConfig sc;
      std::string src = !synth_config.empty() ? synth_config : g.config;
      if (!src.empty()) {
        const auto j = nlohmann::json::parse(read_file(src));
        sc = (j.contains("synth") ? j.at("synth") : j).get<synth::SynthConfig>();
      }
      if (g.seed) sc.seed = *g.seed;
      const auto corpus = synth::generate(sc);
      synth::write_corpus(out_path, corpus);
      std::cerr << corpus.posts.size() << " posts, " << corpus.pageviews.size() << " pageview records\n";
    } else if (run->parsed()) {
      const RunConfig c = make_config(g);
      std::vector<std::string> list;
      for (auto s : split(stages, ','))
        if (!trim_view(s).empty()) list.emplace_back(trim_view(s));
      print_reports(run_pipeline(c, list, g.force));
    }
  } catch (const DependencyError& e) {
    std::cerr << "error: missing dependency: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
