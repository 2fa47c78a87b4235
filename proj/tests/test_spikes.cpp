// Copyright 2026 The trendvirality Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "trendvirality/spikes.hpp"

namespace tv {
namespace {

const Date kDay = Date::from_ymd(2021, 3, 2);

SpikeConfig no_filters() {
  SpikeConfig c;
  c.blocklist.clear();
  return c;
}

TEST(SpikeStats, CompositeOfDoubling) {
  const auto t = spike_stats("X", kDay, 6000, 3000);
  EXPECT_EQ(t.ratio, 2.0);
  EXPECT_EQ(t.delta, 3000);
  const double expected = 2.0 * 8.006700845440367;  // ln(3001)
  EXPECT_NEAR(t.composite, expected, 1e-12);
  EXPECT_NEAR(t.composite, 16.0134, 1e-3);
}

TEST(DetectDay, RatioBoundary) {
  DayCounts today = {{"X", 6000}, {"Y", 6000}}, prior = {{"X", 3000}, {"Y", 3001}};
  const auto d = detect_day(kDay, today, prior, no_filters());
  ASSERT_EQ(d.terms.size(), 1u);
  EXPECT_EQ(d.terms[0].term, "X");
}

TEST(DetectDay, ViewFloorIsStrict) {
  DayCounts today = {{"A", 3000}, {"B", 3001}}, prior;
  const auto d = detect_day(kDay, today, prior, no_filters());
  ASSERT_EQ(d.terms.size(), 1u);
  EXPECT_EQ(d.terms[0].term, "B");
  EXPECT_FALSE(d.terms[0].prior_views.has_value());
  EXPECT_EQ(d.terms[0].ratio, 3001.0);
}

TEST(DetectDay, ZeroPriorCountsAsFirstAppearance) {
  DayCounts today = {{"A", 5000}}, prior = {{"A", 0}};
  const auto d = detect_day(kDay, today, prior, no_filters());
  ASSERT_EQ(d.terms.size(), 1u);
  EXPECT_EQ(d.terms[0].ratio, 5000.0);
}

TEST(DetectDay, BlocklistAndPatterns) {
  SpikeConfig c;
  c.noise_patterns = {"^Special:", "^Talk:"};
  DayCounts today = {{"Main_Page", 90000}, {"Special:Search", 90000}, {"Talk:X", 90000}, {"Real", 90000}};
  const auto d = detect_day(kDay, today, {}, c);
  ASSERT_EQ(d.terms.size(), 1u);
  EXPECT_EQ(d.terms[0].term, "Real");
}

TEST(DetectDay, TopKKeepsBestComposite) {
  SpikeConfig c = no_filters();
  c.top_k = 2;
  DayCounts today = {{"a", 4000}, {"b", 9000}, {"c", 7000}, {"d", 9000}};
  const auto d = detect_day(kDay, today, {}, c);
  ASSERT_EQ(d.terms.size(), 2u);
  EXPECT_EQ(d.terms[0].term, "b");  // tie with d broken by term
  EXPECT_EQ(d.terms[1].term, "d");
}

// Straightforward reference: evaluate the two rules per article, then order
// by composite (descending) and term.
std::vector<std::pair<std::string, double>> naive_detect(const DayCounts& today, const DayCounts& prior) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& [term, v] : today) {
    double p = 1.0;
    if (prior.count(term) && prior.at(term) > 0) p = static_cast<double>(prior.at(term));
    const double ratio = static_cast<double>(v) / p;
    if (v > 3000 && ratio >= 2.0) out.emplace_back(term, ratio * std::log(static_cast<double>(v) - p + 1.0));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  return out;
}

TEST(DetectDay, MatchesNaiveDetectorOnRandomMaps) {
  Rng rng(2024);
  const SpikeConfig cfg = no_filters();
  for (int trial = 0; trial < 300; ++trial) {
    DayCounts today, prior;
    const int n = 1 + static_cast<int>(rng.below(60));
    for (int i = 0; i < n; ++i) {
      const std::string term = "t" + std::to_string(rng.below(80));
      today[term] = rng.below(4) == 0 ? 2990 + rng.below(20) : rng.below(20000);
      if (rng.bernoulli(0.7)) prior[term] = rng.bernoulli(0.1) ? 0 : rng.below(12000);
    }
    const auto got = detect_day(kDay, today, prior, cfg);
    const auto want = naive_detect(today, prior);
    ASSERT_EQ(got.terms.size(), want.size());
    for (size_t i = 0; i < want.size(); ++i) {
      EXPECT_EQ(got.terms[i].term, want[i].first);
      EXPECT_DOUBLE_EQ(got.terms[i].composite, want[i].second);
    }
  }
}

TEST(DetectAll, SkipsDaysWithoutPrior) {
  std::map<Date, DayCounts> by_day;
  by_day[kDay] = {{"A", 5000}};
  by_day[kDay + 1] = {{"A", 20000}};
  by_day[kDay + 5] = {{"A", 90000}};
  const auto days = detect_all(by_day, no_filters());
  ASSERT_EQ(days.size(), 1u);
  EXPECT_EQ(days[0].day, kDay + 1);
}

std::vector<TrendDay> days_with(const std::vector<std::vector<std::string>>& terms) {
  std::vector<TrendDay> out;
  for (size_t i = 0; i < terms.size(); ++i) {
    TrendDay d{kDay + static_cast<int>(i), {}};
    for (const auto& t : terms[i]) d.terms.push_back(spike_stats(t, d.day, 9000, 100));
    out.push_back(d);
  }
  return out;
}

TEST(Evergreen, StrictFraction) {
  std::vector<std::vector<std::string>> t(10);
  for (int i = 0; i < 6; ++i) t[i].push_back("six");
  for (int i = 0; i < 7; ++i) t[i].push_back("seven");
  const auto e = detect_evergreen(days_with(t), SpikeConfig{});
  EXPECT_EQ(e, std::set<std::string>{"seven"});
}

TEST(Evergreen, SingleDayAndEmpty) {
  EXPECT_EQ(detect_evergreen(days_with({{"x"}}), SpikeConfig{}), std::set<std::string>{"x"});
  EXPECT_THROW(detect_evergreen({}, SpikeConfig{}), Error);
}

TEST(ApplyFilters, RemovesEvergreenKeepsOrderAndEmptyDays) {
  const auto days = days_with({{"a", "b", "c"}, {"b"}, {"c"}});
  const auto out = apply_filters(days, {"b"});
  ASSERT_EQ(out.size(), 3u);
  ASSERT_EQ(out[0].terms.size(), 2u);
  EXPECT_EQ(out[0].terms[0].term, "a");
  EXPECT_EQ(out[0].terms[1].term, "c");
  EXPECT_TRUE(out[1].terms.empty());
  const auto same = apply_filters(days, {});
  for (size_t i = 0; i < days.size(); ++i) EXPECT_EQ(same[i].terms.size(), days[i].terms.size());
}

TEST(TrendDayFile, RoundTrip) {
  const auto d = days_with({{"Alpha", "Beta_(film)"}})[0];
  const auto back = parse_trend_day(serialize_trend_day(d));
  EXPECT_EQ(back.day, d.day);
  ASSERT_EQ(back.terms.size(), 2u);
  EXPECT_EQ(back.terms[1].term, "Beta_(film)");
  EXPECT_DOUBLE_EQ(back.terms[0].composite, d.terms[0].composite);
}

}  // namespace
}  // namespace tv
