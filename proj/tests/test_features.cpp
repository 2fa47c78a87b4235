// Copyright 2026 The trendvirality Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "trendvirality/features.hpp"

namespace tv {
namespace {

Post at(int y, int m, int d, int hour, std::string title = "t", std::string body = "", int64_t subs = 0) {
  Post p;
  p.id = "p";
  p.subreddit = "s";
  p.title = std::move(title);
  p.body = std::move(body);
  p.created_utc = Date::from_ymd(y, m, d).unix_seconds() + hour * 3600 + 59;
  p.subscribers = subs;
  return p;
}

TEST(Norms, MaximaFromTrainingOnly) {
  const std::vector<Post> train = {at(2021, 3, 1, 0, std::string(9, 'a')), at(2021, 3, 1, 0, std::string(99, 'b'))};
  const auto n = fit_norms(train);
  EXPECT_DOUBLE_EQ(n.max_log_title_len, std::log(100.0));
  EXPECT_EQ(n.max_log_body_len, 1.0);  // every body empty
  EXPECT_EQ(n.max_log_subscribers, 1.0);
  EXPECT_THROW(fit_norms(std::vector<Post>{}), Error);
}

TEST(Norms, SinglePost) {
  const Post p = at(2022, 1, 1, 5, "hello", "a body", 999);
  const auto n = fit_norms(std::vector<Post>{p});
  EXPECT_DOUBLE_EQ(n.max_log_subscribers, 3.0);
  EXPECT_DOUBLE_EQ(n.max_log_body_len, std::log1p(6.0));
  const auto f = extract(p, n);
  EXPECT_DOUBLE_EQ(f[3], 1.0);
  EXPECT_DOUBLE_EQ(f[4], 1.0);
  EXPECT_DOUBLE_EQ(f[5], 1.0);
  EXPECT_DOUBLE_EQ(f[7], 1.0);
}

TEST(Extract, HourAndDayEncodings) {
  NormStats n;
  const auto six = extract(at(2021, 3, 3, 6), n);  // Wednesday
  EXPECT_DOUBLE_EQ(six[0], 1.0);
  EXPECT_NEAR(six[1], 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(six[2], 2.0 / 6.0);
  EXPECT_EQ(six[8], 0.0);
  const auto sun = extract(at(2021, 3, 7, 0), n);
  EXPECT_DOUBLE_EQ(sun[0], 0.0);
  EXPECT_DOUBLE_EQ(sun[1], 1.0);
  EXPECT_DOUBLE_EQ(sun[2], 1.0);
  EXPECT_EQ(sun[8], 1.0);
  EXPECT_EQ(extract(at(2021, 3, 6, 12), n)[8], 1.0);  // Saturday
}

TEST(Extract, HandComputedRow) {
  NormStats n{4.0, 3.0, 5.0, 8.0};
  const Post p = at(2021, 3, 1, 18, "abcd", "xy", 9999);
  const auto f = extract(p, n);
  const double age = (p.created_utc - kRedditEpoch) / 86400;
  EXPECT_DOUBLE_EQ(f[0], std::sin(2 * M_PI * 18 / 24));
  EXPECT_DOUBLE_EQ(f[3], std::log10(age + 1) / 4.0);
  EXPECT_DOUBLE_EQ(f[4], std::log1p(4.0) / 3.0);
  EXPECT_DOUBLE_EQ(f[5], std::log1p(2.0) / 5.0);
  EXPECT_EQ(f[6], 1.0);
  EXPECT_DOUBLE_EQ(f[7], 4.0 / 8.0);
}

// Every entry stays in its documented range for arbitrary posts.
TEST(Extract, RangesProperty) {
  Rng rng(77);
  std::vector<Post> posts;
  for (int i = 0; i < 500; ++i) {
    Post p = at(2021, 1, 1, 0, std::string(1 + rng.below(300), 'x'), std::string(rng.below(3000), 'y'),
                static_cast<int64_t>(rng.below(50000000)));
    p.created_utc += static_cast<int64_t>(rng.below(86400 * 900));
    posts.push_back(p);
  }
  const auto n = fit_norms(std::vector<Post>(posts.begin(), posts.begin() + 250));
  for (const auto& p : posts) {
    const auto f = extract(p, n);
    EXPECT_GE(f[0], -1.0);
    EXPECT_LE(f[0], 1.0);
    for (int k = 2; k < kNumStructFeatures; ++k) {
      EXPECT_GE(f[k], 0.0);
      EXPECT_LE(f[k], 1.0);
    }
    EXPECT_NEAR(f[0] * f[0] + f[1] * f[1], 1.0, 1e-12);
  }
}

TEST(Encode, LittleEndianFloats) {
  const std::vector<StructVector> rows = {StructVector{1, 2, 3, 4, 5, 6, 7, 8, 9}};
  const auto bytes = encode_features(rows);
  ASSERT_EQ(bytes.size(), 9 * sizeof(float));
  float last;
  std::memcpy(&last, bytes.data() + 8 * sizeof(float), sizeof last);
  EXPECT_EQ(last, 9.0f);
}

}  // namespace
}  // namespace tv
