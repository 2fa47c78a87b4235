// Copyright 2026 The trendvirality Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sstream>

#include "trendvirality/corpus.hpp"

namespace tv {
namespace {

std::string post_line(const std::string& id, int64_t comments, const std::string& extra = "") {
  return R"({"id":")" + id + R"(","subreddit":"news","title":"Hello","created_utc":1614600000,"score":5,"num_comments":)" +
         std::to_string(comments) + extra + "}\n";
}

TEST(Posts, EmptyStream) {
  std::istringstream in("");
  const auto r = parse_posts(in);
  EXPECT_TRUE(r.items.empty());
  EXPECT_EQ(r.rejected, 0u);
}

TEST(Posts, NegativeCommentsRejected) {
  std::istringstream in(post_line("a", 1) + post_line("b", 2) + post_line("c", -1) + post_line("d", 0));
  const auto r = parse_posts(in);
  ASSERT_EQ(r.items.size(), 3u);
  EXPECT_EQ(r.rejected, 1u);
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0].line, 3u);
  EXPECT_EQ(r.items[2].id, "d");
}

TEST(Posts, ValidationRules) {
  const std::vector<std::string> bad = {
      R"({"id":"x","subreddit":"s","title":"  ","created_utc":1614600000,"score":1,"num_comments":0})",
      R"({"id":"x","subreddit":"s","title":"t","created_utc":1000,"score":1,"num_comments":0})",
      R"({"id":"x","subreddit":"s","title":"t","created_utc":1614600000,"score":1,"num_comments":0,"selftext":"[deleted]"})",
      R"({"id":"x","subreddit":"s","title":"t","created_utc":1614600000,"score":1})",
      R"({"id":"x","subreddit":"s","title":"t","created_utc":1614600000,"score":1.5,"num_comments":0})",
      R"({"id":"x","subreddit":"s","title":"t","created_utc":1614600000,"score":1,"num_comments":0,"subscribers":-4})",
      R"(not json)",
      R"([1,2])",
  };
  for (const auto& line : bad) {
    std::istringstream in(line);
    const auto r = parse_posts(in);
    EXPECT_EQ(r.rejected, 1u) << line;
    EXPECT_TRUE(r.items.empty()) << line;
  }
}

TEST(Posts, CanonicalisesAndKeepsNegativeScore) {
  std::istringstream in(
      R"({"id":7,"subreddit":" pics ","title":" Café ","created_utc":1614600000,"score":-3,"num_comments":2,"selftext":null,"extra":true})");
  const auto r = parse_posts(in);
  ASSERT_EQ(r.items.size(), 1u);
  const Post& p = r.items[0];
  EXPECT_EQ(p.id, "7");
  EXPECT_EQ(p.subreddit, "pics");
  EXPECT_EQ(p.title, "Caf\xC3\xA9");
  EXPECT_EQ(p.body, "");
  EXPECT_EQ(p.score, -3);
  EXPECT_EQ(p.day(), Date::from_ymd(2021, 3, 1));
}

TEST(Posts, SerializeRoundTrip) {
  Post p{"id1", "sub", "A title", "some body", 1614600000, 12, 3, 4000};
  std::ostringstream out;
  write_posts(out, {p, p});
  std::istringstream in(out.str());
  const auto r = parse_posts(in);
  ASSERT_EQ(r.items.size(), 2u);
  EXPECT_EQ(r.items[0], p);
}

TEST(Pageviews, AggregatesDuplicates) {
  std::istringstream in("X\t2021-03-01\t100\nX\t2021-03-01\t50\nY\t2021-03-01\t7\n");
  const auto r = parse_pageviews(in);
  ASSERT_EQ(r.items.size(), 2u);
  EXPECT_EQ(r.items[0], (PageviewRecord{"X", Date::from_ymd(2021, 3, 1), 150}));
  EXPECT_EQ(r.items[1].views, 7u);
}

TEST(Pageviews, EmptyAndRejects) {
  std::istringstream empty("");
  EXPECT_TRUE(parse_pageviews(empty).items.empty());
  std::istringstream in("X\t2021-03-01\t-5\nX\t2021-02-30\t5\nX\t2021-03-01\nX\t2021-03-01\tabc\nZ\t2021-03-02\t1\n");
  const auto r = parse_pageviews(in);
  EXPECT_EQ(r.rejected, 4u);
  ASSERT_EQ(r.items.size(), 1u);
  EXPECT_EQ(r.items[0].article, "Z");
}

TEST(Pageviews, GroupByDay) {
  std::vector<PageviewRecord> recs = {{"A", Date::from_ymd(2021, 3, 1), 1}, {"B", Date::from_ymd(2021, 3, 1), 2},
                                      {"A", Date::from_ymd(2021, 3, 2), 3}};
  const auto g = group_by_day(recs);
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g.at(Date::from_ymd(2021, 3, 1)).at("B"), 2u);
  EXPECT_EQ(g.at(Date::from_ymd(2021, 3, 2)).at("A"), 3u);
}

}  // namespace
}  // namespace tv
