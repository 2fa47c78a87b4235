// Copyright 2026 The trendvirality Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "trendvirality/embed.hpp"

namespace tv {
namespace {

double dot(const Embedding& a, const Embedding& b) {
  double s = 0;
  for (int i = 0; i < kEmbedDim; ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

TEST(Fallback, DeterministicUnitVectors) {
  const EmbeddingProvider e;
  const auto a = e.embed_text("Breaking news today");
  const auto b = e.embed_text("  Breaking news today ");
  ASSERT_EQ(a.size(), size_t{kEmbedDim});
  EXPECT_EQ(a, b);
  EXPECT_NEAR(dot(a, a), 1.0, 1e-6);
  EXPECT_THROW(e.embed_text("   "), Error);
}

TEST(Fallback, DistinctStringsDiffer) {
  const EmbeddingProvider e;
  std::vector<Embedding> v;
  for (int i = 0; i < 1000; ++i) v.push_back(e.embed_text("string " + std::to_string(i) + " x"));
  for (int i = 1; i < 1000; ++i) EXPECT_LT(dot(v[i - 1], v[i]), 0.999);
}

TEST(Fallback, SharedTokensRaiseSimilarity) {
  const EmbeddingProvider e;
  const auto term = e.embed_text("Zeppelin");
  const auto with = e.embed_text("my Zeppelin model kit");
  const auto without = e.embed_text("my airship model kit");
  EXPECT_GT(dot(term, with), 0.3);
  EXPECT_LT(std::abs(dot(term, without)), 0.2);
}

TEST(Body, EmptyAndSingleChunk) {
  const EmbeddingProvider e;
  EXPECT_TRUE(e.embed_body("").is_empty);
  EXPECT_TRUE(e.embed_body("   \n").is_empty);
  const std::string body(400, 'q');
  const auto b = e.embed_body(body);
  EXPECT_FALSE(b.is_empty);
  EXPECT_EQ(b.vector, e.embed_text(body));
}

TEST(Body, MeanOfChunksRenormalised) {
  const EmbeddingProvider e;
  const std::string body = std::string(400, 'a') + std::string(100, 'b');
  const auto b = e.embed_body(body);
  const auto c1 = e.embed_text(std::string(400, 'a')), c2 = e.embed_text(std::string(100, 'b'));
  std::vector<double> mean(kEmbedDim);
  double ss = 0;
  for (int i = 0; i < kEmbedDim; ++i) {
    mean[i] = (static_cast<double>(c1[i]) + c2[i]) / 2;
    ss += mean[i] * mean[i];
  }
  for (int i = 0; i < kEmbedDim; ++i) EXPECT_NEAR(b.vector[i], mean[i] / std::sqrt(ss), 1e-6);
  EXPECT_EQ(EmbeddingProvider::body_chunk_texts(body).size(), 2u);
}

TEST(Store, CacheIsIdempotentUnion) {
  const EmbeddingProvider e;
  EmbeddingStore s;
  cache({"A", "B"}, e, s);
  const auto st = cache({"B", "C"}, e, s);
  EXPECT_EQ(st.added, 1u);
  EXPECT_EQ(st.present, 1u);
  EXPECT_EQ(s.size(), 3u);
  for (const char* t : {"A", "B", "C"}) EXPECT_TRUE(s.contains(content_hash(t)));
  cache({}, e, s);
  EXPECT_EQ(s.size(), 3u);
}

TEST(Store, RoundTripBitExact) {
  const EmbeddingProvider e;
  EmbeddingStore s;
  std::vector<std::string> terms;
  for (int i = 0; i < 512; ++i) terms.push_back("Term_" + std::to_string(i));
  cache(terms, e, s);
  const auto path = fs::temp_directory_path() / "tv_test_store.bin";
  s.save(path);
  const auto loaded = EmbeddingStore::load(path);
  fs::remove(path);
  EXPECT_EQ(loaded.size(), 512u);
  for (const auto& t : terms) EXPECT_EQ(*loaded.find(content_hash(t)), e.embed_text(t));
  EXPECT_EQ(loaded.encode(), s.encode());
}

TEST(Store, PrecomputedModeMissesLoudly) {
  auto store = std::make_shared<EmbeddingStore>();
  const EmbeddingProvider fallback;
  store->insert(content_hash("known"), fallback.embed_text("known"));
  const EmbeddingProvider pre(EmbedMode::precomputed, store);
  EXPECT_EQ(pre.embed_text("known"), fallback.embed_text("known"));
  EXPECT_THROW(pre.embed_text("unknown"), CacheMissError);
  EmbeddingStore other;
  EXPECT_THROW(cache({"unknown"}, pre, other), CacheMissError);
  EXPECT_THROW(EmbeddingStore::load_existing("/nonexistent/store.bin"), DependencyError);
}

TEST(Store, RejectsCorruptFiles) {
  EmbeddingStore s;
  cache({"x", "y"}, EmbeddingProvider{}, s);
  std::string bytes = s.encode();
  EmbeddingStore t;
  EXPECT_THROW(t.decode(bytes.substr(0, bytes.size() - 3), "store"), Error);
  bytes[bytes.size() - 1] ^= 1;
  EXPECT_THROW(t.decode(bytes, "store"), Error);
}

}  // namespace
}  // namespace tv
