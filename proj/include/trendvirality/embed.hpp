// Copyright 2026 The trendvirality Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "trendvirality/common.hpp"
#include "trendvirality/text.hpp"

namespace tv {

using Embedding = std::vector<float>;  // kEmbedDim entries

inline constexpr size_t kBodyChunkChars = 400;

struct BodyEmbedding {
  Embedding vector = Embedding(kEmbedDim, 0.0f);
  bool is_empty = true;
};

enum class EmbedMode { precomputed, fallback };

inline EmbedMode parse_embed_mode(std::string_view s) {
  if (s == "fallback") return EmbedMode::fallback;
  if (s == "precomputed") return EmbedMode::precomputed;
  throw Error("unknown embedding mode '" + std::string(s) + "' (expected fallback|precomputed)");
}

// Store key of a text: FNV-1a 64 over the UTF-8 bytes of its canonical form.
inline uint64_t content_hash(std::string_view text) { return fnv1a64(text::canonical(text)); }

// ---------------------------------------------------------------------------
// On-disk store: records {u64 hash, 768 x f32}, then a footer of the sorted
// hashes, a u64 record count and an 8-byte magic.
// ---------------------------------------------------------------------------

class EmbeddingStore {
 public:
  static constexpr std::string_view kMagic = "TVEMBIX1";
  static constexpr size_t kRecordBytes = sizeof(uint64_t) + kEmbedDim * sizeof(float);

  EmbeddingStore() = default;

  static EmbeddingStore load(const fs::path& path) {
    EmbeddingStore s;
    if (!fs::exists(path)) return s;
    const std::string bytes = read_file(path);
    s.decode(bytes, path.string());
    return s;
  }

  // Missing file is an error here (precomputed mode must have a store).
  static EmbeddingStore load_existing(const fs::path& path) {
    if (!fs::exists(path)) throw DependencyError("embedding store '" + path.string() + "' does not exist");
    return load(path);
  }

  void decode(std::string_view bytes, const std::string& what) {
    std::unique_lock lock(mu_);
    index_.clear();
    data_.clear();
    order_.clear();
    if (bytes.size() < 16) throw Error(what + ": corrupt store, file too short (" + std::to_string(bytes.size()) + " bytes) at byte offset 0");
    const size_t tail = bytes.size() - 16;
    if (bytes.substr(bytes.size() - 8) != kMagic)
      throw Error(what + ": corrupt store, bad footer magic at byte offset " + std::to_string(bytes.size() - 8));
    uint64_t n = 0;
    std::memcpy(&n, bytes.data() + tail, sizeof n);
    if (n > bytes.size() / kRecordBytes || n * (kRecordBytes + 8) + 16 != bytes.size())
      throw Error(what + ": corrupt store, record count " + std::to_string(n) + " inconsistent with file size " +
                  std::to_string(bytes.size()) + " at byte offset " + std::to_string(tail));
    ByteReader r(bytes, what);
    std::vector<uint64_t> hashes;
    hashes.reserve(n);
    data_.resize(n * kEmbedDim);
    for (uint64_t i = 0; i < n; ++i) {
      const size_t at = r.offset();
      const uint64_t h = r.get<uint64_t>();
      if (index_.count(h)) throw Error(what + ": corrupt store, duplicate hash " + hex64(h) + " at byte offset " + std::to_string(at));
      r.get_floats(std::span<float>(data_.data() + i * kEmbedDim, kEmbedDim));
      index_.emplace(h, i);
      order_.push_back(h);
      hashes.push_back(h);
    }
    std::sort(hashes.begin(), hashes.end());
    for (uint64_t i = 0; i < n; ++i) {
      const size_t at = r.offset();
      if (r.get<uint64_t>() != hashes[i])
        throw Error(what + ": corrupt store, index footer mismatch at byte offset " + std::to_string(at));
    }
  }

  std::string encode() const {
    std::shared_lock lock(mu_);
    ByteWriter w;
    for (size_t i = 0; i < order_.size(); ++i) {
      w.put(order_[i]);
      w.put_floats(std::span<const float>(data_.data() + i * kEmbedDim, kEmbedDim));
    }
    std::vector<uint64_t> sorted = order_;
    std::sort(sorted.begin(), sorted.end());
    for (uint64_t h : sorted) w.put(h);
    w.put(static_cast<uint64_t>(order_.size()));
    w.put_bytes(kMagic);
    return w.take();
  }

  void save(const fs::path& path) const { write_file(path, encode()); }

  bool contains(uint64_t h) const {
    std::shared_lock lock(mu_);
    return index_.count(h) > 0;
  }

  std::optional<Embedding> find(uint64_t h) const {
    std::shared_lock lock(mu_);
    auto it = index_.find(h);
    if (it == index_.end()) return std::nullopt;
    const float* p = data_.data() + it->second * kEmbedDim;
    return Embedding(p, p + kEmbedDim);
  }

  // Returns false if the hash was already present (existing vector kept).
  bool insert(uint64_t h, std::span<const float> v) {
    if (v.size() != static_cast<size_t>(kEmbedDim)) throw Error("embedding must have 768 entries");
    std::unique_lock lock(mu_);
    if (index_.count(h)) return false;
    index_.emplace(h, order_.size());
    order_.push_back(h);
    data_.insert(data_.end(), v.begin(), v.end());
    return true;
  }

  size_t size() const {
    std::shared_lock lock(mu_);
    return order_.size();
  }

  EmbeddingStore(const EmbeddingStore& o) {
    std::shared_lock lock(o.mu_);
    index_ = o.index_;
    data_ = o.data_;
    order_ = o.order_;
  }
  EmbeddingStore(EmbeddingStore&& o) noexcept
      : index_(std::move(o.index_)), data_(std::move(o.data_)), order_(std::move(o.order_)) {}

 private:
  mutable std::shared_mutex mu_;
  std::unordered_map<uint64_t, size_t> index_;
  std::vector<float> data_;
  std::vector<uint64_t> order_;
};

// ---------------------------------------------------------------------------
// Provider
// ---------------------------------------------------------------------------

// Fallback vectors: each whitespace token owns a Gaussian stream seeded by its
// FNV-1a hash; a multi-token text adds its own whole-text stream to the sum of
// its token streams, then the sum is L2-normalised. Texts that share tokens
// therefore have positive cosine similarity, like a bag-of-words encoder.
class EmbeddingProvider {
 public:
  explicit EmbeddingProvider(EmbedMode mode = EmbedMode::fallback, std::shared_ptr<const EmbeddingStore> store = nullptr)
      : mode_(mode), store_(std::move(store)) {
    if (mode_ == EmbedMode::precomputed && !store_) throw Error("precomputed embedding mode requires a store");
  }

  EmbedMode mode() const { return mode_; }
  static constexpr int dim() { return kEmbedDim; }

  Embedding embed_text(std::string_view raw) const {
    const std::string t = text::canonical(raw);
    if (t.empty()) throw Error("embed_text: text is empty after trimming");
    return embed_canonical(t);
  }

  BodyEmbedding embed_body(std::string_view raw) const {
    BodyEmbedding out;
    const std::string body = text::canonical(raw);
    if (body.empty()) return out;
    std::vector<double> acc(kEmbedDim, 0.0);
    size_t used = 0;
    for (auto chunk : text::chunk_codepoints(body, kBodyChunkChars)) {
      if (trim_view(chunk).empty()) continue;
      const Embedding v = embed_text(chunk);
      for (int i = 0; i < kEmbedDim; ++i) acc[i] += v[i];
      ++used;
    }
    if (used == 0) return out;
    for (auto& a : acc) a /= static_cast<double>(used);
    out.vector = normalized(acc);
    out.is_empty = false;
    return out;
  }

  // Every non-empty canonical text that a body embedding would request.
  static std::vector<std::string> body_chunk_texts(std::string_view raw) {
    std::vector<std::string> out;
    const std::string body = text::canonical(raw);
    for (auto chunk : text::chunk_codepoints(body, kBodyChunkChars)) {
      std::string c = text::canonical(chunk);
      if (!c.empty()) out.push_back(std::move(c));
    }
    return out;
  }

  Embedding fallback_vector(const std::string& canonical_text) const {
    std::vector<double> acc(kEmbedDim, 0.0);
    const auto tokens = text::whitespace_tokens(canonical_text);
    add_stream(acc, fnv1a64(canonical_text));
    if (tokens.size() > 1)
      for (auto tok : tokens) add_token(acc, tok);
    return normalized(acc);
  }

 private:
  Embedding embed_canonical(const std::string& t) const {
    if (mode_ == EmbedMode::precomputed) {
      const uint64_t h = fnv1a64(t);
      auto v = store_->find(h);
      if (!v) throw CacheMissError("embedding store has no vector for text hash " + hex64(h) + " ('" + t.substr(0, 60) + "')");
      return *v;
    }
    return fallback_vector(t);
  }

  static void add_stream(std::vector<double>& acc, uint64_t seed) {
    Rng rng(seed);
    for (int i = 0; i < kEmbedDim; ++i) acc[i] += rng.normal();
  }

  void add_token(std::vector<double>& acc, std::string_view tok) const {
    const uint64_t h = fnv1a64(tok);
    {
      std::shared_lock lock(memo_mu_);
      if (auto it = memo_.find(h); it != memo_.end()) {
        for (int i = 0; i < kEmbedDim; ++i) acc[i] += it->second[i];
        return;
      }
    }
    std::vector<double> v(kEmbedDim, 0.0);
    add_stream(v, h);
    for (int i = 0; i < kEmbedDim; ++i) acc[i] += v[i];
    std::unique_lock lock(memo_mu_);
    if (memo_.size() > kMemoLimit) memo_.clear();
    memo_.emplace(h, std::move(v));
  }

  static Embedding normalized(const std::vector<double>& v) {
    double ss = 0.0;
    for (double x : v) ss += x * x;
    const double inv = ss > 0.0 ? 1.0 / std::sqrt(ss) : 0.0;
    Embedding out(kEmbedDim);
    for (int i = 0; i < kEmbedDim; ++i) out[i] = static_cast<float>(v[i] * inv);
    return out;
  }

  static constexpr size_t kMemoLimit = 1 << 16;

  EmbedMode mode_;
  std::shared_ptr<const EmbeddingStore> store_;
  mutable std::shared_mutex memo_mu_;
  mutable std::unordered_map<uint64_t, std::vector<double>> memo_;
};

struct CacheStats {
  size_t requested = 0;
  size_t added = 0;
  size_t present = 0;
};

// Embeds each distinct text at most once into `store`. In precomputed mode
// nothing is computed; every text must already be present.
inline CacheStats cache(const std::vector<std::string>& texts, const EmbeddingProvider& provider, EmbeddingStore& store) {
  CacheStats st;
  for (const auto& raw : texts) {
    const std::string t = text::canonical(raw);
    if (t.empty()) continue;
    ++st.requested;
    const uint64_t h = fnv1a64(t);
    if (store.contains(h)) {
      ++st.present;
      continue;
    }
    if (provider.mode() == EmbedMode::precomputed)
      throw CacheMissError("embedding store has no vector for text hash " + hex64(h) + " ('" + t.substr(0, 60) + "')");
    if (store.insert(h, provider.fallback_vector(t))) ++st.added;
  }
  return st;
}

}  // namespace tv
