// Copyright 2026 The trendvirality Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "trendvirality/common.hpp"

namespace tv::nn {

// Activations are column-per-sample; parameters are row-major so their raw
// buffer is the canonical row-major layout used in checkpoints.
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Init { zeros, ones, xavier_uniform, normal_002 };

struct Tensor {
  std::string name;
  std::vector<int64_t> shape;  // rank 1 tensors are stored as n x 1
  RowMat value;
  RowMat grad;
  bool requires_grad = true;
  bool decay = false;  // decoupled weight decay applies
  Init init = Init::zeros;

  Tensor() = default;
  Tensor(std::string n, std::vector<int64_t> s, Init i, bool weight_decay = false)
      : name(std::move(n)), shape(std::move(s)), decay(weight_decay), init(i) {
    const auto r = shape[0];
    const auto c = shape.size() > 1 ? shape[1] : 1;
    value = RowMat::Zero(r, c);
    grad = RowMat::Zero(r, c);
  }

  int64_t numel() const { return value.size(); }
  int64_t rows() const { return value.rows(); }
  int64_t cols() const { return value.cols(); }
  auto vec() { return Eigen::Map<Vec>(value.data(), value.size()); }
  auto vec() const { return Eigen::Map<const Vec>(value.data(), value.size()); }
  auto gvec() { return Eigen::Map<Vec>(grad.data(), grad.size()); }
  auto gvec() const { return Eigen::Map<const Vec>(grad.data(), grad.size()); }

  void initialize(Rng& rng) {
    switch (init) {
      case Init::zeros: value.setZero(); break;
      case Init::ones: value.setOnes(); break;
      case Init::xavier_uniform: {
        const double a = std::sqrt(6.0 / static_cast<double>(rows() + cols()));
        for (int64_t i = 0; i < value.size(); ++i) value.data()[i] = rng.uniform(-a, a);
        break;
      }
      case Init::normal_002:
        for (int64_t i = 0; i < value.size(); ++i) value.data()[i] = 0.02 * rng.normal();
        break;
    }
  }
};

inline constexpr double kDropout = 0.3;
inline constexpr double kLayerNormEps = 1e-9;

// Inverted dropout multipliers: 0 with probability kDropout, else 1/(1-kDropout).
inline void dropout_mask(Rng& rng, double* out, int64_t n) {
  const double keep = 1.0 / (1.0 - kDropout);
  for (int64_t i = 0; i < n; ++i) out[i] = rng.uniform() < kDropout ? 0.0 : keep;
}

// Column-wise LayerNorm without the affine part: xhat = (x - mean) / sqrt(var + eps).
struct LayerNormCache {
  Mat xhat;
  Vec inv_std;
};

inline Mat layer_norm_forward(const Mat& x, LayerNormCache& cache) {
  const auto n = static_cast<double>(x.rows());
  cache.xhat.resize(x.rows(), x.cols());
  cache.inv_std.resize(x.cols());
  for (Eigen::Index b = 0; b < x.cols(); ++b) {
    const double mu = x.col(b).sum() / n;
    const double var = (x.col(b).array() - mu).square().sum() / n;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.inv_std[b] = inv;
    cache.xhat.col(b) = (x.col(b).array() - mu) * inv;
  }
  return cache.xhat;
}

// Gradient w.r.t. the LayerNorm input given the gradient w.r.t. xhat.
inline Mat layer_norm_backward(const Mat& dxhat, const LayerNormCache& cache) {
  const auto n = static_cast<double>(dxhat.rows());
  Mat dx(dxhat.rows(), dxhat.cols());
  for (Eigen::Index b = 0; b < dxhat.cols(); ++b) {
    const double mean_d = dxhat.col(b).sum() / n;
    const double mean_dx = dxhat.col(b).dot(cache.xhat.col(b)) / n;
    dx.col(b) = cache.inv_std[b] * (dxhat.col(b).array() - mean_d - cache.xhat.col(b).array() * mean_dx);
  }
  return dx;
}

inline Mat relu(const Mat& x) { return x.cwiseMax(0.0); }

inline Mat relu_backward(const Mat& dy, const Mat& pre) { return (pre.array() > 0.0).select(dy, 0.0); }

}  // namespace tv::nn
