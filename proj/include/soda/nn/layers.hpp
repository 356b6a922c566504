#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "soda/nn/tensor.hpp"

namespace soda::nn {

// ---------------------------------------------------------------- Linear

template <class T>
struct Linear {
  using Scalar = T;
  Mat<T> W;  // in x out
  Mat<T> b;  // 1 x out

  Linear() = default;
  Linear(int in, int out) : W(Mat<T>::Zero(in, out)), b(Mat<T>::Zero(1, out)) {}

  int in() const { return static_cast<int>(W.rows()); }
  int out() const { return static_cast<int>(W.cols()); }

  void init(Rng& rng) {
    const double bound = 1.0 / std::sqrt(std::max(1, in()));
    init_uniform(W, rng, bound);
    init_uniform(b, rng, bound);
  }

  template <class F>
  void for_each(const std::string& prefix, F&& f) {
    f(prefix + "W", W);
    f(prefix + "b", b);
  }

  Mat<T> forward(const Mat<T>& x) const {
    Mat<T> y = x * W;
    y.rowwise() += b.row(0);
    return y;
  }

  /// Accumulates into grad and returns dL/dx.
  Mat<T> backward(Linear& grad, const Mat<T>& x, const Mat<T>& dy) const {
    grad.W.noalias() += x.transpose() * dy;
    grad.b.row(0) += dy.colwise().sum();
    return dy * W.transpose();
  }
};

// ---------------------------------------------------------------- LayerNorm

template <class T>
struct LayerNorm {
  using Scalar = T;
  static constexpr double kEps = 1e-5;
  Mat<T> gamma;  // 1 x d
  Mat<T> beta;   // 1 x d

  struct Cache {
    Mat<T> xhat;
    std::vector<T> rstd;
  };

  LayerNorm() = default;
  explicit LayerNorm(int d) : gamma(Mat<T>::Ones(1, d)), beta(Mat<T>::Zero(1, d)) {}

  void init(Rng&) {
    gamma.setOnes();
    beta.setZero();
  }

  template <class F>
  void for_each(const std::string& prefix, F&& f) {
    f(prefix + "gamma", gamma);
    f(prefix + "beta", beta);
  }

  Mat<T> forward(const Mat<T>& x, Cache* cache) const {
    const auto d = x.cols();
    Mat<T> xhat(x.rows(), d);
    std::vector<T> rstd(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const T mean = x.row(i).mean();
      const T var = (x.row(i).array() - mean).square().sum() / static_cast<T>(d);
      const T r = T(1) / std::sqrt(var + static_cast<T>(kEps));
      xhat.row(i) = (x.row(i).array() - mean) * r;
      rstd[static_cast<std::size_t>(i)] = r;
    }
    Mat<T> y = xhat.array().rowwise() * gamma.row(0).array();
    y.rowwise() += beta.row(0);
    if (cache) {
      cache->xhat = std::move(xhat);
      cache->rstd = std::move(rstd);
    }
    return y;
  }

  Mat<T> backward(LayerNorm& grad, const Cache& c, const Mat<T>& dy) const {
    grad.gamma.row(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
    grad.beta.row(0) += dy.colwise().sum();
    Mat<T> dxhat = dy.array().rowwise() * gamma.row(0).array();
    Mat<T> dx(dy.rows(), dy.cols());
    const T inv_d = T(1) / static_cast<T>(dy.cols());
    for (Eigen::Index i = 0; i < dy.rows(); ++i) {
      const T m1 = dxhat.row(i).sum() * inv_d;
      const T m2 = (dxhat.row(i).array() * c.xhat.row(i).array()).sum() * inv_d;
      dx.row(i) = (dxhat.row(i).array() - m1 - c.xhat.row(i).array() * m2) *
                  c.rstd[static_cast<std::size_t>(i)];
    }
    return dx;
  }
};

// ---------------------------------------------------------------- GELU (exact, erf form)

template <class T>
Mat<T> gelu(const Mat<T>& z) {
  const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
  return z.unaryExpr([=](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); });
}

template <class T>
Mat<T> gelu_backward(const Mat<T>& z, const Mat<T>& dy) {
  const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
  const T inv_sqrt2pi = static_cast<T>(1.0 / std::sqrt(2.0 * std::numbers::pi));
  Mat<T> dz = z.unaryExpr([=](T v) {
    const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
    const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
    return cdf + v * pdf;
  });
  return dz.cwiseProduct(dy);
}

// ---------------------------------------------------------------- Dropout

/// Inverted dropout mask (entries 0 or 1/(1-p)); empty when inactive.
template <class T>
Mat<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng* rng) {
  if (!rng || p <= 0.0) return {};
  Mat<T> m(rows, cols);
  const T keep = static_cast<T>(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng->uniform() < p ? T(0) : keep;
  return m;
}

template <class T>
Mat<T> apply_mask(const Mat<T>& x, const Mat<T>& mask) {
  return mask.size() == 0 ? x : Mat<T>(x.cwiseProduct(mask));
}

// ---------------------------------------------------------------- Softmax

/// Row-wise softmax; masked columns (key_mask[j] == false) get exactly zero.
template <class T>
Mat<T> softmax_rows(const Mat<T>& s, const std::vector<bool>* key_mask = nullptr) {
  Mat<T> p(s.rows(), s.cols());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      if (!key_mask || (*key_mask)[static_cast<std::size_t>(j)]) mx = std::max(mx, s(i, j));
    }
    T sum = 0;
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      const bool on = !key_mask || (*key_mask)[static_cast<std::size_t>(j)];
      const T e = on ? std::exp(s(i, j) - mx) : T(0);
      p(i, j) = e;
      sum += e;
    }
    p.row(i) /= sum;
  }
  return p;
}

// ---------------------------------------------------------------- Transformer block

/// Pre-norm encoder block: x + Attn(LN(x)), then + FFN(LN(.)) with GELU.
template <class T>
struct TransformerBlock {
  using Scalar = T;
  LayerNorm<T> ln1;
  Linear<T> qkv;
  Linear<T> proj;
  LayerNorm<T> ln2;
  Linear<T> ff1;
  Linear<T> ff2;
  int n_heads = 1;

  struct Cache {
    Mat<T> x;
    typename LayerNorm<T>::Cache ln1;
    Mat<T> h1, qkv;
    std::vector<Mat<T>> probs;  // per head, T x T
    Mat<T> attn;                // concatenated head outputs
    Mat<T> drop1;
    Mat<T> x2;
    typename LayerNorm<T>::Cache ln2;
    Mat<T> h2, z1, g;
    Mat<T> drop2;
  };

  TransformerBlock() = default;
  TransformerBlock(int d_model, int heads, int ffn_dim)
      : ln1(d_model),
        qkv(d_model, 3 * d_model),
        proj(d_model, d_model),
        ln2(d_model),
        ff1(d_model, ffn_dim),
        ff2(ffn_dim, d_model),
        n_heads(heads) {}

  int d_model() const { return proj.out(); }

  void init(Rng& rng) {
    ln1.init(rng);
    qkv.init(rng);
    proj.init(rng);
    ln2.init(rng);
    ff1.init(rng);
    ff2.init(rng);
  }

  template <class F>
  void for_each(const std::string& prefix, F&& f) {
    ln1.for_each(prefix + "ln1.", f);
    qkv.for_each(prefix + "qkv.", f);
    proj.for_each(prefix + "proj.", f);
    ln2.for_each(prefix + "ln2.", f);
    ff1.for_each(prefix + "ff1.", f);
    ff2.for_each(prefix + "ff2.", f);
  }

  /// rng non-null enables dropout. probs_out, when given, receives the
  /// post-softmax attention of every head.
  Mat<T> forward(const Mat<T>& x, const std::vector<bool>* key_mask, double dropout, Rng* rng,
                 Cache* cache, std::vector<Mat<T>>* probs_out = nullptr) const {
    const int d = d_model();
    const int dh = d / n_heads;
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    const auto n = x.rows();

    typename LayerNorm<T>::Cache c1;
    Mat<T> h1 = ln1.forward(x, cache ? &c1 : nullptr);
    Mat<T> qkv_out = qkv.forward(h1);
    Mat<T> attn(n, d);
    std::vector<Mat<T>> probs;
    for (int h = 0; h < n_heads; ++h) {
      const auto q = qkv_out.middleCols(h * dh, dh);
      const auto k = qkv_out.middleCols(d + h * dh, dh);
      const auto v = qkv_out.middleCols(2 * d + h * dh, dh);
      Mat<T> s = (q * k.transpose()) * scale;
      Mat<T> p = softmax_rows(s, key_mask);
      attn.middleCols(h * dh, dh).noalias() = p * v;
      probs.push_back(std::move(p));
    }
    Mat<T> a = proj.forward(attn);
    Mat<T> m1 = dropout_mask<T>(a.rows(), a.cols(), dropout, rng);
    Mat<T> x2 = x + apply_mask(a, m1);

    typename LayerNorm<T>::Cache c2;
    Mat<T> h2 = ln2.forward(x2, cache ? &c2 : nullptr);
    Mat<T> z1 = ff1.forward(h2);
    Mat<T> g = gelu(z1);
    Mat<T> z2 = ff2.forward(g);
    Mat<T> m2 = dropout_mask<T>(z2.rows(), z2.cols(), dropout, rng);
    Mat<T> y = x2 + apply_mask(z2, m2);

    if (probs_out) *probs_out = probs;
    if (cache) {
      cache->x = x;
      cache->ln1 = std::move(c1);
      cache->h1 = std::move(h1);
      cache->qkv = std::move(qkv_out);
      cache->probs = std::move(probs);
      cache->attn = std::move(attn);
      cache->drop1 = std::move(m1);
      cache->x2 = std::move(x2);
      cache->ln2 = std::move(c2);
      cache->h2 = std::move(h2);
      cache->z1 = std::move(z1);
      cache->g = std::move(g);
      cache->drop2 = std::move(m2);
    }
    return y;
  }

  Mat<T> backward(TransformerBlock& grad, const Cache& c, const Mat<T>& dy) const {
    const int d = d_model();
    const int dh = d / n_heads;
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

    // FFN branch
    Mat<T> dz2 = apply_mask(dy, c.drop2);
    Mat<T> dg = ff2.backward(grad.ff2, c.g, dz2);
    Mat<T> dz1 = gelu_backward(c.z1, dg);
    Mat<T> dh2 = ff1.backward(grad.ff1, c.h2, dz1);
    Mat<T> dx2 = dy + ln2.backward(grad.ln2, c.ln2, dh2);

    // Attention branch
    Mat<T> da = apply_mask(dx2, c.drop1);
    Mat<T> dattn = proj.backward(grad.proj, c.attn, da);
    Mat<T> dqkv(c.qkv.rows(), c.qkv.cols());
    for (int h = 0; h < n_heads; ++h) {
      const auto q = c.qkv.middleCols(h * dh, dh);
      const auto k = c.qkv.middleCols(d + h * dh, dh);
      const auto v = c.qkv.middleCols(2 * d + h * dh, dh);
      const Mat<T>& p = c.probs[static_cast<std::size_t>(h)];
      const auto dout = dattn.middleCols(h * dh, dh);
      Mat<T> dp = dout * v.transpose();
      dqkv.middleCols(2 * d + h * dh, dh).noalias() = p.transpose() * dout;
      Mat<T> ds = p.cwiseProduct(dp);
      const Eigen::Matrix<T, Eigen::Dynamic, 1> row_dot = ds.rowwise().sum();
      ds -= p.cwiseProduct(row_dot.replicate(1, p.cols()));
      ds *= scale;
      dqkv.middleCols(h * dh, dh).noalias() = ds * k;
      dqkv.middleCols(d + h * dh, dh).noalias() = ds.transpose() * q;
    }
    Mat<T> dh1 = qkv.backward(grad.qkv, c.h1, dqkv);
    return dx2 + ln1.backward(grad.ln1, c.ln1, dh1);
  }
};

}  // namespace soda::nn
