#pragma once

#include <Eigen/Core>

#include <cmath>
#include <string>
#include <vector>

#include "soda/rng.hpp"

namespace soda::nn {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
struct TensorRef {
  std::string name;
  Mat<T>* value;
};

template <class T>
struct ConstTensorRef {
  std::string name;
  const Mat<T>* value;
};

/// Flat, ordered view over every tensor of a parameter struct. Structs expose
/// `for_each(prefix, f)` with f(name, Mat&).
template <class P>
auto tensors(P& params) {
  using T = typename P::Scalar;
  std::vector<TensorRef<T>> out;
  params.for_each("", [&](const std::string& name, Mat<T>& m) { out.push_back({name, &m}); });
  return out;
}

template <class P>
auto tensors(const P& params) {
  using T = typename P::Scalar;
  std::vector<ConstTensorRef<T>> out;
  const_cast<P&>(params).for_each("", [&](const std::string& name, Mat<T>& m) {
    out.push_back({name, &m});
  });
  return out;
}

template <class P>
std::size_t parameter_count(const P& params) {
  std::size_t n = 0;
  for (const auto& t : tensors(params)) n += static_cast<std::size_t>(t.value->size());
  return n;
}

/// Same shapes, all zeros.
template <class P>
P zeros_like(const P& params) {
  P out = params;
  for (auto& t : tensors(out)) t.value->setZero();
  return out;
}

/// Casts every tensor to another scalar type; To must be default-constructible
/// with the same layout as From (same template, different scalar).
template <class To, class From>
To cast_params(const From& from, To to) {
  auto dst = tensors(to);
  auto src = tensors(from);
  for (std::size_t i = 0; i < dst.size(); ++i) {
    *dst[i].value = src[i].value->template cast<typename To::Scalar>();
  }
  return to;
}

template <class T>
void init_uniform(Mat<T>& m, Rng& rng, double bound) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
}

template <class P>
bool all_finite(const P& params) {
  for (const auto& t : tensors(params)) {
    if (!t.value->allFinite()) return false;
  }
  return true;
}

}  // namespace soda::nn
