#pragma once

// Losses over logit vectors. Written against Eigen::MatrixBase so they accept
// any dense column expression of any floating scalar.

#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "priorshift/errors.hpp"

namespace priorshift {

/// Lowest index among the maxima.
template <typename Derived>
Eigen::Index argmaxLowest(const Eigen::MatrixBase<Derived>& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

/// log(1 + exp(x)) without overflow.
template <typename Scalar>
Scalar softplus(Scalar x) {
  using std::abs, std::exp, std::log1p, std::max;
  return max(x, Scalar(0)) + log1p(exp(-abs(x)));
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  using std::exp;
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-x));
  const Scalar e = exp(x);
  return e / (Scalar(1) + e);
}

namespace detail {

template <typename DerivedZ, typename DerivedA>
void checkLossInputs(const Eigen::MatrixBase<DerivedZ>& logits, const Eigen::MatrixBase<DerivedA>& target,
                     const char* name) {
  if (logits.size() != target.size() || logits.size() == 0)
    throw ValidationError(std::string(name) + ": logits and targets must be nonempty and equally long");
  if (!logits.allFinite() || !target.allFinite())
    throw ValidationError(std::string(name) + ": non-finite input");
}

}  // namespace detail

/// Mean over answers of -a log s(z) - (1 - a) log(1 - s(z)).
template <typename DerivedZ, typename DerivedA>
typename DerivedZ::Scalar lossBce(const Eigen::MatrixBase<DerivedZ>& logits,
                                  const Eigen::MatrixBase<DerivedA>& target) {
  using Scalar = typename DerivedZ::Scalar;
  detail::checkLossInputs(logits, target, "lossBce");
  Scalar total(0);
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const Scalar z = logits[i];
    const Scalar a = static_cast<Scalar>(target[i]);
    // -log s(z) = softplus(-z), -log(1 - s(z)) = softplus(z)
    total += a * softplus(-z) + (Scalar(1) - a) * softplus(z);
  }
  return total / static_cast<Scalar>(logits.size());
}

/// d lossBce / d logits = (s(z) - a) / K.
template <typename DerivedZ, typename DerivedA>
Eigen::Matrix<typename DerivedZ::Scalar, Eigen::Dynamic, 1> lossBceGradient(
    const Eigen::MatrixBase<DerivedZ>& logits, const Eigen::MatrixBase<DerivedA>& target) {
  using Scalar = typename DerivedZ::Scalar;
  detail::checkLossInputs(logits, target, "lossBceGradient");
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> g(logits.size());
  const Scalar inv_k = Scalar(1) / static_cast<Scalar>(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i)
    g[i] = (sigmoid(Scalar(logits[i])) - static_cast<Scalar>(target[i])) * inv_k;
  return g;
}

/// Numerically stable softmax.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const Scalar shift = logits.maxCoeff();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> p = (logits.array() - shift).exp().matrix();
  return p / p.sum();
}

/// softmax(z)[k] with k the (lowest) argmax of the target scores.
template <typename DerivedZ, typename DerivedA>
typename DerivedZ::Scalar lossAux(const Eigen::MatrixBase<DerivedZ>& logits,
                                  const Eigen::MatrixBase<DerivedA>& target) {
  detail::checkLossInputs(logits, target, "lossAux");
  return softmax(logits)[argmaxLowest(target)];
}

/// d lossAux / d z_j = p_k (delta_jk - p_j).
template <typename DerivedZ, typename DerivedA>
Eigen::Matrix<typename DerivedZ::Scalar, Eigen::Dynamic, 1> lossAuxGradient(
    const Eigen::MatrixBase<DerivedZ>& logits, const Eigen::MatrixBase<DerivedA>& target) {
  detail::checkLossInputs(logits, target, "lossAuxGradient");
  const auto k = argmaxLowest(target);
  auto p = softmax(logits);
  const auto pk = p[k];
  Eigen::Matrix<typename DerivedZ::Scalar, Eigen::Dynamic, 1> g = -pk * p;
  g[k] += pk;
  return g;
}

/// Copy of `scores` with the (lowest-index) maximum set to -infinity.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> maskTop(const Eigen::MatrixBase<Derived>& scores) {
  using Scalar = typename Derived::Scalar;
  if (scores.size() < 2) throw ValidationError("maskTop: needs at least two answers");
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out = scores;
  out[argmaxLowest(scores)] = -std::numeric_limits<Scalar>::infinity();
  return out;
}

}  // namespace priorshift
