#pragma once

// Independent reference computations used by the tests. Nothing here calls
// the library's loss, metric or backprop code.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "weakpair/encoder.hpp"

namespace oracle {

/// -(1/n) sum_i log(exp(S_ii) / sum_j exp(S_ij)) with S = scale * cos,
/// every score materialized with plain loops.
inline double mn_loss(const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::VectorXd>& p,
                      double scale) {
  const std::size_t n = a.size();
  auto cosine = [](const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
    double dot = 0, uu = 0, vv = 0;
    for (Eigen::Index k = 0; k < u.size(); ++k) {
      dot += u[k] * v[k];
      uu += u[k] * u[k];
      vv += v[k] * v[k];
    }
    return dot / (std::sqrt(uu) * std::sqrt(vv));
  };
  std::vector<std::vector<double>> s(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s[i][j] = scale * cosine(a[i], p[j]);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double denom = 0;
    for (std::size_t j = 0; j < n; ++j) denom += std::exp(s[i][j]);
    total += -std::log(std::exp(s[i][i]) / denom);
  }
  return total / static_cast<double>(n);
}

inline double dcg_direct(const std::vector<double>& rel) {
  double sum = 0;
  for (std::size_t k = 1; k <= rel.size(); ++k) sum += rel[k - 1] / std::log2(static_cast<double>(k) + 1.0);
  return sum;
}

/// nDCG whose normalizer is the maximum DCG over every ordering.
inline double ndcg_exhaustive(const std::vector<double>& rel) {
  std::vector<double> perm = rel;
  std::sort(perm.begin(), perm.end());
  double best = 0;
  do {
    best = std::max(best, dcg_direct(perm));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return dcg_direct(rel) / best;
}

/// Raw-moment form of Pearson's r.
inline double pearson_definition(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  long double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxy += static_cast<long double>(x[i]) * y[i];
    sxx += static_cast<long double>(x[i]) * x[i];
    syy += static_cast<long double>(y[i]) * y[i];
  }
  const long double num = n * sxy - sx * sy;
  const long double den = std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
  return static_cast<double>(num / den);
}

/// Expected nDCG of a uniformly random ranking of `pos` relevant and `neg`
/// irrelevant candidates, by sampling permutations.
inline double random_ranking_ndcg(std::size_t pos, std::size_t neg, std::size_t draws, unsigned seed) {
  std::vector<double> rel(pos, 1.0);
  rel.resize(pos + neg, 0.0);
  std::vector<double> ideal = rel;
  const double best = dcg_direct(ideal);
  std::mt19937 rng(seed);
  double sum = 0;
  for (std::size_t d = 0; d < draws; ++d) {
    std::shuffle(rel.begin(), rel.end(), rng);
    sum += dcg_direct(rel) / best;
  }
  return sum / static_cast<double>(draws);
}

/// Central finite differences of f over every entry of every encoder tensor.
inline weakpair::EncoderParameters numeric_gradient(weakpair::EncoderModel& model,
                                                    const std::function<double()>& f, double step) {
  weakpair::EncoderParameters grad = model.params();
  auto& params = model.mutable_params();
  auto slots = params.tensors();
  auto out = grad.tensors();
  for (std::size_t t = 0; t < slots.size(); ++t) {
    auto& m = *slots[t].second;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double saved = m(r, c);
        m(r, c) = saved + step;
        const double up = f();
        m(r, c) = saved - step;
        const double down = f();
        m(r, c) = saved;
        (*out[t].second)(r, c) = (up - down) / (2 * step);
      }
    }
  }
  return grad;
}

/// max over entries of |a - b| / max(|a|, |b|, floor).
inline double max_relative_error(const weakpair::EncoderParameters& a, const weakpair::EncoderParameters& b,
                                 double floor = 1e-6) {
  double worst = 0;
  const auto ta = a.tensors();
  const auto tb = b.tensors();
  for (std::size_t t = 0; t < ta.size(); ++t) {
    const auto& x = *ta[t].second;
    const auto& y = *tb[t].second;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double denom = std::max({std::abs(x.data()[i]), std::abs(y.data()[i]), floor});
      worst = std::max(worst, std::abs(x.data()[i] - y.data()[i]) / denom);
    }
  }
  return worst;
}

}  // namespace oracle
