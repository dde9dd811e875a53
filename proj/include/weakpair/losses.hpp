#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "weakpair/errors.hpp"

namespace weakpair {

struct TripletResult {
  double loss = 0.0;
  Eigen::VectorXd grad_anchor, grad_positive, grad_negative;
};

/// max(|a - p| - |a - n| + margin, 0) with Euclidean norms. The gradient is
/// zero wherever the hinge is not strictly active, including exactly at it.
inline TripletResult triplet_loss(const Eigen::VectorXd& anchor, const Eigen::VectorXd& positive,
                                  const Eigen::VectorXd& negative, double margin) {
  if (anchor.size() != positive.size() || anchor.size() != negative.size())
    throw UsageError("triplet_loss: dimension mismatch");
  const Eigen::VectorXd ap = anchor - positive;
  const Eigen::VectorXd an = anchor - negative;
  const double d_ap = ap.norm();
  const double d_an = an.norm();
  const double value = d_ap - d_an + margin;

  TripletResult r;
  r.grad_anchor = Eigen::VectorXd::Zero(anchor.size());
  r.grad_positive = Eigen::VectorXd::Zero(anchor.size());
  r.grad_negative = Eigen::VectorXd::Zero(anchor.size());
  if (value <= 0.0) return r;
  r.loss = value;
  // Subgradient 0 for a distance term at zero distance.
  if (d_ap > 0.0) {
    r.grad_anchor += ap / d_ap;
    r.grad_positive -= ap / d_ap;
  }
  if (d_an > 0.0) {
    r.grad_anchor -= an / d_an;
    r.grad_negative += an / d_an;
  }
  return r;
}

enum class Similarity { cosine, dot };

struct MultipleNegativesResult {
  double loss = 0.0;
  std::vector<Eigen::VectorXd> grad_anchors, grad_positives;
};

/// In-batch softmax loss: scores S[i][j] = scale * sim(a_i, p_j), loss =
/// -(1/n) sum_i log softmax(S[i])[i]. Every (a_i, p_j), i != j, is a negative.
inline MultipleNegativesResult mn_loss(std::span<const Eigen::VectorXd> anchors,
                                       std::span<const Eigen::VectorXd> positives, double scale,
                                       Similarity similarity = Similarity::cosine) {
  const auto n = anchors.size();
  if (n == 0 || positives.size() != n) throw UsageError("mn_loss: need n >= 1 anchors and n positives");
  const auto dim = anchors[0].size();
  for (std::size_t i = 0; i < n; ++i) {
    if (anchors[i].size() != dim || positives[i].size() != dim)
      throw UsageError("mn_loss: dimension mismatch");
  }

  // Unit vectors and norms (cosine) or raw vectors (dot).
  std::vector<Eigen::VectorXd> ua(n), up(n);
  std::vector<double> na(n, 1.0), np(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (similarity == Similarity::cosine) {
      na[i] = anchors[i].norm();
      np[i] = positives[i].norm();
      if (na[i] == 0.0 || np[i] == 0.0)
        throw NumericError("mn_loss: zero-norm embedding, cosine undefined");
      ua[i] = anchors[i] / na[i];
      up[i] = positives[i] / np[i];
    } else {
      ua[i] = anchors[i];
      up[i] = positives[i];
    }
  }

  const auto ni = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd sim(ni, ni);
  for (Eigen::Index i = 0; i < ni; ++i)
    for (Eigen::Index j = 0; j < ni; ++j) sim(i, j) = ua[i].dot(up[j]);
  const Eigen::MatrixXd scores = scale * sim;

  MultipleNegativesResult r;
  Eigen::MatrixXd g_scores(ni, ni);
  for (Eigen::Index i = 0; i < ni; ++i) {
    const double mx = scores.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (scores.row(i).array() - mx).exp().matrix();
    const double z = e.sum();
    r.loss -= scores(i, i) - mx - std::log(z);
    g_scores.row(i) = e / z;
    g_scores(i, i) -= 1.0;
  }
  r.loss /= static_cast<double>(n);
  g_scores *= scale / static_cast<double>(n);

  r.grad_anchors.assign(n, Eigen::VectorXd::Zero(dim));
  r.grad_positives.assign(n, Eigen::VectorXd::Zero(dim));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double g = g_scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (similarity == Similarity::cosine) {
        const double c = sim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        r.grad_anchors[i] += g * (up[j] - c * ua[i]) / na[i];
        r.grad_positives[j] += g * (ua[i] - c * up[j]) / np[j];
      } else {
        r.grad_anchors[i] += g * up[j];
        r.grad_positives[j] += g * ua[i];
      }
    }
  }
  return r;
}

}  // namespace weakpair
