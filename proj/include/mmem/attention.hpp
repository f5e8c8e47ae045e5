#pragma once

#include <Eigen/Dense>

#include "mmem/autodiff.hpp"

namespace mmem {

// Single-head softmax(Q K^T / sqrt(d)) V.
ad::Var exact_attention(ad::Var q, ad::Var k, ad::Var v);

// Nystrom approximation F * pinv(A) * (B V) with landmarks taken as means of
// contiguous token segments (segment length ceil(n / n_landmarks)). Always
// approximates, even when there are as many landmarks as tokens.
ad::Var nystrom_attention_approx(ad::Var q, ad::Var k, ad::Var v, Eigen::Index n_landmarks,
                                 int pinv_iters);

// As above, but falls back to exact attention when n <= n_landmarks.
ad::Var nystrom_attention(ad::Var q, ad::Var k, ad::Var v, Eigen::Index n_landmarks, int pinv_iters);

// Matrix-valued conveniences (no gradients recorded beyond a scratch tape).
Eigen::MatrixXd exact_attention(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k,
                                const Eigen::MatrixXd& v);
Eigen::MatrixXd nystrom_attention(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k,
                                  const Eigen::MatrixXd& v, Eigen::Index n_landmarks, int pinv_iters);
Eigen::MatrixXd nystrom_attention_approx(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k,
                                         const Eigen::MatrixXd& v, Eigen::Index n_landmarks,
                                         int pinv_iters);

// Newton-Schulz style iterative Moore-Penrose pseudo-inverse.
ad::Var iterative_pinv(ad::Var a, int iters);
Eigen::MatrixXd iterative_pinv(const Eigen::MatrixXd& a, int iters);

}  // namespace mmem
