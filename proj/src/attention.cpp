#include "mmem/attention.hpp"

#include <cmath>

#include "mmem/error.hpp"

namespace mmem {

namespace {

void check_qkv(ad::Var q, ad::Var k, ad::Var v) {
  if (q.rows() < 1) throw PreconditionError("attention: empty token sequence");
  if (k.rows() != q.rows() || v.rows() != q.rows() || k.cols() != q.cols()) {
    throw PreconditionError("attention: Q/K/V shape mismatch");
  }
}

ad::Var check_finite(ad::Var x, const char* what) {
  if (!x.value().allFinite()) {
    throw NumericalError(std::string("attention: non-finite values in ") + what);
  }
  return x;
}

}  // namespace

ad::Var exact_attention(ad::Var q, ad::Var k, ad::Var v) {
  check_qkv(q, k, v);
  const double s = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  ad::Var logits = check_finite(ad::scale(ad::matmul(q, ad::transpose(k)), s), "attention logits");
  return ad::matmul(ad::softmax_rows(logits), v);
}

ad::Var iterative_pinv(ad::Var a, int iters) {
  ad::Var z = ad::pinv_init(a);
  for (int i = 0; i < iters; ++i) {
    ad::Var az = ad::matmul(a, z);
    ad::Var t = ad::affine_identity(az, 7.0, -1.0);
    t = ad::affine_identity(ad::matmul(az, t), 15.0, -1.0);
    t = ad::affine_identity(ad::matmul(az, t), 13.0, -1.0);
    z = ad::scale(ad::matmul(z, t), 0.25);
  }
  return check_finite(z, "pseudo-inverse");
}

ad::Var nystrom_attention_approx(ad::Var q, ad::Var k, ad::Var v, Eigen::Index n_landmarks,
                                 int pinv_iters) {
  check_qkv(q, k, v);
  if (n_landmarks < 1) throw PreconditionError("attention: n_landmarks must be >= 1");
  const Eigen::Index n = q.rows();
  const Eigen::Index seg = (n + n_landmarks - 1) / n_landmarks;
  const double s = 1.0 / std::sqrt(static_cast<double>(q.cols()));

  ad::Var ql = ad::segment_means(q, seg);
  ad::Var kl = ad::segment_means(k, seg);
  ad::Var f = ad::softmax_rows(check_finite(ad::scale(ad::matmul(q, ad::transpose(kl)), s), "kernel F"));
  ad::Var a = ad::softmax_rows(check_finite(ad::scale(ad::matmul(ql, ad::transpose(kl)), s), "kernel A"));
  ad::Var b = ad::softmax_rows(check_finite(ad::scale(ad::matmul(ql, ad::transpose(k)), s), "kernel B"));
  ad::Var out = ad::matmul(ad::matmul(f, iterative_pinv(a, pinv_iters)), ad::matmul(b, v));
  return check_finite(out, "attention output");
}

ad::Var nystrom_attention(ad::Var q, ad::Var k, ad::Var v, Eigen::Index n_landmarks, int pinv_iters) {
  if (q.rows() <= n_landmarks) return exact_attention(q, k, v);
  return nystrom_attention_approx(q, k, v, n_landmarks, pinv_iters);
}

Eigen::MatrixXd exact_attention(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k,
                                const Eigen::MatrixXd& v) {
  ad::Tape t;
  return exact_attention(t.constant(q), t.constant(k), t.constant(v)).value();
}

Eigen::MatrixXd nystrom_attention(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k,
                                  const Eigen::MatrixXd& v, Eigen::Index n_landmarks, int pinv_iters) {
  ad::Tape t;
  return nystrom_attention(t.constant(q), t.constant(k), t.constant(v), n_landmarks, pinv_iters).value();
}

Eigen::MatrixXd nystrom_attention_approx(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k,
                                         const Eigen::MatrixXd& v, Eigen::Index n_landmarks,
                                         int pinv_iters) {
  ad::Tape t;
  return nystrom_attention_approx(t.constant(q), t.constant(k), t.constant(v), n_landmarks, pinv_iters)
      .value();
}

Eigen::MatrixXd iterative_pinv(const Eigen::MatrixXd& a, int iters) {
  ad::Tape t;
  return iterative_pinv(t.constant(a), iters).value();
}

}  // namespace mmem
