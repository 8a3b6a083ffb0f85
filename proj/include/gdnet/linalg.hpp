#pragma once

#include <utility>

#include "gdnet/ops.hpp"

namespace gdnet {

namespace detail {

// Thin Householder QR on raw row-major data. A is n×d, m = min(n,d);
// outputs Q n×m with orthonormal columns and R m×d upper-triangular.
// Sign convention: diagonal of R is nonnegative, which makes the
// factorization unique (hence deterministic) for full-rank input.
template <typename T>
void householder_qr(const T* a, std::size_t n, std::size_t d, std::vector<T>& q,
                    std::vector<T>& r) {
  const std::size_t m = std::min(n, d);
  std::vector<T> work(a, a + n * d);  // reduced in place to R
  std::vector<T> vs(m * n, T(0));     // reflector j lives in vs[j*n + j..n)

  for (std::size_t j = 0; j < m; ++j) {
    T norm2 = 0;
    for (std::size_t i = j; i < n; ++i) norm2 += work[i * d + j] * work[i * d + j];
    const T norm = std::sqrt(norm2);
    if (norm == T(0)) continue;  // column already zero below; reflector is identity
    const T x0 = work[j * d + j];
    const T alpha = x0 >= T(0) ? -norm : norm;
    T* v = vs.data() + j * n;
    for (std::size_t i = j; i < n; ++i) v[i] = work[i * d + j];
    v[j] -= alpha;
    T vnorm2 = 0;
    for (std::size_t i = j; i < n; ++i) vnorm2 += v[i] * v[i];
    if (vnorm2 == T(0)) continue;
    const T beta = T(2) / vnorm2;
    // apply H = I - beta v vᵀ to remaining columns
    for (std::size_t c = j; c < d; ++c) {
      T dot = 0;
      for (std::size_t i = j; i < n; ++i) dot += v[i] * work[i * d + c];
      dot *= beta;
      for (std::size_t i = j; i < n; ++i) work[i * d + c] -= dot * v[i];
    }
    work[j * d + j] = alpha;
    for (std::size_t i = j + 1; i < n; ++i) work[i * d + j] = T(0);
  }

  r.assign(m * d, T(0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t c = i; c < d; ++c) r[i * d + c] = work[i * d + c];

  // Q = H_0 ... H_{m-1} applied to the first m columns of the identity.
  q.assign(n * m, T(0));
  for (std::size_t c = 0; c < m; ++c) q[c * m + c] = T(1);
  for (std::size_t j = m; j-- > 0;) {
    const T* v = vs.data() + j * n;
    T vnorm2 = 0;
    for (std::size_t i = j; i < n; ++i) vnorm2 += v[i] * v[i];
    if (vnorm2 == T(0)) continue;
    const T beta = T(2) / vnorm2;
    for (std::size_t c = 0; c < m; ++c) {
      T dot = 0;
      for (std::size_t i = j; i < n; ++i) dot += v[i] * q[i * m + c];
      dot *= beta;
      for (std::size_t i = j; i < n; ++i) q[i * m + c] -= dot * v[i];
    }
  }

  // enforce nonnegative diagonal of R
  for (std::size_t i = 0; i < m; ++i) {
    if (r[i * d + i] < T(0)) {
      for (std::size_t c = i; c < d; ++c) r[i * d + c] = -r[i * d + c];
      for (std::size_t row = 0; row < n; ++row) q[row * m + i] = -q[row * m + i];
    }
  }
}

}  // namespace detail

/// Thin QR of a 2-D tensor. Differentiable for n ≥ d via the standard
/// reduced-QR backward identity; gradients are unreliable near rank
/// deficiency (R diagonal within ~1e-6 relative of zero).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> qr_decompose(const Tensor<T>& a) {
  auto an = a.node();
  if (an->shape.size() != 2)
    fail("qr_decompose", "expects a 2-D matrix, got " + shape_str(an->shape));
  const std::size_t n = an->shape[0], d = an->shape[1];
  if (n == 0 || d == 0) fail("qr_decompose", "empty matrix");
  for (T v : an->value)
    if (!std::isfinite(double(v))) fail("qr_decompose", "non-finite input entry");
  const std::size_t m = std::min(n, d);
  std::vector<T> qv, rv;
  detail::householder_qr(an->value.data(), n, d, qv, rv);
  if (an->requires_grad && n < d)
    fail("qr_decompose", "backward is only defined for n >= d");

  // Pack Q and R into one node so a single backward closure sees both
  // cotangents; Q and R views are plain slices of the packed buffer.
  std::vector<T> packed(n * m + m * d);
  std::copy(qv.begin(), qv.end(), packed.begin());
  std::copy(rv.begin(), rv.end(), packed.begin() + n * m);

  auto backprop = [n, d, m](TensorNode<T>& nd) {
    // thin-QR backward (n >= d, m == d):
    //   M  = R·dRᵀ − dQᵀ·Q
    //   W  = dQ + Q·(tril(M) + tril(M,-1)ᵀ)
    //   dA = W·R⁻ᵀ   (row-wise triangular solve)
    auto& pa = *nd.parents[0];
    const T* q = nd.value.data();
    const T* r = nd.value.data() + n * m;
    const T* dq = nd.grad.data();
    const T* dr = nd.grad.data() + n * m;

    std::vector<T> M(d * d, T(0));
    detail::gemm_nt(r, dr, M.data(), d, d, d);          // R·dRᵀ
    std::vector<T> QtdQ(d * d, T(0));
    detail::gemm_tn(dq, q, QtdQ.data(), d, n, d);       // dQᵀ·Q
    for (std::size_t i = 0; i < d * d; ++i) M[i] -= QtdQ[i];

    std::vector<T> H(d * d, T(0));
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j <= i; ++j) {
        H[i * d + j] = M[i * d + j];
        if (j < i) H[j * d + i] = M[i * d + j];
      }

    std::vector<T> W(dq, dq + n * d);
    detail::gemm_nn(q, H.data(), W.data(), n, d, d);

    // solve R·aᵀ = wᵀ for each row of W, accumulate into dA
    for (std::size_t row = 0; row < n; ++row) {
      const T* w = W.data() + row * d;
      std::vector<T> x(d);
      for (std::size_t j = d; j-- > 0;) {
        T acc = w[j];
        for (std::size_t k = j + 1; k < d; ++k) acc -= r[j * d + k] * x[k];
        x[j] = acc / r[j * d + j];
      }
      for (std::size_t j = 0; j < d; ++j) pa.grad[row * d + j] += x[j];
    }
  };

  Tensor<T> packed_t(detail::make_node<T>("qr", {n * m + m * d}, std::move(packed),
                                          {an}, backprop));
  Tensor<T> Q = reshape(slice(packed_t, 0, 0, n * m), {n, m});
  Tensor<T> R = reshape(slice(packed_t, 0, n * m, n * m + m * d), {m, d});
  return {Q, R};
}

/// Numerical rank of an upper-triangular factor: diagonal entries above
/// rel_tol times the largest diagonal magnitude.
template <typename T>
std::size_t numerical_rank(const Tensor<T>& r, double rel_tol) {
  const Shape& s = r.shape();
  if (s.size() != 2) fail("numerical_rank", "expects a 2-D matrix");
  const std::size_t m = std::min(s[0], s[1]);
  T mx = 0;
  for (std::size_t i = 0; i < m; ++i) mx = std::max(mx, std::abs(r.data()[i * s[1] + i]));
  std::size_t rank = 0;
  for (std::size_t i = 0; i < m; ++i)
    if (std::abs(r.data()[i * s[1] + i]) > T(rel_tol) * mx) ++rank;
  return rank;
}

/// Inverse of an upper-triangular matrix by back substitution.
/// Differentiable: d(U⁻¹) pulls back as −Yᵀ·G·Yᵀ restricted to the
/// upper triangle (the lower triangle is never read).
template <typename T>
Tensor<T> triangular_inverse(const Tensor<T>& u) {
  auto un = u.node();
  if (un->shape.size() != 2 || un->shape[0] != un->shape[1])
    fail("triangular_inverse", "expects a square matrix, got " + shape_str(un->shape));
  const std::size_t d = un->shape[0];
  std::vector<T> y(d * d, T(0));
  for (std::size_t i = 0; i < d; ++i)
    if (un->value[i * d + i] == T(0))
      fail("triangular_inverse", "zero diagonal entry at " + std::to_string(i));
  for (std::size_t col = 0; col < d; ++col) {
    for (std::size_t i = d; i-- > 0;) {
      T acc = (i == col) ? T(1) : T(0);
      for (std::size_t k = i + 1; k < d; ++k) acc -= un->value[i * d + k] * y[k * d + col];
      y[i * d + col] = acc / un->value[i * d + i];
    }
  }
  auto backprop = [d](TensorNode<T>& nd) {
    auto& p = *nd.parents[0];
    std::vector<T> t1(d * d, T(0)), t2(d * d, T(0));
    detail::gemm_tn(nd.value.data(), nd.grad.data(), t1.data(), d, d, d);  // Yᵀ·G
    detail::gemm_nt(t1.data(), nd.value.data(), t2.data(), d, d, d);       // ·Yᵀ
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i; j < d; ++j) p.grad[i * d + j] -= t2[i * d + j];
  };
  return Tensor<T>(detail::make_node<T>("triangular_inverse", un->shape, std::move(y),
                                        {un}, backprop));
}

/// Truncated Neumann-series approximation of G⁻¹ for SPD G, built entirely
/// from differentiable tensor ops so gradients flow through it.
///
/// The series is Σ_j Tʲ with T = I − G/α. The scale α is a Rayleigh-quotient
/// estimate of the largest eigenvalue (power iteration, in-graph), and the
/// partial sum is evaluated by repeated squaring, so K squaring stages give
/// a 2^(K+1)-term partial sum. For G = α·I the estimate is exact, T vanishes
/// and the result is (1/α)·I at any K.
template <typename T>
Tensor<T> neumann_inverse(const Tensor<T>& g, int terms) {
  auto gn = g.node();
  if (gn->shape.size() != 2 || gn->shape[0] != gn->shape[1])
    fail("neumann_inverse", "expects a square matrix, got " + shape_str(gn->shape));
  if (terms < 0) fail("neumann_inverse", "term count must be nonnegative");
  const std::size_t r = gn->shape[0];
  for (std::size_t i = 0; i < r; ++i) {
    if (!(gn->value[i * r + i] > T(0)))
      fail("neumann_inverse", "diagonal must be strictly positive");
    for (std::size_t j = i + 1; j < r; ++j) {
      const T a = gn->value[i * r + j], b = gn->value[j * r + i];
      const T scale = std::max<T>(T(1), std::max(std::abs(a), std::abs(b)));
      if (std::abs(a - b) > T(1e-5) * scale)
        fail("neumann_inverse", "matrix is not symmetric");
    }
  }

  // largest-eigenvalue estimate by in-graph power iteration
  Tensor<T> v = Tensor<T>::full({r, 1}, T(1));
  for (int it = 0; it < 12; ++it) {
    Tensor<T> gv = matmul(g, v);
    Tensor<T> nrm = sqrt(sum(mul(gv, gv)));
    v = div(gv, broadcast_to(nrm, Shape{r, 1}));
  }
  Tensor<T> gv = matmul(g, v);
  Tensor<T> alpha = div(sum(mul(v, gv)), sum(mul(v, v)));

  Tensor<T> eye = identity_matrix<T>(r);
  Tensor<T> t = sub(eye, div(g, broadcast_to(alpha, Shape{r, r})));
  Tensor<T> s = add(eye, t);
  Tensor<T> p = t;
  for (int k = 0; k < terms; ++k) {
    p = matmul(p, p);
    s = add(s, matmul(s, p));
  }
  return div(s, broadcast_to(alpha, Shape{r, r}));
}

enum class InverseMode { exact_solve, neumann };

/// Least-squares reconstruction coefficients R = (B̂ᵀB̂)⁻¹B̂ᵀX, minimizing
/// ‖X − B̂R‖_F. B̂ must have full column rank; callers with rank-deficient
/// bases must truncate through build_projection first.
template <typename T>
Tensor<T> reconstruction_coefficients(const Tensor<T>& x, const Tensor<T>& basis,
                                      InverseMode mode = InverseMode::exact_solve,
                                      int neumann_terms = 6,
                                      double rank_rel_tol = 1e-6) {
  if (x.shape().size() != 2 || basis.shape().size() != 2)
    fail("reconstruction_coefficients", "expects 2-D matrices");
  if (x.shape()[0] != basis.shape()[0])
    fail("reconstruction_coefficients",
         "row mismatch: X " + shape_str(x.shape()) + " vs basis " + shape_str(basis.shape()));
  auto [q, rfac] = qr_decompose(basis);
  const std::size_t d = basis.shape()[1];
  if (numerical_rank(rfac, rank_rel_tol) < d)
    fail("reconstruction_coefficients",
         "basis is rank-deficient; truncate it (e.g. via build_projection) first");
  Tensor<T> bt_x = matmul(transpose(basis), x);
  Tensor<T> ginv;
  if (mode == InverseMode::exact_solve) {
    Tensor<T> rinv = triangular_inverse(rfac);
    ginv = matmul(rinv, transpose(rinv));
  } else {
    ginv = neumann_inverse(matmul(transpose(basis), basis), neumann_terms);
  }
  return matmul(ginv, bt_x);
}

/// Learned low-rank basis and the projector onto its range.
template <typename T>
struct ProjectionOperator {
  Tensor<T> basis;       // B̂ = Q_r·R_r, n×d, rank r
  std::size_t rank = 0;  // numerical rank r
  Tensor<T> projection;  // P̂, n×n
  int neumann_terms = 6;
  InverseMode mode = InverseMode::exact_solve;
};

/// Builds the projector P̂ = B̂(B̂ᵀB̂)⁻¹B̂ᵀ onto the column space of B after
/// QR-based rank truncation. The Gram inverse runs on the full-rank
/// representative C = Q_r·R[0:r,0:r], so both inverse modes always see an
/// SPD matrix; the result equals Q_r·Q_rᵀ up to the mode tolerance.
template <typename T>
ProjectionOperator<T> build_projection(const Tensor<T>& b, double rank_rel_tol = 1e-6,
                                       int neumann_terms = 6,
                                       InverseMode mode = InverseMode::exact_solve) {
  if (b.shape().size() != 2) fail("build_projection", "expects a 2-D matrix");
  const std::size_t n = b.shape()[0], d = b.shape()[1];
  if (d >= n)
    fail("build_projection", "basis must be thin (d < n), got " + shape_str(b.shape()));
  auto [q, rfac] = qr_decompose(b);
  const std::size_t rank = numerical_rank(rfac, rank_rel_tol);
  if (rank == 0) fail("build_projection", "basis has rank 0 (all columns negligible)");

  Tensor<T> q_r = rank == d ? q : slice(q, 1, 0, rank);
  Tensor<T> r_r = rank == d ? rfac : slice(rfac, 0, 0, rank);
  Tensor<T> r_sq = rank == d ? rfac : slice(r_r, 1, 0, rank);  // leading r×r block

  ProjectionOperator<T> op;
  op.basis = matmul(q_r, r_r);
  op.rank = rank;
  op.neumann_terms = neumann_terms;
  op.mode = mode;

  Tensor<T> c = matmul(q_r, r_sq);
  Tensor<T> ginv;
  if (mode == InverseMode::exact_solve) {
    Tensor<T> rinv = triangular_inverse(r_sq);
    ginv = matmul(rinv, transpose(rinv));
  } else {
    ginv = neumann_inverse(matmul(transpose(c), c), neumann_terms);
  }
  op.projection = matmul(matmul(c, ginv), transpose(c));
  return op;
}

/// F_lrd = P̂·F. Differentiable end-to-end through the operator.
template <typename T>
Tensor<T> project(const ProjectionOperator<T>& op, const Tensor<T>& features) {
  if (features.shape().size() != 2 ||
      features.shape()[0] != op.projection.shape()[0])
    fail("project", "feature rows " + shape_str(features.shape()) +
                        " do not match operator dimension " +
                        shape_str(op.projection.shape()));
  return matmul(op.projection, features);
}

}  // namespace gdnet
