// QR, Neumann inverse, reconstruction coefficients and projection
// operators: closed-form examples, invariants, and gradient checks.

#include <random>

#include <catch2/catch_amalgamated.hpp>

#include "gdnet/gradcheck.hpp"
#include "gdnet/linalg.hpp"

using namespace gdnet;

namespace {

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0,
                             double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor<double>::from_data(std::move(shape), std::move(v));
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// SPD matrix with a prescribed spectral condition number
Tensor<double> spd_matrix(std::size_t r, double cond, std::uint64_t seed) {
  auto m = random_tensor({r, r}, seed);
  auto [q, rr] = qr_decompose(m);  // random orthogonal factor
  std::vector<double> g(r * r, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    const double lam = 1.0 + (cond - 1.0) * double(i) / double(r - 1);
    for (std::size_t a = 0; a < r; ++a)
      for (std::size_t b = 0; b < r; ++b)
        g[a * r + b] += q.data()[a * r + i] * lam * q.data()[b * r + i];
  }
  return Tensor<double>::from_data({r, r}, std::move(g));
}

std::vector<double> direct_inverse(const std::vector<double>& g, std::size_t r) {
  // Gauss-Jordan, plenty for r <= 16 test matrices
  std::vector<double> a(g);
  std::vector<double> inv(r * r, 0.0);
  for (std::size_t i = 0; i < r; ++i) inv[i * r + i] = 1.0;
  for (std::size_t col = 0; col < r; ++col) {
    std::size_t piv = col;
    for (std::size_t i = col + 1; i < r; ++i)
      if (std::abs(a[i * r + col]) > std::abs(a[piv * r + col])) piv = i;
    for (std::size_t j = 0; j < r; ++j) {
      std::swap(a[piv * r + j], a[col * r + j]);
      std::swap(inv[piv * r + j], inv[col * r + j]);
    }
    const double d = a[col * r + col];
    for (std::size_t j = 0; j < r; ++j) {
      a[col * r + j] /= d;
      inv[col * r + j] /= d;
    }
    for (std::size_t i = 0; i < r; ++i) {
      if (i == col) continue;
      const double f = a[i * r + col];
      for (std::size_t j = 0; j < r; ++j) {
        a[i * r + j] -= f * a[col * r + j];
        inv[i * r + j] -= f * inv[col * r + j];
      }
    }
  }
  return inv;
}

double frob(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("QR of [[3],[4]] is the classic normalized column") {
  auto a = Tensor<double>::from_data({2, 1}, {3.0, 4.0});
  auto [q, r] = qr_decompose(a);
  REQUIRE(q.data()[0] == Catch::Approx(0.6).margin(1e-14));
  REQUIRE(q.data()[1] == Catch::Approx(0.8).margin(1e-14));
  REQUIRE(r.data()[0] == Catch::Approx(5.0).margin(1e-14));
}

TEST_CASE("QR invariants hold on random thin matrices") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto a = random_tensor({12, 5}, seed * 7);
    auto [q, r] = qr_decompose(a);

    // orthonormal columns
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j) {
        double dot = 0;
        for (std::size_t k = 0; k < 12; ++k)
          dot += q.data()[k * 5 + i] * q.data()[k * 5 + j];
        REQUIRE(dot == Catch::Approx(i == j ? 1.0 : 0.0).margin(1e-12));
      }
    // reconstruction and nonnegative diagonal
    for (std::size_t i = 0; i < 12; ++i)
      for (std::size_t j = 0; j < 5; ++j) {
        double acc = 0;
        for (std::size_t k = 0; k < 5; ++k)
          acc += q.data()[i * 5 + k] * r.data()[k * 5 + j];
        REQUIRE(acc == Catch::Approx(a.data()[i * 5 + j]).margin(1e-12));
      }
    for (std::size_t i = 0; i < 5; ++i) REQUIRE(r.data()[i * 5 + i] >= 0.0);
    // upper-triangular
    for (std::size_t i = 1; i < 5; ++i)
      for (std::size_t j = 0; j < i; ++j)
        REQUIRE(r.data()[i * 5 + j] == 0.0);
  }
}

TEST_CASE("QR backward matches finite differences") {
  auto a = random_tensor({6, 3}, 99);
  auto w = random_tensor({6, 3}, 100);
  auto rep = gradcheck(
      [&](const Tensor<double>& x) {
        auto [q, r] = qr_decompose(x);
        return add(sum(mul(q, w)), sum(mul(r, slice(w, 0, 0, 3))));
      },
      a);
  REQUIRE(rep.pass);
}

TEST_CASE("numerical rank counts significant diagonal entries") {
  auto r1 = Tensor<double>::from_data({3, 3}, {2.0, 1.0, 0.5,  //
                                               0.0, 1e-13, 0.3,  //
                                               0.0, 0.0, 1.5});
  REQUIRE(numerical_rank(r1, 1e-6) == 2);
  auto r2 = Tensor<double>::from_data({2, 2}, {1.0, 0.0, 0.0, 1.0});
  REQUIRE(numerical_rank(r2, 1e-6) == 2);
}

TEST_CASE("triangular inverse matches the dense inverse") {
  auto u = Tensor<double>::from_data({3, 3}, {2.0, 1.0, -0.5,  //
                                              0.0, 4.0, 0.25,  //
                                              0.0, 0.0, 0.5});
  auto y = triangular_inverse(u);
  auto oracle = direct_inverse(u.data(), 3);
  REQUIRE(max_abs_diff(y.data(), oracle) < 1e-12);

  auto rep = gradcheck(
      [&](const Tensor<double>& x) {
        return sum(mul(triangular_inverse(x), x));
      },
      u);
  REQUIRE(rep.pass);
}

TEST_CASE("Neumann inverse of a scaled identity is exact at any K") {
  for (int terms : {0, 1, 6}) {
    auto g = Tensor<double>::from_data({3, 3}, {4.0, 0, 0, 0, 4.0, 0, 0, 0, 4.0});
    auto y = neumann_inverse(g, terms);
    for (std::size_t i = 0; i < 9; ++i)
      REQUIRE(y.data()[i] == Catch::Approx(i % 4 == 0 ? 0.25 : 0.0).margin(1e-12));
  }
}

TEST_CASE("Neumann error decreases monotonically and vanishes for cond <= 10") {
  for (std::uint64_t seed : {5ULL, 6ULL, 7ULL}) {
    auto g = spd_matrix(8, 10.0, seed);
    auto oracle = direct_inverse(g.data(), 8);
    // stage k sums 2^(k+1) series terms; at condition 10 the ratio is
    // rho = 0.9, so k = 6 (128 terms) leaves ~1e-6 and k = 9 is at noise
    double prev = std::numeric_limits<double>::infinity();
    for (int terms = 0; terms <= 9; ++terms) {
      std::vector<double> diff = neumann_inverse(g, terms).data();
      for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= oracle[i];
      const double err = frob(diff);
      REQUIRE(err <= prev + 1e-13);
      prev = err;
    }
    REQUIRE(prev < 1e-10);
  }
}

TEST_CASE("Neumann inverse rejects invalid Gram matrices") {
  auto asym = Tensor<double>::from_data({2, 2}, {2.0, 1.0, -1.0, 2.0});
  REQUIRE_THROWS_AS(neumann_inverse(asym, 4), Error);
  auto negdiag = Tensor<double>::from_data({2, 2}, {-1.0, 0.0, 0.0, 2.0});
  REQUIRE_THROWS_AS(neumann_inverse(negdiag, 4), Error);
  auto rect = random_tensor({2, 3}, 1);
  REQUIRE_THROWS_AS(neumann_inverse(rect, 4), Error);
}

TEST_CASE("reconstruction coefficients recover an exact decomposition") {
  auto basis = random_tensor({10, 3}, 21);
  auto coeff = random_tensor({3, 4}, 22);
  auto x = matmul(basis, coeff);
  for (auto mode : {InverseMode::exact_solve, InverseMode::neumann}) {
    auto rec = reconstruction_coefficients(x, basis, mode, 6);
    REQUIRE(max_abs_diff(rec.data(), coeff.data()) < 1e-8);
  }
}

TEST_CASE("reconstruction coefficients minimize the Frobenius residual") {
  std::mt19937_64 rng(404);
  std::normal_distribution<double> nrm(0.0, 0.1);
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    auto basis = random_tensor({8, 3}, seed * 31);
    auto x = random_tensor({8, 5}, seed * 37);
    auto rstar = reconstruction_coefficients(x, basis);
    auto residual = [&](const Tensor<double>& r) {
      auto d = sub(x, matmul(basis, r));
      return sum(mul(d, d)).item();
    };
    const double best = residual(rstar);
    for (int trial = 0; trial < 4; ++trial) {
      std::vector<double> pert = rstar.data();
      for (auto& v : pert) v += nrm(rng);
      REQUIRE(best <= residual(Tensor<double>::from_data(rstar.shape(), pert)) + 1e-12);
    }
  }
}

TEST_CASE("reconstruction coefficients reject rank-deficient bases") {
  auto col = random_tensor({6, 1}, 77);
  auto basis = concat(std::vector<Tensor<double>>{col, scalar_mul(col, 2.0)}, 1);
  auto x = random_tensor({6, 2}, 78);
  REQUIRE_THROWS_AS(reconstruction_coefficients(x, basis), Error);
}

TEST_CASE("projection operator invariants") {
  for (auto mode : {InverseMode::exact_solve, InverseMode::neumann}) {
    const double tol = mode == InverseMode::exact_solve ? 1e-10 : 1e-6;
    auto b = random_tensor({12, 4}, 55);
    auto op = build_projection(b, 1e-6, 6, mode);
    REQUIRE(op.rank == 4);
    const auto& p = op.projection.data();

    // symmetry
    for (std::size_t i = 0; i < 12; ++i)
      for (std::size_t j = 0; j < 12; ++j)
        REQUIRE(p[i * 12 + j] == Catch::Approx(p[j * 12 + i]).margin(tol));
    // idempotence
    auto p2 = matmul(op.projection, op.projection);
    REQUIRE(max_abs_diff(p2.data(), p) < tol);
    // range preservation
    auto pb = project(op, op.basis);
    REQUIRE(max_abs_diff(pb.data(), op.basis.data()) < tol);
  }
}

TEST_CASE("projector equals Q_r Q_r^T in exact mode") {
  auto b = random_tensor({10, 3}, 66);
  auto op = build_projection(b);
  auto [q, r] = qr_decompose(b);
  auto qqt = matmul(q, transpose(q));
  REQUIRE(max_abs_diff(op.projection.data(), qqt.data()) < 1e-8);
}

TEST_CASE("rank truncation keeps the projector well defined") {
  // 8 columns, one of them the sum of two others: rank 7
  auto b7 = random_tensor({16, 7}, 91);
  auto dep = add(slice(b7, 1, 0, 1), slice(b7, 1, 1, 2));
  auto b = concat(std::vector<Tensor<double>>{b7, dep}, 1);
  auto op = build_projection(b, 1e-9);
  REQUIRE(op.rank == 7);
  // still a projector onto the same 7-dimensional space
  auto p2 = matmul(op.projection, op.projection);
  REQUIRE(max_abs_diff(p2.data(), op.projection.data()) < 1e-9);
  auto pb = matmul(op.projection, b7);
  REQUIRE(max_abs_diff(pb.data(), b7.data()) < 1e-9);
}

TEST_CASE("projection suppresses isotropic noise by about r/n") {
  const std::size_t n = 64, r = 6, m = 24;
  double ratio_sum = 0;
  int count = 0;
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    auto basis = random_tensor({n, r}, seed * 3 + 1);
    auto op = build_projection(basis);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nrm(0.0, 1.0);
    std::vector<double> eps(n * m);
    for (auto& v : eps) v = nrm(rng);
    auto e = Tensor<double>::from_data({n, m}, eps);
    auto pe = project(op, e);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < n * m; ++i) {
      num += pe.data()[i] * pe.data()[i];
      den += e.data()[i] * e.data()[i];
    }
    ratio_sum += num / den;
    ++count;
  }
  const double expected = double(r) / double(n);
  const double avg = ratio_sum / count;
  REQUIRE(avg > 0.8 * expected);
  REQUIRE(avg < 1.2 * expected);
}

TEST_CASE("build_projection is differentiable in both inverse modes") {
  auto b = random_tensor({8, 3}, 201);
  auto f = random_tensor({8, 4}, 202);
  for (auto mode : {InverseMode::exact_solve, InverseMode::neumann}) {
    auto rep = gradcheck(
        [&](const std::vector<Tensor<double>>& xs) {
          auto op = build_projection(xs[0], 1e-6, 6, mode);
          return sum(mul(project(op, xs[1]), xs[1]));
        },
        {b, f});
    INFO((mode == InverseMode::exact_solve ? "exact" : "neumann"));
    REQUIRE(rep.pass);
  }
}

TEST_CASE("build_projection rejects wide or null bases") {
  REQUIRE_THROWS_AS(build_projection(random_tensor({3, 5}, 1)), Error);
  auto zero = Tensor<double>::zeros({6, 2});
  REQUIRE_THROWS_AS(build_projection(zero), Error);
}
