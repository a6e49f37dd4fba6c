#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mambadm/ssm.hpp"
#include "test_util.hpp"

using namespace mambadm;
using namespace mambadm::ssm;
using testutil::max_rel_err;
using testutil::rel_err;

namespace {

template <typename T>
VecX<T> vec(std::initializer_list<T> v) {
  VecX<T> out(static_cast<Index>(v.size()));
  Index i = 0;
  for (T x : v) out(i++) = x;
  return out;
}

// Random stable scan instance: A negative, delta in (0, 1].
struct RandomScan {
  MatX<double> a_bar, b_bar, c;
  VecX<double> x, h0;
  double d_skip;
};

RandomScan random_scan(Rng& rng, Index t_len, Index n, bool with_skip = false) {
  RandomScan s;
  s.a_bar.resize(t_len, n);
  s.b_bar.resize(t_len, n);
  s.c.resize(t_len, n);
  s.x.resize(t_len);
  s.h0.resize(n);
  for (Index t = 0; t < t_len; ++t) {
    s.x(t) = rng.normal();
    for (Index i = 0; i < n; ++i) {
      s.a_bar(t, i) = std::exp(-(0.05 + rng.uniform()));  // in (0, 1)
      s.b_bar(t, i) = rng.normal();
      s.c(t, i) = rng.normal();
    }
  }
  for (Index i = 0; i < n; ++i) s.h0(i) = rng.normal();
  s.d_skip = with_skip ? rng.normal() : 0.0;
  return s;
}

}  // namespace

TEST_CASE("discretize_zoh matches the closed form for A=-1, delta=0.1") {
  VecX<double> a_bar, b_bar;
  discretize_zoh<double>(vec<double>({-1.0}), vec<double>({1.0}), 0.1, a_bar, b_bar);
  // independent closed-form evaluation
  const double expect_a = std::exp(-0.1);
  const double expect_b = (std::exp(-0.1) - 1.0) / -1.0;
  CHECK(std::abs(a_bar(0) - expect_a) < 1e-15);
  CHECK(std::abs(b_bar(0) - expect_b) < 1e-15);
  CHECK(a_bar(0) == doctest::Approx(0.904837).epsilon(1e-5));
  CHECK(b_bar(0) == doctest::Approx(0.095163).epsilon(1e-5));
}

TEST_CASE("discretize_zoh keeps zero input coupling zero") {
  VecX<double> a_bar, b_bar;
  discretize_zoh<double>(vec<double>({-2.0}), vec<double>({0.0}), 0.37, a_bar, b_bar);
  CHECK(b_bar(0) == 0.0);
}

TEST_CASE("discretize_zoh continuity as delta -> 0") {
  VecX<double> a = init_state_matrix<double>(6, InitScheme::neg_ramp);
  VecX<double> b = VecX<double>::Ones(6);
  for (double delta : {1e-3, 1e-4}) {
    VecX<double> a_bar, b_bar;
    discretize_zoh<double>(a, b, delta, a_bar, b_bar);
    for (Index i = 0; i < 6; ++i) {
      CHECK(a_bar(i) == doctest::Approx(1.0).epsilon(0.01));
      // B_bar -> delta*B with relative error O(delta)
      CHECK(rel_err(b_bar(i), delta * b(i)) < 4.0 * delta);
    }
  }
}

TEST_CASE("discretize_zoh limit branch near A = 0") {
  VecX<double> a_bar, b_bar;
  discretize_zoh<double>(vec<double>({1e-13}), vec<double>({2.0}), 0.25, a_bar, b_bar);
  CHECK(rel_err(b_bar(0), 0.25 * 2.0) < 1e-12);
}

TEST_CASE("discretize_zoh stability: 0 < A_bar < 1 for negative A") {
  Rng rng(11);
  for (int k = 0; k < 50; ++k) {
    VecX<double> a = vec<double>({-(0.01 + 5.0 * rng.uniform())});
    double delta = 1e-3 + 10.0 * rng.uniform() * 0.9999;
    VecX<double> a_bar, b_bar;
    discretize_zoh<double>(a, VecX<double>::Ones(1), delta, a_bar, b_bar);
    CHECK(a_bar(0) > 0.0);
    CHECK(a_bar(0) < 1.0);
  }
}

TEST_CASE("discretize_zoh rejects bad inputs") {
  VecX<double> a_bar, b_bar;
  CHECK_THROWS_AS(discretize_zoh<double>(vec<double>({std::nan("")}),
                                         vec<double>({1.0}), 0.1, a_bar, b_bar),
                  InvalidParameterError);
  CHECK_THROWS_AS(discretize_zoh<double>(vec<double>({-1.0}), vec<double>({1.0}),
                                         -0.1, a_bar, b_bar),
                  InvalidParameterError);
  CHECK_THROWS_AS(discretize_zoh<double>(vec<double>({-1.0}), vec<double>({1.0}),
                                         0.0, a_bar, b_bar),
                  InvalidParameterError);
}

TEST_CASE("scan_sequential hand-unrolled recurrence") {
  MatX<double> a_bar = MatX<double>::Constant(2, 1, 0.5);
  MatX<double> b_bar = MatX<double>::Constant(2, 1, 1.0);
  MatX<double> c = MatX<double>::Constant(2, 1, 1.0);
  auto out = scan_sequential<double>(a_bar, b_bar, c, vec<double>({1.0, 1.0}), 0.0,
                                     VecX<double>::Zero(1));
  CHECK(out.y(0) == 1.0);
  CHECK(out.y(1) == 1.5);
  CHECK(out.h_final(0) == 1.5);
}

TEST_CASE("scan_sequential zero input gives zero output") {
  Rng rng(3);
  auto s = random_scan(rng, 12, 4);
  s.x.setZero();
  s.h0.setZero();
  auto out = scan_sequential(s.a_bar, s.b_bar, s.c, s.x, s.d_skip, s.h0);
  CHECK(out.y.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("scan handles T = 0") {
  MatX<double> empty(0, 3);
  VecX<double> x(0);
  VecX<double> h0 = vec<double>({1.0, 2.0, 3.0});
  for (auto backend : {ScanBackend::sequential, ScanBackend::parallel}) {
    auto out = scan(empty, empty, empty, x, 0.0, h0, backend);
    CHECK(out.y.size() == 0);
    CHECK(out.h_final == h0);
  }
}

TEST_CASE("scan rejects length mismatch") {
  MatX<double> a_bar(3, 2), b_bar(2, 2), c(3, 2);
  a_bar.setConstant(0.5);
  b_bar.setConstant(1.0);
  c.setConstant(1.0);
  VecX<double> x = VecX<double>::Ones(3);
  CHECK_THROWS_AS(scan_sequential<double>(a_bar, b_bar, c, x, 0.0, VecX<double>::Zero(2)),
                  ShapeError);
}

TEST_CASE("scan_parallel computes prefix sums in the degenerate case") {
  MatX<double> ones = MatX<double>::Ones(3, 1);
  auto out = scan_parallel<double>(ones, ones, ones, vec<double>({1.0, 2.0, 3.0}),
                                   0.0, VecX<double>::Zero(1));
  // cumulative-sum oracle
  CHECK(out.y(0) == 1.0);
  CHECK(out.y(1) == 3.0);
  CHECK(out.y(2) == 6.0);
}

TEST_CASE("scan_parallel of length 1 equals one sequential step exactly") {
  Rng rng(5);
  auto s = random_scan(rng, 1, 5, true);
  auto seq = scan_sequential(s.a_bar, s.b_bar, s.c, s.x, s.d_skip, s.h0);
  auto par = scan_parallel(s.a_bar, s.b_bar, s.c, s.x, s.d_skip, s.h0);
  CHECK(seq.y(0) == par.y(0));
}

TEST_CASE("scan equivalence: 100 random configs, single precision") {
  Rng rng(42);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    Index n = 1 + rng.uniform_int(8);
    Index t_len = 1 + rng.uniform_int(64);
    auto s = random_scan(rng, t_len, n, true);
    MatX<float> a_bar = s.a_bar.cast<float>(), b_bar = s.b_bar.cast<float>(),
                c = s.c.cast<float>();
    VecX<float> x = s.x.cast<float>(), h0 = s.h0.cast<float>();
    auto seq = scan_sequential<float>(a_bar, b_bar, c, x, float(s.d_skip), h0);
    auto par = scan_parallel<float>(a_bar, b_bar, c, x, float(s.d_skip), h0);
    worst = std::max(worst, testutil::max_rel_err_scaled(seq.y, par.y));
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("scan equivalence in double precision") {
  Rng rng(43);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    Index n = 1 + rng.uniform_int(8);
    Index t_len = 1 + rng.uniform_int(64);
    auto s = random_scan(rng, t_len, n, true);
    auto seq = scan_sequential(s.a_bar, s.b_bar, s.c, s.x, s.d_skip, s.h0);
    auto par = scan_parallel(s.a_bar, s.b_bar, s.c, s.x, s.d_skip, s.h0);
    worst = std::max(worst, testutil::max_rel_err_scaled(seq.y, par.y));
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("causality: perturbing x_j leaves earlier outputs unchanged") {
  Rng rng(7);
  auto s = random_scan(rng, 24, 4, true);
  auto base_seq = scan_sequential(s.a_bar, s.b_bar, s.c, s.x, s.d_skip, s.h0);
  auto base_par = scan_parallel(s.a_bar, s.b_bar, s.c, s.x, s.d_skip, s.h0);
  for (Index j : {Index(5), Index(12), Index(23)}) {
    VecX<double> x2 = s.x;
    x2(j) += 3.5;
    auto seq = scan_sequential(s.a_bar, s.b_bar, s.c, x2, s.d_skip, s.h0);
    auto par = scan_parallel(s.a_bar, s.b_bar, s.c, x2, s.d_skip, s.h0);
    for (Index t = 0; t < j; ++t) {
      CHECK(seq.y(t) == base_seq.y(t));  // exact in sequential mode
      CHECK(std::abs(par.y(t) - base_par.y(t)) <= 1e-6);
    }
  }
}

TEST_CASE("stability: bounded input gives bounded output over long horizons") {
  Rng rng(9);
  VecX<double> a = init_state_matrix<double>(4, InitScheme::neg_half);
  const Index t_len = 512;
  MatX<double> a_bar(t_len, 4), b_bar(t_len, 4), c(t_len, 4);
  VecX<double> x(t_len);
  for (Index t = 0; t < t_len; ++t) {
    double delta = 1e-3 + 9.999 * rng.uniform();
    VecX<double> ab, bb;
    discretize_zoh<double>(a, VecX<double>::Ones(4), delta, ab, bb);
    a_bar.row(t) = ab.transpose();
    b_bar.row(t) = bb.transpose();
    c.row(t).setConstant(1.0);
    x(t) = 2.0 * rng.uniform() - 1.0;
  }
  VecX<double> h0 = VecX<double>::Zero(4);
  auto out = scan_sequential(a_bar, b_bar, c, x, 0.0, h0);
  CHECK(all_finite(out.y));
  CHECK(out.y.cwiseAbs().maxCoeff() < 1e3);
}

TEST_CASE("init_state_matrix schemes") {
  auto ramp = init_state_matrix<double>(4, InitScheme::neg_ramp);
  CHECK(ramp(0) == -1.0);
  CHECK(ramp(1) == -2.0);
  CHECK(ramp(2) == -3.0);
  CHECK(ramp(3) == -4.0);
  auto half = init_state_matrix<double>(3, InitScheme::neg_half);
  for (Index i = 0; i < 3; ++i) CHECK(half(i) == -0.5);
  CHECK(init_state_matrix<double>(1, InitScheme::neg_ramp)(0) == -1.0);
  CHECK_THROWS_AS(init_state_matrix<double>(0, InitScheme::neg_ramp),
                  InvalidParameterError);
}

TEST_CASE("spectrum_log values") {
  auto s = spectrum_log<double>(init_state_matrix<double>(4, InitScheme::neg_ramp));
  // log10(n+1) evaluated independently
  for (Index i = 0; i < 4; ++i)
    CHECK(s(i) == doctest::Approx(std::log10(double(i + 1))).epsilon(1e-12));
  CHECK(s(0) == 0.0);
  CHECK(s(1) == doctest::Approx(0.30103).epsilon(1e-5));
  CHECK(s(2) == doctest::Approx(0.47712).epsilon(1e-5));
  CHECK(s(3) == doctest::Approx(0.60206).epsilon(1e-5));

  auto half = spectrum_log<double>(vec<double>({-0.5, -0.5}));
  CHECK(half(0) == doctest::Approx(-0.30103).epsilon(1e-5));
  CHECK(half(1) == half(0));

  CHECK(spectrum_log<double>(vec<double>({-1.0}))(0) == 0.0);
  CHECK_THROWS_AS(spectrum_log<double>(vec<double>({-1.0, 0.0})), DomainError);
}

TEST_CASE("gradient check: ssm_backward vs central finite differences") {
  Rng rng(21);
  for (int rep = 0; rep < 4; ++rep) {
    const Index n = 1 + rng.uniform_int(4);
    const Index t_len = 2 + rng.uniform_int(5);
    VecX<double> a(n);
    for (Index i = 0; i < n; ++i) a(i) = -(0.2 + 2.0 * rng.uniform());
    MatX<double> b(t_len, n), c(t_len, n);
    VecX<double> delta(t_len), x(t_len), h0(n), gy(t_len);
    for (Index t = 0; t < t_len; ++t) {
      delta(t) = 0.05 + rng.uniform();
      x(t) = rng.normal();
      gy(t) = rng.normal();
      for (Index i = 0; i < n; ++i) {
        b(t, i) = rng.normal();
        c(t, i) = rng.normal();
      }
    }
    for (Index i = 0; i < n; ++i) h0(i) = rng.normal();
    double d_skip = rng.normal();

    auto loss = [&]() {
      auto y = ssm_forward<double>(a, b, c, delta, x, d_skip, h0,
                                   ScanBackend::sequential);
      return y.dot(gy);
    };

    SsmCache<double> cache;
    ssm_forward<double>(a, b, c, delta, x, d_skip, h0, ScanBackend::sequential,
                        &cache);
    auto g = ssm_backward<double>(a, b, delta, x, d_skip, h0, c, cache, gy);

    auto check = [&](double analytic, double* slot) {
      double fd = testutil::central_diff(loss, slot);
      CHECK(rel_err(analytic, fd) <= 1e-4);
    };
    for (Index i = 0; i < n; ++i) check(g.a_diag(i), &a(i));
    for (Index i = 0; i < n; ++i) check(g.h0(i), &h0(i));
    for (Index t = 0; t < t_len; ++t) {
      check(g.delta_seq(t), &delta(t));
      check(g.x(t), &x(t));
      for (Index i = 0; i < n; ++i) {
        check(g.b_seq(t, i), &b(t, i));
        check(g.c_seq(t, i), &c(t, i));
      }
    }
    check(g.d_skip, &d_skip);
  }
}
