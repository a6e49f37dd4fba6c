#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mambadm/mamba_block.hpp"
#include "test_util.hpp"

using namespace mambadm;
using ssm::ScanBackend;

namespace {

template <typename T>
MambaBlock<T> make_block(Index d, Index n, std::uint64_t seed,
                         bool learnable_d = false,
                         bool delta_per_channel = false) {
  typename MambaBlock<T>::Options opt;
  opt.d_model = d;
  opt.n_state = n;
  opt.learnable_d = learnable_d;
  opt.delta_per_channel = delta_per_channel;
  MambaBlock<T> block;
  Rng rng(seed);
  block.init("block", opt, rng);
  return block;
}

template <typename T>
MatX<T> random_input(Rng& rng, Index rows, Index cols) {
  MatX<T> x(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) x(i, j) = static_cast<T>(rng.normal());
  return x;
}

}  // namespace

TEST_CASE("selective_params: zero input gives softplus(bias) delta and zero B/C") {
  auto block = make_block<double>(4, 3, 17);
  block.delta_bias.value.setZero();
  MatX<double> u = MatX<double>::Zero(5, 4);
  MatX<double> b, c, delta;
  block.selective_params(u, b, c, delta);
  for (Index t = 0; t < 5; ++t) {
    CHECK(delta(t, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(b.row(t).cwiseAbs().maxCoeff() == 0.0);
    CHECK(c.row(t).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("selective_params: large delta_bias keeps delta near softplus(bias)") {
  auto block = make_block<double>(4, 3, 18);
  block.delta_bias.value.setConstant(5.0);
  Rng rng(19);
  MatX<double> u = random_input<double>(rng, 16, 4);
  MatX<double> b, c, delta;
  block.selective_params(u, b, c, delta);
  // scalar softplus oracle applied to the pre-activation bound
  const double wnorm = block.w_delta.value.norm();
  for (Index t = 0; t < 16; ++t) {
    const double shift = wnorm * u.row(t).norm();
    CHECK(delta(t, 0) >= nn::softplus(5.0 - shift) - 1e-12);
    CHECK(delta(t, 0) > 0.0);
  }
}

TEST_CASE("mamba_forward: zero output projection gives zero output") {
  auto block = make_block<double>(6, 4, 20);
  block.w_out.value.setZero();
  Rng rng(21);
  MatX<double> x = random_input<double>(rng, 12, 6);
  MatX<double> y = block.forward(x, 12, ScanBackend::sequential);
  CHECK(y.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mamba_forward: T=1 identical across scan backends") {
  auto block = make_block<double>(5, 3, 22, /*learnable_d=*/true);
  Rng rng(23);
  MatX<double> x = random_input<double>(rng, 1, 5);
  MatX<double> ys = block.forward(x, 1, ScanBackend::sequential);
  MatX<double> yp = block.forward(x, 1, ScanBackend::parallel);
  CHECK((ys - yp).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mamba_forward backend equivalence on random inputs") {
  auto block = make_block<float>(8, 6, 24, /*learnable_d=*/true);
  Rng rng(25);
  MatX<float> x = random_input<float>(rng, 3 * 20, 8);  // 3 sequences of 20
  MatX<float> ys = block.forward(x, 20, ScanBackend::sequential);
  MatX<float> yp = block.forward(x, 20, ScanBackend::parallel);
  CHECK(testutil::max_rel_err_scaled(ys, yp) <= 1e-5);
}

TEST_CASE("mamba_forward is causal end to end") {
  auto block = make_block<double>(6, 4, 26);
  Rng rng(27);
  MatX<double> x = random_input<double>(rng, 16, 6);
  MatX<double> base_s = block.forward(x, 16, ScanBackend::sequential);
  MatX<double> base_p = block.forward(x, 16, ScanBackend::parallel);
  for (Index j : {Index(4), Index(9), Index(15)}) {
    MatX<double> x2 = x;
    x2.row(j).array() += 1.25;
    MatX<double> ps = block.forward(x2, 16, ScanBackend::sequential);
    MatX<double> pp = block.forward(x2, 16, ScanBackend::parallel);
    for (Index t = 0; t < j; ++t) {
      CHECK((ps.row(t) - base_s.row(t)).cwiseAbs().maxCoeff() == 0.0);
      CHECK((pp.row(t) - base_p.row(t)).cwiseAbs().maxCoeff() <= 1e-6);
    }
    // and outputs at t >= j do change
    CHECK((ps.row(j) - base_s.row(j)).cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("mamba_forward respects sequence boundaries in a stacked batch") {
  auto block = make_block<double>(4, 3, 28);
  Rng rng(29);
  MatX<double> x = random_input<double>(rng, 2 * 7, 4);
  MatX<double> base = block.forward(x, 7, ScanBackend::sequential);
  MatX<double> x2 = x;
  x2.row(2).array() += 3.0;  // perturb sequence 0
  MatX<double> pert = block.forward(x2, 7, ScanBackend::sequential);
  for (Index t = 7; t < 14; ++t)
    CHECK((pert.row(t) - base.row(t)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mamba_forward rejects bad shapes") {
  auto block = make_block<double>(4, 3, 30);
  Rng rng(31);
  MatX<double> x = random_input<double>(rng, 10, 4);
  CHECK_THROWS_AS(block.forward(x, 3, ScanBackend::sequential), ShapeError);
  MatX<double> wide = random_input<double>(rng, 10, 5);
  CHECK_THROWS_AS(block.forward(wide, 10, ScanBackend::sequential), ShapeError);
}

TEST_CASE("streaming step matches batch forward") {
  for (bool per_channel : {false, true}) {
    auto block = make_block<double>(6, 4, 32, /*learnable_d=*/true, per_channel);
    Rng rng(33);
    const Index t_len = 11;
    MatX<double> x = random_input<double>(rng, t_len, 6);
    MatX<double> batch = block.forward(x, t_len, ScanBackend::sequential);
    auto state = block.make_stream_state();
    for (Index t = 0; t < t_len; ++t) {
      MatX<double> y = block.step(x.row(t), state);
      CHECK((y.row(0) - batch.row(t)).cwiseAbs().maxCoeff() <= 1e-6);
    }
  }
}

TEST_CASE("gradient check on all block parameters and the input") {
  for (bool per_channel : {false, true}) {
    auto block =
        make_block<double>(4, 3, 34, /*learnable_d=*/true, per_channel);
    Rng rng(35);
    const Index t_len = 9;
    MatX<double> x = random_input<double>(rng, t_len, 4);
    MatX<double> gy = random_input<double>(rng, t_len, 4);

    auto loss = [&] {
      return block.forward(x, t_len, ScanBackend::sequential)
          .cwiseProduct(gy)
          .sum();
    };

    typename MambaBlock<double>::Cache cache;
    block.forward(x, t_len, ScanBackend::sequential, &cache);
    ParamRefs<double> ps;
    block.collect_params(ps);
    zero_grads(ps);
    MatX<double> gx = block.backward(cache, gy);

    CHECK(testutil::max_param_grad_err(ps, loss) <= 1e-4);
    double worst = 0.0;
    for (Index i = 0; i < x.rows(); ++i)
      for (Index j = 0; j < x.cols(); ++j)
        worst = std::max(worst, testutil::rel_err(
                                    gx(i, j),
                                    testutil::central_diff(loss, &x(i, j))));
    CHECK(worst <= 1e-4);
  }
}
