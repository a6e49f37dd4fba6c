#pragma once

#include <string>

#include "mambadm/nn.hpp"
#include "mambadm/ssm.hpp"

namespace mambadm {

// Selective state-space block: gated projections, causal depthwise
// convolution, input-dependent (B, C, delta), diagonal SSM scan, gated
// output projection. B and C are shared across the E channels; A and the
// skip D are per channel.
template <typename T>
class MambaBlock {
 public:
  struct Options {
    Index d_model = 0;
    Index n_state = 16;
    Index expand = 1;
    Index conv_width = 4;
    bool delta_per_channel = false;
    bool learnable_d = false;
    ssm::InitScheme init = ssm::InitScheme::neg_ramp;
  };

  struct Cache {
    MatX<T> x, xin, conv, u, zpre, z;
    MatX<T> bsel, csel, dpre, delta;
    MatX<T> a_bar, phi, h;  // rows x (E*N), channel-major column blocks
    MatX<T> y_ssm;
    Index t_seq = 0;
  };

  void init(const std::string& prefix, const Options& opt, Rng& rng) {
    opt_ = opt;
    const Index d = opt.d_model;
    const Index e = d * opt.expand;
    const Index n = opt.n_state;
    const Index dr = opt.delta_per_channel ? e : 1;

    // fan-in scaled init. The fused branches have no token residual, so the
    // whole signal crosses the block; a 0.02-normal interior collapses the
    // scan path below the layer-norm epsilon and stalls training.
    w_in.setup(prefix + ".w_in", d, e, true);
    w_in.fill_uniform(rng, 1.0 / std::sqrt(double(d)));
    w_gate.setup(prefix + ".w_gate", d, e, true);
    w_gate.fill_uniform(rng, 1.0 / std::sqrt(double(d)));
    conv.init(prefix + ".conv", e, opt.conv_width, rng);
    w_b.setup(prefix + ".w_b", e, n, true);
    w_b.fill_uniform(rng, 1.0 / std::sqrt(double(e)));
    w_c.setup(prefix + ".w_c", e, n, true);
    w_c.fill_uniform(rng, 1.0 / std::sqrt(double(e)));
    w_delta.setup(prefix + ".w_delta", e, dr, true);
    w_delta.fill_uniform(rng, 1.0 / std::sqrt(double(e)));

    // softplus(delta_bias) uniform in log space over [1e-3, 1e-1]
    delta_bias.setup(prefix + ".delta_bias", 1, dr, false);
    const double lo = std::log(1e-3), hi = std::log(1e-1);
    for (Index i = 0; i < dr; ++i) {
      const double dt = std::exp(lo + (hi - lo) * rng.uniform());
      delta_bias.value(0, i) = nn::softplus_inverse(static_cast<T>(dt));
    }

    a_diag.setup(prefix + ".a_diag", e, n, false);
    const VecX<T> a0 = ssm::init_state_matrix<T>(n, opt.init);
    for (Index ch = 0; ch < e; ++ch) a_diag.value.row(ch) = a0.transpose();

    if (opt.learnable_d) {
      d_skip.setup(prefix + ".d_skip", 1, e, false);
      d_skip.value.setOnes();
    }

    w_out.setup(prefix + ".w_out", e, d, true);
    w_out.fill_uniform(rng, 1.0 / std::sqrt(double(e)));
  }

  const Options& options() const { return opt_; }
  Index e_dim() const { return opt_.d_model * opt_.expand; }

  // Input-dependent SSM parameters for one activation sequence.
  void selective_params(const MatX<T>& u, MatX<T>& b, MatX<T>& c,
                        MatX<T>& delta, MatX<T>* dpre_out = nullptr) const {
    b = u * w_b.value;
    c = u * w_c.value;
    MatX<T> dpre = u * w_delta.value;
    dpre.rowwise() += delta_bias.value.row(0);
    delta = nn::apply_softplus(dpre);
    if (dpre_out) *dpre_out = std::move(dpre);
  }

  // x: (n_seq * t_seq) x d, sequences stacked row-wise.
  MatX<T> forward(const MatX<T>& x, Index t_seq, ssm::ScanBackend backend,
                  Cache* cache = nullptr) const {
    if (t_seq < 1 || x.rows() % t_seq != 0)
      throw ShapeError("mamba_forward: rows not a multiple of sequence length");
    if (x.cols() != opt_.d_model) throw ShapeError("mamba_forward: bad width");
    const Index rows = x.rows();
    const Index e = e_dim();
    const Index n = opt_.n_state;

    MatX<T> xin = x * w_in.value;
    MatX<T> conv_out = conv.forward(xin, t_seq);
    MatX<T> u = nn::apply_silu(conv_out);
    MatX<T> zpre = x * w_gate.value;
    MatX<T> z = nn::apply_silu(zpre);

    MatX<T> bsel, csel, delta, dpre;
    selective_params(u, bsel, csel, delta, &dpre);

    // discretization slabs for all sequences at once, one vectorized sweep
    // per channel: a_bar = exp(delta*a), phi = (a_bar - 1)/a
    MatX<T> a_bar(rows, e * n), phi(rows, e * n), h(rows, e * n);
    for (Index ch = 0; ch < e; ++ch) {
      const Index dcol = opt_.delta_per_channel ? ch : 0;
      const auto a_row = a_diag.value.row(ch);
      auto ab = a_bar.middleCols(ch * n, n);
      auto ph = phi.middleCols(ch * n, n);
      ab = (delta.col(dcol) * a_row).array().exp().matrix();
      ph = ((ab.array() - T(1)).rowwise() / a_row.array()).matrix();
      for (Index i = 0; i < n; ++i) {
        if (std::abs(a_row(i)) < static_cast<T>(ssm::kSmallA)) {
          // series limit, matching zoh_phi
          auto dt = delta.col(dcol).array();
          ph.col(i) = (dt * (T(1) + dt * a_row(i) / T(2) +
                             (dt * a_row(i)).square() / T(6)))
                          .matrix();
        }
      }
    }

    MatX<T> y_ssm(rows, e);
    const VecX<T> h0 = VecX<T>::Zero(n);
    Eigen::Matrix<T, 1, Eigen::Dynamic> hrow(n);
    for (Index s0 = 0; s0 < rows; s0 += t_seq) {
      for (Index ch = 0; ch < e; ++ch) {
        const T dsk = opt_.learnable_d ? d_skip.value(0, ch) : T(0);
        if (backend == ssm::ScanBackend::sequential) {
          hrow.setZero();
          for (Index t = 0; t < t_seq; ++t) {
            const Index r = s0 + t;
            hrow = a_bar.row(r).segment(ch * n, n).cwiseProduct(hrow) +
                   phi.row(r).segment(ch * n, n).cwiseProduct(bsel.row(r)) *
                       u(r, ch);
            h.row(r).segment(ch * n, n) = hrow;
            y_ssm(r, ch) = csel.row(r).dot(hrow) + dsk * u(r, ch);
          }
        } else {
          MatX<T> ab = a_bar.block(s0, ch * n, t_seq, n);
          MatX<T> ph = phi.block(s0, ch * n, t_seq, n);
          MatX<T> bb = ph.cwiseProduct(bsel.middleRows(s0, t_seq));
          MatX<T> cs = csel.middleRows(s0, t_seq);
          VecX<T> xs = u.col(ch).segment(s0, t_seq);
          auto out = ssm::scan_parallel(ab, bb, cs, xs, dsk, h0);
          y_ssm.col(ch).segment(s0, t_seq) = out.y;
          h.block(s0, ch * n, t_seq, n) = out.h;
        }
      }
    }

    MatX<T> gated = y_ssm.cwiseProduct(z);
    MatX<T> y = gated * w_out.value;

    if (cache) {
      cache->x = x;
      cache->xin = std::move(xin);
      cache->conv = std::move(conv_out);
      cache->u = std::move(u);
      cache->zpre = std::move(zpre);
      cache->z = std::move(z);
      cache->bsel = std::move(bsel);
      cache->csel = std::move(csel);
      cache->dpre = std::move(dpre);
      cache->delta = std::move(delta);
      cache->a_bar = std::move(a_bar);
      cache->phi = std::move(phi);
      cache->h = std::move(h);
      cache->y_ssm = std::move(y_ssm);
      cache->t_seq = t_seq;
    }
    return y;
  }

  // Accumulates parameter gradients, returns the input gradient.
  MatX<T> backward(const Cache& cache, const MatX<T>& gy) {
    const Index rows = cache.x.rows();
    const Index t_seq = cache.t_seq;
    const Index e = e_dim();
    const Index n = opt_.n_state;

    MatX<T> gated = cache.y_ssm.cwiseProduct(cache.z);
    w_out.grad.noalias() += gated.transpose() * gy;
    MatX<T> ggated = gy * w_out.value.transpose();

    MatX<T> gy_ssm = ggated.cwiseProduct(cache.z);
    MatX<T> gz = ggated.cwiseProduct(cache.y_ssm);
    MatX<T> gzpre =
        gz.cwiseProduct(cache.zpre.unaryExpr([](T v) { return nn::silu_grad(v); }));
    w_gate.grad.noalias() += cache.x.transpose() * gzpre;
    MatX<T> gx = gzpre * w_gate.value.transpose();

    MatX<T> gu = MatX<T>::Zero(rows, e);
    MatX<T> gbsel = MatX<T>::Zero(rows, n);
    MatX<T> gcsel = MatX<T>::Zero(rows, n);
    MatX<T> gdelta = MatX<T>::Zero(rows, cache.delta.cols());
    const VecX<T> h0 = VecX<T>::Zero(n);

    for (Index s0 = 0; s0 < rows; s0 += t_seq) {
      for (Index ch = 0; ch < e; ++ch) {
        const Index dcol = opt_.delta_per_channel ? ch : 0;
        MatX<T> ab = cache.a_bar.block(s0, ch * n, t_seq, n);
        MatX<T> ph = cache.phi.block(s0, ch * n, t_seq, n);
        MatX<T> bs = cache.bsel.middleRows(s0, t_seq);
        MatX<T> bb = ph.cwiseProduct(bs);
        MatX<T> cs = cache.csel.middleRows(s0, t_seq);
        MatX<T> hs = cache.h.block(s0, ch * n, t_seq, n);
        VecX<T> xs = cache.u.col(ch).segment(s0, t_seq);
        VecX<T> gys = gy_ssm.col(ch).segment(s0, t_seq);
        const T dsk = opt_.learnable_d ? d_skip.value(0, ch) : T(0);

        auto sg = ssm::scan_backward(ab, bb, cs, xs, dsk, h0, hs, gys);

        gu.col(ch).segment(s0, t_seq) += sg.x;
        gbsel.middleRows(s0, t_seq) += sg.b_bar.cwiseProduct(ph);
        gcsel.middleRows(s0, t_seq) += sg.c;
        if (opt_.learnable_d) d_skip.grad(0, ch) += sg.d_skip;

        for (Index t = 0; t < t_seq; ++t) {
          const T dt = cache.delta(s0 + t, dcol);
          T gdt = T(0);
          for (Index i = 0; i < n; ++i) {
            const T a = a_diag.value(ch, i);
            const T abar = ab(t, i);
            const T gphi = sg.b_bar(t, i) * bs(t, i);
            a_diag.grad(ch, i) += sg.a_bar(t, i) * dt * abar +
                                  gphi * ssm::zoh_phi_da(a, dt, abar, ph(t, i));
            gdt += sg.a_bar(t, i) * a * abar + gphi * abar;
          }
          gdelta(s0 + t, dcol) += gdt;
        }
      }
    }

    w_b.grad.noalias() += cache.u.transpose() * gbsel;
    gu.noalias() += gbsel * w_b.value.transpose();
    w_c.grad.noalias() += cache.u.transpose() * gcsel;
    gu.noalias() += gcsel * w_c.value.transpose();

    MatX<T> gdpre = gdelta.cwiseProduct(
        cache.dpre.unaryExpr([](T v) { return nn::sigmoid(v); }));
    w_delta.grad.noalias() += cache.u.transpose() * gdpre;
    delta_bias.grad.row(0) += gdpre.colwise().sum();
    gu.noalias() += gdpre * w_delta.value.transpose();

    MatX<T> gconv = gu.cwiseProduct(
        cache.conv.unaryExpr([](T v) { return nn::silu_grad(v); }));
    MatX<T> gxin = conv.backward(cache.xin, t_seq, gconv);

    w_in.grad.noalias() += cache.x.transpose() * gxin;
    gx.noalias() += gxin * w_in.value.transpose();
    return gx;
  }

  // --- streaming interface: one step at a time with carried state ---
  struct StreamState {
    MatX<T> h;          // E x N latent per channel
    MatX<T> conv_tail;  // (w-1) x E trailing pre-conv activations
  };

  StreamState make_stream_state() const {
    StreamState s;
    s.h = MatX<T>::Zero(e_dim(), opt_.n_state);
    s.conv_tail = MatX<T>::Zero(opt_.conv_width - 1, e_dim());
    return s;
  }

  MatX<T> step(const MatX<T>& x_row, StreamState& state) const {
    const Index e = e_dim();
    const Index n = opt_.n_state;
    const Index w = opt_.conv_width;

    MatX<T> xin = x_row * w_in.value;  // 1 x E
    MatX<T> conv_val = MatX<T>::Zero(1, e);
    for (Index j = 0; j < w - 1; ++j)
      conv_val.row(0) +=
          state.conv_tail.row(j).cwiseProduct(conv.kernel.value.col(j).transpose());
    conv_val.row(0) +=
        xin.row(0).cwiseProduct(conv.kernel.value.col(w - 1).transpose());
    if (w > 1) {
      for (Index j = 0; j + 1 < w - 1; ++j)
        state.conv_tail.row(j) = state.conv_tail.row(j + 1);
      state.conv_tail.row(w - 2) = xin.row(0);
    }

    MatX<T> u = nn::apply_silu(conv_val);
    MatX<T> z = nn::apply_silu(MatX<T>(x_row * w_gate.value));
    MatX<T> b, c, delta;
    selective_params(u, b, c, delta);

    MatX<T> y_ssm(1, e);
    for (Index ch = 0; ch < e; ++ch) {
      const Index dcol = opt_.delta_per_channel ? ch : 0;
      const T dt = delta(0, dcol);
      T acc = T(0);
      for (Index i = 0; i < n; ++i) {
        const T a = a_diag.value(ch, i);
        const T abar = std::exp(dt * a);
        const T bbar = ssm::zoh_phi(a, dt) * b(0, i);
        state.h(ch, i) = abar * state.h(ch, i) + bbar * u(0, ch);
        acc += c(0, i) * state.h(ch, i);
      }
      const T dsk = opt_.learnable_d ? d_skip.value(0, ch) : T(0);
      y_ssm(0, ch) = acc + dsk * u(0, ch);
    }
    return MatX<T>(y_ssm.cwiseProduct(z) * w_out.value);
  }

  void collect_params(ParamRefs<T>& out) {
    out.push_back(&w_in);
    out.push_back(&w_gate);
    conv.collect_params(out);
    out.push_back(&w_b);
    out.push_back(&w_c);
    out.push_back(&w_delta);
    out.push_back(&delta_bias);
    out.push_back(&a_diag);
    if (opt_.learnable_d) out.push_back(&d_skip);
    out.push_back(&w_out);
  }

  Param<T> w_in, w_gate, w_b, w_c, w_delta, delta_bias, a_diag, d_skip, w_out;
  nn::CausalDepthwiseConv<T> conv;

 private:
  Options opt_;
};

}  // namespace mambadm
