#pragma once

#include <Eigen/Dense>
#include <cstring>
#include <memory>
#include <vector>

#include "d2sep/tensor.hpp"

namespace d2sep {

// One direction of GRU weights. Update/reset/candidate follow the reset-gate-
// inside-candidate formulation:
//   r_t = sigmoid(W_ir x_t + b_ir + W_hr h_{t-k} + b_hr)
//   z_t = sigmoid(W_iz x_t + b_iz + W_hz h_{t-k} + b_hz)
//   n_t = tanh(W_in x_t + b_in + r_t * (W_hn h_{t-k} + b_hn))
//   h_t = (1 - z_t) n_t + z_t h_{t-k}
template <class S>
struct GruDirection {
  Tensor<S> w_ir, w_iz, w_in;  // [H x Din]
  Tensor<S> w_hr, w_hz, w_hn;  // [H x H]
  Tensor<S> b_ir, b_iz, b_in, b_hr, b_hz, b_hn;  // [H]
};

template <class S>
struct DilatedGruParams {
  std::size_t input = 0;
  std::size_t hidden = 0;
  int dilation = 1;
  bool bidirectional = false;
  std::vector<GruDirection<S>> directions;

  static DilatedGruParams init(Rng& rng, std::size_t input, std::size_t hidden,
                               int dilation, bool bidirectional,
                               bool requires_grad = true) {
    if (dilation < 1) throw config_error("gru dilation must be >= 1");
    if (hidden < 1) throw config_error("gru hidden size must be >= 1");
    DilatedGruParams p;
    p.input = input;
    p.hidden = hidden;
    p.dilation = dilation;
    p.bidirectional = bidirectional;
    const double si = 1.0 / std::sqrt(static_cast<double>(input));
    const double sh = 1.0 / std::sqrt(static_cast<double>(hidden));
    const int ndir = bidirectional ? 2 : 1;
    for (int d = 0; d < ndir; ++d) {
      GruDirection<S> dir;
      dir.w_ir = Tensor<S>::uniform(rng, {hidden, input}, -si, si, requires_grad);
      dir.w_iz = Tensor<S>::uniform(rng, {hidden, input}, -si, si, requires_grad);
      dir.w_in = Tensor<S>::uniform(rng, {hidden, input}, -si, si, requires_grad);
      dir.w_hr = Tensor<S>::uniform(rng, {hidden, hidden}, -sh, sh, requires_grad);
      dir.w_hz = Tensor<S>::uniform(rng, {hidden, hidden}, -sh, sh, requires_grad);
      dir.w_hn = Tensor<S>::uniform(rng, {hidden, hidden}, -sh, sh, requires_grad);
      dir.b_ir = Tensor<S>::uniform(rng, {hidden}, -si, si, requires_grad);
      dir.b_iz = Tensor<S>::uniform(rng, {hidden}, -si, si, requires_grad);
      dir.b_in = Tensor<S>::uniform(rng, {hidden}, -si, si, requires_grad);
      dir.b_hr = Tensor<S>::uniform(rng, {hidden}, -sh, sh, requires_grad);
      dir.b_hz = Tensor<S>::uniform(rng, {hidden}, -sh, sh, requires_grad);
      dir.b_hn = Tensor<S>::uniform(rng, {hidden}, -sh, sh, requires_grad);
      p.directions.push_back(std::move(dir));
    }
    return p;
  }

  std::size_t output_channels() const { return hidden * (bidirectional ? 2 : 1); }

  std::vector<Tensor<S>> parameters() const {
    std::vector<Tensor<S>> out;
    for (const auto& d : directions)
      for (const auto& t : {d.w_ir, d.w_iz, d.w_in, d.w_hr, d.w_hz, d.w_hn, d.b_ir,
                            d.b_iz, d.b_in, d.b_hr, d.b_hz, d.b_hn})
        out.push_back(t);
    return out;
  }

  static std::vector<std::string> parameter_names(bool bidirectional) {
    std::vector<std::string> names;
    const char* fields[] = {"w_ir", "w_iz", "w_in", "w_hr", "w_hz", "w_hn",
                            "b_ir", "b_iz", "b_in", "b_hr", "b_hz", "b_hn"};
    const int ndir = bidirectional ? 2 : 1;
    for (int d = 0; d < ndir; ++d)
      for (const char* f : fields)
        names.push_back(std::string(d == 0 ? "fw." : "bw.") + f);
    return names;
  }
};

// Gate activations recorded during a forward pass, in direction-processing
// time order (the backward direction is stored on the reversed axis).
template <class S>
struct GruGates {
  // per direction: [H x T] column-major
  std::vector<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>> r, z, n;
};

namespace gru_detail {

template <class S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;  // col-major
template <class S>
using MatR = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using ArrMap = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
template <class S>
using CArrMap = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;

// acc[j][0..R) = whc (col-major [R x H]) * hp[j]. The accumulation order over
// the hidden index is the same for every W, so lockstep branch groups produce
// bit-identical results to one-branch-at-a-time execution.
template <int W, class S>
void matvec_group(const S* whc, int R, int H, const S* const* hp, S* acc) {
  std::memset(acc, 0, sizeof(S) * static_cast<std::size_t>(R) * W);
  for (int c = 0; c < H; ++c) {
    const S* wcol = whc + static_cast<std::size_t>(c) * R;
    S s[W];
    for (int j = 0; j < W; ++j) s[j] = hp[j][c];
    for (int i = 0; i < R; ++i) {
      const S wv = wcol[i];
      for (int j = 0; j < W; ++j) acc[static_cast<std::size_t>(j) * R + i] += wv * s[j];
    }
  }
}

template <class S>
void matvec_dispatch(const S* whc, int R, int H, const S* const* hp, S* acc, int w) {
  switch (w) {
    case 1: matvec_group<1>(whc, R, H, hp, acc); break;
    case 2: matvec_group<2>(whc, R, H, hp, acc); break;
    case 3: matvec_group<3>(whc, R, H, hp, acc); break;
    case 4: matvec_group<4>(whc, R, H, hp, acc); break;
    case 5: matvec_group<5>(whc, R, H, hp, acc); break;
    case 6: matvec_group<6>(whc, R, H, hp, acc); break;
    case 7: matvec_group<7>(whc, R, H, hp, acc); break;
    case 8: matvec_group<8>(whc, R, H, hp, acc); break;
    default:
      for (int j = 0; j < w; ++j)
        matvec_group<1>(whc, R, H, hp + j, acc + static_cast<std::size_t>(j) * R);
  }
}

// One GRU cell update. r/z/n/hn land in fixed workspace buffers and hout in
// the output column so that vectorized evaluation sees the same destination
// alignment regardless of branch grouping.
template <class S>
[[gnu::noinline]] void gate_pass(const S* g, const S* acc, const S* bhn, const S* hprev,
                                 S* r, S* z, S* n, S* hn, S* hout, int H) {
  CArrMap<S> gr(g, H), gz(g + H, H), gn(g + 2 * H, H);
  CArrMap<S> ar(acc, H), az(acc + H, H), an(acc + 2 * H, H);
  CArrMap<S> bh(bhn, H), hp(hprev, H);
  ArrMap<S> rv(r, H), zv(z, H), nv(n, H), hnv(hn, H), ho(hout, H);
  rv = S(1) / (S(1) + (-(gr + ar)).exp());
  zv = S(1) / (S(1) + (-(gz + az)).exp());
  hnv = an + bh;
  nv = (gn + rv * hnv).tanh();
  ho = (S(1) - zv) * nv + zv * hp;
}

template <class S>
struct DirWork {
  MatX<S> out;  // [H x T] hidden states, direction-time
  MatX<S> tr_r, tr_z, tr_n, tr_hn;  // traces, allocated when grads are needed
  AlignedVec<S> h0;  // [k x H], row per branch
};

// Runs one direction. x_cols gives the original column for each direction
// position p (identity for the forward direction, reversed for backward).
template <class S>
void run_direction(const GruDirection<S>& dir, const S* x, std::size_t din,
                   std::size_t T, int k, int width, bool reversed, bool keep_traces,
                   const Tensor<S>* h0, DirWork<S>& work) {
  const int H = static_cast<int>(dir.w_ir.shape()[0]);
  const int R = 3 * H;

  // Pack input-side weights [3H x Din] and fold column-invariant biases.
  MatR<S> wi(R, din);
  for (int h = 0; h < H; ++h)
    for (std::size_t c = 0; c < din; ++c) {
      wi(h, c) = dir.w_ir.data()[h * din + c];
      wi(H + h, c) = dir.w_iz.data()[h * din + c];
      wi(2 * H + h, c) = dir.w_in.data()[h * din + c];
    }
  Eigen::Matrix<S, Eigen::Dynamic, 1> bfold(R);
  for (int h = 0; h < H; ++h) {
    bfold[h] = dir.b_ir.data()[h] + dir.b_hr.data()[h];
    bfold[H + h] = dir.b_iz.data()[h] + dir.b_hz.data()[h];
    bfold[2 * H + h] = dir.b_in.data()[h];
  }

  Eigen::Map<const MatR<S>> xm(x, din, T);
  MatX<S> g(R, T);  // column t: input contributions at direction position p(t)
  g.noalias() = wi * xm;
  g.colwise() += bfold;

  // Hidden-side weights packed column-major for the recurrence kernel.
  MatX<S> whc(R, H);
  for (int h = 0; h < H; ++h)
    for (int c = 0; c < H; ++c) {
      whc(h, c) = dir.w_hr.data()[h * H + c];
      whc(H + h, c) = dir.w_hz.data()[h * H + c];
      whc(2 * H + h, c) = dir.w_hn.data()[h * H + c];
    }

  work.out.resize(H, T);
  if (keep_traces) {
    work.tr_r.resize(H, T);
    work.tr_z.resize(H, T);
    work.tr_n.resize(H, T);
    work.tr_hn.resize(H, T);
  }
  work.h0.assign(static_cast<std::size_t>(k) * H, S(0));
  if (h0) {
    if (h0->shape() != std::vector<std::size_t>{static_cast<std::size_t>(k),
                                                static_cast<std::size_t>(H)})
      throw shape_error("gru h0 must be [k x H], got " + shape_string(h0->shape()));
    std::copy(h0->data(), h0->data() + h0->size(), work.h0.begin());
  }

  AlignedVec<S> acc(static_cast<std::size_t>(width) * R);
  AlignedVec<S> wr(H), wz(H), wn(H), whn(H);
  std::vector<const S*> hp(width);
  std::vector<int> ps(width);

  const auto orig_col = [&](int p) { return reversed ? static_cast<int>(T) - 1 - p : p; };

  for (int g0 = 0; g0 < k; g0 += width) {
    const int bw = std::min(width, k - g0);
    for (int s = 0;; ++s) {
      int live = 0;
      for (int j = 0; j < bw; ++j) {
        const int p = g0 + j + s * k;
        if (p < static_cast<int>(T)) {
          ps[live] = p;
          hp[live] = (p - k >= 0) ? work.out.data() + static_cast<std::size_t>(p - k) * H
                                  : work.h0.data() + static_cast<std::size_t>(g0 + j) * H;
          ++live;
        }
      }
      if (live == 0) break;
      matvec_dispatch(whc.data(), R, H, hp.data(), acc.data(), live);
      for (int j = 0; j < live; ++j) {
        const int p = ps[j];
        gate_pass(g.data() + static_cast<std::size_t>(orig_col(p)) * R,
                  acc.data() + static_cast<std::size_t>(j) * R, dir.b_hn.data(), hp[j],
                  wr.data(), wz.data(), wn.data(), whn.data(),
                  work.out.data() + static_cast<std::size_t>(p) * H, H);
        if (keep_traces) {
          std::memcpy(work.tr_r.data() + static_cast<std::size_t>(p) * H, wr.data(),
                      sizeof(S) * H);
          std::memcpy(work.tr_z.data() + static_cast<std::size_t>(p) * H, wz.data(),
                      sizeof(S) * H);
          std::memcpy(work.tr_n.data() + static_cast<std::size_t>(p) * H, wn.data(),
                      sizeof(S) * H);
          std::memcpy(work.tr_hn.data() + static_cast<std::size_t>(p) * H, whn.data(),
                      sizeof(S) * H);
        }
      }
    }
  }
}

// BPTT for one direction. dout_rows points at the output-grad rows for this
// direction, laid out row-major [H x T] in original time order.
template <class S>
void backward_direction(const GruDirection<S>& dir, TensorNode<S>& xnode,
                        const S* dout_rows, std::size_t dout_row_stride, std::size_t T,
                        int k, bool reversed, const DirWork<S>& work) {
  const int H = static_cast<int>(dir.w_ir.shape()[0]);
  const int R = 3 * H;
  const std::size_t din = xnode.shape[0];
  using V = Eigen::Matrix<S, Eigen::Dynamic, 1>;
  using A = Eigen::Array<S, Eigen::Dynamic, 1>;

  const auto orig_col = [&](int p) { return reversed ? static_cast<int>(T) - 1 - p : p; };

  MatX<S> dH(H, T);
  for (int p = 0; p < static_cast<int>(T); ++p) {
    const int t = orig_col(p);
    for (int h = 0; h < H; ++h)
      dH(h, p) = dout_rows[static_cast<std::size_t>(h) * dout_row_stride + t];
  }

  MatX<S> whc(R, H);
  for (int h = 0; h < H; ++h)
    for (int c = 0; c < H; ++c) {
      whc(h, c) = dir.w_hr.data()[h * H + c];
      whc(H + h, c) = dir.w_hz.data()[h * H + c];
      whc(2 * H + h, c) = dir.w_hn.data()[h * H + c];
    }

  MatX<S> dG = MatX<S>::Zero(R, T);  // original time order, rows r/z/n
  MatX<S> dWh = MatX<S>::Zero(R, H);  // stacked [da_r; da_z; dhn] x hprev^T
  V dbh = V::Zero(R);
  V v3(R);
  A dhp_gate(H);

  for (int b = 0; b < k; ++b) {
    const int steps = (static_cast<int>(T) - b + k - 1) / k;
    for (int s = steps - 1; s >= 0; --s) {
      const int p = b + s * k;
      const S* hprev = (p - k >= 0) ? work.out.data() + static_cast<std::size_t>(p - k) * H
                                    : work.h0.data() + static_cast<std::size_t>(b) * H;
      CArrMap<S> hp(hprev, H);
      CArrMap<S> r(work.tr_r.data() + static_cast<std::size_t>(p) * H, H);
      CArrMap<S> z(work.tr_z.data() + static_cast<std::size_t>(p) * H, H);
      CArrMap<S> n(work.tr_n.data() + static_cast<std::size_t>(p) * H, H);
      CArrMap<S> hn(work.tr_hn.data() + static_cast<std::size_t>(p) * H, H);
      A dh = dH.col(p).array();

      A da_z = dh * (hp - n) * z * (S(1) - z);
      A da_n = dh * (S(1) - z) * (S(1) - n * n);
      A dhn = da_n * r;
      A da_r = da_n * hn * r * (S(1) - r);

      const int t = orig_col(p);
      dG.col(t).segment(0, H) = da_r.matrix();
      dG.col(t).segment(H, H) = da_z.matrix();
      dG.col(t).segment(2 * H, H) = da_n.matrix();

      v3.segment(0, H) = da_r.matrix();
      v3.segment(H, H) = da_z.matrix();
      v3.segment(2 * H, H) = dhn.matrix();

      dWh.noalias() += v3 * hp.matrix().transpose();
      dbh += v3;

      if (p - k >= 0) {
        dhp_gate = dh * z;
        dH.col(p - k).noalias() += dhp_gate.matrix();
        dH.col(p - k).noalias() += whc.transpose() * v3;
      }
    }
  }

  auto add_grad = [&](const Tensor<S>& param, auto&& fill) {
    auto node = param.node();
    if (!node->requires_grad) return;
    node->ensure_grad();
    fill(node->grad.data());
  };

  // input-side gradients
  MatR<S> wi(R, din);
  for (int h = 0; h < H; ++h)
    for (std::size_t c = 0; c < din; ++c) {
      wi(h, c) = dir.w_ir.data()[h * din + c];
      wi(H + h, c) = dir.w_iz.data()[h * din + c];
      wi(2 * H + h, c) = dir.w_in.data()[h * din + c];
    }
  if (xnode.requires_grad) {
    xnode.ensure_grad();
    Eigen::Map<MatR<S>> dx(xnode.grad.data(), din, T);
    dx.noalias() += wi.transpose() * dG;
  }
  Eigen::Map<const MatR<S>> xm(xnode.value.data(), din, T);
  MatR<S> dwi(R, din);
  dwi.noalias() = dG * xm.transpose();
  V dgrow = dG.rowwise().sum();

  add_grad(dir.w_ir, [&](S* gp) {
    for (int h = 0; h < H; ++h)
      for (std::size_t c = 0; c < din; ++c) gp[h * din + c] += dwi(h, c);
  });
  add_grad(dir.w_iz, [&](S* gp) {
    for (int h = 0; h < H; ++h)
      for (std::size_t c = 0; c < din; ++c) gp[h * din + c] += dwi(H + h, c);
  });
  add_grad(dir.w_in, [&](S* gp) {
    for (int h = 0; h < H; ++h)
      for (std::size_t c = 0; c < din; ++c) gp[h * din + c] += dwi(2 * H + h, c);
  });
  add_grad(dir.w_hr, [&](S* gp) {
    for (int h = 0; h < H; ++h)
      for (int c = 0; c < H; ++c) gp[h * H + c] += dWh(h, c);
  });
  add_grad(dir.w_hz, [&](S* gp) {
    for (int h = 0; h < H; ++h)
      for (int c = 0; c < H; ++c) gp[h * H + c] += dWh(H + h, c);
  });
  add_grad(dir.w_hn, [&](S* gp) {
    for (int h = 0; h < H; ++h)
      for (int c = 0; c < H; ++c) gp[h * H + c] += dWh(2 * H + h, c);
  });
  add_grad(dir.b_ir, [&](S* gp) { for (int h = 0; h < H; ++h) gp[h] += dgrow[h]; });
  add_grad(dir.b_iz, [&](S* gp) { for (int h = 0; h < H; ++h) gp[h] += dgrow[H + h]; });
  add_grad(dir.b_in, [&](S* gp) { for (int h = 0; h < H; ++h) gp[h] += dgrow[2 * H + h]; });
  add_grad(dir.b_hr, [&](S* gp) { for (int h = 0; h < H; ++h) gp[h] += dbh[h]; });
  add_grad(dir.b_hz, [&](S* gp) { for (int h = 0; h < H; ++h) gp[h] += dbh[H + h]; });
  add_grad(dir.b_hn, [&](S* gp) { for (int h = 0; h < H; ++h) gp[h] += dbh[2 * H + h]; });
}

}  // namespace gru_detail

// Forward pass of the dilated GRU. `branch_workers` is the number of branch
// recurrences advanced in lockstep per step; results are bit-identical for
// every worker count. h0, when given, holds one [k x H] tensor per direction.
template <class S>
Tensor<S> dilated_gru_parallel_forward(const DilatedGruParams<S>& params,
                                       const Tensor<S>& x, int branch_workers,
                                       const std::vector<Tensor<S>>* h0 = nullptr,
                                       GruGates<S>* gates_out = nullptr) {
  if (params.dilation < 1) throw config_error("gru dilation must be >= 1");
  if (branch_workers < 1) throw config_error("gru branch_workers must be >= 1");
  if (x.ndim() != 2 || x.shape()[0] != params.input)
    throw shape_error("gru input shape mismatch: expected [" +
                      std::to_string(params.input) + " x T], got " +
                      shape_string(x.shape()));
  const std::size_t T = x.shape()[1];
  if (T < 1) throw shape_error("gru input must have at least one timestep");
  const std::size_t H = params.hidden;
  const int k = params.dilation;
  const int width = std::min<int>(branch_workers, k);
  const std::size_t ndir = params.directions.size();

  bool needs_grad = x.requires_grad();
  for (const auto& d : params.directions)
    for (const auto& t : {d.w_ir, d.w_iz, d.w_in, d.w_hr, d.w_hz, d.w_hn, d.b_ir, d.b_iz,
                          d.b_in, d.b_hr, d.b_hz, d.b_hn})
      needs_grad = needs_grad || t.requires_grad();

  auto works = std::make_shared<std::vector<gru_detail::DirWork<S>>>(ndir);
  for (std::size_t d = 0; d < ndir; ++d) {
    gru_detail::run_direction(params.directions[d], x.data(), params.input, T, k, width,
                              /*reversed=*/d == 1, /*keep_traces=*/needs_grad,
                              h0 && d < h0->size() ? &(*h0)[d] : nullptr, (*works)[d]);
  }
  if (gates_out) {
    gates_out->r.clear();
    gates_out->z.clear();
    gates_out->n.clear();
    // traces are only kept in grad mode; recompute cheaply when asked for
    for (std::size_t d = 0; d < ndir; ++d) {
      if (!needs_grad) {
        gru_detail::DirWork<S> tw;
        gru_detail::run_direction(params.directions[d], x.data(), params.input, T, k,
                                  width, d == 1, true,
                                  h0 && d < h0->size() ? &(*h0)[d] : nullptr, tw);
        gates_out->r.push_back(tw.tr_r);
        gates_out->z.push_back(tw.tr_z);
        gates_out->n.push_back(tw.tr_n);
      } else {
        gates_out->r.push_back((*works)[d].tr_r);
        gates_out->z.push_back((*works)[d].tr_z);
        gates_out->n.push_back((*works)[d].tr_n);
      }
    }
  }

  const std::size_t hout = params.output_channels();
  std::vector<NodePtr<S>> parents{x.node()};
  for (const auto& d : params.directions)
    for (const auto& t : {d.w_ir, d.w_iz, d.w_in, d.w_hr, d.w_hz, d.w_hn, d.b_ir, d.b_iz,
                          d.b_in, d.b_hr, d.b_hz, d.b_hn})
      parents.push_back(t.node());

  auto xn = x.node();
  DilatedGruParams<S> pcopy = params;  // shallow copies of the shared handles
  Tensor<S> out = detail::make_op<S>(
      {hout, T}, "dilated_gru", std::move(parents),
      [xn, pcopy, works, T, k, H](TensorNode<S>& self) {
        if (xn->requires_grad) xn->ensure_grad();
        for (std::size_t d = 0; d < pcopy.directions.size(); ++d) {
          const S* dout_rows = self.grad.data() + d * H * T;
          gru_detail::backward_direction(pcopy.directions[d], *xn, dout_rows, T, T, k,
                                         d == 1, (*works)[d]);
        }
      });

  // assemble [Hout x T] row-major: forward rows, then backward rows
  for (std::size_t d = 0; d < ndir; ++d) {
    const auto& o = (*works)[d].out;
    for (std::size_t p = 0; p < T; ++p) {
      const std::size_t t = (d == 1) ? T - 1 - p : p;
      for (std::size_t h = 0; h < H; ++h)
        out.data()[(d * H + h) * T + t] = o(h, p);
    }
  }
  if (!needs_grad) works->clear();
  detail::check_finite(out.data(), out.size(), "dilated_gru");
  return out;
}

template <class S>
Tensor<S> dilated_gru_forward(const DilatedGruParams<S>& params, const Tensor<S>& x,
                              const std::vector<Tensor<S>>* h0 = nullptr,
                              GruGates<S>* gates_out = nullptr) {
  return dilated_gru_parallel_forward(params, x, 1, h0, gates_out);
}

}  // namespace d2sep
