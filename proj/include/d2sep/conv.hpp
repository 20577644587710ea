#pragma once

#include <Eigen/Dense>
#include <vector>

#include "d2sep/tensor.hpp"

namespace d2sep {

// Weight-normalized grouped 1-D convolution parameters. The effective kernel
// is g * v / ||v|| per output channel; groups partition channels with no
// cross-group connections; symmetric zero padding keeps the length.
template <class S>
struct GroupedConvParams {
  Tensor<S> v;     // [C_out x C_in/G x K] direction tensor
  Tensor<S> g;     // [C_out] magnitudes
  Tensor<S> bias;  // [C_out]
  std::size_t in_channels = 0, out_channels = 0;
  int groups = 1, kernel = 1, dilation = 1;

  static GroupedConvParams init(Rng& rng, std::size_t in_channels,
                                std::size_t out_channels, int groups, int kernel,
                                int dilation, bool requires_grad = true) {
    if (groups < 1 || kernel < 1 || dilation < 1)
      throw config_error("conv groups, kernel and dilation must be >= 1");
    if (in_channels % groups != 0 || out_channels % groups != 0)
      throw config_error("conv channels (" + std::to_string(in_channels) + "," +
                         std::to_string(out_channels) + ") not divisible by groups " +
                         std::to_string(groups));
    if ((kernel - 1) * dilation % 2 != 0)
      throw config_error("conv span (K-1)*d must be even for symmetric padding");
    GroupedConvParams p;
    p.in_channels = in_channels;
    p.out_channels = out_channels;
    p.groups = groups;
    p.kernel = kernel;
    p.dilation = dilation;
    const std::size_t cpg = in_channels / groups;
    const std::size_t fan_in = cpg * static_cast<std::size_t>(kernel);
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    p.v = Tensor<S>::uniform(rng, {out_channels, cpg, static_cast<std::size_t>(kernel)},
                             -s, s, requires_grad);
    p.bias = Tensor<S>::uniform(rng, {out_channels}, -s, s, requires_grad);
    // g starts at ||v|| so the initial effective weights equal the raw init
    p.g = Tensor<S>::zeros({out_channels}, requires_grad);
    const std::size_t f = cpg * static_cast<std::size_t>(kernel);
    for (std::size_t c = 0; c < out_channels; ++c) {
      double sq = 0.0;
      for (std::size_t i = 0; i < f; ++i) {
        const double x = static_cast<double>(p.v.data()[c * f + i]);
        sq += x * x;
      }
      p.g.data()[c] = static_cast<S>(std::sqrt(sq));
    }
    return p;
  }

  std::vector<Tensor<S>> parameters() const { return {v, g, bias}; }
  static std::vector<std::string> parameter_names() { return {"v", "g", "bias"}; }
};

// w = g * v / ||v||_2, per output channel (row of the flattened [C_out x F] view).
template <class S>
Tensor<S> weight_norm_effective(const Tensor<S>& v, const Tensor<S>& g) {
  if (v.ndim() < 2 || g.size() != v.shape()[0])
    throw shape_error("weight_norm shapes: v " + shape_string(v.shape()) + ", g " +
                      shape_string(g.shape()));
  const std::size_t cout = v.shape()[0];
  const std::size_t f = v.size() / cout;
  auto vn = v.node();
  auto gn = g.node();

  // per-channel norms computed once, shared by forward and backward
  auto norms = std::make_shared<AlignedVec<S>>(cout);
  for (std::size_t c = 0; c < cout; ++c) {
    double sq = 0.0;
    for (std::size_t i = 0; i < f; ++i) {
      const double x = static_cast<double>(v.data()[c * f + i]);
      sq += x * x;
    }
    if (sq == 0.0)
      throw numeric_error("weight_norm: zero-norm direction vector at channel " +
                          std::to_string(c));
    (*norms)[c] = static_cast<S>(std::sqrt(sq));
  }

  Tensor<S> out = detail::make_op<S>(
      v.shape(), "weight_norm", {vn, gn}, [vn, gn, norms, cout, f](TensorNode<S>& self) {
        for (std::size_t c = 0; c < cout; ++c) {
          const S nv = (*norms)[c];
          const S gc = gn->value[c];
          const S* vc = vn->value.data() + c * f;
          const S* dw = self.grad.data() + c * f;
          S vdw = S(0);
          for (std::size_t i = 0; i < f; ++i) vdw += vc[i] * dw[i];
          if (gn->requires_grad) {
            gn->ensure_grad();
            gn->grad[c] += vdw / nv;
          }
          if (vn->requires_grad) {
            vn->ensure_grad();
            S* dv = vn->grad.data() + c * f;
            const S a = gc / nv;
            const S b = gc * vdw / (nv * nv * nv);
            for (std::size_t i = 0; i < f; ++i) dv[i] += a * dw[i] - b * vc[i];
          }
        }
      });
  for (std::size_t c = 0; c < cout; ++c) {
    const S s = g.data()[c] / (*norms)[c];
    for (std::size_t i = 0; i < f; ++i) out.data()[c * f + i] = s * v.data()[c * f + i];
  }
  detail::check_finite(out.data(), out.size(), "weight_norm");
  return out;
}

// Length-preserving grouped dilated conv. x: [C_in x T], w: [C_out x C_in/G x K],
// bias: [C_out] -> [C_out x T]. Output channels of group g see only input
// channels of group g; receptive field per layer is d*(K-1)+1.
template <class S>
Tensor<S> grouped_conv1d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias,
                         int groups, int dilation) {
  if (x.ndim() != 2) throw shape_error("conv input must be [C_in x T]");
  if (w.ndim() != 3) throw shape_error("conv weights must be [C_out x C_in/G x K]");
  const std::size_t cin = x.shape()[0], T = x.shape()[1];
  const std::size_t cout = w.shape()[0], cpg = w.shape()[1];
  const int K = static_cast<int>(w.shape()[2]);
  if (groups < 1 || dilation < 1) throw config_error("conv groups/dilation must be >= 1");
  if (cin % groups != 0 || cout % groups != 0)
    throw shape_error("conv channels not divisible by groups: C_in=" +
                      std::to_string(cin) + " C_out=" + std::to_string(cout) +
                      " G=" + std::to_string(groups));
  if (cpg != cin / groups)
    throw shape_error("conv weight C_in/G mismatch: " + std::to_string(cpg) + " vs " +
                      std::to_string(cin / groups));
  if (bias.size() != cout) throw shape_error("conv bias size mismatch");
  if ((K - 1) * dilation % 2 != 0)
    throw config_error("conv span (K-1)*d must be even for symmetric padding");
  if (T < 1) throw shape_error("conv input must have at least one timestep");

  const std::size_t co_per_g = cout / groups;
  const int center = (K - 1) / 2 * dilation;

  auto xn = x.node();
  auto wn = w.node();
  auto bn = bias.node();
  Tensor<S> out = detail::make_op<S>(
      {cout, T}, "grouped_conv1d", {xn, wn, bn},
      [xn, wn, bn, cin, cout, cpg, T, K, groups, dilation, co_per_g,
       center](TensorNode<S>& self) {
        const std::size_t iT = T;
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (std::size_t co = 0; co < cout; ++co) {
            S acc = S(0);
            const S* dout = self.grad.data() + co * iT;
            for (std::size_t t = 0; t < iT; ++t) acc += dout[t];
            bn->grad[co] += acc;
          }
        }
        if (xn->requires_grad) xn->ensure_grad();
        if (wn->requires_grad) wn->ensure_grad();
        for (std::size_t co = 0; co < cout; ++co) {
          const std::size_t g = co / co_per_g;
          const S* dout = self.grad.data() + co * iT;
          for (std::size_t cl = 0; cl < cpg; ++cl) {
            const std::size_t ci = g * cpg + cl;
            const S* xrow = xn->value.data() + ci * iT;
            S* dxrow = xn->requires_grad ? xn->grad.data() + ci * iT : nullptr;
            for (int kk = 0; kk < K; ++kk) {
              const long off = static_cast<long>(kk) * dilation - center;
              const long t0 = off < 0 ? -off : 0;
              const long t1 = off > 0 ? static_cast<long>(iT) - off
                                      : static_cast<long>(iT);
              const std::size_t widx = (co * cpg + cl) * K + kk;
              const S wv = wn->value[widx];
              if (t0 >= t1) continue;
              if (dxrow) {
                for (long t = t0; t < t1; ++t) dxrow[t + off] += wv * dout[t];
              }
              if (wn->requires_grad) {
                S acc = S(0);
                for (long t = t0; t < t1; ++t) acc += dout[t] * xrow[t + off];
                wn->grad[widx] += acc;
              }
            }
          }
        }
      });

  for (std::size_t co = 0; co < cout; ++co) {
    const std::size_t g = co / co_per_g;
    S* orow = out.data() + co * T;
    const S bv = bias.data()[co];
    for (std::size_t t = 0; t < T; ++t) orow[t] = bv;
    for (std::size_t cl = 0; cl < cpg; ++cl) {
      const std::size_t ci = g * cpg + cl;
      const S* xrow = x.data() + ci * T;
      for (int kk = 0; kk < K; ++kk) {
        const long off = static_cast<long>(kk) * dilation - center;
        const long t0 = off < 0 ? -off : 0;
        const long t1 = off > 0 ? static_cast<long>(T) - off : static_cast<long>(T);
        const S wv = w.data()[(co * cpg + cl) * K + kk];
        for (long t = t0; t < t1; ++t) orow[t] += wv * xrow[t + off];
      }
    }
  }
  detail::check_finite(out.data(), out.size(), "grouped_conv1d");
  return out;
}

// Convenience: weight-normed grouped conv from a parameter bundle.
template <class S>
Tensor<S> conv_forward(const GroupedConvParams<S>& p, const Tensor<S>& x) {
  Tensor<S> w = weight_norm_effective(p.v, p.g);
  return grouped_conv1d(x, w, p.bias, p.groups, p.dilation);
}

}  // namespace d2sep
