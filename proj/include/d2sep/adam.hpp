#pragma once

#include <cmath>
#include <vector>

#include "d2sep/tensor.hpp"

namespace d2sep {

// Bias-corrected Adam state over an ordered parameter list.
template <class S>
struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step_count = 0;
  std::vector<AlignedVec<S>> first_moment;
  std::vector<AlignedVec<S>> second_moment;

  static AdamState init(const std::vector<Tensor<S>>& params, double lr = 1e-3,
                        double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) {
    AdamState st;
    st.learning_rate = lr;
    st.beta1 = b1;
    st.beta2 = b2;
    st.epsilon = eps;
    st.first_moment.reserve(params.size());
    st.second_moment.reserve(params.size());
    for (const auto& p : params) {
      st.first_moment.emplace_back(p.size(), S(0));
      st.second_moment.emplace_back(p.size(), S(0));
    }
    return st;
  }
};

// One Adam update. Gradients are left untouched; the caller zeroes them.
template <class S>
void adam_step(std::vector<Tensor<S>>& params, AdamState<S>& st) {
  if (params.size() != st.first_moment.size())
    throw contract_error("adam_step: state does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad())
      throw contract_error("adam_step: parameter " + std::to_string(i) +
                           " has no populated grad");
    if (st.first_moment[i].size() != params[i].size())
      throw contract_error("adam_step: moment buffer shape mismatch at parameter " +
                           std::to_string(i));
  }
  st.step_count += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    S* p = params[i].data();
    const S* g = params[i].grad_data();
    S* m = st.first_moment[i].data();
    S* v = st.second_moment[i].data();
    const std::size_t n = params[i].size();
    for (std::size_t j = 0; j < n; ++j) {
      const double gj = static_cast<double>(g[j]);
      const double mj = st.beta1 * static_cast<double>(m[j]) + (1.0 - st.beta1) * gj;
      const double vj = st.beta2 * static_cast<double>(v[j]) + (1.0 - st.beta2) * gj * gj;
      m[j] = static_cast<S>(mj);
      v[j] = static_cast<S>(vj);
      const double mhat = mj / bc1;
      const double vhat = vj / bc2;
      p[j] = static_cast<S>(static_cast<double>(p[j]) -
                            st.learning_rate * mhat / (std::sqrt(vhat) + st.epsilon));
    }
    detail::check_finite(p, n, "adam_step");
  }
}

// Global-norm gradient clipping. Returns the pre-clip norm.
template <class S>
double clip_grad_norm(std::vector<Tensor<S>>& params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params) {
    if (!p.has_grad()) continue;
    const S* g = p.grad_data();
    for (std::size_t i = 0; i < p.size(); ++i)
      sq += static_cast<double>(g[i]) * static_cast<double>(g[i]);
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const S s = static_cast<S>(max_norm / norm);
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      S* g = p.grad_data();
      for (std::size_t i = 0; i < p.size(); ++i) g[i] *= s;
    }
  }
  return norm;
}

}  // namespace d2sep
