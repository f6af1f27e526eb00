#include "specmask/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace specmask {

AdamState AdamState::make(const std::vector<Tensor>& params, double lr) {
  AdamState st;
  st.lr = lr;
  st.m.reserve(params.size());
  st.v.reserve(params.size());
  for (const Tensor& p : params) {
    st.m.emplace_back(p.data().size(), 0.0);
    st.v.emplace_back(p.data().size(), 0.0);
  }
  return st;
}

void adam_step(std::vector<Tensor>& params, AdamState& state) {
  if (params.size() != state.m.size()) {
    throw std::invalid_argument("adam_step: state tracks " + std::to_string(state.m.size()) +
                                " parameters, got " + std::to_string(params.size()));
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (size_t p = 0; p < params.size(); ++p) {
    auto& data = params[p].mutable_data();
    if (state.m[p].size() != data.size()) {
      throw std::invalid_argument("adam_step: parameter " + std::to_string(p) +
                                  " changed size under the optimizer");
    }
    const bool has_grad = params[p].has_grad();
    const std::vector<double>* g = has_grad ? &params[p].grad() : nullptr;
    auto& m = state.m[p];
    auto& v = state.v[p];
    for (size_t i = 0; i < data.size(); ++i) {
      const double gi = has_grad ? (*g)[i] : 0.0;
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      data[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

std::vector<double> adam_effective_steps(const AdamState& state, size_t param_index,
                                         double denom_floor) {
  const auto& v = state.v.at(param_index);
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  std::vector<double> steps(v.size());
  for (size_t i = 0; i < v.size(); ++i) {
    const double vhat = v[i] / bc2;
    steps[i] = state.lr / (std::sqrt(vhat) + denom_floor);
  }
  return steps;
}

}  // namespace specmask
