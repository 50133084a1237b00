#include "cdnas/optim.hpp"

#include <cmath>

namespace cdnas {

template <typename T>
void Sgd<T>::step(std::vector<Var<T>>& params) {
  for (auto& p : params) {
    if (!p.has_grad() && wd_ == 0.0) continue;
    const Tensor<T> g = p.grad();
    auto& v = p.mutable_value();
    for (std::size_t i = 0; i < v.numel(); ++i) {
      v[i] -= static_cast<T>(this->lr_ * (double(g[i]) + wd_ * double(v[i])));
    }
  }
}

template <typename T>
void Adam<T>::step(std::vector<Var<T>>& params) {
  for (auto& p : params) {
    const Tensor<T> g = p.grad();
    auto& v = p.mutable_value();
    auto& st = state_[p.node().get()];
    if (st.m.empty()) {
      st.m.assign(v.numel(), 0.0);
      st.v.assign(v.numel(), 0.0);
    }
    ++st.t;
    const double c1 = 1.0 - std::pow(b1_, double(st.t));
    const double c2 = 1.0 - std::pow(b2_, double(st.t));
    for (std::size_t i = 0; i < v.numel(); ++i) {
      const double gi = double(g[i]) + wd_ * double(v[i]);
      st.m[i] = b1_ * st.m[i] + (1.0 - b1_) * gi;
      st.v[i] = b2_ * st.v[i] + (1.0 - b2_) * gi * gi;
      const double mhat = st.m[i] / c1, vhat = st.v[i] / c2;
      v[i] -= static_cast<T>(this->lr_ * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

template class Sgd<float>;
template class Sgd<double>;
template class Adam<float>;
template class Adam<double>;

}  // namespace cdnas
