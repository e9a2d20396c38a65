#include "dpvqa/param_store.hpp"

#include <cmath>
#include <random>

namespace dpvqa {

std::uint64_t hash_string(const std::string& text, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

template <class T>
Tensor<T>& ParamStore<T>::add(const std::string& name, Shape shape, Init init) {
  if (params_.count(name)) throw ContractError("duplicate parameter id '" + name + "'");
  auto t = Tensor<T>::zeros(std::move(shape), true);
  fill(name, t, init);
  inits_[name] = init;
  return params_.emplace(name, std::move(t)).first->second;
}

template <class T>
Tensor<T>& ParamStore<T>::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter id '" + name + "'");
  return it->second;
}

template <class T>
const Tensor<T>& ParamStore<T>::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter id '" + name + "'");
  return it->second;
}

template <class T>
void ParamStore<T>::reinitialize() {
  for (auto& [name, t] : params_) {
    fill(name, t, inits_.at(name));
    t.zero_grad();
  }
}

template <class T>
void ParamStore<T>::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

template <class T>
std::size_t ParamStore<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

template <class T>
void ParamStore<T>::fill(const std::string& name, Tensor<T>& t, Init init) const {
  auto data = t.mutable_data();
  if (init == Init::zeros) {
    std::fill(data.begin(), data.end(), T(0));
    return;
  }
  double bound = 1.0;
  if (init == Init::fan_in_uniform) bound = 1.0 / std::sqrt(static_cast<double>(t.shape().back()));
  // Draw in double and round once so both precisions see the same stream.
  std::mt19937_64 rng(hash_string(name, seed_ ^ 0x9e3779b97f4a7c15ULL));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : data) v = static_cast<T>(dist(rng));
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace dpvqa
