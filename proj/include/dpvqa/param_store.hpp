#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "dpvqa/tensor.hpp"

namespace dpvqa {

enum class Init {
  fan_in_uniform,  // uniform(−1/√fan_in, +1/√fan_in), fan_in = trailing extent
  zeros,
  unit_uniform,    // uniform(−1, 1), used for embedding tables
};

// Named trainable parameters. Each tensor is initialized from a stream keyed
// by (seed, name), so adding a parameter never perturbs the others.
template <class T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Creates the parameter; throws ContractError on a duplicate id.
  Tensor<T>& add(const std::string& name, Shape shape, Init init);
  Tensor<T>& get(const std::string& name);
  const Tensor<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  /// Re-draws every parameter from the construction seed.
  void reinitialize();
  void zero_grad();
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  std::map<std::string, Tensor<T>>& entries() { return params_; }
  const std::map<std::string, Tensor<T>>& entries() const { return params_; }

 private:
  void fill(const std::string& name, Tensor<T>& t, Init init) const;

  std::uint64_t seed_;
  std::map<std::string, Tensor<T>> params_;
  std::map<std::string, Init> inits_;
};

std::uint64_t hash_string(const std::string& text, std::uint64_t basis = 1469598103934665603ULL);

extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace dpvqa
