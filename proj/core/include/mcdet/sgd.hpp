#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mcdet/network.hpp"

namespace mcdet {

struct LrStep {
  std::size_t iteration = 0;
  double learning_rate = 0.0;
};

struct SgdConfig {
  double learning_rate = 0.001;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  /// Piecewise-constant schedule; the last step at or before an iteration wins.
  std::vector<LrStep> schedule{{0, 0.001}, {30000, 0.0001}};

  /// Throws ConfigError on out-of-range values or a non-increasing schedule.
  void validate() const;
  double lr_at(std::size_t iteration) const;
};

/// SGD with momentum and L2 weight decay:
///   v <- momentum * v - lr * (grad + weight_decay * param);  param <- param + v
template <typename T>
class SgdOptimizer {
 public:
  explicit SgdOptimizer(SgdConfig config);

  /// Updates only the given parameters; velocities are tracked by name.
  /// Throws InternalError naming any parameter without a gradient.
  void step(std::span<const NamedParam<T>> params, std::size_t iteration);

  const SgdConfig& config() const noexcept { return config_; }

 private:
  SgdConfig config_;
  std::map<std::string, std::vector<T>> velocity_;
};

extern template class SgdOptimizer<float>;
extern template class SgdOptimizer<double>;

}  // namespace mcdet
