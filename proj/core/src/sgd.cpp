#include "mcdet/sgd.hpp"

#include "mcdet/error.hpp"

namespace mcdet {

void SgdConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (!(schedule[i].learning_rate > 0.0)) throw ConfigError("schedule learning rates must be positive");
    if (i > 0 && schedule[i].iteration <= schedule[i - 1].iteration) {
      throw ConfigError("learning-rate schedule iterations must be strictly increasing");
    }
  }
}

double SgdConfig::lr_at(std::size_t iteration) const {
  double lr = learning_rate;
  for (const auto& s : schedule) {
    if (s.iteration > iteration) break;
    lr = s.learning_rate;
  }
  return lr;
}

template <typename T>
SgdOptimizer<T>::SgdOptimizer(SgdConfig config) : config_(std::move(config)) {
  config_.validate();
}

template <typename T>
void SgdOptimizer<T>::step(std::span<const NamedParam<T>> params, std::size_t iteration) {
  for (const auto& p : params) {
    if (!p.tensor->has_grad()) throw InternalError("parameter '" + p.name + "' has no gradient");
  }
  const T lr = static_cast<T>(config_.lr_at(iteration));
  const T momentum = static_cast<T>(config_.momentum);
  const T decay = static_cast<T>(config_.weight_decay);
  for (const auto& p : params) {
    auto& v = velocity_[p.name];
    auto data = p.tensor->data();
    const auto grad = std::as_const(*p.tensor).grad();
    if (v.size() != data.size()) v.assign(data.size(), T{});
    for (std::size_t i = 0; i < data.size(); ++i) {
      v[i] = momentum * v[i] - lr * (grad[i] + decay * data[i]);
      data[i] += v[i];
    }
  }
}

template class SgdOptimizer<float>;
template class SgdOptimizer<double>;

}  // namespace mcdet
