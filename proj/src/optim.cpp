#include "alt/optim.hpp"

#include <cmath>

#include "alt/errors.hpp"

namespace alt::train {

void AdamConfig::validate() const {
  if (!(lr > 0) || !std::isfinite(lr)) throw ValidationError("lr must be > 0");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw ValidationError("adam betas must be in [0, 1)");
  if (!(eps > 0)) throw ValidationError("adam eps must be > 0");
  if (max_grad_norm < 0) throw ValidationError("max_grad_norm must be >= 0");
}

nlohmann::json AdamConfig::to_json() const {
  return {{"lr", lr}, {"beta1", beta1}, {"beta2", beta2}, {"eps", eps}, {"max_grad_norm", max_grad_norm}};
}

AdamConfig AdamConfig::from_json(const nlohmann::json& j) {
  AdamConfig c;
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
  c.validate();
  return c;
}

void LinearWarmupSchedule::validate() const {
  if (warmup_steps < 0) throw ValidationError("warmup_steps must be >= 0");
  if (total_steps < 1) throw ValidationError("total_steps must be >= 1");
  if (warmup_steps > total_steps) throw ValidationError("warmup_steps must not exceed total_steps");
}

double LinearWarmupSchedule::factor(std::int64_t step) const {
  if (step <= 0) return 0.0;
  if (step <= warmup_steps) return static_cast<double>(step) / static_cast<double>(warmup_steps);
  if (step >= total_steps) return 0.0;
  return static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warmup_steps);
}

void AdamState::resize(std::size_t n) {
  m.assign(n, 0.0f);
  v.assign(n, 0.0f);
  t = 0;
}

std::vector<lm::NamedTensor> AdamState::to_tensors(const lm::ParamLayout& layout) const {
  std::vector<lm::NamedTensor> out;
  for (const auto* buf : {&m, &v}) {
    const std::string prefix = buf == &m ? "adam.m/" : "adam.v/";
    for (const auto& info : layout.tensors()) {
      lm::NamedTensor nt{prefix + info.name, {}, {}};
      for (auto s : info.shape) nt.shape.push_back(s);
      nt.data.assign(buf->begin() + static_cast<std::ptrdiff_t>(info.offset),
                     buf->begin() + static_cast<std::ptrdiff_t>(info.offset + info.size));
      out.push_back(std::move(nt));
    }
  }
  return out;
}

AdamState AdamState::from_tensors(const lm::ParamLayout& layout, const std::vector<lm::NamedTensor>& extra,
                                  std::int64_t t) {
  AdamState s;
  s.resize(layout.total());
  s.t = t;
  std::size_t found = 0;
  for (const auto& nt : extra) {
    std::vector<float>* buf = nullptr;
    std::string name;
    if (nt.name.rfind("adam.m/", 0) == 0) {
      buf = &s.m;
      name = nt.name.substr(7);
    } else if (nt.name.rfind("adam.v/", 0) == 0) {
      buf = &s.v;
      name = nt.name.substr(7);
    } else {
      continue;
    }
    const auto& info = layout.find(name);
    if (nt.data.size() != info.size) throw ValidationError("optimizer tensor size mismatch for " + nt.name);
    std::copy(nt.data.begin(), nt.data.end(), buf->begin() + static_cast<std::ptrdiff_t>(info.offset));
    ++found;
  }
  if (found != 2 * layout.tensors().size()) throw ValidationError("checkpoint is missing optimizer state");
  return s;
}

double grad_norm(std::span<const float> grads) {
  double s = 0.0;
  for (float g : grads) s += static_cast<double>(g) * g;
  return std::sqrt(s);
}

double adam_step(AdamState& state, std::span<float> params, std::span<const float> grads, const AdamConfig& cfg,
                 const LinearWarmupSchedule& schedule) {
  const double lr = cfg.lr * schedule.factor(state.t + 1);
  adam_step(state, params, grads, cfg, lr);
  return lr;
}

void adam_step(AdamState& state, std::span<float> params, std::span<const float> grads, const AdamConfig& cfg,
               double lr) {
  if (state.m.size() != params.size()) state.resize(params.size());
  if (grads.size() != params.size()) throw ValidationError("gradient size does not match parameters");
  const std::int64_t step = state.t + 1;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) throw NumericError("non-finite gradient at optimizer step", static_cast<std::size_t>(step));
  }
  double scale = 1.0;
  if (cfg.max_grad_norm > 0) {
    const double n = grad_norm(grads);
    if (n > cfg.max_grad_norm) scale = cfg.max_grad_norm / n;
  }
  state.t = step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i] * scale;
    const double m = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    const double v = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    state.m[i] = static_cast<float>(m);
    state.v[i] = static_cast<float>(v);
    params[i] -= static_cast<float>(lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps));
  }
}

}  // namespace alt::train
