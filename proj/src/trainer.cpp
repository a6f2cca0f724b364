#include "alt/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "alt/errors.hpp"
#include "alt/rng.hpp"

namespace alt::train {

void TrainerConfig::validate() const {
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (warmup_fraction < 0 || warmup_fraction > 1) throw ValidationError("warmup_fraction must be in [0, 1]");
}

nlohmann::json TrainerConfig::to_json() const {
  return {{"batch_size", batch_size}, {"epochs", epochs}, {"warmup_fraction", warmup_fraction}, {"seed", seed}};
}

TrainerConfig TrainerConfig::from_json(const nlohmann::json& j) {
  TrainerConfig c;
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

nlohmann::json StepMetrics::to_json() const {
  return {{"step", step}, {"lr", lr},           {"loss", loss},          {"nll", nll},
          {"kl", kl},     {"entropy", entropy}, {"grad_norm", grad_norm}};
}

std::int64_t steps_per_iteration(std::size_t n, const TrainerConfig& cfg) {
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  return static_cast<std::int64_t>(cfg.epochs) * static_cast<std::int64_t>((n + bs - 1) / bs);
}

std::vector<StepMetrics> train_iteration(lm::Parameters<float>& params, const lm::Parameters<float>* ref,
                                         std::span<const TrainExample> examples, const LossConfig& loss,
                                         AdamState& opt, const AdamConfig& adam, const TrainerConfig& cfg,
                                         const SpecialTokens& special,
                                         const std::function<void(const StepMetrics&)>& on_step) {
  cfg.validate();
  loss.validate();
  std::vector<StepMetrics> out;
  if (examples.empty()) throw ValidationError("train_iteration needs at least one example");
  if (opt.m.size() != params.values.size()) opt.resize(params.values.size());

  // Rows are built up front so an over-long sample fails before any update.
  std::vector<TrainRow> rows;
  rows.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    rows.push_back(build_row(examples[i], special, params.config.max_seq_len, params.config.prompt_position, i));
  }

  LinearWarmupSchedule schedule;
  schedule.total_steps = steps_per_iteration(examples.size(), cfg);
  schedule.warmup_steps = static_cast<std::int64_t>(std::floor(cfg.warmup_fraction * schedule.total_steps));
  std::int64_t local = 0;

  std::vector<std::size_t> order(examples.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed({cfg.seed, static_cast<std::uint64_t>(epoch)}));
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<TrainRow> batch_rows;
      for (std::size_t i = start; i < end; ++i) batch_rows.push_back(rows[order[i]]);
      const TrainBatch batch = assemble_batch(std::move(batch_rows), special);
      const auto lg = loss_and_grads<float>(params, ref, batch, loss);

      StepMetrics m;
      m.grad_norm = grad_norm(lg.grads);
      m.lr = adam.lr * schedule.factor(++local);
      adam_step(opt, params.values, lg.grads, adam, m.lr);
      m.step = opt.t;
      m.loss = lg.terms.total;
      m.nll = lg.terms.nll;
      m.kl = lg.terms.kl;
      m.entropy = lg.terms.entropy;
      out.push_back(m);
      if (on_step) on_step(m);
    }
  }
  return out;
}

void append_step_log_jsonl(const std::string& path, std::span<const StepMetrics> steps) {
  std::ofstream f(path, std::ios::app);
  if (!f) throw std::runtime_error("cannot open " + path);
  for (const auto& s : steps) f << s.to_json().dump() << '\n';
}

void append_step_log_csv(const std::string& path, std::span<const StepMetrics> steps) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream f(path, std::ios::app);
  if (!f) throw std::runtime_error("cannot open " + path);
  if (fresh) f << "step,lr,loss,nll,kl,entropy,grad_norm\n";
  f.precision(9);
  for (const auto& s : steps) {
    f << s.step << ',' << s.lr << ',' << s.loss << ',' << s.nll << ',' << s.kl << ',' << s.entropy << ','
      << s.grad_norm << '\n';
  }
}

}  // namespace alt::train
