#include "alt/alt_loop.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>

#include "alt/checkpoint.hpp"
#include "alt/errors.hpp"
#include "alt/parallel.hpp"
#include "alt/rng.hpp"

namespace alt::loop {

namespace fs = std::filesystem;

namespace {

// Stream tags for mix_seed so every random draw in an iteration is independent.
enum : std::uint64_t { kDraw = 1, kSample = 2, kSelect = 3, kTrain = 4, kExemplar = 5 };

bool is_unconstrained(const LoopConfig& cfg) { return cfg.provider.kind == "llm_unconstrained"; }

}  // namespace

void LoopConfig::validate() const {
  if (n_iterations < 1) throw ValidationError("n_iterations must be >= 1");
  if (prompts_per_iteration < 1) throw ValidationError("prompts_per_iteration must be >= 1");
  if (generations_per_prompt < 1) throw ValidationError("generations_per_prompt must be >= 1");
  if (train_per_category < 0) throw ValidationError("train_per_category must be >= 0");
  if (exemplar.empty()) throw ValidationError("exemplar feedback must not be empty");
  scheme.validate();
  provider.validate();
  sampler.validate();
  loss.validate();
  adam.validate();
  trainer.validate();
  if (!is_unconstrained(*this)) exemplar_feedback(*this);
  if (scheme.encoding == feedback::Encoding::linearized) {
    for (const auto& l : scheme.labels) feedback::steerlm_linearize(l);
  }
}

nlohmann::json LoopConfig::to_json() const {
  return {{"n_iterations", n_iterations},
          {"prompts_per_iteration", prompts_per_iteration},
          {"generations_per_prompt", generations_per_prompt},
          {"train_per_category", train_per_category},
          {"replay", replay},
          {"exemplar", exemplar},
          {"scheme", scheme.to_json()},
          {"provider", provider.to_json()},
          {"sampler", sampler.to_json()},
          {"loss", loss.to_json()},
          {"adam", adam.to_json()},
          {"trainer", trainer.to_json()},
          {"seed", seed}};
}

LoopConfig LoopConfig::from_json(const nlohmann::json& j) {
  LoopConfig c;
  c.n_iterations = j.value("n_iterations", c.n_iterations);
  c.prompts_per_iteration = j.value("prompts_per_iteration", c.prompts_per_iteration);
  c.generations_per_prompt = j.value("generations_per_prompt", c.generations_per_prompt);
  c.train_per_category = j.value("train_per_category", c.train_per_category);
  c.replay = j.value("replay", c.replay);
  c.exemplar = j.value("exemplar", c.exemplar);
  if (j.contains("scheme")) c.scheme = feedback::QuantileScheme::from_json(j.at("scheme"));
  if (j.contains("provider")) c.provider = providers::ProviderConfig::from_json(j.at("provider"));
  if (j.contains("sampler")) c.sampler = lm::SamplerConfig::from_json(j.at("sampler"));
  if (j.contains("loss")) c.loss = train::LossConfig::from_json(j.at("loss"));
  if (j.contains("adam")) c.adam = train::AdamConfig::from_json(j.at("adam"));
  if (j.contains("trainer")) c.trainer = train::TrainerConfig::from_json(j.at("trainer"));
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

std::vector<std::string> variant_names() { return {"alt_rm", "quark", "steerlm", "alt_lmc", "alt_lmu"}; }

LoopConfig variant_profile(const std::string& name) {
  LoopConfig c;
  c.sampler.max_new_tokens = 20;
  c.sampler.top_p = 1.0;
  c.loss.beta = 0.05;
  c.loss.alpha = 0.06;
  if (name == "alt_rm" || name == "quark") {
    c.scheme = feedback::toxicity_scheme();
    if (name == "quark") c.scheme.encoding = feedback::Encoding::quantile_token;
    c.exemplar = "Lowest Toxicity";
    c.provider.kind = "quantile";
    return c;
  }
  // Dialogue and summarization style runs drop the KL term.
  c.loss.beta = 0.0;
  c.trainer.warmup_fraction = 0.05;
  c.provider.client.transport = "mock";
  if (name == "steerlm" || name == "alt_lmc") {
    c.scheme = feedback::dialogue_scheme();
    if (name == "steerlm") c.scheme.encoding = feedback::Encoding::linearized;
    c.exemplar = "Harmless and very helpful";
    c.provider.kind = "llm_categorical";
    c.provider.template_id = "lmc_dialogue.v1";
    c.provider.client.mock_fixture = "fixtures/categorical_dialogue.json";
    return c;
  }
  if (name == "alt_lmu") {
    c.scheme = feedback::summarization_scheme();
    c.exemplar = "Accurate and concise";
    c.provider.kind = "llm_unconstrained";
    c.provider.template_id = "lmu_summary.v1";
    c.provider.client.mock_fixture = "fixtures/unconstrained_summary.json";
    return c;
  }
  std::string known;
  for (const auto& n : variant_names()) known += (known.empty() ? "" : ", ") + n;
  throw ValidationError("unknown variant '" + name + "' (known: " + known + ")");
}

feedback::Feedback exemplar_feedback(const LoopConfig& cfg) {
  if (is_unconstrained(cfg)) {
    return feedback::UnconstrainedFeedback{"", cfg.exemplar, feedback::kMaxUnconstrainedScore};
  }
  for (const auto& l : cfg.scheme.labels) {
    if (l.text == cfg.exemplar) return l;
  }
  throw ValidationError("exemplar feedback '" + cfg.exemplar + "' is not a label of scheme " + cfg.scheme.name);
}

TokenSeq sampling_prefix(int k, const TokenSeq& prompt, const std::optional<TokenSeq>& feedback_tokens,
                         const SpecialTokens& special) {
  TokenSeq prefix;
  if (k >= 2 && feedback_tokens) {
    prefix = *feedback_tokens;
    prefix.push_back(special.separator);
  }
  prefix.insert(prefix.end(), prompt.begin(), prompt.end());
  if (prefix.empty()) prefix.push_back(special.eos);
  return prefix;
}

std::string checkpoint_path(const std::string& run_dir, int iteration) {
  return (fs::path(run_dir) / "checkpoints" / ("iter_" + std::to_string(iteration) + ".ckpt")).string();
}
std::string pool_path(const std::string& run_dir) { return (fs::path(run_dir) / "pool.jsonl").string(); }
std::string manifest_path(const std::string& run_dir) { return (fs::path(run_dir) / "manifest.json").string(); }

namespace {

struct LoopState {
  lm::Parameters<float> params;
  train::AdamState opt;
  pool::DataPool pool;
  nlohmann::json manifest;
  std::vector<std::vector<std::size_t>> selections;  // pool indices, per completed iteration
  int completed = 0;
};

void write_json(const std::string& path, const nlohmann::json& j) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp);
    if (!f) throw std::runtime_error("cannot write " + tmp);
    f << j.dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Exemplars for unconstrained feedback: the texts of earlier score-3 feedback,
// in pool order, without duplicates.
std::vector<std::string> best_feedback_texts(const pool::DataPool& pool) {
  std::vector<std::string> out;
  for (const auto& e : pool.entries()) {
    const auto* u = std::get_if<feedback::UnconstrainedFeedback>(&e.feedback);
    if (u && u->score == feedback::kMaxUnconstrainedScore &&
        std::find(out.begin(), out.end(), u->feedback) == out.end()) {
      out.push_back(u->feedback);
    }
  }
  return out;
}

void run_iteration(int k, RunSetup& setup, providers::FeedbackProvider& provider, LoopState& st) {
  const auto& cfg = setup.config;
  const Vocabulary& vocab = *setup.vocab;
  const auto& special = vocab.special();
  const auto t0 = std::chrono::steady_clock::now();
  nlohmann::json row = {{"iteration", k}};

  // 1. Draw prompts with replacement.
  Rng draw(mix_seed({cfg.seed, static_cast<std::uint64_t>(k), kDraw}));
  const auto Q = static_cast<std::size_t>(cfg.prompts_per_iteration);
  const auto G = static_cast<std::size_t>(cfg.generations_per_prompt);
  std::vector<std::size_t> drawn(Q);
  for (auto& d : drawn) d = draw.below(setup.prompts.size());

  // 2. Exemplar feedback tokens per draw (unconstrained runs rotate exemplars).
  std::vector<std::optional<TokenSeq>> fb_tokens(Q);
  if (k >= 2) {
    const auto fixed = feedback::encode_feedback(exemplar_feedback(cfg), cfg.scheme, vocab);
    const auto pool_exemplars = is_unconstrained(cfg) ? best_feedback_texts(st.pool) : std::vector<std::string>{};
    for (std::size_t q = 0; q < Q; ++q) {
      if (pool_exemplars.empty()) {
        fb_tokens[q] = fixed;
      } else {
        Rng pick(mix_seed({cfg.seed, static_cast<std::uint64_t>(k), kExemplar, q}));
        const auto& text = pool_exemplars[pick.below(pool_exemplars.size())];
        fb_tokens[q] = feedback::encode_feedback(feedback::UnconstrainedFeedback{"", text, 3}, cfg.scheme, vocab);
      }
    }
  }

  // 3. Sample G generations per draw.
  std::vector<std::vector<lm::SampleResult>> samples(Q);
  parallel_for(Q, setup.workers, [&](std::size_t q) {
    const auto prefix = sampling_prefix(k, setup.prompts[drawn[q]], fb_tokens[q], special);
    const int prompt_index = k >= 2 && fb_tokens[q] ? static_cast<int>(fb_tokens[q]->size()) + 1 : 0;
    samples[q].resize(G);
    for (std::size_t g = 0; g < G; ++g) {
      auto sc = cfg.sampler;
      sc.seed = mix_seed({cfg.seed, static_cast<std::uint64_t>(k), kSample, q, g});
      samples[q][g] = lm::sample(st.params, prefix, sc, special.eos, prompt_index);
    }
  });
  row["seconds_sampling"] = seconds_since(t0);

  // 4. Annotate per draw, so quantiles are local to the prompt.
  const auto t1 = std::chrono::steady_clock::now();
  std::vector<pool::PoolEntry> batch;
  std::vector<std::size_t> group_of;
  std::size_t unparseable = 0, untokenizable = 0, truncated = 0;
  for (std::size_t q = 0; q < Q; ++q) {
    std::vector<TokenSeq> gens;
    for (const auto& s : samples[q]) gens.push_back(s.tokens);
    const auto ann = provider.annotate(setup.prompts[drawn[q]], gens);
    unparseable += ann.unparseable;
    untokenizable += ann.untokenizable;
    for (std::size_t g = 0; g < G; ++g) {
      if (!ann.items[g]) continue;
      pool::PoolEntry e;
      e.prompt = setup.prompts[drawn[q]];
      e.generation = samples[q][g].tokens;
      e.feedback = ann.items[g]->feedback;
      e.reward = ann.items[g]->reward;
      e.iteration = k;
      e.truncated = samples[q][g].truncated;
      truncated += e.truncated ? 1 : 0;
      batch.push_back(std::move(e));
      group_of.push_back(q);
    }
  }
  const std::size_t base = st.pool.size();
  st.pool.add_batch(batch);
  row["seconds_annotation"] = seconds_since(t1);
  row["added"] = batch.size();
  row["pool_size"] = st.pool.size();
  row["truncated"] = truncated;
  row["dropped_unparseable"] = unparseable;
  row["dropped_untokenizable"] = untokenizable;
  std::map<int, std::size_t> hist;
  for (const auto& e : batch) hist[feedback::feedback_category(e.feedback).value_or(-1)]++;
  nlohmann::json hist_json = nlohmann::json::object();
  for (const auto& [c, n] : hist) hist_json[std::to_string(c)] = n;
  row["category_histogram"] = hist_json;

  // 5. Per-draw rejection filter and balanced selection.
  std::vector<std::size_t> selected;
  std::size_t underfilled = 0, empty_groups = 0;
  for (std::size_t q = 0; q < Q; ++q) {
    std::vector<pool::PoolEntry> group;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (group_of[i] == q && !batch[i].truncated) {
        group.push_back(batch[i]);
        idx.push_back(base + i);
      }
    }
    if (group.empty()) {
      ++empty_groups;
      continue;
    }
    // Tag each entry with its position so the selection maps back to pool indices.
    for (std::size_t i = 0; i < group.size(); ++i) group[i].reward = static_cast<double>(i);
    pool::SelectionReport rep;
    const auto picked = pool::balanced_select(group, cfg.train_per_category,
                                              mix_seed({cfg.seed, static_cast<std::uint64_t>(k), kSelect, q}), &rep);
    underfilled += rep.underfilled.size();
    for (const auto& p : picked) selected.push_back(idx[static_cast<std::size_t>(*p.reward)]);
  }
  st.selections.push_back(selected);
  row["selected"] = selected.size();
  row["selected_indices"] = selected;
  row["underfilled_categories"] = underfilled;
  row["groups_without_training_data"] = empty_groups;

  // 6. Conditional SFT.
  const auto t2 = std::chrono::steady_clock::now();
  std::vector<std::size_t> train_idx;
  if (cfg.replay) {
    for (const auto& s : st.selections) train_idx.insert(train_idx.end(), s.begin(), s.end());
  } else {
    train_idx = selected;
  }
  std::vector<train::TrainExample> examples;
  for (auto i : train_idx) {
    const auto& e = st.pool.entries()[i];
    examples.push_back({feedback::encode_feedback(e.feedback, cfg.scheme, vocab), e.prompt, e.generation});
  }
  auto tcfg = cfg.trainer;
  tcfg.seed = mix_seed({cfg.seed, static_cast<std::uint64_t>(k), kTrain});
  const lm::Parameters<float>* ref = cfg.loss.beta > 0 ? &setup.p0 : nullptr;
  std::vector<train::StepMetrics> steps;
  if (!examples.empty()) {
    steps = train::train_iteration(st.params, ref, examples, cfg.loss, st.opt, cfg.adam, tcfg, special);
  }
  if (!setup.run_dir.empty()) {
    train::append_step_log_jsonl((fs::path(setup.run_dir) / "train_log.jsonl").string(), steps);
    train::append_step_log_csv((fs::path(setup.run_dir) / "train_log.csv").string(), steps);
  }
  row["seconds_training"] = seconds_since(t2);
  row["train_examples"] = examples.size();
  row["optimizer_steps"] = steps.size();
  if (!steps.empty()) {
    row["final_loss"] = steps.back().loss;
    row["final_nll"] = steps.back().nll;
    row["final_kl"] = steps.back().kl;
    row["final_entropy_term"] = steps.back().entropy;
  }

  // 7. Checkpoint, pool and manifest.
  st.completed = k;
  if (!setup.run_dir.empty()) {
    lm::Checkpoint ck;
    ck.params = st.params;
    ck.step = static_cast<std::uint64_t>(st.opt.t);
    ck.meta = {{"iteration", k}, {"config_hash", setup.config_hash}, {"vocab", vocab.to_json()}};
    ck.extra = st.opt.to_tensors(st.params.layout);
    const auto path = checkpoint_path(setup.run_dir, k);
    lm::save_checkpoint(path, ck);
    st.pool.save(pool_path(setup.run_dir));
    row["checkpoint"] = path;
  }
  if (setup.iteration_eval) {
    const auto t3 = std::chrono::steady_clock::now();
    row["eval"] = setup.iteration_eval(k, st.params);
    row["seconds_eval"] = seconds_since(t3);
  }
  row["seconds_total"] = seconds_since(t0);
  st.manifest["iterations"].push_back(row);
  if (!setup.run_dir.empty()) write_json(manifest_path(setup.run_dir), st.manifest);
}

RunResult drive(RunSetup& setup, LoopState& st) {
  std::shared_ptr<providers::FeedbackProvider> provider = setup.provider;
  if (!provider) provider = providers::make_provider(setup.config.provider, *setup.vocab, setup.config.scheme);
  const int last = std::min(setup.config.n_iterations, setup.stop_after.value_or(setup.config.n_iterations));
  for (int k = st.completed + 1; k <= last; ++k) run_iteration(k, setup, *provider, st);
  return RunResult{std::move(st.params), std::move(st.pool), std::move(st.manifest), st.completed};
}

void check_setup(const RunSetup& setup) {
  setup.config.validate();
  if (!setup.vocab) throw ValidationError("run setup needs a vocabulary");
  if (setup.prompts.empty()) throw ValidationError("alignment needs at least one prompt");
  if (setup.p0.config.vocab_size != static_cast<int>(setup.vocab->size())) {
    throw ValidationError("base checkpoint vocabulary size does not match the vocabulary");
  }
  // The longest sampling prefix plus the generation budget must fit the model.
  const auto fb = feedback::encode_feedback(exemplar_feedback(setup.config), setup.config.scheme, *setup.vocab);
  std::size_t longest = 0;
  for (const auto& p : setup.prompts) longest = std::max(longest, p.size());
  const auto& mc = setup.p0.config;
  if (static_cast<int>(fb.size()) + 1 > mc.prompt_position) {
    throw ValidationError("exemplar feedback plus separator (" + std::to_string(fb.size() + 1) +
                          " tokens) does not fit before model.prompt_position " + std::to_string(mc.prompt_position));
  }
  const auto need = static_cast<std::size_t>(mc.prompt_position) + std::max<std::size_t>(longest, 1) +
                    static_cast<std::size_t>(setup.config.sampler.max_new_tokens);
  if (need > static_cast<std::size_t>(mc.max_seq_len)) {
    throw ValidationError("prompt_position + prompt + max_new_tokens = " + std::to_string(need) +
                          " exceeds max_seq_len " + std::to_string(mc.max_seq_len));
  }
}

}  // namespace

RunResult run(RunSetup setup) {
  check_setup(setup);
  LoopState st;
  st.params = setup.p0;
  st.opt.resize(st.params.values.size());
  st.pool = pool::DataPool(pool::Provenance{fs::path(setup.run_dir).filename().string(), setup.config_hash});
  st.manifest = {{"format", "alt-manifest"},
                 {"version", 1},
                 {"config_hash", setup.config_hash},
                 {"config", setup.resolved_config},
                 {"iterations", nlohmann::json::array()}};
  if (!setup.run_dir.empty()) {
    fs::create_directories(fs::path(setup.run_dir) / "checkpoints");
    for (const char* f : {"train_log.jsonl", "train_log.csv"}) fs::remove(fs::path(setup.run_dir) / f);
    write_json(manifest_path(setup.run_dir), st.manifest);
  }
  return drive(setup, st);
}

RunResult resume(RunSetup setup) {
  check_setup(setup);
  if (setup.run_dir.empty()) throw ValidationError("resume needs a run directory");
  std::ifstream mf(manifest_path(setup.run_dir));
  if (!mf) throw ValidationError("no manifest in " + setup.run_dir);
  LoopState st;
  st.manifest = nlohmann::json::parse(mf);
  if (st.manifest.value("config_hash", std::string{}) != setup.config_hash) {
    throw ValidationError("config hash mismatch: run has " + st.manifest.value("config_hash", std::string{}) +
                          ", current config is " + setup.config_hash);
  }
  const auto& rows = st.manifest.at("iterations");
  st.completed = static_cast<int>(rows.size());
  if (st.completed == 0) {
    st.params = setup.p0;
    st.opt.resize(st.params.values.size());
    st.pool = pool::DataPool(pool::Provenance{fs::path(setup.run_dir).filename().string(), setup.config_hash});
  } else {
    const auto ck = lm::load_checkpoint(checkpoint_path(setup.run_dir, st.completed));
    if (ck.meta.value("config_hash", std::string{}) != setup.config_hash) {
      throw ValidationError("checkpoint config hash does not match the manifest");
    }
    st.params = ck.params;
    st.opt = train::AdamState::from_tensors(st.params.layout, ck.extra, static_cast<std::int64_t>(ck.step));
    // The pool file may already hold entries of an iteration that never finished.
    const auto saved = pool::DataPool::load(pool_path(setup.run_dir));
    st.pool = pool::DataPool(saved.provenance());
    std::vector<pool::PoolEntry> kept;
    for (const auto& e : saved.entries()) {
      if (e.iteration <= st.completed) kept.push_back(e);
    }
    st.pool.add_batch(std::move(kept));
    for (const auto& r : rows) st.selections.push_back(r.at("selected_indices").get<std::vector<std::size_t>>());
  }
  return drive(setup, st);
}

}  // namespace alt::loop
