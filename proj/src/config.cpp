#include "alt/config.hpp"

#include <cstdio>
#include <fstream>

#include "alt/errors.hpp"

namespace alt::cfg {

std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void RunConfig::validate() const {
  corpus.validate();
  if (k_quantiles < 1) throw ValidationError("k_quantiles must be >= 1");
  if (loop.scheme.encoding == feedback::Encoding::quantile_token && loop.scheme.k() > k_quantiles) {
    throw ValidationError("scheme has more labels than the vocabulary has quantile tokens");
  }
  model.validate();
  pretrain.validate();
  loop.validate();
  eval.validate();
  if (runtime.workers < 1) throw ValidationError("workers must be >= 1");
  if (pretrain.heldout_documents >= corpus.num_documents) {
    throw ValidationError("heldout_documents must be smaller than num_documents");
  }
}

nlohmann::json RunConfig::to_json() const {
  auto m = model.to_json();
  m.erase("vocab_size");  // derived from the vocabulary
  return {{"profile", profile},
          {"seed", seed},
          {"corpus", corpus.to_json()},
          {"k_quantiles", k_quantiles},
          {"model", m},
          {"pretrain", pretrain.to_json()},
          {"loop", loop.to_json()},
          {"eval", eval.to_json()},
          {"runtime", {{"workers", runtime.workers}, {"runs_dir", runtime.runs_dir}}}};
}

std::string RunConfig::hash() const {
  auto j = to_json();
  j.erase("runtime");
  return fnv1a_hex(j.dump());
}

std::vector<std::string> profile_names() { return {"alt_rm_toxicity", "quark", "steerlm", "alt_lmc", "alt_lmu"}; }

namespace {

std::string variant_of(const std::string& profile) {
  if (profile == "alt_rm_toxicity") return "alt_rm";
  for (const auto& p : profile_names()) {
    if (p == profile) return p;
  }
  std::string known;
  for (const auto& p : profile_names()) known += (known.empty() ? "" : ", ") + p;
  throw ValidationError("unknown profile '" + profile + "' (known: " + known + ")");
}

RunConfig defaults_for(const std::string& profile) {
  RunConfig c;
  c.profile = profile;
  c.loop = loop::variant_profile(variant_of(profile));
  // Desk scale.
  c.loop.n_iterations = 10;
  c.loop.prompts_per_iteration = 64;
  c.loop.generations_per_prompt = 16;
  c.loop.train_per_category = 2;
  c.loop.trainer.batch_size = 32;
  c.loop.trainer.epochs = 2;
  c.loop.adam.lr = 1e-3;
  // Reward-model runs at this scale drift off the base distribution with a
  // weak KL term; generations collapse toward an early eos.
  if (c.loop.loss.beta > 0.0) c.loop.loss.beta = 0.7;
  c.eval.max_prompts = 200;
  c.model.prompt_position = 8;
  return c;
}

}  // namespace

nlohmann::json profile_defaults(const std::string& name) { return defaults_for(name).to_json(); }

void reject_unknown_keys(const nlohmann::json& input, const nlohmann::json& reference, const std::string& where) {
  if (!input.is_object() || !reference.is_object()) return;
  for (const auto& [key, value] : input.items()) {
    const auto path = where.empty() ? key : where + "." + key;
    if (!reference.contains(key)) throw ValidationError("unknown config key '" + path + "'");
    reject_unknown_keys(value, reference.at(key), path);
  }
}

void apply_override(nlohmann::json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("override must look like key.path=value: " + assignment);
  const auto path = assignment.substr(0, eq);
  const auto raw = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;
  }
  nlohmann::json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const auto key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ValidationError("empty key in override " + assignment);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

RunConfig from_json(const nlohmann::json& input) {
  const auto profile = input.value("profile", std::string("alt_rm_toxicity"));
  auto j = profile_defaults(profile);
  reject_unknown_keys(input, j);
  if (input.contains("model") && input.at("model").contains("vocab_size")) {
    throw ValidationError("model.vocab_size is derived from the vocabulary");
  }
  // Missing keys keep the profile's values, not the struct defaults.
  j.merge_patch(input);
  RunConfig c;
  c.profile = profile;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.corpus = CorpusSpec::from_json(j.at("corpus"));
  c.k_quantiles = j.at("k_quantiles").get<int>();
  c.model = lm::ModelConfig::from_json(j.at("model"));
  c.pretrain = pre::PretrainConfig::from_json(j.at("pretrain"));
  c.loop = loop::LoopConfig::from_json(j.at("loop"));
  c.eval = eval::EvalConfig::from_json(j.at("eval"));
  c.runtime.workers = j.at("runtime").value("workers", c.runtime.workers);
  c.runtime.runs_dir = j.at("runtime").value("runs_dir", c.runtime.runs_dir);
  c.model.vocab_size = static_cast<int>(desk_vocabulary(c.k_quantiles).size());
  c.validate();
  return c;
}

RunConfig resolve(const std::string& profile, const std::optional<std::string>& file,
                  const std::vector<std::string>& overrides) {
  nlohmann::json user = nlohmann::json::object();
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ValidationError("cannot read config file " + *file);
    try {
      user = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError("config file " + *file + " is not valid JSON: " + e.what());
    }
    if (!user.is_object()) throw ValidationError("config file must hold a JSON object");
  }
  for (const auto& o : overrides) apply_override(user, o);
  std::string name = profile;
  if (name.empty()) name = user.value("profile", std::string("alt_rm_toxicity"));
  user["profile"] = name;
  auto merged = profile_defaults(name);
  reject_unknown_keys(user, merged);
  merged.merge_patch(user);
  return from_json(merged);
}

Vocabulary desk_vocabulary(int k_quantiles) {
  return build_vocabulary(desk_neutral_words(), desk_toxic_words(), k_quantiles, feedback::control_words());
}

}  // namespace alt::cfg
