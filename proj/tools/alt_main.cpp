// alt: command-line front end for corpus generation, base pretraining,
// alignment runs, evaluation and artifact inspection.
//
// Exit codes: 0 success, 1 validation error, 2 runtime error,
// 3 external-service failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "alt/alt_loop.hpp"
#include "alt/checkpoint.hpp"
#include "alt/config.hpp"
#include "alt/datapool.hpp"
#include "alt/errors.hpp"
#include "alt/eval.hpp"
#include "alt/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ConfigOptions {
  std::string profile;
  std::string file;
  std::vector<std::string> sets;
  int workers = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--profile", profile, "Profile: alt_rm_toxicity, quark, steerlm, alt_lmc, alt_lmu");
    cmd->add_option("--config", file, "JSON config file layered over the profile defaults");
    cmd->add_option("--set", sets, "Override, e.g. --set loop.n_iterations=3 (repeatable)");
    cmd->add_option("--workers", workers, "Cap on sampling/annotation threads");
  }

  alt::cfg::RunConfig resolve() const {
    auto sets_all = sets;
    if (workers > 0) sets_all.push_back("runtime.workers=" + std::to_string(workers));
    return alt::cfg::resolve(profile, file.empty() ? std::nullopt : std::optional<std::string>(file), sets_all);
  }
};

void write_text(const std::string& path, const std::string& text) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw alt::ValidationError("cannot read " + path);
  return json::parse(f);
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw alt::ValidationError(what + " not found: " + path);
}

int cmd_profiles() {
  for (const auto& p : alt::cfg::profile_names()) std::cout << p << "\n";
  return 0;
}

int cmd_config_show(const ConfigOptions& opts) {
  const auto rc = opts.resolve();
  json out = rc.to_json();
  out["config_hash"] = rc.hash();
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_corpus(const ConfigOptions& opts, const std::string& out_dir) {
  const auto rc = opts.resolve();
  const auto task = alt::pipeline::make_task(rc);
  fs::create_directories(out_dir);
  task.vocab.save((fs::path(out_dir) / "vocab.json").string());
  alt::save_corpus((fs::path(out_dir) / "train.jsonl").string(), task.train_docs);
  alt::save_corpus((fs::path(out_dir) / "heldout.jsonl").string(), task.heldout_docs);
  json spec = rc.corpus.to_json();
  spec["train_documents"] = task.train_docs.size();
  spec["heldout_documents"] = task.heldout_docs.size();
  write_json((fs::path(out_dir) / "corpus_spec.json").string(), spec);
  std::cout << "wrote " << task.train_docs.size() << " training and " << task.heldout_docs.size()
            << " held-out documents to " << out_dir << "\n";
  return 0;
}

int cmd_pretrain(const ConfigOptions& opts, const std::string& out) {
  const auto rc = opts.resolve();
  const auto task = alt::pipeline::make_task(rc);
  std::cerr << "pretraining on " << task.train_docs.size() << " documents, vocab " << task.vocab.size() << "\n";
  const auto ck = alt::pipeline::pretrain_base(rc, task);
  if (const auto parent = fs::path(out).parent_path(); !parent.empty()) fs::create_directories(parent);
  alt::lm::save_checkpoint(out, ck);
  write_json(out + ".report.json", ck.meta.at("report"));
  std::cout << ck.meta.at("report").dump(2) << "\n";
  return 0;
}

alt::loop::IterationEval iteration_eval_hook(const alt::cfg::RunConfig& rc, const alt::pipeline::TaskData& task,
                                             const alt::lm::Parameters<float>& p0, int prompts, int samples) {
  if (prompts <= 0) return {};
  return [&rc, &task, &p0, prompts, samples](int, const alt::lm::Parameters<float>& params) {
    auto ec = rc.eval;
    ec.max_prompts = prompts;
    ec.samples_per_prompt = samples;
    const auto fb = alt::feedback::encode_feedback(alt::loop::exemplar_feedback(rc.loop), rc.loop.scheme, task.vocab);
    const auto rep = alt::eval::evaluate(params, p0, task.vocab, task.heldout_prompts, ec, fb, rc.runtime.workers);
    auto j = rep.to_json();
    j.erase("per_prompt");
    j.erase("config");
    return j;
  };
}

int cmd_align(const ConfigOptions& opts, const std::string& base_path, std::string run_dir, int eval_prompts,
              int eval_samples) {
  const auto rc = opts.resolve();
  require_file(base_path, "base checkpoint");
  const auto base = alt::lm::load_checkpoint(base_path);
  const auto task = alt::pipeline::make_task(rc);
  if (run_dir.empty()) run_dir = alt::pipeline::default_run_dir(rc);
  auto setup = alt::pipeline::make_setup(rc, task, base, run_dir, fs::absolute(base_path).string());
  setup.iteration_eval = iteration_eval_hook(rc, task, setup.p0, eval_prompts, eval_samples);
  std::cerr << "run directory: " << run_dir << " (config " << rc.hash() << ")\n";
  const auto res = alt::loop::run(std::move(setup));
  std::cout << run_dir << "\n";
  std::cerr << "completed " << res.completed_iterations << " iterations, pool size " << res.pool.size() << "\n";
  return 0;
}

int cmd_resume(const std::string& run_dir, int workers, int eval_prompts, int eval_samples) {
  const auto manifest = read_json(alt::loop::manifest_path(run_dir));
  const auto& resolved = manifest.at("config");
  auto rc = alt::cfg::from_json(resolved.at("run"));
  if (workers > 0) rc.runtime.workers = workers;
  const auto base_path = resolved.at("base_checkpoint").get<std::string>();
  require_file(base_path, "base checkpoint");
  const auto base = alt::lm::load_checkpoint(base_path);
  const auto task = alt::pipeline::make_task(rc);
  auto setup = alt::pipeline::make_setup(rc, task, base, run_dir, base_path);
  setup.iteration_eval = iteration_eval_hook(rc, task, setup.p0, eval_prompts, eval_samples);
  const auto res = alt::loop::resume(std::move(setup));
  std::cerr << "run now has " << res.completed_iterations << " completed iterations\n";
  return 0;
}

struct EvalOptions {
  std::string checkpoint;
  std::string base;
  std::string feedback;
  std::string out;
  std::string csv;
  std::string plot_data;
  std::string dist_denominator;
  int samples = 0;
  int prompts = 0;
};

int cmd_eval(const ConfigOptions& opts, const EvalOptions& eo) {
  auto rc = opts.resolve();
  if (!eo.plot_data.empty()) {
    const auto manifest = read_json(alt::loop::manifest_path(eo.plot_data));
    const auto csv = alt::eval::plot_data_from_manifest(manifest);
    if (eo.out.empty()) {
      std::cout << csv;
    } else {
      write_text(eo.out, csv);
    }
    return 0;
  }
  if (eo.checkpoint.empty()) throw alt::ValidationError("eval needs --checkpoint (or --plot-data RUN_DIR)");
  require_file(eo.checkpoint, "checkpoint");
  const auto ck = alt::lm::load_checkpoint(eo.checkpoint);
  const std::string base_path = eo.base.empty() ? eo.checkpoint : eo.base;
  require_file(base_path, "base checkpoint");
  const auto base = alt::lm::load_checkpoint(base_path);
  if (eo.samples > 0) rc.eval.samples_per_prompt = eo.samples;
  if (eo.prompts > 0) rc.eval.max_prompts = eo.prompts;
  if (!eo.dist_denominator.empty()) rc.eval.dist_denominator = alt::eval::dist_denominator_from_string(eo.dist_denominator);
  const auto task = alt::pipeline::make_task(rc);
  alt::pipeline::check_base_matches(rc, base);
  std::optional<alt::TokenSeq> fb;
  if (!eo.feedback.empty()) {
    auto loop = rc.loop;
    loop.exemplar = eo.feedback;
    fb = alt::feedback::encode_feedback(alt::loop::exemplar_feedback(loop), rc.loop.scheme, task.vocab);
  }
  const auto rep = alt::eval::evaluate(ck.params, base.params, task.vocab, task.heldout_prompts, rc.eval, fb,
                                       rc.runtime.workers);
  auto j = rep.to_json();
  j["checkpoint"] = eo.checkpoint;
  j["evaluator"] = base_path;
  if (!eo.out.empty()) write_json(eo.out, j);
  if (!eo.csv.empty()) write_text(eo.csv, rep.to_csv());
  auto summary = j;
  summary.erase("per_prompt");
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_steer_probe(const ConfigOptions& opts, const std::string& checkpoint, const std::vector<std::string>& labels,
                    const std::string& out, int samples, int prompts) {
  auto rc = opts.resolve();
  require_file(checkpoint, "checkpoint");
  const auto ck = alt::lm::load_checkpoint(checkpoint);
  if (samples > 0) rc.eval.samples_per_prompt = samples;
  if (prompts > 0) rc.eval.max_prompts = prompts;
  const auto task = alt::pipeline::make_task(rc);
  const auto probe = alt::eval::steerability_probe(ck.params, task.vocab, task.heldout_prompts, rc.loop.scheme,
                                                   rc.eval, labels, rc.runtime.workers);
  json j = {{"checkpoint", checkpoint}, {"labels", json::array()}};
  std::cout << "label,mean_toxicity\n";
  for (const auto& p : probe) {
    std::cout << '"' << p.label << "\"," << p.mean_score << "\n";
    j["labels"].push_back({{"label", p.label}, {"mean_toxicity", p.mean_score}});
  }
  const auto& first = rc.loop.scheme.labels.front().text;
  const auto& last = rc.loop.scheme.labels.back().text;
  const bool both = std::any_of(probe.begin(), probe.end(), [&](const auto& p) { return p.label == first; }) &&
                    std::any_of(probe.begin(), probe.end(), [&](const auto& p) { return p.label == last; });
  if (both && probe.front().per_prompt_mean.size() >= 2) {
    const auto t = alt::eval::steerability_test(probe, last, first);
    j["test"] = {{"high", last}, {"low", first}, {"t", t.t}, {"p_value", t.p_value}, {"degenerate", t.degenerate}};
    std::cout << "# paired one-tailed t-test \"" << last << "\" > \"" << first << "\": t=" << t.t
              << " p=" << t.p_value << "\n";
  }
  if (!out.empty()) write_json(out, j);
  return 0;
}

int cmd_pool_inspect(const std::string& path, int limit, bool text) {
  require_file(path, "pool file");
  const auto pool = alt::pool::DataPool::load(path);
  std::optional<alt::Vocabulary> vocab;
  if (text) vocab = alt::cfg::desk_vocabulary(5);
  int shown = 0;
  for (const auto& e : pool.entries()) {
    if (limit > 0 && shown++ >= limit) break;
    auto j = e.to_json();
    if (vocab) {
      j["prompt_text"] = vocab->detokenize(e.prompt);
      j["generation_text"] = vocab->detokenize(e.generation);
    }
    std::cout << j.dump() << "\n";
  }
  return 0;
}

int cmd_pool_stats(const std::string& path) {
  require_file(path, "pool file");
  std::cout << alt::pool::DataPool::load(path).stats().dump(2) << "\n";
  return 0;
}

int cmd_checkpoint_inspect(const std::string& path) {
  require_file(path, "checkpoint");
  auto j = alt::lm::inspect_checkpoint(path);
  if (j.contains("meta") && j["meta"].contains("vocab")) j["meta"]["vocab"] = "<omitted>";
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Alignment with textual feedback on a synthetic detoxification task"};
  app.require_subcommand(1);

  auto* profiles = app.add_subcommand("profiles", "List the shipped configuration profiles");

  ConfigOptions show_opts;
  auto* config_cmd = app.add_subcommand("config", "Print the resolved configuration and its hash");
  show_opts.attach(config_cmd);

  ConfigOptions corpus_opts;
  std::string corpus_out = "corpus";
  auto* corpus = app.add_subcommand("corpus", "Write the vocabulary and synthetic corpus");
  corpus_opts.attach(corpus);
  corpus->add_option("--out", corpus_out, "Output directory");

  ConfigOptions pre_opts;
  std::string pre_out = "base.ckpt";
  auto* pretrain = app.add_subcommand("pretrain", "Pretrain the base model on the corpus");
  pre_opts.attach(pretrain);
  pretrain->add_option("--out", pre_out, "Checkpoint path");

  ConfigOptions align_opts;
  std::string align_base, align_run_dir;
  int align_eval_prompts = 0, align_eval_samples = 5;
  auto* align = app.add_subcommand("align", "Run the alignment loop from a base checkpoint");
  align_opts.attach(align);
  align->add_option("--base", align_base, "Base checkpoint from `alt pretrain`")->required();
  align->add_option("--run-dir", align_run_dir, "Run directory (default: <runs_dir>/<timestamp>-<hash>)");
  align->add_option("--iter-eval-prompts", align_eval_prompts, "Evaluate after every iteration on this many prompts");
  align->add_option("--iter-eval-samples", align_eval_samples, "Samples per prompt for per-iteration evaluation");

  std::string resume_dir;
  int resume_workers = 0, resume_eval_prompts = 0, resume_eval_samples = 5;
  auto* resume = app.add_subcommand("resume", "Continue an interrupted alignment run");
  resume->add_option("--run-dir", resume_dir, "Run directory")->required();
  resume->add_option("--workers", resume_workers, "Cap on sampling/annotation threads");
  resume->add_option("--iter-eval-prompts", resume_eval_prompts, "Evaluate after every iteration on this many prompts");
  resume->add_option("--iter-eval-samples", resume_eval_samples, "Samples per prompt for per-iteration evaluation");

  ConfigOptions eval_opts;
  EvalOptions eo;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the held-out prompts");
  eval_opts.attach(eval);
  eval->add_option("--checkpoint", eo.checkpoint, "Policy checkpoint");
  eval->add_option("--base", eo.base, "Frozen evaluator for perplexity (default: the checkpoint itself)");
  eval->add_option("--feedback", eo.feedback, "Condition sampling on this feedback label");
  eval->add_option("--out", eo.out, "Write the JSON report here");
  eval->add_option("--csv", eo.csv, "Write a flat metric,value CSV here");
  eval->add_option("--plot-data", eo.plot_data, "Emit per-iteration metric series of this run directory");
  eval->add_option("--dist-denominator", eo.dist_denominator, "ngrams (default) or tokens");
  eval->add_option("--samples", eo.samples, "Samples per prompt");
  eval->add_option("--prompts", eo.prompts, "Number of held-out prompts");

  ConfigOptions steer_opts;
  std::string steer_ckpt, steer_out;
  std::vector<std::string> steer_labels;
  int steer_samples = 0, steer_prompts = 0;
  auto* steer = app.add_subcommand("steer-probe", "Mean oracle toxicity under each feedback label");
  steer_opts.attach(steer);
  steer->add_option("--checkpoint", steer_ckpt, "Policy checkpoint")->required();
  steer->add_option("--label", steer_labels, "Label to probe (repeatable; default all)");
  steer->add_option("--out", steer_out, "Write the JSON table here");
  steer->add_option("--samples", steer_samples, "Samples per prompt");
  steer->add_option("--prompts", steer_prompts, "Number of held-out prompts");

  auto* pool = app.add_subcommand("pool", "Inspect a data pool file");
  pool->require_subcommand(1);
  std::string pool_path;
  int pool_limit = 20;
  bool pool_text = false;
  auto* pool_inspect = pool->add_subcommand("inspect", "Print entries");
  pool_inspect->add_option("file", pool_path, "Pool file")->required();
  pool_inspect->add_option("--limit", pool_limit, "Entries to print (0 = all)");
  pool_inspect->add_flag("--text", pool_text, "Also print detokenized desk-task text");
  auto* pool_stats = pool->add_subcommand("stats", "Per-iteration counts and category histograms");
  pool_stats->add_option("file", pool_path, "Pool file")->required();

  auto* ckpt = app.add_subcommand("checkpoint", "Inspect a checkpoint");
  ckpt->require_subcommand(1);
  std::string ckpt_path;
  auto* ckpt_inspect = ckpt->add_subcommand("inspect", "Config, step and per-tensor norms");
  ckpt_inspect->add_option("file", ckpt_path, "Checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*profiles) return cmd_profiles();
    if (*config_cmd) return cmd_config_show(show_opts);
    if (*corpus) return cmd_corpus(corpus_opts, corpus_out);
    if (*pretrain) return cmd_pretrain(pre_opts, pre_out);
    if (*align) return cmd_align(align_opts, align_base, align_run_dir, align_eval_prompts, align_eval_samples);
    if (*resume) return cmd_resume(resume_dir, resume_workers, resume_eval_prompts, resume_eval_samples);
    if (*eval) return cmd_eval(eval_opts, eo);
    if (*steer) return cmd_steer_probe(steer_opts, steer_ckpt, steer_labels, steer_out, steer_samples, steer_prompts);
    if (*pool_inspect) return cmd_pool_inspect(pool_path, pool_limit, pool_text);
    if (*pool_stats) return cmd_pool_stats(pool_path);
    if (*ckpt_inspect) return cmd_checkpoint_inspect(ckpt_path);
  } catch (const alt::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const alt::ExternalServiceError& e) {
    std::cerr << "external service error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
