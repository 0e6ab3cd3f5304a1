#include "headlab/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "headlab/checkpoint.hpp"
#include "headlab/cost_model.hpp"
#include "headlab/errors.hpp"
#include "headlab/harness.hpp"

namespace headlab {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitEquivalence = 5;

constexpr double kEquivalenceTolerance = 1e-6;

// Shared run-config flags; file values first, CLI flags override.
struct ConfigFlags {
  std::string config_file;

  void attach(CLI::App* cmd, RunConfig& rc) {
    cmd->add_option("--config", config_file, "flat key=value config file");
    cmd->add_option("--seed", rc.seed);
    cmd->add_option("--steps", rc.steps);
    cmd->add_option("--lambda", rc.lambda);
    cmd->add_option("--lambda-warmup-frac", rc.lambda_warmup_frac);
    cmd->add_option("--freeze-frac", rc.freeze_frac);
    cmd->add_flag("--no-lambda-warmup", rc.no_lambda_warmup);
    cmd->add_flag("--no-gate-init", rc.no_gate_init);
    cmd->add_flag("--no-output-scaling", rc.no_output_scaling);
    cmd->add_option("--checkpoint", rc.checkpoint);
    cmd->add_option("--out-dir", rc.out_dir);
    cmd->add_option("--metrics-format", rc.metrics_format)
        ->check(CLI::IsMember({"json", "csv"}));
    cmd->add_option("--data", rc.data_path, "UTF-8 corpus file");
    cmd->add_option("--lanes", rc.lanes);
    cmd->add_option("--d", rc.d);
    cmd->add_option("--heads", rc.heads);
    cmd->add_option("--layers", rc.layers);
    cmd->add_option("--n-persist", rc.n_persist);
    cmd->add_option("--seg-len", rc.seg_len);
    cmd->add_option("--mem-len", rc.mem_len);
    cmd->add_option("--lr-peak", rc.lr_peak);
    cmd->add_option("--lr-final", rc.lr_final);
    cmd->add_option("--lr-warmup-frac", rc.lr_warmup_frac);
    cmd->add_option("--metric", rc.metric)->check(CLI::IsMember({"bpc", "ppl"}));
    cmd->add_option("--vocab-policy", rc.vocab_policy)
        ->check(CLI::IsMember({"char", "word"}));
    cmd->add_option("--log-interval", rc.log_interval);
    cmd->add_option("--dropout-att", rc.dropout_att);
    cmd->add_option("--dropout-emb", rc.dropout_emb);
    cmd->add_option("--dropout-hidden", rc.dropout_hidden);
    cmd->add_option("--gate-init", rc.gate_init);
    cmd->add_option("--optimizer", rc.optimizer)
        ->check(CLI::IsMember({"lamb", "adam"}));
  }

  // Re-applies file values under everything the user typed; CLI wins.
  RunConfig resolve(CLI::App* cmd, const RunConfig& cli_values) {
    if (config_file.empty()) return cli_values;
    RunConfig rc = RunConfig::from_file(config_file);
    RunConfig merged = cli_values;
    // Fields the user did not pass on the CLI keep the file's value.
    RunConfig defaults;
    auto keep_file = [&](auto member, const std::string& flag) {
      if (cmd->count(flag) == 0) merged.*member = rc.*member;
    };
    keep_file(&RunConfig::seed, "--seed");
    keep_file(&RunConfig::steps, "--steps");
    keep_file(&RunConfig::lambda, "--lambda");
    keep_file(&RunConfig::lambda_warmup_frac, "--lambda-warmup-frac");
    keep_file(&RunConfig::freeze_frac, "--freeze-frac");
    keep_file(&RunConfig::no_lambda_warmup, "--no-lambda-warmup");
    keep_file(&RunConfig::no_gate_init, "--no-gate-init");
    keep_file(&RunConfig::no_output_scaling, "--no-output-scaling");
    keep_file(&RunConfig::checkpoint, "--checkpoint");
    keep_file(&RunConfig::out_dir, "--out-dir");
    keep_file(&RunConfig::metrics_format, "--metrics-format");
    keep_file(&RunConfig::data_path, "--data");
    keep_file(&RunConfig::lanes, "--lanes");
    keep_file(&RunConfig::d, "--d");
    keep_file(&RunConfig::heads, "--heads");
    keep_file(&RunConfig::layers, "--layers");
    keep_file(&RunConfig::n_persist, "--n-persist");
    keep_file(&RunConfig::seg_len, "--seg-len");
    keep_file(&RunConfig::mem_len, "--mem-len");
    keep_file(&RunConfig::lr_peak, "--lr-peak");
    keep_file(&RunConfig::lr_final, "--lr-final");
    keep_file(&RunConfig::lr_warmup_frac, "--lr-warmup-frac");
    keep_file(&RunConfig::metric, "--metric");
    keep_file(&RunConfig::vocab_policy, "--vocab-policy");
    keep_file(&RunConfig::log_interval, "--log-interval");
    keep_file(&RunConfig::dropout_att, "--dropout-att");
    keep_file(&RunConfig::dropout_emb, "--dropout-emb");
    keep_file(&RunConfig::dropout_hidden, "--dropout-hidden");
    keep_file(&RunConfig::gate_init, "--gate-init");
    keep_file(&RunConfig::optimizer, "--optimizer");
    return merged;
  }
};

json step_metrics_json(const TrainStepMetrics& m, MetricKind kind) {
  return json{{"step", m.step},
              {"nll", m.nll},
              {"ppl_or_bpc", kind == MetricKind::kBpc
                                 ? m.nll / std::log(2.0)
                                 : std::exp(m.nll)},
              {"lambda", m.lambda},
              {"lr", m.lr},
              {"expected_sparsity", m.expected_sparsity},
              {"hard_sparsity", m.hard_sparsity}};
}

void write_metrics_log(const std::string& path,
                       const std::vector<TrainStepMetrics>& trace,
                       MetricKind kind, int64_t interval,
                       const std::string& format) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write metrics log " + path);
  if (format == "csv")
    f << "step,nll,ppl_or_bpc,lambda,lr,expected_sparsity,hard_sparsity\n";
  for (const auto& m : trace) {
    if (m.step % interval != 0 &&
        m.step != static_cast<int64_t>(trace.size()) - 1)
      continue;
    const json j = step_metrics_json(m, kind);
    if (format == "csv") {
      f << m.step << ',' << m.nll << ',' << j["ppl_or_bpc"].get<double>()
        << ',' << m.lambda << ',' << m.lr << ',' << m.expected_sparsity << ','
        << m.hard_sparsity << '\n';
    } else {
      f << j.dump() << '\n';
    }
  }
}

void ensure_out_dir(RunConfig& rc, const char* fallback) {
  if (rc.out_dir.empty()) rc.out_dir = fallback;
  fs::create_directories(rc.out_dir);
}

int cmd_train(RunConfig rc) {
  ensure_out_dir(rc, "run_train");
  Corpus corpus = load_corpus(rc);
  BaselineRun run = train_baseline(rc, corpus);

  Checkpoint::from_model(run.model, nullptr, nullptr)
      .save(rc.out_dir + "/baseline.ckpt");
  rc.save(rc.out_dir + "/run_config.txt");
  write_metrics_log(rc.out_dir + "/metrics." +
                        (rc.metrics_format == "csv" ? "csv" : "jsonl"),
                    run.trace, rc.metric_kind(), rc.log_interval,
                    rc.metrics_format);

  json summary{{"command", "train"},
               {"steps", rc.steps},
               {"vocab", corpus.vocab.size()},
               {"final_train_nll", run.trace.back().nll},
               {"eval_metric", run.eval.metric},
               {"eval_metric_kind", rc.metric},
               {"eval_tokens", run.eval.tokens},
               {"checkpoint", rc.out_dir + "/baseline.ckpt"}};
  std::cout << summary.dump(2) << std::endl;
  return kExitOk;
}

json prune_summary(const RunConfig& rc, const PruneRun& run) {
  return json{{"command", "prune"},
              {"lambda", rc.lambda},
              {"steps", rc.steps},
              {"hard_sparsity", run.mask.sparsity()},
              {"pruned_heads", run.mask.pruned_heads()},
              {"total_heads", run.mask.total_heads()},
              {"surviving_heads_per_layer", run.mask.surviving_heads()},
              {"gated_eval_metric", run.gated_eval.metric},
              {"pruned_eval_metric", run.pruned_eval.metric},
              {"metric_kind", rc.metric},
              {"equivalence_max_rel_err", run.max_equiv_rel_err}};
}

int cmd_prune(RunConfig rc) {
  if (rc.checkpoint.empty())
    throw UsageError("prune: --checkpoint (baseline) is required");
  ensure_out_dir(rc, "run_prune");
  Corpus corpus = load_corpus(rc);
  AllAttModel baseline = Checkpoint::load(rc.checkpoint).restore_model();
  PruneRun run = run_prune(rc, corpus, baseline);

  Checkpoint::from_model(run.gated_model, &run.gates, nullptr)
      .save(rc.out_dir + "/pruned_gated.ckpt");
  Checkpoint::from_model(run.pruned_model, nullptr, nullptr)
      .save(rc.out_dir + "/pruned_structural.ckpt");
  rc.save(rc.out_dir + "/run_config.txt");
  write_metrics_log(rc.out_dir + "/metrics." +
                        (rc.metrics_format == "csv" ? "csv" : "jsonl"),
                    run.trace, rc.metric_kind(), rc.log_interval,
                    rc.metrics_format);

  json summary = prune_summary(rc, run);
  std::cout << summary.dump(2) << std::endl;
  if (run.max_equiv_rel_err > kEquivalenceTolerance) {
    std::cerr << "error: gated/pruned forward mismatch, max rel err "
              << run.max_equiv_rel_err << " > " << kEquivalenceTolerance
              << "\n";
    return kExitEquivalence;
  }
  return kExitOk;
}

int cmd_eval(RunConfig rc, const std::string& split_name) {
  if (rc.checkpoint.empty()) throw UsageError("eval: --checkpoint is required");
  Corpus corpus = load_corpus(rc);
  Checkpoint ck = Checkpoint::load(rc.checkpoint);
  AllAttModel model = ck.restore_model();
  auto gates = ck.restore_gates();

  const CorpusSplit& split = split_name == "train"   ? corpus.train
                             : split_name == "test"  ? corpus.test
                                                     : corpus.valid;
  EvalResult r = evaluate(model, split, rc.metric_kind(),
                          gates ? &*gates : nullptr, !rc.no_output_scaling);
  json out{{"command", "eval"},
           {"split", split_name},
           {"metric_kind", rc.metric},
           {"metric", r.metric},
           {"mean_nll", r.mean_nll},
           {"tokens", r.tokens}};
  std::cout << out.dump(2) << std::endl;
  if (!rc.out_dir.empty()) {
    fs::create_directories(rc.out_dir);
    std::ofstream(rc.out_dir + "/eval.json") << out.dump(2) << '\n';
  }
  return kExitOk;
}

int cmd_cost(const std::string& arch, int64_t d, int64_t heads, int64_t layers,
             int64_t n_persist, int64_t d_ff, int64_t t, int64_t s, int steps,
             const std::string& out_path) {
  std::vector<Arch> arches;
  if (arch == "allatt") arches = {Arch::kAllAtt};
  else if (arch == "txl") arches = {Arch::kTxl};
  else if (arch == "both") arches = {Arch::kAllAtt, Arch::kTxl};
  else throw UsageError("cost: --arch must be allatt, txl or both");

  std::vector<SweepRow> rows;
  for (Arch a : arches) {
    ArchSpec spec{a, d, heads, layers, t, s, n_persist, d_ff};
    auto r = sparsity_sweep(spec, steps);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  if (out_path.empty()) {
    write_sweep_csv(std::cout, rows);
  } else {
    std::ofstream f(out_path);
    if (!f) throw DataError("cost: cannot write " + out_path);
    write_sweep_csv(f, rows);
  }
  return kExitOk;
}

int cmd_ablate(RunConfig rc) {
  if (rc.checkpoint.empty())
    throw UsageError("ablate: --checkpoint (baseline) is required");
  ensure_out_dir(rc, "run_ablate");
  Corpus corpus = load_corpus(rc);
  AllAttModel baseline = Checkpoint::load(rc.checkpoint).restore_model();

  struct Variant {
    const char* name;
    bool no_warmup, no_init, no_scaling;
  };
  const Variant variants[] = {{"full", false, false, false},
                              {"no_lambda_warmup", true, false, false},
                              {"no_gate_init", false, true, false},
                              {"no_output_scaling", false, false, true}};

  json table = json::array();
  double full_metric = 0.0;
  for (const auto& v : variants) {
    RunConfig vc = rc;
    vc.no_lambda_warmup = v.no_warmup;
    vc.no_gate_init = v.no_init;
    vc.no_output_scaling = v.no_scaling;
    vc.out_dir = rc.out_dir + "/" + v.name;
    fs::create_directories(vc.out_dir);
    PruneRun run = run_prune(vc, corpus, baseline);
    Checkpoint::from_model(run.gated_model, &run.gates, nullptr)
        .save(vc.out_dir + "/pruned_gated.ckpt");
    Checkpoint::from_model(run.pruned_model, nullptr, nullptr)
        .save(vc.out_dir + "/pruned_structural.ckpt");
    vc.save(vc.out_dir + "/run_config.txt");
    write_metrics_log(vc.out_dir + "/metrics." +
                          (rc.metrics_format == "csv" ? "csv" : "jsonl"),
                      run.trace, rc.metric_kind(), rc.log_interval,
                      rc.metrics_format);
    if (std::string(v.name) == "full") full_metric = run.pruned_eval.metric;
    table.push_back({{"variant", v.name},
                     {"pruned_eval_metric", run.pruned_eval.metric},
                     {"delta_vs_full", run.pruned_eval.metric - full_metric},
                     {"hard_sparsity", run.mask.sparsity()},
                     {"pruned_heads", run.mask.pruned_heads()}});
  }
  json summary{{"command", "ablate"},
               {"lambda", rc.lambda},
               {"seed", rc.seed},
               {"metric_kind", rc.metric},
               {"variants", table}};
  std::ofstream(rc.out_dir + "/ablate_summary.json") << summary.dump(2) << '\n';
  std::cout << summary.dump(2) << std::endl;
  return kExitOk;
}

}  // namespace

int run_subcommand(const std::vector<std::string>& args) {
  CLI::App app{"attention-head pruning lab for All-attention language models"};
  app.require_subcommand(1);

  RunConfig rc_train, rc_prune, rc_eval, rc_ablate;
  ConfigFlags cf_train, cf_prune, cf_eval, cf_ablate;

  auto* train = app.add_subcommand("train", "train a baseline model");
  cf_train.attach(train, rc_train);

  auto* prune = app.add_subcommand("prune", "gate-prune from a baseline checkpoint");
  cf_prune.attach(prune, rc_prune);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string split = "valid";
  cf_eval.attach(eval, rc_eval);
  eval->add_option("--split", split)
      ->check(CLI::IsMember({"train", "valid", "test"}));

  auto* cost = app.add_subcommand("cost", "parameter/MAC sweep CSV");
  std::string arch = "both", cost_out;
  int64_t cd = 512, cheads = 8, clayers = 16, cn = 2048, cdff = 2048,
          ct = 192, cs = 192;
  int sweep = 11;
  cost->add_option("--arch", arch);
  cost->add_option("--d", cd);
  cost->add_option("--heads", cheads);
  cost->add_option("--layers", clayers);
  cost->add_option("--n-persist", cn);
  cost->add_option("--d-ff", cdff);
  cost->add_option("--t", ct);
  cost->add_option("--s", cs);
  cost->add_option("--sweep", sweep);
  cost->add_option("--out", cost_out);

  auto* ablate = app.add_subcommand(
      "ablate", "prune with each stabilization technique disabled in turn");
  cf_ablate.attach(ablate, rc_ablate);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train->parsed()) return cmd_train(cf_train.resolve(train, rc_train));
    if (prune->parsed()) return cmd_prune(cf_prune.resolve(prune, rc_prune));
    if (eval->parsed()) return cmd_eval(cf_eval.resolve(eval, rc_eval), split);
    if (cost->parsed())
      return cmd_cost(arch, cd, cheads, clayers, cn, cdff, ct, cs, sweep,
                      cost_out);
    if (ablate->parsed())
      return cmd_ablate(cf_ablate.resolve(ablate, rc_ablate));
    throw UsageError("no subcommand given");
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const EquivalenceError& e) {
    std::cerr << "equivalence error: " << e.what() << "\n";
    return kExitEquivalence;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace headlab
