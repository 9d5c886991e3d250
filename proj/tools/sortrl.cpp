// Command-line front end: train / eval / probe / sweep / report.
//
// Exit codes: 0 success, 1 usage or contract error, 2 data-format or
// version mismatch, 3 numerical divergence during training.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sortrl/checkpoint.hpp"
#include "sortrl/env.hpp"
#include "sortrl/model.hpp"
#include "sortrl/ppo.hpp"
#include "sortrl/probe.hpp"
#include "sortrl/report.hpp"
#include "sortrl/run_io.hpp"
#include "sortrl/sweep.hpp"

namespace {

struct TrainArgs {
  int length = 6;
  int embed_dim = 16;
  int num_layers = 1;
  int max_steps = 1000;
  long long timesteps = 300000;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_train(const TrainArgs& args) {
  sortrl::RunSpec spec;
  spec.model.length = args.length;
  spec.model.embed_dim = args.embed_dim;
  spec.model.num_layers = args.num_layers;
  spec.env.length = args.length;
  spec.env.max_steps = args.max_steps;
  spec.env.seed = args.seed;
  spec.ppo.total_timesteps = args.timesteps;
  spec.ppo.seed = args.seed;

  const std::filesystem::path dir(args.out);
  std::cout << "training length=" << args.length << " embed_dim=" << args.embed_dim
            << " layers=" << args.num_layers << " timesteps=" << args.timesteps
            << " seed=" << args.seed << " -> " << dir.string() << '\n';
  const auto result = sortrl::run_training_to_dir(spec, dir);
  const auto& last = result.log.back();
  std::cout << "done: updates=" << last.update << " steps=" << last.global_step
            << " value_loss=" << last.value_loss << " entropy=" << last.entropy
            << " episodes_last_window=" << last.episodes << '\n';
  std::cout << "final checkpoint: " << sortrl::final_checkpoint(dir).string() << '\n';
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  int max_steps = 1000;
};

// Behavioral evaluation: greedy rollouts from every start state in the
// probe evaluation set.
int cmd_eval(const EvalArgs& args) {
  const auto loaded = sortrl::load_checkpoint(args.checkpoint);
  const auto& params = loaded.params;
  sortrl::ProbeConfig probe_cfg;
  sortrl::Tape scratch;
  long long starts = 0, solved = 0, total_steps = 0;
  for (const auto& start : sortrl::enumerate_eval_set(params.cfg.length, probe_cfg)) {
    if (sortrl::is_sorted(start)) continue;
    ++starts;
    sortrl::Permutation p = start;
    for (int step = 0; step < args.max_steps; ++step) {
      p = sortrl::apply_swap(p, sortrl::act_greedy(params, p, &scratch));
      if (sortrl::is_sorted(p)) {
        ++solved;
        total_steps += step + 1;
        break;
      }
    }
  }
  const auto metrics = sortrl::probe_agent(params, probe_cfg);
  std::cout << "checkpoint: " << args.checkpoint << '\n'
            << "length=" << params.cfg.length << " embed_dim=" << params.cfg.embed_dim
            << " layers=" << params.cfg.num_layers << " trained_steps=" << loaded.meta.timesteps
            << '\n'
            << "start states: " << starts << '\n'
            << "solved by greedy policy: " << solved << " ("
            << static_cast<double>(solved) / static_cast<double>(starts) << ")\n";
  if (solved > 0)
    std::cout << "mean steps when solved: "
              << static_cast<double>(total_steps) / static_cast<double>(solved) << '\n';
  std::cout << "greedy single-step accuracy: " << metrics.accuracy << '\n';
  return 0;
}

struct ProbeArgs {
  std::string checkpoint;
  std::string weight_source = "post_softmax";
  std::string out;
};

int cmd_probe(const ProbeArgs& args) {
  const auto loaded = sortrl::load_checkpoint(args.checkpoint);
  sortrl::ProbeConfig cfg;
  cfg.source = sortrl::parse_weight_source(args.weight_source);
  cfg.sample_seed = loaded.meta.seed;
  sortrl::MetricsReport report;
  if (args.out.empty()) {
    report = sortrl::probe_agent(loaded.params, cfg);
  } else {
    report = sortrl::run_probe_to_dir(loaded.params, loaded.meta.seed, cfg, args.out);
  }
  std::cout << sortrl::metrics_to_json(report, loaded.params.cfg.embed_dim,
                                       loaded.params.cfg.num_layers, loaded.meta.seed, cfg)
                   .dump(2)
            << '\n';
  return 0;
}

struct SweepArgs {
  std::string spec_file;
};

int cmd_sweep(const SweepArgs& args) {
  auto spec = sortrl::SweepSpec::parse(args.spec_file);
  // Environment overrides are limited to placement and parallelism; the
  // experimental grid itself always comes from the spec file.
  if (const char* out = std::getenv("SORTRL_SWEEP_OUT")) spec.out_dir = out;
  if (const char* workers = std::getenv("SORTRL_SWEEP_WORKERS")) {
    try {
      spec.workers = std::stoi(workers);
    } catch (const std::exception&) {
      throw sortrl::ContractViolation("SORTRL_SWEEP_WORKERS is not a number");
    }
  }
  const auto outcomes = sortrl::run_sweep(spec, std::cout);
  long long trained = 0, skipped = 0, failed = 0;
  bool diverged = false;
  for (const auto& o : outcomes) {
    trained += o.status == sortrl::CellOutcome::Status::trained;
    skipped += o.status == sortrl::CellOutcome::Status::skipped;
    failed += o.status == sortrl::CellOutcome::Status::failed;
    diverged = diverged || o.diverged;
  }
  std::cout << "sweep finished: " << trained << " trained, " << skipped << " skipped, " << failed
            << " failed\n";
  if (diverged) return 3;
  return failed == 0 ? 0 : 1;
}

struct ReportArgs {
  std::string runs_dir;
  std::string out;
  double min_accuracy = 0.99;
};

int cmd_report(const ReportArgs& args) {
  const auto records = sortrl::scan_runs(args.runs_dir);
  sortrl::require(!records.empty(), "no completed runs under " + args.runs_dir);
  const auto report = sortrl::aggregate_runs(records, args.min_accuracy);
  const std::filesystem::path out_dir = args.out.empty()
                                            ? std::filesystem::path(args.runs_dir) / "report"
                                            : std::filesystem::path(args.out);
  sortrl::write_report(report, out_dir, std::cout);
  std::cout << "report written to " << out_dir.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adjacent-swap sorting agents: PPO training and attention probing"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train one agent into a run directory");
  train->add_option("--length", train_args.length, "permutation length (3-10)");
  train->add_option("--embed-dim", train_args.embed_dim, "embedding width");
  train->add_option("--layers", train_args.num_layers, "attention layers (1 or 2)");
  train->add_option("--timesteps", train_args.timesteps, "total environment steps");
  train->add_option("--seed", train_args.seed, "master seed");
  train->add_option("--max-steps", train_args.max_steps, "episode step limit");
  train->add_option("--out", train_args.out, "run directory to create")->required();

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "greedy-rollout evaluation of a checkpoint");
  eval->add_option("--checkpoint", eval_args.checkpoint, "checkpoint file")->required();
  eval->add_option("--max-steps", eval_args.max_steps, "rollout step limit");

  ProbeArgs probe_args;
  auto* probe = app.add_subcommand("probe", "interpretability metrics for a checkpoint");
  probe->add_option("--checkpoint", probe_args.checkpoint, "checkpoint file")->required();
  probe->add_option("--weight-source", probe_args.weight_source,
                    "last-row source: post_softmax|pre_softmax");
  probe->add_option("--out", probe_args.out, "directory for metrics.json and traces/");

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "run a (length x dim x seed) training grid");
  sweep->add_option("spec", sweep_args.spec_file, "sweep spec file (key = value)")->required();

  ReportArgs report_args;
  auto* report = app.add_subcommand("report", "aggregate probed runs into tables");
  report->add_option("runs", report_args.runs_dir, "directory containing run directories")
      ->required();
  report->add_option("--out", report_args.out, "report output directory");
  report->add_option("--min-accuracy", report_args.min_accuracy,
                     "accuracy threshold for the high-accuracy top-k population");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (train->parsed()) return cmd_train(train_args);
    if (eval->parsed()) return cmd_eval(eval_args);
    if (probe->parsed()) return cmd_probe(probe_args);
    if (sweep->parsed()) return cmd_sweep(sweep_args);
    if (report->parsed()) return cmd_report(report_args);
  } catch (const sortrl::NumericalDivergence& e) {
    std::cerr << "numerical divergence: " << e.what() << '\n';
    return 3;
  } catch (const sortrl::DataFormatError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const sortrl::ContractViolation& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
