// recomb: grammar induction, sampling, training and evaluation for
// data-recombination semantic parsers, plus the artificial-world experiments.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "recomb/artificial.hpp"
#include "recomb/checkpoint.hpp"
#include "recomb/corpus.hpp"
#include "recomb/decoding.hpp"
#include "recomb/domain_config.hpp"
#include "recomb/manifest.hpp"
#include "recomb/scfg.hpp"
#include "recomb/training.hpp"

namespace fs = std::filesystem;
using namespace recomb;

namespace {

/// Bad input or flags; exit code 1.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::uint64_t seed = 1;
  bool no_timing = false;
};

struct TrainFlags {
  int epochs = 30;
  double lr = 0.1;
  int hidden = 200;
  int embed = 100;
  std::optional<std::size_t> recombinant_per_epoch;
  bool no_copy = false;
  double grad_clip = 5.0;
};

void check_output(const fs::path& p) {
  fs::path dir = p.parent_path();
  if (!dir.empty() && !fs::is_directory(dir)) throw ValidationError("output directory does not exist: " + dir.string());
  if (fs::is_directory(p)) throw ValidationError("output path is a directory: " + p.string());
}

void check_input(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw ValidationError("input file not found: " + p.string());
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class Clock {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

RunManifest start_manifest(const std::string& command, const std::vector<std::string>& argv, const Common& common) {
  RunManifest m;
  m.command = command;
  m.argv = argv;
  m.seed = common.seed;
  m.include_timing = !common.no_timing;
  m.flags["seed"] = std::to_string(common.seed);
  return m;
}

void finish_manifest(RunManifest& m, const fs::path& primary_output, const Clock& clock) {
  m.wall_seconds = clock.seconds();
  m.write(manifest_path_for(primary_output));
}

void add_train_flags(CLI::App* app, TrainFlags& f) {
  app->add_option("--epochs", f.epochs, "training epochs")->check(CLI::PositiveNumber);
  app->add_option("--lr", f.lr, "initial learning rate")->check(CLI::PositiveNumber);
  app->add_option("--hidden", f.hidden, "LSTM hidden size")->check(CLI::PositiveNumber);
  app->add_option("--embed", f.embed, "embedding size")->check(CLI::PositiveNumber);
  app->add_option("--recombinant-per-epoch", f.recombinant_per_epoch, "recombinant samples per epoch (default |D|)");
  app->add_flag("--no-copy", f.no_copy, "disable Copy actions");
  app->add_option("--grad-clip", f.grad_clip, "global gradient norm clip, <= 0 disables");
}

void record_train_flags(RunManifest& m, const TrainFlags& f) {
  m.flags["epochs"] = std::to_string(f.epochs);
  m.flags["lr"] = fmt_double(f.lr);
  m.flags["hidden"] = std::to_string(f.hidden);
  m.flags["embed"] = std::to_string(f.embed);
  m.flags["recombinant_per_epoch"] = f.recombinant_per_epoch ? std::to_string(*f.recombinant_per_epoch) : "|D|";
  m.flags["copy"] = f.no_copy ? "0" : "1";
  m.flags["grad_clip"] = fmt_double(f.grad_clip);
}

// ---- induce ----

struct InduceArgs {
  fs::path train, config, out;
  std::string strategies;
};

void cmd_induce(const InduceArgs& a, const Common& common, const std::vector<std::string>& argv) {
  Clock clock;
  check_input(a.train);
  check_output(a.out);
  std::optional<DomainConfig> config;
  if (!a.config.empty()) {
    check_input(a.config);
    config = load_domain_config(a.config);
  }
  std::vector<Strategy> chain;
  try {
    chain = parse_strategy_list(a.strategies, config ? &*config : nullptr);
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
  Dataset data = load_dataset(a.train);

  Grammar g = init_grammar(data);
  std::cout << "init: " << g.rules.size() << " rules\n";
  for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
    g = (*it)(g);
    std::cout << it->name << ": " << g.rules.size() << " rules\n";
  }
  write_grammar(a.out, g);

  RunManifest m = start_manifest("induce", argv, common);
  m.flags["strategies"] = a.strategies;
  m.add_input(a.train);
  if (config) m.add_input(a.config);
  m.outputs.push_back(a.out.string());
  finish_manifest(m, a.out, clock);
}

// ---- sample ----

struct SampleArgs {
  fs::path grammar, out;
  std::size_t count = 0;
  int max_depth = kDefaultMaxDerivationDepth;
};

void cmd_sample(const SampleArgs& a, const Common& common, const std::vector<std::string>& argv) {
  Clock clock;
  check_input(a.grammar);
  check_output(a.out);
  Grammar g = load_grammar(a.grammar);
  if (auto bad = unproductive_categories(g); !bad.empty())
    throw ValidationError("grammar has categories without rules: " + bad.front());
  Sampler sampler(g, a.max_depth);
  Rng rng = Rng::substream(common.seed, "grammar-sampling");
  std::vector<Example> out;
  out.reserve(a.count);
  for (std::size_t i = 0; i < a.count; ++i) out.push_back(sampler.sample(rng));
  write_dataset(a.out, out);

  RunManifest m = start_manifest("sample", argv, common);
  m.flags["count"] = std::to_string(a.count);
  m.flags["max_depth"] = std::to_string(a.max_depth);
  m.add_input(a.grammar);
  m.outputs.push_back(a.out.string());
  finish_manifest(m, a.out, clock);
}

// ---- train ----

struct TrainArgs {
  fs::path train, grammar, config, out, metrics;
  TrainFlags flags;
};

void cmd_train(const TrainArgs& a, const Common& common, const std::vector<std::string>& argv) {
  Clock clock;
  check_input(a.train);
  check_output(a.out);
  if (!a.metrics.empty()) check_output(a.metrics);
  std::optional<Grammar> grammar;
  if (!a.grammar.empty()) {
    check_input(a.grammar);
    grammar = load_grammar(a.grammar);
    if (auto bad = unproductive_categories(*grammar); !bad.empty())
      throw ValidationError("grammar has categories without rules: " + bad.front());
  }
  CopyRule copy;
  if (!a.config.empty()) {
    check_input(a.config);
    copy = load_domain_config(a.config).copy;
  }
  TrainConfig tc;
  tc.epochs = a.flags.epochs;
  tc.initial_lr = a.flags.lr;
  tc.recombinant_per_epoch = a.flags.recombinant_per_epoch;
  tc.seed = common.seed;
  tc.grad_clip = a.flags.grad_clip;
  try {
    tc.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }

  Dataset data = replace_singletons(load_dataset(a.train));
  // Grammar output tokens join the output vocabulary so every sample is reachable.
  if (grammar)
    for (const auto& r : grammar->rules)
      for (const auto& s : r.beta)
        if (s.is_terminal()) data.output_vocab.add(s.value);

  Seq2SeqModel model = make_model(data, ModelDims{a.flags.embed, a.flags.hidden}, copy, !a.flags.no_copy);
  initialize_model(model, common.seed);
  auto metrics = train(data, grammar ? &*grammar : nullptr, model, tc, [](const EpochMetrics& m, const Seq2SeqModel&) {
    std::fprintf(stderr, "epoch %d lr %.6g mean loglik %.6f (%zu examples)\n", m.epoch, m.lr, m.mean_train_loglik,
                 m.examples);
  });

  std::map<std::string, std::string> meta{{"seed", std::to_string(common.seed)},
                                          {"embed", std::to_string(a.flags.embed)},
                                          {"hidden", std::to_string(a.flags.hidden)},
                                          {"epochs", std::to_string(a.flags.epochs)}};
  save_checkpoint(a.out, model, meta);
  if (!a.metrics.empty()) write_metrics_csv(a.metrics, metrics, !common.no_timing);

  RunManifest m = start_manifest("train", argv, common);
  record_train_flags(m, a.flags);
  m.add_input(a.train);
  if (grammar) m.add_input(a.grammar);
  if (!a.config.empty()) m.add_input(a.config);
  m.outputs.push_back(a.out.string());
  if (!a.metrics.empty()) m.outputs.push_back(a.metrics.string());
  finish_manifest(m, a.out, clock);
}

// ---- eval ----

struct EvalArgs {
  fs::path checkpoint, test, world, report;
  std::string mode = "exact";
  int beam = 5;
  int max_len = 0;
};

void cmd_eval(const EvalArgs& a, const Common& common, const std::vector<std::string>& argv) {
  Clock clock;
  check_input(a.checkpoint);
  check_input(a.test);
  if (!a.report.empty()) check_output(a.report);
  if (a.mode == "denotation" && a.world.empty()) throw ValidationError("denotation mode needs --world");
  std::optional<World> world;
  if (!a.world.empty()) {
    check_input(a.world);
    world = load_world(a.world);
  }
  Seq2SeqModel model = load_checkpoint(a.checkpoint);
  Dataset test = load_dataset(a.test);

  EvalOptions opts;
  opts.mode = a.mode == "denotation" ? EvalMode::kDenotation : EvalMode::kExactMatch;
  if (world) opts.executor = world_executor(*world);
  opts.beam_size = a.beam;
  opts.max_len = a.max_len;
  EvalResult r = evaluate(model, test.examples, opts);
  if (!a.report.empty()) write_eval_report(a.report, r);

  std::printf("accuracy %.6f (%s, %zu examples)\n", r.accuracy, a.mode.c_str(), r.records.size());
  if (world) std::printf("exact %.6f denotation %.6f\n", r.exact_accuracy, r.denotation_accuracy);

  if (!a.report.empty()) {
    RunManifest m = start_manifest("eval", argv, common);
    m.flags["mode"] = a.mode;
    m.flags["beam"] = std::to_string(a.beam);
    m.flags["max_len"] = std::to_string(a.max_len);
    m.add_input(a.checkpoint);
    m.add_input(a.test);
    if (world) m.add_input(a.world);
    m.outputs.push_back(a.report.string());
    finish_manifest(m, a.report, clock);
  }
}

// ---- artificial ----

struct GenWorldArgs {
  fs::path out;
  int entities = 20;
  int relations = 40;
};

void cmd_gen_world(const GenWorldArgs& a, const Common& common, const std::vector<std::string>& argv) {
  Clock clock;
  check_output(a.out);
  Rng rng = Rng::substream(common.seed, "world-gen");
  write_world(a.out, generate_world(a.entities, a.relations, rng));
  RunManifest m = start_manifest("artificial gen-world", argv, common);
  m.flags["entities"] = std::to_string(a.entities);
  m.flags["relations"] = std::to_string(a.relations);
  m.outputs.push_back(a.out.string());
  finish_manifest(m, a.out, clock);
}

struct GenDataArgs {
  fs::path world, out;
  int depth = 2;
  std::size_t count = 100;
  std::string entity_prefix = "_";
};

void cmd_gen_data(const GenDataArgs& a, const Common& common, const std::vector<std::string>& argv) {
  Clock clock;
  check_input(a.world);
  check_output(a.out);
  World w = load_world(a.world);
  Rng rng = Rng::substream(common.seed, "data");
  std::vector<Example> ex;
  try {
    ex = generate_examples(w, a.depth, a.count, rng, a.entity_prefix);
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
  write_dataset(a.out, ex);
  RunManifest m = start_manifest("artificial gen-data", argv, common);
  m.flags["depth"] = std::to_string(a.depth);
  m.flags["count"] = std::to_string(a.count);
  m.flags["entity_prefix"] = a.entity_prefix;
  m.add_input(a.world);
  m.outputs.push_back(a.out.string());
  finish_manifest(m, a.out, clock);
}

struct ExperimentArgs {
  fs::path out, summary;
  std::string preset = "full";
  std::vector<std::size_t> counts;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> conditions;
  std::optional<int> entities, relations, epochs, hidden, embed;
  std::optional<std::size_t> seed_size, test_size;
  std::optional<std::string> entity_prefix;
  bool no_copy = false;
  int beam = 5;
};

void cmd_experiment(const ExperimentArgs& a, const Common& common, const std::vector<std::string>& argv) {
  Clock clock;
  check_output(a.out);
  if (!a.summary.empty()) check_output(a.summary);
  ExperimentConfig c;
  if (a.preset == "reduced")
    c = reduced_experiment_config();
  else if (a.preset != "full")
    throw ValidationError("unknown preset '" + a.preset + "' (full, reduced)");
  if (!a.counts.empty()) c.counts = a.counts;
  if (!a.seeds.empty()) c.seeds = a.seeds;
  if (!a.conditions.empty()) c.conditions = a.conditions;
  if (a.entities) c.num_entities = *a.entities;
  if (a.relations) c.num_relations = *a.relations;
  if (a.epochs) c.train.epochs = *a.epochs;
  if (a.hidden) c.dims.hidden = *a.hidden;
  if (a.embed) c.dims.embed = *a.embed;
  if (a.seed_size) c.seed_size = *a.seed_size;
  if (a.test_size) c.test_size = *a.test_size;
  if (a.entity_prefix) c.entity_prefix = *a.entity_prefix;
  c.copy_enabled = !a.no_copy;
  c.beam_size = a.beam;
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }

  auto rows = run_longer_examples_experiment(c, [](const ExperimentRow& r) {
    std::fprintf(stderr, "%s added=%zu seed=%llu exact=%.4f denotation=%.4f\n", r.condition.c_str(), r.added,
                 static_cast<unsigned long long>(r.seed), r.exact_acc, r.denotation_acc);
  });
  {
    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + a.out.string());
    out << format_experiment_csv(rows);
  }
  const std::string summary = format_experiment_summary(rows);
  std::cout << summary;
  if (!a.summary.empty()) {
    std::ofstream out(a.summary, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + a.summary.string());
    out << summary;
  }

  RunManifest m = start_manifest("artificial experiment", argv, common);
  auto join = [](const auto& v) {
    std::ostringstream s;
    for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
    return s.str();
  };
  m.flags["preset"] = a.preset;
  m.flags["counts"] = join(c.counts);
  m.flags["seeds"] = join(c.seeds);
  m.flags["conditions"] = join(c.conditions);
  m.flags["entities"] = std::to_string(c.num_entities);
  m.flags["relations"] = std::to_string(c.num_relations);
  m.flags["seed_size"] = std::to_string(c.seed_size);
  m.flags["test_size"] = std::to_string(c.test_size);
  m.flags["epochs"] = std::to_string(c.train.epochs);
  m.flags["hidden"] = std::to_string(c.dims.hidden);
  m.flags["embed"] = std::to_string(c.dims.embed);
  m.flags["entity_prefix"] = c.entity_prefix;
  m.flags["copy"] = c.copy_enabled ? "1" : "0";
  m.flags["beam"] = std::to_string(c.beam_size);
  m.outputs.push_back(a.out.string());
  if (!a.summary.empty()) m.outputs.push_back(a.summary.string());
  finish_manifest(m, a.out, clock);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data recombination for neural semantic parsing"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "random seed");
    sub->add_flag("--no-timing", common.no_timing, "write zero timings so outputs are byte-reproducible");
  };

  InduceArgs induce;
  auto* induce_cmd = app.add_subcommand("induce", "induce a grammar from a training set");
  induce_cmd->add_option("--train", induce.train, "training set (utterance<TAB>logical form)")->required();
  induce_cmd->add_option("--config", induce.config, "domain config JSON");
  induce_cmd->add_option("--strategies", induce.strategies, "outermost first, e.g. abs-whole-phrases,abs-entities,concat:2")
      ->required();
  induce_cmd->add_option("--out", induce.out, "grammar file")->required();
  add_common(induce_cmd);

  SampleArgs sample;
  auto* sample_cmd = app.add_subcommand("sample", "sample examples from a grammar");
  sample_cmd->add_option("--grammar", sample.grammar)->required();
  sample_cmd->add_option("--count", sample.count)->required()->check(CLI::PositiveNumber);
  sample_cmd->add_option("--max-depth", sample.max_depth)->check(CLI::PositiveNumber);
  sample_cmd->add_option("--out", sample.out)->required();
  add_common(sample_cmd);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a parser");
  train_cmd->add_option("--train", train_args.train)->required();
  train_cmd->add_option("--grammar", train_args.grammar, "grammar for per-epoch recombinant sampling");
  train_cmd->add_option("--config", train_args.config, "domain config JSON (copy policy)");
  train_cmd->add_option("--out", train_args.out, "checkpoint file")->required();
  train_cmd->add_option("--metrics", train_args.metrics, "per-epoch metrics CSV");
  add_train_flags(train_cmd, train_args.flags);
  add_common(train_cmd);

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "decode a test set and score it");
  eval_cmd->add_option("--checkpoint", eval.checkpoint)->required();
  eval_cmd->add_option("--test", eval.test)->required();
  eval_cmd->add_option("--mode", eval.mode)->check(CLI::IsMember({"exact", "denotation"}));
  eval_cmd->add_option("--world", eval.world, "artificial world JSON (executor)");
  eval_cmd->add_option("--report", eval.report, "per-example CSV");
  eval_cmd->add_option("--beam", eval.beam)->check(CLI::PositiveNumber);
  eval_cmd->add_option("--max-len", eval.max_len, "decode length cap (default 4m+20)")->check(CLI::NonNegativeNumber);
  add_common(eval_cmd);

  auto* art = app.add_subcommand("artificial", "artificial world tools");
  art->require_subcommand(1);

  GenWorldArgs gw;
  auto* gw_cmd = art->add_subcommand("gen-world", "generate a world");
  gw_cmd->add_option("--entities", gw.entities)->check(CLI::PositiveNumber);
  gw_cmd->add_option("--relations", gw.relations)->check(CLI::PositiveNumber);
  gw_cmd->add_option("--out", gw.out)->required();
  add_common(gw_cmd);

  GenDataArgs gd;
  auto* gd_cmd = art->add_subcommand("gen-data", "generate depth-n examples");
  gd_cmd->add_option("--world", gd.world)->required();
  gd_cmd->add_option("--depth", gd.depth)->check(CLI::PositiveNumber);
  gd_cmd->add_option("--count", gd.count)->check(CLI::PositiveNumber);
  gd_cmd->add_option("--entity-prefix", gd.entity_prefix, "prefix of entity tokens in logical forms");
  gd_cmd->add_option("--out", gd.out)->required();
  add_common(gd_cmd);

  ExperimentArgs ex;
  auto* ex_cmd = art->add_subcommand("experiment", "longer-examples experiment");
  ex_cmd->add_option("--preset", ex.preset, "full (H=200, d=100) or reduced (H=50, d=25)");
  ex_cmd->add_option("--counts", ex.counts, "added-example counts")->delimiter(',');
  ex_cmd->add_option("--seeds", ex.seeds)->delimiter(',');
  ex_cmd->add_option("--conditions", ex.conditions)->delimiter(',');
  ex_cmd->add_option("--entities", ex.entities);
  ex_cmd->add_option("--relations", ex.relations);
  ex_cmd->add_option("--seed-size", ex.seed_size);
  ex_cmd->add_option("--test-size", ex.test_size);
  ex_cmd->add_option("--epochs", ex.epochs);
  ex_cmd->add_option("--hidden", ex.hidden);
  ex_cmd->add_option("--embed", ex.embed);
  ex_cmd->add_option("--entity-prefix", ex.entity_prefix);
  ex_cmd->add_option("--beam", ex.beam)->check(CLI::PositiveNumber);
  ex_cmd->add_flag("--no-copy", ex.no_copy);
  ex_cmd->add_option("--out", ex.out, "per-run CSV")->required();
  ex_cmd->add_option("--summary", ex.summary, "mean-over-seeds table");
  add_common(ex_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    if (*induce_cmd) cmd_induce(induce, common, args);
    if (*sample_cmd) cmd_sample(sample, common, args);
    if (*train_cmd) cmd_train(train_args, common, args);
    if (*eval_cmd) cmd_eval(eval, common, args);
    if (*gw_cmd) cmd_gen_world(gw, common, args);
    if (*gd_cmd) cmd_gen_data(gd, common, args);
    if (*ex_cmd) cmd_experiment(ex, common, args);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
