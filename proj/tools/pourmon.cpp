// Command-line entry points: gen, train, eval, monitor, gradcheck.

#include "pourmon/config.hpp"
#include "pourmon/eval.hpp"
#include "pourmon/gradcheck.hpp"
#include "pourmon/persist.hpp"
#include "pourmon/simulator.hpp"
#include "pourmon/train.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

namespace fs = std::filesystem;
using namespace pourmon;

namespace {

struct CommonFlags {
  std::string config_file;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_file, "key=value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--set", flags.overrides, "configuration override key=value (repeatable)");
}

/// A --preset is the baseline; then the file, --set, and the other dedicated
/// flags in `extra`.
RunConfig resolve(const CommonFlags& flags, const std::vector<std::pair<std::string, std::string>>& extra) {
  RunConfig cfg;
  for (const auto& [k, v] : extra)
    if (k == "preset" && !v.empty()) apply_setting(cfg, k, v);
  if (!flags.config_file.empty()) apply_config_file(cfg, flags.config_file);
  for (const auto& a : flags.overrides) apply_assignment(cfg, a);
  for (const auto& [k, v] : extra)
    if (k != "preset" && !v.empty()) apply_setting(cfg, k, v);
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error(path.string() + ": cannot open for writing");
  os << text;
  if (!os) throw std::runtime_error(path.string() + ": write failed");
}

// ---------------------------------------------------------------------------

int cmd_gen(const RunConfig& cfg) {
  if (cfg.out.empty()) throw ConfigError("gen: an output directory is required (--out)");
  cfg.validate();
  const Dataset data = synth_dataset(cfg.sim);
  save_dataset(data, cfg.out);
  std::cout << data.size() << " sequences written\n";
  return 0;
}

void match_data_dims(RunConfig& cfg, const Dataset& data) {
  if (data.sequences.empty()) throw std::runtime_error("dataset is empty");
  const Frame& f = data.sequences.front().frames.front();
  cfg.train.model.feature_dim = cfg.sim.feature_dim = static_cast<int>(f.feature.size());
  cfg.train.model.imu_samples = cfg.sim.imu_samples = static_cast<int>(f.imu.samples.rows());
}

int cmd_train(RunConfig cfg, const std::string& log_path) {
  if (cfg.data_dir.empty()) throw ConfigError("train: a dataset directory is required (--data)");
  if (cfg.out.empty()) throw ConfigError("train: an output path is required (--out)");
  const Dataset data = load_dataset(cfg.data_dir);
  match_data_dims(cfg, data);
  if (cfg.scheme) cfg.train.model.num_classes = scheme_num_classes(*cfg.scheme);
  cfg.validate();

  std::ofstream log_file;
  if (!log_path.empty()) {
    log_file.open(log_path, std::ios::trunc);
    if (!log_file) throw std::runtime_error(log_path + ": cannot open for writing");
  }
  std::ostream& log = log_path.empty() ? std::cout : log_file;
  const std::string header = "# fold\tepoch\tL_reg\tL_adv\tL_Gen\tL_Dis\tL_cls\tL_mon";

  auto run = [&](const std::vector<std::size_t>& train, FoldTag tag, const fs::path& out) {
    log << header << '\n';
    const Checkpoint ck = train_run(cfg.train, data, train, tag, [&](int epoch, const LossBundle& l) {
      log << tag.holdout << '\t' << format_log_line(epoch, l) << std::endl;
    });
    save_checkpoint(ck, out);
    std::cerr << "checkpoint written: " << out.string() << '\n';
  };

  if (!cfg.scheme) {
    std::vector<std::size_t> all(data.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    run(all, FoldTag{}, cfg.out);
    return 0;
  }
  const auto folds = make_folds(data, *cfg.scheme);
  if (!cfg.holdout.empty()) {
    const auto it = std::find_if(folds.begin(), folds.end(), [&](const Fold& f) { return f.holdout == cfg.holdout; });
    if (it == folds.end())
      throw ConfigError("holdout '" + cfg.holdout + "' does not exist under " + to_string(*cfg.scheme));
    run(it->train, {to_string(*cfg.scheme), it->holdout}, cfg.out);
    return 0;
  }
  // Every fold: --out names a directory of fold-<holdout>.ckpt files.
  fs::create_directories(cfg.out);
  for (const auto& f : folds)
    run(f.train, {to_string(*cfg.scheme), f.holdout}, fs::path(cfg.out) / ("fold-" + f.holdout + ".ckpt"));
  return 0;
}

std::vector<fs::path> checkpoint_files(const fs::path& p) {
  if (!fs::is_directory(p)) return {p};
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(p))
    if (e.path().extension() == ".ckpt") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw std::runtime_error(p.string() + ": no .ckpt files");
  return out;
}

int cmd_eval(const std::vector<std::string>& checkpoints, const std::string& data_dir, const std::string& scheme_name,
             const std::string& out) {
  const Scheme scheme = parse_scheme(scheme_name);
  const Dataset data = load_dataset(data_dir);
  const auto folds = make_folds(data, scheme);
  std::map<std::string, const Fold*> by_holdout;
  for (const auto& f : folds) by_holdout[f.holdout] = &f;

  std::vector<MetricsReport> reports;
  for (const auto& arg : checkpoints) {
    MetricsReport report;
    report.scheme = to_string(scheme);
    for (const auto& path : checkpoint_files(arg)) {
      const Checkpoint ck = load_checkpoint(path);
      if (ck.config.model.num_classes != scheme_num_classes(scheme))
        throw std::runtime_error(path.string() + ": checkpoint classifies " +
                                 std::to_string(ck.config.model.num_classes) + " initial states, " +
                                 to_string(scheme) + " requires " + std::to_string(scheme_num_classes(scheme)));
      if (ck.fold.scheme != to_string(scheme))
        throw std::runtime_error(path.string() + ": trained for scheme '" + ck.fold.scheme + "', not " +
                                 to_string(scheme));
      const auto it = by_holdout.find(ck.fold.holdout);
      if (it == by_holdout.end())
        throw std::runtime_error(path.string() + ": held-out identity '" + ck.fold.holdout + "' not in dataset");
      const std::string variant = to_string(ck.config.variant), encoder = to_string(ck.config.model.encoder);
      if (report.folds.empty()) {
        report.variant = variant;
        report.encoder = encoder;
      } else if (report.variant != variant || report.encoder != encoder) {
        throw std::runtime_error(path.string() + ": mixes variants within one checkpoint directory");
      }
      FoldMetrics m = evaluate_fold(ck, data, it->second->test, scheme);
      m.holdout = ck.fold.holdout;
      report.folds.push_back(m);
    }
    report.average = average_folds(report.folds);
    reports.push_back(std::move(report));
  }
  const std::string table = format_table(reports);
  std::cout << table;
  if (!out.empty()) {
    write_text(out + ".txt", table);
    write_text(out + ".csv", format_csv(reports));
  }
  return 0;
}

int cmd_monitor(const std::string& checkpoint, const std::string& sequence) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  Sequence seq;
  seq.frames = read_sequence_file(sequence);
  const Sequence* batch[] = {&seq};
  const Inference inf = infer(ck.params, ck.config.variant, batch);
  std::vector<double> y;
  for (Eigen::Index t = 0; t < inf.success_prob.rows(); ++t) {
    std::printf("%lld\t%.6f\t%.6f\n", static_cast<long long>(t + 1), inf.success_prob(t, 0), inf.scores(t, 0));
    y.push_back(inf.success_prob(t, 0));
  }
  double mean = 0;
  for (double v : y) mean += v / static_cast<double>(y.size());
  std::printf("verdict\t%s\t%.6f\n", to_string(sequence_verdict(y)).c_str(), mean);
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, int instances, bool inject_fault) {
  GradcheckOptions opt;
  opt.seed = seed;
  opt.instances = instances;
  auto components = standard_components();
  if (inject_fault) components.push_back(sign_bug_component());
  const auto rows = run_gradcheck(components, opt);
  std::cout << format_gradcheck(rows, opt.tolerance);
  const bool ok = std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.pass; });
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pouring-sequence monitoring: simulate, train, evaluate, monitor"};
  app.require_subcommand(1);

  CommonFlags gen_flags;
  std::string gen_seed, gen_out, gen_preset;
  auto* gen = app.add_subcommand("gen", "synthesize a dataset");
  add_common(gen, gen_flags);
  gen->add_option("--seed", gen_seed, "simulator master seed");
  gen->add_option("--preset", gen_preset, "full | desk-cross-user | desk-cross-trial");
  gen->add_option("--out", gen_out, "output directory");

  CommonFlags tr_flags;
  std::string tr_data, tr_variant, tr_encoder, tr_scheme, tr_holdout, tr_out, tr_epochs, tr_seed, tr_lambda, tr_log;
  auto* train = app.add_subcommand("train", "train one fold or every fold of a scheme");
  add_common(train, tr_flags);
  train->add_option("--data", tr_data, "dataset directory");
  train->add_option("--variant", tr_variant, "vanilla | iosc | tf | noadv | full")
      ->check(CLI::IsMember({"vanilla", "iosc", "tf", "noadv", "full"}));
  train->add_option("--encoder", tr_encoder, "hier | flat2")->check(CLI::IsMember({"hier", "flat2"}));
  train->add_option("--scheme", tr_scheme, "cross-trial | cross-container | cross-user | none")
      ->check(CLI::IsMember({"cross-trial", "cross-container", "cross-user", "none"}));
  train->add_option("--holdout", tr_holdout, "held-out identity; omit to train every fold");
  train->add_option("--out", tr_out, "checkpoint path (one fold) or directory (every fold)");
  train->add_option("--epochs", tr_epochs);
  train->add_option("--seed", tr_seed, "initialization and shuffling seed");
  train->add_option("--lambda", tr_lambda, "adversarial weight");
  train->add_option("--log", tr_log, "write the loss log here instead of stdout");

  std::vector<std::string> ev_ckpts;
  std::string ev_data, ev_scheme, ev_out;
  auto* eval = app.add_subcommand("eval", "evaluate checkpoints on their held-out folds");
  eval->add_option("--checkpoint", ev_ckpts, "checkpoint file or fold directory (repeatable)")->required();
  eval->add_option("--data", ev_data, "dataset directory")->required();
  eval->add_option("--scheme", ev_scheme, "cross-trial | cross-container | cross-user")
      ->required()
      ->check(CLI::IsMember({"cross-trial", "cross-container", "cross-user"}));
  eval->add_option("--out", ev_out, "report prefix; writes <prefix>.txt and <prefix>.csv");

  std::string mon_ckpt, mon_seq;
  auto* monitor = app.add_subcommand("monitor", "per-step success probability for one sequence file");
  monitor->add_option("--checkpoint", mon_ckpt)->required();
  monitor->add_option("--sequence", mon_seq, ".pour sequence file")->required();

  std::uint64_t gc_seed = 1;
  int gc_instances = 5;
  bool gc_fault = false;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every differentiable component");
  gradcheck->add_option("--seed", gc_seed);
  gradcheck->add_option("--instances", gc_instances)->check(CLI::PositiveNumber);
  gradcheck->add_flag("--inject-fault", gc_fault, "add an LSTM cell with a sign bug (negative control)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen(resolve(gen_flags, {{"preset", gen_preset}, {"sim_seed", gen_seed}, {"out", gen_out}}));
    if (*train)
      return cmd_train(resolve(tr_flags, {{"data_dir", tr_data},
                                          {"variant", tr_variant},
                                          {"encoder", tr_encoder},
                                          {"scheme", tr_scheme},
                                          {"holdout", tr_holdout},
                                          {"out", tr_out},
                                          {"epochs", tr_epochs},
                                          {"seed", tr_seed},
                                          {"lambda", tr_lambda}}),
                       tr_log);
    if (*eval) return cmd_eval(ev_ckpts, ev_data, ev_scheme, ev_out);
    if (*monitor) return cmd_monitor(mon_ckpt, mon_seq);
    if (*gradcheck) return cmd_gradcheck(gc_seed, gc_instances, gc_fault);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
