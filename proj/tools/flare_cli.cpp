// flare: synthetic data generation, event labeling, evaluation, training and
// gradient checking from the command line.
//
// Exit codes: 0 success, 1 usage error, 2 I/O or data error, 3 numerical failure.

#include <flare/flare.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

int exit_code(flare::ErrorKind kind) {
  switch (kind) {
    case flare::ErrorKind::InvalidArgument: return kExitUsage;
    case flare::ErrorKind::Data: return kExitData;
    case flare::ErrorKind::Numeric: return kExitNumeric;
  }
  return kExitData;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) flare::fail(flare::ErrorKind::Data, "cannot create directory " + dir.string());
}

flare::Vec4 parse_probs(const std::string& text, const std::string& what) {
  std::stringstream ss(text);
  flare::Vec4 p{};
  std::size_t k = 0;
  for (std::string tok; std::getline(ss, tok, ',');) {
    if (k == flare::kNumClasses) flare::fail(flare::ErrorKind::InvalidArgument, what + ": expected 4 values");
    try {
      std::size_t used = 0;
      p[k++] = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      flare::fail(flare::ErrorKind::InvalidArgument, what + ": not a number '" + tok + "'");
    }
  }
  if (k != flare::kNumClasses) flare::fail(flare::ErrorKind::InvalidArgument, what + ": expected 4 values");
  return p;
}

// gen-data -------------------------------------------------------------------

struct GenDataArgs {
  long long n = 0;
  std::string class_probs = "0.38,0.35,0.23,0.04";
  std::uint64_t seed = 0;
  std::string out_dir;
  std::size_t feature_dim = 16;
  bool stratified = false;
  double separation = flare::SyntheticOptions{}.class_separation;
  std::size_t stride_steps = flare::SyntheticOptions{}.stride_steps;
};

int cmd_gen_data(const GenDataArgs& a) {
  if (a.n <= 0) flare::fail(flare::ErrorKind::InvalidArgument, "--n must be positive");
  const auto probs = parse_probs(a.class_probs, "--class-probs");
  flare::SyntheticOptions opt;
  opt.stratified = a.stratified;
  opt.class_separation = a.separation;
  opt.stride_steps = a.stride_steps;
  const auto data = flare::gen_synthetic(static_cast<std::size_t>(a.n), probs, a.seed, a.feature_dim, opt);

  std::vector<flare::io::LabelRow> labels;
  for (const auto& s : data.samples) labels.push_back({s.id, *s.label});

  const fs::path dir(a.out_dir);
  ensure_dir(dir);
  flare::io::write_file((dir / "samples.csv").string(), flare::io::format_samples(data.samples));
  flare::io::write_file((dir / "events.csv").string(), flare::io::format_events(data.events));
  flare::io::write_file((dir / "labels.csv").string(), flare::io::format_labels(labels));
  std::ostringstream cfg;
  cfg << "class_probs=" << a.class_probs << "\nfeature_dim=" << a.feature_dim << "\nn=" << a.n
      << "\nseed=" << a.seed << "\nseparation=" << a.separation << "\nstratified=" << (a.stratified ? "true" : "false")
      << "\nstride_steps=" << a.stride_steps << "\n";
  flare::io::write_file((dir / "gen-data.config.txt").string(), cfg.str());
  std::cout << "wrote " << data.samples.size() << " samples and " << data.events.size() << " events to "
            << dir.string() << "\n";
  return 0;
}

// label ----------------------------------------------------------------------

struct LabelArgs {
  std::string events;
  std::string samples;
  double horizon_hours = flare::kDefaultHorizonHours;
  std::string out;
};

int cmd_label(const LabelArgs& a) {
  if (!(a.horizon_hours > 0.0)) flare::fail(flare::ErrorKind::InvalidArgument, "--horizon-hours must be positive");
  const auto events = flare::io::read_events(a.events);
  const auto samples = flare::io::read_samples(a.samples);
  std::vector<flare::Instant> times;
  for (const auto& s : samples) times.push_back(s.timestamp);
  const auto classes = flare::label_all(times, events, a.horizon_hours);
  std::vector<flare::io::LabelRow> rows;
  for (std::size_t i = 0; i < samples.size(); ++i) rows.push_back({samples[i].id, classes[i]});

  const fs::path out(a.out);
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  flare::io::write_file(out.string(), flare::io::format_labels(rows));
  std::ostringstream cfg;
  cfg << "events=" << a.events << "\nhorizon_hours=" << a.horizon_hours << "\nsamples=" << a.samples << "\n";
  flare::io::write_file((out.parent_path() / "label.config.txt").string(), cfg.str());
  std::array<std::size_t, flare::kNumClasses> counts{};
  for (auto c : classes) ++counts[flare::rank(c)];
  std::cout << "labeled " << rows.size() << " samples: O=" << counts[0] << " C=" << counts[1] << " M=" << counts[2]
            << " X=" << counts[3] << "\n";
  return 0;
}

// eval -----------------------------------------------------------------------

struct EvalArgs {
  std::string preds;
  std::string labels;
  std::string climatology = "rows";
  std::string out_dir;
  std::size_t top = 5;
};

int cmd_eval(const EvalArgs& a) {
  const auto climatology = a.climatology == "rows" ? flare::Climatology::from_matrix_rows()
                                                   : flare::Climatology::explicit_probs(parse_probs(a.climatology, "--climatology"));
  const auto preds = flare::io::read_predictions(a.preds);
  const auto labels = flare::io::read_labels(a.labels);

  std::unordered_map<std::string, flare::FlareClass> truth;
  for (const auto& l : labels)
    if (!truth.emplace(l.id, l.label).second) flare::fail(flare::ErrorKind::Data, "duplicate label id '" + l.id + "'");
  std::unordered_set<std::string> seen;
  std::vector<flare::FlareClass> obs, pred;
  std::vector<flare::ProbDist> probs;
  bool hard = false;
  for (const auto& p : preds) {
    auto it = truth.find(p.id);
    if (it == truth.end()) flare::fail(flare::ErrorKind::Data, "id mismatch: prediction '" + p.id + "' has no label");
    if (!seen.insert(p.id).second) flare::fail(flare::ErrorKind::Data, "duplicate prediction id '" + p.id + "'");
    obs.push_back(it->second);
    pred.push_back(p.predicted());
    if (const auto* pd = std::get_if<flare::ProbDist>(&p.value)) probs.push_back(*pd);
    else hard = true;
  }
  for (const auto& l : labels)
    if (!seen.count(l.id)) flare::fail(flare::ErrorKind::Data, "id mismatch: label '" + l.id + "' has no prediction");
  if (hard) probs.clear();

  const auto report = flare::evaluate(obs, pred, probs, climatology);
  const auto text = flare::to_text(report, a.top);
  std::cout << text;
  if (!a.out_dir.empty()) {
    const fs::path dir(a.out_dir);
    ensure_dir(dir);
    flare::io::write_file((dir / "report.txt").string(), text);
    flare::io::write_file((dir / "report.csv").string(), flare::to_csv(report, a.top));
    std::ostringstream cfg;
    cfg << "climatology=" << a.climatology << "\nlabels=" << a.labels << "\npreds=" << a.preds << "\ntop=" << a.top << "\n";
    flare::io::write_file((dir / "eval.config.txt").string(), cfg.str());
  }
  return 0;
}

// train ----------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data_dir;
  std::string out_dir;
  std::vector<std::string> overrides;
};

std::vector<flare::Sample> load_dataset(const fs::path& dir, double horizon_hours) {
  auto samples = flare::io::read_samples((dir / "samples.csv").string());
  if (fs::exists(dir / "labels.csv")) {
    flare::io::attach_labels(samples, flare::io::read_labels((dir / "labels.csv").string()));
  } else if (fs::exists(dir / "events.csv")) {
    std::vector<flare::Instant> times;
    for (const auto& s : samples) times.push_back(s.timestamp);
    const auto classes = flare::label_all(times, flare::io::read_events((dir / "events.csv").string()), horizon_hours);
    for (std::size_t i = 0; i < samples.size(); ++i) samples[i].label = classes[i];
  } else {
    flare::fail(flare::ErrorKind::Data, "data dir needs labels.csv or events.csv: " + dir.string());
  }
  return samples;
}

int cmd_train(const TrainArgs& a) {
  flare::RunConfig rc;
  if (!a.config.empty()) rc.load_file(a.config);
  rc.apply_env();
  for (const auto& o : a.overrides) rc.set_assignment(o, "--set");
  const auto settings = flare::resolve(rc);

  auto raw = load_dataset(a.data_dir, settings.horizon_hours);
  auto policy = flare::apply_channel_policy(raw);
  auto& samples = policy.kept;
  std::stable_sort(samples.begin(), samples.end(),
                   [](const flare::Sample& x, const flare::Sample& y) { return x.timestamp < y.timestamp; });
  const auto folds = flare::split_timeseries(samples, settings.split);
  const auto& fold = folds[settings.fold];

  const fs::path dir(a.out_dir);
  ensure_dir(dir);
  flare::io::write_file((dir / "train.config.txt").string(), rc.to_text());

  std::cout << "samples: " << raw.size() << " read, " << policy.excluded_count << " excluded by channel/label policy\n"
            << "fold " << settings.fold << ": train " << fold.train.size() << ", validation " << fold.validation.size()
            << ", test " << fold.test.size() << "\n";

  const auto result = flare::train(samples, fold, settings.train);
  if (result.gradient_check)
    std::cout << "gradient check: max relative error " << flare::format_real(result.gradient_check->max_rel_error, 10)
              << " over " << result.gradient_check->checked << " coordinates\n";

  flare::io::write_file((dir / "history.csv").string(), flare::format_history(result.history));
  flare::io::write_file((dir / "checkpoint.txt").string(), flare::format_checkpoint(result.best, rc.hash()));

  const auto test_set = flare::slice(samples, fold.test);
  const auto probs = flare::predict(test_set, result.best.params, settings.train);
  std::vector<std::string> ids;
  std::vector<flare::FlareClass> obs, pred;
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    ids.push_back(test_set[i].id);
    obs.push_back(*test_set[i].label);
    pred.push_back(probs[i].argmax());
  }
  flare::io::write_file((dir / "test_predictions.csv").string(), flare::io::format_predictions(ids, probs));
  const auto report = flare::evaluate(obs, pred, probs);
  flare::io::write_file((dir / "test_report.txt").string(), flare::to_text(report));
  flare::io::write_file((dir / "test_report.csv").string(), flare::to_csv(report));

  std::cout << "best epoch " << result.best.epoch << " (validation GMGS " << flare::format_real(result.best.val_gmgs, 4)
            << ")\n\ntest fold:\n"
            << flare::to_text(report);
  return 0;
}

// gradcheck ------------------------------------------------------------------

int cmd_gradcheck(const flare::GradcheckOptions& opt) {
  if (opt.trials == 0) flare::fail(flare::ErrorKind::InvalidArgument, "--trials must be at least 1");
  bool ok = true;
  for (const auto& r : flare::run_gradcheck(opt)) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-40s max_rel_error=%.3e tol=%.1e %s", r.name.c_str(), r.max_rel_error, r.tolerance,
                  r.passed() ? "PASS" : "FAIL");
    std::cout << buf << "\n";
    ok = ok && r.passed();
  }
  return ok ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FLARE loss, solar-cycle embedding and flare forecast verification toolkit"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic imbalanced dataset with its event catalog");
  gen_cmd->add_option("--n", gen.n, "Number of samples")->required();
  gen_cmd->add_option("--class-probs", gen.class_probs, "Class probabilities for O,C,M,X")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  gen_cmd->add_option("--out-dir", gen.out_dir, "Output directory")->required();
  gen_cmd->add_option("--feature-dim", gen.feature_dim, "Features per sample")->capture_default_str()->check(CLI::PositiveNumber);
  gen_cmd->add_flag("--stratified", gen.stratified, "Exact class counts instead of independent draws");
  gen_cmd->add_option("--separation", gen.separation, "Distance between class means")->capture_default_str();
  gen_cmd->add_option("--stride-steps", gen.stride_steps, "Two-hour steps between samples")->capture_default_str();

  LabelArgs lab;
  auto* label_cmd = app.add_subcommand("label", "Label samples with the largest event class in the following window");
  label_cmd->add_option("--events", lab.events, "Events file (peak_time,class)")->required();
  label_cmd->add_option("--samples", lab.samples, "Samples file")->required();
  label_cmd->add_option("--horizon-hours", lab.horizon_hours, "Prediction window length")->capture_default_str();
  label_cmd->add_option("--out", lab.out, "Labels file to write")->required();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions: GMGS, TSS>=M, BSS>=M, GMGS-Influence");
  eval_cmd->add_option("--preds", ev.preds, "Predictions (id,label or id,p_O,p_C,p_M,p_X)")->required();
  eval_cmd->add_option("--labels", ev.labels, "Labels (id,label)")->required();
  eval_cmd->add_option("--climatology", ev.climatology, "'rows' or four probabilities O,C,M,X")->capture_default_str();
  eval_cmd->add_option("--out-dir", ev.out_dir, "Also write report.txt and report.csv here");
  eval_cmd->add_option("--top", ev.top, "Influence rows to show")->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train the toy classifier and report on the test fold");
  train_cmd->add_option("--config", tr.config, "key=value config file");
  train_cmd->add_option("--data-dir", tr.data_dir, "Directory with samples.csv and labels.csv or events.csv")->required();
  train_cmd->add_option("--out-dir", tr.out_dir, "Output directory")->required();
  train_cmd->add_option("--set", tr.overrides, "Override a config key (key=value), repeatable");

  flare::GradcheckOptions gc;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Verify analytic loss gradients against finite differences");
  grad_cmd->add_option("--seed", gc.seed, "Random seed")->capture_default_str();
  grad_cmd->add_option("--trials", gc.trials, "Random instances per check")->capture_default_str();
  grad_cmd->add_option("--tolerance", gc.fd_tolerance, "Finite-difference relative tolerance")->capture_default_str();
  grad_cmd->add_option("--corrupt", gc.corrupt)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*label_cmd) return cmd_label(lab);
    if (*eval_cmd) return cmd_eval(ev);
    if (*train_cmd) return cmd_train(tr);
    if (*grad_cmd) return cmd_gradcheck(gc);
  } catch (const flare::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
