// amlrec: train pipeline-recommendation models on sparse performance
// matrices, replay sequential-selection episodes against frozen ground
// truth, and evaluate the resulting traces.
//
// Every command is deterministic in (input files, flags, seed) and drops a
// manifest next to its outputs recording the exact argv, so any run can be
// reproduced byte for byte.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "amlrec/amlrec.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---- small file helpers -----------------------------------------------------

amlrec::MatrixFormat infer_format(const std::string& path, const std::string& flag) {
  if (flag == "csv") return amlrec::MatrixFormat::csv;
  if (flag == "json") return amlrec::MatrixFormat::json;
  const std::string ext = fs::path(path).extension().string();
  if (ext == ".csv") return amlrec::MatrixFormat::csv;
  if (ext == ".json") return amlrec::MatrixFormat::json;
  throw amlrec::ArgumentError("cannot infer matrix format from '" + path +
                              "'; pass --format csv|json");
}

amlrec::SparsePerfMatrix load_matrix_file(const std::string& path, const std::string& fmt) {
  std::ifstream in(path);
  if (!in) throw amlrec::ArgumentError("cannot open matrix file '" + path + "'");
  return amlrec::load_matrix(in, infer_format(path, fmt));
}

amlrec::Model load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw amlrec::ArgumentError("cannot open model file '" + path + "'");
  return amlrec::load_model(in);
}

void write_file(const std::string& path, const std::string& content) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw amlrec::ArgumentError("cannot open output file '" + path + "'");
  out << content;
  if (!out) throw amlrec::Error("failed writing '" + path + "'");
}

std::vector<std::string> split_ids(const std::string& csv) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(csv);
  while (std::getline(in, cur, ','))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<std::string> read_id_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw amlrec::ArgumentError("cannot open id list file '" + path + "'");
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(line);
  return out;
}

std::vector<int> resolve_dataset_ids(const amlrec::SparsePerfMatrix& m,
                                     const std::vector<std::string>& ids) {
  std::map<std::string, int> index;
  for (int d = 0; d < m.n_datasets(); ++d)
    index.emplace(m.dataset_ids()[static_cast<std::size_t>(d)], d);
  std::vector<int> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) {
    const auto it = index.find(id);
    if (it == index.end())
      throw amlrec::ArgumentError("unknown dataset id '" + id + "'");
    out.push_back(it->second);
  }
  return out;
}

// ---- run manifests ----------------------------------------------------------

struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  json config = json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;

  void write(const std::string& path) const {
    json j;
    j["command"] = command;
    j["argv"] = argv;
    j["config"] = config;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["seed"] = seed;
    j["version"] = AMLREC_VERSION;
    write_file(path, j.dump(2) + "\n");
  }
};

// ---- subcommand option bags ---------------------------------------------------

struct TrainOpts {
  std::string matrix, format = "auto", out;
  std::string exclude, exclude_file;
  int q = 20;
  double lr = 0.0; // 0 = optimizer default (1e-7 sgd, 1e-2 adam)
  std::string optimizer = "sgd", init = "pca", kernel = "rbf_ard";
  int epochs = 300, batch = 50, checkpoint_every = 0;
  double sigma_lr_scale = 1.0;
  std::uint64_t seed = 0;
};

struct SynthOpts {
  int n = 100, d = 20, q_true = 3;
  double noise = 0.01, missing = 0.0;
  std::string surface = "nonlinear", out, format = "auto";
  std::uint64_t seed = 0;
};

struct SelectTestOpts {
  std::string matrix, format = "auto", out, agg = "mean";
  int n_test = 0, iters = 300, trials = 100;
  std::uint64_t seed = 0;
};

struct SimulateOpts {
  std::string model, matrix, format = "auto", out_dir;
  std::string datasets, datasets_file;
  std::string methods = "pmf-ei,pmf-greedy,random,random2x,random4x";
  int budget = 100, warm = 5, warm_min_datasets = 5, seeds = 1;
  double xi = 0.01;
  bool center = false;
  std::uint64_t seed = 0;
};

struct EvalOpts {
  std::vector<std::string> traces;
  std::string matrix, format = "auto", model, out, svg_dir;
  bool center = false;
};

// ---- command bodies -----------------------------------------------------------

int cmd_train(const TrainOpts& o, Manifest manifest) {
  amlrec::SparsePerfMatrix m = load_matrix_file(o.matrix, o.format);
  std::vector<std::string> drop_ids = split_ids(o.exclude);
  if (!o.exclude_file.empty()) {
    const std::vector<std::string> more = read_id_file(o.exclude_file);
    drop_ids.insert(drop_ids.end(), more.begin(), more.end());
  }
  if (!drop_ids.empty()) m = amlrec::exclude_datasets(m, resolve_dataset_ids(m, drop_ids));
  for (const std::string& w : m.warnings()) std::cerr << "[amlrec] " << w << "\n";

  amlrec::TrainConfig cfg;
  cfg.q = o.q;
  cfg.learning_rate = o.lr;
  cfg.optimizer = amlrec::optimizer_from_string(o.optimizer);
  cfg.epochs = o.epochs;
  cfg.column_batch = o.batch;
  cfg.seed = o.seed;
  cfg.init = amlrec::init_from_string(o.init);
  cfg.kernel = amlrec::kernel_family_from_string(o.kernel);
  cfg.sigma_lr_scale = o.sigma_lr_scale;

  std::vector<std::string> checkpoints;
  amlrec::EpochCallback on_epoch;
  if (o.checkpoint_every > 0)
    on_epoch = [&](int epoch, const amlrec::Model& snapshot) {
      if (epoch % o.checkpoint_every != 0 || epoch == o.epochs) return;
      std::ostringstream body;
      amlrec::save_model(snapshot, body);
      const std::string path = o.out + ".epoch" + std::to_string(epoch) + ".json";
      write_file(path, body.str());
      checkpoints.push_back(path);
    };

  const amlrec::Model model = amlrec::train(m, cfg, on_epoch);
  std::ostringstream body;
  amlrec::save_model(model, body);
  write_file(o.out, body.str());

  manifest.config = {{"matrix", o.matrix},       {"format", o.format},
                     {"exclude", o.exclude},     {"exclude_file", o.exclude_file},
                     {"q", o.q},                 {"lr", cfg.resolved_learning_rate()},
                     {"optimizer", o.optimizer}, {"epochs", o.epochs},
                     {"batch", o.batch},         {"init", o.init},
                     {"kernel", o.kernel},       {"sigma_lr_scale", o.sigma_lr_scale},
                     {"checkpoint_every", o.checkpoint_every}, {"seed", o.seed}};
  manifest.inputs = {o.matrix};
  manifest.outputs = checkpoints;
  manifest.outputs.push_back(o.out);
  manifest.seed = o.seed;
  manifest.write(o.out + ".manifest.json");
  std::cerr << "[amlrec] trained " << o.epochs << " epochs, final nll "
            << model.meta.final_nll << "\n";
  return 0;
}

int cmd_synth(const SynthOpts& o, Manifest manifest) {
  amlrec::SynthConfig cfg;
  cfg.n_pipelines = o.n;
  cfg.n_datasets = o.d;
  cfg.q_true = o.q_true;
  cfg.noise_sigma = o.noise;
  cfg.missing_fraction = o.missing;
  cfg.surface = amlrec::surface_from_string(o.surface);
  cfg.seed = o.seed;
  const amlrec::SparsePerfMatrix m = amlrec::synth_generate(cfg);
  std::ostringstream body;
  amlrec::save_matrix(m, body, infer_format(o.out, o.format));
  write_file(o.out, body.str());

  manifest.config = {{"n", o.n},          {"d", o.d},           {"q_true", o.q_true},
                     {"noise", o.noise},  {"missing", o.missing}, {"surface", o.surface},
                     {"format", o.format}, {"seed", o.seed}};
  manifest.outputs = {o.out};
  manifest.seed = o.seed;
  manifest.write(o.out + ".manifest.json");
  return 0;
}

int cmd_select_test(const SelectTestOpts& o, Manifest manifest) {
  const amlrec::SparsePerfMatrix m = load_matrix_file(o.matrix, o.format);
  const std::vector<int> picks = amlrec::difficulty_weighted_sample(
      m, o.n_test, o.trials, o.iters, o.seed, amlrec::regret_aggregation_from_string(o.agg));
  std::string body;
  for (int d : picks) body += m.dataset_ids()[static_cast<std::size_t>(d)] + "\n";
  write_file(o.out, body);

  manifest.config = {{"matrix", o.matrix}, {"format", o.format}, {"n_test", o.n_test},
                     {"iters", o.iters},   {"trials", o.trials}, {"agg", o.agg},
                     {"seed", o.seed}};
  manifest.inputs = {o.matrix};
  manifest.outputs = {o.out};
  manifest.seed = o.seed;
  manifest.write(o.out + ".manifest.json");
  return 0;
}

struct MethodSpec {
  std::string name;
  bool is_random = false;
  int multiplier = 1;
  amlrec::Policy policy = amlrec::Policy::ei;
};

MethodSpec parse_method(const std::string& name) {
  if (name == "pmf-ei") return {name, false, 1, amlrec::Policy::ei};
  if (name == "pmf-greedy") return {name, false, 1, amlrec::Policy::greedy_mean};
  if (name == "random") return {name, true, 1, amlrec::Policy::random};
  if (name == "random2x") return {name, true, 2, amlrec::Policy::random};
  if (name == "random4x") return {name, true, 4, amlrec::Policy::random};
  throw amlrec::ArgumentError("unknown method '" + name + "'");
}

int cmd_simulate(const SimulateOpts& o, Manifest manifest) {
  const amlrec::Model model = load_model_file(o.model);
  const amlrec::SparsePerfMatrix m = load_matrix_file(o.matrix, o.format);
  if (m.n_pipelines() != static_cast<int>(model.embedding.n()))
    throw amlrec::ArgumentError("model and matrix disagree on pipeline count");

  std::vector<std::string> ids = split_ids(o.datasets);
  if (!o.datasets_file.empty()) {
    const std::vector<std::string> more = read_id_file(o.datasets_file);
    ids.insert(ids.end(), more.begin(), more.end());
  }
  if (ids.empty()) throw amlrec::ArgumentError("no test datasets given "
                                               "(--datasets or --datasets-file)");
  const std::vector<int> test = resolve_dataset_ids(m, ids);

  std::vector<MethodSpec> methods;
  for (const std::string& name : split_ids(o.methods)) methods.push_back(parse_method(name));
  if (methods.empty()) throw amlrec::ArgumentError("no methods selected");
  for (const MethodSpec& ms : methods)
    if (ms.is_random && o.budget * ms.multiplier > m.n_pipelines())
      throw amlrec::ArgumentError("budget x" + std::to_string(ms.multiplier) +
                                  " exceeds the pipeline count for method " + ms.name);
  if (o.budget < 0 || o.seeds < 1)
    throw amlrec::ArgumentError("budget must be >= 0 and seeds >= 1");

  // warm-start ranking must not see the held-out test columns
  std::vector<int> warm;
  const int warm_k = std::min(o.warm, o.budget);
  if (warm_k > 0)
    warm = amlrec::warm_start(amlrec::exclude_datasets(m, test), warm_k, o.warm_min_datasets);

  std::vector<amlrec::TargetColumn> columns;
  columns.reserve(test.size());
  for (int d : test) columns.push_back(amlrec::TargetColumn::from_matrix(m, d));

  const std::size_t episodes_per_method = test.size() * static_cast<std::size_t>(o.seeds);
  std::vector<amlrec::MethodTraces> results(methods.size());
  struct Job {
    std::size_t method, slot, column;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    results[mi].method = methods[mi].name;
    results[mi].traces.resize(episodes_per_method);
    for (std::size_t di = 0; di < test.size(); ++di)
      for (int s = 0; s < o.seeds; ++s) {
        const std::uint64_t ep_seed =
            amlrec::mix_seed(o.seed, static_cast<std::uint64_t>(test[di]),
                             static_cast<std::uint64_t>(s));
        jobs.push_back({mi, di * static_cast<std::size_t>(o.seeds) +
                                static_cast<std::size_t>(s),
                        di, ep_seed});
      }
  }
  amlrec::parallel_for(jobs.size(), [&](std::size_t j) {
    const Job& job = jobs[j];
    const MethodSpec& ms = methods[job.method];
    amlrec::SelectionTrace t;
    if (ms.is_random) {
      t = amlrec::random_baseline(columns[job.column], o.budget, ms.multiplier, job.seed);
    } else {
      amlrec::AcquisitionConfig acq;
      acq.policy = ms.policy;
      acq.xi = o.xi;
      acq.seed = job.seed;
      t = amlrec::run_episode(model, columns[job.column], o.budget, acq, warm, job.seed);
    }
    t.method = ms.name;
    results[job.method].traces[job.slot] = std::move(t);
  });

  fs::create_directories(o.out_dir);
  std::vector<std::string> outputs;
  for (const amlrec::MethodTraces& mt : results) {
    std::ostringstream body;
    amlrec::write_traces_jsonl(mt.traces, body);
    const std::string path = (fs::path(o.out_dir) / ("trace_" + mt.method + ".jsonl")).string();
    write_file(path, body.str());
    outputs.push_back(path);
  }

  std::vector<amlrec::TargetColumn> episode_columns;
  episode_columns.reserve(episodes_per_method);
  for (std::size_t di = 0; di < test.size(); ++di)
    for (int s = 0; s < o.seeds; ++s) episode_columns.push_back(columns[di]);
  const amlrec::CurveSet curves =
      amlrec::compute_curves(results, episode_columns, &model, o.center);
  std::ostringstream curves_body;
  amlrec::write_curves_csv(curves, curves_body);
  const std::string curves_path = (fs::path(o.out_dir) / "curves.csv").string();
  write_file(curves_path, curves_body.str());
  outputs.push_back(curves_path);

  manifest.config = {{"model", o.model},
                     {"matrix", o.matrix},
                     {"format", o.format},
                     {"datasets", ids},
                     {"methods", o.methods},
                     {"budget", o.budget},
                     {"warm", o.warm},
                     {"warm_min_datasets", o.warm_min_datasets},
                     {"xi", o.xi},
                     {"seeds", o.seeds},
                     {"center", o.center},
                     {"seed", o.seed}};
  manifest.inputs = {o.model, o.matrix};
  manifest.outputs = outputs;
  manifest.seed = o.seed;
  manifest.write((fs::path(o.out_dir) / "manifest.json").string());
  return 0;
}

int cmd_eval(const EvalOpts& o, Manifest manifest) {
  std::vector<amlrec::SelectionTrace> all;
  for (const std::string& path : o.traces) {
    std::ifstream in(path);
    if (!in) throw amlrec::ArgumentError("cannot open trace file '" + path + "'");
    std::vector<amlrec::SelectionTrace> part = amlrec::read_traces_jsonl(in);
    all.insert(all.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  if (all.empty()) throw amlrec::ArgumentError("trace files contain no traces");

  std::vector<amlrec::MethodTraces> groups;
  for (amlrec::SelectionTrace& t : all) {
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const amlrec::MethodTraces& g) { return g.method == t.method; });
    if (it == groups.end()) {
      groups.push_back({t.method, {}});
      it = groups.end() - 1;
    }
    it->traces.push_back(std::move(t));
  }
  const std::size_t n_episodes = groups.front().traces.size();
  for (const amlrec::MethodTraces& g : groups) {
    if (g.traces.size() != n_episodes)
      throw amlrec::ArgumentError("method '" + g.method + "' covers a different episode count");
    for (std::size_t k = 0; k < n_episodes; ++k)
      if (g.traces[k].dataset != groups.front().traces[k].dataset)
        throw amlrec::ArgumentError("methods disagree on episode dataset order");
  }

  const amlrec::SparsePerfMatrix m = load_matrix_file(o.matrix, o.format);
  std::vector<std::string> episode_ids;
  for (std::size_t k = 0; k < n_episodes; ++k)
    episode_ids.push_back(groups.front().traces[k].dataset);
  const std::vector<int> indices = resolve_dataset_ids(m, episode_ids);
  std::vector<amlrec::TargetColumn> columns;
  for (int d : indices) columns.push_back(amlrec::TargetColumn::from_matrix(m, d));

  std::optional<amlrec::Model> model;
  if (!o.model.empty()) model = load_model_file(o.model);

  const amlrec::CurveSet curves =
      amlrec::compute_curves(groups, columns, model ? &*model : nullptr, o.center);
  std::ostringstream body;
  amlrec::write_curves_csv(curves, body);
  write_file(o.out, body.str());
  std::vector<std::string> outputs = {o.out};

  if (!o.svg_dir.empty()) {
    fs::create_directories(o.svg_dir);
    const std::pair<const char*, amlrec::MetricSeries amlrec::MethodCurves::*> metrics[] = {
        {"avg_rank", &amlrec::MethodCurves::avg_rank},
        {"regret", &amlrec::MethodCurves::regret},
        {"mse", &amlrec::MethodCurves::mse},
        {"posterior_variance", &amlrec::MethodCurves::posterior_variance}};
    for (const auto& [name, member] : metrics) {
      std::vector<amlrec::ChartSeries> series;
      for (const auto& [method, mc] : curves.methods)
        if (!(mc.*member).empty()) series.push_back({method, (mc.*member).value});
      if (series.empty()) continue;
      const std::string path = (fs::path(o.svg_dir) / (std::string(name) + ".svg")).string();
      write_file(path, amlrec::render_line_chart(name, name, series));
      outputs.push_back(path);
    }
  }

  manifest.config = {{"traces", o.traces}, {"matrix", o.matrix}, {"format", o.format},
                     {"model", o.model},   {"center", o.center}, {"svg_dir", o.svg_dir}};
  manifest.inputs = o.traces;
  manifest.inputs.push_back(o.matrix);
  if (!o.model.empty()) manifest.inputs.push_back(o.model);
  manifest.outputs = outputs;
  manifest.write(o.out + ".manifest.json");
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  std::vector<std::string> raw_argv(argv, argv + argc);

  CLI::App app{"meta-learning pipeline recommender: probabilistic matrix "
               "factorization over a sparse pipeline x dataset score matrix, "
               "GP posterior prediction, and expected-improvement selection"};
  app.set_version_flag("--version", AMLREC_VERSION);
  app.require_subcommand(1);

  TrainOpts train_o;
  CLI::App* train = app.add_subcommand("train", "fit latent embedding and kernel");
  train->add_option("--matrix", train_o.matrix, "performance matrix file")
      ->required()->check(CLI::ExistingFile);
  train->add_option("--format", train_o.format, "matrix format (default: by extension)")
      ->check(CLI::IsMember({"auto", "csv", "json"}));
  train->add_option("--out", train_o.out, "checkpoint path")->required();
  train->add_option("--q", train_o.q, "latent dimensions (default 20)");
  train->add_option("--lr", train_o.lr,
                    "learning rate (default: 1e-7 for sgd, 1e-2 for adam)");
  train->add_option("--optimizer", train_o.optimizer, "sgd or adam")
      ->check(CLI::IsMember({"sgd", "adam"}));
  train->add_option("--epochs", train_o.epochs, "training epochs (default 300)");
  train->add_option("--batch", train_o.batch, "columns per update (default 50)");
  train->add_option("--seed", train_o.seed, "random seed");
  train->add_option("--init", train_o.init, "latent init: pca or random")
      ->check(CLI::IsMember({"pca", "random"}));
  train->add_option("--kernel", train_o.kernel, "kernel family: rbf_ard or linear")
      ->check(CLI::IsMember({"rbf_ard", "linear"}));
  train->add_option("--sigma-lr-scale", train_o.sigma_lr_scale,
                    "multiplier on the noise parameter's learning rate");
  train->add_option("--checkpoint-every", train_o.checkpoint_every,
                    "also write a snapshot every k epochs (0 = off)");
  train->add_option("--exclude-datasets", train_o.exclude,
                    "comma-separated dataset ids to drop before training");
  train->add_option("--exclude-datasets-file", train_o.exclude_file,
                    "file with one dataset id per line to drop")
      ->check(CLI::ExistingFile);

  SynthOpts synth_o;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic benchmark matrix");
  synth->add_option("--n", synth_o.n, "pipelines (default 100)");
  synth->add_option("--d", synth_o.d, "datasets (default 20)");
  synth->add_option("--q-true", synth_o.q_true, "latent rank (default 3)");
  synth->add_option("--noise", synth_o.noise, "observation noise sd (default 0.01)");
  synth->add_option("--missing", synth_o.missing, "fraction of cells dropped (default 0)");
  synth->add_option("--surface", synth_o.surface, "linear or nonlinear")
      ->check(CLI::IsMember({"linear", "nonlinear"}));
  synth->add_option("--seed", synth_o.seed, "random seed");
  synth->add_option("--out", synth_o.out, "matrix output path")->required();
  synth->add_option("--format", synth_o.format, "matrix format (default: by extension)")
      ->check(CLI::IsMember({"auto", "csv", "json"}));

  SelectTestOpts st_o;
  CLI::App* st = app.add_subcommand(
      "select-test", "pick test datasets weighted by random-search difficulty");
  st->add_option("--matrix", st_o.matrix, "performance matrix file")
      ->required()->check(CLI::ExistingFile);
  st->add_option("--format", st_o.format)->check(CLI::IsMember({"auto", "csv", "json"}));
  st->add_option("--n-test", st_o.n_test, "datasets to select")->required();
  st->add_option("--iters", st_o.iters, "random-search length (default 300)");
  st->add_option("--trials", st_o.trials, "random-search repeats (default 100)");
  st->add_option("--agg", st_o.agg, "regret aggregation: mean or final")
      ->check(CLI::IsMember({"mean", "final"}));
  st->add_option("--seed", st_o.seed, "random seed");
  st->add_option("--out", st_o.out, "output path (one dataset id per line)")->required();

  SimulateOpts sim_o;
  CLI::App* sim = app.add_subcommand("simulate", "replay selection episodes on test datasets");
  sim->add_option("--model", sim_o.model, "trained checkpoint")
      ->required()->check(CLI::ExistingFile);
  sim->add_option("--matrix", sim_o.matrix, "performance matrix file")
      ->required()->check(CLI::ExistingFile);
  sim->add_option("--format", sim_o.format)->check(CLI::IsMember({"auto", "csv", "json"}));
  sim->add_option("--datasets", sim_o.datasets, "comma-separated test dataset ids");
  sim->add_option("--datasets-file", sim_o.datasets_file, "file with one test id per line")
      ->check(CLI::ExistingFile);
  sim->add_option("--budget", sim_o.budget, "evaluations per episode (default 100)");
  sim->add_option("--warm", sim_o.warm, "warm-start picks (default 5)");
  sim->add_option("--warm-min-datasets", sim_o.warm_min_datasets,
                  "observations a pipeline needs to be warm-start eligible (default 5)");
  sim->add_option("--xi", sim_o.xi, "exploration offset (default 0.01)");
  sim->add_option("--seeds", sim_o.seeds, "episodes per dataset (default 1)");
  sim->add_option("--seed", sim_o.seed, "base random seed");
  sim->add_option("--methods", sim_o.methods,
                  "subset of pmf-ei,pmf-greedy,random,random2x,random4x");
  sim->add_flag("--center-observations", sim_o.center,
                "center observed scores before the posterior solve");
  sim->add_option("--out-dir", sim_o.out_dir, "output directory")->required();

  EvalOpts eval_o;
  CLI::App* eval = app.add_subcommand("eval", "recompute curves from trace files");
  eval->add_option("--traces", eval_o.traces, "trace JSONL files")
      ->required()->check(CLI::ExistingFile);
  eval->add_option("--matrix", eval_o.matrix, "performance matrix file")
      ->required()->check(CLI::ExistingFile);
  eval->add_option("--format", eval_o.format)->check(CLI::IsMember({"auto", "csv", "json"}));
  eval->add_option("--model", eval_o.model,
                   "checkpoint for prediction-quality metrics")->check(CLI::ExistingFile);
  eval->add_flag("--center-observations", eval_o.center,
                 "center observed scores before the posterior solve");
  eval->add_option("--out", eval_o.out, "curve CSV path")->required();
  eval->add_option("--svg-dir", eval_o.svg_dir, "also render one SVG chart per metric");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  Manifest manifest;
  manifest.argv = raw_argv;
  try {
    if (train->parsed()) {
      manifest.command = "train";
      return cmd_train(train_o, std::move(manifest));
    }
    if (synth->parsed()) {
      manifest.command = "synth";
      return cmd_synth(synth_o, std::move(manifest));
    }
    if (st->parsed()) {
      manifest.command = "select-test";
      return cmd_select_test(st_o, std::move(manifest));
    }
    if (sim->parsed()) {
      manifest.command = "simulate";
      return cmd_simulate(sim_o, std::move(manifest));
    }
    if (eval->parsed()) {
      manifest.command = "eval";
      return cmd_eval(eval_o, std::move(manifest));
    }
  } catch (const amlrec::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const amlrec::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const amlrec::ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
