#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <regex>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "energylens/energy_model.hpp"
#include "energylens/error.hpp"
#include "energylens/format.hpp"
#include "energylens/selector.hpp"
#include "energylens/symreg.hpp"

namespace energylens::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names = {"energylens", "linear", "rf", "gbm", "proxy",
                                                 "proxy-mean"};
  return names;
}

namespace {

template <typename Model, typename Fit, typename Predict>
Predictor per_context(const Dataset& train, Fit fit_one, Predict predict_one) {
  auto models = std::make_shared<std::map<ContextKey, Model>>();
  for (const auto& key : contexts(train)) models->emplace(key, fit_one(filter_context(train, key)));
  return [models, predict_one](const ProfilingRecord& r) {
    const auto it = models->find(context_of(r));
    if (it == models->end())
      throw Error(ErrorKind::invalid_argument, "no fitted model for context " + r.model_id + "/" +
                                                   r.hardware_id + "/" + r.modality);
    return predict_one(it->second, r);
  };
}

}  // namespace

Predictor fit_method(const std::string& method, const Dataset& train, const MethodOptions& options) {
  if (method == "energylens") {
    return per_context<Params>(
        train, [&](const Dataset& d) { return fit(d, options.fit).params; },
        [](const Params& p, const ProfilingRecord& r) { return predict(p, r); });
  }
  if (method == "linear") {
    auto model = std::make_shared<LinearModel>(fit_linear(train));
    return [model](const ProfilingRecord& r) { return predict_linear(*model, r); };
  }
  if (method == "rf" || method == "gbm") {
    std::shared_ptr<TreeEnsemble> model;
    if (method == "rf") {
      ForestOptions fo;
      fo.seed = options.seed;
      model = std::make_shared<TreeEnsemble>(fit_forest(train, fo));
    } else {
      BoostingOptions bo;
      bo.seed = options.seed;
      model = std::make_shared<TreeEnsemble>(fit_boosting(train, bo));
    }
    return [model](const ProfilingRecord& r) { return predict_ensemble(*model, r); };
  }
  if (method == "proxy" || method == "proxy-mean") {
    ProxyOptions po;
    po.power_mode = method == "proxy" ? PowerMode::per_config_table : PowerMode::global_mean;
    po.fit = options.fit;
    return per_context<LatencyProxyModel>(
        train, [&](const Dataset& d) { return fit_latency_proxy(d, po); },
        [](const LatencyProxyModel& m, const ProfilingRecord& r) { return predict_proxy(m, r); });
  }
  throw Error(ErrorKind::invalid_argument, "unknown method '" + method + "'");
}

namespace {

/// Raised for bad flag values detected after parsing; maps to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Context {
  std::ostream& out;
  std::ostream& err;
  std::vector<std::string> argv;
  std::string subcommand;
  std::string resolved;
  int verbosity = 0;
  std::uint64_t seed = 0;
  fs::path out_dir = ".";
  std::chrono::system_clock::time_point started = std::chrono::system_clock::now();
  std::chrono::steady_clock::time_point clock = std::chrono::steady_clock::now();

  void log(const std::string& msg) const {
    if (verbosity > 0) err << "[energylens] " << msg << '\n';
  }

  fs::path resolve(const std::string& path) const {
    const fs::path p(path);
    return p.is_absolute() ? p : out_dir / p;
  }
};

std::string utc_timestamp(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

void write_json(const fs::path& path, const ojson& j) { write_text(path, j.dump(2) + "\n"); }

/// Timestamps and wall time live here only, so primary outputs stay
/// byte-identical across runs.
void write_manifest(const Context& ctx, const fs::path& primary, const std::vector<fs::path>& outputs,
                    ojson extra = ojson::object()) {
  ojson m;
  m["tool"] = "energylens";
  m["subcommand"] = ctx.subcommand;
  m["argv"] = ctx.argv;
  m["seed"] = ctx.seed;
  m["resolved_settings"] = ctx.resolved;
  std::vector<std::string> names;
  for (const auto& p : outputs) names.push_back(p.string());
  m["outputs"] = names;
  m["started_utc"] = utc_timestamp(ctx.started);
  m["wall_time_s"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - ctx.clock).count();
  for (auto& [k, v] : extra.items()) m[k] = v;
  write_json(fs::path(primary.string() + ".manifest.json"), m);
}

fs::path with_extension(const fs::path& p, const std::string& ext) {
  fs::path out = p;
  out.replace_extension(ext);
  return out;
}

std::optional<ContextKey> parse_context(const std::string& text) {
  if (text.empty()) return std::nullopt;
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, '/')) parts.push_back(item);
  if (parts.size() != 3) throw UsageError("--context expects model/hardware/modality, got '" + text + "'");
  return ContextKey{parts[0], parts[1], parts[2]};
}

Dataset load_input(const std::string& path, const std::string& context) {
  Dataset data = load_csv(path);
  if (auto key = parse_context(context)) {
    data = filter_context(data, *key);
    if (data.empty()) throw Error(ErrorKind::empty_dataset, "no records for context '" + context + "'");
  }
  return data;
}

/// Training draw plus the records that were not drawn.
std::pair<Dataset, Dataset> draw_train(const Dataset& data, std::size_t n, const std::string& sampling,
                                       std::optional<std::int64_t> input_tokens, std::uint64_t seed) {
  if (sampling == "random") return holdout(data, n, seed);
  Dataset train = sample_lhs_records(data, input_tokens, n, seed);
  std::vector<bool> used(data.size(), false);
  for (const auto& r : train.records) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!used[i] && data.records[i] == r) {
        used[i] = true;
        break;
      }
    }
  }
  Dataset test;
  test.source = data.source;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (!used[i]) test.records.push_back(data.records[i]);
  return {train, test};
}

struct GenerateFlags {
  std::string grid = "default";
  double noise = 0.0;
  double power_exponent = 0.8;
  double power_base = 250.0;
  std::vector<int> tp, pp, batch, max_tokens;
  std::vector<std::int64_t> input_tokens;
  std::string output = "data.csv";
};

struct FitFlags {
  std::string data;
  std::size_t n = 50;
  std::string method = "energylens";
  std::string sampling = "random";
  std::int64_t lhs_input_tokens = 0;
  std::string loss = "sq-abs-log";
  int starts = 16;
  std::string context;
  std::string output = "params.json";
};

struct EvaluateFlags {
  std::string data;
  std::vector<std::string> methods = {"energylens", "linear", "rf", "gbm", "proxy"};
  std::size_t n = 50;
  std::string sampling = "random";
  std::int64_t lhs_input_tokens = 0;
  std::string power_mode = "per-config";
  std::string loss = "sq-abs-log";
  std::string dataset_name;
  std::string context;
  std::string output = "leaderboard.csv";
};

struct SelectFlags {
  std::string params;
  std::int64_t input_tokens = 512;
  std::vector<int> tp{1, 2, 4}, pp{1, 2, 4}, batch{1}, max_tokens{128};
  std::string constraint;
  std::string output = "ranking.csv";
};

struct WhatIfFlags {
  std::string params;
  std::string axis = "batch";
  std::vector<int> values;
  int tp = 1, pp = 1, batch = 1, max_tokens = 128;
  std::int64_t input_tokens = 512;
  std::string output = "whatif.csv";
};

struct SymregFlags {
  std::string data;
  int pop = 500;
  int generations = 40;
  double parsimony = 1e-3;
  std::vector<std::string> features;
  std::size_t n = 200;
  std::string context;
  std::string output = "front.json";
};

struct BenchFlags {
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<std::size_t> sizes{50, 500};
  double noise = 0.05;
  std::vector<std::string> methods = {"energylens", "linear", "rf", "gbm", "proxy", "proxy-mean"};
};

MethodOptions method_options(const Context& ctx, const std::string& loss, int starts = 16) {
  MethodOptions o;
  o.seed = ctx.seed;
  o.fit.seed = ctx.seed;
  o.fit.loss = parse_loss(loss);
  o.fit.n_starts = starts;
  return o;
}

int cmd_generate(const Context& ctx, const GenerateFlags& f) {
  if (f.grid != "default") throw UsageError("--grid: only 'default' is built in; override axes with --tp/--pp/--batch/--max-tokens");
  ConfigSpace space;
  if (!f.tp.empty()) space.tp_values = f.tp;
  if (!f.pp.empty()) space.pp_values = f.pp;
  if (!f.batch.empty()) space.batch_values = f.batch;
  if (!f.max_tokens.empty()) space.max_token_values = f.max_tokens;
  const auto input_tokens = f.input_tokens.empty() ? default_input_tokens() : f.input_tokens;
  GroundTruthSpec truth;
  truth.noise = f.noise > 0 ? NoiseModel::lognormal(f.noise) : NoiseModel::none();
  truth.seed = ctx.seed;
  SyntheticOptions so;
  so.power_exponent = f.power_exponent;
  so.power_base_w = f.power_base;
  const Dataset data = generate_synthetic(space, input_tokens, truth, so);
  const fs::path out = ctx.resolve(f.output);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_csv(data, out);
  write_sidecar(out, data.source, ctx.seed);
  const fs::path sidecar = with_extension(out, ".json");
  write_manifest(ctx, out, {out, sidecar});
  ctx.out << "wrote " << data.size() << " rows to " << out.string() << '\n';
  return 0;
}

int cmd_fit(const Context& ctx, const FitFlags& f) {
  const Dataset data = load_input(f.data, f.context);
  auto [train, rest] = draw_train(data, f.n, f.sampling,
                                  f.lhs_input_tokens > 0 ? std::optional(f.lhs_input_tokens) : std::nullopt,
                                  ctx.seed);
  ctx.log("training on " + std::to_string(train.size()) + " of " + std::to_string(data.size()) + " records");
  const auto opts = method_options(ctx, f.loss, f.starts);
  const fs::path out = ctx.resolve(f.output);
  ojson summary;
  summary["method"] = f.method;
  summary["n_train"] = train.size();
  const auto t0 = std::chrono::steady_clock::now();
  ojson artifact;
  if (f.method == "energylens") {
    const FitResult result = fit(train, opts.fit);
    artifact = params_to_json(result);
    summary["loss"] = to_string(result.loss);
    summary["train_loss"] = result.train_loss;
    summary["n_starts"] = result.n_starts;
    summary["converged_starts"] = result.converged_starts;
  } else if (f.method == "linear") {
    artifact = to_json(fit_linear(train));
  } else if (f.method == "rf") {
    ForestOptions fo;
    fo.seed = ctx.seed;
    artifact = to_json(fit_forest(train, fo));
  } else if (f.method == "gbm") {
    BoostingOptions bo;
    bo.seed = ctx.seed;
    artifact = to_json(fit_boosting(train, bo));
  } else if (f.method == "proxy" || f.method == "proxy-mean") {
    if (contexts(train).size() != 1)
      throw Error(ErrorKind::mixed_context, "the proxy fits one context at a time; pass --context");
    ProxyOptions po;
    po.power_mode = f.method == "proxy" ? PowerMode::per_config_table : PowerMode::global_mean;
    po.fit = opts.fit;
    const auto model = fit_latency_proxy(train, po);
    artifact = to_json(model);
    summary["scale"] = model.scale;
  } else {
    throw UsageError("--method: unknown method '" + f.method + "'");
  }
  summary["fit_wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_json(out, artifact);
  write_manifest(ctx, out, {out}, {{"fit_summary", summary}});
  ctx.out << "fit " << f.method << " on " << train.size() << " records";
  if (summary.contains("train_loss"))
    ctx.out << ": loss " << summary["loss"].get<std::string>() << " = " << summary["train_loss"].get<double>()
            << ", " << summary["converged_starts"].get<int>() << "/" << summary["n_starts"].get<int>()
            << " starts converged";
  ctx.out << ", " << summary["fit_wall_time_s"].get<double>() << " s\n";
  ctx.out << "wrote " << out.string() << '\n';
  return 0;
}

int cmd_evaluate(const Context& ctx, const EvaluateFlags& f) {
  const Dataset data = load_input(f.data, f.context);
  auto [train, test] = draw_train(data, f.n, f.sampling,
                                  f.lhs_input_tokens > 0 ? std::optional(f.lhs_input_tokens) : std::nullopt,
                                  ctx.seed);
  const PowerMode mode = parse_power_mode(f.power_mode);
  const auto opts = method_options(ctx, f.loss);
  const std::string dataset = f.dataset_name.empty() ? fs::path(f.data).stem().string() : f.dataset_name;
  std::vector<LeaderboardRow> rows;
  for (std::string method : f.methods) {
    if (method == "proxy" && mode == PowerMode::global_mean) method = "proxy-mean";
    ctx.log("fitting " + method);
    const Predictor predictor = fit_method(method, train, opts);
    rows.push_back({method, dataset, train.size(), evaluate(predictor, test)});
  }
  const fs::path out = ctx.resolve(f.output);
  std::ostringstream csv;
  write_leaderboard_csv(rows, csv);
  write_text(out, csv.str());
  const fs::path json_path = with_extension(out, ".json");
  write_json(json_path, report_to_json(rows));
  write_manifest(ctx, out, {out, json_path});
  write_leaderboard_table(rows, ctx.out);
  return 0;
}

Constraints parse_constraint(const std::string& text) {
  Constraints c;
  if (text.empty()) return c;
  static const std::regex re(R"(\s*gpus\s*<=\s*(\d+)\s*)");
  std::smatch m;
  if (!std::regex_match(text, m, re)) throw UsageError("--constraint: expected gpus<=N, got '" + text + "'");
  c.max_gpus = std::stoi(m[1].str());
  return c;
}

int cmd_select(const Context& ctx, const SelectFlags& f) {
  SelectionRequest req;
  req.constraints = parse_constraint(f.constraint);
  req.params = load_params(f.params).params;
  req.space.tp_values = f.tp;
  req.space.pp_values = f.pp;
  req.space.batch_values = f.batch;
  req.space.max_token_values = f.max_tokens;
  req.input_tokens = f.input_tokens;
  const auto ranking = select(req);
  const fs::path out = ctx.resolve(f.output);
  std::ostringstream csv;
  write_ranking_csv(ranking, csv);
  write_text(out, csv.str());
  const fs::path json_path = with_extension(out, ".json");
  write_json(json_path, ranking_to_json(ranking, f.input_tokens));
  write_manifest(ctx, out, {out, json_path});
  const auto& best = ranking.front();
  ctx.out << "best: tp=" << best.point.tp << " pp=" << best.point.pp << " batch=" << best.point.batch_size
          << " max_tokens=" << best.point.max_tokens << " -> " << best.energy_j << " J (" << ranking.size()
          << " configurations ranked)\n";
  return 0;
}

int cmd_whatif(const Context& ctx, const WhatIfFlags& f) {
  const Params params = load_params(f.params).params;
  const SweepAxis axis = parse_sweep_axis(f.axis);
  const ConfigPoint base{f.tp, f.pp, f.batch, f.max_tokens};
  const auto rows = whatif(params, base, f.input_tokens, axis, f.values);
  const fs::path out = ctx.resolve(f.output);
  std::ostringstream csv;
  write_whatif_csv(rows, axis, csv);
  write_text(out, csv.str());
  const fs::path json_path = with_extension(out, ".json");
  write_json(json_path, whatif_to_json(rows, axis, base, f.input_tokens));
  write_manifest(ctx, out, {out, json_path});
  ctx.out << csv.str();
  return 0;
}

int cmd_symreg(const Context& ctx, const SymregFlags& f) {
  const Dataset data = load_input(f.data, f.context);
  const Dataset rows = f.n > 0 && f.n < data.size() ? sample_random(data, f.n, ctx.seed) : data;
  symreg::SRConfig config;
  config.population_size = f.pop;
  config.generations = f.generations;
  config.parsimony_coefficient = f.parsimony;
  config.seed = ctx.seed;
  const auto& names = symreg::feature_names();
  for (const auto& name : f.features) {
    const std::string full = name.rfind("f_", 0) == 0 ? name : "f_" + name;
    const auto it = std::find(names.begin(), names.end(), full);
    if (it == names.end()) throw UsageError("--features: unknown feature '" + name + "'");
    config.feature_set.push_back(static_cast<int>(it - names.begin()));
  }
  ctx.log("running GP on " + std::to_string(rows.size()) + " records");
  const auto result = symreg::run_sr(rows, config);
  const fs::path out = ctx.resolve(f.output);
  write_json(out, symreg::result_to_json(result));
  write_manifest(ctx, out, {out});
  ctx.out << "best: " << symreg::to_prefix(result.best, names) << '\n';
  ctx.out << "front: " << result.pareto_front.size() << " expressions, wrote " << out.string() << '\n';
  return 0;
}

int cmd_bench(const Context& ctx, const BenchFlags& f) {
  std::vector<LeaderboardRow> rows;
  for (std::uint64_t seed : f.seeds) {
    GroundTruthSpec truth;
    truth.noise = f.noise > 0 ? NoiseModel::lognormal(f.noise) : NoiseModel::none();
    truth.seed = seed;
    const Dataset data = generate_synthetic(ConfigSpace{}, default_input_tokens(), truth);
    const std::string name = "synthetic-s" + std::to_string(seed);
    for (std::size_t n : f.sizes) {
      auto [train, test] = holdout(data, n, seed);
      MethodOptions opts;
      opts.seed = seed;
      opts.fit.seed = seed;
      for (const auto& method : f.methods) {
        ctx.log(name + " n=" + std::to_string(n) + " " + method);
        rows.push_back({method, name, n, evaluate(fit_method(method, train, opts), test)});
      }
    }
  }
  std::ostringstream board, accuracy, ranking;
  write_leaderboard_csv(rows, board);
  accuracy << "method,dataset,n_train,mape,r2,rmse\n";
  ranking << "method,dataset,n_train,pairwise,spearman,top1,regret\n";
  for (const auto& r : rows) {
    const auto& e = r.report;
    accuracy << r.method << ',' << r.dataset << ',' << r.n_train << ',' << format_double(e.mape) << ','
             << format_double(e.r2) << ',' << format_double(e.rmse) << '\n';
    ranking << r.method << ',' << r.dataset << ',' << r.n_train << ',' << format_double(e.pairwise_accuracy)
            << ',' << format_double(e.spearman_rho) << ',' << format_double(e.top1_accuracy) << ','
            << format_double(e.mean_regret_pct) << '\n';
  }
  const fs::path board_path = ctx.resolve("leaderboard.csv");
  const fs::path acc_path = ctx.resolve("accuracy.csv");
  const fs::path rank_path = ctx.resolve("ranking.csv");
  const fs::path json_path = ctx.resolve("report.json");
  write_text(board_path, board.str());
  write_text(acc_path, accuracy.str());
  write_text(rank_path, ranking.str());
  write_json(json_path, report_to_json(rows));
  write_manifest(ctx, board_path, {board_path, acc_path, rank_path, json_path});
  write_leaderboard_table(rows, ctx.out);
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) { return run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr); }

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Energy modeling and configuration selection for parallel LLM inference"};
  app.name("energylens");
  app.fallthrough();
  app.require_subcommand(1);
  app.set_config("--config", "", "Read flag values from a TOML/INI file (flags win)");

  Context ctx{out, err, {args.begin(), args.end()}, "", ""};
  std::string out_dir = ".";
  app.add_option("--seed", ctx.seed, "Root seed for every random draw")->envname("ENERGYLENS_SEED");
  app.add_option("--out-dir", out_dir, "Directory for relative output paths");
  app.add_flag("-v,--verbose", ctx.verbosity, "Progress messages on stderr (repeatable)");

  GenerateFlags gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic benchmark CSV and its sidecar");
  g->add_option("--grid", gen.grid, "Configuration grid")->capture_default_str();
  g->add_option("--noise", gen.noise, "Lognormal noise sigma on energy")->check(CLI::NonNegativeNumber)->capture_default_str();
  g->add_option("--power-exponent", gen.power_exponent, "Power grows as (tp*pp)^exponent")->capture_default_str();
  g->add_option("--power-base", gen.power_base, "Power at tp*pp=1 (W)")->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--tp", gen.tp, "TP degrees")->delimiter(',');
  g->add_option("--pp", gen.pp, "PP degrees")->delimiter(',');
  g->add_option("--batch", gen.batch, "Batch sizes")->delimiter(',');
  g->add_option("--max-tokens", gen.max_tokens, "Output lengths")->delimiter(',');
  g->add_option("--input-tokens", gen.input_tokens, "Total input token counts")->delimiter(',');
  g->add_option("-o,--output", gen.output, "CSV path")->capture_default_str();

  FitFlags fitf;
  auto* fcmd = app.add_subcommand("fit", "Fit a model on a sample of a profiling CSV");
  fcmd->add_option("data", fitf.data, "Profiling CSV")->required();
  fcmd->add_option("--n", fitf.n, "Training records")->check(CLI::PositiveNumber)->capture_default_str();
  fcmd->add_option("--method", fitf.method, "energylens, linear, rf, gbm, proxy or proxy-mean")
      ->check(CLI::IsMember(method_names()))
      ->capture_default_str();
  fcmd->add_option("--sampling", fitf.sampling, "random or lhs")->check(CLI::IsMember({"random", "lhs"}))->capture_default_str();
  fcmd->add_option("--lhs-input-tokens", fitf.lhs_input_tokens, "Restrict LHS draws to one input length");
  fcmd->add_option("--loss", fitf.loss, "sq-abs-log or sq-rel")->check(CLI::IsMember({"sq-abs-log", "sq-rel"}))->capture_default_str();
  fcmd->add_option("--starts", fitf.starts, "Multi-start count")->check(CLI::PositiveNumber)->capture_default_str();
  fcmd->add_option("--context", fitf.context, "model/hardware/modality filter");
  fcmd->add_option("-o,--output", fitf.output, "Model JSON path")->capture_default_str();

  EvaluateFlags ev;
  auto* ecmd = app.add_subcommand("evaluate", "Fit methods on one split and score them on the rest");
  ecmd->add_option("data", ev.data, "Profiling CSV")->required();
  ecmd->add_option("--methods", ev.methods, "Comma-separated methods")
      ->delimiter(',')
      ->check(CLI::IsMember(method_names()))
      ->capture_default_str();
  ecmd->add_option("--n", ev.n, "Training records")->check(CLI::PositiveNumber)->capture_default_str();
  ecmd->add_option("--sampling", ev.sampling, "random or lhs")->check(CLI::IsMember({"random", "lhs"}))->capture_default_str();
  ecmd->add_option("--lhs-input-tokens", ev.lhs_input_tokens, "Restrict LHS draws to one input length");
  ecmd->add_option("--power-mode", ev.power_mode, "Proxy power: per-config or mean")
      ->check(CLI::IsMember({"per-config", "mean"}))
      ->capture_default_str();
  ecmd->add_option("--loss", ev.loss, "sq-abs-log or sq-rel")->check(CLI::IsMember({"sq-abs-log", "sq-rel"}))->capture_default_str();
  ecmd->add_option("--dataset-name", ev.dataset_name, "Label for the dataset column");
  ecmd->add_option("--context", ev.context, "model/hardware/modality filter");
  ecmd->add_option("-o,--output", ev.output, "Leaderboard CSV path")->capture_default_str();

  SelectFlags sel;
  auto* scmd = app.add_subcommand("select", "Rank configurations under fitted parameters");
  scmd->add_option("params", sel.params, "Params JSON")->required();
  scmd->add_option("--input-tokens", sel.input_tokens, "Total input tokens")->check(CLI::PositiveNumber)->capture_default_str();
  scmd->add_option("--tp", sel.tp, "TP degrees")->delimiter(',')->capture_default_str();
  scmd->add_option("--pp", sel.pp, "PP degrees")->delimiter(',')->capture_default_str();
  scmd->add_option("--batch", sel.batch, "Batch sizes")->delimiter(',')->capture_default_str();
  scmd->add_option("--max-tokens", sel.max_tokens, "Output lengths")->delimiter(',')->capture_default_str();
  scmd->add_option("--constraint", sel.constraint, "GPU budget, e.g. gpus<=4");
  scmd->add_option("-o,--output", sel.output, "Ranking CSV path")->capture_default_str();

  WhatIfFlags wi;
  auto* wcmd = app.add_subcommand("whatif", "Sweep one axis under fitted parameters");
  wcmd->add_option("params", wi.params, "Params JSON")->required();
  wcmd->add_option("--axis", wi.axis, "tp, pp, batch or max_tokens")
      ->check(CLI::IsMember({"tp", "pp", "batch", "batch_size", "max_tokens"}))
      ->capture_default_str();
  wcmd->add_option("--values", wi.values, "Sweep values")->delimiter(',')->required()->check(CLI::PositiveNumber);
  wcmd->add_option("--tp", wi.tp, "Base TP")->check(CLI::PositiveNumber)->capture_default_str();
  wcmd->add_option("--pp", wi.pp, "Base PP")->check(CLI::PositiveNumber)->capture_default_str();
  wcmd->add_option("--batch", wi.batch, "Base batch size")->check(CLI::PositiveNumber)->capture_default_str();
  wcmd->add_option("--max-tokens", wi.max_tokens, "Base output length")->check(CLI::PositiveNumber)->capture_default_str();
  wcmd->add_option("--input-tokens", wi.input_tokens, "Total input tokens")->check(CLI::PositiveNumber)->capture_default_str();
  wcmd->add_option("-o,--output", wi.output, "Sweep CSV path")->capture_default_str();

  SymregFlags sr;
  auto* rcmd = app.add_subcommand("symreg", "Search for closed-form energy structure");
  rcmd->add_option("data", sr.data, "Profiling CSV")->required();
  rcmd->add_option("--pop", sr.pop, "Population size")->check(CLI::PositiveNumber)->capture_default_str();
  rcmd->add_option("--generations", sr.generations, "Generations")->check(CLI::NonNegativeNumber)->capture_default_str();
  rcmd->add_option("--parsimony", sr.parsimony, "Per-node penalty as a fraction of target variance")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  rcmd->add_option("--features", sr.features, "Feature subset, e.g. parallelism,ratio")->delimiter(',');
  rcmd->add_option("--n", sr.n, "Records sampled for the search (0 = all)")->capture_default_str();
  rcmd->add_option("--context", sr.context, "model/hardware/modality filter");
  rcmd->add_option("-o,--output", sr.output, "Front JSON path")->capture_default_str();

  BenchFlags bench;
  auto* bcmd = app.add_subcommand("bench", "Desk-scale reproduction: every method at each training size");
  bcmd->add_option("--seeds", bench.seeds, "Benchmark seeds")->delimiter(',')->capture_default_str();
  bcmd->add_option("--sizes", bench.sizes, "Training sizes")->delimiter(',')->capture_default_str();
  bcmd->add_option("--noise", bench.noise, "Lognormal noise sigma")->check(CLI::NonNegativeNumber)->capture_default_str();
  bcmd->add_option("--methods", bench.methods, "Methods")
      ->delimiter(',')
      ->check(CLI::IsMember(method_names()))
      ->capture_default_str();

  std::vector<const char*> cargv;
  for (const auto& a : args) cargv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  ctx.out_dir = out_dir;
  ctx.subcommand = app.get_subcommands().front()->get_name();
  ctx.resolved = app.config_to_str(true, false);
  try {
    if (*g) return cmd_generate(ctx, gen);
    if (*fcmd) return cmd_fit(ctx, fitf);
    if (*ecmd) return cmd_evaluate(ctx, ev);
    if (*scmd) return cmd_select(ctx, sel);
    if (*wcmd) return cmd_whatif(ctx, wi);
    if (*rcmd) return cmd_symreg(ctx, sr);
    if (*bcmd) return cmd_bench(ctx, bench);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace energylens::cli
