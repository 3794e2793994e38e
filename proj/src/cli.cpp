#include "guidelearn/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "guidelearn/checkpoint.hpp"
#include "guidelearn/config.hpp"
#include "guidelearn/errors.hpp"

namespace guidelearn {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  CsvTable table;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!have_header) {
      table.header = std::move(cells);
      have_header = true;
    } else {
      table.rows.push_back(std::move(cells));
    }
  }
  if (!have_header) throw ConfigError(path + ": missing CSV header");
  return table;
}

namespace {

struct Options {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  std::string denoiser_path;
  std::string guidance_path;
  std::string generated_path;
  std::string reference_path;
  int trajectory_chain = -1;
};

class Context {
 public:
  explicit Context(const Options& opts) : opts_(opts) {
    if (!opts.config_path.empty()) config_ = load_config(opts.config_path);
    if (opts.seed) {
      config_.seed = *opts.seed;
      config_.propagate();
    }
    if (const char* env = std::getenv("GUIDELEARN_OUT"); env && *env) config_.io.out = env;
    if (!opts.out.empty()) config_.io.out = opts.out;
    config_.validate();
    digest_ = config_digest(config_);
    fs::create_directories(out_dir());
  }

  const ExperimentConfig& config() const { return config_; }
  fs::path out_dir() const { return config_.io.out; }
  fs::path out(const std::string& name) const { return out_dir() / name; }

  std::string csv_preamble() const {
    return "# config_digest=" + digest_ + " seed=" + std::to_string(config_.seed) + "\n";
  }

  json stamped(json doc) const {
    doc["config_digest"] = digest_;
    doc["seed"] = config_.seed;
    return doc;
  }

  void write_json(const std::string& name, const json& doc) const {
    write_text_file(out(name), stamped(doc).dump(2) + "\n");
    log("wrote " + out(name).string());
  }

  void write_csv(const std::string& name, const std::string& body) const {
    write_text_file(out(name), csv_preamble() + body);
    log("wrote " + out(name).string());
  }

  void log(const std::string& message) const {
    if (!opts_.quiet) std::cerr << message << "\n";
  }

  DenoiserArtifact load_denoiser() const {
    const fs::path path = opts_.denoiser_path.empty() ? out("denoiser.json") : fs::path(opts_.denoiser_path);
    if (!fs::exists(path)) throw ConfigError("missing denoiser checkpoint " + path.string() + " (run pretrain-denoiser)");
    return denoiser_from_json(read_json_file(path));
  }

  GuidanceWeightFn load_learned() const {
    fs::path path = opts_.guidance_path;
    if (path.empty()) {
      path = out(config_.sample.weight.checkpoint == "best" ? "guidance_best.json" : "guidance.json");
    }
    if (!fs::exists(path)) throw ConfigError("missing guidance checkpoint " + path.string() + " (run train-guidance)");
    return weight_fn_from_json(read_json_file(path));
  }

  GuidanceWeightFn configured_weight() const {
    const auto& w = config_.sample.weight;
    if (!opts_.guidance_path.empty() || w.kind == "learned") return load_learned();
    if (w.kind == "limited_interval") return LimitedIntervalWeight{w.omega, w.t_lo, w.t_hi};
    return ConstantWeight{w.omega};
  }

  EvalSettings eval_settings() const {
    EvalSettings s;
    s.params = config_.eval.params;
    s.samples = config_.eval.samples;
    s.resamples = config_.eval.resamples;
    s.seed = derive_seed(config_.seed, "eval");
    return s;
  }

  std::vector<GeneratedSample> reference() const {
    return draw_reference(config_.mog, config_.eval.samples, derive_seed(config_.seed, "eval"));
  }

  const Options& options() const { return opts_; }

 private:
  const Options& opts_;
  ExperimentConfig config_;
  std::string digest_;
};

std::string samples_csv(std::span<const GeneratedSample> samples) {
  std::string body = "c,x,y\n";
  for (const auto& s : samples) {
    body += std::to_string(s.c) + "," + format_double(s.x.x()) + "," + format_double(s.x.y()) + "\n";
  }
  return body;
}

std::vector<GeneratedSample> read_samples(const std::string& path) {
  const CsvTable table = read_csv(path);
  if (table.header != std::vector<std::string>{"c", "x", "y"}) throw ConfigError(path + ": expected columns c,x,y");
  std::vector<GeneratedSample> out;
  for (const auto& row : table.rows) {
    if (row.size() != 3) throw ConfigError(path + ": malformed row");
    try {
      out.push_back({Vec2(std::stod(row[1]), std::stod(row[2])), std::stoi(row[0])});
    } catch (const std::exception&) {
      throw ConfigError(path + ": malformed number");
    }
  }
  return out;
}

std::string eval_rows_csv(std::span<const EvalRow> rows, int classes, bool with_reward) {
  std::string body = "label,omega,mmd,se,samples";
  for (int c = 0; c < classes; ++c) body += ",mmd_class" + std::to_string(c);
  if (with_reward) body += ",mean_reward";
  body += "\n";
  for (const auto& r : rows) {
    body += r.label + "," + (r.omega ? format_double(*r.omega) : "") + "," + format_double(r.mmd) + "," +
            format_double(r.standard_error) + "," + std::to_string(r.samples);
    for (double m : r.per_class_mmd) body += "," + format_double(m);
    if (with_reward) body += "," + format_double(r.mean_reward);
    body += "\n";
  }
  return body;
}

json eval_rows_json(std::span<const EvalRow> rows, const MmdParams& params) {
  json arr = json::array();
  for (const auto& r : rows) {
    json row = {{"label", r.label},
                {"mmd", r.mmd},
                {"standard_error", r.standard_error},
                {"samples", r.samples},
                {"per_class_mmd", r.per_class_mmd},
                {"mean_reward", r.mean_reward}};
    row["omega"] = r.omega ? json(*r.omega) : json(nullptr);
    arr.push_back(row);
  }
  return {{"beta", params.beta}, {"lambda", params.lambda}, {"rows", arr}};
}

std::string weights_csv(std::span<const WeightGridPoint> grid) {
  std::string body = "class,t,omega\n";
  for (const auto& p : grid) body += std::to_string(p.c) + "," + format_double(p.t) + "," + format_double(p.omega) + "\n";
  return body;
}

std::vector<WeightGridPoint> export_grid(const Context& ctx, const GuidanceWeightFn& fn) {
  const auto& e = ctx.config().eval;
  return weight_grid(fn, ctx.config().mog.num_classes(), e.weights_dt, e.weights_points);
}

int cmd_pretrain(const Context& ctx) {
  const auto& cfg = ctx.config();
  DenoiserArtifact artifact;
  artifact.source = cfg.denoiser.kind;
  artifact.spec = cfg.mog;
  artifact.corruption = cfg.denoiser.corruption;
  if (cfg.denoiser.kind == DenoiserSource::Neural) {
    ctx.log("training neural denoiser for " + std::to_string(cfg.denoiser.neural.iterations) + " iterations");
    auto result = train_neural_denoiser(cfg.denoiser.neural, cfg.mog);
    std::string body = "iter,loss\n";
    for (std::size_t i = 0; i < result.loss_history.size(); ++i) {
      body += std::to_string(i) + "," + format_double(result.loss_history[i]) + "\n";
    }
    ctx.write_csv("denoiser_loss.csv", body);
    artifact.model = std::move(result.model);
  }
  ctx.write_json("denoiser.json", to_json(artifact));
  return kExitOk;
}

std::string record_csv(std::span<const TrainRow> record) {
  std::string body = "iter,loss,reward,grad_norm,mean_abs_omega\n";
  for (const auto& r : record) {
    body += std::to_string(r.iter) + "," + format_double(r.loss) + "," + (r.reward ? format_double(*r.reward) : "") +
            "," + format_double(r.grad_norm) + "," + format_double(r.mean_abs_omega) + "\n";
  }
  return body;
}

int cmd_train(const Context& ctx) {
  const auto& cfg = ctx.config();
  const DenoiserArtifact artifact = ctx.load_denoiser();
  const DenoiserPair denoisers = artifact.pair();
  Rng init_rng(derive_seed(cfg.seed, "guidance.init"));
  GuidanceNet net(cfg.guidance.net, init_rng);
  const auto reward = make_reward(cfg.train.reward, cfg.mog);
  const TrainConfig& tc = cfg.train.config;
  ctx.log(std::string("training guidance (") + train_mode_name(tc.mode) + ") for " + std::to_string(tc.iterations) +
          " iterations");
  try {
    const TrainResult result = train_guidance(tc, cfg.mog, denoisers, net, reward.get());
    ctx.write_csv("train_record.csv", record_csv(result.record));
    std::string ckpt_body = "iter,probe_mmd,probe_se,mean_abs_omega\n";
    for (const auto& ck : result.checkpoints) {
      GuidanceNet snapshot = result.final_net;
      snapshot.set_flat_parameters(ck.parameters);
      char name[64];
      std::snprintf(name, sizeof name, "checkpoints/guidance_iter_%06d.json", ck.iter);
      ctx.write_json(name, to_json(GuidanceWeightFn{snapshot}));
      ckpt_body += std::to_string(ck.iter) + "," + (ck.probe_mmd ? format_double(*ck.probe_mmd) : "") + "," +
                   (ck.probe_se ? format_double(*ck.probe_se) : "") + "," + format_double(ck.mean_abs_omega) + "\n";
    }
    ctx.write_csv("checkpoints.csv", ckpt_body);
    ctx.write_json("guidance.json", to_json(GuidanceWeightFn{result.final_net}));
    json best = to_json(GuidanceWeightFn{result.best_net});
    best["selected_iter"] = result.best_iter;
    ctx.write_json("guidance_best.json", best);
  } catch (const TrainingAborted& e) {
    ctx.write_csv("train_record.csv", record_csv(e.record));
    GuidanceNet last = net;
    last.set_flat_parameters(e.last_good_parameters);
    json doc = to_json(GuidanceWeightFn{last});
    doc["aborted_at"] = e.iter;
    ctx.write_json("guidance_last_good.json", doc);
    throw;
  }
  return kExitOk;
}

int cmd_sample(const Context& ctx) {
  const auto& cfg = ctx.config();
  const DenoiserPair denoisers = ctx.load_denoiser().pair();
  const GuidanceWeightFn fn = ctx.configured_weight();
  const std::uint64_t seed = derive_seed(cfg.seed, "sample");
  const auto samples = sample(cfg.sample.config, denoisers, fn, cfg.sample.count, seed);
  ctx.write_csv("samples.csv", samples_csv(samples));
  const int chain = ctx.options().trajectory_chain;
  if (chain >= 0) {
    const Trajectory traj = sample_trajectory(cfg.sample.config, denoisers, fn, seed, chain);
    std::string body = "k,t_k,x,y,omega\n";
    const std::size_t n = traj.states.size();
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = n - 1 - i;
      body += std::to_string(k) + "," + format_double(traj.times[i]) + "," + format_double(traj.states[i].x()) + "," +
              format_double(traj.states[i].y()) + "," + (i < traj.omegas.size() ? format_double(traj.omegas[i]) : "") +
              "\n";
    }
    ctx.write_csv("trajectory.csv", body);
  }
  return kExitOk;
}

int cmd_eval(const Context& ctx) {
  const auto& cfg = ctx.config();
  const auto& opts = ctx.options();
  const std::string gen_path = opts.generated_path.empty() ? ctx.out("samples.csv").string() : opts.generated_path;
  if (!fs::exists(gen_path)) throw ConfigError("missing generated samples " + gen_path + " (run sample)");
  const auto generated = read_samples(gen_path);
  std::vector<GeneratedSample> reference;
  if (opts.reference_path.empty()) {
    reference = ctx.reference();
    ctx.write_csv("reference.csv", samples_csv(reference));
  } else {
    reference = read_samples(opts.reference_path);
  }
  if (generated.size() < 2 || reference.size() < 2) throw ConfigError("eval-mmd: need at least two samples per set");
  const auto settings = ctx.eval_settings();
  const auto est =
      eval_mmd_with_se(points_of(generated), points_of(reference), settings.params, settings.resamples, settings.seed);
  EvalRow row;
  row.label = "generated";
  row.mmd = est.value;
  row.standard_error = est.standard_error;
  row.samples = static_cast<int>(generated.size());
  const int classes = cfg.mog.num_classes();
  for (int c = 0; c < classes; ++c) {
    std::vector<Vec2> g, r;
    for (const auto& s : generated) {
      if (s.c == c) g.push_back(s.x);
    }
    for (const auto& s : reference) {
      if (s.c == c) r.push_back(s.x);
    }
    row.per_class_mmd.push_back(g.size() >= 2 && r.size() >= 2 ? eval_mmd(g, r, settings.params) : std::nan(""));
  }
  const std::vector<EvalRow> rows{row};
  ctx.write_csv("eval.csv", eval_rows_csv(rows, classes, false));
  ctx.write_json("eval.json", eval_rows_json(rows, settings.params));
  return kExitOk;
}

int cmd_sweep(const Context& ctx) {
  const auto& cfg = ctx.config();
  const DenoiserPair denoisers = ctx.load_denoiser().pair();
  const auto reference = ctx.reference();
  const auto reward = make_reward(cfg.train.reward, cfg.mog);
  const auto rows = sweep_constant_guidance(cfg.eval.omega_grid, cfg.sample.config, denoisers, reference,
                                            ctx.eval_settings(), reward.get());
  ctx.write_csv("sweep.csv", eval_rows_csv(rows, cfg.mog.num_classes(), true));
  ctx.write_json("sweep.json", eval_rows_json(rows, cfg.eval.params));
  return kExitOk;
}

int cmd_figure(const Context& ctx) {
  const auto& cfg = ctx.config();
  const DenoiserPair denoisers = ctx.load_denoiser().pair();
  const GuidanceWeightFn learned = ctx.load_learned();
  const auto reference = ctx.reference();
  const auto reward = make_reward(cfg.train.reward, cfg.mog);
  const FigureReport report = run_figure_protocol(cfg.eval.omega_grid, cfg.sample.config, denoisers, &learned,
                                                  reference, ctx.eval_settings(), reward.get());
  ctx.write_csv("figure.csv", eval_rows_csv(report.rows, cfg.mog.num_classes(), true));
  ctx.write_json("figure.json", eval_rows_json(report.rows, cfg.eval.params));
  ctx.write_csv("figure_weights.csv", weights_csv(export_grid(ctx, learned)));
  return kExitOk;
}

int cmd_export(const Context& ctx) {
  const GuidanceWeightFn fn = ctx.configured_weight();
  const auto grid = export_grid(ctx, fn);
  ctx.write_csv("weights.csv", weights_csv(grid));
  json doc = to_json(fn);
  json points = json::array();
  for (const auto& p : grid) points.push_back({{"class", p.c}, {"t", p.t}, {"omega", p.omega}});
  doc["grid"] = {{"dt", ctx.config().eval.weights_dt}, {"points", points}};
  ctx.write_json("weights.json", doc);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Learned classifier-free guidance weights on a 2D Gaussian mixture"};
  app.require_subcommand(1);
  Options opts;
  std::uint64_t seed_value = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", opts.config_path, "experiment config (JSON)")->check(CLI::ExistingFile);
    cmd->add_option("--out", opts.out, "output directory");
    cmd->add_option("--seed", seed_value, "override the root seed");
    cmd->add_flag("--quiet", opts.quiet, "suppress progress messages");
  };

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const Context&);
  };
  const Command commands[] = {
      {"pretrain-denoiser", "build or train the configured denoiser", cmd_pretrain},
      {"train-guidance", "learn guidance weights against a denoiser checkpoint", cmd_train},
      {"sample", "draw guided samples", cmd_sample},
      {"eval-mmd", "MMD between generated samples and reference data", cmd_eval},
      {"sweep", "evaluate constant guidance weights over the configured grid", cmd_sweep},
      {"figure", "constant sweep plus unguided and learned rows", cmd_figure},
      {"export-weights", "tabulate omega(t - dt, t, c)", cmd_export},
  };

  std::vector<std::pair<CLI::App*, int (*)(const Context&)>> handlers;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_common(sub);
    const std::string name = c.name;
    if (name == "train-guidance" || name == "sample" || name == "sweep" || name == "figure") {
      sub->add_option("--denoiser", opts.denoiser_path, "denoiser checkpoint (default OUT/denoiser.json)");
    }
    if (name == "sample" || name == "figure" || name == "export-weights") {
      sub->add_option("--guidance", opts.guidance_path, "guidance checkpoint (implies learned weights)");
    }
    if (name == "sample") sub->add_option("--trajectory", opts.trajectory_chain, "also dump the path of this chain");
    if (name == "eval-mmd") {
      sub->add_option("--generated", opts.generated_path, "samples CSV (default OUT/samples.csv)");
      sub->add_option("--reference", opts.reference_path, "reference CSV (default: fresh data draws)");
    }
    handlers.emplace_back(sub, c.run);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    for (auto* sub : app.get_subcommands()) {
      for (const auto& [cmd, run] : handlers) {
        if (cmd != sub) continue;
        if (sub->count("--seed") > 0) opts.seed = seed_value;
        const Context ctx(opts);
        return run(ctx);
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::out_of_range& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace guidelearn
