#include "anyshot/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "anyshot/config.hpp"
#include "anyshot/errors.hpp"
#include "anyshot/eval.hpp"
#include "anyshot/trainer.hpp"

namespace anyshot {

namespace {

namespace fs = std::filesystem;

void write_file(const std::string& path, const std::string& content) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << content;
}

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string data_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::vector<std::string> overrides;
};

ExperimentConfig resolve_config(const CommonArgs& args) {
  KeyValueConfig kv;
  if (!args.config_path.empty()) kv = KeyValueConfig::load(args.config_path);
  kv.apply_env_overrides();
  for (const auto& ov : args.overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got: " + ov);
    kv.set(ov.substr(0, eq), ov.substr(eq + 1));
  }
  if (args.seed_set) kv.set("seed", std::to_string(args.seed));
  if (!args.out_dir.empty()) kv.set("out", args.out_dir);
  return ExperimentConfig::from_kv(kv);
}

std::string data_dir_of(const CommonArgs& args, const ExperimentConfig& cfg) {
  return args.data_dir.empty() ? cfg.out_dir : args.data_dir;
}

SemanticMatrix build_semantics(const ExperimentConfig& cfg) {
  const auto classes = load_class_list(cfg.class_list_path);
  return load_word_vectors(cfg.word_vectors_path, classes, cfg.world.semantic_dim);
}

SyntheticWorld build_world(const ExperimentConfig& cfg) {
  if (!cfg.class_list_path.empty()) {
    if (cfg.word_vectors_path.empty())
      throw ConfigError("class_list requires word_vectors");
    return generate_world(build_semantics(cfg), cfg.world.feature_dim,
                          cfg.world.noise_sigma, cfg.world.grid, cfg.world.seed);
  }
  return generate_world(cfg.world);
}

AlignmentModel build_model(const ExperimentConfig& cfg, const SyntheticWorld& world) {
  if (!cfg.vocab_path.empty()) {
    Vocabulary vocab = load_vocabulary(cfg.vocab_path, world.semantics.dim());
    AlignmentModel model =
        init_model(world.feature_dim(), world.semantics.dim(), vocab.size(),
                   cfg.semantics_mode, cfg.train.seed ^ 0x6d6f64656cULL);
    model.vocab = std::move(vocab);
    return model;
  }
  return init_model(world.feature_dim(), world.semantics.dim(), cfg.vocab_size,
                    cfg.semantics_mode, cfg.train.seed ^ 0x6d6f64656cULL);
}

int cmd_synth(const CommonArgs& args, std::ostream& out) {
  const ExperimentConfig cfg = resolve_config(args);
  const SyntheticWorld world = build_world(cfg);
  const DatasetBundle bundle = assemble_bundle(world, cfg.splits, cfg.shots);
  save_bundle(world, bundle, cfg.out_dir);
  write_file(cfg.out_dir + "/config.txt", cfg.to_flat_text());
  const std::size_t S = world.semantics.seen_count();
  const std::size_t F = world.semantics.few_shot_count();
  const std::size_t U = world.semantics.unseen_count();
  std::string setting = "ASD";
  if (F == 0 && U > 0) setting = "ZSD";
  else if (F > 0 && U == 0) setting = "FSD";
  else if (F == 0 && U == 0) setting = "traditional";
  out << "world: S=" << S << " F=" << F << " U=" << U << " (" << setting
      << "), shots k=" << bundle.shots << "\n";
  out << "scenes: train=" << bundle.d_tr.size() << " finetune=" << bundle.d_ft.size()
      << " test=" << bundle.d_ts.size() << "\n";
  out << "wrote " << cfg.out_dir << "\n";
  return 0;
}

int cmd_train_base(const CommonArgs& args, std::ostream& out) {
  const ExperimentConfig cfg = resolve_config(args);
  const std::string data = data_dir_of(args, cfg);
  const SyntheticWorld world = load_world(data);
  const DatasetBundle bundle = load_bundle(data);
  AlignmentModel model = build_model(cfg, world);
  const TrainReport report = train_base(bundle.d_tr, model, world.semantics, cfg.train);
  save_checkpoint(model, cfg.out_dir + "/base_checkpoint.json");
  write_file(cfg.out_dir + "/base_report.json", report.to_json());
  out << "base training: " << report.epoch_mean_loss.size() << " epochs, final loss "
      << report.epoch_mean_loss.back() << "\n";
  out << "wrote " << cfg.out_dir << "/base_checkpoint.json\n";
  return 0;
}

int cmd_fine_tune(const CommonArgs& args, std::ostream& out) {
  const ExperimentConfig cfg = resolve_config(args);
  const std::string data = data_dir_of(args, cfg);
  const SyntheticWorld world = load_world(data);
  const DatasetBundle bundle = load_bundle(data);
  const std::string base_path = cfg.out_dir + "/base_checkpoint.json";
  if (!fs::exists(base_path))
    throw ConfigError("no base checkpoint at " + base_path + "; run train-base first");
  AlignmentModel model = load_checkpoint(base_path);
  TrainReport report;
  if (world.semantics.few_shot_count() > 0) {
    report = fine_tune(model, bundle.d_ft, world.semantics, cfg.train);
    out << "fine-tune on " << bundle.d_ft.size() << " scenes\n";
  } else {
    report = zsd_self_tune(model, bundle.d_tr, world.semantics, cfg.train);
    out << "self-tune pass over the base split (no few-shot classes)\n";
  }
  save_checkpoint(model, cfg.out_dir + "/finetune_checkpoint.json");
  write_file(cfg.out_dir + "/finetune_report.json", report.to_json());
  out << "wrote " << cfg.out_dir << "/finetune_checkpoint.json\n";
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& mode_name,
             const std::string& checkpoint, std::ostream& out) {
  const ExperimentConfig cfg = resolve_config(args);
  const std::string data = data_dir_of(args, cfg);
  const SyntheticWorld world = load_world(data);
  const DatasetBundle bundle = load_bundle(data);
  std::string ckpt = checkpoint;
  if (ckpt.empty()) {
    ckpt = cfg.out_dir + "/finetune_checkpoint.json";
    if (!fs::exists(ckpt)) ckpt = cfg.out_dir + "/base_checkpoint.json";
  }
  const AlignmentModel model = load_checkpoint(ckpt);
  const EvalMode mode = eval_mode_from_string(mode_name);
  const EvalReport report =
      evaluate(model, bundle.d_ts, world.semantics, mode, cfg.thresholds);
  const std::string tag = to_string(mode);
  write_file(cfg.out_dir + "/eval_" + tag + ".json", report.to_json());
  write_file(cfg.out_dir + "/eval_" + tag + ".csv",
             EvalReport::csv_header() + report.to_csv_row());
  write_file(cfg.out_dir + "/detections_" + tag + ".csv",
             detections_csv(detection_dump(model, bundle.d_ts, world.semantics, mode,
                                           cfg.thresholds)));
  out << EvalReport::csv_header() << report.to_csv_row();
  out << "wrote " << cfg.out_dir << "/eval_" << tag << ".{json,csv}\n";
  return 0;
}

struct GradCheckRow {
  double p, p_star, beta, gamma, alpha;
  int y;
  double analytic, numeric, rel_err;
  bool ok;
};

std::vector<GradCheckRow> run_gradient_grid(double tol, double h, double corruption) {
  const std::vector<double> p_values = {0.05, 0.15, 0.25, 0.35, 0.45,
                                        0.55, 0.65, 0.75, 0.85, 0.95};
  const std::vector<double> p_stars = {0.3, 0.5, 0.8, 1.0};
  const std::vector<double> betas = {0.0, 0.5, 1.0, 2.0, 5.0};
  const std::vector<double> gammas = {0.0, 2.0};
  const std::vector<double> alphas = {0.25, 1.0};
  std::vector<GradCheckRow> rows;
  for (double p : p_values)
    for (double p_star : p_stars)
      for (double beta : betas)
        for (double gamma : gammas)
          for (double alpha : alphas)
            for (int y : {0, 1}) {
              LossConfig cfg;
              cfg.alpha = alpha;
              cfg.beta = beta;
              cfg.gamma = gamma;
              cfg.p_star_mode = PStarMode::kFixed;
              cfg.p_star_value = p_star;
              // Skip the clamp-boundary neighborhood where the max() kink
              // makes the numeric derivative meaningless.
              if (y == 1) {
                const double pt = rebalanced_pt(p, p_star, beta, 1);
                if (std::abs(pt - 1.0) < 1e-3) continue;
              }
              const double analytic =
                  loss_gradient(p, p_star, cfg, y) + corruption;
              const double numeric = finite_diff_gradient(p, p_star, cfg, y, h);
              const double rel =
                  std::abs(analytic - numeric) / (std::abs(analytic) + 1e-8);
              rows.push_back({p, p_star, beta, gamma, alpha, y, analytic, numeric,
                              rel, rel < tol});
            }
  return rows;
}

int cmd_grad_check(const CommonArgs& args, bool corrupt, std::ostream& out) {
  const ExperimentConfig cfg = resolve_config(args);
  const auto rows = run_gradient_grid(1e-4, 1e-6, corrupt ? 1e-2 : 0.0);
  std::size_t failed = 0;
  std::ostringstream csv;
  csv << "p,p_star,beta,gamma,alpha,y,analytic,numeric,rel_err,status\n";
  char buf[256];
  for (const auto& r : rows) {
    if (!r.ok) ++failed;
    std::snprintf(buf, sizeof(buf), "%.2f,%.2f,%.2f,%.2f,%.2f,%d,%.10g,%.10g,%.3e,%s\n",
                  r.p, r.p_star, r.beta, r.gamma, r.alpha, r.y, r.analytic, r.numeric,
                  r.rel_err, r.ok ? "pass" : "FAIL");
    csv << buf;
  }
  write_file(cfg.out_dir + "/gradcheck.csv", csv.str());
  out << "gradient check: " << rows.size() - failed << "/" << rows.size()
      << " points within 1e-4\n";
  out << "wrote " << cfg.out_dir << "/gradcheck.csv\n";
  if (failed > 0) {
    out << "FAIL: " << failed << " points out of tolerance\n";
    return 1;
  }
  out << "PASS\n";
  return 0;
}

int cmd_loss_curve(const CommonArgs& args, std::ostream& out) {
  const ExperimentConfig cfg = resolve_config(args);
  const std::size_t samples = 1001;

  // Shape-analysis curves against plain cross-entropy: gamma=0, alpha=1.
  LossConfig shape = cfg.train.loss;
  shape.gamma = 0.0;
  shape.alpha = 1.0;
  shape.p_star_mode = PStarMode::kFixed;
  for (double beta : {0.0, 1.0, 2.0, 5.0}) {
    shape.beta = beta;
    char name[64];
    std::snprintf(name, sizeof(name), "/loss_curve_beta%g_pstar1.0.csv", beta);
    write_file(cfg.out_dir + name, loss_curve_csv(loss_curve(shape, 1.0, samples)));
  }
  shape.beta = cfg.train.loss.beta;
  write_file(cfg.out_dir + "/loss_curve_pstar0.5.csv",
             loss_curve_csv(loss_curve(shape, 0.5, samples)));

  // Dynamic p*: the anchor's best competitor is pinned at 0.5, so
  // p* = max(p, 0.5) pointwise.
  std::vector<LossCurvePoint> dynamic_curve;
  const double lo = shape.epsilon, hi = 1.0 - shape.epsilon;
  for (std::size_t i = 0; i < samples; ++i) {
    const double p =
        lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(samples - 1);
    const double p_star = std::max(p, 0.5);
    dynamic_curve.push_back({p, rebalanced_loss(p, 1, p_star, shape),
                             loss_gradient(p, p_star, shape, 1)});
  }
  write_file(cfg.out_dir + "/loss_curve_dynamic.csv", loss_curve_csv(dynamic_curve));
  out << "wrote 6 loss curve files to " << cfg.out_dir << "\n";
  return 0;
}

struct PipelineResult {
  EvalReport report;
  AlignmentModel model;
};

// Full pipeline for one seed used by sweep cells: base model reused across
// (beta, lambda) cells of the same seed.
double novel_map(const EvalReport& report, const SemanticMatrix& semantics) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c : semantics.novel_ids()) {
    auto it = report.per_class_ap.find(semantics.class_names()[c]);
    if (it != report.per_class_ap.end()) {
      sum += it->second;
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

int cmd_sweep(const CommonArgs& args, std::ostream& out) {
  const ExperimentConfig base_cfg = resolve_config(args);
  if (base_cfg.sweep_betas.empty() || base_cfg.sweep_lambdas.empty())
    throw ConfigError("sweep needs non-empty beta and lambda grids");

  // cell -> per-seed novel mAP
  std::vector<std::vector<std::vector<double>>> cells(
      base_cfg.sweep_betas.size(),
      std::vector<std::vector<double>>(base_cfg.sweep_lambdas.size()));

  for (std::uint64_t seed : base_cfg.seeds) {
    ExperimentConfig cfg = base_cfg;
    cfg.world.seed = seed;
    cfg.train.seed = seed;
    const SyntheticWorld world = build_world(cfg);
    const DatasetBundle bundle = assemble_bundle(world, cfg.splits, cfg.shots);
    const std::size_t F = world.semantics.few_shot_count();
    const std::size_t U = world.semantics.unseen_count();
    if (F == 0 && U == 0) throw ConfigError("sweep needs novel classes");
    const EvalMode mode = F > 0 && U > 0 ? EvalMode::kGasd
                          : F > 0        ? EvalMode::kGfsd
                                         : EvalMode::kGzsd;
    AlignmentModel base_model = build_model(cfg, world);
    train_base(bundle.d_tr, base_model, world.semantics, cfg.train);
    for (std::size_t bi = 0; bi < cfg.sweep_betas.size(); ++bi) {
      for (std::size_t li = 0; li < cfg.sweep_lambdas.size(); ++li) {
        TrainConfig tc = cfg.train;
        tc.loss.beta = cfg.sweep_betas[bi];
        tc.loss.lambda_mix = cfg.sweep_lambdas[li];
        AlignmentModel model = base_model;
        if (F > 0)
          fine_tune(model, bundle.d_ft, world.semantics, tc);
        else
          zsd_self_tune(model, bundle.d_tr, world.semantics, tc);
        const EvalReport report =
            evaluate(model, bundle.d_ts, world.semantics, mode, cfg.thresholds);
        cells[bi][li].push_back(novel_map(report, world.semantics));
      }
    }
  }

  // Median novel mAP per cell, laid out beta rows x lambda columns.
  std::ostringstream csv;
  csv << "beta\\lambda";
  for (double l : base_cfg.sweep_lambdas) csv << "," << l;
  csv << "\n";
  char buf[32];
  for (std::size_t bi = 0; bi < base_cfg.sweep_betas.size(); ++bi) {
    csv << base_cfg.sweep_betas[bi];
    for (std::size_t li = 0; li < base_cfg.sweep_lambdas.size(); ++li) {
      std::vector<double> vals = cells[bi][li];
      std::sort(vals.begin(), vals.end());
      const double median = vals[vals.size() / 2];
      std::snprintf(buf, sizeof(buf), ",%.2f", 100.0 * median);
      csv << buf;
    }
    csv << "\n";
  }
  write_file(base_cfg.out_dir + "/sweep.csv", csv.str());
  out << csv.str();
  out << "wrote " << base_cfg.out_dir << "/sweep.csv\n";
  return 0;
}

}  // namespace

int cli_run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"any-shot detection experiments"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string eval_mode = "GASD";
  std::string checkpoint;
  bool corrupt = false;

  auto add_common = [&common](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "flat key=value config file");
    sub->add_option("--out", common.out_dir, "output directory");
    sub->add_option("--data", common.data_dir, "bundle directory (defaults to --out)");
    sub->add_option("--seed", common.seed, "seed override")
        ->each([&common](const std::string&) { common.seed_set = true; });
    sub->add_option("--set", common.overrides, "override a config key (key=value)");
  };

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset bundle");
  add_common(synth);
  CLI::App* train = app.add_subcommand("train-base", "stage-1 base training");
  add_common(train);
  CLI::App* ft = app.add_subcommand("fine-tune", "stage-2 fine-tuning or self-tuning");
  add_common(ft);
  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(ev);
  ev->add_option("--mode", eval_mode, "ZSD|FSD|ASD|GZSD|GFSD|GASD");
  ev->add_option("--checkpoint", checkpoint, "checkpoint path override");
  CLI::App* gc = app.add_subcommand("grad-check", "analytic vs numeric loss gradients");
  add_common(gc);
  gc->add_flag("--corrupt", corrupt, "negative control: offset the analytic gradient")
      ->group("");  // hidden
  CLI::App* lc = app.add_subcommand("loss-curve", "emit loss/gradient curve CSVs");
  add_common(lc);
  CLI::App* sweep = app.add_subcommand("sweep", "beta x lambda validation grid");
  add_common(sweep);

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(common, out);
    if (train->parsed()) return cmd_train_base(common, out);
    if (ft->parsed()) return cmd_fine_tune(common, out);
    if (ev->parsed()) return cmd_eval(common, eval_mode, checkpoint, out);
    if (gc->parsed()) return cmd_grad_check(common, corrupt, out);
    if (lc->parsed()) return cmd_loss_curve(common, out);
    if (sweep->parsed()) return cmd_sweep(common, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  err << "error: no command\n";
  return 1;
}

}  // namespace anyshot
