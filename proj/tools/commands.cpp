#include "commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "checks.hpp"
#include "oskf/checkpoint.hpp"
#include "oskf/error.hpp"
#include "oskf/json_io.hpp"
#include "oskf/keypoints.hpp"
#include "oskf/metrics.hpp"
#include "oskf/ply.hpp"
#include "oskf/synth.hpp"
#include "oskf/train.hpp"

namespace fs = std::filesystem;

namespace oskf::cli {

namespace {

void require_file(const std::string& flag, const std::string& path) {
  if (!fs::is_regular_file(path)) throw InputError(flag + ": no such file: " + path);
}

void require_parent_dir(const std::string& flag, const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) {
    throw InputError(flag + ": directory does not exist: " + parent.string());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path);
  f << text;
}

std::string format_row(const char* label, const MetricRow& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-6s  %6zu  %9.4f  %9.4f  %9.4f  %9.4f  %10.4f", label, r.count,
                r.add_accuracy, r.auc_add_s, r.acc_2deg2cm, r.acc_5deg5cm,
                1000.0 * r.mean_distance);
  return buf;
}

std::string format_report(const MetricReport& report) {
  std::ostringstream os;
  os << "obj     count   add_0.1d   auc_10cm   2deg2cm    5deg5cm    mean_mm\n";
  for (const MetricRow& r : report.objects) {
    os << format_row(std::to_string(r.obj).c_str(), r) << '\n';
  }
  os << format_row("all", report.aggregate) << '\n';
  return os.str();
}

}  // namespace

int cmd_selfcheck(const SelfcheckArgs& args, std::ostream& out) {
  std::vector<checks::CheckResult> results;
  if (args.checkpoint) {
    // A missing file is a check failure, not a usage error: the table names it.
    results.push_back(checks::checkpoint_loads(*args.checkpoint));
  }
  for (auto& r : checks::run_all(args.seed)) results.push_back(std::move(r));
  // Timings go to stderr so stdout stays byte-stable.
  bool ok = true;
  for (const auto& r : results) {
    out << checks::format_row(r, false) << '\n';
    std::fprintf(stderr, "%-18s %7.2fs\n", r.name.c_str(), r.seconds);
    ok = ok && r.passed;
  }
  const auto failed = std::count_if(results.begin(), results.end(),
                                    [](const auto& r) { return !r.passed; });
  out << (ok ? "all checks passed" : std::to_string(failed) + " check(s) failed") << '\n';
  return ok ? kOk : kInternal;
}

int cmd_eval(const EvalArgs& args, std::ostream& out) {
  require_file("--pred", args.pred);
  require_file("--gt", args.gt);
  require_file("--models", args.models);
  if (args.report) require_parent_dir("--report", *args.report);

  const auto pred = read_records(args.pred);
  const auto gt = read_records(args.gt);
  const auto models = read_models_manifest(args.models);
  const MetricReport report = evaluate(pred, gt, models);
  out << format_report(report);
  if (args.report) write_text(*args.report, report_to_json(report) + "\n");
  return kOk;
}

int cmd_fps(const FpsArgs& args, std::ostream& out) {
  require_file("--ply", args.ply);
  require_parent_dir("--out", args.out);
  const std::vector<Vec3> points = read_ply_points(args.ply);
  const std::size_t seed = args.seed_index ? *args.seed_index : default_fps_seed(points);
  const KeypointSet kps = farthest_point_sample(points, args.k, seed);
  write_keypoints(args.out, kps);
  out << "wrote " << kps.k() << " keypoints to " << args.out << '\n';
  return kOk;
}

int cmd_demo(const DemoArgs& args, int threads, std::ostream& out) {
  require_parent_dir("--out", args.out);
  if (args.table) require_parent_dir("--table", *args.table);

  DemoConfig cfg;
  cfg.seed = args.seed;
  cfg.steps = args.steps;
  cfg.scenes = args.scenes;
  cfg.holdout = args.holdout;
  cfg.learning_rate = args.lr;
  cfg.batch_size = args.batch;
  cfg.momentum = args.momentum;
  cfg.clip_norm = args.clip;
  cfg.threads = threads;

  const DemoResult result = run_demo(cfg);
  write_checkpoint(fs::path(args.out), result.config, result.params);

  const std::string table = format_iteration_table(result.iterations);
  if (args.table) write_text(*args.table, table);
  char line[160];
  std::snprintf(line, sizeof line, "seed %llu  steps %d  scenes %d  holdout %d\n",
                static_cast<unsigned long long>(args.seed), args.steps, args.scenes,
                args.holdout);
  out << line;
  if (!result.trace.empty()) {
    std::snprintf(line, sizeof line, "train loss %.6f -> %.6f  (skipped %zu)\n",
                  result.trace.front(), result.trace.back(), result.skipped);
    out << line;
  }
  out << table;
  out << "checkpoint " << args.out << '\n';
  return kOk;
}

int cmd_scene(const SceneArgs& args, std::ostream& out) {
  require_parent_dir("--out", args.out);
  SynthConfig cfg;
  cfg.pyramid.crop_size = args.crop_size;
  cfg.pyramid.levels = args.levels;
  cfg.pyramid.channels = args.channels;
  const SynthScene scene = make_scene(synthetic_model(), cfg, args.seed);
  const auto [pyr, json] = write_scene(args.out, scene);
  out << "wrote " << pyr.string() << " and " << json.string() << '\n';
  return kOk;
}

std::vector<std::string> apply_config_file(std::vector<std::string> args) {
  std::optional<std::string> path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    }
  }
  if (!path) return args;
  require_file("--config", *path);

  std::ifstream f(*path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(*path, 0, e.what());
  }
  if (!doc.is_object()) throw ParseError(*path, 0, "config must be a flat JSON object");

  auto given = [&](const std::string& flag) {
    return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
  };
  for (const auto& [key, value] : doc.items()) {
    if (key == "config") throw InputError(*path + ": a config file cannot name another config");
    const std::string flag = "--" + key;
    if (given(flag)) continue;  // flags win over the file
    if (value.is_structured() || value.is_null()) {
      throw InputError(*path + ": value of \"" + key + "\" must be a scalar");
    }
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
    } else if (value.is_string()) {
      args.push_back(flag);
      args.push_back(value.get<std::string>());
    } else {
      args.push_back(flag);
      args.push_back(value.dump());
    }
  }
  return args;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"cascaded keypoint-feature pose refinement engine", "oskf"};
  app.require_subcommand(1);

  int threads_flag = 0;
  std::string config_path;
  app.add_option("--threads", threads_flag,
                 "worker threads for library calls (0 = available cores; OSKF_THREADS overrides)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--config", config_path, "flat JSON file of flag-name keys; flags win");

  SelfcheckArgs sc;
  auto* selfcheck = app.add_subcommand("selfcheck", "run the invariant and oracle suites");
  selfcheck->add_option("--checkpoint", sc.checkpoint, "also validate this checkpoint");
  selfcheck->add_option("--seed", sc.seed, "seed of the random instances")->capture_default_str();

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "score predictions against ground truth");
  eval->add_option("--pred", ev.pred, "predictions (JSON lines)")->required();
  eval->add_option("--gt", ev.gt, "ground truth (JSON lines)")->required();
  eval->add_option("--models", ev.models, "models manifest (JSON)")->required();
  eval->add_option("--report", ev.report, "also write the report as JSON");

  FpsArgs fp;
  auto* fps = app.add_subcommand("fps", "farthest point sampling of a PLY model");
  fps->add_option("--ply", fp.ply, "ASCII PLY with vertex x/y/z")->required();
  fps->add_option("--k", fp.k, "number of keypoints")->required();
  fps->add_option("--out", fp.out, "keypoint JSON output")->required();
  fps->add_option("--seed-index", fp.seed_index,
                  "first point (default: farthest from the centroid)");

  DemoArgs dm;
  auto* demo = app.add_subcommand("demo", "train the toy cascade on synthetic scenes");
  demo->add_option("--seed", dm.seed)->capture_default_str();
  demo->add_option("--steps", dm.steps)->capture_default_str();
  demo->add_option("--scenes", dm.scenes, "training scenes")->capture_default_str();
  demo->add_option("--holdout", dm.holdout, "held-out scenes")->capture_default_str();
  demo->add_option("--lr", dm.lr, "learning rate")->capture_default_str();
  demo->add_option("--batch", dm.batch, "scenes per step (0 = all)")->capture_default_str();
  demo->add_option("--momentum", dm.momentum)->capture_default_str();
  demo->add_option("--clip", dm.clip, "gradient norm clip (0 = off)")->capture_default_str();
  demo->add_option("--out", dm.out, "checkpoint path")->capture_default_str();
  demo->add_option("--table", dm.table, "also write the iteration table here");

  SceneArgs sn;
  auto* scene = app.add_subcommand("scene", "dump one synthetic scene");
  scene->add_option("--seed", sn.seed)->capture_default_str();
  scene->add_option("--out", sn.out, "output stem (writes .pyr and .json)")->required();
  scene->add_option("--crop-size", sn.crop_size)->capture_default_str();
  scene->add_option("--levels", sn.levels)->capture_default_str();
  scene->add_option("--channels", sn.channels)->capture_default_str();

  // Global options may follow the subcommand.
  for (auto* sub : {selfcheck, eval, fps, demo, scene}) sub->fallthrough();

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = apply_config_file(std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands()[0]->help("oskf"));
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::Success&) {
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "oskf: " << e.what() << '\n';
    return kBadInput;
  } catch (const InputError& e) {
    err << "oskf: " << e.what() << '\n';
    return kBadInput;
  }

  try {
    const int threads = resolve_threads(threads_flag);
    if (selfcheck->parsed()) return cmd_selfcheck(sc, out);
    if (eval->parsed()) return cmd_eval(ev, out);
    if (fps->parsed()) return cmd_fps(fp, out);
    if (demo->parsed()) return cmd_demo(dm, threads, out);
    if (scene->parsed()) return cmd_scene(sn, out);
    return kInternal;
  } catch (const KeyMismatch& e) {
    err << "oskf: key mismatch: " << e.unmatched().size() << " unmatched instance(s)\n";
    for (const auto& line : e.unmatched()) err << "  " << line << '\n';
    return kBadInput;
  } catch (const InputError& e) {
    err << "oskf: " << e.what() << '\n';
    return kBadInput;
  } catch (const std::exception& e) {
    err << "oskf: internal error: " << e.what() << '\n';
    return kInternal;
  }
}

}  // namespace oskf::cli
