#include "oskf/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <numbers>
#include <numeric>
#include <random>
#include <thread>

#include "oskf/error.hpp"
#include "oskf/metrics.hpp"
#include "oskf/refiner_graph.hpp"

namespace oskf {

int resolve_threads(int requested) {
  if (const char* env = std::getenv("OSKF_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 0) {
      throw InputError("OSKF_THREADS must be a non-negative integer");
    }
    requested = static_cast<int>(v);
  }
  if (requested < 0) throw InputError("thread count must be non-negative");
  if (requested == 0) requested = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return requested;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

SceneLoss scene_loss(const RefinerParams& params, const SynthScene& scene,
                     const KeypointSet& keypoints, const RefinerConfig& config,
                     const LossConfig& loss_cfg, bool with_gradient) {
  SceneLoss out;
  LossConfig lc = loss_cfg;
  lc.n_refiners = config.steps;
  const PoseState gt = encode_pose(scene.gt_pose, scene.crop, scene.k);
  const Matrix points = graph::point_matrix(scene.model.points);

  ad::Tape tape;
  const RefinerVars vars = bind_params(tape, params, with_gradient);
  ad::Var loss;
  try {
    const std::vector<graph::StateVars> states = graph::cascade(
        scene.pyramid, graph::keypoint_matrix(keypoints), scene.crop, scene.k, vars, config);
    loss = graph::total_loss(states, gt, points, scene.model.symmetries, lc);
  } catch (const BehindCamera&) {
    out.skipped = true;
  } catch (const DegenerateRotation&) {
    out.skipped = true;
  } catch (const DegenerateDirection&) {
    out.skipped = true;
  }
  if (out.skipped) {
    if (with_gradient) out.grad = zero_like(params);
    return out;
  }
  out.loss = loss.scalar();
  if (with_gradient) {
    tape.backward(loss);
    out.grad = collect_gradients(vars);
  }
  return out;
}

TrainResult toy_train(RefinerParams params, std::span<const SynthScene> scenes,
                      const KeypointSet& keypoints, const RefinerConfig& config, int steps,
                      double learning_rate, const TrainConfig& cfg) {
  if (scenes.empty()) throw EmptyList("training needs at least one scene");
  if (steps < 0) throw InputError("steps must be non-negative");
  if (!(learning_rate >= 0.0) || !(cfg.momentum >= 0.0 && cfg.momentum < 1.0) ||
      !(cfg.clip_norm >= 0.0)) {
    throw InputError("learning rate, momentum and clip norm must be in range");
  }
  validate_params(params, config);
  LossConfig lc = cfg.loss;
  lc.n_refiners = config.steps;
  lc.validate();

  const std::size_t batch = cfg.batch_size == 0 ? scenes.size()
                                                : std::min(cfg.batch_size, scenes.size());
  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(cfg.seed);
  std::size_t cursor = order.size();  // forces a shuffle on first use

  TrainResult result;
  RefinerParams velocity = zero_like(params);
  std::vector<SceneLoss> slots(batch);
  std::vector<std::size_t> picked(batch);

  for (int step = 0; step < steps; ++step) {
    const double progress = static_cast<double>(step) / static_cast<double>(steps);
    lc.training_progress = progress;
    if (cfg.lambda_schedule && config.steps > 0) lc.lambda = lambda_schedule(progress, config.steps);

    for (std::size_t b = 0; b < batch; ++b) {
      if (batch == scenes.size()) {
        picked[b] = b;
        continue;
      }
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      picked[b] = order[cursor++];
    }

    parallel_for(batch, cfg.threads, [&](std::size_t b) {
      slots[b] = scene_loss(params, scenes[picked[b]], keypoints, config, lc, true);
    });

    double loss = 0.0;
    std::size_t used = 0;
    RefinerParams grad = zero_like(params);
    for (const SceneLoss& s : slots) {
      if (s.skipped) {
        ++result.skipped;
        continue;
      }
      loss += s.loss;
      axpy(grad, 1.0, s.grad);
      ++used;
    }
    loss = used > 0 ? loss / static_cast<double>(used) : std::numeric_limits<double>::quiet_NaN();
    if (!std::isfinite(loss)) throw DivergenceDetected(static_cast<std::size_t>(step), loss);
    result.trace.push_back(loss);

    const double inv = 1.0 / static_cast<double>(used);
    double g_scale = inv;
    if (cfg.clip_norm > 0.0) {
      const double norm = std::sqrt(squared_norm(grad)) * inv;
      if (norm > cfg.clip_norm) g_scale *= cfg.clip_norm / norm;
    }
    const double lr = cfg.cosine_decay
                          ? learning_rate * 0.5 *
                                (1.0 + std::cos(std::numbers::pi * progress))
                          : learning_rate;
    if (lr == 0.0) continue;
    velocity.visit([&](const std::string&, Matrix& m) { m *= cfg.momentum; });
    axpy(velocity, g_scale, grad);
    axpy(params, -lr, velocity);
  }
  result.params = std::move(params);
  return result;
}

std::vector<IterationStats> evaluate_cascade(const RefinerParams& params,
                                             const RefinerConfig& config,
                                             std::span<const SynthScene> scenes,
                                             const KeypointSet& keypoints, int threads) {
  if (scenes.empty()) throw EmptyList("evaluation needs at least one scene");
  const std::size_t iters = static_cast<std::size_t>(config.steps) + 1;
  std::vector<std::vector<Pose>> poses(scenes.size());

  parallel_for(scenes.size(), threads, [&](std::size_t i) {
    const SynthScene& sc = scenes[i];
    ad::Tape tape;
    const RefinerVars vars = bind_params(tape, params, false);
    const Matrix kp = graph::keypoint_matrix(keypoints);
    auto to_pose = [&](const graph::StateVars& s) {
      PoseState ps;
      ps.rotation = s.rotation.value();
      ps.site = {s.site.value()(0, 0), s.site.value()(0, 1), s.site.value()(0, 2)};
      return decode_state(ps, sc.crop, sc.k);
    };
    graph::StateVars state = graph::coarse_pose(sc.pyramid, vars.coarse_head, sc.crop, sc.k).state;
    poses[i].push_back(to_pose(state));
    ad::Var query = vars.initial_query;
    for (int s = 0; s < config.steps; ++s) {
      try {
        const graph::StepOutput out = graph::refine_step(
            state, query, sc.pyramid, kp, sc.crop, sc.k, vars.step(static_cast<std::size_t>(s)),
            config);
        state = out.state;
        query = out.query_next;
      } catch (const InputError&) {
        break;
      }
      poses[i].push_back(to_pose(state));
    }
    while (poses[i].size() < iters) poses[i].push_back(poses[i].back());
  });

  std::vector<IterationStats> rows(iters);
  for (std::size_t it = 0; it < iters; ++it) {
    std::vector<double> dists;
    double rot = 0.0;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      const ObjectModel& m = scenes[i].model;
      const Pose& p = poses[i][it];
      rot += rotation_error_deg(p.rotation, scenes[i].gt_pose.rotation, m.symmetries);
      dists.push_back(m.is_symmetric() ? adds_distance(p, scenes[i].gt_pose, m.points)
                                       : add_distance(p, scenes[i].gt_pose, m.points));
    }
    IterationStats& r = rows[it];
    r.iteration = static_cast<int>(it);
    r.rotation_error_deg = rot / static_cast<double>(scenes.size());
    r.add = std::accumulate(dists.begin(), dists.end(), 0.0) / static_cast<double>(dists.size());
    r.add_accuracy = add_s_accuracy(dists, scenes.front().model.diameter);
  }
  return rows;
}

RefinerConfig DemoConfig::toy_refiner() {
  RefinerConfig c;
  c.d_model = 32;
  c.heads = 4;
  c.points = 4;
  c.levels = 4;
  c.channels = 16;
  c.keypoints = 16;
  c.steps = 3;
  return c;
}

std::uint64_t scene_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ stream) ^ index);
}

DemoData demo_data(const DemoConfig& cfg) {
  if (cfg.scenes < 1 || cfg.holdout < 1) throw InputError("demo needs scenes >= 1 and holdout >= 1");
  cfg.refiner.validate();
  SynthConfig synth = cfg.synth;
  synth.pyramid.levels = cfg.refiner.levels;
  synth.pyramid.channels = cfg.refiner.channels;

  DemoData data;
  data.model = synthetic_model(static_cast<std::size_t>(cfg.model_points));
  data.keypoints = farthest_point_sample(data.model, static_cast<std::size_t>(cfg.refiner.keypoints));

  auto build = [&](int count, std::uint64_t stream) {
    std::vector<SynthScene> out(static_cast<std::size_t>(count));
    parallel_for(out.size(), cfg.threads, [&](std::size_t i) {
      out[i] = make_scene(data.model, synth, scene_seed(cfg.seed, stream, i));
    });
    return out;
  };
  data.train = build(cfg.scenes, 1);
  data.held = build(cfg.holdout, 2);
  return data;
}

DemoResult run_demo(const DemoConfig& cfg) {
  if (cfg.steps < 0) throw InputError("steps must be non-negative");
  const DemoData data = demo_data(cfg);
  const std::vector<SynthScene>& train = data.train;
  const std::vector<SynthScene>& held = data.held;
  const KeypointSet& keypoints = data.keypoints;

  RefinerParams params = init_refiner_params(cfg.refiner, cfg.seed);
  double gz = 0.0;
  for (const SynthScene& s : train) gz += encode_pose(s.gt_pose, s.crop, s.k).site.gamma_z;
  set_coarse_depth_prior(params, gz / static_cast<double>(train.size()));

  TrainConfig tc;
  tc.momentum = cfg.momentum;
  tc.clip_norm = cfg.clip_norm;
  tc.batch_size = cfg.batch_size;
  tc.seed = cfg.seed;
  tc.threads = cfg.threads;
  tc.cosine_decay = true;
  TrainResult tr = toy_train(std::move(params), train, keypoints, cfg.refiner, cfg.steps,
                             cfg.learning_rate, tc);

  DemoResult result;
  result.config = cfg.refiner;
  result.iterations = evaluate_cascade(tr.params, cfg.refiner, held, keypoints, cfg.threads);
  result.params = std::move(tr.params);
  result.trace = std::move(tr.trace);
  result.skipped = tr.skipped;
  return result;
}

std::string format_iteration_table(std::span<const IterationStats> rows) {
  std::string out = "iteration  rot_err_deg  add_mm     add_acc_0.1d\n";
  char line[128];
  for (const IterationStats& r : rows) {
    std::snprintf(line, sizeof line, "%-9d  %11.4f  %9.4f  %12.4f\n", r.iteration,
                  r.rotation_error_deg, r.add * 1000.0, r.add_accuracy);
    out += line;
  }
  return out;
}

}  // namespace oskf
