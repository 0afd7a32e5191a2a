#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "oskf/keypoints.hpp"
#include "oskf/losses.hpp"
#include "oskf/refiner_params.hpp"
#include "oskf/synth.hpp"

namespace oskf {

/// Worker count: OSKF_THREADS wins over `requested`; 0 means all cores.
int resolve_threads(int requested);

/// Runs fn(i) for i in [0, n) on up to `threads` workers. fn must only
/// write to slot i of its outputs; callers reduce in index order.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

struct SceneLoss {
  double loss = 0.0;
  RefinerParams grad;    ///< empty when computed without gradients
  bool skipped = false;  ///< the cascade left the valid domain (e.g. behind camera)
};

/// total_loss of one scene through the full cascade, and its gradient with
/// respect to every parameter when `with_gradient`.
SceneLoss scene_loss(const RefinerParams& params, const SynthScene& scene,
                     const KeypointSet& keypoints, const RefinerConfig& config,
                     const LossConfig& loss_cfg, bool with_gradient);

struct TrainConfig {
  LossConfig loss;             ///< n_refiners is taken from the refiner config
  bool lambda_schedule = true; ///< false: keep loss.lambda fixed
  double momentum = 0.9;
  double clip_norm = 0.0;      ///< clip the minibatch gradient norm; 0 disables
  bool cosine_decay = false;   ///< lr * (1 + cos(pi * step / steps)) / 2
  std::size_t batch_size = 0;  ///< scenes per step; 0 means every scene
  std::uint64_t seed = 1;      ///< minibatch order
  int threads = 1;
};

struct TrainResult {
  RefinerParams params;
  std::vector<double> trace;  ///< mean minibatch loss before each update
  std::size_t skipped = 0;    ///< scene evaluations dropped from their batch
};

/// SGD with momentum on total_loss. The per-scene gradients of a batch are
/// computed in parallel and summed in scene order, so results do not
/// depend on the thread count. Throws DivergenceDetected on a non-finite
/// loss.
TrainResult toy_train(RefinerParams params, std::span<const SynthScene> scenes,
                      const KeypointSet& keypoints, const RefinerConfig& config, int steps,
                      double learning_rate, const TrainConfig& cfg);

struct IterationStats {
  int iteration = 0;
  double rotation_error_deg = 0.0;  ///< mean geodesic error
  double add = 0.0;                 ///< mean ADD(-S), metres
  double add_accuracy = 0.0;        ///< fraction below 0.1 d
};

/// Per-iteration statistics of the cascade over `scenes`. A scene whose
/// cascade stops early keeps its last valid pose for the later iterations.
std::vector<IterationStats> evaluate_cascade(const RefinerParams& params,
                                             const RefinerConfig& config,
                                             std::span<const SynthScene> scenes,
                                             const KeypointSet& keypoints, int threads);

struct DemoConfig {
  std::uint64_t seed = 1;
  int steps = 1500;
  int scenes = 200;
  int holdout = 100;
  double learning_rate = 0.02;
  double momentum = 0.9;
  double clip_norm = 1.0;
  std::size_t batch_size = 8;
  int model_points = 256;
  RefinerConfig refiner = toy_refiner();
  SynthConfig synth;
  int threads = 1;

  static RefinerConfig toy_refiner();
};

struct DemoResult {
  RefinerConfig config;
  RefinerParams params;
  std::vector<double> trace;
  std::vector<IterationStats> iterations;
  std::size_t skipped = 0;
};

struct DemoData {
  ObjectModel model;
  KeypointSet keypoints;
  std::vector<SynthScene> train;  ///< scene_seed stream 1
  std::vector<SynthScene> held;   ///< scene_seed stream 2
};

/// The model, keypoints and scenes run_demo trains and evaluates on.
DemoData demo_data(const DemoConfig& cfg);

/// Builds the model and scenes, trains, and evaluates every cascade
/// iteration on held-out scenes.
DemoResult run_demo(const DemoConfig& cfg);

/// Fixed-precision table, one row per cascade iteration.
std::string format_iteration_table(std::span<const IterationStats> rows);

/// Seed of the i-th scene in a stream (splitmix64 of seed and index).
std::uint64_t scene_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

}  // namespace oskf
